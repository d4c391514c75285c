from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from fairbundle.errors import MalformedRequestError
from fairbundle.fairness import FEASIBILITY_TOL, FairnessSpec, SessionState, delta_history
from fairbundle.model import (
    Bundle,
    BundleSpec,
    Catalog,
    RelevanceView,
    bundle_compatibility,
    bundle_quality,
    bundle_relevance,
)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    # node budget exhausted before any valid bundle was found
    UNSOLVED = "unsolved"


@dataclass(frozen=True, eq=False)
class SolveRequest:
    """Everything a solver needs to build one user's bundle.

    History is carried as raw counts (``history_total``, ``history_counts``);
    the signed gaps are derived with the step tolerance ``eps_t``.
    """

    rel: RelevanceView
    catalog: Catalog
    bundle_spec: BundleSpec
    fairness: FairnessSpec
    eps_t: float
    history_counts: tuple[int, ...] = ()
    fairness_weight: float = 0.0
    explore: float | None = None
    node_budget: int | None = 5_000_000

    def __post_init__(self):
        counts = tuple(int(c) for c in self.history_counts) or (0,) * self.fairness.n_groups
        object.__setattr__(self, "history_counts", counts)
        if len(counts) != self.fairness.n_groups:
            raise MalformedRequestError("history counts do not match the number of groups")
        if self.fairness.n_groups != self.catalog.n_groups:
            raise MalformedRequestError(
                f"exposure vector has {self.fairness.n_groups} entries, catalog has {self.catalog.n_groups} groups")
        if len(self.rel) < self.bundle_spec.size:
            raise MalformedRequestError(f"M={len(self.rel)} candidates < L={self.bundle_spec.size}")
        for i in self.rel.item_ids:
            self.catalog.check(i)
        if self.fairness_weight < 0:
            raise MalformedRequestError("fairness weight must be non-negative")
        if self.explore is not None and not 0.0 <= self.explore <= 1.0:
            raise MalformedRequestError("exploration probability must lie in [0, 1]")

    @classmethod
    def from_state(cls, rel: RelevanceView, catalog: Catalog, bundle_spec: BundleSpec,
                   fairness: FairnessSpec, state: SessionState, eps_t: float, **kwargs) -> SolveRequest:
        return cls(rel, catalog, bundle_spec, fairness, eps_t, state.group_counts, **kwargs)

    @property
    def size(self) -> int:
        return self.bundle_spec.size

    @property
    def history_total(self) -> int:
        return sum(self.history_counts)

    @property
    def exploration(self) -> float:
        return self.fairness.epsilon if self.explore is None else self.explore

    @cached_property
    def history_deltas(self) -> np.ndarray:
        state = SessionState(1, self.history_counts)
        return delta_history(state, self.fairness, self.eps_t)

    @cached_property
    def history_exposure(self) -> np.ndarray:
        """Exposure of each group so far; zeros when nothing was served yet."""
        total = self.history_total
        if total == 0:
            return np.zeros(self.fairness.n_groups)
        return np.asarray(self.history_counts, dtype=float) / total

    @cached_property
    def arrays(self) -> CandidateArrays:
        return CandidateArrays.build(self)

    def required_counts(self) -> np.ndarray | None:
        """Smallest per-group count a size-L bundle needs to meet the stepwise
        constraint, or None when some group cannot be satisfied at all."""
        L = self.size
        rho = np.asarray(self.fairness.rho)
        need = np.empty(len(rho), dtype=np.int64)
        for k, (p, hist) in enumerate(zip(rho, self.history_deltas)):
            for n in range(L + 1):
                if (n - L * p * (1.0 - self.eps_t)) + hist >= -FEASIBILITY_TOL:
                    need[k] = n
                    break
            else:
                return None
        return need

    def score(self, bundle: Bundle) -> tuple[float, float, float]:
        r = bundle_relevance(bundle, self.rel)
        s = bundle_compatibility(bundle, self.catalog)
        return r, s, bundle_quality(bundle, self.rel, self.catalog, self.bundle_spec)


@dataclass(frozen=True, eq=False)
class CandidateArrays:
    """Dense per-candidate arrays, rows in view order (descending relevance, ties by id)."""

    ids: np.ndarray
    relevance: np.ndarray
    groups: np.ndarray
    types: np.ndarray
    compat: np.ndarray
    caps: np.ndarray

    @classmethod
    def build(cls, req: SolveRequest) -> CandidateArrays:
        entries = sorted(req.rel.entries, key=lambda e: (-e[1], e[0]))
        ids = np.array([i for i, _ in entries], dtype=np.int64)
        relevance = np.array([r for _, r in entries], dtype=float)
        cat = req.catalog
        compat = np.array(cat.compat[np.ix_(ids, ids)], dtype=float)
        np.fill_diagonal(compat, 0.0)
        return cls(ids, relevance, cat.groups[ids], cat.type_matrix[ids],
                   compat, req.bundle_spec.caps_for(cat.n_types))


@dataclass
class SolveOutcome:
    status: Status
    bundle: Bundle | None = None
    relevance: float = float("nan")
    compatibility: float = float("nan")
    quality: float = float("nan")
    nodes: int = 0
    seconds: float = 0.0
    gap: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.bundle is not None

    @classmethod
    def scored(cls, req: SolveRequest, bundle: Bundle, status: Status, **kw) -> SolveOutcome:
        r, s, q = req.score(bundle)
        return cls(status, bundle, r, s, q, **kw)
