"""Domain types and bundle scoring.

A bundle is scored by the mean relevance ``R`` of its members and the mean
pairwise compatibility ``S`` over its unordered pairs, combined as
``Q = (1 - gamma) * R + gamma * S``.  Both means use the *current* bundle
size, so a partial bundle built by a greedy heuristic is scored on the same
scale as a complete one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from fairbundle.errors import MissingRelevanceError, UnknownItemError

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Item:
    id: int
    group: int
    types: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "types", frozenset(int(z) for z in self.types))
        if self.group < 0:
            raise ValueError(f"item {self.id}: negative group index {self.group}")
        if any(z < 0 for z in self.types):
            raise ValueError(f"item {self.id}: negative type index")


@dataclass(frozen=True, eq=False)
class Catalog:
    """Items with group/type membership and a dense symmetric compatibility table.

    Item ids are positional handles: ``items[i].id == i``.  ``keys`` optionally
    carries the external identifier of each item (dataset ids, titles...).
    """

    items: tuple[Item, ...]
    n_groups: int
    n_types: int
    compat: np.ndarray
    keys: tuple[str, ...] | None = None

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        n = len(items)
        for pos, item in enumerate(items):
            if item.id != pos:
                raise ValueError(f"item at position {pos} has id {item.id}; ids must be positional")
            if item.group >= self.n_groups:
                raise ValueError(f"item {pos}: group {item.group} >= K={self.n_groups}")
            if any(z >= self.n_types for z in item.types):
                raise ValueError(f"item {pos}: type index >= Z={self.n_types}")
        compat = np.asarray(self.compat, dtype=float)
        if compat.shape != (n, n):
            raise ValueError(f"compatibility table has shape {compat.shape}, expected {(n, n)}")
        if n and (compat.min() < 0.0 or compat.max() > 1.0):
            raise ValueError("compatibility values must lie in [0, 1]")
        if not np.allclose(compat, compat.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise ValueError("compatibility table is not symmetric")
        compat = compat.copy()
        compat.setflags(write=False)
        object.__setattr__(self, "compat", compat)
        if self.keys is not None:
            keys = tuple(str(k) for k in self.keys)
            if len(keys) != n:
                raise ValueError("keys must have one entry per item")
            if len(set(keys)) != n:
                raise ValueError("duplicate item keys")
            object.__setattr__(self, "keys", keys)

    def __len__(self) -> int:
        return len(self.items)

    @cached_property
    def groups(self) -> np.ndarray:
        g = np.array([it.group for it in self.items], dtype=np.int64)
        g.setflags(write=False)
        return g

    @cached_property
    def type_matrix(self) -> np.ndarray:
        """Boolean (n_items, n_types) membership matrix ``a_iz``."""
        a = np.zeros((len(self.items), self.n_types), dtype=bool)
        for it in self.items:
            for z in it.types:
                a[it.id, z] = True
        a.setflags(write=False)
        return a

    @cached_property
    def _key_index(self) -> dict[str, int]:
        if self.keys is None:
            return {}
        return {k: i for i, k in enumerate(self.keys)}

    def check(self, item_id: int) -> int:
        if not 0 <= item_id < len(self.items):
            raise UnknownItemError(item_id)
        return int(item_id)

    def handle(self, key: str) -> int:
        """Map an external key to its item handle."""
        try:
            return self._key_index[str(key)]
        except KeyError:
            raise UnknownItemError(key) from None

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.n_groups)

    def subset(self, ids: Sequence[int]) -> Catalog:
        """Re-indexed catalog restricted to ``ids`` (in the given order)."""
        ids = [self.check(i) for i in ids]
        items = tuple(Item(pos, self.items[i].group, self.items[i].types) for pos, i in enumerate(ids))
        keys = None if self.keys is None else tuple(self.keys[i] for i in ids)
        return Catalog(items, self.n_groups, self.n_types, self.compat[np.ix_(ids, ids)], keys)


@dataclass(frozen=True)
class BundleSpec:
    size: int
    type_caps: tuple[int, ...] = ()
    gamma: float = 1.0 / 3.0

    def __post_init__(self):
        object.__setattr__(self, "type_caps", tuple(int(c) for c in self.type_caps))
        if self.size < 2:
            raise ValueError(f"bundle size must be at least 2, got {self.size}")
        if any(c < 0 for c in self.type_caps):
            raise ValueError("type caps must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    def caps_for(self, n_types: int) -> np.ndarray:
        """Cap vector of length ``n_types``; missing entries are unconstrained (= L)."""
        if len(self.type_caps) > n_types:
            raise ValueError(f"{len(self.type_caps)} type caps given for {n_types} types")
        caps = np.full(n_types, self.size, dtype=np.int64)
        caps[: len(self.type_caps)] = self.type_caps
        return caps


@dataclass(frozen=True)
class Bundle:
    item_ids: tuple[int, ...] = ()

    def __post_init__(self):
        ids = tuple(int(i) for i in self.item_ids)
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate items in bundle {ids}")
        object.__setattr__(self, "item_ids", ids)

    def __len__(self) -> int:
        return len(self.item_ids)

    def __iter__(self):
        return iter(self.item_ids)

    @property
    def size(self) -> int:
        return len(self.item_ids)

    def add(self, item_id: int) -> Bundle:
        return Bundle(self.item_ids + (int(item_id),))

    def as_set(self) -> frozenset[int]:
        return frozenset(self.item_ids)


@dataclass(frozen=True)
class RelevanceView:
    """Top-M candidates of one user, sorted by descending relevance."""

    user: object
    entries: tuple[tuple[int, float], ...]
    _scores: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((int(i), float(r)) for i, r in self.entries)
        ids = [i for i, _ in entries]
        scores = [r for _, r in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("relevance view contains duplicate items")
        if any(not 0.0 <= r <= 1.0 for r in scores):
            raise ValueError("relevance scores must lie in [0, 1]")
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("relevance view must be sorted by descending score")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_scores", dict(entries))

    @classmethod
    def from_scores(cls, user, scores: dict[int, float] | Iterable[tuple[int, float]]) -> RelevanceView:
        """Build a view from unsorted scores; ties are ordered by item id."""
        pairs = scores.items() if isinstance(scores, dict) else scores
        return cls(user, tuple(sorted(pairs, key=lambda p: (-p[1], p[0]))))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def item_ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    def score(self, item_id: int) -> float:
        try:
            return self._scores[item_id]
        except KeyError:
            raise MissingRelevanceError(item_id) from None


def bundle_relevance(bundle: Bundle, rel: RelevanceView) -> float:
    if not bundle.item_ids:
        return 0.0
    return sum(rel.score(i) for i in bundle.item_ids) / len(bundle)


def bundle_compatibility(bundle: Bundle, catalog: Catalog) -> float:
    ids = sorted(catalog.check(i) for i in bundle.item_ids)
    m = len(ids)
    if m < 2:
        return 0.0
    total = sum(catalog.compat[i, j] for i, j in combinations(ids, 2))
    return 2.0 * total / (m * (m - 1))


def bundle_quality(bundle: Bundle, rel: RelevanceView, catalog: Catalog, spec: BundleSpec) -> float:
    r = bundle_relevance(bundle, rel)
    s = bundle_compatibility(bundle, catalog)
    return (1.0 - spec.gamma) * r + spec.gamma * s


@dataclass(frozen=True)
class Validity:
    valid: bool
    size_ok: bool
    exceeded_types: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.valid


def type_counts(bundle: Bundle, catalog: Catalog) -> np.ndarray:
    ids = [catalog.check(i) for i in bundle.item_ids]
    return catalog.type_matrix[ids].sum(axis=0).astype(np.int64)


def is_valid(bundle: Bundle, catalog: Catalog, spec: BundleSpec) -> Validity:
    """Size and complementarity check; the result is truthy iff the bundle is valid."""
    counts = type_counts(bundle, catalog)
    caps = spec.caps_for(catalog.n_types)
    exceeded = tuple(int(z) for z in np.flatnonzero(counts > caps))
    size_ok = len(bundle) == spec.size
    return Validity(size_ok and not exceeded, size_ok, exceeded)
