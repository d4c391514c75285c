"""Exposure bookkeeping, the producer-fairness metric and the lambda controller."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from fairbundle.errors import EmptySessionError, HorizonExceededError, ZeroTargetError
from fairbundle.model import Bundle, Catalog

# Slack (in item units) allowed when testing the stepwise constraint.
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class FairnessSpec:
    """Target exposure vector ``rho``, tolerance ``epsilon`` and schedule exponent.

    ``alpha=None`` disables the time-dependent tolerance.  Zero targets are
    accepted here but rejected by :func:`pfairness_metric`, which divides by them.
    """

    rho: tuple[float, ...]
    epsilon: float = 0.1
    alpha: float | None = None

    def __post_init__(self):
        rho = tuple(float(p) for p in self.rho)
        object.__setattr__(self, "rho", rho)
        if not rho:
            raise ValueError("exposure vector must not be empty")
        if any(not 0.0 <= p <= 1.0 for p in rho):
            raise ValueError(f"exposure targets must lie in [0, 1], got {rho}")
        if abs(math.fsum(rho) - 1.0) > 1e-9:
            raise ValueError(f"exposure vector must sum to 1, got {math.fsum(rho)}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @property
    def n_groups(self) -> int:
        return len(self.rho)

    @classmethod
    def uniform(cls, n_groups: int, epsilon: float = 0.1, alpha: float | None = None) -> FairnessSpec:
        return cls((1.0 / n_groups,) * n_groups, epsilon, alpha)


@dataclass(frozen=True)
class SessionState:
    """Running exposure counters for one horizon.

    ``step`` counts the users already served in the current horizon, so the
    user about to be served has 1-based index ``u = step + 1``.
    """

    horizon: int
    group_counts: tuple[int, ...]
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_counts", tuple(int(c) for c in self.group_counts))
        if self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        if not 0 <= self.step <= self.horizon:
            raise ValueError(f"step {self.step} outside 0..{self.horizon}")
        if any(c < 0 for c in self.group_counts):
            raise ValueError("group counts must be non-negative")

    @classmethod
    def fresh(cls, horizon: int, n_groups: int) -> SessionState:
        return cls(horizon, (0,) * n_groups)

    @property
    def total(self) -> int:
        return sum(self.group_counts)

    @property
    def u(self) -> int:
        return self.step + 1

    @property
    def full(self) -> bool:
        return self.step >= self.horizon


@dataclass(frozen=True)
class AdaptiveWeight:
    value: float = 1.0
    lower: float = 1.0 / 1024
    upper: float = 1024.0

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper:
            raise ValueError("need 0 <= lower <= upper")
        if not self.lower <= self.value <= self.upper:
            raise ValueError(f"lambda {self.value} outside [{self.lower}, {self.upper}]")


def group_exposure(state: SessionState) -> np.ndarray:
    n = state.total
    if n == 0:
        raise EmptySessionError("no item has been recommended yet")
    return np.asarray(state.group_counts, dtype=float) / n


def pfairness_metric(state: SessionState, spec: FairnessSpec) -> float:
    """``1 - max_k max(0, (rho_k - E_k) / rho_k)``; 1.0 before anything was served."""
    rho = np.asarray(spec.rho)
    if np.any(rho == 0.0):
        raise ZeroTargetError("fairness metric is undefined for zero exposure targets")
    if state.total == 0:
        return 1.0
    exposure = group_exposure(state)
    shortfall = np.maximum(0.0, (rho - exposure) / rho)
    return float(1.0 - shortfall.max())


def tolerance_at(t: int, spec: FairnessSpec, horizon: int) -> float:
    """Time-dependent tolerance ``eps * (1 + ((T - t) / T) ** alpha)``.

    Decreases from ``2 * eps`` at ``t = 0`` to ``eps`` at ``t = T``.
    """
    if not 0 <= t <= horizon:
        raise ValueError(f"t={t} outside 0..{horizon}")
    if spec.alpha is None:
        return spec.epsilon
    return spec.epsilon * (1.0 + ((horizon - t) / horizon) ** spec.alpha)


def _deltas(counts: Sequence[int], total: int, rho: Sequence[float], eps_t: float) -> np.ndarray:
    return np.asarray(counts, dtype=float) - total * np.asarray(rho, dtype=float) * (1.0 - eps_t)


def delta_history(state: SessionState, spec: FairnessSpec, eps_t: float) -> np.ndarray:
    """Signed gap ``N_k - N * rho_k * (1 - eps)`` over the users served so far."""
    return _deltas(state.group_counts, state.total, spec.rho, eps_t)


def bundle_group_counts(bundle: Bundle, catalog: Catalog, n_groups: int) -> np.ndarray:
    groups = [catalog.items[catalog.check(i)].group for i in bundle.item_ids]
    return np.bincount(np.asarray(groups, dtype=np.int64), minlength=n_groups)[:n_groups]


def delta_current(bundle: Bundle, catalog: Catalog, spec: FairnessSpec, eps_t: float) -> np.ndarray:
    counts = bundle_group_counts(bundle, catalog, spec.n_groups)
    return _deltas(counts, len(bundle), spec.rho, eps_t)


def stepwise_ok(current: np.ndarray, history: np.ndarray) -> bool:
    return bool(np.all(current + history >= -FEASIBILITY_TOL))


def stepwise_satisfied(bundle: Bundle, state: SessionState, spec: FairnessSpec, catalog: Catalog,
                       eps_t: float) -> bool:
    return stepwise_ok(delta_current(bundle, catalog, spec, eps_t), delta_history(state, spec, eps_t))


def record_bundle(state: SessionState, bundle: Bundle, catalog: Catalog) -> SessionState:
    """Account for a served bundle.  An empty bundle records a user served nothing."""
    if state.full:
        raise HorizonExceededError(f"horizon of {state.horizon} users already reached")
    added = bundle_group_counts(bundle, catalog, len(state.group_counts))
    counts = tuple(int(c + a) for c, a in zip(state.group_counts, added))
    return replace(state, group_counts=counts, step=state.step + 1)


def reset_horizon(state: SessionState) -> SessionState:
    return SessionState.fresh(state.horizon, len(state.group_counts))


def adapt_lambda(weight: AdaptiveWeight, current_f: float, spec: FairnessSpec) -> AdaptiveWeight:
    """Double lambda below ``1 - eps``, halve it above ``1 - eps/2``, then clamp."""
    value = weight.value
    if current_f < 1.0 - spec.epsilon:
        value *= 2.0
    elif current_f > 1.0 - spec.epsilon / 2.0:
        value /= 2.0
    value = min(max(value, weight.lower), weight.upper)
    return replace(weight, value=value)


# Exact-arithmetic formulations of perfect fairness.  Floats are converted
# losslessly to rationals so the comparisons carry no rounding.

def _exact(counts: Sequence[int], rho: Sequence[float]) -> tuple[list[Fraction], list[Fraction]]:
    total = sum(counts)
    if total == 0:
        raise EmptySessionError("no item has been recommended yet")
    exposure = [Fraction(int(c), total) for c in counts]
    return exposure, [Fraction(p) for p in rho]


def parity_holds(counts: Sequence[int], rho: Sequence[float]) -> bool:
    """``E_k / rho_k`` is the same for every group (all targets positive)."""
    exposure, target = _exact(counts, rho)
    ratios = {e / p for e, p in zip(exposure, target)}
    return len(ratios) == 1


def exposure_equals_target(counts: Sequence[int], rho: Sequence[float]) -> bool:
    exposure, target = _exact(counts, rho)
    return all(e == p for e, p in zip(exposure, target))


def exposure_dominates_target(counts: Sequence[int], rho: Sequence[float]) -> bool:
    exposure, target = _exact(counts, rho)
    return all(e >= p for e, p in zip(exposure, target))
