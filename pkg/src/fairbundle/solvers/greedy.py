"""Greedy bundle builders: F3R (fairness first), FairWG (quality first), random.

All of them grow the bundle one item at a time from a set of *active*
candidates and apply CheckComp after every insertion: once a type reaches its
cap, every remaining item of that type leaves the active set.  Argmax ties are
broken by the smaller item id.
"""

from __future__ import annotations

import time

import numpy as np

from fairbundle.model import Bundle, bundle_quality
from fairbundle.solvers.request import SolveOutcome, SolveRequest, Status


class _Builder:
    """Incremental bundle state over the request's candidate arrays."""

    def __init__(self, req: SolveRequest):
        a = req.arrays
        self.req = req
        self.a = a
        self.gamma = req.bundle_spec.gamma
        self.chosen: list[int] = []
        self.sum_r = 0.0
        self.sum_s = 0.0
        self.link = np.zeros(len(a.ids))
        self.tcount = np.zeros(len(a.caps), dtype=np.int64)
        # a zero cap saturates its type before anything is picked
        self.active = ~a.types[:, a.caps <= 0].any(axis=1)

    @property
    def full(self) -> bool:
        return len(self.chosen) >= self.req.size

    def gains(self) -> np.ndarray:
        """``Q(B + {j})`` for every candidate, using the current-size normalisation."""
        m = len(self.chosen)
        rel = (self.sum_r + self.a.relevance) / (m + 1)
        if m == 0:
            return (1.0 - self.gamma) * rel
        comp = (self.sum_s + self.link) / ((m + 1) * m / 2)
        return (1.0 - self.gamma) * rel + self.gamma * comp

    def argmax(self, values: np.ndarray, pool: np.ndarray) -> int:
        idx = np.flatnonzero(pool)
        v = values[idx]
        ties = idx[v == v.max()]
        return int(ties[np.argmin(self.a.ids[ties])])

    def add(self, pos: int) -> None:
        self.chosen.append(pos)
        self.sum_r += self.a.relevance[pos]
        self.sum_s += self.link[pos]
        self.link += self.a.compat[pos]
        self.active[pos] = False
        self.tcount += self.a.types[pos]
        self.check_comp(pos)

    def check_comp(self, pos: int) -> None:
        item_types = self.a.types[pos]
        saturated = item_types & (self.tcount >= self.a.caps)
        if saturated.any():
            self.active &= ~self.a.types[:, saturated].any(axis=1)

    def bundle(self) -> Bundle:
        return Bundle(tuple(int(self.a.ids[p]) for p in self.chosen))

    def outcome(self, t0: float) -> SolveOutcome:
        elapsed = time.perf_counter() - t0
        if not self.full:
            return SolveOutcome(Status.INFEASIBLE, seconds=elapsed,
                                extra={"partial": list(self.bundle().item_ids)})
        return SolveOutcome.scored(self.req, self.bundle(), Status.FEASIBLE, seconds=elapsed)


def _sample_group(rng: np.random.Generator, rho: np.ndarray, available: np.ndarray) -> int:
    k = int(rng.choice(len(rho), p=rho))
    if available[k]:
        return k
    # resample among groups that still have active items
    groups = np.flatnonzero(available)
    p = rho[groups]
    p = p / p.sum() if p.sum() > 0 else np.full(len(groups), 1.0 / len(groups))
    return int(rng.choice(groups, p=p))


def solve_f3r(req: SolveRequest, seed=None) -> SolveOutcome:
    """Fair randomized round robin.

    With probability ``1 - explore`` the next item comes from a group drawn
    from the exposure vector, otherwise from all active items; either way the
    item maximising the bundle quality is taken.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    b = _Builder(req)
    rho = np.asarray(req.fairness.rho, dtype=float)
    rho = rho / rho.sum()
    n_groups = len(rho)
    explore = req.exploration
    while not b.full:
        if not b.active.any():
            break
        if rng.random() > explore:
            available = np.bincount(b.a.groups[b.active], minlength=n_groups) > 0
            k = _sample_group(rng, rho, available)
            pool = b.active & (b.a.groups == k)
        else:
            pool = b.active
        b.add(b.argmax(b.gains(), pool))
    return b.outcome(t0)


def solve_fairwg(req: SolveRequest) -> SolveOutcome:
    """Fairness-weighted greedy.

    Seeds with the most relevant item, then adds the item maximising
    ``Q(B + {j}) + lambda * (rho_k(j) - E_k(j))`` where ``E`` is the exposure
    before this user (all zeros at the first user).
    """
    t0 = time.perf_counter()
    b = _Builder(req)
    if b.active.any():
        b.add(b.argmax(b.a.relevance, b.active))
    under = np.asarray(req.fairness.rho) - req.history_exposure
    bonus = req.fairness_weight * under[b.a.groups]
    while not b.full and b.active.any():
        b.add(b.argmax(b.gains() + bonus, b.active))
    return b.outcome(t0)


def solve_random(req: SolveRequest, seed=None) -> SolveOutcome:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    b = _Builder(req)
    while not b.full and b.active.any():
        b.add(int(rng.choice(np.flatnonzero(b.active))))
    return b.outcome(t0)


def solve_greedy(req: SolveRequest) -> SolveOutcome:
    """Quality-first greedy: seed by relevance, then fill by quality.

    Written directly against :func:`bundle_quality`, item by item, so that it
    serves as an independent reference for :func:`solve_fairwg` at ``lambda = 0``.
    """
    t0 = time.perf_counter()
    caps = req.bundle_spec.caps_for(req.catalog.n_types)
    items = req.catalog.items

    def fits(bundle: Bundle, j: int) -> bool:
        counts = {}
        for i in bundle.item_ids + (j,):
            for z in items[i].types:
                counts[z] = counts.get(z, 0) + 1
        return all(c <= caps[z] for z, c in counts.items())

    bundle = Bundle()
    remaining = sorted(req.rel.item_ids)
    seed = None
    for j in remaining:
        if fits(bundle, j) and (seed is None or req.rel.score(j) > req.rel.score(seed)):
            seed = j
    if seed is not None:
        bundle = bundle.add(seed)
    while len(bundle) < req.size:
        best, best_q = None, -np.inf
        for j in remaining:
            if j in bundle.as_set() or not fits(bundle, j):
                continue
            q = bundle_quality(bundle.add(j), req.rel, req.catalog, req.bundle_spec)
            if q > best_q:
                best, best_q = j, q
        if best is None:
            break
        bundle = bundle.add(best)
    elapsed = time.perf_counter() - t0
    if len(bundle) < req.size:
        return SolveOutcome(Status.INFEASIBLE, seconds=elapsed)
    return SolveOutcome.scored(req, bundle, Status.FEASIBLE, seconds=elapsed)
