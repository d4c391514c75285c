"""Exact solver: depth-first branch-and-bound over the binary selection variables.

The program maximises ``(1-gamma)/L * sum x_i r_i + 2 gamma/(L(L-1)) * sum_{i<j} y_ij s_ij``
with ``sum x = L``, the per-type caps and the stepwise fairness constraint,
where ``y_ij = x_i x_j``.  Items are branched on in descending relevance order
(ties by id).  A node is fathomed when

* no completion respects the type caps,
* the remaining slots cannot cover every group's residual requirement, or
* its upper bound does not beat the incumbent.

The bound gives each eligible item ``v_j = cr*r_j + cs*(link_j + top_{m-1}(s_j.)/2)``
where ``link_j`` is its compatibility with the already-chosen items and the last
term charges half of each new pair to both endpoints; the best ``m`` values
subject to the per-group residual counts then bound the completion.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from fairbundle.model import Bundle
from fairbundle.solvers.request import SolveOutcome, SolveRequest, Status

# Bound slack when comparing against the incumbent.
PRUNE_TOL = 1e-12


class _BudgetExhausted(Exception):
    pass


class _Search:
    def __init__(self, req: SolveRequest, need: np.ndarray):
        a = req.arrays
        L = req.size
        gamma = req.bundle_spec.gamma
        self.L = L
        self.r = a.relevance
        self.s = a.compat
        self.groups = a.groups
        self.types = a.types
        self.caps = a.caps
        self.need = need
        self.n_groups = len(need)
        self.cr = (1.0 - gamma) / L
        self.cs = 2.0 * gamma / (L * (L - 1))
        self.budget = req.node_budget
        self.nodes = 0
        self.best = -np.inf
        self.best_set: tuple[int, ...] | None = None
        self.root_bound = -np.inf

    def warm_start(self, req: SolveRequest) -> None:
        """Use the quality-greedy bundle as first incumbent when it is feasible."""
        from fairbundle.solvers.greedy import solve_fairwg

        greedy = solve_fairwg(replace(req, fairness_weight=0.0))
        if not greedy.ok:
            return
        pos = {int(i): p for p, i in enumerate(req.arrays.ids)}
        chosen = tuple(sorted(pos[i] for i in greedy.bundle.item_ids))
        counts = np.bincount(self.groups[list(chosen)], minlength=self.n_groups)
        if np.all(counts >= self.need):
            idx = np.array(chosen)
            self.best = (self.cr * self.r[idx].sum()
                         + self.cs * self.s[np.ix_(idx, idx)].sum() / 2.0)
            self.best_set = chosen

    def run(self) -> None:
        M = len(self.r)
        self._visit(0, (), 0.0, 0.0,
                    np.zeros(self.n_groups, dtype=np.int64),
                    np.zeros(len(self.caps), dtype=np.int64),
                    np.zeros(M))

    def _completion_bound(self, cand: np.ndarray, m: int, link: np.ndarray, deficit: np.ndarray) -> float:
        v = self.cr * self.r[cand]
        if self.cs > 0.0:
            pair = link[cand]
            if m >= 2:
                sub = self.s[np.ix_(cand, cand)]
                top = np.partition(sub, sub.shape[1] - (m - 1), axis=1)[:, -(m - 1):].sum(axis=1)
                pair = pair + 0.5 * top
            v = v + self.cs * pair
        order = np.argsort(-v, kind="stable")
        g = self.groups[cand][order]
        if deficit.any():
            # rank of each item within its group along the sorted order
            onehot = g[:, None] == np.arange(self.n_groups)[None, :]
            rank = (np.cumsum(onehot, axis=0) - 1)[np.arange(len(g)), g]
            forced = rank < deficit[g]
        else:
            forced = np.zeros(len(g), dtype=bool)
        free_slots = m - int(forced.sum())
        vs = v[order]
        return float(vs[forced].sum() + vs[~forced][:free_slots].sum())

    def _visit(self, start, chosen, cur_r, cur_s, gcount, tcount, link):
        self.nodes += 1
        if self.budget is not None and self.nodes > self.budget:
            raise _BudgetExhausted
        m = self.L - len(chosen)
        value = self.cr * cur_r + self.cs * cur_s
        if m == 0:
            if np.all(gcount >= self.need) and value > self.best:
                self.best = value
                self.best_set = chosen
            return

        cand = np.arange(start, len(self.r))
        saturated = tcount >= self.caps
        if saturated.any():
            cand = cand[~self.types[start:][:, saturated].any(axis=1)]
        if len(cand) < m:
            return
        deficit = np.maximum(self.need - gcount, 0)
        if deficit.sum() > m:
            return
        if np.any(np.bincount(self.groups[cand], minlength=self.n_groups) < deficit):
            return

        bound = value + self._completion_bound(cand, m, link, deficit)
        if not chosen:
            self.root_bound = bound
        if bound <= self.best + PRUNE_TOL:
            return

        for j in cand[: len(cand) - m + 1]:
            j = int(j)
            self._visit(
                j + 1,
                chosen + (j,),
                cur_r + self.r[j],
                cur_s + link[j],
                gcount + (np.arange(self.n_groups) == self.groups[j]),
                tcount + self.types[j],
                link + self.s[j],
            )


def solve_exact(req: SolveRequest) -> SolveOutcome:
    """Optimal valid, fairness-feasible bundle over the request's candidates.

    Returns ``FEASIBLE`` with the incumbent (and a gap bound) when the node
    budget runs out, ``UNSOLVED`` if that happens before any incumbent exists.
    """
    t0 = time.perf_counter()
    need = req.required_counts()
    if need is None or need.sum() > req.size:
        return SolveOutcome(Status.INFEASIBLE, seconds=time.perf_counter() - t0)

    search = _Search(req, need)
    search.warm_start(req)
    exhausted = False
    try:
        search.run()
    except _BudgetExhausted:
        exhausted = True
    elapsed = time.perf_counter() - t0

    if search.best_set is None:
        status = Status.UNSOLVED if exhausted else Status.INFEASIBLE
        return SolveOutcome(status, nodes=search.nodes, seconds=elapsed)

    ids = req.arrays.ids
    bundle = Bundle(tuple(int(ids[p]) for p in search.best_set))
    status = Status.FEASIBLE if exhausted else Status.OPTIMAL
    gap = max(0.0, search.root_bound - search.best) if exhausted else 0.0
    return SolveOutcome.scored(req, bundle, status, nodes=search.nodes, seconds=elapsed, gap=gap)
