from __future__ import annotations

import math
import time
from itertools import combinations

from fairbundle.errors import InstanceTooLargeError
from fairbundle.fairness import SessionState, stepwise_satisfied
from fairbundle.model import Bundle, bundle_quality, is_valid
from fairbundle.solvers.request import SolveOutcome, SolveRequest, Status

MAX_SUBSETS = 10**6


def brute_force_oracle(req: SolveRequest) -> SolveOutcome:
    """Enumerate every size-L subset of the candidates.

    Keeps the highest-quality subset that is valid and meets the stepwise
    fairness constraint.  Subsets are visited as sorted id tuples in
    lexicographic order and only a strictly better one replaces the incumbent,
    so ties go to the lexicographically smallest id sequence.
    """
    t0 = time.perf_counter()
    ids = sorted(req.rel.item_ids)
    L = req.size
    if math.comb(len(ids), L) > MAX_SUBSETS:
        raise InstanceTooLargeError(f"C({len(ids)}, {L}) exceeds {MAX_SUBSETS} subsets")
    history = SessionState(1, req.history_counts)
    best, best_q, count = None, -math.inf, 0
    for combo in combinations(ids, L):
        count += 1
        bundle = Bundle(combo)
        if not is_valid(bundle, req.catalog, req.bundle_spec):
            continue
        if not stepwise_satisfied(bundle, history, req.fairness, req.catalog, req.eps_t):
            continue
        q = bundle_quality(bundle, req.rel, req.catalog, req.bundle_spec)
        if q > best_q:
            best, best_q = bundle, q
    elapsed = time.perf_counter() - t0
    if best is None:
        return SolveOutcome(Status.INFEASIBLE, nodes=count, seconds=elapsed)
    return SolveOutcome.scored(req, best, Status.OPTIMAL, nodes=count, seconds=elapsed)
