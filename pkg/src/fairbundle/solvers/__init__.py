from fairbundle.solvers.exact import solve_exact
from fairbundle.solvers.greedy import solve_f3r, solve_fairwg, solve_greedy, solve_random
from fairbundle.solvers.oracle import brute_force_oracle
from fairbundle.solvers.request import CandidateArrays, SolveOutcome, SolveRequest, Status

__all__ = [
    "CandidateArrays",
    "SolveOutcome",
    "SolveRequest",
    "Status",
    "brute_force_oracle",
    "solve_exact",
    "solve_f3r",
    "solve_fairwg",
    "solve_greedy",
    "solve_random",
]
