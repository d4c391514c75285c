"""Producer-fair sequential bundle recommendation."""

from fairbundle.fairness import (
    AdaptiveWeight,
    FairnessSpec,
    SessionState,
    adapt_lambda,
    delta_current,
    delta_history,
    group_exposure,
    pfairness_metric,
    record_bundle,
    reset_horizon,
    stepwise_satisfied,
    tolerance_at,
)
from fairbundle.model import (
    Bundle,
    BundleSpec,
    Catalog,
    Item,
    RelevanceView,
    bundle_compatibility,
    bundle_quality,
    bundle_relevance,
    is_valid,
)
from fairbundle.solvers import (
    SolveOutcome,
    SolveRequest,
    Status,
    brute_force_oracle,
    solve_exact,
    solve_f3r,
    solve_fairwg,
    solve_greedy,
    solve_random,
)

__version__ = "0.1.0"
