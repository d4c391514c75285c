"""Shared builders for small hand-made and random instances."""

from __future__ import annotations

import numpy as np
import pytest

from fairbundle.fairness import FairnessSpec
from fairbundle.model import BundleSpec, Catalog, Item, RelevanceView
from fairbundle.solvers import SolveRequest
from fairbundle.synthetic import synthetic_catalog


def make_catalog(groups, types=None, compat=None, n_groups=None, n_types=None) -> Catalog:
    n = len(groups)
    types = types or [()] * n
    items = tuple(Item(i, g, frozenset(t)) for i, (g, t) in enumerate(zip(groups, types)))
    if compat is None:
        compat = np.zeros((n, n))
    n_groups = n_groups if n_groups is not None else max(groups) + 1
    if n_types is None:
        n_types = max((max(t) + 1 for t in types if t), default=0)
    return Catalog(items, n_groups, n_types, np.asarray(compat, dtype=float))


def make_view(scores, user=0) -> RelevanceView:
    return RelevanceView.from_scores(user, enumerate(scores))


def random_request(rng: np.random.Generator, M: int, L: int, K: int, Z: int = 0,
                   eps: float = 0.1, gamma: float = 1 / 3, history_max: int = 10,
                   cap_low: int = 0, **kw) -> SolveRequest:
    cat = synthetic_catalog(M, K, Z, seed=int(rng.integers(1 << 30)))
    rel = make_view(rng.random(M))
    caps = tuple(int(c) for c in rng.integers(cap_low, L + 1, Z))
    rho = rng.dirichlet(np.ones(K))
    fspec = FairnessSpec(tuple(rho / rho.sum()), eps)
    hist = tuple(int(c) for c in rng.integers(0, history_max + 1, K))
    return SolveRequest(rel, cat, BundleSpec(L, caps, gamma), fspec, eps, hist, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
