"""Online session simulation: serve users one by one and track exposure."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from fairbundle.config import ExperimentConfig
from fairbundle.errors import ConfigError, DataError, TraceMismatchError
from fairbundle.fairness import (
    AdaptiveWeight,
    FairnessSpec,
    SessionState,
    adapt_lambda,
    delta_current,
    delta_history,
    pfairness_metric,
    record_bundle,
    reset_horizon,
    stepwise_ok,
    tolerance_at,
)
from fairbundle.model import Bundle, BundleSpec, Catalog, RelevanceView
from fairbundle.solvers import (
    SolveOutcome,
    SolveRequest,
    Status,
    solve_exact,
    solve_f3r,
    solve_fairwg,
    solve_random,
)

logger = logging.getLogger(__name__)

Provider = Callable[[object], RelevanceView]


@dataclass
class Environment:
    """Catalog, candidate users and a ``user -> top-M view`` provider."""

    catalog: Catalog
    users: list
    provider: Provider


def synthetic_environment(config: ExperimentConfig) -> Environment:
    from fairbundle.relevance import synthetic_scores
    from fairbundle.synthetic import synthetic_catalog

    d = config.data
    catalog = synthetic_catalog(d.n_items, d.n_groups, d.n_types, d.group_shares,
                                type_prob=d.type_prob, seed=d.seed)
    scores = synthetic_scores(catalog, d.n_users, d.skew, seed=d.seed + 1)
    if config.M > len(catalog):
        raise ConfigError(f"M={config.M} exceeds the catalog size {len(catalog)}")

    def provider(user) -> RelevanceView:
        row = scores[int(user)]
        order = np.lexsort((np.arange(len(row)), -row))[: config.M]
        return RelevanceView(user, tuple((int(i), float(row[i])) for i in order))

    return Environment(catalog, list(range(d.n_users)), provider)


def file_environment(config: ExperimentConfig) -> Environment:
    from fairbundle.ingest import load_catalog
    from fairbundle.relevance import MFModel, prediction_bounds, top_m

    d = config.data
    if not d.catalog or not d.model:
        raise ConfigError("data.source 'files' needs data.catalog and data.model")
    catalog = load_catalog(d.catalog)
    try:
        model = MFModel.load(d.model)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read model {d.model}: {exc}") from exc
    users = list(d.users) if d.users else list(model.user_keys)
    items = [k for k in catalog.keys if k in set(model.item_keys)]
    if len(items) < config.M:
        raise DataError(f"only {len(items)} catalog items are known to the model, M={config.M}")
    bounds = prediction_bounds(model, users, items)
    return Environment(catalog, users, lambda u: top_m(model, u, config.M, bounds, catalog))


def build_environment(config: ExperimentConfig) -> Environment:
    if config.data.source == "synthetic":
        return synthetic_environment(config)
    return file_environment(config)


def arrival_order(config: ExperimentConfig, users: Sequence, seed: int) -> list:
    """Seeded shuffle of the user pool, drawn with replacement when the stream is longer."""
    n = config.stream_length
    if isinstance(config.arrival, list):
        order = list(config.arrival)
        if len(order) < n:
            raise ConfigError(f"arrival lists {len(order)} users, stream needs {n}")
        return order[:n]
    rng = np.random.default_rng([seed, 0xA77])
    if n <= len(users):
        idx = rng.permutation(len(users))[:n]
    else:
        idx = rng.choice(len(users), size=n, replace=True)
    return [users[i] for i in idx]


@dataclass
class SessionTrace:
    config: dict
    config_hash: str
    seed: int
    records: list[dict] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    segment_fairness: list[float] = field(default_factory=list)

    @property
    def served(self) -> list[dict]:
        return [r for r in self.records if r["items"]]

    def summary(self) -> dict:
        served = self.served
        rq = [r["relative_quality"] for r in self.records if r.get("relative_quality") is not None]
        secs = np.asarray(self.seconds) if self.seconds else np.zeros(1)
        return {
            "steps": len(self.records),
            "mean_quality": float(np.mean([r["Q"] for r in served])) if served else float("nan"),
            "final_fairness": self.records[-1]["F"] if self.records else 1.0,
            "infeasible_steps": sum(1 for r in self.records if r["status"] == Status.INFEASIBLE.value),
            "mean_relative_quality": float(np.mean(rq)) if rq else float("nan"),
            "mean_latency": float(secs.mean()),
            "p50_latency": float(np.percentile(secs, 50)),
            "p95_latency": float(np.percentile(secs, 95)),
        }

    def write(self, path) -> None:
        """JSON-lines trace: a header, one line per user, and a closing line.

        Wall-clock timings are kept out of this file so identical configs give
        byte-identical traces; see :meth:`write_timings`.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            header = {"kind": "header", "config_hash": self.config_hash, "seed": self.seed,
                      "config": self.config}
            fh.write(json.dumps(header, sort_keys=True, default=str) + "\n")
            for rec in self.records:
                fh.write(json.dumps({"kind": "step", **rec}, sort_keys=True) + "\n")
            fh.write(json.dumps({"kind": "end", "segment_fairness": self.segment_fairness},
                                sort_keys=True) + "\n")

    def write_timings(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["config_hash", "step", "seconds"])
            for rec, s in zip(self.records, self.seconds):
                w.writerow([self.config_hash, rec["step"], f"{s:.9f}"])

    @classmethod
    def read(cls, path, timings=None) -> SessionTrace:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            rows = [json.loads(line) for line in lines if line.strip()]
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read trace {path}: {exc}") from exc
        if not rows or rows[0].get("kind") != "header":
            raise DataError(f"{path}: missing trace header")
        head = rows[0]
        trace = cls(head["config"], head["config_hash"], head["seed"])
        for row in rows[1:]:
            kind = row.pop("kind", None)
            if kind == "step":
                trace.records.append(row)
            elif kind == "end":
                trace.segment_fairness = row.get("segment_fairness", [])
        if timings is not None and Path(timings).exists():
            with Path(timings).open(newline="", encoding="utf-8") as fh:
                trace.seconds = [float(r["seconds"]) for r in csv.DictReader(fh)]
        return trace


def _specs(config: ExperimentConfig, n_groups: int) -> tuple[BundleSpec, FairnessSpec]:
    bspec = BundleSpec(config.L, tuple(config.type_caps), config.gamma)
    rho = tuple(config.rho) if config.rho is not None else (1.0 / n_groups,) * n_groups
    if len(rho) != n_groups:
        raise ConfigError(f"rho has {len(rho)} entries but the catalog has {n_groups} groups")
    return bspec, FairnessSpec(rho, config.epsilon, config.alpha_value)


def _solve(method: str, req: SolveRequest, seed) -> SolveOutcome:
    if method in ("exact", "exact-nofair"):
        return solve_exact(req)
    if method == "f3r":
        return solve_f3r(req, seed)
    if method in ("fairwg", "adafairwg"):
        return solve_fairwg(req)
    return solve_random(req, seed)


def run_session(config: ExperimentConfig, env: Environment | None = None,
                seed: int | None = None) -> SessionTrace:
    """Serve ``config.stream_length`` users, resetting counters every ``T`` users."""
    env = env or build_environment(config)
    seed = config.seed if seed is None else seed
    catalog = env.catalog
    bspec, fspec = _specs(config, catalog.n_groups)
    users = arrival_order(config, env.users, seed)
    T = config.T

    state = SessionState.fresh(T, catalog.n_groups)
    weight = AdaptiveWeight(config.lambda_init, config.lambda_min, config.lambda_max)
    trace = SessionTrace(config.to_dict(), config.digest(), seed)
    nofair = config.method == "exact-nofair"

    for step, user in enumerate(users, 1):
        t = state.step + 1
        eps_t = 1.0 if nofair else tolerance_at(t, fspec, T)
        rel = env.provider(user)
        lam = weight.value if config.method == "adafairwg" else config.fairness_weight
        req = SolveRequest.from_state(rel, catalog, bspec, fspec, state, eps_t,
                                      fairness_weight=lam, explore=config.explore,
                                      node_budget=config.node_budget)
        t0 = time.perf_counter()
        out = _solve(config.method, req, (seed, step))
        elapsed = time.perf_counter() - t0
        relaxed = False
        if not out.ok and config.fallback == "relax":
            relaxed = True
            req = SolveRequest.from_state(rel, catalog, bspec, fspec, state, 1.0,
                                          fairness_weight=lam, explore=config.explore,
                                          node_budget=config.node_budget)
            out = _solve(config.method, req, (seed, step))

        baseline = None
        if config.relative_quality:
            baseline = solve_exact(SolveRequest.from_state(rel, catalog, bspec, fspec, state, 1.0,
                                                           node_budget=config.node_budget))
        bundle = out.bundle if out.ok else Bundle()
        constraint_met = stepwise_ok(delta_current(bundle, catalog, fspec, eps_t),
                                     delta_history(state, fspec, eps_t))
        state = record_bundle(state, bundle, catalog)
        fairness = pfairness_metric(state, fspec)

        rec = {
            "step": step,
            "t": t,
            "user": user if isinstance(user, (int, str)) else str(user),
            "status": out.status.value,
            "items": list(bundle.item_ids),
            "R": out.relevance if out.ok else None,
            "S": out.compatibility if out.ok else None,
            "Q": out.quality if out.ok else None,
            "F": fairness,
            "eps_t": eps_t,
            "lambda": lam if config.method in ("fairwg", "adafairwg") else None,
            "constraint_met": constraint_met,
            "relaxed": relaxed,
            "nodes": out.nodes,
        }
        if baseline is not None:
            rec["Q_star"] = baseline.quality if baseline.ok else None
            rec["relative_quality"] = _ratio(rec["Q"], rec["Q_star"])
        trace.records.append(rec)
        trace.seconds.append(elapsed)

        if config.method == "adafairwg":
            weight = adapt_lambda(weight, fairness, fspec)
        if state.full:
            trace.segment_fairness.append(fairness)
            state = reset_horizon(state)
    return trace


def _ratio(q, q_star):
    if q is None or q_star is None or q_star <= 0:
        return None
    return q / q_star


def recompute_fairness(trace: SessionTrace, catalog: Catalog, fspec: FairnessSpec) -> list[float]:
    """Replay the recorded bundles and return F after every step."""
    horizon = trace.config["T"]
    state = SessionState.fresh(horizon, catalog.n_groups)
    out = []
    for rec in trace.records:
        state = record_bundle(state, Bundle(tuple(rec["items"])), catalog)
        out.append(pfairness_metric(state, fspec))
        if state.full:
            state = reset_horizon(state)
    return out


def relative_quality(trace: SessionTrace, baseline: SessionTrace) -> list[float | None]:
    """Per-user ``Q / Q*`` against a fairness-free baseline trace of the same users.

    Steps where either side served nothing or the baseline quality is zero
    are reported as ``None``.
    """
    if len(trace.records) != len(baseline.records):
        raise TraceMismatchError("traces cover a different number of users")
    if trace.config.get("M") != baseline.config.get("M"):
        raise TraceMismatchError("traces were produced with different M")
    out = []
    for a, b in zip(trace.records, baseline.records):
        if a["user"] != b["user"]:
            raise TraceMismatchError(f"step {a['step']}: users {a['user']!r} and {b['user']!r} differ")
        out.append(_ratio(a["Q"], b["Q"]))
    return out


AGGREGATED = ("mean_quality", "final_fairness", "infeasible_steps", "mean_relative_quality", "mean_latency")


def aggregate_runs(traces: Sequence[SessionTrace]) -> dict[str, tuple[float, float]]:
    """Mean and (population) standard deviation of each summary metric across runs."""
    if not traces:
        raise TraceMismatchError("nothing to aggregate")
    steps = {len(t.records) for t in traces}
    if len(steps) != 1:
        raise TraceMismatchError(f"traces have different lengths {sorted(steps)}")
    base = {k: v for k, v in traces[0].config.items() if k != "seed"}
    for t in traces[1:]:
        if {k: v for k, v in t.config.items() if k != "seed"} != base:
            raise TraceMismatchError("traces come from configs that differ beyond the seed")
    summaries = [t.summary() for t in traces]
    out = {}
    for key in AGGREGATED:
        vals = np.array([s[key] for s in summaries], dtype=float)
        if np.all(np.isnan(vals)):
            out[key] = (float("nan"), float("nan"))
        else:
            out[key] = (float(np.nanmean(vals)), float(np.nanstd(vals)))
    return out


def run_repeats(config: ExperimentConfig, env: Environment | None = None) -> list[SessionTrace]:
    env = env or build_environment(config)
    return [run_session(config, env, config.seed + r) for r in range(config.repeats)]


def write_summary_table(rows: Sequence[dict], path, delimiter: str = ",") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(dict.fromkeys(k for row in rows for k in row))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, delimiter=delimiter)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def summary_row(config: ExperimentConfig | dict, agg: dict[str, tuple[float, float]], **extra) -> dict:
    cfg = config.to_dict() if isinstance(config, ExperimentConfig) else config
    row = {"config_hash": extra.pop("config_hash", None) or
           (config.digest(exclude_seed=True) if isinstance(config, ExperimentConfig) else ""),
           "method": cfg["method"]}
    row.update(extra)
    for key, (m, s) in agg.items():
        row[f"{key}_mean"] = m
        row[f"{key}_std"] = s
    return row


def sweep_grid(config: ExperimentConfig) -> list[dict]:
    """Cartesian product of the swept parameters (a single empty point if none)."""
    from itertools import product

    keys = sorted(config.sweep)
    return [dict(zip(keys, vals)) for vals in product(*(config.sweep[k] for k in keys))]
