"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 every step infeasible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from fairbundle.config import load_config
from fairbundle.errors import ConfigError, DataError, FairBundleError
from fairbundle.session import (
    SessionTrace,
    aggregate_runs,
    build_environment,
    run_session,
    summary_row,
    sweep_grid,
    write_summary_table,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ALL_INFEASIBLE = 4

logger = logging.getLogger("fairbundle")


def _ingest(args) -> int:
    from fairbundle import ingest

    metas = ingest.load_metadata(args.metadata)
    if args.kind == "movielens":
        thresholds = args.thresholds or ingest.MOVIELENS_VOTE_THRESHOLDS
        catalog, report = ingest.movielens_catalog(metas, thresholds)
    elif args.kind == "yelp":
        if args.filter:
            metas = [m for m in metas if ingest.yelp_business_filter(m)]
        thresholds = args.thresholds or ingest.YELP_REVIEW_THRESHOLDS
        catalog, report = ingest.yelp_catalog(metas, thresholds)
    else:
        if args.filter:
            metas = ingest.amazon_brand_filter(metas)
        catalog, report = ingest.amazon_catalog(metas)
    ingest.save_catalog(catalog, args.out)
    sizes = ", ".join(str(int(n)) for n in catalog.group_sizes())
    print(f"catalog: {len(catalog)} items, groups [{sizes}], {catalog.n_types} types -> {args.out}")
    if report.dropped:
        print(f"dropped {len(report.dropped)} items with incomplete metadata")
    return 0


def _train(args) -> int:
    from fairbundle.ingest import filter_active_users, load_ratings
    from fairbundle.relevance import MFHyper, train_mf

    ratings = load_ratings(args.ratings, delimiter=args.delimiter)
    if args.min_user_ratings is not None:
        ratings = filter_active_users(ratings, args.min_user_ratings)
    hyper = MFHyper(args.dim, args.epochs, args.lr, args.reg, seed=args.seed)
    model = train_mf(ratings, hyper)
    model.save(args.out)
    print(f"trained on {len(ratings)} ratings; final train RMSE {model.rmse_history[-1]:.4f} -> {args.out}")
    return 0


def _run_config(config, out_dir: Path, env=None, tag: str = "") -> tuple[list[SessionTrace], dict]:
    env = env or build_environment(config)
    traces = []
    for r in range(config.repeats):
        seed = config.seed + r
        trace = run_session(config, env, seed)
        stem = f"{config.method}{tag}_seed{seed}"
        trace.write(out_dir / f"{stem}.jsonl")
        trace.write_timings(out_dir / f"{stem}.timings.csv")
        traces.append(trace)
    return traces, aggregate_runs(traces)


def _all_infeasible(traces) -> bool:
    return all(not t.served for t in traces)


def _run(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.output_dir)
    traces, agg = _run_config(config, out_dir)
    row = summary_row(config, agg)
    write_summary_table([row], out_dir / "summary.csv")
    for key, (m, s) in agg.items():
        print(f"{key:24s} {m:.4f} +/- {s:.4f}")
    return EXIT_ALL_INFEASIBLE if _all_infeasible(traces) else 0


def _sweep(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.output_dir)
    env = build_environment(config)
    rows, infeasible = [], True
    for n, point in enumerate(sweep_grid(config)):
        cfg = config.replace(**point, sweep={})
        traces, agg = _run_config(cfg, out_dir, env, tag=f"_p{n}")
        infeasible &= _all_infeasible(traces)
        rows.append(summary_row(cfg, agg, **point))
        params = " ".join(f"{k}={v}" for k, v in point.items())
        q, f = agg["mean_quality"], agg["final_fairness"]
        print(f"{params:40s} Q={q[0]:.4f}+/-{q[1]:.4f} F={f[0]:.4f}+/-{f[1]:.4f}")
    write_summary_table(rows, out_dir / "tradeoff.csv")
    return EXIT_ALL_INFEASIBLE if infeasible else 0


def _report(args) -> int:
    traces = []
    for p in args.traces:
        p = Path(p)
        timings = p.with_name(p.name.replace(".jsonl", ".timings.csv"))
        traces.append(SessionTrace.read(p, timings))
    groups: dict[str, list[SessionTrace]] = {}
    for t in traces:
        cfg = {k: v for k, v in t.config.items() if k != "seed"}
        groups.setdefault(json.dumps(cfg, sort_keys=True, default=str), []).append(t)
    rows = []
    for members in groups.values():
        agg = aggregate_runs(members)
        rows.append(summary_row(members[0].config, agg, config_hash=members[0].config_hash, runs=len(members)))
    out = Path(args.out)
    write_summary_table(rows, out, delimiter="\t" if out.suffix == ".tsv" else ",")
    print(f"{len(rows)} configuration(s) summarised -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairbundle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build and archive a catalog from item metadata")
    p.add_argument("--kind", choices=["movielens", "yelp", "amazon"], required=True)
    p.add_argument("--metadata", required=True, help="JSON-lines item metadata")
    p.add_argument("--out", required=True, help="catalog archive (.npz)")
    p.add_argument("--thresholds", type=int, nargs="+", help="popularity cutoffs")
    p.add_argument("--filter", action="store_true", help="apply the dataset's default item filter")
    p.set_defaults(func=_ingest)

    p = sub.add_parser("train", help="fit the matrix-factorisation recommender")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True, help="model archive (.npz)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--reg", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-user-ratings", type=int, default=None,
                   help="keep users with more than this many ratings")
    p.set_defaults(func=_train)

    p = sub.add_parser("run", help="run seeded sessions from a config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=_run)

    p = sub.add_parser("sweep", help="grid over the config's sweep section")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=_sweep)

    p = sub.add_parser("report", help="aggregate trace files into a summary table")
    p.add_argument("traces", nargs="+")
    p.add_argument("--out", default="summary.csv", help=".csv or .tsv")
    p.set_defaults(func=_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FairBundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
