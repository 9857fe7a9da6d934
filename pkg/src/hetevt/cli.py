"""Command-line front end.

Each subcommand calls a ``build_*`` function that returns the output files
as text plus a JSON summary; ``main`` only checks for clobbering and writes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .exceptions import HetEVTError, HetEVTWarning
from .heterogeneity import (
    default_u_grid,
    homogeneous_reference,
    lambda_curve,
    ordinal_ranks,
    r_hat_grid,
)
from .inference import TailContext, extrapolation_series, infer, sweep
from .ingest import (
    ColumnConfig,
    cap_per_athlete,
    group,
    load_sample_json,
    parse_csv,
    prepare_for_lambda,
    smooth_ties,
    to_time,
)
from .simulation import EXPERIMENTS, load_scenario
from .tail import resolve_k

OUTPUT_ENV = "HETEVT_OUTPUT_DIR"
DEFAULT_SEED = 20240101


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _levels(text) -> tuple:
    levels = tuple(float(v) for v in str(text).split(",") if v.strip())
    if not levels or any(not 0.5 <= lv < 1 for lv in levels):
        raise argparse.ArgumentTypeError("levels must be comma-separated values in [0.5, 1)")
    return levels


def _k_range(text) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("k-range must look like 0.03:0.07") from None
    return lo, hi


def _level_column(level) -> str:
    return f"lcb{round(level * 100):d}_time"


class _Collect(warnings.catch_warnings):
    """Record HetEVTWarnings raised inside the block as plain strings."""

    def __init__(self):
        super().__init__(record=True)

    def __enter__(self):
        self.log = super().__enter__()
        warnings.simplefilter("always", HetEVTWarning)
        return self

    @property
    def messages(self):
        return [str(w.message) for w in self.log if issubclass(w.category, HetEVTWarning)]


def build_prepare(input_path, cap=5, resolution=0.01, distance_m=100.0, columns=None):
    with _Collect() as rec:
        table = parse_csv(input_path, columns)
        capped = cap_per_athlete(table, cap)
        smoothed = smooth_ties(capped, resolution)
        sample = group(smoothed, distance_m)
    times = capped.times
    summary = {
        "athletes": sample.p,
        "records": sample.n,
        "rows_read": len(table),
        "best_time": float(times.min()) if len(times) else None,
        "worst_time": float(times.max()) if len(times) else None,
        "singletons": int(np.sum(sample.group_sizes == 1)),
        "cap": cap,
        "resolution": resolution,
        "distance_m": distance_m,
        "warnings": rec.messages,
    }
    doc = sample.to_dict()
    doc["distance_m"] = distance_m
    return {"sample.json": json.dumps(doc) + "\n", "prepare_summary.json": _json_text(summary)}, summary


def _distance(doc_path) -> float:
    try:
        return float(json.loads(Path(doc_path).read_text(encoding="utf-8")).get("distance_m", 100.0))
    except (OSError, ValueError):
        return 100.0


def _sweep_csv(result, levels):
    header = ["k", "gamma", "endpoint_time", "sigma2_iid", "delta"] + [_level_column(lv) for lv in levels]
    rows = [
        [r.k, r.gamma, r.endpoint_time, r.sigma2_iid, r.delta] + [r.lcb_time[f"{lv:g}"] for lv in levels]
        for r in result.rows
    ]
    return _csv_text(header, rows)


def _protocol_point(row, levels):
    return {
        "k": row.k,
        "gamma": row.gamma,
        "endpoint_speed": row.endpoint_speed,
        "endpoint_time": row.endpoint_time,
        "delta": row.delta,
        "lambda_at_1": row.variance_reduction.lambda_at_1 if row.variance_reduction else None,
        "lcb_time": {f"{lv:g}": row.lcb_time[f"{lv:g}"] for lv in levels},
        "ucb_speed": {f"{lv:g}": row.ucb_speed[f"{lv:g}"] for lv in levels},
    }


def build_estimate(
    sample_path, k=None, k_frac=None, levels=(0.75, 0.95), policy="drop",
    k_range=(0.03, 0.07), step=1, lambda_k=None,
):
    sample = load_sample_json(sample_path)
    distance_m = _distance(sample_path)
    with _Collect() as rec:
        ctx = TailContext(sample, policy, distance_m)
        k = resolve_k(ctx.n, k, None if k is not None else (k_frac or 0.05))
        fit = ctx.fit(k)
        vr = ctx.variance_reduction(k if lambda_k is None else lambda_k, fit.gamma)
        point = infer(fit, vr, levels, distance_m)
        swept = sweep(sample, k_range[0], k_range[1], step, levels, policy, distance_m=distance_m, context=ctx)
    summary = {
        "n": sample.n,
        "p": sample.p,
        "n_lambda": ctx.lambda_sample.n,
        "p_lambda": ctx.lambda_sample.p,
        "singleton_policy": policy,
        "levels": list(levels),
        "tail_fit": fit.to_dict(),
        "variance_reduction": point.variance_reduction.to_dict() if point.variance_reduction else None,
        "protocols": {
            "5%": _protocol_point(point, levels),
            "median": {
                "k_range": list(k_range),
                "endpoint_time": swept.median_endpoint_time,
                "gamma": swept.median_gamma,
                "delta": swept.median_delta,
                "lcb_time": dict(swept.median_lcb_time),
                "excluded_k": swept.excluded_k,
            },
        },
        "warnings": rec.messages,
    }
    return {"summary.json": _json_text(summary), "sweep.csv": _sweep_csv(swept, levels)}, summary


def build_sweep(sample_path, k_range=(0.03, 0.07), step=1, levels=(0.75, 0.95), policy="drop"):
    sample = load_sample_json(sample_path)
    distance_m = _distance(sample_path)
    with _Collect() as rec:
        result = sweep(sample, k_range[0], k_range[1], step, levels, policy, distance_m=distance_m)
    summary = result.summary()
    summary.update({"n": sample.n, "p": sample.p, "levels": list(levels), "warnings": rec.messages})
    return {"sweep.csv": _sweep_csv(result, levels), "sweep_summary.json": _json_text(summary)}, summary


def build_lambda(sample_path, k=None, k_frac=None, grid=200, policy="drop"):
    sample = prepare_for_lambda(load_sample_json(sample_path), policy)
    ranks = ordinal_ranks(sample.values)
    k = resolve_k(sample.n, k, None if k is not None else (k_frac or 0.05))
    u = default_u_grid(grid)
    curve = lambda_curve(sample, ranks, k, u)
    ref = homogeneous_reference(sample.n, k, u)
    header = curve.header()
    header.update({"grid": grid, "singleton_policy": policy, "lambda_at_1_grid": float(curve.lambda_hat[-1])})
    files = {
        "lambda.csv": _csv_text(["u", "lambda_hat"], curve.to_csv_rows()),
        "lambda_reference.csv": _csv_text(["u", "expected_homogeneous"], zip(u.tolist(), ref.tolist())),
        "lambda.json": _json_text(header),
    }
    return files, header


def build_rsurface(sample_path, k=None, k_frac=None, grid=20, lo=0.1, hi=2.0, policy="drop"):
    sample = prepare_for_lambda(load_sample_json(sample_path), policy)
    ranks = ordinal_ranks(sample.values)
    k = resolve_k(sample.n, k, None if k is not None else (k_frac or 0.05))
    xs = np.linspace(lo, hi, grid)
    surf = r_hat_grid(sample, ranks, k, xs, xs)
    rows = [(float(x), float(y), float(surf[i, j])) for i, x in enumerate(xs) for j, y in enumerate(xs)]
    header = {"k": k, "n": sample.n, "p": sample.p, "grid": grid, "min": lo, "max": hi}
    return {"rsurface.csv": _csv_text(["x", "y", "r_hat"], rows), "rsurface.json": _json_text(header)}, header


def build_extrapolate(sample_path, k=None, k_frac=None, max_rank=None):
    sample = load_sample_json(sample_path)
    ctx = TailContext(sample, distance_m=_distance(sample_path))
    k = resolve_k(ctx.n, k, None if k is not None else (k_frac or 0.05))
    fit = ctx.fit(k)
    series = extrapolation_series(fit, ctx.ordered, max_rank)
    rows = zip(series.rank.tolist(), series.transformed_rank.tolist(), series.speed.tolist())
    side = series.sidecar()
    side["endpoint_time"] = to_time(series.intercept, ctx.distance_m)
    return {
        "extrapolation.csv": _csv_text(["rank", "transformed_rank", "speed"], rows),
        "extrapolation.json": _json_text(side),
    }, side


def build_simulate(scenario_path, experiment="coverage", seed=None, reps=None, level=0.95,
                   k_frac=0.05, n_grid=None):
    scenario = load_scenario(scenario_path)
    if seed is not None:
        scenario = replace(scenario, seed=int(seed))
    func = EXPERIMENTS[experiment]
    kwargs = {"k_frac": k_frac}
    if reps is not None:
        kwargs["reps"] = reps
    if experiment == "coverage":
        kwargs["levels"] = (0.5, level) if level != 0.5 else (0.5,)
    if experiment in ("bias", "lemma") and n_grid:
        kwargs["n_grid"] = tuple(n_grid)
    with _Collect() as rec:
        result = func(scenario, **kwargs)
    result.summary["warnings"] = sorted(set(rec.messages))
    return {
        f"{experiment}_replications.csv": result.csv_text(),
        f"{experiment}_summary.json": _json_text(result.summary),
    }, result.summary


def _add_k_options(p, default_frac=None):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=int, help="number of upper order statistics")
    g.add_argument("--k-frac", type=float, default=default_frac, help="k as a fraction of n")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetevt", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help=f"output directory (env {OUTPUT_ENV}, else .)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="CSV of times -> grouped speed sample")
    p.add_argument("input")
    p.add_argument("--cap", type=int, default=5)
    p.add_argument("--resolution", type=float, default=0.01)
    p.add_argument("--distance", type=float, default=100.0)
    p.add_argument("--athlete-col", default="athlete_id")
    p.add_argument("--time-col", default="time_s")
    p.add_argument("--wind-col", default="wind")

    p = sub.add_parser("estimate", parents=[common], help="point estimate and bounds at one k")
    p.add_argument("sample")
    _add_k_options(p)
    p.add_argument("--levels", type=_levels, default=(0.75, 0.95))
    p.add_argument("--k-range", type=_k_range, default=(0.03, 0.07))
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--lambda-k", type=int, default=None)
    p.add_argument("--singletons", choices=("drop", "duplicate"), default="drop")

    p = sub.add_parser("sweep", parents=[common], help="estimates over a range of k with medians")
    p.add_argument("sample")
    p.add_argument("--k-range", type=_k_range, default=(0.03, 0.07))
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--levels", type=_levels, default=(0.75, 0.95))
    p.add_argument("--singletons", choices=("drop", "duplicate"), default="drop")

    p = sub.add_parser("lambda", parents=[common], help="heterogeneity curve and homogeneous reference")
    p.add_argument("sample")
    _add_k_options(p)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--singletons", choices=("drop", "duplicate"), default="drop")

    p = sub.add_parser("rsurface", parents=[common], help="R-hat on a square grid")
    p.add_argument("sample")
    _add_k_options(p)
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--min", dest="lo", type=float, default=0.1)
    p.add_argument("--max", dest="hi", type=float, default=2.0)
    p.add_argument("--singletons", choices=("drop", "duplicate"), default="drop")

    p = sub.add_parser("extrapolate", parents=[common], help="rank-power scatter and fitted line")
    p.add_argument("sample")
    _add_k_options(p)
    p.add_argument("--max-rank", type=int, default=None)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo validation experiments")
    p.add_argument("scenario")
    p.add_argument("--experiment", choices=sorted(EXPERIMENTS), default="coverage")
    p.add_argument("--seed", type=int, default=None, help=f"overrides the scenario seed (default {DEFAULT_SEED})")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--k-frac", type=float, default=0.05)
    p.add_argument("--n-grid", type=lambda s: [int(v) for v in s.split(",")], default=None)
    return parser


def run(args) -> tuple[dict, dict]:
    cmd = args.command
    if cmd == "prepare":
        cols = ColumnConfig(athlete_id=args.athlete_col, time_s=args.time_col, wind=args.wind_col)
        return build_prepare(args.input, args.cap, args.resolution, args.distance, cols)
    if cmd == "estimate":
        return build_estimate(args.sample, args.k, args.k_frac, args.levels, args.singletons,
                              args.k_range, args.step, args.lambda_k)
    if cmd == "sweep":
        return build_sweep(args.sample, args.k_range, args.step, args.levels, args.singletons)
    if cmd == "lambda":
        return build_lambda(args.sample, args.k, args.k_frac, args.grid, args.singletons)
    if cmd == "rsurface":
        return build_rsurface(args.sample, args.k, args.k_frac, args.grid, args.lo, args.hi, args.singletons)
    if cmd == "extrapolate":
        return build_extrapolate(args.sample, args.k, args.k_frac, args.max_rank)
    if cmd == "simulate":
        return build_simulate(args.scenario, args.experiment, args.seed, args.reps, args.level,
                              args.k_frac, args.n_grid)
    raise ValueError(f"unknown command {cmd}")


def _flatten(doc, prefix=""):
    if isinstance(doc, dict):
        for key in sorted(doc):
            yield from _flatten(doc[key], f"{prefix}{key}.")
    elif isinstance(doc, list) and doc and isinstance(doc[0], dict):
        for i, item in enumerate(doc):
            yield from _flatten(item, f"{prefix}{i}.")
    else:
        yield prefix[:-1], doc


def print_table(summary, stream=None):
    stream = stream or sys.stdout
    items = [(k, v) for k, v in _flatten(summary) if k != "scenario" and not k.startswith("scenario.")]
    width = max((len(k) for k, _ in items), default=0)
    for key, value in items:
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key:<{width}}  {value}", file=stream)


def write_outputs(files: dict, out_dir, force=False) -> list[Path]:
    out_dir = Path(out_dir)
    targets = [out_dir / name for name in files]
    clash = [str(t) for t in targets if t.exists()]
    if clash and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(clash)} (use --force)")
    out_dir.mkdir(parents=True, exist_ok=True)
    for target, text in zip(targets, files.values()):
        target.write_text(text, encoding="utf-8")
    return targets


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    out_dir = args.out or os.environ.get(OUTPUT_ENV) or "."
    try:
        files, summary = run(args)
        written = write_outputs(files, out_dir, args.force)
    except (HetEVTError, ValueError, FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print_table(summary)
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
