"""Command-line interface: ``mebk <command> [options]``.

Commands
--------
fit        fit a density to a CSV and write a model JSON plus a density grid
grid       re-emit the density grid of a saved model JSON
bandwidth  write per-observation (Bayes) or global (UCV) bandwidths
simulate   Monte Carlo ISE table for a scenario (one cell or an alpha x beta sweep)
benchmark  wall-clock time of both selectors on one sample per size
loglik     cross-validated average log-likelihood of held-out rows

Exit status is 0 on success, 2 on invalid input and 3 on numerical failure.
Every output file embeds the resolved configuration, the seed and the
package version.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import bayes_adaptive_bandwidths, default_prior, ucv_select
from .datasets import bundled_path, read_numeric_csv
from .errors import MEBKError, NumericalError
from .estimator import DensityEstimate, Sample, Support, mebk_eval_grid
from .simlab import (BENCHMARK_COLUMNS, ISE_COLUMNS, LOGLIK_COLUMNS, avg_loglik_crossval,
                     cpu_benchmark, format_table, run_ise_replications)
from .support import ESTIMATED, GIVEN, SAMPLE_RANGE, SupportPolicy, resolve_support

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
MAX_DIM = 5
BUNDLED_DOMAINS = {"cholesterol": "1:2", "marks": "0:20"}
BUNDLED_COLUMNS = {"cholesterol": "cholesterol", "marks": None}


class UsageError(MEBKError, ValueError):
    """Bad command-line input."""


# ---------------------------------------------------------------------------
# Flag parsing
# ---------------------------------------------------------------------------


def parse_support(text: str | None) -> SupportPolicy:
    """``a1:b1,a2:b2`` | ``sample-range`` | ``estimate``."""
    if text is None or text == "sample-range":
        return SupportPolicy(SAMPLE_RANGE)
    if text == "estimate":
        return SupportPolicy(ESTIMATED)
    try:
        pairs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
        if any(len(p) != 2 for p in pairs):
            raise ValueError
    except ValueError:
        raise UsageError(f"--support expects a1:b1,a2:b2, 'sample-range' or 'estimate', "
                         f"got {text!r}") from None
    try:
        return SupportPolicy(GIVEN, Support.from_bounds(pairs))
    except ValueError as exc:
        raise UsageError(f"--support: {exc}") from None


def parse_alpha(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--alpha expects 'auto' or a number, got {text!r}") from None


def parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None


def parse_grid(text: str, d: int) -> list[int]:
    """``200`` (same count on every axis) or ``100x80``."""
    sizes = parse_ints(text.replace("x", ","), "--grid")
    if len(sizes) == 1:
        sizes = sizes * d
    if len(sizes) != d or any(s < 2 for s in sizes):
        raise UsageError(f"--grid needs one count >= 2 or {d} counts joined by 'x'")
    return sizes


def _beta_arg(text: str, d: int):
    vals = parse_floats(text, "--beta")
    if len(vals) not in (1, d):
        raise UsageError(f"--beta needs 1 or {d} values")
    return vals if len(vals) > 1 else vals[0]


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _meta(command: str, config: dict) -> dict:
    return {"command": command, "config": config, "seed": config.get("seed"),
            "version": __version__}


def _write(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _load_input(args) -> tuple[np.ndarray, list]:
    if getattr(args, "dataset", None):
        path = bundled_path(args.dataset)
    elif args.input:
        path = Path(args.input)
    else:
        raise UsageError("an input CSV (or --dataset) is required")
    column = getattr(args, "column", None)
    if column is None and getattr(args, "dataset", None):
        column = BUNDLED_COLUMNS[args.dataset]
    cols = None
    if column:
        cols = [c if not c.isdigit() else int(c) for c in column.split(",")]
    X, header = read_numeric_csv(path, cols, return_header=True)
    d = X.shape[1]
    if d > MAX_DIM and not getattr(args, "allow_high_dim", False):
        raise UsageError(f"data have {d} columns; more than {MAX_DIM} needs --allow-high-dim")
    return X, header


def _support_policy(args, d: int) -> SupportPolicy:
    text = args.support
    if text is None and getattr(args, "dataset", None):
        text = ",".join([BUNDLED_DOMAINS[args.dataset]] * d)
    return parse_support(text)


def _fit_sample(X, args):
    n, d = X.shape
    prior = default_prior(n, d, beta=_beta_arg(args.beta, d), alpha=parse_alpha(args.alpha))
    box = resolve_support(X, _support_policy(args, d), prior)
    sample = Sample(X, box)
    if args.selector == "bayes":
        h = bayes_adaptive_bandwidths(sample, prior)
    else:
        h = ucv_select(sample)
    return sample, prior, h


def _grid_axes(support: Support, sizes) -> list[np.ndarray]:
    return [np.linspace(iv.a, iv.b, s) for iv, s in zip(support.intervals, sizes)]


def _grid_csv(est: DensityEstimate, sizes, meta: dict) -> str:
    axes = _grid_axes(est.support, sizes)
    vals = mebk_eval_grid(est, axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = [m.ravel() for m in mesh] + [vals.ravel()]
    lines = ["# " + json.dumps(meta, sort_keys=True),
             ",".join([f"x{j + 1}" for j in range(len(axes))] + ["density"])]
    for row in zip(*cols):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _summary(h: np.ndarray) -> dict:
    H = np.atleast_2d(h)
    return {"min": H.min(axis=0).tolist(), "median": np.median(H, axis=0).tolist(),
            "mean": H.mean(axis=0).tolist(), "max": H.max(axis=0).tolist()}


def model_to_dict(est: DensityEstimate, meta: dict, selector: str, prior=None) -> dict:
    h = np.asarray(est.bandwidths)
    return {
        **meta,
        "support": est.support.to_list(),
        "selector": selector,
        "prior": prior.to_dict() if prior is not None and selector == "bayes" else None,
        "normalization": est.normalization,
        "bandwidth_summary": _summary(h),
        "bandwidths": h.tolist(),
        "adaptive": bool(est.adaptive),
        "data": est.sample.data.tolist(),
    }


def model_from_dict(obj: dict) -> DensityEstimate:
    """Rebuild the exact normalized estimate stored by ``fit``."""
    try:
        support = Support.from_bounds(obj["support"])
        sample = Sample(np.asarray(obj["data"], dtype=float), support)
        return DensityEstimate(sample, np.asarray(obj["bandwidths"], dtype=float),
                               normalization=float(obj["normalization"]))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed model file: {exc}") from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _config(args, *keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def cmd_fit(args) -> int:
    X, header = _load_input(args)
    sample, prior, h = _fit_sample(X, args)
    sizes = parse_grid(args.grid, sample.d)
    config = _config(args, "input", "dataset", "column", "support", "selector", "alpha", "beta",
                     "grid", "seed")
    config["columns"] = header
    meta = _meta("fit", config)
    est = DensityEstimate(sample, h)
    prefix = Path(args.output)
    _write(f"{prefix}.model.json", _json(model_to_dict(est, meta, args.selector, prior)))
    _write(f"{prefix}.grid.csv", _grid_csv(est, sizes, meta))
    return EXIT_OK


def cmd_grid(args) -> int:
    path = Path(args.model)
    if not path.is_file():
        raise UsageError(f"model file {str(path)!r} does not exist")
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    est = model_from_dict(obj)
    grid = args.grid if args.grid is not None else obj.get("config", {}).get("grid", "200")
    meta = {k: obj[k] for k in ("command", "config", "seed", "version") if k in obj}
    if args.grid is not None:
        meta = {**meta, "config": {**meta.get("config", {}), "grid": grid}}
    _write(args.output, _grid_csv(est, parse_grid(grid, est.sample.d), meta))
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    X, header = _load_input(args)
    sample, prior, h = _fit_sample(X, args)
    config = _config(args, "input", "dataset", "column", "support", "selector", "alpha", "beta",
                     "seed")
    config["columns"] = header
    meta = _meta("bandwidth", config)
    meta["support"] = sample.support.to_list()
    meta["prior"] = prior.to_dict() if args.selector == "bayes" else None
    H = np.atleast_2d(h)
    cols = ["index"] + [f"h{j + 1}" for j in range(sample.d)]
    rows = [dict(zip(cols, [i] + [float(v) for v in r])) for i, r in enumerate(H)]
    _write(args.output, format_table(rows, cols, args.format, meta))
    return EXIT_OK


def cmd_simulate(args) -> int:
    ns = parse_ints(args.n, "--n")
    alphas = ["auto"] if args.alpha == "auto" else parse_floats(args.alpha, "--alpha")
    betas = parse_floats(args.beta, "--beta")
    rows = []
    for n in ns:
        if args.selector == "ucv":
            rows.append(run_ise_replications(args.scenario, n, "ucv", N=args.reps,
                                             seed=args.seed, workers=args.threads).row())
            continue
        for b in betas:
            for a in alphas:
                rep = run_ise_replications(args.scenario, n, "bayes", N=args.reps, seed=args.seed,
                                           alpha=a, beta=b, workers=args.threads)
                rows.append(rep.row())
    config = _config(args, "scenario", "n", "selector", "alpha", "beta", "reps", "seed")
    _write(args.output, format_table(rows, ISE_COLUMNS, args.format, _meta("simulate", config)))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    sizes = parse_ints(args.sizes, "--sizes")
    rows = cpu_benchmark(args.scenario, sizes, seed=args.seed, alpha=parse_alpha(args.alpha),
                         beta=float(args.beta))
    config = _config(args, "scenario", "sizes", "alpha", "beta", "seed")
    _write(args.output, format_table(rows, BENCHMARK_COLUMNS, args.format,
                                     _meta("benchmark", config)))
    return EXIT_OK


def cmd_loglik(args) -> int:
    X, header = _load_input(args)
    d = X.shape[1]
    policy = _support_policy(args, d)
    selectors = ["bayes", "ucv"] if args.selector == "both" else [args.selector]
    rows = []
    for sel in selectors:
        rows.extend(avg_loglik_crossval(
            X, sel, parse_ints(args.m, "--m"), R=args.reps, seed=args.seed, policy=policy,
            alpha=parse_alpha(args.alpha), beta=_beta_arg(args.beta, d), floor=args.floor,
            workers=args.threads))
    config = _config(args, "input", "dataset", "column", "support", "selector", "alpha", "beta",
                     "m", "reps", "floor", "seed")
    config["columns"] = header
    _write(args.output, format_table(rows, LOGLIK_COLUMNS, args.format, _meta("loglik", config)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _data_flags(p, with_dataset: bool = False) -> None:
    p.add_argument("input", nargs="?", help="CSV file, comma-separated, header optional")
    if with_dataset:
        p.add_argument("--dataset", choices=("cholesterol", "marks"),
                       help="use a bundled dataset instead of INPUT")
    p.add_argument("--column", help="comma-separated column names or 0-based indices")
    p.add_argument("--support", default=None,
                   help="a1:b1,a2:b2 | sample-range | estimate (default: the natural "
                        "domain of a bundled dataset, otherwise sample-range)")
    p.add_argument("--alpha", default="auto", help="prior shape, or 'auto' for n^(2/5)")
    p.add_argument("--allow-high-dim", action="store_true",
                   help=f"accept more than {MAX_DIM} columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mebk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a density and write model JSON + grid CSV")
    _data_flags(p, with_dataset=True)
    p.add_argument("--selector", choices=("bayes", "ucv"), default="bayes")
    p.add_argument("--beta", default="0.25", help="prior scale(s), one or one per axis")
    p.add_argument("--grid", default="200", help="points per axis: 200 or 100x100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True,
                   help="output prefix; writes PREFIX.model.json and PREFIX.grid.csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("grid", help="re-emit the density grid of a saved model")
    p.add_argument("model", help="model JSON written by 'fit'")
    p.add_argument("--grid", default=None, help="override the stored grid size")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bandwidth", help="write selected bandwidths")
    _data_flags(p, with_dataset=True)
    p.add_argument("--selector", choices=("bayes", "ucv"), default="bayes")
    p.add_argument("--beta", default="0.25")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("simulate", help="Monte Carlo ISE for a scenario")
    p.add_argument("--scenario", required=True, choices=tuple("ABCDEFGHI"))
    p.add_argument("--n", required=True, help="sample size(s), comma-separated")
    p.add_argument("--selector", choices=("bayes", "ucv"), default="bayes")
    p.add_argument("--alpha", default="auto", help="'auto' or comma-separated values")
    p.add_argument("--beta", default="0.25", help="comma-separated values")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: MEBK_THREADS or 1)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="selector timings")
    p.add_argument("--scenario", default="B", choices=tuple("ABCDEFGHI"))
    p.add_argument("--sizes", default="10,25,50,100,200,500")
    p.add_argument("--alpha", default="auto")
    p.add_argument("--beta", default="0.25")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("loglik", help="cross-validated average log-likelihood")
    _data_flags(p, with_dataset=True)
    p.add_argument("--selector", choices=("bayes", "ucv", "both"), default="bayes")
    p.add_argument("--beta", default="0.5")
    p.add_argument("--m", required=True, help="subset size(s), comma-separated")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--floor", type=float, default=1e-300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: MEBK_THREADS or 1)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_loglik)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"mebk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MEBKError, ValueError, OSError) as exc:
        print(f"mebk: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
