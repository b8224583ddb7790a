"""Command-line interface.

Commands:
    sample    draw and classify feasible initial states (table1.csv, samples.csv)
    simulate  run one closed loop from a given state and write its trajectory
    batch     the full study: sampling, paired comparisons, grids, reports
    plot      re-render the SVG figures from a previous run's CSV files

Exit codes: 0 success, 1 usage error, 2 runtime failure.  A JSON config file
(--config) overrides built-in defaults; explicit flags override the config.
Output directory resolution: --out flag, then SATMPC_OUT, then ./out.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .control import (CLASSIC, EVERY_RESOLVE, FIRST_STEP_ONLY, REUSE_SATURATED,
                      ControllerMode, read_trajectory_csv, result_to_csv,
                      run_closed_loop)
from .experiments import (ExperimentConfig, read_grid_csv, read_samples_csv,
                          render_grid_svg, render_samples_svg,
                          resolve_disturbance_bounds, run_full_pipeline,
                          sample_feasible, write_samples_csv, write_table1,
                          _DISTURBANCE_TAG)
from .model import benchmark_model, disturbance_sequence, model_from_descriptor
from .ocp import benchmark_ocp, spec_from_json
from .solver import SolverConfig

_MODE_NAMES = {"classic": CLASSIC, "reuse": REUSE_SATURATED}
_SCOPE_NAMES = {"first": FIRST_STEP_ONLY, "every": EVERY_RESOLVE}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this interface reserves 2 for
    runtime failures, so remap usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_x0(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"x0 must be comma-separated decimals, got {text!r}") from exc


def load_problem(name: str):
    """Resolve --problem: the built-in name 'benchmark' or a JSON file with
    the OcpSpec keys (optionally nested under 'ocp', with dynamics under a
    'model' descriptor key; plain spec files pair with the benchmark model)."""
    if name == "benchmark":
        return benchmark_ocp(), benchmark_model()
    try:
        with open(name, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise RuntimeError(f"cannot read problem file {name}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RuntimeError(f"problem file {name} is not valid JSON: {exc}") from exc
    spec = spec_from_json(obj.get("ocp", obj))
    if "model" in obj:
        model = model_from_descriptor(obj["model"])
    else:
        model = benchmark_model()
        if (spec.n, spec.m) != (model.n, model.m):
            raise RuntimeError(
                f"problem file {name} has no 'model' entry and its dimensions "
                f"({spec.n}, {spec.m}) do not match the benchmark dynamics")
    if (spec.n, spec.m) != (model.n, model.m):
        raise RuntimeError(f"problem file {name}: model dimensions "
                           f"({model.n}, {model.m}) do not match the spec "
                           f"({spec.n}, {spec.m})")
    return spec, model


def _resolve_out(args) -> str:
    if args.out is not None:
        return args.out
    return os.environ.get("SATMPC_OUT", "out")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", default="benchmark",
                   help="'benchmark' or a path to a problem JSON file")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--out", default=None,
                   help="output directory (default: $SATMPC_OUT or ./out)")
    p.add_argument("--config", default=None,
                   help="JSON file of option defaults (flags still win)")


def build_parser():
    parser = _Parser(prog="satmpc",
                     description="saturation-aware NMPC benchmark toolkit")
    subs = parser.add_subparsers(dest="command", required=True,
                                 metavar="{sample,simulate,batch,plot}")
    table = {}

    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = subs.add_parser("sample", formatter_class=fmt,
                        help="draw and classify feasible initial states")
    _add_common(p)
    p.add_argument("--n-samples", type=int, default=5000,
                   help="number of feasible samples to collect")
    table["sample"] = p

    p = subs.add_parser("simulate", formatter_class=fmt,
                        help="run one closed loop and write its trajectory")
    _add_common(p)
    p.add_argument("--x0", type=_parse_x0, required=True,
                   help="initial state, comma-separated decimals")
    p.add_argument("--mode", choices=sorted(_MODE_NAMES), default="classic",
                   help="controller variant")
    p.add_argument("--reuse-scope", choices=sorted(_SCOPE_NAMES), default="first",
                   help="when the reuse variant may open a window")
    p.add_argument("--disturbed", action=argparse.BooleanOptionalAction,
                   default=False, help="add the bounded random disturbance")
    p.add_argument("--max-steps", type=int, default=200,
                   help="abort the loop after this many applied inputs")
    table["simulate"] = p

    p = subs.add_parser("batch", formatter_class=fmt,
                        help="full sampling + comparison study with reports")
    _add_common(p)
    p.add_argument("--n-samples", type=int, default=5000,
                   help="number of feasible samples to collect")
    p.add_argument("--disturbed", action=argparse.BooleanOptionalAction,
                   default=True, help="also run the disturbed replay study")
    p.add_argument("--reuse-scope", choices=sorted(_SCOPE_NAMES), default="first",
                   help="when the reuse variant may open a window")
    p.add_argument("--max-steps", type=int, default=200,
                   help="abort a loop after this many applied inputs")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for the paired runs")
    p.add_argument("--grid", type=int, default=61,
                   help="grid resolution for the feasible-set classification")
    table["batch"] = p

    p = subs.add_parser("plot", formatter_class=fmt,
                        help="re-render SVG figures from a previous run")
    _add_common(p)
    table["plot"] = p
    return parser, table


def _apply_config(parser, table, args, argv):
    """Layer a JSON config between defaults and explicit flags by re-parsing
    with the config values installed as subcommand defaults."""
    if not getattr(args, "config", None):
        return args
    sub = table[args.command]
    try:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
    except OSError as exc:
        sub.error(f"cannot read config {args.config}: {exc}")
    except json.JSONDecodeError as exc:
        sub.error(f"config {args.config} is not valid JSON: {exc}")
    if not isinstance(overrides, dict):
        sub.error(f"config {args.config} must be a JSON object")
    valid = {a.dest for a in sub._actions}
    unknown = sorted(set(overrides) - valid)
    if unknown:
        sub.error(f"config {args.config} sets unknown options: {', '.join(unknown)}")
    if "x0" in overrides and isinstance(overrides["x0"], str):
        overrides["x0"] = _parse_x0(overrides["x0"])
    sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def _cmd_sample(args) -> int:
    spec, model = load_problem(args.problem)
    cfg = ExperimentConfig(n_samples=args.n_samples, rng_seed=args.seed,
                           solver=SolverConfig())
    rng = np.random.default_rng(args.seed)
    samples = sample_feasible(spec, model, cfg, args.n_samples, rng)
    outdir = _resolve_out(args)
    os.makedirs(outdir, exist_ok=True)
    write_samples_csv(samples, os.path.join(outdir, "samples.csv"))
    write_table1(samples, os.path.join(outdir, "table1.csv"))
    if spec.n == 2:
        render_samples_svg(samples, spec, os.path.join(outdir, "figure1.svg"))
    counts = {}
    for s in samples:
        counts[s.label] = counts.get(s.label, 0) + 1
    total = len(samples)
    for label in ("lower", "upper", "other"):
        c = counts.get(label, 0)
        print(f"{label}: {c} ({100.0 * c / total:.2f}%)")
    print(f"wrote samples.csv and table1.csv to {outdir}")
    return 0


def _cmd_simulate(args) -> int:
    spec, model = load_problem(args.problem)
    mode = ControllerMode(_MODE_NAMES[args.mode], _SCOPE_NAMES[args.reuse_scope])
    disturbances = None
    if args.disturbed:
        bounds = resolve_disturbance_bounds(ExperimentConfig(), spec)
        wrng = np.random.default_rng(
            np.random.SeedSequence((args.seed, _DISTURBANCE_TAG, 0)))
        disturbances = disturbance_sequence(bounds, wrng, args.max_steps)
    result = run_closed_loop(model, spec, SolverConfig(), args.x0, mode,
                             disturbances=disturbances, max_steps=args.max_steps)
    outdir = _resolve_out(args)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "trajectory.csv")
    result_to_csv(result, spec, path)
    cost = f"{result.V_hat:.6g}" if result.V_hat is not None else "n/a"
    print(f"status={result.status} steps={len(result.inputs)} "
          f"nlps_solved={result.n_nlp_solved} cost={cost}")
    print(f"wrote {path}")
    return 0


def _cmd_batch(args) -> int:
    spec, model = load_problem(args.problem)
    cfg = ExperimentConfig(n_samples=args.n_samples, rng_seed=args.seed,
                           disturbed=args.disturbed, output_dir=_resolve_out(args),
                           max_steps=args.max_steps, jobs=args.jobs,
                           reuse_scope=_SCOPE_NAMES[args.reuse_scope],
                           grid_resolution=args.grid, solver=SolverConfig())
    summary = run_full_pipeline(spec, model, cfg)
    samples = summary["samples"]
    total = len(samples)
    counts = {}
    for s in samples:
        counts[s.label] = counts.get(s.label, 0) + 1
    frac = " ".join(f"{label} {100.0 * counts.get(label, 0) / total:.2f}%"
                    for label in ("lower", "upper", "other"))
    print(f"sampled {total} feasible states: {frac}")
    for scen, by_group in summary["stats"].items():
        for gname, st in by_group.items():
            if st.n_samples == 0:
                continue
            print(f"{scen} {gname}: nlps {st.mean_nlp_classic:.4f} -> "
                  f"{st.mean_nlp_heuristic:.4f} (saving {st.nlp_saving_pct:.3f}%), "
                  f"cost {st.cost_delta_pct:+.4f}%"
                  + (f", excluded {st.n_excluded_infeasible}"
                     if st.n_excluded_infeasible else ""))
    print(f"wrote {len(summary['paths'])} files to {cfg.output_dir}")
    return 0


def _cmd_plot(args) -> int:
    spec, _ = load_problem(args.problem)
    outdir = _resolve_out(args)
    samples_path = os.path.join(outdir, "samples.csv")
    grid_path = os.path.join(outdir, "grid.csv")
    wrote = []
    if os.path.exists(samples_path) and spec.n == 2:
        samples = read_samples_csv(samples_path)
        render_samples_svg(samples, spec, os.path.join(outdir, "figure1.svg"))
        wrote.append("figure1.svg")
    if os.path.exists(grid_path) and spec.n == 2:
        grid = read_grid_csv(grid_path)
        trajectories = {}
        reuse_path = os.path.join(outdir, "figure2.csv")
        classic_path = os.path.join(outdir, "figure2_classic.csv")
        if os.path.exists(reuse_path):
            trajectories["reuse"] = read_trajectory_csv(reuse_path)["states"]
        if os.path.exists(classic_path):
            trajectories["classic"] = read_trajectory_csv(classic_path)["states"]
        render_grid_svg(grid, spec, os.path.join(outdir, "figure3.svg"),
                        trajectories=trajectories or None)
        wrote.append("figure3.svg")
    if not wrote:
        raise RuntimeError(f"no samples.csv or grid.csv found in {outdir}; "
                           f"run 'sample' or 'batch' first")
    print(f"wrote {', '.join(wrote)} to {outdir}")
    return 0


_COMMANDS = {"sample": _cmd_sample, "simulate": _cmd_simulate,
             "batch": _cmd_batch, "plot": _cmd_plot}


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    parser, table = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, table, args, argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # surface one actionable line, exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
