"""Batch experiments: feasible-set sampling, paired controller comparisons,
grid classification, and report emission.

The pipeline is a pure function of (problem, config, seed): samples are drawn
by rejection over the state box, each feasible sample is classified by which
input bound is active at the first step of its open-loop optimizer, and the
classic and reuse controllers are then compared on identical initial states
(and, in the disturbed study, on identical disturbance sequences).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control import (CLASSIC, EVERY_RESOLVE, FIRST_STEP_ONLY, REACHED_TERMINAL,
                      REUSE_SATURATED, ClosedLoopResult, ControllerMode,
                      result_to_csv, run_closed_loop)
from .model import (DisturbanceBounds, DynamicsModel, disturbance_sequence,
                    model_from_descriptor)
from .ocp import OcpSpec, in_terminal_set, spec_from_json, spec_to_json, stage_cost
from .solver import OPTIMAL, NlpSolution, SolverConfig, solve

logger = logging.getLogger(__name__)

CLASS_LOWER = "lower"
CLASS_UPPER = "upper"
CLASS_OTHER = "other"
CLASS_INFEASIBLE = "infeasible"
CLASS_TERMINAL = "terminal"

GROUP_LOWER = "lower_saturated"
GROUP_UPPER = "upper_saturated"
GROUP_ALL = "all"

_DESCENT_SLACK = 1e-6
_DISTURBANCE_TAG = 2


@dataclass(frozen=True)
class ClassifiedSample:
    x0: np.ndarray
    label: str
    solution: Optional[NlpSolution]

    def __post_init__(self):
        if self.label not in (CLASS_LOWER, CLASS_UPPER, CLASS_OTHER, CLASS_INFEASIBLE):
            raise ValueError(f"unknown sample class {self.label!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    n_samples: int = 5000
    rng_seed: int = 0
    disturbed: bool = True
    disturbance_bounds: Optional[DisturbanceBounds] = None
    output_dir: str = "out"
    max_steps: int = 200
    jobs: int = 1
    reuse_scope: str = FIRST_STEP_ONLY
    grid_resolution: int = 61
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.reuse_scope not in (FIRST_STEP_ONLY, EVERY_RESOLVE):
            raise ValueError(f"unknown reuse scope {self.reuse_scope!r}")


@dataclass(frozen=True)
class BatchStats:
    group: str
    n_samples: int
    n_excluded_infeasible: int
    mean_nlp_classic: float
    mean_nlp_heuristic: float
    nlp_saving_pct: float
    mean_cost_classic: float
    mean_cost_heuristic: float
    cost_delta_pct: float
    descent_checks: int = 0
    descent_violations: int = 0


def resolve_disturbance_bounds(cfg: ExperimentConfig, spec: OcpSpec) -> DisturbanceBounds:
    if cfg.disturbance_bounds is not None:
        return cfg.disturbance_bounds
    return DisturbanceBounds(np.full(spec.n, -0.01), np.full(spec.n, 0.01))


def _classify_solution(sol: NlpSolution) -> str:
    low = sol.active_set.input_lower[0]
    up = sol.active_set.input_upper[0]
    if low.all():
        return CLASS_LOWER
    if up.all():
        return CLASS_UPPER
    return CLASS_OTHER


def sample_feasible(spec: OcpSpec, model: DynamicsModel, cfg: ExperimentConfig,
                    n: int, rng: np.random.Generator) -> list:
    """Rejection-sample n feasible initial states, classifying each by the
    active input bounds at step 0 of its open-loop solution.

    Aborts when fewer than 1% of a 10*n-draw window are feasible, which
    catches specs whose feasible set is (nearly) empty.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    window = 10 * n
    draws_in_window = 0
    feasible_in_window = 0
    while len(out) < n:
        x0 = rng.uniform(spec.x_lower, spec.x_upper)
        draws_in_window += 1
        # one solve decides both membership (check_feasible is defined as
        # solve status == optimal) and the classification
        sol = solve(spec, model, x0, cfg.solver)
        if sol.status == OPTIMAL:
            feasible_in_window += 1
            out.append(ClassifiedSample(x0=x0, label=_classify_solution(sol),
                                        solution=sol))
        if draws_in_window >= window:
            if feasible_in_window < 0.01 * draws_in_window:
                raise RuntimeError(
                    f"sampling stalled: {feasible_in_window}/{draws_in_window} draws "
                    f"feasible (<1%); is the feasible set empty?")
            draws_in_window = 0
            feasible_in_window = 0
    return out


# --- per-sample pair runs -------------------------------------------------

_WORKER: dict = {}


def _worker_payload(spec: OcpSpec, model: DynamicsModel, cfg: ExperimentConfig):
    bounds = resolve_disturbance_bounds(cfg, spec)
    return {
        "spec": spec_to_json(spec),
        "model": model.descriptor,
        "solver": vars(cfg.solver).copy(),
        "max_steps": cfg.max_steps,
        "reuse_scope": cfg.reuse_scope,
        "seed": cfg.rng_seed,
        "w_lower": bounds.lower.tolist(),
        "w_upper": bounds.upper.tolist(),
    }


def _init_worker(payload: dict) -> None:
    _WORKER["spec"] = spec_from_json(payload["spec"])
    _WORKER["model"] = model_from_descriptor(payload["model"])
    _WORKER["solver"] = SolverConfig(**payload["solver"])
    _WORKER["max_steps"] = payload["max_steps"]
    _WORKER["reuse_scope"] = payload["reuse_scope"]
    _WORKER["seed"] = payload["seed"]
    _WORKER["bounds"] = DisturbanceBounds(np.asarray(payload["w_lower"]),
                                          np.asarray(payload["w_upper"]))


def _descent_counts(result: ClosedLoopResult, spec: OcpSpec):
    """Count V(x+) <= V(x) - stage_cost + slack over consecutive solved steps."""
    checks = 0
    violations = []
    vals = result.solve_values
    for i in range(len(vals) - 1):
        if not (result.nlp_solved[i] and result.nlp_solved[i + 1]):
            continue
        checks += 1
        bound = vals[i] - stage_cost(spec, result.states[i], result.inputs[i])
        if vals[i + 1] > bound + _DESCENT_SLACK:
            violations.append((i, vals[i + 1] - bound))
    return checks, violations


def _result_fields(tag: str, res: ClosedLoopResult, spec: OcpSpec) -> dict:
    return {
        f"status_{tag}": res.status,
        f"k_{tag}": res.k_hat if res.k_hat is not None else "",
        f"nlps_{tag}": res.n_nlp_solved,
        f"cost_{tag}": res.V_hat if res.V_hat is not None else "",
    }


def _run_pair_task(task: tuple) -> dict:
    """Run the classic/heuristic pair for one sample; executed inline or in a
    worker process (state in _WORKER either way)."""
    index, x0, label, solution, scenario = task
    spec = _WORKER["spec"]
    model = _WORKER["model"]
    scfg = _WORKER["solver"]
    max_steps = _WORKER["max_steps"]
    mode_c = ControllerMode(CLASSIC, _WORKER["reuse_scope"])
    mode_h = ControllerMode(REUSE_SATURATED, _WORKER["reuse_scope"])
    if scenario == "disturbed":
        wrng = np.random.default_rng(
            np.random.SeedSequence((_WORKER["seed"], _DISTURBANCE_TAG, index)))
        wseq = disturbance_sequence(_WORKER["bounds"], wrng, max_steps)
    else:
        wseq = None
    res_c = run_closed_loop(model, spec, scfg, x0, mode_c, disturbances=wseq,
                            max_steps=max_steps, first_solution=solution)
    # With first-step-only scope an unsaturated first solve disarms reuse, so
    # the heuristic run is bit-identical to classic and need not be repeated.
    skip_heuristic = (label == CLASS_OTHER
                      and _WORKER["reuse_scope"] == FIRST_STEP_ONLY)
    if skip_heuristic:
        res_h = res_c
    else:
        res_h = run_closed_loop(model, spec, scfg, x0, mode_h, disturbances=wseq,
                                max_steps=max_steps, first_solution=solution)
    window_len = res_h.windows[0][1].length if res_h.windows else 0
    excluded = (res_c.status != REACHED_TERMINAL or res_h.status != REACHED_TERMINAL)
    if scenario == "nominal" and wseq is None:
        checks, violations = _descent_counts(res_c, spec)
    else:
        checks, violations = 0, []
    rec = {"scenario": scenario, "index": index, "label": label,
           "window_length": window_len, "excluded": excluded,
           "descent_checks": checks, "descent_violations": len(violations)}
    for i, v in enumerate(x0):
        rec[f"x{i + 1}"] = float(v)
    rec.update(_result_fields("classic", res_c, spec))
    rec.update(_result_fields("heuristic", res_h, spec))
    rec["_violations"] = violations
    return rec


def _run_pairs(samples, spec, model, cfg: ExperimentConfig, scenario: str,
               indices=None) -> list:
    payload = _worker_payload(spec, model, cfg)
    if indices is None:
        indices = range(len(samples))
    tasks = [(i, samples[i].x0, samples[i].label, samples[i].solution, scenario)
             for i in indices]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker,
                                 initargs=(payload,)) as pool:
            records = list(pool.map(_run_pair_task, tasks, chunksize=16))
    else:
        _init_worker(payload)
        records = [_run_pair_task(t) for t in tasks]
    records.sort(key=lambda r: r["index"])
    for rec in records:
        for step_idx, gap in rec.pop("_violations"):
            logger.warning("descent violation: sample %d step %d exceeds the "
                           "expected decrease by %.3e", rec["index"], step_idx, gap)
    return records


def _safe_pct(base: float, delta: float) -> float:
    return 100.0 * delta / base if base else math.nan


def _group_stats(group: str, rows: list, n_excluded: int,
                 descent=(0, 0)) -> BatchStats:
    n = len(rows)
    if n == 0:
        nan = math.nan
        return BatchStats(group, 0, n_excluded, nan, nan, nan, nan, nan, nan,
                          descent[0], descent[1])
    mc = sum(r["nlps_classic"] for r in rows) / n
    mh = sum(r["nlps_heuristic"] for r in rows) / n
    cc = sum(r["cost_classic"] for r in rows) / n
    ch = sum(r["cost_heuristic"] for r in rows) / n
    return BatchStats(group=group, n_samples=n, n_excluded_infeasible=n_excluded,
                      mean_nlp_classic=mc, mean_nlp_heuristic=mh,
                      nlp_saving_pct=_safe_pct(mc, mc - mh),
                      mean_cost_classic=cc, mean_cost_heuristic=ch,
                      cost_delta_pct=_safe_pct(cc, ch - cc),
                      descent_checks=descent[0], descent_violations=descent[1])


def _aggregate(records: list, groups: dict) -> dict:
    """groups maps group label -> predicate over sample class labels."""
    stats = {}
    for gname, pred in groups.items():
        rows = [r for r in records if pred(r["label"]) and not r["excluded"]]
        nexc = sum(1 for r in records if pred(r["label"]) and r["excluded"])
        checks = sum(r["descent_checks"] for r in rows)
        viols = sum(r["descent_violations"] for r in rows)
        stats[gname] = _group_stats(gname, rows, nexc, (checks, viols))
    return stats


def run_batch(samples: list, spec: OcpSpec, model: DynamicsModel,
              cfg: ExperimentConfig):
    """Nominal comparison over every sample; returns ({group: BatchStats},
    per-sample records).  Saturated groups back the lower/upper tables; the
    'all' group carries the whole-set saving and the descent accounting."""
    records = _run_pairs(samples, spec, model, cfg, "nominal")
    stats = _aggregate(records, {
        GROUP_LOWER: lambda c: c == CLASS_LOWER,
        GROUP_UPPER: lambda c: c == CLASS_UPPER,
        GROUP_ALL: lambda c: True,
    })
    return stats, records


def run_disturbed_batch(samples: list, spec: OcpSpec, model: DynamicsModel,
                        cfg: ExperimentConfig):
    """Disturbed comparison over the saturated samples only, replaying one
    pre-generated disturbance sequence per sample across both modes.  Pairs
    that fail to reach the terminal set in either mode are excluded from the
    averages and counted."""
    indices = [i for i, s in enumerate(samples)
               if s.label in (CLASS_LOWER, CLASS_UPPER)]
    records = _run_pairs(samples, spec, model, cfg, "disturbed", indices=indices)
    stats = _aggregate(records, {
        GROUP_LOWER: lambda c: c == CLASS_LOWER,
        GROUP_UPPER: lambda c: c == CLASS_UPPER,
    })
    return stats, records


def approximate_feasible_boundary(spec: OcpSpec, model: DynamicsModel,
                                  cfg: ExperimentConfig, grid_resolution: int):
    """Classify a regular grid over the state box into
    terminal / lower / upper / other / infeasible.  Two-state problems only."""
    if spec.n != 2:
        raise ValueError("grid classification is only implemented for n == 2")
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be >= 16")
    xs = np.linspace(spec.x_lower[0], spec.x_upper[0], grid_resolution)
    ys = np.linspace(spec.x_lower[1], spec.x_upper[1], grid_resolution)
    labels = np.empty((grid_resolution, grid_resolution), dtype=object)
    for i, xv in enumerate(xs):
        for j, yv in enumerate(ys):
            x0 = np.array([xv, yv])
            if in_terminal_set(spec, x0):
                labels[i, j] = CLASS_TERMINAL
            else:
                sol = solve(spec, model, x0, cfg.solver)
                if sol.status == OPTIMAL:
                    labels[i, j] = _classify_solution(sol)
                else:
                    labels[i, j] = CLASS_INFEASIBLE
    return {"x1": xs, "x2": ys, "labels": labels}


# --- report emission --------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _write_csv(path: str, header: list, rows: list) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"could not write report {path}: {exc}") from exc


def write_samples_csv(samples: list, path: str) -> None:
    n = len(samples[0].x0) if samples else 0
    header = ["index", *[f"x{i + 1}" for i in range(n)], "label"]
    rows = [[i, *map(float, s.x0), s.label] for i, s in enumerate(samples)]
    _write_csv(path, header, rows)


def read_samples_csv(path: str) -> list:
    """Reload classified samples; solves are not persisted, so solution=None."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return []
    xcols = sorted((c for c in rows[0] if c.startswith("x")), key=lambda c: int(c[1:]))
    return [ClassifiedSample(x0=np.array([float(r[c]) for c in xcols]),
                             label=r["label"], solution=None) for r in rows]


def write_table1(samples: list, path: str) -> None:
    counts = {CLASS_LOWER: 0, CLASS_UPPER: 0, CLASS_OTHER: 0}
    for s in samples:
        counts[s.label] += 1
    total = max(len(samples), 1)
    rows = [[label, counts[label], 100.0 * counts[label] / total]
            for label in (CLASS_LOWER, CLASS_UPPER, CLASS_OTHER)]
    _write_csv(path, ["class", "count", "percent"], rows)


def _write_comparison_table(st: BatchStats, path: str) -> None:
    rows = [
        ["nlps_solved", st.mean_nlp_classic, st.mean_nlp_heuristic,
         st.nlp_saving_pct],
        ["cost_performance", st.mean_cost_classic, st.mean_cost_heuristic,
         st.cost_delta_pct],
    ]
    _write_csv(path, ["metric", "classic", "heuristic", "percent"], rows)


_RUN_COLUMNS = ["scenario", "index", "x1", "x2", "label", "window_length",
                "excluded", "status_classic", "k_classic", "nlps_classic",
                "cost_classic", "status_heuristic", "k_heuristic",
                "nlps_heuristic", "cost_heuristic", "descent_checks",
                "descent_violations"]


def write_runs_csv(records: list, path: str) -> None:
    cols = list(_RUN_COLUMNS)
    if records:
        xcols = sorted((c for c in records[0] if c[0] == "x" and c[1:].isdigit()),
                       key=lambda c: int(c[1:]))
        cols = cols[:2] + xcols + cols[4:]
    rows = [[r.get(c, "") for c in cols] for r in records]
    _write_csv(path, cols, rows)


def read_runs_csv(path: str) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        raw = list(csv.DictReader(fh))
    out = []
    for r in raw:
        rec = dict(r)
        rec["index"] = int(r["index"])
        rec["excluded"] = r["excluded"] == "true"
        for key in ("nlps_classic", "nlps_heuristic", "descent_checks",
                    "descent_violations", "window_length"):
            rec[key] = int(r[key])
        for key in ("cost_classic", "cost_heuristic"):
            rec[key] = float(r[key]) if r[key] != "" else ""
        for key in ("k_classic", "k_heuristic"):
            rec[key] = int(r[key]) if r[key] != "" else ""
        out.append(rec)
    return out


def write_grid_csv(grid: dict, path: str) -> None:
    rows = []
    for i, xv in enumerate(grid["x1"]):
        for j, yv in enumerate(grid["x2"]):
            rows.append([float(xv), float(yv), grid["labels"][i, j]])
    _write_csv(path, ["x1", "x2", "label"], rows)


def read_grid_csv(path: str) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    xs = sorted({float(r["x1"]) for r in rows})
    ys = sorted({float(r["x2"]) for r in rows})
    labels = np.empty((len(xs), len(ys)), dtype=object)
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    for r in rows:
        labels[xi[float(r["x1"])], yi[float(r["x2"])]] = r["label"]
    return {"x1": np.array(xs), "x2": np.array(ys), "labels": labels}


def config_hash(spec: OcpSpec, model: DynamicsModel, cfg: ExperimentConfig) -> str:
    bounds = resolve_disturbance_bounds(cfg, spec)
    canon = {
        "spec": spec_to_json(spec),
        "model": model.descriptor,
        "solver": {k: v for k, v in vars(cfg.solver).items() if k != "trace_path"},
        "n_samples": cfg.n_samples,
        "rng_seed": cfg.rng_seed,
        "disturbed": cfg.disturbed,
        "w_lower": bounds.lower.tolist(),
        "w_upper": bounds.upper.tolist(),
        "max_steps": cfg.max_steps,
        "reuse_scope": cfg.reuse_scope,
        "grid_resolution": cfg.grid_resolution,
    }
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def select_exemplar(records: list) -> Optional[int]:
    """Pick the sample index used for the trajectory figure: prefer a
    lower-saturated run whose window skipped >= 3 solves and whose reuse run
    arrived at most one step after classic; fall back to any windowed run."""
    def ok(r, min_window):
        return (not r["excluded"] and r["scenario"] == "nominal"
                and r["window_length"] >= min_window
                and r["status_classic"] == REACHED_TERMINAL
                and r["status_heuristic"] == REACHED_TERMINAL
                and r["k_heuristic"] <= r["k_classic"] + 1)

    for min_window, want_label in ((3, CLASS_LOWER), (3, CLASS_UPPER),
                                   (1, CLASS_LOWER), (1, CLASS_UPPER)):
        for r in records:
            if r["label"] == want_label and ok(r, min_window):
                return r["index"]
    return None


# --- SVG rendering (hand-rolled, no charting dependency) --------------------

_SVG_W = 640
_SVG_H = 640
_SVG_PAD = 50.0
_COLORS = {
    CLASS_LOWER: "#1f77b4",
    CLASS_UPPER: "#d62728",
    CLASS_OTHER: "#333333",
    CLASS_TERMINAL: "#2ca02c",
    CLASS_INFEASIBLE: "#e8e8e8",
}


def _pix(spec: OcpSpec, x: float, y: float) -> tuple:
    sx = (x - spec.x_lower[0]) / (spec.x_upper[0] - spec.x_lower[0])
    sy = (y - spec.x_lower[1]) / (spec.x_upper[1] - spec.x_lower[1])
    px = _SVG_PAD + sx * (_SVG_W - 2 * _SVG_PAD)
    py = _SVG_H - _SVG_PAD - sy * (_SVG_H - 2 * _SVG_PAD)
    return px, py


def _svg_open(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
        f'height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]


def _svg_axes(spec: OcpSpec) -> list:
    x0, y0 = _pix(spec, spec.x_lower[0], spec.x_lower[1])
    x1, y1 = _pix(spec, spec.x_upper[0], spec.x_upper[1])
    parts = [f'<rect x="{x0:.2f}" y="{y1:.2f}" width="{x1 - x0:.2f}" '
             f'height="{y0 - y1:.2f}" fill="none" stroke="black"/>']
    for t in np.linspace(spec.x_lower[0], spec.x_upper[0], 5):
        px, py = _pix(spec, t, spec.x_lower[1])
        parts.append(f'<text x="{px:.2f}" y="{py + 18:.2f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{t:g}</text>')
    for t in np.linspace(spec.x_lower[1], spec.x_upper[1], 5):
        px, py = _pix(spec, spec.x_lower[0], t)
        parts.append(f'<text x="{px - 8:.2f}" y="{py + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{t:g}</text>')
    parts.append(f'<text x="{_SVG_W / 2:.1f}" y="{_SVG_H - 8}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">x1</text>')
    parts.append(f'<text x="14" y="{_SVG_H / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 14 {_SVG_H / 2:.1f})">x2</text>')
    return parts


def _terminal_ellipse_points(spec: OcpSpec, n_pts: int = 181) -> np.ndarray:
    vals, vecs = np.linalg.eigh(spec.P)
    ts = np.linspace(0.0, 2 * np.pi, n_pts)
    circ = np.stack([np.cos(ts), np.sin(ts)])
    pts = vecs @ (np.sqrt(spec.alpha / vals)[:, None] * circ)
    return pts.T


def _svg_ellipse(spec: OcpSpec, stroke: str = "#2ca02c") -> str:
    pts = _terminal_ellipse_points(spec)
    coords = " ".join("{:.2f},{:.2f}".format(*_pix(spec, x, y)) for x, y in pts)
    return (f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="1.5"/>')


def _svg_legend(entries: list, x: float = 60.0, y: float = 44.0) -> list:
    parts = []
    for i, (color, label) in enumerate(entries):
        yy = y + 16 * i
        parts.append(f'<rect x="{x:.1f}" y="{yy - 9:.1f}" width="10" height="10" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{x + 15:.1f}" y="{yy:.1f}" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
    return parts


def render_samples_svg(samples: list, spec: OcpSpec, path: str) -> None:
    parts = _svg_open("feasible initial states by first-input saturation")
    parts += _svg_axes(spec)
    for s in samples:
        px, py = _pix(spec, s.x0[0], s.x0[1])
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2" '
                     f'fill="{_COLORS[s.label]}"/>')
    parts.append(_svg_ellipse(spec))
    parts += _svg_legend([(_COLORS[CLASS_LOWER], "lower bound active"),
                          (_COLORS[CLASS_UPPER], "upper bound active"),
                          (_COLORS[CLASS_OTHER], "unsaturated"),
                          ("#2ca02c", "terminal set boundary")])
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _svg_trajectory(spec: OcpSpec, states: np.ndarray, color: str,
                    marker: str) -> list:
    coords = " ".join("{:.2f},{:.2f}".format(*_pix(spec, x, y))
                      for x, y in states[:, :2])
    parts = [f'<polyline points="{coords}" fill="none" stroke="{color}" '
             f'stroke-width="1.5"/>']
    for x, y in states[:, :2]:
        px, py = _pix(spec, x, y)
        if marker == "square":
            parts.append(f'<rect x="{px - 2.5:.2f}" y="{py - 2.5:.2f}" width="5" '
                         f'height="5" fill="{color}"/>')
        else:
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" '
                         f'fill="{color}"/>')
    return parts


def render_grid_svg(grid: dict, spec: OcpSpec, path: str,
                    trajectories: Optional[dict] = None) -> None:
    """Class-colored cells over the state box, optionally overlaying the
    classic and reuse exemplar trajectories."""
    parts = _svg_open("feasible-set classes and exemplar trajectories")
    xs, ys = grid["x1"], grid["x2"]
    half_w = (xs[1] - xs[0]) / 2 if len(xs) > 1 else 0.05
    half_h = (ys[1] - ys[0]) / 2 if len(ys) > 1 else 0.05
    for i, xv in enumerate(xs):
        for j, yv in enumerate(ys):
            label = grid["labels"][i, j]
            if label == CLASS_INFEASIBLE:
                continue
            x0p, y0p = _pix(spec, xv - half_w, yv + half_h)
            x1p, y1p = _pix(spec, xv + half_w, yv - half_h)
            parts.append(f'<rect x="{x0p:.2f}" y="{y0p:.2f}" '
                         f'width="{x1p - x0p:.2f}" height="{y1p - y0p:.2f}" '
                         f'fill="{_COLORS[label]}" fill-opacity="0.45"/>')
    parts += _svg_axes(spec)
    parts.append(_svg_ellipse(spec, stroke="#1a6b1a"))
    legend = [(_COLORS[CLASS_LOWER], "lower bound active"),
              (_COLORS[CLASS_UPPER], "upper bound active"),
              (_COLORS[CLASS_OTHER], "unsaturated"),
              (_COLORS[CLASS_TERMINAL], "terminal set")]
    if trajectories:
        if "classic" in trajectories:
            parts += _svg_trajectory(spec, trajectories["classic"], "#000000",
                                     "circle")
            legend.append(("#000000", "classic trajectory"))
        if "reuse" in trajectories:
            parts += _svg_trajectory(spec, trajectories["reuse"], "#ff7f0e",
                                     "square")
            legend.append(("#ff7f0e", "reuse trajectory"))
    parts += _svg_legend(legend)
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def emit_reports(stats: dict, records: dict, grid: Optional[dict],
                 output_dir: str, *, samples: Optional[list] = None,
                 exemplar: Optional[dict] = None, spec: Optional[OcpSpec] = None,
                 manifest_extra: Optional[dict] = None) -> list:
    """Write the full report set; returns the list of paths written.

    ``stats``/``records`` are keyed by scenario ("nominal", "disturbed").
    Optional inputs extend the output: samples add table1/samples.csv/
    figure1.svg, a grid adds grid.csv/figure3.svg, an exemplar (dict with
    ClosedLoopResults under "classic"/"reuse") adds figure2 CSVs.
    """
    os.makedirs(output_dir, exist_ok=True)
    paths = []

    def out(name: str) -> str:
        p = os.path.join(output_dir, name)
        paths.append(p)
        return p

    if samples is not None:
        write_table1(samples, out("table1.csv"))
        write_samples_csv(samples, out("samples.csv"))
        if spec is not None and spec.n == 2:
            render_samples_svg(samples, spec, out("figure1.svg"))
    nominal = stats.get("nominal")
    if nominal:
        _write_comparison_table(nominal[GROUP_LOWER], out("table2.csv"))
        _write_comparison_table(nominal[GROUP_UPPER], out("table3.csv"))
    disturbed = stats.get("disturbed")
    if disturbed:
        _write_comparison_table(disturbed[GROUP_LOWER], out("table4.csv"))
        _write_comparison_table(disturbed[GROUP_UPPER], out("table5.csv"))
    all_records = [r for scen in ("nominal", "disturbed")
                   for r in records.get(scen, []) or []]
    write_runs_csv(all_records, out("runs.csv"))
    if grid is not None:
        write_grid_csv(grid, out("grid.csv"))
    if exemplar is not None and spec is not None:
        result_to_csv(exemplar["reuse"], spec, out("figure2.csv"))
        result_to_csv(exemplar["classic"], spec, out("figure2_classic.csv"))
    if grid is not None and spec is not None:
        trajs = None
        if exemplar is not None:
            trajs = {"classic": exemplar["classic"].states,
                     "reuse": exemplar["reuse"].states}
        render_grid_svg(grid, spec, out("figure3.svg"), trajectories=trajs)
    manifest = {"version": _package_version()}
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out("manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def _package_version() -> str:
    from . import __version__
    return __version__


def _stats_json(st: BatchStats) -> dict:
    out = {}
    for k, v in vars(st).items():
        if isinstance(v, float) and not math.isfinite(v):
            v = None
        out[k] = v
    return out


def run_full_pipeline(spec: OcpSpec, model: DynamicsModel,
                      cfg: ExperimentConfig) -> dict:
    """sample -> nominal batch -> disturbed batch -> grid -> reports.

    Returns a summary dict with the stats objects and written paths; this is
    what the batch command executes.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    samples = sample_feasible(spec, model, cfg, cfg.n_samples, rng)
    stats_nom, recs_nom = run_batch(samples, spec, model, cfg)
    stats = {"nominal": stats_nom}
    records = {"nominal": recs_nom}
    if cfg.disturbed:
        stats_dis, recs_dis = run_disturbed_batch(samples, spec, model, cfg)
        stats["disturbed"] = stats_dis
        records["disturbed"] = recs_dis
    grid = None
    if spec.n == 2:
        grid = approximate_feasible_boundary(spec, model, cfg,
                                             cfg.grid_resolution)
    exemplar = None
    ex_idx = select_exemplar(recs_nom)
    if ex_idx is not None:
        s = samples[ex_idx]
        mode_c = ControllerMode(CLASSIC, cfg.reuse_scope)
        mode_h = ControllerMode(REUSE_SATURATED, cfg.reuse_scope)
        exemplar = {
            "classic": run_closed_loop(model, spec, cfg.solver, s.x0, mode_c,
                                       max_steps=cfg.max_steps,
                                       first_solution=s.solution),
            "reuse": run_closed_loop(model, spec, cfg.solver, s.x0, mode_h,
                                     max_steps=cfg.max_steps,
                                     first_solution=s.solution),
        }
    class_counts = {c: sum(1 for s in samples if s.label == c)
                    for c in (CLASS_LOWER, CLASS_UPPER, CLASS_OTHER)}
    manifest_extra = {
        "seed": cfg.rng_seed,
        "config_hash": config_hash(spec, model, cfg),
        "n_samples": cfg.n_samples,
        "class_counts": class_counts,
        "exemplar_index": ex_idx,
        "stats": {scen: {g: _stats_json(st) for g, st in by_group.items()}
                  for scen, by_group in stats.items()},
    }
    paths = emit_reports(stats, records, grid, cfg.output_dir, samples=samples,
                         exemplar=exemplar, spec=spec,
                         manifest_extra=manifest_extra)
    return {"samples": samples, "stats": stats, "records": records,
            "grid": grid, "exemplar": exemplar, "paths": paths}
