"""Closed-loop receding-horizon control.

Two controller variants share one loop: classic NMPC (solve every step,
apply the first optimal input) and saturated-prefix reuse (after a solve
whose optimizer starts with a run of inputs pinned at one bound, apply those
bound values open loop instead of re-solving, then resume).  Terminal-set
membership is checked before every input application — including inside a
reuse window — and the loop stops at the first entry.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import DynamicsModel, _check_vec, step, step_disturbed
from .ocp import OcpSpec, in_terminal_set, stage_cost
from .solver import OPTIMAL, ActiveSet, NlpSolution, SolverConfig, solve

CLASSIC = "classic"
REUSE_SATURATED = "reuse_saturated"
FIRST_STEP_ONLY = "first_step_only"
EVERY_RESOLVE = "every_resolve"

REACHED_TERMINAL = "reached_terminal"
MAX_STEPS = "max_steps"
INFEASIBLE = "infeasible"

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class ControllerMode:
    variant: str = CLASSIC
    reuse_scope: str = FIRST_STEP_ONLY

    def __post_init__(self):
        if self.variant not in (CLASSIC, REUSE_SATURATED):
            raise ValueError(f"unknown controller variant {self.variant!r}")
        if self.reuse_scope not in (FIRST_STEP_ONLY, EVERY_RESOLVE):
            raise ValueError(f"unknown reuse scope {self.reuse_scope!r}")


@dataclass(frozen=True)
class ReuseWindow:
    """Saturated prefix found in an open-loop optimizer: per-channel bound
    side at step 0 and the number of future steps (>= 1) to reuse."""

    bound_side: tuple
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("a reuse window needs at least one future step")
        if any(s not in (LOWER, UPPER) for s in self.bound_side):
            raise ValueError(f"bound sides must be lower/upper, got {self.bound_side}")


@dataclass
class ClosedLoopResult:
    states: np.ndarray                 # (k+1, n)
    inputs: np.ndarray                 # (k, m)
    nlp_solved: list
    status: str
    k_hat: Optional[int]               # first index with x in the terminal set
    V_hat: Optional[float]             # accumulated stage cost of applied steps
    infeasible_at: Optional[int] = None
    solve_values: list = field(default_factory=list, repr=False)
    solve_kkt: list = field(default_factory=list, repr=False)
    windows: list = field(default_factory=list, repr=False)

    @property
    def n_nlp_solved(self) -> int:
        return sum(1 for f in self.nlp_solved if f)


def saturated_prefix(active: ActiveSet, spec: OcpSpec) -> Optional[ReuseWindow]:
    """The reuse window implied by an active set, or None.

    Requires every input channel saturated at step 0; the per-channel window
    is the maximal consecutive run from step 1 at the same bound, and the
    overall length is the minimum over channels.  No window when any channel
    is unsaturated at step 0 or unsaturated already at step 1.
    """
    low = active.input_lower
    up = active.input_upper
    sides = []
    for j in range(active.m):
        if low[0, j]:
            sides.append(LOWER)
        elif up[0, j]:
            sides.append(UPPER)
        else:
            return None
    length = None
    for j, side in enumerate(sides):
        col = low[:, j] if side == LOWER else up[:, j]
        L = 0
        for k in range(1, active.N):
            if col[k]:
                L += 1
            else:
                break
        if L == 0:
            return None
        length = L if length is None else min(length, L)
    return ReuseWindow(bound_side=tuple(sides), length=int(length))


def _bound_vector(spec: OcpSpec, window: ReuseWindow) -> np.ndarray:
    u = np.empty(spec.m)
    for j, side in enumerate(window.bound_side):
        u[j] = spec.u_lower[j] if side == LOWER else spec.u_upper[j]
    return u


def run_closed_loop(model: DynamicsModel, spec: OcpSpec, cfg: SolverConfig, x0,
                    mode: ControllerMode, disturbances: Optional[np.ndarray] = None,
                    max_steps: int = 200,
                    first_solution: Optional[NlpSolution] = None) -> ClosedLoopResult:
    """Run one closed loop from x0 until terminal-set entry.

    ``disturbances`` is a pre-generated (steps, n) sequence added to each
    transition; it must cover every step actually taken.  ``first_solution``
    may carry a cached optimal solution for x0 (it must come from the same
    spec/config) and saves the k=0 solve.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    x = _check_vec(x0, spec.n, "x0")
    states = [x.copy()]
    inputs: list = []
    flags: list = []
    svals: list = []
    skkt: list = []
    windows: list = []
    pending: list = []
    armed = mode.variant == REUSE_SATURATED
    warm = None
    status = None
    infeasible_at = None
    k = 0
    while True:
        if in_terminal_set(spec, x):
            status = REACHED_TERMINAL
            break
        if len(inputs) >= max_steps:
            status = MAX_STEPS
            break
        if pending:
            u = pending.pop(0)
            solved = False
            val = kkt = None
        else:
            if k == 0 and first_solution is not None and first_solution.status == OPTIMAL:
                sol = first_solution
            else:
                sol = solve(spec, model, x, cfg, warm=warm)
            if sol.status != OPTIMAL:
                status = INFEASIBLE
                infeasible_at = k
                break
            u = sol.U_star[:spec.m].copy()
            solved = True
            val = sol.V_star
            kkt = sol.kkt_residual
            shift = 1
            if armed:
                win = saturated_prefix(sol.active_set, spec)
                if win is not None:
                    ub = _bound_vector(spec, win)
                    pending = [ub.copy() for _ in range(win.length)]
                    windows.append((k, win))
                    shift = win.length + 1
                if mode.reuse_scope == FIRST_STEP_ONLY:
                    armed = False
            # warm start for the next solve: drop the inputs that will have
            # been applied by then, pad with zeros
            warm = np.concatenate([sol.U_star[shift * spec.m:],
                                   np.zeros(shift * spec.m)])
        if disturbances is not None:
            if k >= len(disturbances):
                raise ValueError("disturbance sequence shorter than the run")
            x_next = step_disturbed(model, x, u, disturbances[k])
        else:
            x_next = step(model, x, u)
        inputs.append(u)
        flags.append(solved)
        svals.append(val)
        skkt.append(kkt)
        states.append(x_next)
        x = x_next
        k += 1
        if np.any(x < spec.x_lower) or np.any(x > spec.x_upper):
            status = INFEASIBLE
            infeasible_at = k
            break

    states_arr = np.asarray(states)
    inputs_arr = np.asarray(inputs).reshape(len(inputs), spec.m)
    if status == REACHED_TERMINAL:
        k_hat = len(inputs)
        v_hat = 0.0
        for i in range(k_hat):
            v_hat += stage_cost(spec, states_arr[i], inputs_arr[i])
    else:
        k_hat = None
        v_hat = None
    return ClosedLoopResult(states=states_arr, inputs=inputs_arr, nlp_solved=flags,
                            status=status, k_hat=k_hat, V_hat=v_hat,
                            infeasible_at=infeasible_at, solve_values=svals,
                            solve_kkt=skkt, windows=windows)


def cost_performance(result: ClosedLoopResult, spec: OcpSpec) -> Optional[float]:
    """Accumulated stage cost over the applied steps, recomputed from the
    stored trajectory; None for runs that did not reach the terminal set."""
    if result.status != REACHED_TERMINAL:
        return None
    total = 0.0
    for i in range(len(result.inputs)):
        total += stage_cost(spec, result.states[i], result.inputs[i])
    return total


# --- CSV interface ------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def result_to_csv(result: ClosedLoopResult, spec: OcpSpec, path: str) -> None:
    """One row per state; the final row has no input.  Benchmark-shaped
    problems produce exactly the columns k, x1, x2, u, nlp_solved, in_terminal."""
    n = result.states.shape[1]
    m = result.inputs.shape[1] if len(result.inputs) else spec.m
    xcols = [f"x{i + 1}" for i in range(n)]
    ucols = ["u"] if m == 1 else [f"u{j + 1}" for j in range(m)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", *xcols, *ucols, "nlp_solved", "in_terminal"])
        for i, xrow in enumerate(result.states):
            term = "true" if in_terminal_set(spec, xrow) else "false"
            if i < len(result.inputs):
                urow = [_fmt(v) for v in result.inputs[i]]
                solved = "true" if result.nlp_solved[i] else "false"
            else:
                urow = [""] * m
                solved = ""
            w.writerow([i, *(_fmt(v) for v in xrow), *urow, solved, term])


def read_trajectory_csv(path: str) -> dict:
    """Parse a trajectory CSV back into arrays (inverse of result_to_csv)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"empty trajectory file: {path}")
    xcols = [c for c in rows[0] if c.startswith("x")]
    ucols = [c for c in rows[0] if c == "u" or (c.startswith("u") and c[1:].isdigit())]
    states = np.array([[float(r[c]) for c in xcols] for r in rows])
    inputs = np.array([[float(r[c]) for c in ucols] for r in rows if r[ucols[0]] != ""])
    solved = [r["nlp_solved"] == "true" for r in rows if r["nlp_solved"] != ""]
    in_term = [r["in_terminal"] == "true" for r in rows]
    return {"states": states, "inputs": inputs.reshape(-1, len(ucols)),
            "nlp_solved": solved, "in_terminal": in_term}
