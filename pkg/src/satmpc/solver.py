"""NLP solver for the single-shooting horizon problem.

Pipeline per solve:

1. reject initial states outside the state box outright;
2. feasibility restoration — spectral projected gradient on the sum of
   squared constraint violations over the input box, seeded by a clipped
   discrete-LQR rollout (and zeros as a fallback start); stalling above the
   feasibility tolerance declares the state infeasible;
3. descent — scipy's SLSQP on the reduced problem (input box as native
   bounds, state/terminal rows as inequalities with analytic Jacobians) from
   a small deterministic set of starts;
4. refinement — an active-set Newton polish using the exact Hessian of the
   Lagrangian, applied when the raw iterate misses the KKT tolerances;
5. verdict — multipliers are recovered by nonnegative least squares and the
   solution is accepted as Optimal only if stationarity, complementarity and
   feasibility all pass the configured tolerances.  The best accepted start
   by objective value wins.

Status is decided by our own KKT measurements, never by the inner solver's
exit flag.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Optional

import numpy as np
from scipy.linalg import solve_discrete_are
from scipy.optimize import minimize, nnls

from . import ocp as _ocp
from . import _kernels
from .model import DynamicsModel, _check_vec, jacobians
from .ocp import OcpSpec

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

_SLSQP_FTOL = 1e-10
_RESTORE_MAX_ITER = 400
_RESTORE_STALL = 50
_POLISH_ROUNDS = 10
_POLISH_STEP_CAP = 0.2


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and policies; eps_active must dominate feas_tol so active
    rows are never missed by the activity threshold."""

    kkt_tol: float = 1e-8
    feas_tol: float = 1e-8
    eps_active: float = 1e-6
    max_iter: int = 200
    init_policy: str = "warm_start_shift"   # or "zeros"
    trace_path: Optional[str] = None

    def __post_init__(self):
        if min(self.kkt_tol, self.feas_tol, self.eps_active) <= 0:
            raise ValueError("tolerances must be positive")
        if self.eps_active < self.feas_tol:
            raise ValueError("eps_active must be >= feas_tol")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.init_policy not in ("zeros", "warm_start_shift"):
            raise ValueError(f"unknown init_policy {self.init_policy!r}")


@dataclass(frozen=True)
class ActiveSet:
    """Boolean activity flags per constraint row, with per-step input views."""

    flags: np.ndarray
    N: int
    n: int
    m: int

    @classmethod
    def from_residuals(cls, spec: OcpSpec, G: np.ndarray, eps_active: float) -> "ActiveSet":
        flags = G >= -eps_active
        out = cls(flags=flags, N=spec.N, n=spec.n, m=spec.m)
        low = out.input_lower
        up = out.input_upper
        if np.any(low & up):
            raise ValueError("lower and upper input bounds both active; bounds degenerate?")
        return out

    @property
    def input_lower(self) -> np.ndarray:
        """(N, m) flags of active lower input bounds."""
        blocks = self.flags[:2 * self.m * self.N].reshape(self.N, 2 * self.m)
        return blocks[:, :self.m]

    @property
    def input_upper(self) -> np.ndarray:
        blocks = self.flags[:2 * self.m * self.N].reshape(self.N, 2 * self.m)
        return blocks[:, self.m:]

    def input_lower_active(self, k: int, j: int = 0) -> bool:
        return bool(self.input_lower[k, j])

    def input_upper_active(self, k: int, j: int = 0) -> bool:
        return bool(self.input_upper[k, j])


@dataclass(frozen=True)
class NlpSolution:
    U_star: np.ndarray
    V_star: float
    status: str
    kkt_residual: float
    feas_violation: float
    active_set: Optional[ActiveSet]
    multipliers: Optional[np.ndarray] = field(default=None, repr=False)
    n_iters: int = 0


# --- evaluators --------------------------------------------------------------


class _NumpyEvaluator:
    """Generic rollout/sensitivity/constraint pass for any DynamicsModel."""

    def __init__(self, spec: OcpSpec, model: DynamicsModel, x0: np.ndarray):
        self.spec = spec
        self.model = model
        self.x0 = np.asarray(x0, float)
        self._key = None
        self._data = None

    def full(self, U: np.ndarray):
        key = U.tobytes()
        if key != self._key:
            self._data = self._compute(np.asarray(U, float))
            self._key = key
        return self._data

    def _compute(self, U):
        spec, model = self.spec, self.model
        N, n, m = spec.N, spec.n, spec.m
        D = N * m
        Useq = U.reshape(N, m)
        xs = np.empty((N + 1, n))
        S = np.zeros((N + 1, n, D))
        xs[0] = self.x0
        V = 0.0
        gV = np.zeros(D)
        for k in range(N):
            x = xs[k]
            u = Useq[k]
            V += x @ spec.Q @ x + u @ spec.R @ u
            gV += S[k].T @ (2.0 * (spec.Q @ x))
            gV[k * m:(k + 1) * m] += 2.0 * (spec.R @ u)
            A, B = jacobians(model, x, u)
            S[k + 1] = A @ S[k]
            S[k + 1][:, k * m:(k + 1) * m] += B
            xs[k + 1] = model.step_map(x, u)
        xN = xs[N]
        PxN = spec.P @ xN
        V += xN @ PxN
        gV += S[N].T @ (2.0 * PxN)

        nrows = _ocp.n_constraints(spec)
        G = np.empty(nrows)
        J = np.zeros((nrows, D))
        for k in range(N):
            r = 2 * m * k
            G[r:r + m] = spec.u_lower - Useq[k]
            G[r + m:r + 2 * m] = Useq[k] - spec.u_upper
            for j in range(m):
                J[r + j, k * m + j] = -1.0
                J[r + m + j, k * m + j] = 1.0
        off = 2 * m * N
        for k in range(1, N):
            r = off + 2 * n * (k - 1)
            G[r:r + n] = spec.x_lower - xs[k]
            G[r + n:r + 2 * n] = xs[k] - spec.x_upper
            J[r:r + n] = -S[k]
            J[r + n:r + 2 * n] = S[k]
        q = _ocp.terminal_quad_row(spec)
        G[q] = xN @ PxN - spec.alpha
        J[q] = 2.0 * (PxN @ S[N])
        G[q + 1:q + 1 + n] = spec.x_lower - xN
        G[q + 1 + n:q + 1 + 2 * n] = xN - spec.x_upper
        J[q + 1:q + 1 + n] = -S[N]
        J[q + 1 + n:q + 1 + 2 * n] = S[N]
        return xs, S, float(V), gV, G, J

    def hess_lagrangian(self, U: np.ndarray, lam: np.ndarray) -> np.ndarray:
        if self.model.second_order is not None:
            return self._hess_exact(U, lam)
        return self._hess_fd(U, lam)

    def _hess_exact(self, U, lam):
        spec, model = self.spec, self.model
        N, n, m = spec.N, spec.n, spec.m
        D = N * m
        xs, S, V, gV, G, J = self.full(U)
        Useq = U.reshape(N, m)
        off = 2 * m * N
        q = _ocp.terminal_quad_row(spec)
        H = np.zeros((D, D))
        T = np.zeros((n, D, D))
        for k in range(N):
            x = xs[k]
            u = Useq[k]
            # weights multiplying the second-order state sensitivities:
            # stage-cost gradient plus multipliers of this step's box rows
            w = 2.0 * (spec.Q @ x)
            if k >= 1:
                r = off + 2 * n * (k - 1)
                w = w + (lam[r + n:r + 2 * n] - lam[r:r + n])
            H += 2.0 * S[k].T @ spec.Q @ S[k]
            H += np.einsum("i,ijl->jl", w, T)
            sl = slice(k * m, (k + 1) * m)
            H[sl, sl] += 2.0 * spec.R
            A, B = jacobians(model, x, u)
            fxx, fxu, fuu = model.second_order(x, u)
            Tn = np.einsum("ia,ajl->ijl", A, T)
            # curvature of f enters through S and this step's input columns
            cross = np.einsum("iab,aj->ibj", fxu, S[k])     # (n, m, D)
            Tn[:, :, sl] += np.transpose(cross, (0, 2, 1))
            Tn[:, sl, :] += cross
            if np.any(fxx):
                Tn += np.einsum("iab,aj,bl->ijl", fxx, S[k], S[k])
            if np.any(fuu):
                Tn[:, sl, sl] += fuu
            T = Tn
        xN = xs[N]
        PxN = spec.P @ xN
        wq = 1.0 + lam[q]
        wbox = lam[q + 1 + n:q + 1 + 2 * n] - lam[q + 1:q + 1 + n]
        H += wq * (2.0 * S[N].T @ spec.P @ S[N] + np.einsum("i,ijl->jl", 2.0 * PxN, T))
        H += np.einsum("i,ijl->jl", wbox, T)
        return 0.5 * (H + H.T)

    def _hess_fd(self, U, lam):
        D = U.size
        H = np.empty((D, D))

        def grad_lag(Uv):
            xs, S, V, gV, G, J = self.full(Uv)
            return gV + J.T @ lam

        for j in range(D):
            h = 1e-6 * (1.0 + abs(U[j]))
            Up = U.copy(); Up[j] += h
            Um = U.copy(); Um[j] -= h
            H[:, j] = (grad_lag(Up) - grad_lag(Um)) / (2 * h)
        self._key = None   # cache now holds an FD point; invalidate
        return 0.5 * (H + H.T)

    def restore(self, U0: np.ndarray, phi_target: float):
        """Generic spectral-projected-gradient restoration (mirrors the
        compiled kernel's logic)."""
        spec = self.spec
        lo = np.tile(spec.u_lower, spec.N)
        hi = np.tile(spec.u_upper, spec.N)
        start = 2 * spec.m * spec.N

        def phi_grad(U):
            xs, S, V, gV, G, J = self.full(U)
            viol = np.maximum(G[start:], 0.0)
            phi = float(viol @ viol)
            g = 2.0 * (viol @ J[start:])
            return phi, g

        U = np.clip(U0, lo, hi)
        phi, g = phi_grad(U)
        alpha = 1.0
        U_best, phi_best = U.copy(), phi
        mark, mark_iter = phi_best, 0
        it = 0
        while it < _RESTORE_MAX_ITER:
            if phi <= phi_target:
                break
            a = alpha
            ok = False
            for _ in range(40):
                Ut = np.clip(U - a * g, lo, hi)
                phit, gt = phi_grad(Ut)
                if phit < phi:
                    ok = True
                    break
                a *= 0.5
            if not ok:
                break
            dU = Ut - U
            dg = gt - g
            sy = float(dU @ dg)
            alpha = float(dU @ dU) / sy if sy > 1e-16 else 1.0
            U, phi, g = Ut, phit, gt
            if phi < phi_best:
                U_best, phi_best = U.copy(), phi
            it += 1
            if it - mark_iter >= _RESTORE_STALL:
                if phi_best > mark * (1.0 - 1e-3):
                    break
                mark, mark_iter = phi_best, it
        return U_best, phi_best, it


class _FastEvaluator:
    """Kernel-backed evaluator for the benchmark dynamics (n=2, m=1)."""

    def __init__(self, spec: OcpSpec, model: DynamicsModel, x0: np.ndarray):
        self.spec = spec
        self.model = model
        self.x0 = np.asarray(x0, float)
        self.params = _kernels.pack_params(spec)
        self._key = None
        self._data = None

    def full(self, U: np.ndarray):
        key = U.tobytes()
        if key != self._key:
            xs, S, V, gV, G, J = _kernels.full_pass(self.x0, np.asarray(U, float), self.params)
            self._data = (xs, S, float(V), gV, G, J)
            self._key = key
        return self._data

    def hess_lagrangian(self, U: np.ndarray, lam: np.ndarray) -> np.ndarray:
        xs, S, V, gV, G, J = self.full(U)
        return _kernels.hess_lagrangian(xs, S, np.asarray(U, float), lam, self.params)

    def restore(self, U0: np.ndarray, phi_target: float):
        U, phi, it = _kernels.restore(self.x0, np.asarray(U0, float), self.params,
                                      _RESTORE_MAX_ITER, _RESTORE_STALL, phi_target)
        return U, float(phi), int(it)


def _make_evaluator(spec: OcpSpec, model: DynamicsModel, x0: np.ndarray):
    if (_kernels.HAVE_NUMBA and model.descriptor is not None
            and model.descriptor.get("kind") == "benchmark"
            and spec.n == 2 and spec.m == 1):
        return _FastEvaluator(spec, model, x0)
    return _NumpyEvaluator(spec, model, x0)


# --- cold-start seeding -------------------------------------------------------


@lru_cache(maxsize=64)
def _dare_gain(A_bytes: bytes, B_bytes: bytes, Q_bytes: bytes, R_bytes: bytes,
               n: int, m: int) -> Optional[bytes]:
    A = np.frombuffer(A_bytes).reshape(n, n)
    B = np.frombuffer(B_bytes).reshape(n, m)
    Q = np.frombuffer(Q_bytes).reshape(n, n)
    R = np.frombuffer(R_bytes).reshape(m, m)
    try:
        P = solve_discrete_are(A, B, Q, R)
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    except Exception:
        return None
    return K.tobytes()


def _lqr_seed(spec: OcpSpec, model: DynamicsModel, x0: np.ndarray) -> np.ndarray:
    """Clipped discrete-LQR rollout from the origin linearization; falls back
    to zeros when the Riccati solve is unavailable."""
    n, m, N = spec.n, spec.m, spec.N
    zero_x = np.zeros(n)
    zero_u = np.zeros(m)
    A, B = jacobians(model, zero_x, zero_u)
    Kb = _dare_gain(A.tobytes(), B.tobytes(), spec.Q.tobytes(), spec.R.tobytes(), n, m)
    if Kb is None:
        return np.zeros(N * m)
    K = np.frombuffer(Kb).reshape(m, n)
    U = np.empty((N, m))
    x = x0.copy()
    for k in range(N):
        u = np.clip(-K @ x, spec.u_lower, spec.u_upper)
        U[k] = u
        x = np.asarray(model.step_map(x, u), float)
    return U.ravel()


# --- KKT machinery -------------------------------------------------------------


def _kkt_diagnostics(ev, U: np.ndarray, cfg: SolverConfig):
    """Multiplier recovery by NNLS over near-active rows, then stationarity,
    complementarity and feasibility measurements."""
    xs, S, V, gV, G, J = ev.full(U)
    lam_full = np.zeros(G.shape[0])
    cand = np.where(G >= -cfg.eps_active)[0]
    if cand.size:
        lam, _ = nnls(J[cand].T, -gV)
        lam_full[cand] = lam
        stat = float(np.abs(gV + J[cand].T @ lam).max())
        comp = float(np.abs(lam * G[cand]).max())
    else:
        stat = float(np.abs(gV).max())
        comp = 0.0
    feas = float(G.max())
    return stat, comp, feas, lam_full


def _polish(ev, U: np.ndarray, lam_full: np.ndarray, cfg: SolverConfig, trace=None):
    """Active-set Newton refinement with the exact Hessian of the Lagrangian.

    With an empty working set this degenerates to a plain Newton step on the
    objective (interior solutions)."""
    spec = ev.spec
    D = U.size
    lo = np.tile(spec.u_lower, spec.N)
    hi = np.tile(spec.u_upper, spec.N)
    U = U.copy()
    for rnd in range(_POLISH_ROUNDS):
        xs, S, V, gV, G, J = ev.full(U)
        act = np.where((lam_full > 1e-9) | (G >= -1e-9))[0]
        na = act.size
        if na:
            JA = J[act]
            lamA = lam_full[act]
            F = np.concatenate([gV + JA.T @ lamA, G[act]])
        else:
            F = gV
        if np.abs(F).max() < 1e-13:
            break
        H = ev.hess_lagrangian(U, lam_full)
        KKT = np.zeros((D + na, D + na))
        KKT[:D, :D] = H
        if na:
            KKT[:D, D:] = JA.T
            KKT[D:, :D] = JA
        try:
            step = np.linalg.solve(KKT, -F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(KKT, -F, rcond=None)
        smax = np.abs(step[:D]).max()
        if smax > _POLISH_STEP_CAP:
            step = step * (_POLISH_STEP_CAP / smax)
        U = np.clip(U + step[:D], lo, hi)
        lam_full = np.zeros(G.shape[0])
        if na:
            lam_full[act] = np.maximum(lamA + step[D:], 0.0)
        if trace is not None:
            xs2, S2, V2, gV2, G2, J2 = ev.full(U)
            trace.row("polish", rnd, V2, max(G2.max(), 0.0), smax)
    return U, lam_full


@dataclass
class _Candidate:
    U: np.ndarray
    V: float
    stat: float
    comp: float
    feas: float
    lam: np.ndarray
    nit: int

    def passes(self, cfg: SolverConfig) -> bool:
        return max(self.stat, self.comp) <= cfg.kkt_tol and self.feas <= cfg.feas_tol


class _Trace:
    """Per-solve CSV trace: phase, iteration, objective, violation, step."""

    _counter = 0

    def __init__(self, path: Optional[str]):
        self.path = path
        if path is not None:
            _Trace._counter += 1
            self.solve_id = _Trace._counter
            self._fh = open(path, "a", encoding="utf-8")
            if self._fh.tell() == 0:
                self._fh.write("solve_id,phase,iteration,objective,violation,step_inf\n")
        else:
            self._fh = None

    def row(self, phase: str, it: int, V: float, viol: float, step: float):
        if self._fh is not None:
            self._fh.write(f"{self.solve_id},{phase},{it},{V:.17g},{viol:.17g},{step:.17g}\n")

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _descend(ev, U0: np.ndarray, cfg: SolverConfig, trace: Optional[_Trace] = None) -> _Candidate:
    spec = ev.spec
    start_row = 2 * spec.m * spec.N
    bounds = [(spec.u_lower[j], spec.u_upper[j]) for _ in range(spec.N) for j in range(spec.m)]

    def fun(U):
        xs, S, V, gV, G, J = ev.full(U)
        return V, gV

    def cons_f(U):
        return -ev.full(U)[4][start_row:]

    def cons_j(U):
        return -ev.full(U)[5][start_row:]

    cb = None
    if trace is not None and trace.path is not None:
        state = {"it": 0, "prev": np.asarray(U0, float)}

        def cb(Uk):
            xs, S, V, gV, G, J = ev.full(Uk)
            step = float(np.abs(Uk - state["prev"]).max())
            trace.row("slsqp", state["it"], V, max(float(G.max()), 0.0), step)
            state["it"] += 1
            state["prev"] = Uk.copy()

    res = minimize(fun, np.asarray(U0, float), jac=True, method="SLSQP",
                   bounds=bounds,
                   constraints=[{"type": "ineq", "fun": cons_f, "jac": cons_j}],
                   callback=cb,
                   options={"maxiter": cfg.max_iter, "ftol": _SLSQP_FTOL})
    U = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds])
    stat, comp, feas, lam = _kkt_diagnostics(ev, U, cfg)
    cand = _Candidate(U, ev.full(U)[2], stat, comp, feas, lam, int(res.nit))
    if not cand.passes(cfg) and feas < 1e-5:
        U2, lam2 = _polish(ev, U, lam, cfg, trace)
        stat2, comp2, feas2, lam2 = _kkt_diagnostics(ev, U2, cfg)
        if max(stat2, comp2, feas2) < max(stat, comp, feas):
            cand = _Candidate(U2, ev.full(U2)[2], stat2, comp2, feas2, lam2, int(res.nit))
    return cand


# --- public operations ----------------------------------------------------------


def solve(spec: OcpSpec, model: DynamicsModel, x0, cfg: Optional[SolverConfig] = None,
          warm: Optional[np.ndarray] = None) -> NlpSolution:
    """Solve the horizon problem for initial state x0.

    Returns a KKT point to the configured tolerances (status ``optimal``), or
    ``infeasible`` when restoration stalls above the feasibility tolerance, or
    ``max_iter`` when no start passes the KKT gate.
    """
    cfg = cfg or SolverConfig()
    x0 = _check_vec(x0, spec.n, "x0")
    D = spec.N * spec.m

    def finish(U, status, stat, comp, feas, lam, nit):
        V = _ocp.total_cost(spec, model, x0, U)
        act = None
        if status == OPTIMAL:
            G = _ocp.constraints(spec, model, x0, U)
            act = ActiveSet.from_residuals(spec, G, cfg.eps_active)
        return NlpSolution(U_star=U, V_star=V, status=status,
                           kkt_residual=max(stat, comp), feas_violation=feas,
                           active_set=act, multipliers=lam, n_iters=nit)

    # reject measured states outside the box outright
    box_viol = max(float(np.max(spec.x_lower - x0)), float(np.max(x0 - spec.x_upper)))
    if box_viol > cfg.feas_tol:
        return finish(np.zeros(D), INFEASIBLE, np.inf, np.inf, box_viol, None, 0)

    trace = _Trace(cfg.trace_path)
    try:
        ev = _make_evaluator(spec, model, x0)
        # warm fast path: accept immediately when the warm start already
        # certifies a KKT point
        if warm is not None and cfg.init_policy == "warm_start_shift":
            warm = _check_vec(warm, D, "warm")
            cand = _descend(ev, warm, cfg, trace)
            if cand.passes(cfg):
                return finish(cand.U, OPTIMAL, cand.stat, cand.comp, cand.feas,
                              cand.lam, cand.nit)

        phi_target = (0.1 * cfg.feas_tol) ** 2
        seed = _lqr_seed(spec, model, x0)
        Ur, phi, rit = ev.restore(seed, phi_target)
        trace.row("restore", rit, np.nan, float(np.sqrt(phi)), np.nan)
        if phi > phi_target:
            U2, phi2, rit2 = ev.restore(np.zeros(D), phi_target)
            trace.row("restore", rit2, np.nan, float(np.sqrt(phi2)), np.nan)
            if phi2 < phi:
                Ur, phi = U2, phi2
        viol = float(np.sqrt(phi))
        if viol > cfg.feas_tol:
            return finish(Ur, INFEASIBLE, np.inf, np.inf, viol, None, 0)

        starts = [np.zeros(D)]
        if warm is not None and cfg.init_policy == "zeros":
            starts.append(np.asarray(warm, float))
        starts += [Ur, np.tile(spec.u_lower, spec.N), np.tile(spec.u_upper, spec.N)]

        best: Optional[_Candidate] = None
        fallback: Optional[_Candidate] = None
        seen = set()
        for U0 in starts:
            key = U0.tobytes()
            if key in seen:
                continue
            seen.add(key)
            cand = _descend(ev, U0, cfg, trace)
            if cand.passes(cfg):
                if best is None or cand.V < best.V:
                    best = cand
            else:
                score = (cand.feas, max(cand.stat, cand.comp))
                if fallback is None or score < (fallback.feas, max(fallback.stat, fallback.comp)):
                    fallback = cand
        if best is not None:
            return finish(best.U, OPTIMAL, best.stat, best.comp, best.feas,
                          best.lam, best.nit)
        logger.warning("no start passed the KKT gate at x0=%s (best feas=%.3g kkt=%.3g)",
                       x0, fallback.feas, max(fallback.stat, fallback.comp))
        return finish(fallback.U, MAX_ITER, fallback.stat, fallback.comp,
                      fallback.feas, fallback.lam, fallback.nit)
    finally:
        trace.close()


def check_feasible(spec: OcpSpec, model: DynamicsModel, x0,
                   cfg: Optional[SolverConfig] = None) -> bool:
    """Membership test for the feasible set: does the NLP admit a solution."""
    return solve(spec, model, x0, cfg).status == OPTIMAL


def extract_active_set(spec: OcpSpec, model: DynamicsModel, x0, sol: NlpSolution,
                       eps_active: Optional[float] = None) -> ActiveSet:
    """Activity flags of G(x0, U*) within eps_active (re-evaluated, so this is
    independent of the solve that produced the solution)."""
    if sol.status != OPTIMAL:
        raise ValueError("active set is only defined for optimal solutions")
    eps = 1e-6 if eps_active is None else eps_active
    G = _ocp.constraints(spec, model, x0, sol.U_star)
    return ActiveSet.from_residuals(spec, G, eps)


def grid_search_oracle(spec: OcpSpec, model: DynamicsModel, x0,
                       levels_per_input: int, horizon_cap: int,
                       tail: Optional[np.ndarray] = None):
    """Brute-force enumeration over an input grid for the first
    ``horizon_cap`` steps (remaining steps from ``tail``, default zeros).

    Returns (best U, best cost); (None, inf) when no grid point is feasible.
    Evaluation is a deliberate straight-line reimplementation so it can serve
    as an independent check on the solver.
    """
    x0 = _check_vec(x0, spec.n, "x0")
    N, n, m = spec.N, spec.n, spec.m
    cap = min(horizon_cap, N)
    if tail is None:
        tail_seq = np.zeros((N - cap, m))
    else:
        tail_seq = np.asarray(tail, float).reshape(N, m)[cap:]
    axes = [np.linspace(spec.u_lower[j], spec.u_upper[j], levels_per_input)
            for j in range(m)]
    combos = np.array(list(product(*(axes * cap))))  # (B, cap*m)
    B = combos.shape[0]
    Useq = np.concatenate([combos.reshape(B, cap, m),
                           np.broadcast_to(tail_seq, (B, N - cap, m))], axis=1)

    # batched rollout; falls back to a per-candidate loop when the model's
    # step map does not broadcast
    xs = np.empty((B, N + 1, n))
    xs[:, 0] = x0
    try:
        for k in range(N):
            nxt = np.asarray(model.step_map(xs[:, k], Useq[:, k]), float)
            if nxt.shape != (B, n):
                raise ValueError
            xs[:, k + 1] = nxt
    except Exception:
        for b in range(B):
            x = x0
            for k in range(N):
                x = np.asarray(model.step_map(x, Useq[b, k]), float)
                xs[b, k + 1] = x

    slack = 1e-9
    ok = np.ones(B, dtype=bool)
    for k in range(1, N):
        ok &= np.all(xs[:, k] >= spec.x_lower - slack, axis=1)
        ok &= np.all(xs[:, k] <= spec.x_upper + slack, axis=1)
    ok &= np.all(xs[:, N] >= spec.x_lower - slack, axis=1)
    ok &= np.all(xs[:, N] <= spec.x_upper + slack, axis=1)
    quad = np.einsum("bi,ij,bj->b", xs[:, N], spec.P, xs[:, N])
    ok &= quad <= spec.alpha + slack
    if not np.any(ok):
        return None, float("inf")
    cost = quad.copy()
    for k in range(N):
        cost += np.einsum("bi,ij,bj->b", xs[:, k], spec.Q, xs[:, k])
        cost += np.einsum("bi,ij,bj->b", Useq[:, k], spec.R, Useq[:, k])
    cost[~ok] = np.inf
    ib = int(np.argmin(cost))
    return Useq[ib].ravel().copy(), float(cost[ib])
