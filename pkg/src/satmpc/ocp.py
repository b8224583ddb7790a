"""Finite-horizon optimal control problem in direct single-shooting form.

The decision vector U stacks u(0..N-1); predicted states are obtained by
substituting the dynamics, and all inequality constraints are collected into
one residual vector G(x0, U) <= 0 with a fixed, documented row order:

    rows [0, 2mN):                 per step k=0..N-1, m rows (u_lower - u(k))
                                   then m rows (u(k) - u_upper)
    rows [2mN, 2mN + 2n(N-1)):     per step k=1..N-1, n rows (x_lower - x(k))
                                   then n rows (x(k) - x_upper)
    row  2mN + 2n(N-1):            terminal ellipsoid  x(N)' P x(N) - alpha
    final 2n rows:                 terminal box (x_lower - x(N)), (x(N) - x_upper)

x(0) is measured data, so its box residuals are not part of G.  Row indices
are stable so active-set bookkeeping can refer to them directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import DynamicsModel, _check_vec, step

Array = np.ndarray


def _check_spd(M: Array, name: str) -> Array:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return M


@dataclass(frozen=True)
class OcpSpec:
    """Everything defining the horizon problem: weights, bounds, terminal set."""

    N: int
    Q: Array
    R: Array
    P: Array
    alpha: float
    x_lower: Array
    x_upper: Array
    u_lower: Array
    u_upper: Array

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        Q = _check_spd(self.Q, "Q")
        R = _check_spd(self.R, "R")
        P = _check_spd(self.P, "P")
        n = Q.shape[0]
        m = R.shape[0]
        if P.shape != (n, n):
            raise ValueError("P must match the state dimension of Q")
        xl = _check_vec(self.x_lower, n, "x_lower")
        xu = _check_vec(self.x_upper, n, "x_upper")
        ul = _check_vec(self.u_lower, m, "u_lower")
        uu = _check_vec(self.u_upper, m, "u_upper")
        if not (np.all(xl < 0) and np.all(xu > 0)):
            raise ValueError("state bounds must strictly contain the origin")
        if not (np.all(ul < 0) and np.all(uu > 0)):
            raise ValueError("input bounds must strictly contain the origin")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        # ellipsoid containment: max of x_i over {x'Px <= alpha} is
        # sqrt(alpha * (P^-1)_ii), which must fit inside the state box
        Pinv_diag = np.diag(np.linalg.inv(P))
        reach = np.sqrt(self.alpha * Pinv_diag)
        if np.any(reach > xu) or np.any(reach > -xl):
            raise ValueError("terminal ellipsoid is not contained in the state box")
        for nm, val in (("Q", Q), ("R", R), ("P", P), ("x_lower", xl),
                        ("x_upper", xu), ("u_lower", ul), ("u_upper", uu)):
            object.__setattr__(self, nm, val)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]


def benchmark_ocp() -> OcpSpec:
    """Horizon-12 problem for the bilinear benchmark system."""
    return OcpSpec(
        N=12,
        Q=np.diag([0.05, 0.05]),
        R=np.array([[0.1]]),
        P=np.array([[5.9353, 5.2774], [5.2774, 5.9353]]),
        alpha=0.0606,
        x_lower=np.array([-2.0, -2.0]),
        x_upper=np.array([2.0, 2.0]),
        u_lower=np.array([-0.5]),
        u_upper=np.array([0.5]),
    )


# --- constraint row layout --------------------------------------------------

def n_constraints(spec: OcpSpec) -> int:
    return 2 * spec.m * spec.N + 2 * spec.n * (spec.N - 1) + 1 + 2 * spec.n


def input_lower_row(spec: OcpSpec, k: int, j: int = 0) -> int:
    return 2 * spec.m * k + j


def input_upper_row(spec: OcpSpec, k: int, j: int = 0) -> int:
    return 2 * spec.m * k + spec.m + j


def state_block_offset(spec: OcpSpec) -> int:
    return 2 * spec.m * spec.N


def terminal_quad_row(spec: OcpSpec) -> int:
    return state_block_offset(spec) + 2 * spec.n * (spec.N - 1)


# --- costs and rollout -------------------------------------------------------

def stage_cost(spec: OcpSpec, x, u) -> float:
    x = _check_vec(x, spec.n, "x")
    u = _check_vec(u, spec.m, "u")
    return float(x @ spec.Q @ x + u @ spec.R @ u)


def terminal_cost(spec: OcpSpec, x) -> float:
    x = _check_vec(x, spec.n, "x")
    return float(x @ spec.P @ x)


def rollout(model: DynamicsModel, x0, U) -> Array:
    """States x(0..N) under the stacked input vector U (length N*m)."""
    x0 = _check_vec(x0, model.n, "x0")
    U = np.asarray(U, dtype=float)
    if U.size % model.m != 0:
        raise ValueError("U length must be a multiple of the input dimension")
    N = U.size // model.m
    Useq = U.reshape(N, model.m)
    xs = np.empty((N + 1, model.n))
    xs[0] = x0
    for k in range(N):
        xs[k + 1] = step(model, xs[k], Useq[k])
    return xs


def total_cost(spec: OcpSpec, model: DynamicsModel, x0, U) -> float:
    U = np.asarray(U, dtype=float)
    if U.size != spec.N * spec.m:
        raise ValueError(f"U must have length {spec.N * spec.m}")
    xs = rollout(model, x0, U)
    Useq = U.reshape(spec.N, spec.m)
    V = terminal_cost(spec, xs[spec.N])
    for k in range(spec.N):
        V += stage_cost(spec, xs[k], Useq[k])
    return float(V)


def constraints(spec: OcpSpec, model: DynamicsModel, x0, U) -> Array:
    """Stacked residuals G(x0, U), all written as g <= 0, in the fixed order
    documented at module top."""
    U = np.asarray(U, dtype=float)
    if U.size != spec.N * spec.m:
        raise ValueError(f"U must have length {spec.N * spec.m}")
    xs = rollout(model, x0, U)
    return constraints_from_rollout(spec, xs, U)


def constraints_from_rollout(spec: OcpSpec, xs: Array, U: Array) -> Array:
    N, n, m = spec.N, spec.n, spec.m
    Useq = np.asarray(U, float).reshape(N, m)
    G = np.empty(n_constraints(spec))
    for k in range(N):
        r = 2 * m * k
        G[r:r + m] = spec.u_lower - Useq[k]
        G[r + m:r + 2 * m] = Useq[k] - spec.u_upper
    off = 2 * m * N
    for k in range(1, N):
        r = off + 2 * n * (k - 1)
        G[r:r + n] = spec.x_lower - xs[k]
        G[r + n:r + 2 * n] = xs[k] - spec.x_upper
    q = terminal_quad_row(spec)
    xN = xs[N]
    G[q] = xN @ spec.P @ xN - spec.alpha
    G[q + 1:q + 1 + n] = spec.x_lower - xN
    G[q + 1 + n:q + 1 + 2 * n] = xN - spec.x_upper
    return G


def in_terminal_set(spec: OcpSpec, x) -> bool:
    """Membership in {x in X : x'Px <= alpha}."""
    x = _check_vec(x, spec.n, "x")
    if np.any(x < spec.x_lower) or np.any(x > spec.x_upper):
        return False
    return float(x @ spec.P @ x) <= spec.alpha


# --- JSON interface ----------------------------------------------------------

def spec_to_json(spec: OcpSpec) -> dict:
    return {
        "N": spec.N,
        "Q": spec.Q.tolist(),
        "R": spec.R.tolist(),
        "P": spec.P.tolist(),
        "alpha": spec.alpha,
        "x_bounds": [spec.x_lower.tolist(), spec.x_upper.tolist()],
        "u_bounds": [spec.u_lower.tolist(), spec.u_upper.tolist()],
    }


def spec_from_json(doc: dict) -> OcpSpec:
    try:
        return OcpSpec(
            N=int(doc["N"]),
            Q=np.asarray(doc["Q"], float),
            R=np.asarray(doc["R"], float),
            P=np.asarray(doc["P"], float),
            alpha=float(doc["alpha"]),
            x_lower=np.asarray(doc["x_bounds"][0], float),
            x_upper=np.asarray(doc["x_bounds"][1], float),
            u_lower=np.asarray(doc["u_bounds"][0], float),
            u_upper=np.asarray(doc["u_bounds"][1], float),
        )
    except KeyError as e:
        raise ValueError(f"problem document missing key {e}") from None


def load_spec(path: str) -> OcpSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_json(json.load(fh))


def save_spec(spec: OcpSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_json(spec), fh, indent=2)
        fh.write("\n")
