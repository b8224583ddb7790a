"""Discrete-time nonlinear dynamics: generic model container, the two-state
bilinear benchmark system, and bounded additive disturbances.

Models are immutable after construction and all step operations are pure,
so instances can be shared freely across worker processes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


def _check_vec(v, length: int, name: str) -> Array:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (length,):
        raise ValueError(f"{name} must be a vector of length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries: {arr}")
    return arr


@dataclass(frozen=True)
class DynamicsModel:
    """The map x(k+1) = f(x(k), u(k)) with optional analytic derivatives.

    ``jac_x``/``jac_u`` return d f/d x (n x n) and d f/d u (n x m); when absent
    the solver falls back to central finite differences.  ``second_order``
    returns the tensors (fxx, fxu, fuu) with shapes (n,n,n), (n,n,m), (n,m,m)
    indexed [output, first-arg, second-arg]; it is optional and only speeds up
    the solver's Hessian refinement.  ``descriptor`` is a plain-JSON recipe
    that lets worker processes rebuild the model.
    """

    n: int
    m: int
    step_map: Callable[[Array, Array], Array]
    jac_x: Optional[Callable[[Array, Array], Array]] = None
    jac_u: Optional[Callable[[Array, Array], Array]] = None
    second_order: Optional[Callable[[Array, Array], tuple]] = None
    name: str = "model"
    descriptor: Optional[dict] = field(default=None, repr=False)


@dataclass(frozen=True)
class DisturbanceBounds:
    lower: Array
    upper: Array

    def __post_init__(self):
        lo = _check_vec(self.lower, len(np.atleast_1d(self.lower)), "lower")
        hi = _check_vec(self.upper, len(lo), "upper")
        if np.any(lo > hi):
            raise ValueError("disturbance bounds must satisfy lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def step(model: DynamicsModel, x, u) -> Array:
    """Evaluate f(x, u)."""
    x = _check_vec(x, model.n, "x")
    u = _check_vec(u, model.m, "u")
    return np.asarray(model.step_map(x, u), dtype=float)


def step_disturbed(model: DynamicsModel, x, u, w) -> Array:
    """Evaluate f(x, u) + w."""
    w = _check_vec(w, model.n, "w")
    return step(model, x, u) + w


def sample_disturbance(bounds: DisturbanceBounds, rng: np.random.Generator) -> Array:
    """One componentwise-uniform draw from [lower, upper]."""
    return rng.uniform(bounds.lower, bounds.upper)


def disturbance_sequence(bounds: DisturbanceBounds, rng: np.random.Generator,
                         steps: int, constant: bool = False) -> Array:
    """A (steps, n) array of disturbances.

    ``constant=True`` draws once and repeats it every step; the default is an
    i.i.d. draw per step.
    """
    if constant:
        w = sample_disturbance(bounds, rng)
        return np.tile(w, (steps, 1))
    lo = np.broadcast_to(bounds.lower, (steps, len(bounds.lower)))
    hi = np.broadcast_to(bounds.upper, (steps, len(bounds.upper)))
    return rng.uniform(lo, hi)


# --- polynomial term-table models -----------------------------------------
#
# Declarative format (JSON-safe): each state row is a list of terms
#   {"c": coeff, "x": [powers per state], "u": [powers per input]}
# and f_i(x, u) = sum_t c_t * prod_a x_a^p_ta * prod_b u_b^q_tb.
# Derivatives follow from the power rule, so Jacobians and second-order
# tensors are exact.

_BENCHMARK_ROWS = [
    [
        {"c": 1.0, "x": [1, 0], "u": [0]},
        {"c": 0.1, "x": [0, 1], "u": [0]},
        {"c": 0.05, "x": [0, 0], "u": [1]},
        {"c": 0.05, "x": [1, 0], "u": [1]},
    ],
    [
        {"c": 0.1, "x": [1, 0], "u": [0]},
        {"c": 1.0, "x": [0, 1], "u": [0]},
        {"c": 0.05, "x": [0, 0], "u": [1]},
        {"c": -0.2, "x": [0, 1], "u": [1]},
    ],
]


def _poly_value(rows, n, m, x, u):
    # broadcasts over leading axes so batched rollouts work unchanged
    cols = []
    for terms in rows:
        acc = np.zeros(np.shape(x)[:-1])
        for t in terms:
            v = t["c"] * np.ones(np.shape(x)[:-1])
            for a in range(n):
                p = t["x"][a]
                if p:
                    v = v * x[..., a] ** p
            for b in range(m):
                p = t["u"][b]
                if p:
                    v = v * u[..., b] ** p
            acc = acc + v
        cols.append(acc)
    return np.stack(cols, axis=-1)


def _diff_term(term, wrt: str, idx: int):
    """Power rule: differentiate one monomial, returning None when it vanishes."""
    p = term[wrt][idx]
    if p == 0:
        return None
    new = {"c": term["c"] * p, "x": list(term["x"]), "u": list(term["u"])}
    new[wrt][idx] -= 1
    return new


def _diff_rows(rows, wrt: str, idx: int):
    out = []
    for terms in rows:
        row = []
        for t in terms:
            d = _diff_term(t, wrt, idx)
            if d is not None:
                row.append(d)
        out.append(row)
    return out


def _poly_model(rows, n: int, m: int, name: str, descriptor: dict) -> DynamicsModel:
    dx_rows = [_diff_rows(rows, "x", a) for a in range(n)]
    du_rows = [_diff_rows(rows, "u", b) for b in range(m)]
    dxx = [[_diff_rows(dx_rows[a], "x", b) for b in range(n)] for a in range(n)]
    dxu = [[_diff_rows(dx_rows[a], "u", b) for b in range(m)] for a in range(n)]
    duu = [[_diff_rows(du_rows[a], "u", b) for b in range(m)] for a in range(m)]

    def f(x, u):
        return _poly_value(rows, n, m, x, u)

    def fx(x, u):
        return np.column_stack([_poly_value(dx_rows[a], n, m, x, u) for a in range(n)])

    def fu(x, u):
        return np.column_stack([_poly_value(du_rows[b], n, m, x, u) for b in range(m)])

    def f2(x, u):
        fxx = np.empty((n, n, n))
        fxu = np.empty((n, n, m))
        fuu = np.empty((n, m, m))
        for a in range(n):
            for b in range(n):
                fxx[:, a, b] = _poly_value(dxx[a][b], n, m, x, u)
            for b in range(m):
                fxu[:, a, b] = _poly_value(dxu[a][b], n, m, x, u)
        for a in range(m):
            for b in range(m):
                fuu[:, a, b] = _poly_value(duu[a][b], n, m, x, u)
        return fxx, fxu, fuu

    return DynamicsModel(n=n, m=m, step_map=f, jac_x=fx, jac_u=fu,
                         second_order=f2, name=name, descriptor=descriptor)


def benchmark_model() -> DynamicsModel:
    """The two-state, one-input bilinear benchmark:

        x1+ = x1 + 0.1 x2 + 0.1 (0.5 + 0.5 x1) u
        x2+ = x2 + 0.1 x1 + 0.1 (0.5 - 2.0 x2) u

    Bilinear, so the analytic Jacobians and second-order tensors are exact.
    """
    return _poly_model(_BENCHMARK_ROWS, 2, 1, "benchmark", {"kind": "benchmark"})


def model_from_config(cfg: dict) -> DynamicsModel:
    """Build a model from a polynomial coefficient-table config.

    Expected keys: n, m, rows (term table as documented above), optional name.
    """
    n = int(cfg["n"])
    m = int(cfg["m"])
    rows = cfg["rows"]
    if len(rows) != n:
        raise ValueError(f"rows must have {n} entries, got {len(rows)}")
    for i, terms in enumerate(rows):
        for t in terms:
            if len(t["x"]) != n or len(t["u"]) != m:
                raise ValueError(f"row {i} has a term with wrong power-list lengths")
    rows = [[{"c": float(t["c"]), "x": [int(p) for p in t["x"]],
              "u": [int(p) for p in t["u"]]} for t in terms] for terms in rows]
    name = cfg.get("name", "poly")
    descriptor = {"kind": "poly", "n": n, "m": m, "rows": rows, "name": name}
    return _poly_model(rows, n, m, name, descriptor)


def model_from_descriptor(desc: dict) -> DynamicsModel:
    if desc.get("kind") == "benchmark":
        return benchmark_model()
    if desc.get("kind") == "poly":
        return model_from_config(desc)
    raise ValueError(f"unknown model descriptor: {desc!r}")


def fd_jacobians(model: DynamicsModel, x, u) -> tuple[Array, Array]:
    """Central-difference Jacobians with step 1e-6*(1+|coordinate|)."""
    x = _check_vec(x, model.n, "x")
    u = _check_vec(u, model.m, "u")
    A = np.empty((model.n, model.n))
    B = np.empty((model.n, model.m))
    for a in range(model.n):
        h = 1e-6 * (1.0 + abs(x[a]))
        xp = x.copy(); xp[a] += h
        xm = x.copy(); xm[a] -= h
        A[:, a] = (model.step_map(xp, u) - model.step_map(xm, u)) / (2 * h)
    for b in range(model.m):
        h = 1e-6 * (1.0 + abs(u[b]))
        up = u.copy(); up[b] += h
        um = u.copy(); um[b] -= h
        B[:, b] = (model.step_map(x, up) - model.step_map(x, um)) / (2 * h)
    return A, B


def jacobians(model: DynamicsModel, x, u) -> tuple[Array, Array]:
    """Analytic Jacobians when available, else finite differences."""
    if model.jac_x is not None and model.jac_u is not None:
        x = _check_vec(x, model.n, "x")
        u = _check_vec(u, model.m, "u")
        return np.asarray(model.jac_x(x, u), float), np.asarray(model.jac_u(x, u), float)
    return fd_jacobians(model, x, u)
