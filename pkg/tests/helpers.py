"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written as plain loops over the problem
definition, sharing no code path with the library internals it checks.
"""
import numpy as np

from satmpc import OcpSpec, benchmark_model


def ref_stage_cost(spec: OcpSpec, x, u) -> float:
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    return float(x @ spec.Q @ x + u @ spec.R @ u)


def ref_total_cost(spec: OcpSpec, model, x0, U) -> float:
    """Rollout + cost with explicit loops (single-shooting reference)."""
    U = np.asarray(U, float).reshape(spec.N, spec.m)
    x = np.asarray(x0, float)
    total = 0.0
    for k in range(spec.N):
        total += ref_stage_cost(spec, x, U[k])
        x = np.asarray(model.step_map(x, U[k]), float)
    total += float(x @ spec.P @ x)
    return total


def ref_rollout(spec: OcpSpec, model, x0, U) -> np.ndarray:
    U = np.asarray(U, float).reshape(spec.N, spec.m)
    xs = [np.asarray(x0, float)]
    for k in range(spec.N):
        xs.append(np.asarray(model.step_map(xs[-1], U[k]), float))
    return np.asarray(xs)


def ref_constraints(spec: OcpSpec, model, x0, U) -> np.ndarray:
    """The stacked inequality vector, re-derived from the problem statement:
    input boxes for k=0..N-1, state boxes for k=1..N-1, the terminal
    quadratic row, then the terminal state box."""
    U = np.asarray(U, float).reshape(spec.N, spec.m)
    xs = ref_rollout(spec, model, x0, U)
    rows = []
    for k in range(spec.N):
        for j in range(spec.m):
            rows.append(spec.u_lower[j] - U[k, j])
        for j in range(spec.m):
            rows.append(U[k, j] - spec.u_upper[j])
    for k in range(1, spec.N):
        for i in range(spec.n):
            rows.append(spec.x_lower[i] - xs[k, i])
        for i in range(spec.n):
            rows.append(xs[k, i] - spec.x_upper[i])
    xN = xs[spec.N]
    rows.append(float(xN @ spec.P @ xN) - spec.alpha)
    for i in range(spec.n):
        rows.append(spec.x_lower[i] - xN[i])
    for i in range(spec.n):
        rows.append(xN[i] - spec.x_upper[i])
    return np.asarray(rows)


def fd_objective_gradient(spec: OcpSpec, model, x0, U, h=1e-7) -> np.ndarray:
    from satmpc.ocp import total_cost
    U = np.asarray(U, float)
    g = np.empty_like(U)
    for i in range(U.size):
        up = U.copy(); up[i] += h
        dn = U.copy(); dn[i] -= h
        g[i] = (total_cost(spec, model, x0, up) - total_cost(spec, model, x0, dn)) / (2 * h)
    return g


def dp_feasible_grid(spec: OcpSpec, resolution: int = 161, u_levels: int = 31):
    """Dynamic-programming approximation of the feasible set for the
    two-state benchmark: backward reachability of the terminal set under
    gridded inputs, with nearest-cell membership lookups.

    Returns (axis_x1, axis_x2, boolean grid) where True marks states from
    which the terminal set is reachable in <= N steps through the state box.
    """
    model = benchmark_model()
    xs = np.linspace(spec.x_lower[0], spec.x_upper[0], resolution)
    ys = np.linspace(spec.x_lower[1], spec.x_upper[1], resolution)
    X1, X2 = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)

    quad = np.einsum("bi,ij,bj->b", pts, spec.P, pts)
    feas = (quad <= spec.alpha).reshape(resolution, resolution)

    us = np.linspace(spec.u_lower[0], spec.u_upper[0], u_levels)
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    for _ in range(spec.N):
        current = feas.copy()
        for u in us:
            nxt = np.asarray(model.step_map(pts, np.full((len(pts), 1), u)))
            inside = (
                (nxt[:, 0] >= spec.x_lower[0]) & (nxt[:, 0] <= spec.x_upper[0])
                & (nxt[:, 1] >= spec.x_lower[1]) & (nxt[:, 1] <= spec.x_upper[1])
            )
            i0 = np.clip(np.rint((nxt[:, 0] - xs[0]) / dx).astype(int), 0,
                         resolution - 1)
            j0 = np.clip(np.rint((nxt[:, 1] - ys[0]) / dy).astype(int), 0,
                         resolution - 1)
            feas |= (inside & current[i0, j0]).reshape(resolution, resolution)
    return xs, ys, feas


def interior_mask(grid: np.ndarray) -> np.ndarray:
    """Cells whose full 3x3 neighborhood agrees with them — i.e. away from
    the boundary band where any gridded approximation is ambiguous."""
    res = grid.shape[0]
    mask = np.zeros_like(grid, dtype=bool)
    for i in range(1, res - 1):
        for j in range(1, res - 1):
            block = grid[i - 1:i + 2, j - 1:j + 2]
            mask[i, j] = block.all() or not block.any()
    return mask
