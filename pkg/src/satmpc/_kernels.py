"""Compiled fast path for the two-state bilinear benchmark dynamics.

The solver dispatches here when the model is the benchmark (n=2, m=1) and
numba is importable; everything else uses the generic numpy evaluator in
``solver``.  The constraint stacking must match ``ocp.constraints`` row for
row — the test suite asserts bitwise-level agreement between both paths.

Kernel parameter packing (``params`` float64 vector):
    [q11, q12, q22, r, p11, p12, p22, alpha,
     xlo1, xlo2, xhi1, xhi2, ulo, uhi]
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(fn):
            return fn
        if len(a) == 1 and callable(a[0]):
            return a[0]
        return wrap


def pack_params(spec) -> np.ndarray:
    return np.array([
        spec.Q[0, 0], spec.Q[0, 1], spec.Q[1, 1],
        spec.R[0, 0],
        spec.P[0, 0], spec.P[0, 1], spec.P[1, 1],
        spec.alpha,
        spec.x_lower[0], spec.x_lower[1], spec.x_upper[0], spec.x_upper[1],
        spec.u_lower[0], spec.u_upper[0],
    ])


@njit(cache=True)
def bench_f(x1, x2, u):
    n1 = x1 + 0.1 * x2 + 0.1 * (0.5 + 0.5 * x1) * u
    n2 = x2 + 0.1 * x1 + 0.1 * (0.5 - 2.0 * x2) * u
    return n1, n2


@njit(cache=True)
def full_pass(x0, U, params):
    """Rollout, first-order sensitivities, cost V with gradient, and the
    stacked constraint vector G with Jacobian J — one fused sweep."""
    N = U.shape[0]
    q11 = params[0]; q12 = params[1]; q22 = params[2]
    r = params[3]
    p11 = params[4]; p12 = params[5]; p22 = params[6]
    alpha = params[7]
    xlo1 = params[8]; xlo2 = params[9]; xhi1 = params[10]; xhi2 = params[11]
    ulo = params[12]; uhi = params[13]

    xs = np.empty((N + 1, 2))
    S = np.zeros((N + 1, 2, N))
    gV = np.zeros(N)
    xs[0, 0] = x0[0]
    xs[0, 1] = x0[1]
    V = 0.0
    for k in range(N):
        x1 = xs[k, 0]
        x2 = xs[k, 1]
        u = U[k]
        V += q11 * x1 * x1 + 2.0 * q12 * x1 * x2 + q22 * x2 * x2 + r * u * u
        w1 = 2.0 * (q11 * x1 + q12 * x2)
        w2 = 2.0 * (q12 * x1 + q22 * x2)
        for j in range(N):
            gV[j] += w1 * S[k, 0, j] + w2 * S[k, 1, j]
        gV[k] += 2.0 * r * u
        # df/dx and df/du of the bilinear map
        a11 = 1.0 + 0.05 * u
        a22 = 1.0 - 0.2 * u
        b1 = 0.05 + 0.05 * x1
        b2 = 0.05 - 0.2 * x2
        for j in range(N):
            s1 = S[k, 0, j]
            s2 = S[k, 1, j]
            S[k + 1, 0, j] = a11 * s1 + 0.1 * s2
            S[k + 1, 1, j] = 0.1 * s1 + a22 * s2
        S[k + 1, 0, k] += b1
        S[k + 1, 1, k] += b2
        n1, n2 = bench_f(x1, x2, u)
        xs[k + 1, 0] = n1
        xs[k + 1, 1] = n2

    xN1 = xs[N, 0]
    xN2 = xs[N, 1]
    Px1 = p11 * xN1 + p12 * xN2
    Px2 = p12 * xN1 + p22 * xN2
    V += xN1 * Px1 + xN2 * Px2
    for j in range(N):
        gV[j] += 2.0 * (Px1 * S[N, 0, j] + Px2 * S[N, 1, j])

    nrows = 2 * N + 4 * (N - 1) + 5
    G = np.empty(nrows)
    J = np.zeros((nrows, N))
    for k in range(N):
        G[2 * k] = ulo - U[k]
        J[2 * k, k] = -1.0
        G[2 * k + 1] = U[k] - uhi
        J[2 * k + 1, k] = 1.0
    off = 2 * N
    for k in range(1, N):
        rr = off + 4 * (k - 1)
        G[rr] = xlo1 - xs[k, 0]
        G[rr + 1] = xlo2 - xs[k, 1]
        G[rr + 2] = xs[k, 0] - xhi1
        G[rr + 3] = xs[k, 1] - xhi2
        for j in range(N):
            J[rr, j] = -S[k, 0, j]
            J[rr + 1, j] = -S[k, 1, j]
            J[rr + 2, j] = S[k, 0, j]
            J[rr + 3, j] = S[k, 1, j]
    q = off + 4 * (N - 1)
    G[q] = xN1 * Px1 + xN2 * Px2 - alpha
    for j in range(N):
        J[q, j] = 2.0 * (Px1 * S[N, 0, j] + Px2 * S[N, 1, j])
    G[q + 1] = xlo1 - xN1
    G[q + 2] = xlo2 - xN2
    G[q + 3] = xN1 - xhi1
    G[q + 4] = xN2 - xhi2
    for j in range(N):
        J[q + 1, j] = -S[N, 0, j]
        J[q + 2, j] = -S[N, 1, j]
        J[q + 3, j] = S[N, 0, j]
        J[q + 4, j] = S[N, 1, j]
    return xs, S, V, gV, G, J


@njit(cache=True)
def hess_lagrangian(xs, S, U, lam, params):
    """Exact Hessian of V + lam'G via second-order sensitivity propagation.

    The only curvature of the bilinear dynamics is d2f1/dx1du = 0.05 and
    d2f2/dx2du = -0.2; everything else enters through Q, R, P and the
    multipliers on state/terminal rows.
    """
    N = U.shape[0]
    q11 = params[0]; q12 = params[1]; q22 = params[2]
    r = params[3]
    p11 = params[4]; p12 = params[5]; p22 = params[6]

    T = np.zeros((2, N, N))
    Tn = np.zeros((2, N, N))
    H = np.zeros((N, N))
    off = 2 * N
    q = off + 4 * (N - 1)
    for k in range(N):
        x1 = xs[k, 0]
        x2 = xs[k, 1]
        u = U[k]
        w1 = 2.0 * (q11 * x1 + q12 * x2)
        w2 = 2.0 * (q12 * x1 + q22 * x2)
        c1 = 0.0
        c2 = 0.0
        if k >= 1:
            rr = off + 4 * (k - 1)
            c1 = lam[rr + 2] - lam[rr]
            c2 = lam[rr + 3] - lam[rr + 1]
        for jj in range(N):
            s1 = S[k, 0, jj]
            s2 = S[k, 1, jj]
            for ll in range(jj, N):
                t1 = S[k, 0, ll]
                t2 = S[k, 1, ll]
                quad = 2.0 * (q11 * s1 * t1 + q12 * (s1 * t2 + s2 * t1) + q22 * s2 * t2)
                H[jj, ll] += quad + (w1 + c1) * T[0, jj, ll] + (w2 + c2) * T[1, jj, ll]
        H[k, k] += 2.0 * r
        a11 = 1.0 + 0.05 * u
        a22 = 1.0 - 0.2 * u
        for jj in range(N):
            for ll in range(N):
                Tn[0, jj, ll] = a11 * T[0, jj, ll] + 0.1 * T[1, jj, ll]
                Tn[1, jj, ll] = 0.1 * T[0, jj, ll] + a22 * T[1, jj, ll]
        for jj in range(N):
            Tn[0, jj, k] += 0.05 * S[k, 0, jj]
            Tn[0, k, jj] += 0.05 * S[k, 0, jj]
            Tn[1, jj, k] += -0.2 * S[k, 1, jj]
            Tn[1, k, jj] += -0.2 * S[k, 1, jj]
        for jj in range(N):
            for ll in range(N):
                T[0, jj, ll] = Tn[0, jj, ll]
                T[1, jj, ll] = Tn[1, jj, ll]

    xN1 = xs[N, 0]
    xN2 = xs[N, 1]
    Px1 = p11 * xN1 + p12 * xN2
    Px2 = p12 * xN1 + p22 * xN2
    wq = 1.0 + lam[q]                 # terminal cost plus the ellipsoid row
    cb1 = lam[q + 3] - lam[q + 1]     # terminal box rows
    cb2 = lam[q + 4] - lam[q + 2]
    for jj in range(N):
        s1 = S[N, 0, jj]
        s2 = S[N, 1, jj]
        for ll in range(jj, N):
            t1 = S[N, 0, ll]
            t2 = S[N, 1, ll]
            quad = 2.0 * (p11 * s1 * t1 + p12 * (s1 * t2 + s2 * t1) + p22 * s2 * t2)
            H[jj, ll] += wq * (quad + 2.0 * Px1 * T[0, jj, ll] + 2.0 * Px2 * T[1, jj, ll]) \
                + cb1 * T[0, jj, ll] + cb2 * T[1, jj, ll]
    for jj in range(N):
        for ll in range(jj):
            H[jj, ll] = H[ll, jj]
    return H


@njit(cache=True)
def violation_pass(x0, U, params):
    """phi = sum of squared positive parts of the state/terminal rows, with
    gradient; input rows are excluded (handled by projection onto the box)."""
    N = U.shape[0]
    xs, S, V, gV, G, J = full_pass(x0, U, params)
    phi = 0.0
    g = np.zeros(N)
    for rr in range(2 * N, G.shape[0]):
        if G[rr] > 0.0:
            phi += G[rr] * G[rr]
            for j in range(N):
                g[j] += 2.0 * G[rr] * J[rr, j]
    return phi, g


@njit(cache=True)
def restore(x0, U0, params, max_iter, stall_window, phi_target):
    """Spectral projected gradient on the violation objective over the U box.

    Returns the best point found, its phi, and the iteration count.  Stops at
    phi <= phi_target, on a line-search dead end, or when the best value has
    not improved relatively by 1e-3 over `stall_window` iterations.
    """
    N = U0.shape[0]
    ulo = params[12]
    uhi = params[13]
    U = np.empty(N)
    for j in range(N):
        v = U0[j]
        if v < ulo:
            v = ulo
        elif v > uhi:
            v = uhi
        U[j] = v
    phi, g = violation_pass(x0, U, params)
    alpha = 1.0
    phi_best = phi
    U_best = U.copy()
    mark = phi_best          # stall bookkeeping
    mark_iter = 0
    it = 0
    while it < max_iter:
        if phi <= phi_target:
            break
        a = alpha
        ok = False
        phin = phi
        gn = g
        Un = U
        for _ls in range(40):
            Ut = np.empty(N)
            for j in range(N):
                v = U[j] - a * g[j]
                if v < ulo:
                    v = ulo
                elif v > uhi:
                    v = uhi
                Ut[j] = v
            phit, gt = violation_pass(x0, Ut, params)
            if phit < phi:
                Un = Ut
                phin = phit
                gn = gt
                ok = True
                break
            a *= 0.5
        if not ok:
            break
        sy = 0.0
        ss = 0.0
        for j in range(N):
            du = Un[j] - U[j]
            sy += du * (gn[j] - g[j])
            ss += du * du
        alpha = ss / sy if sy > 1e-16 else 1.0
        U = Un
        phi = phin
        g = gn
        if phi < phi_best:
            phi_best = phi
            U_best = U.copy()
        it += 1
        if it - mark_iter >= stall_window:
            if phi_best > mark * (1.0 - 1e-3):
                break
            mark = phi_best
            mark_iter = it
    return U_best, phi_best, it


@njit(cache=True)
def lqr_rollout(x0, K1, K2, N, params):
    """Clipped linear-feedback rollout used as the cold-start seed."""
    ulo = params[12]
    uhi = params[13]
    U = np.empty(N)
    x1 = x0[0]
    x2 = x0[1]
    for k in range(N):
        u = -(K1 * x1 + K2 * x2)
        if u < ulo:
            u = ulo
        elif u > uhi:
            u = uhi
        U[k] = u
        x1, x2 = bench_f(x1, x2, u)
    return U


def warmup() -> None:
    """Force JIT compilation of all kernels (cached on disk afterwards)."""
    if not HAVE_NUMBA:
        return
    params = np.array([0.05, 0.0, 0.05, 0.1, 5.9353, 5.2774, 5.9353, 0.0606,
                       -2.0, -2.0, 2.0, 2.0, -0.5, 0.5])
    x0 = np.array([0.1, -0.1])
    U = np.zeros(12)
    xs, S, V, gV, G, J = full_pass(x0, U, params)
    hess_lagrangian(xs, S, U, np.zeros(G.shape[0]), params)
    restore(x0, U, params, 5, 50, 1e-22)
    lqr_rollout(x0, 1.0, 1.0, 12, params)
