"""Pure-numpy sweep kernels (Jacobi relaxations).

Same fixed points as the compiled Gauss-Seidel core, reached with plain
vectorized Jacobi sweeps; markedly slower on fine grids. Selected when the
compiled extension is unavailable or HJLAB_PURE_PYTHON=1.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def semi_lagrangian_sweeps(
    u: np.ndarray,
    idx: np.ndarray,
    w: np.ndarray,
    ctrl_cost: np.ndarray,
    node_cost: np.ndarray,
    beta: float,
    tol: float,
    max_sweeps: int,
    orderings=None,
):
    """Iterate the discrete dynamic-programming operator until the estimated
    fixed-point error drops below tol.

    u          (N,) initial values, modified in place
    idx        (N, C, K) interpolation corner indices into u
    w          (N, C, K) interpolation weights
    ctrl_cost  (C,) running-cost contribution of each control
    node_cost  (N,) running-cost contribution of each node
    beta       one-step discount factor in (0, 1)

    Returns (sweeps_done, last_change, converged).
    """
    change_prev = np.inf
    ratio = beta
    for sweep in range(1, max_sweeps + 1):
        interp = np.einsum("nck,nck->nc", w, u[idx], optimize=True)
        cand = ctrl_cost[None, :] + node_cost[:, None] + beta * interp
        new = cand.min(axis=1)
        change = float(np.max(np.abs(new - u)))
        u[:] = new
        if change_prev > 0 and np.isfinite(change_prev):
            r = change / max(change_prev, 1e-300)
            if 0 < r < 1:
                ratio = 0.5 * ratio + 0.5 * r
        change_prev = change
        err_est = change * ratio / max(1.0 - ratio, 1e-12)
        if change <= tol and err_est <= 10.0 * tol:
            return sweep, change, True
    return max_sweeps, change_prev, False


def upwind_fd_sweeps(
    u: np.ndarray,
    neighbors: np.ndarray,
    h: float,
    lam: float,
    p: float,
    f: np.ndarray,
    tol: float,
    max_sweeps: int,
    orderings=None,
):
    """Nonlinear Jacobi relaxation for lam*u + |D_h u|^p = f with Godunov
    upwind gradient magnitude; per node the scalar monotone equation is solved
    with safeguarded bisection. neighbors is (N, dim, 2) with -1 for missing."""
    n, dim, _ = neighbors.shape
    floor2 = 1e-24
    change_prev = np.inf
    ratio = 0.9
    for sweep in range(1, max_sweeps + 1):
        m = np.empty((n, dim))
        for ax in range(dim):
            left, right = neighbors[:, ax, 0], neighbors[:, ax, 1]
            vl = np.where(left >= 0, u[np.maximum(left, 0)], np.inf)
            vr = np.where(right >= 0, u[np.maximum(right, 0)], np.inf)
            m[:, ax] = np.minimum(vl, vr)
        lo = np.minimum(m.min(axis=1), f / lam)
        hi = f / lam
        # bisection on phi(v) = lam*v + (sum_a ((v - m_a)^+ / h)^2)^(p/2) - f
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            g2 = np.sum(np.maximum(mid[:, None] - m, 0.0) ** 2, axis=1) / h**2
            phi = lam * mid + (g2 + floor2) ** (p / 2.0) - f
            neg = phi < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        new = 0.5 * (lo + hi)
        change = float(np.max(np.abs(new - u)))
        u[:] = new
        if change_prev > 0 and np.isfinite(change_prev):
            r = change / max(change_prev, 1e-300)
            if 0 < r < 1:
                ratio = 0.5 * ratio + 0.5 * r
        change_prev = change
        err_est = change * ratio / max(1.0 - ratio, 1e-12)
        if change <= tol and err_est <= 10.0 * tol:
            return sweep, change, True
    return max_sweeps, change_prev, False
