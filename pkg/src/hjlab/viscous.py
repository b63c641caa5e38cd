"""Maximal solution of the viscous state-constrained problem.

The equation lam*u + |Du|^p - eps*Lap(u) = f loses its boundary condition for
p > 2; the maximal solution is realized constructively as the increasing
limit of Dirichlet problems u = M on the lattice ghost ring, M running up a
geometric ladder until the interior saturates. Each Dirichlet problem is
solved by damped Newton on the monotone discrete system (Godunov upwind
gradient magnitude, centered Laplacian).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid, GridFunction
from .hamiltonian import ProblemSpec

__all__ = [
    "ViscousScheme",
    "ViscousResult",
    "NewtonError",
    "LadderError",
    "solve_dirichlet_viscous",
    "pde_residual_on_field",
    "solve_maximal_viscous",
    "gradient_bound_certificate",
    "viscous_comparison_check",
    "viscous_residual_tol",
    "grad_margin",
]

C_VISC = 2.0
_GRAD_FLOOR2 = 1e-24  # differentiability floor for |.|^p at 0


def viscous_residual_tol(h: float, eps: float) -> float:
    # centered-Laplacian truncation O(h^2) amplified by 1/eps, plus upwind O(h)
    return C_VISC * (h * h / max(eps, 1e-300) + h)


def grad_margin(h: float) -> float:
    return 0.1 + 3.0 * h


class NewtonError(RuntimeError):
    def __init__(self, message: str, last_residual: float = np.nan):
        super().__init__(message)
        self.last_residual = last_residual


class LadderError(RuntimeError):
    def __init__(self, message: str, change_profile=None):
        super().__init__(message)
        self.change_profile = change_profile or []


@dataclass(frozen=True)
class ViscousScheme:
    ladder_base: Optional[float] = None  # default: max(sup f / lam, 1)
    ladder_factor: float = 2.0
    ladder_count: int = 14
    newton_tolerance: float = 1e-10
    max_newton_iters: int = 60
    ladder_stop_tol: float = 1e-8

    def ladder(self, spec: ProblemSpec) -> np.ndarray:
        base = self.ladder_base
        if base is None:
            base = max(spec.f.sup / spec.lam, 1.0)
        if self.ladder_factor <= 1.0:
            raise ValueError("Dirichlet ladder must be strictly increasing (factor > 1)")
        return base * self.ladder_factor ** np.arange(self.ladder_count)


@dataclass
class ViscousResult:
    u_eps: GridFunction
    ladder_levels_used: int
    interior_change_last: float
    pde_residual: float
    change_profile: list = field(default_factory=list)
    saturation_ok: bool = True


def _upwind_parts(u: np.ndarray, grid: Grid, ghost: float):
    """Per-axis Godunov slope g = max(backward, -forward, 0) with ghost values
    outside the active set; returns (g, donor) where donor[:, ax] is the
    active index the upwind branch leans on (-1 for ghost or inactive)."""
    n, dim = grid.n_active, grid.dim
    g = np.zeros((n, dim))
    donor = np.full((n, dim), -1, dtype=np.int64)
    h = grid.h
    for ax in range(dim):
        left, right = grid.neighbors[:, ax, 0], grid.neighbors[:, ax, 1]
        vl = np.where(left >= 0, u[np.maximum(left, 0)], ghost)
        vr = np.where(right >= 0, u[np.maximum(right, 0)], ghost)
        a = (u - vl) / h
        b = (u - vr) / h
        m = np.minimum(vl, vr)
        ga = np.maximum(np.maximum(a, b), 0.0)
        g[:, ax] = ga
        use_left = (vl <= vr) & (ga > 0)
        use_right = (vr < vl) & (ga > 0)
        donor[use_left, ax] = left[use_left]
        donor[use_right, ax] = right[use_right]
        # donor -1 with ga > 0 means the upwind neighbor is the ghost ring
        del m
    return g, donor


def _residual_and_jacobian(u: np.ndarray, grid: Grid, spec: ProblemSpec, ghost: float, f_vals: np.ndarray):
    n, dim = grid.n_active, grid.dim
    h, lam, p, eps = grid.h, spec.lam, spec.exponents.p, spec.epsilon

    g, donor = _upwind_parts(u, grid, ghost)
    s2 = np.sum(g * g, axis=1) + _GRAD_FLOOR2
    mag = s2 ** (p / 2.0)
    dmag_ds2 = (p / 2.0) * s2 ** (p / 2.0 - 1.0)

    lap = np.zeros(n)
    for ax in range(dim):
        left, right = grid.neighbors[:, ax, 0], grid.neighbors[:, ax, 1]
        vl = np.where(left >= 0, u[np.maximum(left, 0)], ghost)
        vr = np.where(right >= 0, u[np.maximum(right, 0)], ghost)
        lap += (vl + vr - 2.0 * u) / h**2

    F = lam * u + mag - eps * lap - f_vals
    # per-node scale for relative residual norms: band nodes next to a large
    # ghost value carry term magnitudes far above float precision at tol
    scale = 1.0 + lam * np.abs(u) + mag + eps * np.abs(lap) + np.abs(f_vals)

    rows, cols, vals = [], [], []
    diag = np.full(n, lam + eps * 2.0 * dim / h**2)
    for ax in range(dim):
        left, right = grid.neighbors[:, ax, 0], grid.neighbors[:, ax, 1]
        for nbr in (left, right):
            ok = nbr >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(nbr[ok])
            vals.append(np.full(ok.sum(), -eps / h**2))
        # upwind branch contribution: d mag / du_i += 2 g/h * dmag_ds2, and
        # -2 g/h * dmag_ds2 toward the donor node (ghost donors drop out)
        active_branch = g[:, ax] > 0
        coeff = 2.0 * g[:, ax] * dmag_ds2 / h
        diag += np.where(active_branch, coeff, 0.0)
        dn = donor[:, ax]
        ok = active_branch & (dn >= 0)
        rows.append(np.flatnonzero(ok))
        cols.append(dn[ok])
        vals.append(-coeff[ok])
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return F, J, scale


def _newton(
    spec: ProblemSpec,
    grid: Grid,
    boundary_value: float,
    u0: np.ndarray,
    f_vals: np.ndarray,
    scheme: ViscousScheme,
):
    """One damped-Newton run; returns (u, converged, last_norm)."""
    u = np.array(u0, dtype=float)
    F, J, w = _residual_and_jacobian(u, grid, spec, boundary_value, f_vals)
    norm = float(np.max(np.abs(F) / w))
    for _ in range(scheme.max_newton_iters):
        if norm <= scheme.newton_tolerance:
            return u, True, norm
        step = spla.spsolve(J.tocsc(), F)
        t = 1.0
        for _ in range(30):  # Armijo backtracking, factor 1/2
            trial = u - t * step
            Ft, Jt, wt = _residual_and_jacobian(trial, grid, spec, boundary_value, f_vals)
            nt = float(np.max(np.abs(Ft) / wt))
            if nt < (1.0 - 1e-4 * t) * norm or nt <= scheme.newton_tolerance:
                u, F, J, norm = trial, Ft, Jt, nt
                break
            t *= 0.5
        else:
            return u, False, norm
    return u, norm <= scheme.newton_tolerance, norm


def solve_dirichlet_viscous(
    spec: ProblemSpec,
    grid: Grid,
    boundary_value: float,
    scheme: Optional[ViscousScheme] = None,
    u0: Optional[np.ndarray] = None,
) -> GridFunction:
    """Damped-Newton solution of the Dirichlet problem with ghost value M.

    A flat start at the ghost value puts Newton on the wrong side of the
    boundary layer, so the default start is flat at the interior scale
    sup f / lam and, if a run stalls, the ghost value is continued upward
    from that scale in adaptive increments with warm starts.
    """
    if spec.epsilon <= 0:
        raise ValueError("viscous solver requires epsilon > 0")
    if not np.isfinite(boundary_value):
        raise ValueError("Dirichlet value must be finite")
    scheme = scheme or ViscousScheme()
    f_vals = np.asarray(spec.f(grid.points), dtype=float)

    # a stalled line search near tolerance is the linear-solver precision
    # floor, not divergence; field quality is certified downstream against
    # viscous_residual_tol, so the acceptance floor here can sit at 1e-7
    accept = max(100.0 * scheme.newton_tolerance, 1e-7)

    m_base = spec.f.sup / spec.lam
    u = np.full(grid.n_active, m_base) if u0 is None else np.array(u0, dtype=float)
    u_run, ok, norm = _newton(spec, grid, boundary_value, u, f_vals, scheme)
    if ok or norm <= accept:
        return GridFunction(grid, u_run)

    # continuation in the ghost value, restarted from the interior scale and
    # walked toward the target in whichever direction it lies
    m_cur = m_base
    u = np.full(grid.n_active, m_base)
    sgn = 1.0 if boundary_value >= m_base else -1.0
    d_m = max(abs(boundary_value - m_cur), 1e-3)
    norm = np.inf
    solved = False
    while sgn * (boundary_value - m_cur) > 0:
        m_try = m_cur + sgn * d_m
        if sgn * (m_try - boundary_value) >= 0:
            m_try = boundary_value
        u_try, ok, norm = _newton(spec, grid, m_try, u, f_vals, scheme)
        if ok or norm <= accept:
            m_cur, u = m_try, u_try
            solved = m_cur == boundary_value
            d_m *= 2.0
        else:
            d_m *= 0.25
            if d_m < 1e-12 * max(1.0, abs(boundary_value)):
                raise NewtonError(
                    f"Newton continuation stalled at ghost value {m_cur:g} "
                    f"(target {boundary_value:g}, residual {norm:.3e})",
                    last_residual=norm,
                )
    if not solved:
        # target coincides with the start value but the warm run above failed
        u, ok, norm = _newton(spec, grid, boundary_value, u, f_vals, scheme)
        if not (ok or norm <= accept):
            raise NewtonError(
                f"Newton failed at ghost value {boundary_value:g} "
                f"(residual {norm:.3e})",
                last_residual=norm,
            )
    return GridFunction(grid, u)


def _extrapolate_band(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Replace band-node values by one-sided linear extrapolation from the
    interior, removing the Dirichlet-artifact layer from the returned field."""
    out = u.copy()
    band_rows = np.flatnonzero(grid.band_mask)
    interior = grid.interior_mask()
    for i in band_rows:
        best = None
        for ax in range(grid.dim):
            for side in (0, 1):
                j = grid.neighbors[i, ax, side]
                if j >= 0 and interior[j]:
                    k = grid.neighbors[j, ax, side]
                    if k >= 0 and interior[k]:
                        cand = 2.0 * u[j] - u[k]
                    else:
                        cand = u[j]
                    if best is None or cand < best:
                        best = cand
        if best is not None:
            out[i] = best
    return out


def solve_maximal_viscous(
    spec: ProblemSpec,
    grid: Grid,
    scheme: Optional[ViscousScheme] = None,
) -> ViscousResult:
    """Increasing-Dirichlet limit: run the ladder until interior values
    (nodes with boundary distance >= 2h) stop moving."""
    scheme = scheme or ViscousScheme()
    ladder = scheme.ladder(spec)
    deep = grid.dist >= 2.0 * grid.h
    if not deep.any():
        deep = grid.interior_mask()

    prev = None
    prev_res = None
    changes: list[float] = []
    for j, M in enumerate(ladder):
        gf = solve_dirichlet_viscous(spec, grid, float(M), scheme, u0=prev)
        if prev is not None:
            change = float(np.max(np.abs(gf.values[deep] - prev[deep])))
            changes.append(change)
            if change <= scheme.ladder_stop_tol:
                return _finish(spec, grid, gf, float(M), j + 1, changes, True, scheme)
            # knee: once the ghost value overshoots the scale the grid can
            # resolve, per-level interior change stops decreasing and the
            # remaining drift is boundary-layer leakage, not convergence;
            # the previous level is the best discrete truncation
            if len(changes) >= 2 and change >= 0.95 * changes[-2]:
                out, M_prev = prev_res
                saturated = all(b <= a for a, b in zip(changes[:-1], changes[1:-1]))
                return _finish(spec, grid, out, M_prev, j, changes, saturated, scheme)
        prev_res = (gf, float(M))
        prev = gf.values
    raise LadderError(
        f"Dirichlet ladder exhausted ({len(ladder)} levels, top {ladder[-1]:.3g}) "
        f"without interior saturation",
        change_profile=changes,
    )


def _calibrated_boundary_value(spec: ProblemSpec, grid: Grid, u: np.ndarray) -> Optional[float]:
    """Estimate the trace of the maximal solution from the interior field.

    Near the boundary the solution follows the universal layer profile
    u(d) ~ u_b - A d^alpha_p with A = (eps/(p-1))^(1/(p-1)) / alpha_p (the
    balance |Du|^p = eps*Lap(u), independent of f).  Inverting the profile at
    anchor nodes a few cells in -- past the ghost-contaminated ring but still
    inside the layer -- recovers u_b without ever resolving the d^alpha_p
    singularity on the lattice."""
    e = spec.exponents
    h = grid.h
    win = (grid.dist >= 8.0 * h) & (grid.dist <= 16.0 * h)
    if not win.any():
        return None
    A = (spec.epsilon / (e.p - 1.0)) ** (1.0 / (e.p - 1.0)) / e.alpha_p
    m = float(np.max(u[win] + A * grid.dist[win] ** e.alpha_p))
    return m if np.isfinite(m) else None


def _finish(spec, grid, gf, M, levels, changes, saturated, scheme=None) -> ViscousResult:
    # The saturated ladder field carries an O(1) relative error on the first
    # few lattice rings: the ghost value M far exceeds the true boundary trace,
    # and the d^alpha_p layer transmits the mismatch inward only slowly.  One
    # final Dirichlet solve at the trace estimated from the interior removes
    # that ring artifact while leaving the deep field essentially unchanged.
    m_cal = _calibrated_boundary_value(spec, grid, gf.values)
    if m_cal is not None and m_cal < M:
        try:
            gf = solve_dirichlet_viscous(spec, grid, m_cal, scheme, u0=gf.values)
            M = m_cal
        except NewtonError:
            pass
    vals = _extrapolate_band(gf.values, grid)
    out = GridFunction(grid, vals)
    resid = _pde_residual(gf, spec, M)
    return ViscousResult(out, levels, changes[-1] if changes else 0.0, resid, changes, saturated)


def _pde_residual(u: GridFunction, spec: ProblemSpec, ghost: float) -> float:
    grid = u.grid
    f_vals = np.asarray(spec.f(grid.points), dtype=float)
    F, _, _ = _residual_and_jacobian(u.values, grid, spec, ghost, f_vals)
    deep = grid.dist >= 2.0 * grid.h
    return float(np.max(np.abs(F[deep]))) if deep.any() else float(np.max(np.abs(F)))


def pde_residual_on_field(u: GridFunction, spec: ProblemSpec) -> float:
    """PDE residual of a stored field, restricted to nodes whose full stencil
    avoids the extrapolated boundary band (d >= 3h)."""
    grid = u.grid
    f_vals = np.asarray(spec.f(grid.points), dtype=float)
    ghost = float(np.max(u.values))
    F, _, _ = _residual_and_jacobian(u.values, grid, spec, ghost, f_vals)
    sel = grid.dist >= 3.0 * grid.h
    if not sel.any():
        sel = grid.interior_mask()
    return float(np.max(np.abs(F[sel])))


def _centered_gradient_norm(u: np.ndarray, grid: Grid) -> np.ndarray:
    g2 = np.zeros(grid.n_active)
    for ax in range(grid.dim):
        left, right = grid.neighbors[:, ax, 0], grid.neighbors[:, ax, 1]
        both = (left >= 0) & (right >= 0)
        d = np.zeros(grid.n_active)
        d[both] = (u[right[both]] - u[left[both]]) / (2.0 * grid.h)
        only_l = (left >= 0) & ~both
        d[only_l] = (u[only_l] - u[left[only_l]]) / grid.h
        only_r = (right >= 0) & ~both
        d[only_r] = (u[right[only_r]] - u[only_r]) / grid.h
        g2 += d * d
    return np.sqrt(g2)


def gradient_bound_certificate(result: ViscousResult, spec: ProblemSpec) -> float:
    """Worst ratio of |D_h u| to the sharp interior gradient bound
    ((p/(p-1)) * osc f + (eps/d)^(p/(p-1)))^(1/p) over nodes with d >= 4h."""
    grid = result.u_eps.grid
    e = spec.exponents
    sel = grid.dist >= 4.0 * grid.h
    if not sel.any():
        return 0.0
    grad = _centered_gradient_norm(result.u_eps.values, grid)[sel]
    d = grid.dist[sel]
    bound = (e.p / (e.p - 1.0) * spec.f.osc + (spec.epsilon / d) ** (e.p / (e.p - 1.0))) ** (1.0 / e.p)
    return float(np.max(grad / bound))


def viscous_comparison_check(
    result_u: ViscousResult,
    result_v: ViscousResult,
    spec_u: ProblemSpec,
    spec_v: ProblemSpec,
) -> float:
    """sup(u - v) - (1/lam) * sup(f_u - f_v)^+ for two solves sharing
    (domain, p, lam, eps); nonpositive up to numerics by the comparison
    principle."""
    grid = result_u.u_eps.grid
    deep = grid.dist >= 2.0 * grid.h
    du = result_u.u_eps.values[deep] - result_v.u_eps.values[deep]
    fu = np.asarray(spec_u.f(grid.points), dtype=float)
    fv = np.asarray(spec_v.f(grid.points), dtype=float)
    gap = float(np.max(du)) - float(np.max(np.maximum(fu - fv, 0.0))) / spec_u.lam
    return gap
