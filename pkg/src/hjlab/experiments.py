"""Vanishing-viscosity sweeps: measure u^eps - u across an epsilon ladder,
keep discretization error out of the signal, fit the rate exponent and
validate the explicit two-sided bounds.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import first_order, viscous
from .analysis import TheoreticalConstants, theoretical_constants
from .first_order import (
    make_scheme,
    oracle_agreement_tol,
    solve_semi_lagrangian,
    solve_upwind_fd,
)
from .geometry import Grid, GridFunction, build_grid
from .hamiltonian import ProblemSpec
from .viscous import ViscousScheme, solve_maximal_viscous

__all__ = [
    "SweepPlan",
    "RateRow",
    "RateReport",
    "richardson_scheme_error",
    "run_sweep",
    "fit_rate",
    "validate_bounds",
    "write_csv",
    "write_plot_script",
    "band_modulus_slack",
]

CONTAMINATION_FRACTION = 0.1
MIN_CERTIFIED_ROWS = 4
MIN_FIT_R2 = 0.98


@dataclass(frozen=True)
class SweepPlan:
    base: ProblemSpec  # epsilon ignored; one PDE family
    eps_start: float = 1e-1
    eps_factor: float = 0.5
    eps_count: int = 7
    h_max: float = 2.0**-7
    grid_policy: str = "min(h_max, eps)"
    max_refine: int = 6
    sweep_tolerance: float = 1e-9
    viscous_scheme: ViscousScheme = field(default_factory=ViscousScheme)
    seed: int = 0
    workers: int = 1

    def epsilons(self) -> np.ndarray:
        if not (0 < self.eps_factor < 1):
            raise ValueError("epsilon ladder must be strictly decreasing")
        return self.eps_start * self.eps_factor ** np.arange(self.eps_count)

    def policy_h(self, eps: float) -> float:
        return min(self.h_max, eps)


@dataclass
class RateRow:
    epsilon: float
    h: float
    sup_error: float
    min_signed: float
    abs_sup_error: float
    scheme_error_estimate: float
    certified: bool
    solver_iterations_u: int
    ladder_levels_ueps: int
    richardson_order: float = np.nan
    warning: str = ""


@dataclass
class Verdict:
    name: str
    detail: str
    passed: Optional[bool]  # None = not-applicable / inconclusive

    @property
    def status(self) -> str:
        if self.passed is None:
            return "not-applicable"
        return "PASS" if self.passed else "FAIL"


@dataclass
class RateReport:
    plan: SweepPlan
    rows: list
    fitted_slope: float
    fitted_intercept: float
    r_squared: float
    constants: TheoreticalConstants
    verdicts: list

    def all_applicable_pass(self) -> bool:
        return all(v.passed is not False for v in self.verdicts)


def band_modulus_slack(spec: ProblemSpec, h: float) -> float:
    """Worst contribution of the excluded 2h boundary band, bounded by the
    Hoelder modulus of the viscous solution."""
    a = spec.exponents.alpha_p
    c_band = 1.0 / a + spec.f.osc ** (1.0 / spec.exponents.p)
    return c_band * (2.0 * h) ** a


# ---------------------------------------------------------------------------
# Richardson ladder


def _interpolate_to(coarse: GridFunction, fine: Grid) -> np.ndarray:
    idx, w = first_order._interpolation_tables(coarse.grid, fine.points)
    return np.einsum("mk,mk->m", w, coarse.values[idx])


def _common_deep_error(a: GridFunction, b: GridFunction, cut: Optional[float] = None) -> float:
    """sup |a - b| over nodes of the coarser grid that both grids resolve,
    restricted to boundary distance >= cut (default: the coarse 2h band)."""
    coarse, fine = (a, b) if a.grid.h >= b.grid.h else (b, a)
    g = coarse.grid
    deep = g.dist >= (2.0 * g.h if cut is None else cut)
    fine_vals = _interpolate_to(fine, g)
    return float(np.max(np.abs(coarse.values[deep] - fine_vals[deep])))


def richardson_scheme_error(
    solve: Callable[[float], GridFunction],
    h: float,
) -> tuple[float, float, str]:
    """Error estimate for the solution at spacing h from solves at h, h/2,
    h/4: d1/(1 - 2^-r) with empirical order r clamped to [0.4, 2.2].

    Both ladder differences are taken over the same node set (boundary
    distance >= 2h, the measurement cut at the coarsest level): letting the
    comparison set creep toward the boundary with the finer pair would mix
    the Hoelder modulus of the solution across the cut into what should be a
    pure discretization estimate; that modulus is accounted for separately
    in the verdict slack.

    Returns (estimate, order, warning)."""
    u_h = solve(h)
    u_h2 = solve(h / 2)
    u_h4 = solve(h / 4)
    cut = 2.0 * h
    d1 = _common_deep_error(u_h, u_h2, cut)
    d2 = _common_deep_error(u_h2, u_h4, cut)
    if d2 <= 0 or d1 <= 0:
        return max(d1, 0.0), np.nan, ""
    if d1 <= d2:
        return d1, np.nan, "non-monotone refinement ladder"
    r = float(np.clip(np.log2(d1 / d2), 0.4, 2.2))
    return d1 / (1.0 - 2.0**-r), r, ""


# ---------------------------------------------------------------------------
# one epsilon row


def _solve_first_order(spec: ProblemSpec, h: float, tol: float, cache: dict) -> GridFunction:
    """Upwind finite-difference solve (cheap per grid, so it carries the
    Richardson ladder); warm started from the next coarser level."""
    key = ("fd", round(h, 15))
    if key in cache:
        return cache[key]
    grid = build_grid(spec.domain, h)
    u0 = None
    coarse = cache.get(("fd", round(2 * h, 15)))
    if coarse is not None:
        u0 = _interpolate_to(coarse, grid)
    scheme = make_scheme(spec, grid, "upwind_fd", sweep_tolerance=tol)
    res = solve_upwind_fd(spec, grid, scheme, u0=u0)
    cache[key] = res.u
    cache[("fd_iters", round(h, 15))] = res.iterations
    return res.u


def _solve_viscous(spec: ProblemSpec, h: float, scheme: ViscousScheme, cache: dict):
    key = ("visc", round(h, 15))
    if key in cache:
        return cache[key]
    grid = build_grid(spec.domain, h)
    res = solve_maximal_viscous(spec, grid, scheme)
    cache[key] = res
    return res


def run_row(plan: SweepPlan, eps: float) -> RateRow:
    spec0 = plan.base.with_epsilon(0.0)
    spec_eps = plan.base.with_epsilon(eps)
    h_policy = plan.policy_h(eps)
    cache: dict = {}

    # cross-scheme certification, once per row on the policy grid: the
    # value-iteration scheme, run from its own supersolution start, must land
    # on the finite-difference field; its stop tolerance only needs to sit
    # well below the h^(1/2) agreement tolerance
    u_policy = _solve_first_order(spec0, h_policy, plan.sweep_tolerance, cache)
    grid_policy = u_policy.grid
    sl = solve_semi_lagrangian(
        spec0,
        grid_policy,
        make_scheme(
            spec0, grid_policy, "semi_lagrangian",
            sweep_tolerance=max(plan.sweep_tolerance, oracle_agreement_tol(h_policy) / 1e3),
        ),
    )
    agree = float(np.max(np.abs(sl.u.values - u_policy.values)))
    cross_warn = ""
    if agree > oracle_agreement_tol(h_policy):
        cross_warn = f"cross-scheme disagreement {agree:.3e} above tolerance"

    # refine the measurement grid until scheme error stays under the
    # contamination fraction of the measured signal
    h = h_policy
    for attempt in range(plan.max_refine + 1):
        est_fd, r_fd, warn_fd = richardson_scheme_error(
            lambda hh: _solve_first_order(spec0, hh, plan.sweep_tolerance, cache), h
        )
        est_v, r_v, warn_v = richardson_scheme_error(
            lambda hh: _solve_viscous(spec_eps, hh, plan.viscous_scheme, cache).u_eps, h
        )
        scheme_error = est_fd + est_v
        u = cache[("fd", round(h, 15))]
        ueps = cache[("visc", round(h, 15))]
        grid = u.grid

        deep = grid.dist >= 2.0 * grid.h
        diff = ueps.u_eps.values[deep] - u.values[deep]
        sup_error = float(np.max(diff))
        min_signed = float(np.min(diff))
        abs_sup = float(np.max(np.abs(diff)))
        certified = sup_error > 0 and scheme_error <= CONTAMINATION_FRACTION * sup_error
        warning = "; ".join(w for w in (cross_warn, warn_fd, warn_v) if w)
        if certified or attempt == plan.max_refine:
            return RateRow(
                epsilon=eps,
                h=h,
                sup_error=sup_error,
                min_signed=min_signed,
                abs_sup_error=abs_sup,
                scheme_error_estimate=scheme_error,
                certified=certified,
                solver_iterations_u=cache[("fd_iters", round(h, 15))],
                ladder_levels_ueps=ueps.ladder_levels_used,
                richardson_order=r_v,
                warning=warning or ("uncertified" if not certified else ""),
            )
        h /= 2.0
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# fitting and verdicts


def fit_rate(rows: list) -> tuple[float, float, float]:
    """Least squares of log(sup_error) on log(epsilon) over certified rows."""
    usable = [r for r in rows if r.certified and r.sup_error > 0]
    if len(usable) < MIN_CERTIFIED_ROWS:
        raise ValueError(
            f"rate fit needs at least {MIN_CERTIFIED_ROWS} certified rows with positive "
            f"error, got {len(usable)}"
        )
    x = np.log([r.epsilon for r in usable])
    y = np.log([r.sup_error for r in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _improved_applicable(spec: ProblemSpec) -> bool:
    f = spec.f
    if not f.nonnegative:
        return False
    if f.is_constant:
        return True  # constant data reduces to the zero-data estimate
    semiconcave_compact = (
        f.semiconcavity_const is not None
        and np.isfinite(f.semiconcavity_const)
        and f.support_margin is not None
    )
    return semiconcave_compact or f.vanishes_to_second_order


def validate_bounds(report: RateReport) -> list:
    """One verdict per (inequality, epsilon row), plus the rate verdict."""
    spec = report.plan.base
    cst = report.constants
    lam = spec.lam
    alpha = cst.alpha_p
    verdicts: list[Verdict] = []
    upper_ok = spec.f.nonnegative and spec.f.vanishes_on_boundary
    improved_ok = _improved_applicable(spec)

    for row in report.rows:
        if not row.certified:
            continue
        slack = row.scheme_error_estimate + band_modulus_slack(spec, row.h)
        sq = np.sqrt(row.epsilon)
        bound_low = -(cst.Lambda_lower / lam) * sq - slack
        verdicts.append(
            Verdict(
                name="LOWER",
                detail=f"eps={row.epsilon:.3g}: min_signed {row.min_signed:.3e} >= {bound_low:.3e}",
                passed=row.min_signed >= bound_low,
            )
        )
        if upper_ok:
            bound_up = (cst.Lambda_upper / lam) * sq + slack
            verdicts.append(
                Verdict(
                    name="UPPER",
                    detail=f"eps={row.epsilon:.3g}: sup_error {row.sup_error:.3e} <= {bound_up:.3e}",
                    passed=row.sup_error <= bound_up,
                )
            )
        else:
            verdicts.append(Verdict("UPPER", f"eps={row.epsilon:.3g}: data not in hypothesis class", None))
        if improved_ok:
            bound_imp = cst.improved_coeff * row.epsilon ** (1.0 - alpha / 2.0) + slack
            verdicts.append(
                Verdict(
                    name="IMPROVED",
                    detail=f"eps={row.epsilon:.3g}: sup_error {row.sup_error:.3e} <= {bound_imp:.3e}",
                    passed=row.sup_error <= bound_imp,
                )
            )
        else:
            verdicts.append(Verdict("IMPROVED", f"eps={row.epsilon:.3g}: data not in hypothesis class", None))

    if report.r_squared < MIN_FIT_R2:
        verdicts.append(
            Verdict("RATE", f"inconclusive-fit: r^2 {report.r_squared:.4f} < {MIN_FIT_R2}", None)
        )
    else:
        threshold = (1.0 - alpha / 2.0 - 0.05) if improved_ok else 0.45
        verdicts.append(
            Verdict(
                name="RATE",
                detail=f"fitted slope {report.fitted_slope:.3f} >= {threshold:.3f} (r^2 {report.r_squared:.4f})",
                passed=report.fitted_slope >= threshold,
            )
        )
    return verdicts


def run_sweep(plan: SweepPlan) -> RateReport:
    """Solve all epsilon rows, fit the rate, and attach bound verdicts."""
    eps_list = list(plan.epsilons())
    if plan.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=plan.workers) as pool:
            rows = list(pool.map(run_row, [plan] * len(eps_list), eps_list))
    else:
        rows = [run_row(plan, eps) for eps in eps_list]
    rows.sort(key=lambda r: -r.epsilon)

    spec = plan.base
    constants = theoretical_constants(spec.f, spec.domain, spec.exponents, spec.lam, spec.domain.dim)
    n_certified = sum(r.certified and r.sup_error > 0 for r in rows)
    if n_certified >= MIN_CERTIFIED_ROWS:
        slope, intercept, r2 = fit_rate(rows)
    else:
        raise RuntimeError(
            f"only {n_certified} certified rows (need {MIN_CERTIFIED_ROWS}); "
            + "; ".join(f"eps={r.epsilon:.3g} scheme_err={r.scheme_error_estimate:.2e} sup_err={r.sup_error:.2e}" for r in rows)
        )
    report = RateReport(plan, rows, slope, intercept, r2, constants, [])
    report.verdicts = validate_bounds(report)
    return report


# ---------------------------------------------------------------------------
# artifacts


def write_csv(report: RateReport, path, header_lines: tuple[str, ...] = ()) -> None:
    cst = report.constants
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# constants: " + ", ".join(
            f"{k}={getattr(cst, k):.17g}"
            for k in ("k", "C_Omega", "Lambda_lower", "Lambda_upper", "alpha_p", "improved_coeff")
        ) + "\n")
        fh.write(
            "epsilon,h,sup_error,min_signed_error,abs_sup_error,"
            "scheme_error_estimate,certified,solver_iterations_u,ladder_levels_ueps\n"
        )
        for r in report.rows:
            fh.write(
                f"{r.epsilon:.17g},{r.h:.17g},{r.sup_error:.17g},{r.min_signed:.17g},"
                f"{r.abs_sup_error:.17g},{r.scheme_error_estimate:.17g},"
                f"{int(r.certified)},{r.solver_iterations_u},{r.ladder_levels_ueps}\n"
            )
        fh.write(f"fitted_slope,{report.fitted_slope:.17g}\n")
        fh.write(f"r_squared,{report.r_squared:.17g}\n")
        fh.write(f"Lambda_lower,{cst.Lambda_lower:.17g}\n")
        fh.write(f"Lambda_upper,{cst.Lambda_upper:.17g}\n")
        fh.write(f"improved_coeff,{cst.improved_coeff:.17g}\n")
        for v in report.verdicts:
            fh.write(f"verdict,{v.name},{v.status},{v.detail}\n")


def write_plot_script(report: RateReport, data_path, script_path) -> None:
    """gnuplot-compatible data + script: log sup_error against log eps with
    the theoretical bound lines."""
    cst = report.constants
    lam = report.plan.base.lam
    alpha = cst.alpha_p
    with open(data_path, "w") as fh:
        fh.write("# eps sup_error upper_bound improved_bound\n")
        for r in report.rows:
            up = cst.Lambda_upper / lam * np.sqrt(r.epsilon)
            imp = cst.improved_coeff * r.epsilon ** (1 - alpha / 2)
            fh.write(f"{r.epsilon:.17g} {r.sup_error:.17g} {up:.17g} {imp:.17g}\n")
    with open(script_path, "w") as fh:
        fh.write(
            "set logscale xy\n"
            "set xlabel 'epsilon'\nset ylabel 'sup error'\n"
            f"set title 'fitted slope {report.fitted_slope:.3f}'\n"
            f"plot '{data_path}' u 1:2 w lp t 'measured', "
            f"'' u 1:3 w l t 'sqrt bound', '' u 1:4 w l t 'improved bound'\n"
        )
