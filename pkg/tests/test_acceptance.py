"""End-to-end acceptance gate.

Each test prints one pass/fail line (bypassing capture) and asserts the same
condition, so the terminal log always carries a per-criterion verdict.
"""

import time

import numpy as np
import pytest

from hjlab.analysis import (
    convexity_margin,
    semiconvexity_certificate,
    sup_convolution,
    theoretical_constants,
)
from hjlab.first_order import (
    lipschitz_certificate,
    oracle_agreement_tol,
    slope_margin,
    solve_semi_lagrangian,
    solve_upwind_fd,
)
from hjlab.geometry import Disk, Interval, build_grid
from hjlab.hamiltonian import ProblemSpec, data_library, make_exponents
from hjlab.experiments import SweepPlan, run_sweep, validate_bounds
from hjlab.viscous import (
    grad_margin,
    gradient_bound_certificate,
    solve_maximal_viscous,
    viscous_comparison_check,
    viscous_residual_tol,
)

INTERVAL = Interval(0.0, 1.0)
E3 = make_exponents(3.0)
E4 = make_exponents(4.0)


def _data(name):
    if name == "bump":
        return data_library("bump", INTERVAL, center=(0.5,), radius=0.25, height=1.0)
    if name == "constant":
        return data_library("constant", INTERVAL, value=1.0)
    return data_library(name, INTERVAL)


def _spec(e, f, lam=1.0, eps=0.0):
    return ProblemSpec(INTERVAL, e, lam, eps, f)


@pytest.fixture
def verdict(capfd):
    """Emit one pass/fail line per criterion on the real terminal, then assert."""

    def emit(num, name, ok, detail=""):
        line = f"criterion {num:02d} [{name}]: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  ({detail})"
        with capfd.disabled():
            print(line, flush=True)
        assert ok, line

    return emit


def _sweep(e, f, **kw):
    plan = SweepPlan(base=_spec(e, f), **kw)
    report = run_sweep(plan)
    report.verdicts = validate_bounds(report)
    return report


def _named(report, name):
    return [v for v in report.verdicts if v.name == name]


@pytest.fixture(scope="module")
def report_distance():
    # epsilon geometric from 1e-1 down to 1e-3.5 in 7 points
    return _sweep(E3, _data("distance"), eps_factor=10.0 ** (-2.5 / 6.0), eps_count=7)


@pytest.fixture(scope="module")
def report_bump3():
    return _sweep(E3, _data("bump"))


@pytest.fixture(scope="module")
def report_bump4():
    return _sweep(E4, _data("bump"))


@pytest.fixture(scope="module")
def report_constant():
    return _sweep(E3, _data("constant"), eps_factor=10.0 ** -0.5, eps_count=5)


@pytest.fixture(scope="module")
def report_dsqcap():
    return _sweep(E3, _data("distance_squared_cap"))


def test_criterion_01_constant_exactness(verdict):
    grid = build_grid(INTERVAL, 2.0 ** -9)
    spec = _spec(E3, _data("constant"))
    t0 = time.time()
    dev_fd = float(np.max(np.abs(solve_upwind_fd(spec, grid).u.values - 1.0)))
    dev_sl = float(np.max(np.abs(solve_semi_lagrangian(spec, grid).u.values - 1.0)))
    elapsed = time.time() - t0
    ok = dev_fd <= 1e-8 and dev_sl <= 1e-8 and elapsed < 1.0
    verdict(1, "constant-data exactness", ok,
             f"fd_dev={dev_fd:.1e} sl_dev={dev_sl:.1e} time={elapsed:.2f}s")


def test_criterion_02_constant_viscous_bound(verdict, report_constant):
    rep = report_constant
    nonneg = all(r.sup_error >= -1e-8 and r.min_signed >= -1e-8 for r in rep.rows)
    improved = _named(rep, "IMPROVED")
    coeff = rep.constants.improved_coeff
    ok = (
        nonneg
        and improved
        and all(v.passed for v in improved)
        and abs(coeff - (1.0 + 2.0 * np.sqrt(2.0))) <= 1e-12
        and rep.fitted_slope >= 0.70
    )
    verdict(2, "constant-data viscous bound", ok,
             f"slope={rep.fitted_slope:.3f} coeff={coeff:.4f}")


def test_criterion_03_distance_sweep(verdict, report_distance):
    rep = report_distance
    cst = rep.constants
    recomputed = theoretical_constants(rep.plan.base.f, INTERVAL, E3, 1.0, 1)
    bounds = _named(rep, "LOWER") + _named(rep, "UPPER")
    ok = (
        bounds
        and all(v.passed for v in bounds)
        and abs(cst.Lambda_lower - recomputed.Lambda_lower) <= 1e-12
        and abs(cst.Lambda_upper - recomputed.Lambda_upper) <= 1e-12
        and abs(cst.Lambda_lower - 77.5) <= 1.0
        and abs(cst.Lambda_upper - 6.50) <= 0.05
        and rep.fitted_slope >= 0.45
        and rep.r_squared >= 0.98
    )
    verdict(3, "distance-data two-sided sweep", ok,
             f"slope={rep.fitted_slope:.3f} r2={rep.r_squared:.4f} "
             f"Ll={cst.Lambda_lower:.3f} Lu={cst.Lambda_upper:.3f}")


def test_criterion_04_bump_improved_rate(verdict, report_bump3, report_bump4):
    ok3 = (
        all(v.passed for v in _named(report_bump3, "IMPROVED"))
        and bool(_named(report_bump3, "IMPROVED"))
        and report_bump3.fitted_slope >= 0.70
    )
    ok4 = (
        all(v.passed for v in _named(report_bump4, "IMPROVED"))
        and bool(_named(report_bump4, "IMPROVED"))
        and report_bump4.fitted_slope >= 0.61
    )
    verdict(4, "semiconcave-bump improved rate", ok3 and ok4,
             f"slope_p3={report_bump3.fitted_slope:.3f} "
             f"slope_p4={report_bump4.fitted_slope:.3f}")


def test_criterion_05_flat_boundary_class(verdict, report_dsqcap):
    improved = _named(report_dsqcap, "IMPROVED")
    ok = bool(improved) and all(v.passed for v in improved)
    verdict(5, "flat-boundary-data improved rate", ok,
             f"slope={report_dsqcap.fitted_slope:.3f}")


def test_criterion_06_lipschitz_bound(verdict, report_distance, report_bump3, report_bump4,
                                      report_dsqcap):
    worst = -np.inf
    ok = True
    for rep, e in ((report_distance, E3), (report_bump3, E3), (report_bump4, E4),
                   (report_dsqcap, E3)):
        f = rep.plan.base.f
        bound_base = f.osc ** (1.0 / e.p)
        for h in sorted({r.h for r in rep.rows}):
            grid = build_grid(INTERVAL, h)
            u = solve_upwind_fd(_spec(e, f), grid).u
            slope = lipschitz_certificate(u, _spec(e, f))
            excess = slope - (bound_base + slope_margin(h))
            worst = max(worst, excess)
            ok = ok and excess <= 0.0
    verdict(6, "first-order Lipschitz bound", ok, f"worst_excess={worst:.3e}")


def test_criterion_07_gradient_bound(verdict):
    worst = -np.inf
    ok = True
    # every data class at a representative viscous solve
    for e, fname, eps, h in (
        (E3, "distance", 1e-2, 2.0 ** -7),
        (E3, "bump", 1e-2, 2.0 ** -7),
        (E4, "bump", 1e-2, 2.0 ** -7),
        (E3, "distance_squared_cap", 1e-2, 2.0 ** -7),
        # constant data: osc f = 0, so the certificate bound reduces to the
        # pure boundary-layer term (eps/d)^(1/(p-1))
        (E3, "constant", 1e-1, 2.0 ** -7),
        (E3, "constant", 1e-2, 2.0 ** -7),
        (E3, "constant", 1e-3, 1e-3),
    ):
        grid = build_grid(INTERVAL, h)
        spec = _spec(e, _data(fname), eps=eps)
        res = solve_maximal_viscous(spec, grid)
        ratio = gradient_bound_certificate(res, spec)
        excess = ratio - (1.0 + grad_margin(h))
        worst = max(worst, excess)
        ok = ok and excess <= 0.0
    verdict(7, "viscous gradient bound", ok, f"worst_excess={worst:.3e}")


def test_criterion_08_comparison_principle(verdict):
    c = 0.3
    h = 2.0 ** -7
    grid = build_grid(INTERVAL, h)
    f = _data("distance")
    fs = f.shifted(c)
    dev_fd = float(np.max(np.abs(
        solve_upwind_fd(_spec(E3, fs), grid).u.values
        - solve_upwind_fd(_spec(E3, f), grid).u.values - c)))
    dev_sl = float(np.max(np.abs(
        solve_semi_lagrangian(_spec(E3, fs), grid).u.values
        - solve_semi_lagrangian(_spec(E3, f), grid).u.values - c)))
    eps = 1e-2
    su, sv = _spec(E3, f, eps=eps), _spec(E3, fs, eps=eps)
    ru, rv = solve_maximal_viscous(su, grid), solve_maximal_viscous(sv, grid)
    dev_v = float(np.max(np.abs(rv.u_eps.values - ru.u_eps.values - c)))
    tol_v = 10.0 * viscous_residual_tol(h, eps)
    gap = max(viscous_comparison_check(ru, rv, su, sv),
              viscous_comparison_check(rv, ru, sv, su))
    ok = (dev_fd <= 2e-8 and dev_sl <= 4e-6 and dev_v <= tol_v and gap <= tol_v)
    verdict(8, "comparison principle", ok,
             f"fd={dev_fd:.1e} sl={dev_sl:.1e} viscous={dev_v:.1e} gap={gap:.1e}")


def test_criterion_09_sup_convolution_suite(verdict):
    h = 2.0 ** -7
    grid = build_grid(INTERVAL, h)
    u = solve_upwind_fd(_spec(E3, _data("distance")), grid).u
    lip = u.max_neighbor_slope()
    ok = True
    details = []
    for theta in (1e-1, 1e-2):
        ut = sup_convolution(u, theta)
        dominates = float(np.min(ut.values - u.values)) >= -1e-12
        sandwich = float(np.max(ut.values - u.values)) <= lip * lip * theta / 2.0 + 1e-12
        excess = semiconvexity_certificate(ut, 1.0 / theta)
        semiconvex = excess <= convexity_margin(h)
        ok = ok and dominates and sandwich and semiconvex
        details.append(f"theta={theta:g}: excess={excess:.1e}")
    verdict(9, "sup-convolution suite", ok, "; ".join(details))


def test_criterion_10_semiconcavity_transfer(verdict):
    f = _data("bump")
    spec = _spec(E3, f)
    worst = -np.inf
    ok = True
    for h in (2.0 ** -7, 2.0 ** -8):
        grid = build_grid(INTERVAL, h)
        u = solve_upwind_fd(spec, grid).u.values
        left, right = grid.neighbors[:, 0, 0], grid.neighbors[:, 0, 1]
        full = (left >= 0) & (right >= 0) & grid.interior_mask()
        second = (u[right[full]] - 2.0 * u[full] + u[left[full]]) / (h * h)
        excess = float(np.max(second)) - f.semiconcavity_const / spec.lam
        worst = max(worst, excess)
        ok = ok and excess <= 0.0
    verdict(10, "semiconcavity transfer", ok, f"worst_excess={worst:.3f}")


def test_criterion_11_oracle_equivalence(verdict):
    worst = 0.0
    ok = True
    for e, fname in ((E3, "distance"), (E3, "bump"), (E4, "bump"),
                     (E3, "distance_squared_cap")):
        spec = _spec(e, _data(fname))
        for h in (2.0 ** -7, 2.0 ** -8, 2.0 ** -9):
            grid = build_grid(INTERVAL, h)
            fd = solve_upwind_fd(spec, grid).u.values
            sl = solve_semi_lagrangian(spec, grid).u.values
            ratio = float(np.max(np.abs(sl - fd))) / oracle_agreement_tol(h)
            worst = max(worst, ratio)
            ok = ok and ratio <= 1.0
    verdict(11, "cross-scheme oracle equivalence", ok, f"worst_ratio={worst:.3f}")


def test_criterion_12_two_dimensional_smoke(verdict):
    t0 = time.time()
    disk = Disk((0.0, 0.0), 1.0)
    f = data_library("bump", disk, center=(0.0, 0.0), radius=0.25, height=1.0)
    eps, h = 1e-2, 2.0 ** -6
    spec = ProblemSpec(disk, E3, 1.0, eps, f)
    grid = build_grid(disk, h)
    res = solve_maximal_viscous(spec, grid)
    resid_ok = res.pde_residual <= viscous_residual_tol(h, eps)
    grad_ok = gradient_bound_certificate(res, spec) <= 1.0 + grad_margin(h)
    lower_ok = float(np.min(res.u_eps.values)) >= f.inf / spec.lam - 1e-8
    elapsed = time.time() - t0
    ok = resid_ok and grad_ok and lower_ok and elapsed <= 600.0
    verdict(12, "2d disk smoke", ok,
             f"residual={res.pde_residual:.2e} time={elapsed:.0f}s")
