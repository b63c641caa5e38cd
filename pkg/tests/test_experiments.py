"""Sweep machinery: rate fitting, Richardson ladders, verdict routing, and
report serialization."""

import numpy as np
import pytest

from hjlab.experiments import (
    RateReport,
    RateRow,
    SweepPlan,
    band_modulus_slack,
    fit_rate,
    richardson_scheme_error,
    validate_bounds,
    write_csv,
    write_plot_script,
)
from hjlab.analysis import theoretical_constants
from hjlab.first_order import make_scheme, solve_upwind_fd
from hjlab.geometry import Interval, build_grid
from hjlab.hamiltonian import ProblemSpec, data_library, make_exponents

INTERVAL = Interval(0.0, 1.0)
E3 = make_exponents(3.0)


def _spec(data="distance", **params):
    return ProblemSpec(
        domain=INTERVAL, exponents=E3, lam=1.0, epsilon=0.0,
        f=data_library(data, INTERVAL, **params),
    )


def _rows(eps, sups):
    return [
        RateRow(
            epsilon=e, h=1e-3, sup_error=s, min_signed=0.0, abs_sup_error=s,
            scheme_error_estimate=1e-9, certified=True, solver_iterations_u=1,
            ladder_levels_ueps=1, richardson_order=1.0, warning="",
        )
        for e, s in zip(eps, sups)
    ]


# ---------------------------------------------------------------------------
# plan


def test_plan_epsilons_and_policy():
    plan = SweepPlan(base=_spec())
    eps = plan.epsilons()
    assert len(eps) == 7
    assert eps[0] == pytest.approx(1e-1)
    assert eps[1] / eps[0] == pytest.approx(0.5)
    assert plan.policy_h(1e-1) == pytest.approx(2.0**-7)
    assert plan.policy_h(1e-4) == pytest.approx(1e-4)  # h tracks small epsilon


# ---------------------------------------------------------------------------
# rate fitting


def test_fit_rate_exact_power_law():
    eps = np.geomspace(1e-1, 1e-3, 6)
    slope, intercept, r2 = fit_rate(_rows(eps, 3.0 * eps**0.5))
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert intercept == pytest.approx(np.log(3.0), abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_with_noise():
    rng = np.random.default_rng(0)
    eps = np.geomspace(1e-1, 1e-3, 8)
    sups = 2.0 * eps**0.75 * np.exp(rng.normal(0.0, 0.01, len(eps)))
    slope, _, r2 = fit_rate(_rows(eps, sups))
    assert 0.73 <= slope <= 0.77
    assert r2 > 0.99


def test_fit_rate_needs_four_certified_rows():
    eps = np.geomspace(1e-1, 1e-2, 3)
    with pytest.raises(ValueError, match="certified"):
        fit_rate(_rows(eps, eps**0.5))
    rows = _rows(np.geomspace(1e-1, 1e-3, 6), np.geomspace(1e-1, 1e-3, 6) ** 0.5)
    for r in rows[:3]:
        r.certified = False
    with pytest.raises(ValueError, match="certified"):
        fit_rate(rows)


# ---------------------------------------------------------------------------
# Richardson ladder


def test_richardson_constant_data_is_exact():
    spec = _spec("constant", value=1.0)
    cache = {}

    def solve(h):
        key = round(h, 15)
        if key not in cache:
            grid = build_grid(INTERVAL, h)
            cache[key] = solve_upwind_fd(
                spec, grid, make_scheme(spec, grid, "upwind_fd", sweep_tolerance=1e-10)
            ).u
        return cache[key]

    est, order, warning = richardson_scheme_error(solve, 2.0**-5)
    assert est <= 2e-10


def test_richardson_non_monotone_ladder_warns():
    grids = {h: build_grid(INTERVAL, h) for h in (2.0**-5, 2.0**-6, 2.0**-7)}

    class Fake:
        def __init__(self, grid, offset):
            self.grid = grid
            self.values = np.full(grid.n_active, offset)

    offsets = {2.0**-5: 0.0, 2.0**-6: 1e-3, 2.0**-7: 1e-2}  # growing differences

    def solve(h):
        return Fake(grids[h], offsets[h])

    est, order, warning = richardson_scheme_error(solve, 2.0**-5)
    assert "non-monotone" in warning
    assert est == pytest.approx(1e-3)


# ---------------------------------------------------------------------------
# verdict routing by data class


def _report(data, sups=None, **params):
    spec = _spec(data, **params)
    plan = SweepPlan(base=spec)
    eps = np.geomspace(1e-1, 1e-3, 6)
    rows = _rows(eps, 3.0 * eps**0.75 if sups is None else sups)
    slope, intercept, r2 = fit_rate(rows)
    constants = theoretical_constants(spec.f, spec.domain, spec.exponents, spec.lam, 1)
    report = RateReport(plan, rows, slope, intercept, r2, constants, [])
    report.verdicts = validate_bounds(report)
    return report


def _verdict_names(data, **params):
    report = _report(data, **params)
    return {(v.name, i): v.status for i, v in enumerate(report.verdicts)}, report


def test_verdicts_distance_class():
    statuses, report = _verdict_names("distance")
    per_name = {}
    for (name, _), st in statuses.items():
        per_name.setdefault(name, set()).add(st)
    assert per_name["LOWER"] == {"PASS"}
    assert per_name["UPPER"] == {"PASS"}  # nonnegative, vanishes on boundary
    assert per_name["IMPROVED"] == {"not-applicable"}  # ridge kink: no class
    assert per_name["RATE"] == {"PASS"}


def test_verdicts_interior_peak_skips_one_sided_bounds():
    statuses, _ = _verdict_names("interior_peak", center=(0.5,), height=1.0)
    per_name = {}
    for (name, _), st in statuses.items():
        per_name.setdefault(name, set()).add(st)
    assert per_name["UPPER"] == {"not-applicable"}
    assert per_name["IMPROVED"] == {"not-applicable"}
    assert per_name["LOWER"] == {"PASS"}


def test_verdicts_bump_improved_applicable():
    statuses, report = _verdict_names("bump", center=(0.5,), radius=0.25, height=1.0)
    names = {name for (name, _) in statuses}
    assert "IMPROVED" in names
    assert {st for (n, _), st in statuses.items() if n == "IMPROVED"} <= {"PASS", "FAIL"}


def test_band_modulus_slack_shrinks_with_h():
    spec = _spec("distance")
    a, b = band_modulus_slack(spec, 1e-2), band_modulus_slack(spec, 1e-4)
    assert 0 < b < a


# ---------------------------------------------------------------------------
# serialization


def test_csv_and_plot_emission(tmp_path):
    spec = _spec("distance")
    plan = SweepPlan(base=spec)
    eps = np.geomspace(1e-1, 1e-3, 6)
    rows = _rows(eps, 3.0 * eps**0.5)
    slope, intercept, r2 = fit_rate(rows)
    constants = theoretical_constants(spec.f, spec.domain, spec.exponents, spec.lam, 1)
    report = RateReport(plan, rows, slope, intercept, r2, constants, [])
    report.verdicts = validate_bounds(report)

    csv_path = tmp_path / "rate_report.csv"
    write_csv(report, csv_path)
    text = csv_path.read_text()
    assert "epsilon" in text and "fitted_slope" in text
    assert "Lambda_lower" in text and "verdict" in text
    data_rows = [
        ln for ln in text.splitlines() if ln and not ln.startswith("#") and ln[0].isdigit()
    ]
    assert len(data_rows) == 6

    write_plot_script(report, tmp_path / "rate.dat", tmp_path / "rate.gp")
    assert (tmp_path / "rate.dat").exists()
    gp = (tmp_path / "rate.gp").read_text()
    assert "plot" in gp and "rate.dat" in gp

    # byte-identical re-emission
    write_csv(report, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == csv_path.read_bytes()
