"""Configuration-driven command line front end.

Commands: solve, sweep, check, report. All outputs are plain text with a
resolved-config header so every artifact is self-describing; reruns with the
same config are byte-identical.
"""

from __future__ import annotations

import configparser
import os
import sys

import click
import numpy as np

from .analysis import theoretical_constants
from .experiments import (
    RateReport,
    SweepPlan,
    run_sweep,
    write_csv,
    write_plot_script,
)
from .first_order import (
    SolverError,
    lipschitz_certificate,
    make_scheme,
    residual_certificate,
    residual_tol,
    slope_margin,
    solve_semi_lagrangian,
    solve_upwind_fd,
)
from .geometry import Annulus, Disk, GeometryError, Grid, GridError, GridFunction, Interval, build_grid
from .hamiltonian import ProblemSpec, data_library, make_exponents
from .viscous import (
    LadderError,
    NewtonError,
    ViscousScheme,
    grad_margin,
    gradient_bound_certificate,
    solve_maximal_viscous,
    viscous_residual_tol,
)

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERDICT = 4

_SECTION_KEYS = {
    "domain": {"type", "a", "b", "center_x", "center_y", "r", "R"},
    "problem": {"p", "lambda"},
    "data": {"name", "value", "center_x", "center_y", "radius", "height"},
    "sweep": {"eps_start", "eps_factor", "eps_count", "max_refine"},
    "grid": {"h_max", "h", "policy"},
    "first_order": {"kind", "sweep_tolerance", "max_iterations", "n_radii", "n_dirs_2d"},
    "viscous": {
        "ladder_base",
        "ladder_factor",
        "ladder_count",
        "newton_tolerance",
        "max_newton_iters",
        "ladder_stop_tol",
    },
    "output": {"directory", "emit_plot", "seed"},
}


class ConfigError(ValueError):
    pass


def _fail(code: int, category: str, message: str):
    print(f"error: {category}: {message}", file=sys.stderr)
    sys.exit(code)


def load_config(path: str) -> dict:
    """Parse and strictly validate an INI run configuration.

    Returns a flat {section: {key: str}} dict; unknown sections or keys raise
    ConfigError before anything runs.
    """
    parser = configparser.ConfigParser()
    # keys are case sensitive so R and r stay distinct for the annulus
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    out: dict = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = _SECTION_KEYS[section]
        out[section] = {}
        for key, value in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            out[section][key] = value
    if "domain" not in out or "problem" not in out or "data" not in out:
        raise ConfigError("config requires [domain], [problem] and [data] sections")
    return out


def _getfloat(section: dict, key: str, default=None) -> float:
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from None


def _getint(section: dict, key: str, default: int) -> int:
    if key not in section:
        return default
    try:
        return int(section[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from None


def build_domain(cfg: dict):
    sec = cfg["domain"]
    kind = sec.get("type")
    if kind == "interval":
        return Interval(_getfloat(sec, "a"), _getfloat(sec, "b"))
    if kind == "disk":
        center = (_getfloat(sec, "center_x", 0.0), _getfloat(sec, "center_y", 0.0))
        return Disk(center, _getfloat(sec, "R"))
    if kind == "annulus":
        center = (_getfloat(sec, "center_x", 0.0), _getfloat(sec, "center_y", 0.0))
        return Annulus(center, _getfloat(sec, "r"), _getfloat(sec, "R"))
    raise ConfigError(f"unknown domain type {kind!r} (interval, disk, annulus)")


def build_problem(cfg: dict, epsilon: float = 0.0) -> ProblemSpec:
    domain = build_domain(cfg)
    p = _getfloat(cfg["problem"], "p")
    lam = _getfloat(cfg["problem"], "lambda", 1.0)
    exponents = make_exponents(p)

    sec = cfg["data"]
    name = sec.get("name")
    if name is None:
        raise ConfigError("missing required key 'name' in [data]")
    params = {}
    if "value" in sec:
        params["value"] = _getfloat(sec, "value")
    if "radius" in sec:
        params["radius"] = _getfloat(sec, "radius")
    if "height" in sec:
        params["height"] = _getfloat(sec, "height")
    if "center_x" in sec or "center_y" in sec:
        center = [_getfloat(sec, "center_x", 0.0)]
        if domain.dim == 2:
            center.append(_getfloat(sec, "center_y", 0.0))
        params["center"] = tuple(center)
    f = data_library(name, domain, **params)
    return ProblemSpec(domain, exponents, lam, epsilon, f)


def build_viscous_scheme(cfg: dict) -> ViscousScheme:
    sec = cfg.get("viscous", {})
    kwargs = {}
    if "ladder_base" in sec:
        kwargs["ladder_base"] = _getfloat(sec, "ladder_base")
    if "ladder_factor" in sec:
        kwargs["ladder_factor"] = _getfloat(sec, "ladder_factor")
    if "ladder_count" in sec:
        kwargs["ladder_count"] = _getint(sec, "ladder_count", 14)
    if "newton_tolerance" in sec:
        kwargs["newton_tolerance"] = _getfloat(sec, "newton_tolerance")
    if "max_newton_iters" in sec:
        kwargs["max_newton_iters"] = _getint(sec, "max_newton_iters", 60)
    if "ladder_stop_tol" in sec:
        kwargs["ladder_stop_tol"] = _getfloat(sec, "ladder_stop_tol")
    return ViscousScheme(**kwargs)


def _resolved_header(cfg: dict, extra: dict) -> list:
    """Deterministic config echo for output file headers."""
    lines = []
    for section in sorted(cfg):
        for key in sorted(cfg[section]):
            lines.append(f"{section}.{key} = {cfg[section][key]}")
    for key in sorted(extra):
        lines.append(f"resolved.{key} = {extra[key]}")
    return lines


def _write_field(path: str, grid: Grid, values: np.ndarray, header: list) -> None:
    cols = "x y value" if grid.domain.dim == 2 else "x value"
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# columns: {cols}\n")
        for pt, v in zip(grid.points, values):
            coords = " ".join(f"{c:.17g}" for c in pt)
            fh.write(f"{coords} {v:.17g}\n")


def _read_field(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"field file {path!r} not found")
    pts, vals = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            parts = line.split()
            pts.append([float(c) for c in parts[:-1]])
            vals.append(float(parts[-1]))
    return np.asarray(pts), np.asarray(vals)


def _write_certificate(path: str, header: list, checks: list) -> None:
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("# columns: name value threshold status\n")
        for name, value, threshold, ok in checks:
            fh.write(f"{name} {value:.17g} {threshold:.17g} {'PASS' if ok else 'FAIL'}\n")


def _first_order_checks(u: GridFunction, spec: ProblemSpec) -> list:
    h = u.grid.h
    interior_res, boundary_def = residual_certificate(u, spec)
    slope = lipschitz_certificate(u, spec)
    slope_bound = spec.f.osc ** (1.0 / spec.exponents.p) + slope_margin(h)
    return [
        ("interior_residual", interior_res, residual_tol(h), interior_res <= residual_tol(h)),
        ("boundary_supersolution_deficit", boundary_def, -residual_tol(h), boundary_def >= -residual_tol(h)),
        ("lipschitz_bound", slope, slope_bound, slope <= slope_bound),
    ]


def _viscous_checks(result, spec: ProblemSpec) -> list:
    grid = result.u_eps.grid
    h, eps = grid.h, spec.epsilon
    tol = viscous_residual_tol(h, eps)
    grad = gradient_bound_certificate(result, spec)
    grad_bound = 1.0 + grad_margin(h)
    lower = float(np.min(result.u_eps.values)) - spec.f.inf / spec.lam
    checks = [
        ("pde_residual", result.pde_residual, tol, result.pde_residual <= tol),
        ("gradient_bound_ratio", grad, grad_bound, grad <= grad_bound),
        ("lower_bound_min_f_over_lambda", lower, -tol, lower >= -tol),
        ("ladder_saturation", float(result.saturation_ok), 1.0, result.saturation_ok),
    ]
    if spec.f.is_constant:
        e = spec.exponents
        gap = float(np.max(result.u_eps.values)) - spec.f.sup / spec.lam
        bound = (1.0 + 2.0 * np.sqrt(2.0)) * eps ** (1.0 - e.alpha_p / 2.0) + tol
        checks.append(("constant_data_viscous_gap", gap, bound, -tol <= gap <= bound))
    return checks


def _load_and_build(config, epsilon=0.0):
    try:
        cfg = load_config(config)
        spec = build_problem(cfg, epsilon)
    except (ConfigError, GeometryError, ValueError) as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    return cfg, spec


def _grid_for(cfg: dict, spec: ProblemSpec) -> Grid:
    sec = cfg.get("grid", {})
    h = _getfloat(sec, "h", _getfloat(sec, "h_max", 2.0**-7))
    try:
        return build_grid(spec.domain, h)
    except (GridError, GeometryError) as exc:
        _fail(EXIT_CONFIG, "config", str(exc))


@click.group()
def main():
    """Numerical laboratory for state-constrained Hamilton-Jacobi equations."""


@main.command("solve")
@click.option("--config", "config", required=True, type=click.Path(), help="INI run configuration.")
@click.option("--epsilon", type=float, default=None, help="Viscosity; solves the viscous problem.")
@click.option("--first-order", "first_order_flag", is_flag=True, help="Solve the first-order problem.")
@click.option("--output", "output", type=click.Path(), default=None, help="Output directory override.")
def cmd_solve(config, epsilon, first_order_flag, output):
    """Solve one problem instance and write field + certificate files."""
    if first_order_flag == (epsilon is not None):
        _fail(EXIT_CONFIG, "config", "pass exactly one of --first-order or --epsilon")
    cfg, spec = _load_and_build(config, epsilon or 0.0)
    grid = _grid_for(cfg, spec)
    outdir = output or cfg.get("output", {}).get("directory", ".")
    os.makedirs(outdir, exist_ok=True)

    if first_order_flag:
        sec = cfg.get("first_order", {})
        kind = sec.get("kind", "semi_lagrangian")
        try:
            scheme = make_scheme(
                spec,
                grid,
                kind,
                sweep_tolerance=_getfloat(sec, "sweep_tolerance", 1e-9),
                max_iterations=_getint(sec, "max_iterations", 50_000),
                n_radii=_getint(sec, "n_radii", 32),
                n_dirs_2d=_getint(sec, "n_dirs_2d", 16),
            )
            solver = solve_semi_lagrangian if kind == "semi_lagrangian" else solve_upwind_fd
            result = solver(spec, grid, scheme)
        except ValueError as exc:
            _fail(EXIT_CONFIG, "config", str(exc))
        except SolverError as exc:
            _fail(EXIT_SOLVER, "solver", str(exc))
        checks = _first_order_checks(result.u, spec)
        tag = "u"
        extra = {"h": grid.h, "epsilon": 0.0, "kind": kind, "iterations": result.iterations}
        values = result.u.values
    else:
        if epsilon <= 0:
            _fail(EXIT_CONFIG, "config", "--epsilon must be positive")
        try:
            result = solve_maximal_viscous(spec, grid, build_viscous_scheme(cfg))
        except (NewtonError, LadderError) as exc:
            _fail(EXIT_SOLVER, "solver", str(exc))
        checks = _viscous_checks(result, spec)
        tag = "ueps"
        extra = {"h": grid.h, "epsilon": epsilon, "ladder_levels": result.ladder_levels_used}
        values = result.u_eps.values

    header = _resolved_header(cfg, extra)
    _write_field(os.path.join(outdir, f"{tag}_field.txt"), grid, values, header)
    _write_certificate(os.path.join(outdir, f"{tag}_certificate.txt"), header, checks)
    for name, value, threshold, ok in checks:
        click.echo(f"{name}: {value:.6g} (threshold {threshold:.6g}) {'PASS' if ok else 'FAIL'}")
    if not all(c[3] for c in checks):
        sys.exit(EXIT_VERDICT)


@main.command("sweep")
@click.option("--config", "config", required=True, type=click.Path())
@click.option("--workers", type=int, default=1, help="Parallel sweep rows.")
@click.option("--output", "output", type=click.Path(), default=None)
def cmd_sweep(config, workers, output):
    """Run the epsilon sweep, write the rate CSV and verdicts."""
    cfg, spec = _load_and_build(config, 0.0)
    sweep_sec = cfg.get("sweep", {})
    grid_sec = cfg.get("grid", {})
    out_sec = cfg.get("output", {})
    try:
        plan = SweepPlan(
            base=spec,
            eps_start=_getfloat(sweep_sec, "eps_start", 1e-1),
            eps_factor=_getfloat(sweep_sec, "eps_factor", 0.5),
            eps_count=_getint(sweep_sec, "eps_count", 7),
            h_max=_getfloat(grid_sec, "h_max", 2.0**-7),
            max_refine=_getint(sweep_sec, "max_refine", 3),
            sweep_tolerance=_getfloat(cfg.get("first_order", {}), "sweep_tolerance", 1e-9),
            viscous_scheme=build_viscous_scheme(cfg),
            seed=_getint(out_sec, "seed", 0),
            workers=workers,
        )
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    try:
        report = run_sweep(plan)
    except (SolverError, NewtonError, LadderError, RuntimeError) as exc:
        _fail(EXIT_SOLVER, "solver", str(exc))

    outdir = output or out_sec.get("directory", ".")
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "rate_report.csv")
    write_csv(report, csv_path, header_lines=tuple(_resolved_header(cfg, {"workers_invariant": True})))
    if out_sec.get("emit_plot", "false").lower() in ("1", "true", "yes"):
        write_plot_script(
            report,
            os.path.join(outdir, "rate_report.dat"),
            os.path.join(outdir, "rate_report.gp"),
        )
    for v in report.verdicts:
        click.echo(f"{v.name}: {v.status} ({v.detail})")
    click.echo(f"fitted_slope={report.fitted_slope:.4f} r_squared={report.r_squared:.4f}")
    if any(v.passed is False for v in report.verdicts):
        sys.exit(EXIT_VERDICT)


@main.command("check")
@click.option("--config", "config", required=True, type=click.Path())
@click.option("--epsilon", type=float, default=None, help="Check the viscous field instead.")
@click.option("--output", "output", type=click.Path(), default=".", help="Directory holding field files.")
def cmd_check(config, epsilon, output):
    """Re-run certificates on previously written field files."""
    cfg, spec = _load_and_build(config, epsilon or 0.0)
    grid = _grid_for(cfg, spec)
    tag = "ueps" if epsilon is not None else "u"
    try:
        pts, vals = _read_field(os.path.join(output, f"{tag}_field.txt"))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    if pts.shape[0] != grid.points.shape[0] or not np.allclose(pts, grid.points, atol=1e-12):
        _fail(EXIT_CONFIG, "config", "stale grid: stored field nodes do not match the config grid")

    gf = GridFunction(grid, vals)
    if epsilon is None:
        checks = _first_order_checks(gf, spec)
    else:
        from .viscous import ViscousResult

        res = ViscousResult(
            u_eps=gf,
            ladder_levels_used=0,
            interior_change_last=0.0,
            pde_residual=_stored_viscous_residual(gf, spec),
            change_profile=(),
            saturation_ok=True,
        )
        checks = _viscous_checks(res, spec)
        checks = [c for c in checks if c[0] != "ladder_saturation"]
    for name, value, threshold, ok in checks:
        click.echo(f"{name}: {value:.6g} (threshold {threshold:.6g}) {'PASS' if ok else 'FAIL'}")
    if not all(c[3] for c in checks):
        sys.exit(EXIT_VERDICT)


def _stored_viscous_residual(gf: GridFunction, spec: ProblemSpec) -> float:
    from .viscous import pde_residual_on_field

    return pde_residual_on_field(gf, spec)


@main.command("report")
@click.option("--output", "output", type=click.Path(), default=".", help="Directory holding rate_report.csv.")
def cmd_report(output):
    """Print the summary footer and verdicts of a stored sweep CSV."""
    path = os.path.join(output, "rate_report.csv")
    if not os.path.exists(path):
        _fail(EXIT_CONFIG, "config", f"report file {path!r} not found")
    failed = False
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith(("fitted_slope", "r_squared", "Lambda_", "improved_coeff", "verdict")):
                click.echo(line)
                if line.startswith("verdict") and ",FAIL," in line:
                    failed = True
    if failed:
        sys.exit(EXIT_VERDICT)


if __name__ == "__main__":
    main()
