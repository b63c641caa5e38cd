"""Superquadratic Hamiltonian |xi|^p - f(x), its Legendre dual, and source data.

The data library carries analytic regularity metadata (Lipschitz constant,
oscillation, semiconcavity constant, support margin) so theoretical constants
downstream are exact rather than sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Annulus, Disk, Domain, Grid, Interval

__all__ = [
    "Exponents",
    "DataFunction",
    "ProblemSpec",
    "make_exponents",
    "hamiltonian_value",
    "lagrangian_value",
    "legendre_gap",
    "data_library",
    "estimate_regularity",
    "SECOND_DIFF_CAP",
]

# centered second differences above this are reported as unbounded (kink)
SECOND_DIFF_CAP = 1e6


@dataclass(frozen=True)
class Exponents:
    p: float
    q: float
    c_p: float
    alpha_p: float


def make_exponents(p: float) -> Exponents:
    """Conjugate exponent, Lagrangian coefficient and Hoelder exponent for p > 2."""
    if not p > 2:
        raise ValueError(f"superquadratic growth requires p > 2, got p={p}")
    q = p / (p - 1.0)
    c_p = p ** (-1.0 / (p - 1.0)) * (1.0 - 1.0 / p)
    alpha_p = (p - 2.0) / (p - 1.0)
    return Exponents(p=float(p), q=q, c_p=c_p, alpha_p=alpha_p)


def _norm(v) -> np.ndarray:
    v = np.atleast_2d(np.asarray(v, dtype=float))
    return np.linalg.norm(v, axis=-1)


def hamiltonian_value(e: Exponents, f_at_x: float, xi) -> float:
    """H(x, xi) = |xi|^p - f(x)."""
    return float(_norm(xi)[0] ** e.p - f_at_x)


def lagrangian_value(e: Exponents, f_at_x: float, v) -> float:
    """L(x, v) = c_p |v|^q + f(x)."""
    return float(e.c_p * _norm(v)[0] ** e.q + f_at_x)


def legendre_gap(e: Exponents, xi, n_samples: int = 10_000) -> float:
    """Duality defect H(xi) - max over sampled v of (xi.v - L(v)).

    The sampling plan is radial through the analytic maximizer
    v* = p |xi|^(p-2) xi, so the gap is nonnegative and shrinks with the
    sampling density. The data term f cancels between H and L.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    s = float(np.linalg.norm(xi))
    h = s**e.p
    if s == 0.0:
        return 0.0  # maximizer v = 0 is in every plan
    direction = xi / s
    r_star = e.p * s ** (e.p - 1.0)
    radii = np.linspace(0.0, 2.0 * r_star, n_samples)
    radii = np.append(radii, r_star)
    vals = radii * s - e.c_p * radii**e.q
    return float(h - np.max(vals))


@dataclass(frozen=True)
class DataFunction:
    """Source term f with declared analytic regularity metadata."""

    name: str
    domain: Domain
    params: tuple = ()
    lipschitz_const: float = 0.0
    osc: float = 0.0
    sup: float = 0.0
    inf: float = 0.0
    semiconcavity_const: Optional[float] = None
    support_margin: Optional[float] = None
    nonnegative: bool = False
    vanishes_on_boundary: bool = False
    vanishes_to_second_order: bool = False
    is_constant: bool = False

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def shifted(self, c: float) -> "DataFunction":
        c = float(c)
        return _ShiftedData(
            name=f"{self.name}+{c:g}",
            domain=self.domain,
            params=self.params + (c,),
            lipschitz_const=self.lipschitz_const,
            osc=self.osc,
            sup=self.sup + c,
            inf=self.inf + c,
            semiconcavity_const=self.semiconcavity_const,
            support_margin=None,
            nonnegative=self.nonnegative and c >= 0,
            vanishes_on_boundary=self.vanishes_on_boundary and c == 0,
            vanishes_to_second_order=self.vanishes_to_second_order and c == 0,
            is_constant=self.is_constant,
            base=self,
            shift=c,
        )


@dataclass(frozen=True)
class _ShiftedData(DataFunction):
    base: Optional[DataFunction] = None
    shift: float = 0.0

    def __call__(self, x):
        return self.base(x) + self.shift


@dataclass(frozen=True)
class ProblemSpec:
    """One PDE instance: lambda u + |Du|^p - eps * Lap(u) = f on the domain."""

    domain: Domain
    exponents: Exponents
    lam: float
    epsilon: float
    f: DataFunction

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError(f"discount rate must lie in (0, 1], got {self.lam}")
        if self.epsilon < 0:
            raise ValueError(f"viscosity must be nonnegative, got {self.epsilon}")

    def with_epsilon(self, eps: float) -> "ProblemSpec":
        return ProblemSpec(self.domain, self.exponents, self.lam, eps, self.f)

    def with_data(self, f: DataFunction) -> "ProblemSpec":
        return ProblemSpec(self.domain, self.exponents, self.lam, self.epsilon, f)


# ---------------------------------------------------------------------------
# data library


@dataclass(frozen=True)
class _ConstantData(DataFunction):
    value: float = 0.0

    def __call__(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(len(pts), self.value)


@dataclass(frozen=True)
class _DistanceData(DataFunction):
    def __call__(self, x):
        return np.atleast_1d(self.domain.distance_to_boundary(np.atleast_2d(np.asarray(x, dtype=float))))


def _hermite_taper(t, t0, t1):
    """C1 tapering of the slope 2t: equals 2t on [0, t0], decays to 0 at t1 with
    matched value and derivative at t0 (cubic Hermite), zero beyond t1."""
    t = np.asarray(t, dtype=float)
    w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    # Hermite basis on [0,1] with m(0)=2*t0, m'(0)=2*(t1-t0), m(1)=0, m'(1)=0
    h00 = 2 * w**3 - 3 * w**2 + 1
    h10 = w**3 - 2 * w**2 + w
    m_bridge = 2.0 * t0 * h00 + 2.0 * (t1 - t0) * h10
    return np.where(t <= t0, 2.0 * t, np.where(t >= t1, 0.0, m_bridge))


def _hermite_taper_integral(t, t0, t1):
    t = np.asarray(t, dtype=float)
    w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    H00 = 0.5 * w**4 - w**3 + w  # integral of h00
    H10 = 0.25 * w**4 - (2.0 / 3.0) * w**3 + 0.5 * w**2
    bridge = t0**2 + (t1 - t0) * (2.0 * t0 * H00 + 2.0 * (t1 - t0) * H10)
    full = t0**2 + (t1 - t0) * (2.0 * t0 * 0.5 + 2.0 * (t1 - t0) * (1.0 / 12.0))
    return np.where(t <= t0, t**2, np.where(t >= t1, full, bridge))


def _taper_max_slope_derivative(t0, t1):
    """max of m'(t) for the tapered slope (the 1D second derivative bound)."""
    # on [0, t0] the derivative is 2; on the bridge m'(w)/(t1-t0) with
    # m'(w) = 2*t0*(6w^2-6w) + 2*(t1-t0)*(3w^2-4w+1); evaluate on a fine lattice
    w = np.linspace(0.0, 1.0, 20001)
    mp = (2.0 * t0 * (6 * w**2 - 6 * w) + 2.0 * (t1 - t0) * (3 * w**2 - 4 * w + 1)) / (t1 - t0)
    return max(2.0, float(np.max(mp)))


@dataclass(frozen=True)
class _DistanceSquaredCapData(DataFunction):
    """s(d(x)) with s(t) = t^2 near the boundary, smoothly capped to a plateau
    before the ridge of the distance function; C2 on the whole domain with
    f = 0 and Df = 0 on the boundary."""

    t0: float = 0.0
    t1: float = 0.0

    def __call__(self, x):
        d = np.atleast_1d(self.domain.distance_to_boundary(np.atleast_2d(np.asarray(x, dtype=float))))
        return _hermite_taper_integral(d, self.t0, self.t1)


@dataclass(frozen=True)
class _BumpData(DataFunction):
    center_pt: tuple = ()
    radius: float = 0.0
    height: float = 0.0

    def __call__(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.asarray(self.center_pt, dtype=float)
        s2 = np.sum((pts - c[None, :]) ** 2, axis=1) / self.radius**2
        return self.height * np.maximum(0.0, 1.0 - s2) ** 2


@dataclass(frozen=True)
class _InteriorPeakData(DataFunction):
    """Lipschitz cone peaking inside the domain, nonzero on part of the
    boundary; a stress case outside the improved-rate hypothesis class."""

    center_pt: tuple = ()
    height: float = 1.0

    def __call__(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.asarray(self.center_pt, dtype=float)
        return np.maximum(0.0, self.height - np.linalg.norm(pts - c[None, :], axis=1))


def _farthest_boundary_distance(domain: Domain, point: np.ndarray) -> float:
    """max over the closure of |x - point| (for peak metadata)."""
    if isinstance(domain, Interval):
        return max(abs(point[0] - domain.a), abs(domain.b - point[0]))
    if isinstance(domain, (Disk, Annulus)):
        c = np.asarray(domain.center, dtype=float)
        return float(np.linalg.norm(point - c) + domain.R)
    raise TypeError(f"unsupported domain {domain!r}")


def data_library(name: str, domain: Domain, **params) -> DataFunction:
    """Named data functions with exact metadata.

    Names: constant(value), distance, distance_squared_cap, bump(center,
    radius, height), interior_peak(center, height).
    """
    if name == "constant":
        value = float(params.pop("value"))
        _reject_extra(name, params)
        return _ConstantData(
            name="constant",
            domain=domain,
            params=(value,),
            sup=value,
            inf=value,
            semiconcavity_const=0.0,
            nonnegative=value >= 0,
            vanishes_on_boundary=value == 0,
            vanishes_to_second_order=value == 0,
            is_constant=True,
            value=value,
        )

    if name == "distance":
        _reject_extra(name, params)
        ridge = domain.max_interior_distance
        return _DistanceData(
            name="distance",
            domain=domain,
            lipschitz_const=1.0,
            osc=ridge,
            sup=ridge,
            inf=0.0,
            semiconcavity_const=None,  # concave kink at the ridge: unbounded second differences below, fine above, but Lip only
            nonnegative=True,
            vanishes_on_boundary=True,
        )

    if name == "distance_squared_cap":
        _reject_extra(name, params)
        delta = domain.smoothness_radius
        t0, t1 = delta, 2.0 * delta
        sup = float(_hermite_taper_integral(np.array([t1]), t0, t1)[0])
        lip = float(np.max(_hermite_taper(np.linspace(0, t1, 20001), t0, t1)))
        c_dd = _taper_max_slope_derivative(t0, t1) + lip * domain.hessian_distance_positive_part
        return _DistanceSquaredCapData(
            name="distance_squared_cap",
            domain=domain,
            lipschitz_const=lip,
            osc=sup,
            sup=sup,
            inf=0.0,
            semiconcavity_const=c_dd,
            nonnegative=True,
            vanishes_on_boundary=True,
            vanishes_to_second_order=True,
            t0=t0,
            t1=t1,
        )

    if name == "bump":
        center = np.atleast_1d(np.asarray(params.pop("center"), dtype=float))
        radius = float(params.pop("radius"))
        height = float(params.pop("height"))
        _reject_extra(name, params)
        margin = float(domain.distance_to_boundary(center)) - radius
        if margin <= 0 or domain.distance_to_closure(center) > 0:
            raise ValueError(
                f"bump support (center {center.tolist()}, radius {radius}) leaks outside the domain interior"
            )
        # verify no leak at the declared margin by dense sampling of the support sphere
        kappa = margin
        samples = _support_edge_samples(center, radius, domain.dim)
        if np.min(domain.distance_to_boundary(samples)) < kappa - 1e-9:
            raise ValueError("bump support leaks outside the declared support margin")
        return _BumpData(
            name="bump",
            domain=domain,
            params=(tuple(center.tolist()), radius, height),
            lipschitz_const=abs(height) * _BUMP_MAX_SLOPE / radius,  # max |d/ds (1-s^2)^2| = 8/(3*sqrt(3))
            osc=abs(height),
            sup=max(height, 0.0),
            inf=min(0.0, height),
            semiconcavity_const=8.0 * abs(height) / radius**2,
            support_margin=kappa,
            nonnegative=height >= 0,
            vanishes_on_boundary=True,
            vanishes_to_second_order=True,
            center_pt=tuple(center.tolist()),
            radius=radius,
            height=height,
        )

    if name == "interior_peak":
        center = np.atleast_1d(np.asarray(params.pop("center"), dtype=float))
        height = float(params.pop("height", 1.0))
        _reject_extra(name, params)
        far = _farthest_boundary_distance(domain, center)
        inf_val = max(0.0, height - far)
        return _InteriorPeakData(
            name="interior_peak",
            domain=domain,
            params=(tuple(center.tolist()), height),
            lipschitz_const=1.0,
            osc=height - inf_val,
            sup=height,
            inf=inf_val,
            semiconcavity_const=None,
            nonnegative=True,
            vanishes_on_boundary=False,
            center_pt=tuple(center.tolist()),
            height=height,
        )

    raise ValueError(f"unknown data function {name!r}")


def _reject_extra(name: str, params: dict) -> None:
    if params:
        raise ValueError(f"unexpected parameters for {name!r}: {sorted(params)}")


def _support_edge_samples(center: np.ndarray, radius: float, dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[center[0] - radius], [center[0] + radius]])
    ang = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
    return center[None, :] + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


# max |d/ds (1-s^2)^2| on [0,1] is at s=1/sqrt(3): 4s(1-s^2) -> 8/(3*sqrt(3))
_BUMP_MAX_SLOPE = 8.0 / (3.0 * np.sqrt(3.0))
assert abs(_BUMP_MAX_SLOPE - 1.5396007178390019) < 1e-15


def estimate_regularity(f: DataFunction, grid: Grid) -> tuple[float, float, float]:
    """Grid estimates (lip_est, osc_est, semiconcavity_est) of f's metadata.

    The semiconcavity estimate is the largest centered second difference
    along grid axes; values above SECOND_DIFF_CAP are clamped to +inf.
    """
    vals = np.asarray(f(grid.points), dtype=float)
    lip_est = 0.0
    for ax in range(grid.dim):
        right = grid.neighbors[:, ax, 1]
        ok = right >= 0
        if ok.any():
            lip_est = max(lip_est, float(np.max(np.abs(vals[right[ok]] - vals[ok]) / grid.h)))
    osc_est = float(np.max(vals) - np.min(vals))
    gf_rows, second = _second_differences(vals, grid)
    if len(second) == 0:
        sc_est = 0.0
    else:
        sc_est = float(np.max(second))
        if sc_est > SECOND_DIFF_CAP:
            sc_est = np.inf
    return lip_est, osc_est, sc_est


def _second_differences(vals: np.ndarray, grid: Grid):
    rows_list, out = [], []
    for ax in range(grid.dim):
        left, right = grid.neighbors[:, ax, 0], grid.neighbors[:, ax, 1]
        ok = (left >= 0) & (right >= 0)
        rows = np.flatnonzero(ok)
        rows_list.append(rows)
        out.append((vals[right[rows]] + vals[left[rows]] - 2.0 * vals[rows]) / grid.h**2)
    return np.concatenate(rows_list), np.concatenate(out)
