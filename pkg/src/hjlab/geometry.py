"""Analytic domains with C2 boundary and uniform grids on them.

Three shapes are supported (interval, disk, annulus); all have closed-form
distance functions, normals and projections, so the geometry contributes no
numerical error to the rate measurements downstream.

Points are numpy arrays of shape (n,) or (m, n) with n = domain.dim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Domain",
    "Interval",
    "Disk",
    "Annulus",
    "Grid",
    "GridFunction",
    "GeometryError",
    "GridError",
    "build_grid",
]


class GeometryError(ValueError):
    """Invalid domain parameters or out-of-contract point queries."""


class GridError(ValueError):
    """Grid construction failed (spacing too coarse for the domain)."""


def _as_points(x) -> tuple[np.ndarray, bool]:
    """Normalize to (m, n) float array; second value tells if input was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        return arr, True
    if arr.ndim == 1:
        return arr.reshape(1, -1), True
    return arr, False


@dataclass(frozen=True)
class Domain:
    """Open bounded domain in R^n with C2 boundary.

    Subclasses supply closed-form distance functions, normals, the radius
    delta (one third of the widest boundary tube where the distance function
    stays C2-smooth), and closest-point projection onto the closure.
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    @property
    def smoothness_radius(self) -> float:
        """delta: (1/3) * sup{d : distance is C2 in the band of width d}."""
        raise NotImplementedError

    @property
    def max_interior_distance(self) -> float:
        """max over the closure of the distance to the boundary (the ridge height)."""
        raise NotImplementedError

    @property
    def hessian_distance_band_norm(self) -> float:
        """sup of |D^2 d_boundary| (operator norm) over the band of width delta."""
        raise NotImplementedError

    @property
    def hessian_distance_positive_part(self) -> float:
        """sup of the largest positive eigenvalue of D^2 d_boundary on the smooth band."""
        raise NotImplementedError

    def distance_to_boundary(self, x):
        """Distance to the boundary set, defined on all of R^n (nonnegative)."""
        raise NotImplementedError

    def distance_to_closure(self, x):
        """Distance to the closed domain: zero inside, positive outside."""
        raise NotImplementedError

    def contains(self, x):
        """True for points in the open domain."""
        raise NotImplementedError

    def inward_normal(self, x0):
        """Unit inward normal at a boundary point (tolerance 1e-12 * diameter)."""
        raise NotImplementedError

    def laplacian_distance(self, x):
        """Analytic Laplacian of the boundary distance on the smooth band (d <= 2*delta)."""
        raise NotImplementedError

    def closest_point(self, x):
        """Closest-point projection onto the closure."""
        raise NotImplementedError

    def _check_on_boundary(self, x0: np.ndarray) -> None:
        tol = 1e-12 * self.diameter
        d = np.atleast_1d(self.distance_to_boundary(x0))
        if np.any(d > tol):
            raise GeometryError(f"point {x0!r} is not on the boundary (distance {float(np.max(d)):.3e})")

    def _check_smooth_band(self, x: np.ndarray) -> None:
        d = np.atleast_1d(self.distance_to_boundary(x))
        inside = np.atleast_1d(self.contains(x))
        if np.any(~inside) or np.any(d > 2.0 * self.smoothness_radius + 1e-14):
            raise GeometryError("point outside the smooth boundary band (d <= 2*delta required)")


@dataclass(frozen=True)
class Interval(Domain):
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise GeometryError(f"interval requires a < b, got ({self.a}, {self.b})")

    @property
    def dim(self) -> int:
        return 1

    @property
    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    @property
    def smoothness_radius(self) -> float:
        # distance is non-smooth only at the midpoint ridge, where d = (b-a)/2
        return (self.b - self.a) / 6.0

    @property
    def max_interior_distance(self) -> float:
        return (self.b - self.a) / 2.0

    @property
    def hessian_distance_band_norm(self) -> float:
        return 0.0

    @property
    def hessian_distance_positive_part(self) -> float:
        return 0.0

    def distance_to_boundary(self, x):
        pts, single = _as_points(x)
        d = np.minimum(np.abs(pts[:, 0] - self.a), np.abs(pts[:, 0] - self.b))
        return float(d[0]) if single else d

    def distance_to_closure(self, x):
        pts, single = _as_points(x)
        d = np.maximum.reduce([self.a - pts[:, 0], pts[:, 0] - self.b, np.zeros(len(pts))])
        return float(d[0]) if single else d

    def contains(self, x):
        pts, single = _as_points(x)
        m = (pts[:, 0] > self.a) & (pts[:, 0] < self.b)
        return bool(m[0]) if single else m

    def inward_normal(self, x0):
        pts, single = _as_points(x0)
        self._check_on_boundary(pts)
        n = np.where((np.abs(pts[:, 0] - self.a) < np.abs(pts[:, 0] - self.b))[:, None], 1.0, -1.0)
        return n[0] if single else n

    def laplacian_distance(self, x):
        pts, single = _as_points(x)
        self._check_smooth_band(pts)
        out = np.zeros(len(pts))
        return float(out[0]) if single else out

    def closest_point(self, x):
        pts, single = _as_points(x)
        out = np.clip(pts, self.a, self.b)
        return out[0] if single else out


def _radii(pts: np.ndarray, center: np.ndarray) -> np.ndarray:
    return np.linalg.norm(pts - center[None, :], axis=1)


@dataclass(frozen=True)
class Disk(Domain):
    center: tuple[float, float] = (0.0, 0.0)
    R: float = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise GeometryError(f"disk requires R > 0, got {self.R}")

    @property
    def dim(self) -> int:
        return 2

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def bounding_box(self):
        c = self._c
        return c - self.R, c + self.R

    @property
    def smoothness_radius(self) -> float:
        # distance is non-smooth only at the center, where d = R
        return self.R / 3.0

    @property
    def max_interior_distance(self) -> float:
        return self.R

    @property
    def hessian_distance_band_norm(self) -> float:
        # |D^2 d| = 1/rho on the band rho >= R - delta = 2R/3
        return 1.0 / (self.R - self.smoothness_radius)

    @property
    def hessian_distance_positive_part(self) -> float:
        # d = R - rho has nonpositive Hessian eigenvalues in the smooth band
        return 0.0

    def distance_to_boundary(self, x):
        pts, single = _as_points(x)
        d = np.abs(self.R - _radii(pts, self._c))
        return float(d[0]) if single else d

    def distance_to_closure(self, x):
        pts, single = _as_points(x)
        d = np.maximum(_radii(pts, self._c) - self.R, 0.0)
        return float(d[0]) if single else d

    def contains(self, x):
        pts, single = _as_points(x)
        m = _radii(pts, self._c) < self.R
        return bool(m[0]) if single else m

    def inward_normal(self, x0):
        pts, single = _as_points(x0)
        self._check_on_boundary(pts)
        rad = pts - self._c[None, :]
        n = -rad / np.linalg.norm(rad, axis=1, keepdims=True)
        return n[0] if single else n

    def laplacian_distance(self, x):
        pts, single = _as_points(x)
        self._check_smooth_band(pts)
        rho = _radii(pts, self._c)
        out = -1.0 / rho
        return float(out[0]) if single else out

    def closest_point(self, x):
        pts, single = _as_points(x)
        rad = pts - self._c[None, :]
        rho = np.linalg.norm(rad, axis=1)
        scale = np.where(rho > self.R, self.R / np.maximum(rho, 1e-300), 1.0)
        out = self._c[None, :] + rad * scale[:, None]
        return out[0] if single else out


@dataclass(frozen=True)
class Annulus(Domain):
    center: tuple[float, float] = (0.0, 0.0)
    r: float = 0.5
    R: float = 1.0

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise GeometryError(f"annulus requires 0 < r < R, got ({self.r}, {self.R})")

    @property
    def dim(self) -> int:
        return 2

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def bounding_box(self):
        c = self._c
        return c - self.R, c + self.R

    @property
    def smoothness_radius(self) -> float:
        # ridge at rho = (r + R)/2 where d = (R - r)/2
        return (self.R - self.r) / 12.0

    @property
    def max_interior_distance(self) -> float:
        return (self.R - self.r) / 2.0

    @property
    def hessian_distance_band_norm(self) -> float:
        delta = self.smoothness_radius
        return max(1.0 / self.r, 1.0 / (self.R - delta))

    @property
    def hessian_distance_positive_part(self) -> float:
        # near the inner boundary d = rho - r has positive tangential curvature 1/rho
        return 1.0 / self.r

    def distance_to_boundary(self, x):
        pts, single = _as_points(x)
        rho = _radii(pts, self._c)
        d = np.minimum(np.abs(rho - self.r), np.abs(self.R - rho))
        return float(d[0]) if single else d

    def distance_to_closure(self, x):
        pts, single = _as_points(x)
        rho = _radii(pts, self._c)
        d = np.maximum.reduce([self.r - rho, rho - self.R, np.zeros(len(pts))])
        return float(d[0]) if single else d

    def contains(self, x):
        pts, single = _as_points(x)
        rho = _radii(pts, self._c)
        m = (rho > self.r) & (rho < self.R)
        return bool(m[0]) if single else m

    def inward_normal(self, x0):
        pts, single = _as_points(x0)
        self._check_on_boundary(pts)
        rad = pts - self._c[None, :]
        rho = np.linalg.norm(rad, axis=1, keepdims=True)
        unit = rad / rho
        inner = np.abs(rho[:, 0] - self.r) < np.abs(self.R - rho[:, 0])
        n = np.where(inner[:, None], unit, -unit)
        return n[0] if single else n

    def laplacian_distance(self, x):
        pts, single = _as_points(x)
        self._check_smooth_band(pts)
        rho = _radii(pts, self._c)
        inner = np.abs(rho - self.r) < np.abs(self.R - rho)
        out = np.where(inner, 1.0 / rho, -1.0 / rho)
        return float(out[0]) if single else out

    def closest_point(self, x):
        pts, single = _as_points(x)
        rad = pts - self._c[None, :]
        rho = np.linalg.norm(rad, axis=1)
        # degenerate center point: project deterministically along +x
        unit = np.where(rho[:, None] > 1e-300, rad / np.maximum(rho, 1e-300)[:, None], np.array([[1.0, 0.0]]))
        target = np.clip(rho, self.r, self.R)
        out = self._c[None, :] + unit * target[:, None]
        return out[0] if single else out


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over the bounding box with node classification.

    Active nodes are the lattice points inside the open domain; the
    boundary band is the subset within h*sqrt(n) of the boundary. Arrays:

      points       (n_active, dim) coordinates
      dist         (n_active,) boundary distance
      band_mask    (n_active,) True on the boundary band
      active_of    lattice flat index -> active index (-1 if exterior)
      neighbors    (n_active, dim, 2) active index of (left, right) axis
                   neighbor, -1 where the neighbor is not active
    """

    domain: Domain
    h: float
    lattice_shape: tuple[int, ...]
    origin: np.ndarray
    points: np.ndarray
    dist: np.ndarray
    band_mask: np.ndarray
    active_of: np.ndarray
    neighbors: np.ndarray
    lattice_index: np.ndarray = field(repr=False, default=None)

    @property
    def n_active(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def interior_mask(self) -> np.ndarray:
        """Strictly interior nodes (active and not in the boundary band)."""
        return ~self.band_mask


def build_grid(domain: Domain, h: float) -> Grid:
    """Build the classified uniform grid with spacing h.

    Raises GridError when no interior node exists or a band node has an
    axis with no active neighbor on either side (no one-sided stencil).
    """
    if not h > 0:
        raise GridError(f"grid spacing must be positive, got {h}")
    lo, hi = domain.bounding_box
    dim = domain.dim
    counts = tuple(int(np.floor((hi[k] - lo[k]) / h + 1e-9)) + 1 for k in range(dim))
    axes = [lo[k] + h * np.arange(counts[k]) for k in range(dim)]
    if dim == 1:
        pts = axes[0][:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)

    inside = np.asarray(domain.contains(pts))
    if not inside.any():
        raise GridError(f"spacing h={h} yields no interior lattice node")
    active_idx = np.flatnonzero(inside)
    active_of = np.full(len(pts), -1, dtype=np.int64)
    active_of[active_idx] = np.arange(len(active_idx))

    points = pts[active_idx]
    dist = np.asarray(domain.distance_to_boundary(points))
    band_mask = dist <= h * np.sqrt(dim) + 1e-12

    # axis neighbors in the lattice, mapped to active indices
    strides = [1] if dim == 1 else [counts[1], 1]
    neighbors = np.full((len(active_idx), dim, 2), -1, dtype=np.int64)
    multi = np.array(np.unravel_index(active_idx, counts)).T
    for ax in range(dim):
        for side, step in ((0, -1), (1, +1)):
            ok = (multi[:, ax] + step >= 0) & (multi[:, ax] + step < counts[ax])
            flat = active_idx[ok] + step * strides[ax]
            neighbors[ok, ax, side] = active_of[flat]

    # every band node must see an active neighbor on at least one side per axis
    band_rows = np.flatnonzero(band_mask)
    for ax in range(dim):
        has_stencil = (neighbors[band_rows, ax, 0] >= 0) | (neighbors[band_rows, ax, 1] >= 0)
        if not has_stencil.all():
            raise GridError(
                f"spacing h={h} too coarse: a boundary-band node has no interior "
                f"one-sided stencil along axis {ax}"
            )

    return Grid(
        domain=domain,
        h=float(h),
        lattice_shape=counts,
        origin=np.asarray(lo, dtype=float),
        points=points,
        dist=dist,
        band_mask=band_mask,
        active_of=active_of,
        neighbors=neighbors,
        lattice_index=active_idx,
    )


@dataclass
class GridFunction:
    """Real-valued field on the active (non-exterior) nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_active,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid with {self.grid.n_active} active nodes"
            )

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def max_neighbor_slope(self) -> float:
        """Largest |difference|/h over axis-neighbor pairs of active nodes."""
        g, u = self.grid, self.values
        worst = 0.0
        for ax in range(g.dim):
            right = g.neighbors[:, ax, 1]
            ok = right >= 0
            if ok.any():
                worst = max(worst, float(np.max(np.abs(u[right[ok]] - u[ok]) / g.h)))
        return worst

    def centered_second_differences(self) -> tuple[np.ndarray, np.ndarray]:
        """(node indices, values) of (u(x+he)+u(x-he)-2u(x))/h^2 over axes where both neighbors are active."""
        g, u = self.grid, self.values
        idx_list, val_list = [], []
        for ax in range(g.dim):
            left, right = g.neighbors[:, ax, 0], g.neighbors[:, ax, 1]
            ok = (left >= 0) & (right >= 0)
            rows = np.flatnonzero(ok)
            vals = (u[right[rows]] + u[left[rows]] - 2.0 * u[rows]) / g.h**2
            idx_list.append(rows)
            val_list.append(vals)
        return np.concatenate(idx_list), np.concatenate(val_list)
