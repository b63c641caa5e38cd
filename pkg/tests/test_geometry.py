"""Domain geometry: signed distance, normals, curvature bounds, grids."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjlab.geometry import (
    Annulus,
    Disk,
    GridError,
    Interval,
    build_grid,
)

INTERVAL = Interval(0.0, 1.0)
DISK = Disk((0.0, 0.0), 1.0)
ANNULUS = Annulus((0.0, 0.0), 0.5, 2.0)


# ---------------------------------------------------------------------------
# distances and smoothness radii


def test_interval_distance_values():
    assert INTERVAL.distance_to_boundary([[0.25]])[0] == pytest.approx(0.25, abs=1e-14)
    assert INTERVAL.distance_to_boundary([[0.5]])[0] == pytest.approx(0.5, abs=1e-14)
    assert INTERVAL.distance_to_boundary([[0.9]])[0] == pytest.approx(0.1, abs=1e-14)


def test_disk_distance_at_center():
    assert DISK.distance_to_boundary([[0.0, 0.0]])[0] == pytest.approx(1.0, abs=1e-14)
    assert DISK.distance_to_boundary([[0.5, 0.0]])[0] == pytest.approx(0.5, abs=1e-14)


def test_annulus_distance():
    # |x| = 0.8 in annulus (0.5, 2.0): nearer to the inner circle, d = 0.3
    assert ANNULUS.distance_to_boundary([[0.8, 0.0]])[0] == pytest.approx(0.3, abs=1e-14)
    # |x| = 1.6: nearer to the outer circle, d = 0.4
    assert ANNULUS.distance_to_boundary([[0.0, 1.6]])[0] == pytest.approx(0.4, abs=1e-14)


def test_smoothness_radius_values():
    # one third of the distance from the boundary to the nearest ridge point
    assert INTERVAL.smoothness_radius == pytest.approx(1.0 / 6.0)
    assert DISK.smoothness_radius == pytest.approx(1.0 / 3.0)
    assert ANNULUS.smoothness_radius == pytest.approx(1.5 / 12.0)


def test_sign_conventions():
    # boundary distance is the unsigned set distance; closure distance is the
    # exterior indicator
    assert INTERVAL.distance_to_boundary([[1.5]])[0] == pytest.approx(0.5)
    assert INTERVAL.distance_to_closure([[1.5]])[0] == pytest.approx(0.5)
    assert INTERVAL.distance_to_closure([[0.7]])[0] == 0.0
    assert not INTERVAL.contains([[1.5]])[0]
    assert INTERVAL.contains([[0.5]])[0]
    assert DISK.contains([[0.99, 0.0]])[0]
    assert not DISK.contains([[1.01, 0.0]])[0]


# ---------------------------------------------------------------------------
# inward normals: d(x0 + s n) == s for s below the smoothness radius


def test_inward_normal_examples():
    assert INTERVAL.inward_normal([0.0])[0] == pytest.approx(1.0)
    assert INTERVAL.inward_normal([1.0])[0] == pytest.approx(-1.0)
    n = DISK.inward_normal([1.0, 0.0])
    assert np.allclose(n, [-1.0, 0.0])
    n_in = ANNULUS.inward_normal([0.5, 0.0])
    assert np.allclose(n_in, [1.0, 0.0])
    n_out = ANNULUS.inward_normal([2.0, 0.0])
    assert np.allclose(n_out, [-1.0, 0.0])


@pytest.mark.parametrize("domain", [INTERVAL, DISK, ANNULUS], ids=["interval", "disk", "annulus"])
def test_normal_parametrizes_distance(domain):
    rng = np.random.default_rng(7)
    delta = domain.smoothness_radius
    for _ in range(20):
        if domain.dim == 1:
            x0 = np.array([0.0 if rng.random() < 0.5 else 1.0])
        else:
            ang = rng.uniform(0, 2 * np.pi)
            r = (
                1.0
                if isinstance(domain, Disk)
                else (0.5 if rng.random() < 0.5 else 2.0)
            )
            x0 = r * np.array([np.cos(ang), np.sin(ang)])
        n = domain.inward_normal(x0)
        assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
        for s in (0.1 * delta, 0.5 * delta, 0.99 * delta):
            d = domain.distance_to_boundary([x0 + s * n])[0]
            assert d == pytest.approx(s, abs=1e-10)


@pytest.mark.parametrize("domain", [INTERVAL, DISK, ANNULUS], ids=["interval", "disk", "annulus"])
def test_distance_gradient_is_unit_where_smooth(domain):
    """Finite-difference gradient of the distance has unit norm off the ridge."""
    rng = np.random.default_rng(3)
    h_fd = 1e-6
    count = 0
    for _ in range(200):
        x = rng.uniform(*np.array(domain.bounding_box))
        d = domain.distance_to_boundary([x])[0]
        if not (0.05 < d < 0.9 * domain.smoothness_radius):
            continue
        g = np.array(
            [
                (
                    domain.distance_to_boundary([x + h_fd * e])[0]
                    - domain.distance_to_boundary([x - h_fd * e])[0]
                )
                / (2 * h_fd)
                for e in np.eye(domain.dim)
            ]
        )
        assert np.linalg.norm(g) == pytest.approx(1.0, abs=10 * h_fd)
        count += 1
    assert count > 10


def test_laplacian_distance_values_and_bound():
    assert INTERVAL.laplacian_distance([[0.3]])[0] == pytest.approx(0.0, abs=1e-14)
    # disk: Laplacian of (1 - |x|) is -1/|x|; at |x| = 0.9 it is -1/0.9
    val = DISK.laplacian_distance([[0.9, 0.0]])[0]
    assert val == pytest.approx(-1.0 / 0.9, abs=1e-12)
    # band bound: |Lap d| on the smooth band d <= delta stays under the cap
    rng = np.random.default_rng(11)
    for domain in (DISK, ANNULUS):
        cap = domain.hessian_distance_band_norm
        pts = rng.uniform(*np.array(domain.bounding_box), size=(400, 2))
        d = domain.distance_to_boundary(pts)
        sel = np.asarray(domain.contains(pts)) & (d > 1e-3) & (d < domain.smoothness_radius)
        assert sel.sum() > 5
        assert np.all(np.abs(domain.laplacian_distance(pts[sel])) <= cap + 1e-9)


# ---------------------------------------------------------------------------
# grids


def test_interval_grid_enumeration():
    g = build_grid(INTERVAL, 0.25)
    xs = sorted(g.points[:, 0])
    assert np.allclose(xs, [0.25, 0.5, 0.75])
    band = sorted(g.points[g.band_mask][:, 0])
    assert np.allclose(band, [0.25, 0.75])
    assert np.allclose(g.dist, np.minimum(g.points[:, 0], 1 - g.points[:, 0]))


def test_disk_grid_membership():
    g = build_grid(DISK, 0.5)
    assert g.n_active > 0
    assert np.all(np.linalg.norm(g.points, axis=1) < 1.0)


def test_too_coarse_grid_rejected():
    with pytest.raises(GridError):
        build_grid(INTERVAL, 0.6)


def test_neighbor_table_is_symmetric():
    g = build_grid(DISK, 0.125)
    for ax in range(2):
        for i in range(g.n_active):
            j = g.neighbors[i, ax, 1]
            if j >= 0:
                assert g.neighbors[j, ax, 0] == i


@given(st.sampled_from([0.25, 0.125, 0.0625]))
@settings(max_examples=3, deadline=None)
def test_band_width_matches_definition(h):
    g = build_grid(INTERVAL, h)
    expect = g.dist <= h * np.sqrt(g.dim) + 1e-12
    assert np.array_equal(g.band_mask, expect)
