import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from inelastic_fourier.charfn import (
    CharGrid, DiscreteMeasure, RadialCharGrid, check_positive_definite, constant_char, distance,
    dump_grid, export_radial_csv, fractional_moment, from_measure, gaussian_char, knorm, levy_char,
    load_grid, moments_from_char, pd_inequality_residuals,
)

vec = st.lists(st.floats(-2, 2), min_size=3, max_size=3).map(np.array)


@st.composite
def measures(draw, max_atoms=4):
    k = draw(st.integers(1, max_atoms))
    w = np.array(draw(st.lists(st.floats(0.05, 1), min_size=k, max_size=k)))
    v = np.array(draw(st.lists(vec, min_size=k, max_size=k)))
    return DiscreteMeasure(w / w.sum(), v)


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([0.5, 0.4], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        DiscreteMeasure([1.0], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        DiscreteMeasure([1.5, -0.5], np.zeros((2, 3)))


def test_dirac_char():
    F = DiscreteMeasure.dirac((1.0, 2.0, 3.0))
    xi = np.array([[0.3, -0.1, 0.7], [0, 0, 0]])
    np.testing.assert_allclose(F.char(xi), np.exp(-1j * xi @ [1, 2, 3]), rtol=1e-15)
    assert F.energy == 14.0
    np.testing.assert_array_equal(F.momentum, [1, 2, 3])


@given(F=measures(), k=st.floats(0, 5))
@settings(max_examples=30, deadline=None)
def test_isotropic_char_is_rotation_average(F, k):
    x, w = integrate.lebedev_rule(41)
    avg = (F.char(k * x.T) @ w) / w.sum()
    assert float(F.isotropic_char(k)) == pytest.approx(avg.real, abs=1e-10)
    assert abs(avg.imag) < 1e-10


def test_from_measure_nodes_and_symmetry():
    F = DiscreteMeasure([0.3, 0.7], [[0.5, 0.1, -0.2], [-0.2, 0.3, 0.4]])
    g = from_measure(F, 2.0, 9)
    pts = g.node_points()
    np.testing.assert_allclose(g.values, F.char(pts.reshape(-1, 3)).reshape(9, 9, 9), atol=1e-15)
    assert g.origin_value == 1.0
    assert g.hermitian_error() < 1e-15
    assert g.max_modulus() <= 1 + 1e-15
    with pytest.raises(ValueError):
        CharGrid(1.0, 8, np.zeros((8, 8, 8)))


@pytest.mark.parametrize("method,tol", [("cubic", 2e-4), ("linear", 2e-2)])
def test_grid_interpolation(method, tol):
    g = gaussian_char(1.0, 3.0, 25)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-2.5, 2.5, size=(200, 3))
    exact = np.exp(-0.5 * np.sum(pts ** 2, axis=1))
    assert np.max(np.abs(g(pts, method=method) - exact)) < tol
    nodes = g.node_points().reshape(-1, 3)[::37]
    np.testing.assert_allclose(g(nodes, method=method), g.values.reshape(-1)[::37], atol=1e-12)
    with pytest.raises(ValueError):
        g(np.array([[3.5, 0, 0]]))


def test_radial_grid_interpolation():
    g = gaussian_char(1.0, 6.0, 121, radial=True)
    k = np.linspace(0, 5.9, 77)
    pts = np.stack([k, 0 * k, 0 * k], axis=1)
    np.testing.assert_allclose(g(pts).real, np.exp(-0.5 * k ** 2), atol=1e-6)
    with pytest.raises(ValueError):
        RadialCharGrid(1.0, 3, np.array([1, 1j, 0]))


def test_levy_two_is_gaussian():
    np.testing.assert_array_equal(levy_char(2.0, 3, 13).values, gaussian_char(2.0, 3, 13).values)
    with pytest.raises(ValueError):
        levy_char(2.5, 3, 13)


def test_knorm_values():
    g = gaussian_char(0.6, 2.0, 401, radial=True)
    # |1 - exp(-v k^2/2)| / k^2 increases to v/2 as k -> 0
    k1 = g.spacing
    assert knorm(g, 2.0).value == pytest.approx((1 - math.exp(-0.3 * k1 ** 2)) / k1 ** 2, rel=1e-12)
    assert knorm(g, 2.0).value <= 0.3
    L = levy_char(1.0, 2.0, 401, radial=True)
    assert knorm(L, 1.0).value == pytest.approx((1 - math.exp(-k1)) / k1, rel=1e-12)
    assert knorm(constant_char(2.0, 11), 1.5).value == 0.0
    with pytest.raises(ValueError):
        knorm(g, 0.0)


def test_distance_basic():
    a = gaussian_char(1.0, 2.0, 9)
    b = gaussian_char(1.2, 2.0, 9)
    assert distance(a, a, 2.0) == 0.0
    assert distance(a, b, 2.0) == pytest.approx(distance(b, a, 2.0))
    assert distance(a, b, 2.0) <= 0.1 + 1e-12  # |v1 - v2| / 2 bound for Gaussians


@given(F=measures(), seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_discrete_measures_positive_definite(F, seed):
    assert check_positive_definite(F.char, 12, seed, radius=3.0).passed


def test_non_characteristic_function_fails_psd():
    phi = lambda x: 1.0 + np.sum(np.asarray(x) ** 2, axis=-1)
    v = check_positive_definite(phi, 8, 0, radius=1.0)
    assert not v.passed and v.min_eigenvalue < -1e-3


@given(F=measures(), xi=vec, eta=vec)
@settings(max_examples=40, deadline=None)
def test_pd_inequalities_hold_for_measures(F, xi, eta):
    # |1 - e^{-i x}| <= |x| bounds the K^1 seminorm by the mean speed
    speed = float(F.weights @ np.linalg.norm(F.velocities, axis=1))
    r1, r2, r3 = pd_inequality_residuals(F.char, xi, eta, 1.0, speed)
    assert r1.min() >= -1e-12 and r2.min() >= -1e-12 and r3.min() >= -1e-12


def test_pd_inequality_violated_by_bad_function():
    phi = lambda x: np.cos(2 * np.linalg.norm(np.atleast_2d(x), axis=-1)) * 1.5
    r1, r2, _ = pd_inequality_residuals(phi, [0.3, 0, 0], [0, 0.4, 0], 2.0, 1.0)
    assert min(r1.min(), r2.min()) < 0


def test_moments_of_point_mass():
    F = DiscreteMeasure.dirac((1.0, 2.0, 3.0))
    g = from_measure(F, 0.5, 41)
    m = moments_from_char(g)
    assert m.mass == 1.0
    np.testing.assert_allclose(m.momentum, [1, 2, 3], rtol=1e-8)
    assert m.energy == pytest.approx(14.0, rel=1e-8)
    assert m.energy_finite
    m2 = moments_from_char(F.char, h=0.0125)
    assert m2.energy == pytest.approx(14.0, rel=1e-8)
    with pytest.raises(ValueError):
        moments_from_char(F.char)


def test_moments_of_gaussian():
    for g in (gaussian_char(1.0, 2.0, 81), gaussian_char(1.0, 4.0, 161, radial=True)):
        m = moments_from_char(g)
        assert m.energy == pytest.approx(3.0, rel=1e-8)
        np.testing.assert_allclose(m.momentum, 0, atol=1e-14)


def test_infinite_energy_flag():
    assert not moments_from_char(levy_char(1.0, 2.0, 81)).energy_finite
    assert not moments_from_char(levy_char(1.5, 4.0, 401, radial=True)).energy_finite
    assert moments_from_char(gaussian_char(1.0, 4.0, 401, radial=True)).energy_finite


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_fractional_moment_gaussian(alpha):
    exact = 2 ** (alpha / 2) * special.gamma((3 + alpha) / 2) / special.gamma(1.5)
    iso = fractional_moment(lambda k: np.exp(-0.5 * k ** 2), alpha, delta=1e-4, isotropic=True)
    assert iso == pytest.approx(exact, rel=1e-3)
    g = gaussian_char(1.0, 12.0, 481, radial=True)
    assert fractional_moment(g, alpha, delta=1e-4) == pytest.approx(exact, rel=1e-3)


def test_fractional_moment_point_mass_speed():
    F = DiscreteMeasure.dirac((0.0, 1.2, -1.6))
    val = fractional_moment(F.isotropic_char, 1.0, delta=1e-4, isotropic=True)
    assert val == pytest.approx(2.0, rel=2e-3)
    with pytest.raises(ValueError):
        fractional_moment(F.isotropic_char, 2.0, isotropic=True)


def test_fractional_moment_refuses_undecayed_grid():
    with pytest.raises(ValueError):
        fractional_moment(gaussian_char(1.0, 2.0, 41, radial=True), 1.0)


def test_dump_load_round_trip(tmp_path):
    g = from_measure(DiscreteMeasure([0.4, 0.6], [[1, 0, 0], [0, -1, 0.5]]), 1.5, 7)
    dump_grid(g, tmp_path / "g.bin")
    h = load_grid(tmp_path / "g.bin")
    assert isinstance(h, CharGrid) and h.R == g.R and h.M == g.M
    np.testing.assert_allclose(h.values, g.values, atol=1e-7)
    r = gaussian_char(1.0, 3.0, 31, radial=True)
    dump_grid(r, tmp_path / "r.bin")
    rr = load_grid(tmp_path / "r.bin")
    assert isinstance(rr, RadialCharGrid)
    np.testing.assert_allclose(rr.values, r.values, atol=1e-7)
    (tmp_path / "bad.bin").write_bytes(b"nope" + bytes(30))
    with pytest.raises(ValueError):
        load_grid(tmp_path / "bad.bin")


def test_export_radial_csv(tmp_path):
    export_radial_csv(gaussian_char(1.0, 2.0, 9), tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "k,re,im,abs" and len(lines) == 6
