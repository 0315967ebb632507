import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from inelastic_fourier.kinematics import (DegenerateBasis, RestitutionParams, VelocityPair,
                                          as_direction, energy_delta, frame_directions,
                                          omega_energy_delta, omega_post_collision,
                                          post_collision, pre_collision, sphere_basis,
                                          xi_bound_coefficients, xi_minus, xi_norm_identity,
                                          xi_plus, xi_split)
from inelastic_fourier.kernels import KernelConfig, cutoff_angular, make_angular

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec = arrays(np.float64, 3, elements=finite)
restitution = st.floats(0.05, 1.0)


def unit(x):
    n = np.linalg.norm(x)
    return x / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------- post-collision

def test_post_collision_hand_evaluation():
    # u = (2,0,0), a_- = 0.25, a_+ = 0.75: a_-/2 u = (0.25,0,0), a_+/2 |u| sigma = (0,0.75,0)
    pair = VelocityPair(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]))
    out = post_collision(pair, np.array([0.0, 1, 0]), RestitutionParams(0.5))
    np.testing.assert_allclose(out.v, [0.25, 0.75, 0.0], atol=1e-15)
    np.testing.assert_allclose(out.v_star, [-0.25, -0.75, 0.0], atol=1e-15)


def test_post_collision_zero_relative_velocity():
    v = np.array([1.0, 2.0, 3.0])
    out = post_collision(VelocityPair(v, v), np.array([0.0, 0, 1]), RestitutionParams(0.3))
    np.testing.assert_array_equal(out.v, v)
    np.testing.assert_array_equal(out.v_star, v)


def test_post_collision_elastic_grazing_identity():
    v, vs = np.array([0.3, -1.0, 2.0]), np.array([1.0, 0.5, -0.2])
    sigma = unit(v - vs)
    out = post_collision(VelocityPair(v, vs), sigma, RestitutionParams(1.0))
    np.testing.assert_allclose(out.v, v, atol=1e-14)
    np.testing.assert_allclose(out.v_star, vs, atol=1e-14)


@given(vec, vec, vec, restitution)
def test_post_collision_conserves_momentum_and_dissipates(v, vs, s, e):
    sigma = unit(s)
    rp = RestitutionParams(e)
    out = post_collision(VelocityPair(v, vs), sigma, rp)
    scale = 1.0 + np.abs(v).sum() + np.abs(vs).sum()
    np.testing.assert_allclose(out.v + out.v_star, v + vs, atol=1e-12 * scale)
    dE = energy_delta(VelocityPair(v, vs), out)
    assert dE <= 1e-10 * scale ** 2


def test_restitution_validation():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            RestitutionParams(bad)
    rp = RestitutionParams(0.6)
    assert rp.a_plus == pytest.approx(0.8) and rp.a_minus == pytest.approx(0.2)


def test_as_direction_rejects_non_unit():
    with pytest.raises(ValueError):
        as_direction([1.0, 1.0, 0.0])


# ---------------------------------------------------------------- pre-collision

def test_pre_collision_elastic_matches_post():
    v, vs, s = np.array([1.0, 2, 0]), np.array([0.0, -1, 1]), unit(np.array([1.0, 1, 1]))
    rp = RestitutionParams(1.0)
    a = pre_collision(VelocityPair(v, vs), s, rp)
    b = post_collision(VelocityPair(v, vs), s, rp)
    np.testing.assert_allclose(a.v, b.v, atol=1e-14)
    np.testing.assert_allclose(a.v_star, b.v_star, atol=1e-14)


def test_pre_collision_coincident():
    v = np.array([0.5, -0.5, 2.0])
    out = pre_collision(VelocityPair(v, v), np.array([1.0, 0, 0]), RestitutionParams(0.4))
    np.testing.assert_array_equal(out.v, v)


def test_pre_collision_energy_increases_monte_carlo():
    rng = np.random.default_rng(3)
    n = 10_000
    v, vs = rng.normal(size=(n, 3)) * 2, rng.normal(size=(n, 3)) * 2
    s = rng.normal(size=(n, 3))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    e = rng.uniform(0.05, 0.999, n)
    lhs = np.empty(n)
    for i in range(n):
        out = pre_collision(VelocityPair(v[i], vs[i]), s[i], RestitutionParams(e[i]))
        lhs[i] = energy_delta(VelocityPair(v[i], vs[i]), out)
    assert np.all(lhs >= -1e-12)


@given(vec, vec, vec, st.floats(0.05, 0.99))
def test_pre_then_post_lands_on_pair_for_rotated_direction(v, vs, s, e):
    if np.linalg.norm(v - vs) < 1e-3:
        return
    rp = RestitutionParams(e)
    pre = pre_collision(VelocityPair(v, vs), unit(s), rp)
    du = pre.v - pre.v_star
    if np.linalg.norm(du) < 1e-9:
        return
    # direction that the forward map needs to return to (v, v*)
    target = (v - vs) - rp.a_minus * du
    sigma2 = target / (rp.a_plus * np.linalg.norm(du))
    assert abs(np.linalg.norm(sigma2) - 1.0) < 1e-9
    back = post_collision(pre, sigma2, rp)
    scale = 1.0 + np.abs(v).sum() + np.abs(vs).sum()
    np.testing.assert_allclose(back.v, v, atol=1e-9 * scale)


def test_pre_collision_requires_positive_e():
    rp = RestitutionParams(0.5)
    object.__setattr__(rp, "e", 0.0)
    with pytest.raises(ValueError):
        pre_collision(VelocityPair(np.zeros(3), np.ones(3)), np.array([1.0, 0, 0]), rp)


# ---------------------------------------------------------------- omega form

def test_omega_identity_when_orthogonal():
    v, vs = np.array([1.0, 0, 0]), np.array([0.0, 0, 0])
    out = omega_post_collision(VelocityPair(v, vs), np.array([0.0, 1, 0]), RestitutionParams(0.5))
    np.testing.assert_array_equal(out.v, v)
    np.testing.assert_array_equal(out.v_star, vs)


def test_omega_energy_delta_brute_force():
    pair = VelocityPair(np.array([1.0, 0, 0]), np.zeros(3))
    om = np.array([1.0, 0, 0])
    rp = RestitutionParams(0.5)
    brute = energy_delta(pair, omega_post_collision(pair, om, rp))
    assert brute == pytest.approx(-0.375, abs=1e-15)
    assert omega_energy_delta(pair, om, rp) == pytest.approx(-0.375, abs=1e-15)


@given(vec, vec, vec, restitution)
def test_omega_form_energy_and_momentum(v, vs, w, e):
    om = unit(w)
    rp = RestitutionParams(e)
    pair = VelocityPair(v, vs)
    out = omega_post_collision(pair, om, rp)
    scale = 1.0 + float(v @ v + vs @ vs)
    np.testing.assert_allclose(out.v + out.v_star, v + vs, atol=1e-12 * scale)
    assert abs(energy_delta(pair, out) - omega_energy_delta(pair, om, rp)) <= 1e-12 * scale
    el = omega_post_collision(pair, om, RestitutionParams(1.0))
    assert abs(energy_delta(pair, el)) <= 1e-12 * scale


# ---------------------------------------------------------------- Fourier split

def test_xi_split_elastic_and_aligned():
    xi = np.array([0.3, -1.2, 2.0])
    s = unit(np.array([1.0, 2.0, -0.5]))
    xp, xm = xi_split(xi, s, RestitutionParams(1.0))
    n = np.linalg.norm(xi)
    np.testing.assert_allclose(xp, 0.5 * (xi + n * s), atol=1e-15)
    np.testing.assert_allclose(xm, 0.5 * (xi - n * s), atol=1e-15)
    assert xp @ xp + xm @ xm == pytest.approx(n ** 2, rel=1e-14)
    for e in (0.1, 0.5, 1.0):
        rp = RestitutionParams(e)
        np.testing.assert_allclose(xi_plus(xi, xi / n, rp), xi, atol=1e-14)
        np.testing.assert_allclose(xi_minus(xi, xi / n, rp), 0.0, atol=1e-14)


def test_xi_split_at_origin():
    xp, xm = xi_split(np.zeros(3), np.array([0.0, 0, 1]), RestitutionParams(0.4))
    assert not np.any(xp) and not np.any(xm)


@given(vec, vec, restitution)
def test_xi_sum_and_norm_identities(xi, s, e):
    sigma = unit(s)
    rp = RestitutionParams(e)
    xp, xm = xi_split(xi, sigma, rp)
    n2 = float(xi @ xi) + 1e-300
    assert np.linalg.norm(xp + xm - xi) <= 1e-12 * (1 + np.sqrt(n2))
    assert abs(xp @ xp + xm @ xm - xi_norm_identity(xi, sigma, rp)) <= 1e-12 * (1 + n2)


@settings(max_examples=200)
@given(vec, vec, restitution, st.sampled_from([0.5, 1.0, 1.5, 2.0]))
def test_xi_power_bounds(xi, s, e, alpha):
    n = np.linalg.norm(xi)
    if n < 1e-6:
        return
    sigma = unit(s)
    if sigma @ xi < 0:
        sigma = -sigma
    rp = RestitutionParams(e)
    lo, hi, mi = xi_bound_coefficients(rp, alpha)
    x = min(max(float(sigma @ xi) / n, -1.0), 1.0)
    base = (1 + x) ** (alpha / 2) * n ** alpha
    p = np.linalg.norm(xi_plus(xi, sigma, rp)) ** alpha
    m = np.linalg.norm(xi_minus(xi, sigma, rp)) ** alpha
    assert lo * base * (1 - 1e-12) <= p <= hi * base * (1 + 1e-12) + 1e-300
    # compare squares: the alpha-th power amplifies rounding near |xi-| = 0
    assert m ** (2 / alpha) == pytest.approx(mi ** (2 / alpha) * (1 - x) * n ** 2, rel=1e-9,
                                             abs=1e-12 * n ** 2)


# ---------------------------------------------------------------- sphere basis

def test_sphere_basis_example_and_orthonormality():
    q, j, h = sphere_basis(VelocityPair(np.array([1.0, 0, 0]), np.array([0.0, 1, 0])))
    np.testing.assert_allclose(q, np.array([1.0, -1.0, 0.0]) / np.sqrt(2), atol=1e-15)
    # j is along v x v* = (0, 0, 1)
    np.testing.assert_allclose(j, [0.0, 0.0, 1.0], atol=1e-15)
    B = np.stack([q, j, h])
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.cross(j, q), h, atol=1e-15)


@given(vec, vec)
def test_sphere_basis_is_orthonormal(v, vs):
    try:
        q, j, h = sphere_basis(VelocityPair(v, vs))
    except DegenerateBasis:
        return
    B = np.stack([q, j, h])
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-10)


def test_sphere_basis_degenerate():
    with pytest.raises(DegenerateBasis):
        sphere_basis(VelocityPair(np.ones(3), np.ones(3)))
    with pytest.raises(DegenerateBasis):
        sphere_basis(VelocityPair(np.array([1.0, 0, 0]), np.array([2.0, 0, 0])))


def test_sphere_symmetry_integral_vanishes():
    b = cutoff_angular(make_angular(KernelConfig()), 8.0)
    theta, w = b.polar_rule(24)
    pair = VelocityPair(np.array([0.4, 1.0, -0.3]), np.array([-0.7, 0.2, 0.9]))
    frame = sphere_basis(pair)
    q = frame[0]
    phi = 2 * np.pi * np.arange(32) / 32
    sig = frame_directions(q, np.cos(theta)[:, None], phi[None, :], frame)
    mu = sig @ q
    integrand = mu[..., None] * q - sig
    total = np.einsum("i,ik->k", w, integrand.mean(axis=1))
    np.testing.assert_allclose(total, 0.0, atol=1e-13)
