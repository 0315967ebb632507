import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from inelastic_fourier.charfn import DiscreteMeasure
from inelastic_fourier.kernels import KernelConfig
from inelastic_fourier.kinematics import RestitutionParams
from inelastic_fourier.measure_oracle import (
    OracleKernels, OracleQuad, TestFunction, L_e_B, compensated_L, equicontinuity_ratio,
    gain_term_fourier_check, gradient_consistency, weak_rhs,
)

KCFG = KernelConfig()
RP = RestitutionParams(0.5)
vec = st.lists(st.floats(-2, 2), min_size=3, max_size=3).map(np.array)


@pytest.fixture(scope="module")
def kernels():
    return OracleKernels.from_config(KCFG, normalized=False)


@pytest.mark.parametrize("tf", [TestFunction.constant(2.0), TestFunction.coordinate(1), TestFunction.energy(),
                                TestFunction.weighted(1.5), TestFunction.exponential([0.3, -1, 0.2]),
                                TestFunction.exponential_imag([0.3, -1, 0.2])], ids=lambda t: t.tag)
def test_gradients_consistent(tf):
    pts = np.random.default_rng(0).normal(size=(20, 3))
    assert gradient_consistency(tf, pts) < 1e-8


@given(v=vec, vs=vec)
@settings(max_examples=30, deadline=None)
def test_collision_invariants_vanish(v, vs, kernels):
    for tf in (TestFunction.constant(), TestFunction.coordinate(0), TestFunction.coordinate(2)):
        assert abs(L_e_B(tf, v, vs, kernels, RP)) < 1e-12 * (1 + float(np.sum((v - vs) ** 2)))


def test_energy_rate_closed_form(kernels):
    v, vs = np.array([0.7, 0.2, -0.1]), np.array([-0.3, 0.5, 0.4])
    u2 = float(np.sum((v - vs) ** 2))
    b = kernels.b
    # energy change at deflection theta is -(1 - e^2)/4 |u|^2 (1 - cos theta)
    f = lambda t: 2 * math.pi * float(b(t)) * math.sin(t) * (1 - math.cos(t))
    ang = integrate.quad(f, 0, math.pi / 2, points=[b.theta_cut], epsrel=1e-12, limit=200)[0]
    exact = -float(kernels.phi(math.sqrt(u2))) * (1 - RP.e ** 2) / 4 * u2 * ang
    assert L_e_B(TestFunction.energy(), v, vs, kernels, RP) == pytest.approx(exact, rel=1e-9)


def test_coincident_velocities(kernels):
    v = np.array([0.1, 0.2, 0.3])
    assert L_e_B(TestFunction.energy(), v, v, kernels, RP) == 0.0
    raw = OracleKernels.from_config(KCFG, raw_phi=True)
    with pytest.raises(ValueError):
        L_e_B(TestFunction.energy(), v, v, raw, RP)


def test_compensated_matches_plain_for_bounded_kernel(kernels):
    v, vs = np.array([0.7, 0.2, -0.1]), np.array([-0.3, 0.5, 0.4])
    for tf in (TestFunction.weighted(1.0), TestFunction.exponential([1.0, 0.5, -0.3])):
        a = L_e_B(tf, v, vs, kernels, RP)
        b = compensated_L(tf, v, vs, kernels, RP)
        assert b == pytest.approx(a, rel=1e-8, abs=1e-12)


def test_compensated_stable_for_raw_angular_kernel():
    k = OracleKernels.from_config(KCFG, capped=False)
    v, vs = np.array([0.7, 0.2, -0.1]), np.array([-0.3, 0.5, 0.4])
    tf = TestFunction.weighted(1.5)
    a = compensated_L(tf, v, vs, k, RP, OracleQuad(n_azimuth=16))
    b = compensated_L(tf, v, vs, k, RP, OracleQuad(n_azimuth=64))
    assert math.isfinite(a) and b == pytest.approx(a, rel=1e-6)
    # the capped values approach the raw one as the cap grows
    caps = [compensated_L(tf, v, vs, OracleKernels.from_config(KCFG.with_n(n), normalized=False), RP)
            for n in (8, 64, 512)]
    errs = [abs(c - b) for c in caps]
    assert errs[0] > errs[1] > errs[2]


def test_weak_rhs_conservation(kernels):
    F = DiscreteMeasure([0.25, 0.35, 0.4], [[0.45, 0.1, 0.15], [-0.2, 0.4, -0.1], [0, 0, 0]])
    assert abs(weak_rhs(F, TestFunction.constant(), kernels, RP)) < 1e-14
    assert abs(weak_rhs(F, TestFunction.coordinate(0), kernels, RP)) < 1e-13
    assert weak_rhs(F, TestFunction.energy(), kernels, RP) < 0
    el = weak_rhs(F, TestFunction.energy(), kernels, RestitutionParams(1.0))
    assert abs(el) < 1e-13


def test_gain_identity_single_frequency(kernels):
    F = DiscreteMeasure([0.5, 0.5], [[0.6, 0.0, 0.0], [-0.6, 0.0, 0.0]])
    chk = gain_term_fourier_check(F, np.array([0.3, 0.8, -0.2]), kernels, KCFG, RP)
    assert chk.gap < 1e-2
    with pytest.raises(ValueError):
        gain_term_fourier_check(F, np.zeros(3), OracleKernels.from_config(KCFG, raw_phi=True), KCFG, RP)


def test_equicontinuity_ratio(kernels):
    assert equicontinuity_ratio(DiscreteMeasure.dirac(), TestFunction.energy(), kernels, RP, -1.0) == 0.0
    F = DiscreteMeasure([0.5, 0.5], [[0.5, 0, 0], [-0.5, 0, 0]])
    r = equicontinuity_ratio(F, TestFunction.energy(), kernels, RP, -1.0)
    assert math.isfinite(r) and r > 0
