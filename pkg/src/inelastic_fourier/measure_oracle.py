"""Velocity-space ground truth for the collision functional on discrete measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .charfn import DiscreteMeasure
from .kernels import AngularKernel, KernelConfig, hat_table, make_angular, make_kinetic_cutoff
from .kinematics import (DegenerateBasis, RestitutionParams, frame_directions,
                         orthonormal_completion, post_collision, sphere_basis, xi_split)
from .quadrature import composite_gauss, gauss_legendre, uniform_azimuth


# ---------------------------------------------------------------- test functions

@dataclass(frozen=True)
class TestFunction:
    psi: Callable
    grad: Callable
    tag: str = "custom"
    __test__ = False  # not a pytest class

    def __call__(self, v):
        return self.psi(np.asarray(v, dtype=float))

    def gradient(self, v):
        return self.grad(np.asarray(v, dtype=float))

    @classmethod
    def constant(cls, c: float = 1.0):
        return cls(lambda v: np.full(v.shape[:-1], float(c)), lambda v: np.zeros_like(v),
                   "constant")

    @classmethod
    def coordinate(cls, j: int):
        e = np.eye(3)[j]
        return cls(lambda v: v[..., j], lambda v: np.broadcast_to(e, v.shape).copy(),
                   f"coordinate_{j}")

    @classmethod
    def energy(cls):
        return cls(lambda v: np.sum(v ** 2, axis=-1), lambda v: 2.0 * v, "energy")

    @classmethod
    def weighted(cls, l: float):
        """<v>^l with <v> = sqrt(1 + |v|^2)."""
        def psi(v):
            return (1.0 + np.sum(v ** 2, axis=-1)) ** (0.5 * l)

        def grad(v):
            return l * ((1.0 + np.sum(v ** 2, axis=-1)) ** (0.5 * l - 1.0))[..., None] * v
        return cls(psi, grad, f"weighted_{l:g}")

    @classmethod
    def exponential(cls, xi):
        """Real part of e^{-i xi . v}; the imaginary part is ``exponential_imag``."""
        xi = np.asarray(xi, dtype=float)
        return cls(lambda v: np.cos(v @ xi), lambda v: -np.sin(v @ xi)[..., None] * xi,
                   "exponential")

    @classmethod
    def exponential_imag(cls, xi):
        xi = np.asarray(xi, dtype=float)
        return cls(lambda v: -np.sin(v @ xi), lambda v: -np.cos(v @ xi)[..., None] * xi,
                   "exponential")


def gradient_consistency(tf: TestFunction, pts, h: float = 1e-5) -> float:
    """Max relative mismatch between tf.grad and central differences of tf."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    fd = np.empty_like(pts)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd[:, j] = (tf(pts + e) - tf(pts - e)) / (2 * h)
    g = tf.gradient(pts)
    scale = np.maximum(np.linalg.norm(g, axis=1), 1.0)
    return float(np.max(np.linalg.norm(g - fd, axis=1) / scale))


# ---------------------------------------------------------------- kernels, quadrature

@dataclass(frozen=True)
class OracleKernels:
    """Angular kernel b and radial kinetic factor Phi used by the oracle."""

    b: AngularKernel
    phi: Callable
    cutoff: bool = True

    @classmethod
    def from_config(cls, kcfg: KernelConfig, normalized: bool = True, raw_phi: bool = False,
                    capped: bool = True):
        from .spectral_solver import angular_kernel
        b = angular_kernel(kcfg, normalized) if capped else make_angular(kcfg)
        if raw_phi:
            g = kcfg.gamma
            phi = lambda rho: np.abs(np.asarray(rho, dtype=float)) ** g
            return cls(b, phi, cutoff=False)
        return cls(b, make_kinetic_cutoff(kcfg), cutoff=True)


@dataclass(frozen=True)
class OracleQuad:
    polar_order: int = 24
    n_azimuth: int = 32
    zeta_radius: float = 120.0
    zeta_nodes: int = 2400

    def refined(self, factor: int = 2) -> "OracleQuad":
        # the transform of the kinetic cutoff decays slowly, so the zeta ball grows too
        return replace(self, polar_order=self.polar_order * factor,
                       n_azimuth=self.n_azimuth * factor,
                       zeta_radius=self.zeta_radius * factor,
                       zeta_nodes=self.zeta_nodes * factor)


def _frame(v, vs):
    try:
        return sphere_basis((v, vs))
    except DegenerateBasis:
        return orthonormal_completion(v - vs)


def _sphere_nodes(b: AngularKernel, axis, frame, quad: OracleQuad):
    """Directions and weights for int b(sigma . axis) g(sigma) d sigma."""
    theta, W = b.polar_rule(quad.polar_order)
    phi, _ = uniform_azimuth(quad.n_azimuth)
    sig = frame_directions(axis, np.cos(theta)[:, None], phi[None, :], frame)
    w = np.repeat(W[:, None] / quad.n_azimuth, quad.n_azimuth, axis=1)
    return sig, w


def L_e_B(psi: TestFunction, v, v_star, kernels: OracleKernels, rp: RestitutionParams,
          quad: OracleQuad = OracleQuad()) -> float:
    """int b(sigma . q) Phi(|v - v*|) [psi(v'*) + psi(v') - psi(v*) - psi(v)] d sigma."""
    v = np.asarray(v, dtype=float)
    vs = np.asarray(v_star, dtype=float)
    u = v - vs
    nu = float(np.linalg.norm(u))
    if nu == 0.0:
        if not kernels.cutoff:
            raise ValueError("raw kinetic factor is singular at v = v*")
        return 0.0
    Phi = float(kernels.phi(nu))
    if Phi == 0.0:
        return 0.0
    frame = _frame(v, vs)
    sig, w = _sphere_nodes(kernels.b, frame[0], frame, quad)
    post = post_collision((v, vs), sig, rp)
    d = psi(post.v_star) + psi(post.v) - psi(vs) - psi(v)
    return float(Phi * np.sum(w * d))


def _compensated_integrand(psi, v, vs, rp, frame, mu, phi):
    """Azimuth-resolved Delta psi with the first-order tangential term removed."""
    q = frame[0]
    nu = float(np.linalg.norm(v - vs))
    sig = frame_directions(q, mu, phi, frame)
    post = post_collision((v, vs), sig, rp)
    d = psi(post.v_star) + psi(post.v) - psi(vs) - psi(v)
    dg = psi.gradient(v) - psi.gradient(vs)
    tang = sig - np.asarray(mu)[..., None] * q
    return d - 0.5 * rp.a_plus * nu * (tang @ dg)


def compensated_L(psi: TestFunction, v, v_star, kernels: OracleKernels, rp: RestitutionParams,
                  quad: OracleQuad = OracleQuad(), adaptive: Optional[bool] = None,
                  epsrel: float = 1e-8) -> float:
    """L_e_B with the tangential first-order part of the increment subtracted.

    The subtracted term has zero azimuthal mean, so the value is unchanged; the
    remaining integrand is O(theta^2) and stays integrable against a raw
    angular kernel.  Bounded kernels use the same polar rule as ``L_e_B``;
    raw kernels use adaptive quadrature in theta.
    """
    v = np.asarray(v, dtype=float)
    vs = np.asarray(v_star, dtype=float)
    nu = float(np.linalg.norm(v - vs))
    if nu == 0.0:
        if not kernels.cutoff:
            raise ValueError("raw kinetic factor is singular at v = v*")
        return 0.0
    Phi = float(kernels.phi(nu))
    if Phi == 0.0:
        return 0.0
    frame = _frame(v, vs)
    b = kernels.b
    phi, _ = uniform_azimuth(quad.n_azimuth)
    adaptive = (not math.isfinite(b.n)) if adaptive is None else adaptive
    if not adaptive:
        theta, W = b.polar_rule(quad.polar_order)
        vals = _compensated_integrand(psi, v, vs, rp, frame, np.cos(theta)[:, None],
                                      phi[None, :]).mean(axis=1)
        return float(Phi * np.sum(W * vals))

    def f(t):
        avg = _compensated_integrand(psi, v, vs, rp, frame, np.full(phi.size, math.cos(t)),
                                     phi).mean()
        return 2.0 * math.pi * float(b(t)) * math.sin(t) * avg

    # split at the cap angle and integrate the singular piece in log theta
    tc = b.theta_cut
    lo = 1e-12
    total = 0.0
    if tc > lo:
        total += integrate.quad(f, lo, tc, epsabs=0, epsrel=epsrel, limit=200)[0]
    a = max(tc, lo)
    g = lambda x: f(math.exp(x)) * math.exp(x)
    total += integrate.quad(g, math.log(a), math.log(0.5 * math.pi), epsabs=0,
                            epsrel=epsrel, limit=400)[0]
    return float(Phi * total)


def weak_rhs(F: DiscreteMeasure, psi: TestFunction, kernels: OracleKernels,
             rp: RestitutionParams, quad: OracleQuad = OracleQuad()) -> float:
    """(1/2) sum_{i != j} w_i w_j L_e_B[psi](v_i, v_j)."""
    w, V = F.weights, F.velocities
    total = 0.0
    for i in range(w.size):
        for j in range(w.size):
            if i != j:
                total += w[i] * w[j] * L_e_B(psi, V[i], V[j], kernels, rp, quad)
    return 0.5 * total


# ---------------------------------------------------------------- Fourier identity

@dataclass
class GainCheck:
    xi: np.ndarray
    lhs: complex
    rhs: complex
    gap: float


def _inverse_radial(kernels: OracleKernels, kcfg: KernelConfig, dist, quad: OracleQuad):
    """int Phi_hat(|zeta|) e^{i zeta . u} d zeta for |u| in ``dist`` (radial rule)."""
    tab = hat_table(kcfg.gamma, kcfg.r, z_max=max(40.0, quad.zeta_radius))
    panels = np.linspace(0.0, quad.zeta_radius, max(2, quad.zeta_nodes // 20) + 1)
    rho, wr = composite_gauss(panels, 20)
    hv = tab.evaluate(rho) * rho ** 2 * wr
    d = np.asarray(dist, dtype=float)
    return 4.0 * math.pi * (np.sinc(np.multiply.outer(d, rho) / math.pi) @ hv)


def gain_term_fourier_check(F: DiscreteMeasure, xi, kernels: OracleKernels, kcfg: KernelConfig,
                            rp: RestitutionParams, quad: OracleQuad = OracleQuad()) -> GainCheck:
    """Velocity-space gain against its Fourier form with the exact characteristic function.

    lhs = sum_ij w_i w_j int b(sigma . q_ij) Phi_c(|u_ij|) e^{-i v' . xi} d sigma
    rhs = int b(sigma . xi_hat) int Phi_hat(zeta) phi(xi+ - zeta) phi(xi- + zeta) d zeta d sigma
    """
    if not kernels.cutoff:
        raise ValueError("the identity check needs the kinetic cutoff")
    xi = np.asarray(xi, dtype=float)
    w, V = F.weights, F.velocities
    lhs = 0.0 + 0.0j
    for i in range(w.size):
        for j in range(w.size):
            if i == j:
                continue
            u = V[i] - V[j]
            Phi = float(kernels.phi(np.linalg.norm(u)))
            if Phi == 0.0:
                continue
            frame = _frame(V[i], V[j])
            sig, sw = _sphere_nodes(kernels.b, frame[0], frame, quad)
            vp = post_collision((V[i], V[j]), sig, rp).v
            lhs += w[i] * w[j] * Phi * np.sum(sw * np.exp(-1j * (vp @ xi)))
    # ordered pairs i, j (including i = j) with S_ij = inverse transform at u_ij
    U = V[:, None, :] - V[None, :, :]
    S = _inverse_radial(kernels, kcfg, np.linalg.norm(U, axis=-1), quad)
    axis = xi if np.any(xi != 0.0) else np.array([0.0, 0.0, 1.0])
    frame = orthonormal_completion(axis)
    sig, sw = _sphere_nodes(kernels.b, frame[0], frame, quad)
    xp, xm = xi_split(xi, sig, rp)
    # phases e^{-i xi+ . v_i} e^{-i xi- . v_j}
    Ep = np.exp(-1j * np.einsum("abk,ik->abi", xp, V))
    Em = np.exp(-1j * np.einsum("abk,jk->abj", xm, V))
    pair = np.einsum("ab,abi,abj->ij", sw, Ep, Em)
    rhs = complex(np.sum(np.outer(w, w) * S * pair))
    gap = abs(lhs - rhs) / max(abs(lhs), 1e-300) if lhs != 0 or rhs != 0 else 0.0
    return GainCheck(xi, complex(lhs), complex(rhs), float(gap))


# ---------------------------------------------------------------- weak-form cross-check

@dataclass
class CrossCheck:
    tag: str
    weak: float
    fourier: float
    gap: float
    steps: tuple
    quotients: tuple


_RICH = np.array([64.0, -20.0, 1.0]) / 45.0


def _stencil(h):
    pts = [np.zeros(3)]
    for j in range(3):
        for s in (h, 2 * h, 4 * h):
            e = np.zeros(3)
            e[j] = s
            pts += [e, -e]
    return np.array(pts)


def _stencil_moments(vals, h):
    """(momentum, energy) from values on ``_stencil(h)`` (origin value first)."""
    vals = np.asarray(vals).reshape(-1)
    p0 = vals[0]
    mom = np.zeros(3)
    en = 0.0
    k = 1
    for j in range(3):
        d1 = []
        d2 = []
        for s in (h, 2 * h, 4 * h):
            a, b = vals[k], vals[k + 1]
            k += 2
            d1.append((a - b) / (2 * s))
            d2.append((a + b - 2 * p0) / s ** 2)
        # phi = int e^{-i v . xi} dF: grad phi(0) = -i p, laplacian = -energy
        mom[j] = float(np.real(1j * (_RICH @ np.array(d1))))
        en -= float(np.real(_RICH @ np.array(d2)))
    return mom, en


def fourier_rate(F: DiscreteMeasure, op, h: float = 0.1, eta_radius: float = 30.0,
                 eta_radial: int = 120, eta_order: int = 41):
    """N[phi_F] on the moment stencil with exact phi_F lookups.

    ``op`` is a cube-mode CollisionOperator supplying the kernels; the eta
    integral uses a dedicated ball rule of radius ``eta_radius``.
    """
    from .spectral_solver import EtaRule
    pts = _stencil(h)
    if eta_radius + 2.0 * np.abs(pts).max() > op.table.z_max:
        raise ValueError("eta ball exceeds the tabulated kernel transform")
    rule = EtaRule.build(eta_radial, eta_order)
    Kw, Lw, scale = op.cube_weights(pts, eta_radius=eta_radius, rule=rule)
    Q = Kw - Lw
    out = np.empty(pts.shape[0], dtype=complex)
    for p in range(pts.shape[0]):
        e = scale[p] * rule.etas
        a = F.char(0.5 * pts[p] - e)
        b = F.char(0.5 * pts[p] + e)
        out[p] = np.sum(Q[p] * a * b)
    return pts, out


def crosscheck_time_derivative(F0: DiscreteMeasure, psis, op, dts=(0.02, 0.01, 0.005),
                               kernels: Optional[OracleKernels] = None,
                               quad: OracleQuad = OracleQuad(), h: float = 0.1,
                               eta_radius: float = 30.0, eta_radial: int = 120,
                               eta_order: int = 41) -> list:
    """Weak-form rate of psi against difference quotients of the solver step.

    The solver's first Picard iterate from phi_0 over [0, dt] is
    phi_0 + (1 - e^{-A dt}) / A * N[phi_0]; it agrees with the converged step
    to O(dt^2), which the Richardson extrapolation in dt removes.  Quotients
    [m(phi_dt) - m(phi_0)] / dt are extrapolated to dt -> 0 assuming halving
    steps.  Supported tags: constant, coordinate_j, energy.
    """
    if kernels is None:
        kernels = OracleKernels(op.angular, make_kinetic_cutoff(op.kcfg))
    pts, N = fourier_rate(F0, op, h, eta_radius, eta_radial, eta_order)
    phi0 = F0.char(pts)
    A = op.A_tot
    m0 = _stencil_moments(phi0, h)
    reports = []
    for psi in psis:
        q = []
        for dt in dts:
            phi = phi0 + (1.0 - math.exp(-A * dt)) / A * N
            m1 = _stencil_moments(phi, h)
            q.append(_select(psi.tag, m1, phi) - _select(psi.tag, m0, phi0))
            q[-1] /= dt
        q = np.array(q)
        est = q[-1]
        if q.size >= 2:
            est = 2.0 * q[-1] - q[-2]
        if q.size >= 3:
            r1 = 2.0 * q[-2] - q[-3]
            est = (4.0 * est - r1) / 3.0
        weak = weak_rhs(F0, psi, kernels, op.rp, quad)
        gap = abs(est - weak) / abs(weak) if abs(weak) > 1e-12 else abs(est - weak)
        reports.append(CrossCheck(psi.tag, float(weak), float(est), float(gap), tuple(dts),
                                  tuple(float(x) for x in q)))
    return reports


def _select(tag, moments, phi):
    mom, en = moments
    if tag == "constant":
        return float(np.real(phi[0]))
    if tag == "energy":
        return en
    if tag.startswith("coordinate_"):
        return float(mom[int(tag.split("_")[1])])
    raise ValueError(f"no Fourier-side moment for test function '{tag}'")


# ---------------------------------------------------------------- equicontinuity

def equicontinuity_ratio(F: DiscreteMeasure, psi: TestFunction, kernels: OracleKernels,
                         rp: RestitutionParams, gamma: float,
                         quad: OracleQuad = OracleQuad()) -> float:
    """|weak_rhs| / ((1/2) sum w_i w_j |v_i - v_j|^(gamma+2))."""
    w, V = F.weights, F.velocities
    D = np.linalg.norm(V[:, None] - V[None, :], axis=-1)
    base = 0.5 * float(np.sum(np.outer(w, w) * D ** (gamma + 2.0)))
    if base == 0.0:
        return 0.0
    return abs(weak_rhs(F, psi, kernels, rp, quad)) / base
