"""Sampled invariant checks shared by the CLI and the acceptance tests."""
from __future__ import annotations

import numpy as np

from .charfn import check_positive_definite, knorm, pd_inequality_residuals
from .kinematics import (RestitutionParams, VelocityPair, energy_delta, omega_energy_delta,
                         omega_post_collision, post_collision, xi_bound_coefficients, xi_split,
                         xi_norm_identity)
from .moments import envelope_constant, weight_W_delta, weight_W_kappa_d2
from .report import verdict


def _unit(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def kinematics_checks(samples: int = 10_000, seed: int = 0, tol: float = 1e-12) -> list:
    """Momentum, energy and Fourier-split identities on random collisions."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(samples, 3)) * rng.uniform(0.1, 5.0, (samples, 1))
    vs = rng.normal(size=(samples, 3)) * rng.uniform(0.1, 5.0, (samples, 1))
    sig = _unit(rng, samples)
    om = _unit(rng, samples)
    e = rng.uniform(0.05, 1.0, samples)
    out = []
    mom_err, om_err, el_err, sum_err, norm_err = 0.0, 0.0, 0.0, 0.0, 0.0
    viol = 0
    xi = rng.normal(size=(samples, 3)) * rng.uniform(0.1, 10.0, (samples, 1))
    for i in range(samples):
        rp = RestitutionParams(float(e[i]))
        pair = VelocityPair(v[i], vs[i])
        post = post_collision(pair, sig[i], rp)
        scale = max(np.linalg.norm(v[i] + vs[i]), np.linalg.norm(v[i]) + np.linalg.norm(vs[i]))
        mom_err = max(mom_err, np.linalg.norm(post.v + post.v_star - v[i] - vs[i]) / scale)
        opost = omega_post_collision(pair, om[i], rp)
        dE = energy_delta(pair, opost)
        escale = max(1.0, float(v[i] @ v[i] + vs[i] @ vs[i]))
        om_err = max(om_err, abs(dE - omega_energy_delta(pair, om[i], rp)) / escale)
        el = post_collision(pair, sig[i], RestitutionParams(1.0))
        el_err = max(el_err, abs(energy_delta(pair, el)) / escale)
        xp, xm = xi_split(xi[i], sig[i], rp)
        n2 = float(xi[i] @ xi[i])
        sum_err = max(sum_err, np.linalg.norm(xp + xm - xi[i]) / np.sqrt(n2))
        norm_err = max(norm_err, abs(xp @ xp + xm @ xm - xi_norm_identity(xi[i], sig[i], rp)) / n2)
        # bounds: sigma on the hemisphere around xi (support of the symmetrised kernel)
        s = sig[i] if sig[i] @ xi[i] >= 0 else -sig[i]
        xp, xm = xi_split(xi[i], s, rp)
        x = float(s @ xi[i]) / np.sqrt(n2)
        for alpha in (0.5, 1.0, 1.5, 2.0):
            lo, hi, mi = xi_bound_coefficients(rp, alpha)
            base = (1.0 + x) ** (alpha / 2) * n2 ** (alpha / 2)
            p = np.linalg.norm(xp) ** alpha
            m = np.linalg.norm(xm) ** alpha
            slack = 1e-12 * max(base, 1e-300)
            if p < lo * base - slack or p > hi * base + slack:
                viol += 1
            if abs(m - mi * (1.0 - x) ** (alpha / 2) * n2 ** (alpha / 2)) > 1e-12 * max(
                    n2 ** (alpha / 2), 1e-300):
                viol += 1
    out.append(verdict("momentum_conservation", mom_err, tol, mom_err < tol))
    out.append(verdict("omega_energy_delta", om_err, tol, om_err <= tol))
    out.append(verdict("elastic_energy_delta", el_err, tol, el_err <= tol))
    out.append(verdict("xi_sum_identity", sum_err, tol, sum_err < tol))
    out.append(verdict("xi_norm_identity", norm_err, tol, norm_err < tol))
    out.append(verdict("xi_bound_violations", viol, 0, viol == 0))
    return out


def weight_delta_check(samples: int = 100_000, seed: int = 0) -> dict:
    """W_delta(v') <= W_delta(v) + W_delta(v*) along random collisions."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(samples, 3)) * 10.0 ** rng.uniform(-2, 3, (samples, 1))
    vs = rng.normal(size=(samples, 3)) * 10.0 ** rng.uniform(-2, 3, (samples, 1))
    sig = _unit(rng, samples)
    e = rng.uniform(0.05, 1.0, samples)
    delta = 10.0 ** rng.uniform(-3, 0, samples)
    a0 = rng.uniform(0.05, 2.0, samples)
    # post-collision velocity with per-sample restitution
    ap = 0.5 * (1 + e)[:, None]
    am = 0.5 * (1 - e)[:, None]
    u = v - vs
    vp = 0.5 * (v + vs) + 0.5 * am * u + 0.5 * ap * np.linalg.norm(u, axis=1, keepdims=True) * sig
    viol = 0
    worst = -np.inf
    for i in range(samples):
        lhs = weight_W_delta(vp[i], delta[i], a0[i])
        rhs = weight_W_delta(v[i], delta[i], a0[i]) + weight_W_delta(vs[i], delta[i], a0[i])
        worst = max(worst, float(lhs - rhs) / rhs)
        if lhs > rhs * (1 + 1e-12):
            viol += 1
    return verdict("W_delta_subadditivity", viol, 0, viol == 0, worst_relative_excess=worst)


def weight_kappa_checks(kappa: float = 1.0, n: float = 2.0, deltas=(1e-3, 1e-2, 1e-1),
                        points: int = 4000, fit_points: int = 60) -> list:
    """Convexity and the (1+x)^(n kappa/2 - 1) envelope of W_kappa'' on [0, 1e6].

    The envelope constant is fitted on a coarse log grid and then checked on
    a dense one, uniformly over ``deltas``.
    """
    grid = lambda k: np.concatenate([[0.0], np.geomspace(1e-6, 1e6, k)])
    C = envelope_constant(grid(fit_points), deltas, kappa, n)
    x = grid(points)
    env = (1.0 + x) ** (0.5 * n * kappa - 1.0)
    conv_viol = 0
    env_viol = 0
    for d in deltas:
        d2 = weight_W_kappa_d2(x, d, kappa, n)
        conv_viol += int(np.sum(d2 < -1e-8 * (np.abs(d2) + 1.0)))
        env_viol += int(np.sum(d2 > C * env * (1 + 1e-9)))
    return [verdict("W_kappa_convexity", conv_viol, 0, conv_viol == 0),
            verdict("W_kappa_envelope", env_viol, 0, env_viol == 0, fitted_constant=C)]


def pd_checks(grid, seeds: int = 20, samples: int = 16, radius: float = 1.0,
              factor: float = 1e-8, method: str = "linear") -> dict:
    ev = lambda x: grid(x, method=method)
    lams = [check_positive_definite(ev, samples, s, radius=radius, tol=factor).min_eigenvalue
            for s in range(seeds)]
    thr = -factor * samples
    worst = float(min(lams))
    return verdict("positive_definite", worst, thr, worst >= thr, seeds=seeds, samples=samples,
                   radius=radius)


def pd_inequality_check(grid, alpha: float = 1.5, triples: int = 1000, seed: int = 0,
                        radius: float = 1.0, tol: float = 1e-10,
                        method: str = "linear") -> dict:
    rng = np.random.default_rng(seed)
    xi = _unit(rng, triples) * radius * rng.random((triples, 1)) ** (1 / 3)
    eta = _unit(rng, triples) * radius * rng.random((triples, 1)) ** (1 / 3)
    ev = lambda x: grid(x, method=method)
    nv = knorm(grid, alpha).value
    r1, r2, r3 = pd_inequality_residuals(ev, xi, eta, alpha, nv)
    worst = float(min(r1.min(), r2.min(), r3.min()))
    viol = int(np.sum(r1 < -tol) + np.sum(r2 < -tol) + np.sum(r3 < -tol))
    return verdict("pd_inequalities", viol, tol, viol == 0, worst_residual=worst)
