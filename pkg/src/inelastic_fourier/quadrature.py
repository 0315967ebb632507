"""Quadrature rules shared by the solver and the velocity-space oracle."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import lebedev_rule


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(n: int, a: float, b: float):
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def composite_gauss(edges, n: int):
    edges = np.asarray(edges, dtype=float)
    x, w = _leggauss(int(n))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (half[:, None] * x + mid[:, None]).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def uniform_azimuth(n: int, offset: float = 0.0):
    phi = offset + 2.0 * np.pi * np.arange(n) / n
    return phi, np.full(n, 2.0 * np.pi / n)


def sphere_product_rule(n_mu: int, n_phi: int):
    """Gauss in cos(theta) on [-1, 1] times uniform azimuth; symmetric under x -> -x
    when ``n_phi`` is even."""
    mu, wmu = gauss_legendre(n_mu, -1.0, 1.0)
    phi, wphi = uniform_azimuth(n_phi)
    M, P = np.meshgrid(mu, phi, indexing="ij")
    st = np.sqrt(1.0 - M ** 2)
    dirs = np.stack([st * np.cos(P), st * np.sin(P), M], axis=-1).reshape(-1, 3)
    w = np.outer(wmu, wphi).ravel()
    return dirs, w


def lebedev(order: int):
    x, w = lebedev_rule(int(order))
    return np.ascontiguousarray(x.T), w


def ball_rule(radius: float, n_r: int, order: int, inner: float = 0.0):
    """Radial Gauss times Lebedev directions covering the ball |x| <= radius.

    Returns points (N, 3) and volume weights; the rule is invariant under
    x -> -x because Lebedev point sets are.
    """
    r, wr = gauss_legendre(n_r, inner, radius)
    d, wd = lebedev(order)
    pts = (r[:, None, None] * d[None, :, :]).reshape(-1, 3)
    w = ((wr * r ** 2)[:, None] * wd[None, :]).ravel()
    return pts, w
