"""Inelastic binary-collision geometry in velocity space and its Fourier-side split.

All maps are vectorised over leading axes: any argument may carry a batch
shape ``(..., 3)`` and broadcasting follows numpy rules.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class RestitutionParams:
    """Restitution coefficient ``e`` with the derived weights ``a_plus``/``a_minus``."""

    e: float

    def __post_init__(self):
        if not (0.0 < self.e <= 1.0):
            raise ValueError(f"restitution e must lie in (0, 1], got {self.e}")

    @property
    def a_plus(self) -> float:
        return 0.5 * (1.0 + self.e)

    @property
    def a_minus(self) -> float:
        return 0.5 * (1.0 - self.e)


class VelocityPair(NamedTuple):
    v: np.ndarray
    v_star: np.ndarray


def _norm(x):
    return np.linalg.norm(x, axis=-1, keepdims=True)


def as_direction(sigma) -> np.ndarray:
    """Validate that ``sigma`` is a unit vector (tolerance 1e-12)."""
    s = np.asarray(sigma, dtype=float)
    if np.any(np.abs(_norm(s) - 1.0) > 1e-12):
        raise ValueError("direction must have unit norm")
    return s


def post_collision(pair, sigma, rp: RestitutionParams) -> VelocityPair:
    v, vs = (np.asarray(x, dtype=float) for x in pair)
    sigma = np.asarray(sigma, dtype=float)
    u = v - vs
    mid = 0.5 * (v + vs)
    d = 0.5 * rp.a_minus * u + 0.5 * rp.a_plus * _norm(u) * sigma
    return VelocityPair(mid + d, mid - d)


def pre_collision(pair, sigma, rp: RestitutionParams) -> VelocityPair:
    """Inverse-direction map ('v, '_v*) of the sigma-representation.

    This is not the inverse of :func:`post_collision` for the same sigma when
    e < 1; it is the pair that lands on (v, v*) for a rotated direction.
    """
    if rp.e <= 0.0:
        raise ValueError("pre-collision map requires e > 0")
    v, vs = (np.asarray(x, dtype=float) for x in pair)
    sigma = np.asarray(sigma, dtype=float)
    e = rp.e
    u = v - vs
    mid = 0.5 * (v + vs)
    d = -(1.0 - e) / (4.0 * e) * u + (1.0 + e) / (4.0 * e) * _norm(u) * sigma
    return VelocityPair(mid + d, mid - d)


def omega_post_collision(pair, omega, rp: RestitutionParams) -> VelocityPair:
    v, vs = (np.asarray(x, dtype=float) for x in pair)
    omega = np.asarray(omega, dtype=float)
    proj = np.sum((v - vs) * omega, axis=-1, keepdims=True)
    kick = rp.a_plus * proj * omega
    return VelocityPair(v - kick, vs + kick)


def omega_energy_delta(pair, omega, rp: RestitutionParams) -> np.ndarray:
    """Closed-form kinetic energy change of the omega-form map (squared projection)."""
    v, vs = (np.asarray(x, dtype=float) for x in pair)
    proj = np.sum((v - vs) * np.asarray(omega, dtype=float), axis=-1)
    return -0.5 * (1.0 - rp.e ** 2) * proj ** 2


def energy_delta(before: VelocityPair, after: VelocityPair) -> np.ndarray:
    sq = lambda x: np.sum(np.asarray(x) ** 2, axis=-1)
    return sq(after.v) + sq(after.v_star) - sq(before.v) - sq(before.v_star)


def xi_plus(xi, sigma, rp: RestitutionParams) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return (0.5 + 0.5 * rp.a_minus) * xi + 0.5 * rp.a_plus * _norm(xi) * sigma


def xi_minus(xi, sigma, rp: RestitutionParams) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return (0.5 - 0.5 * rp.a_minus) * xi - 0.5 * rp.a_plus * _norm(xi) * sigma


def xi_split(xi, sigma, rp: RestitutionParams):
    """Both halves at once; at xi = 0 both are exactly zero."""
    return xi_plus(xi, sigma, rp), xi_minus(xi, sigma, rp)


def xi_norm_identity(xi, sigma, rp: RestitutionParams) -> np.ndarray:
    """Right-hand side of |xi+|^2 + |xi-|^2 in closed form."""
    xi = np.asarray(xi, dtype=float)
    n = np.linalg.norm(xi, axis=-1)
    ap, am = rp.a_plus, rp.a_minus
    return 0.5 * (1 + ap ** 2 + am ** 2) * n ** 2 + ap * am * n * np.sum(xi * sigma, axis=-1)


def xi_bound_coefficients(rp: RestitutionParams, alpha: float):
    """(lower, upper, minus) coefficients of the power bounds on |xi+|^a and |xi-|^a."""
    ap, am = rp.a_plus, rp.a_minus
    lower = (ap * (1 + am) / 2) ** (alpha / 2)
    upper = (((1 + am) / 2) ** 2 + (ap / 2) ** 2) ** (alpha / 2)
    minus = (ap ** 2 / 2) ** (alpha / 2)
    return lower, upper, minus


def geometric_constant(rp: RestitutionParams) -> float:
    """Conservative factor bounding |xi+-| by c |xi|."""
    return 2.0 * np.sqrt(((1 + rp.a_minus) / 2) ** 2 + (rp.a_plus / 2) ** 2)


class DegenerateBasis(ValueError):
    pass


def orthonormal_completion(q_hat):
    """Any right-handed (q, j, h) frame with h = j x q."""
    q = np.asarray(q_hat, dtype=float)
    q = q / np.linalg.norm(q)
    trial = np.array([1.0, 0.0, 0.0]) if abs(q[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    j = np.cross(q, trial)
    j /= np.linalg.norm(j)
    h = np.cross(j, q)
    return q, j, h


def sphere_basis(pair):
    """Frame (q_hat, j_hat, h_hat) with q along v - v*, j along v x v*, h = j x q.

    Raises DegenerateBasis when v = v* or v is parallel to v*; callers may
    fall back to :func:`orthonormal_completion`.
    """
    v, vs = (np.asarray(x, dtype=float) for x in pair)
    u = v - vs
    nu = np.linalg.norm(u)
    if nu < _DEGENERATE_TOL:
        raise DegenerateBasis("coincident velocities")
    c = np.cross(v, vs)
    nc = np.linalg.norm(c)
    if nc < _DEGENERATE_TOL * max(1.0, np.linalg.norm(v) * np.linalg.norm(vs)):
        raise DegenerateBasis("collinear velocities")
    q = u / nu
    j = c / nc
    h = np.cross(j, q)
    return q, j, h


def frame_directions(axis, mu, phi, frame=None) -> np.ndarray:
    """Unit vectors at polar cosine ``mu`` and azimuth ``phi`` about ``axis``.

    ``mu`` and ``phi`` broadcast against each other; the result has shape
    ``broadcast(mu, phi).shape + (3,)``.
    """
    if frame is None:
        q, j, h = orthonormal_completion(axis)
    else:
        q, j, h = frame
    mu, phi = np.broadcast_arrays(np.asarray(mu, float), np.asarray(phi, float))
    st = np.sqrt(np.clip(1.0 - mu ** 2, 0.0, None))
    return (mu[..., None] * q + (st * np.cos(phi))[..., None] * h
            + (st * np.sin(phi))[..., None] * j)
