"""Angular and kinetic collision kernels, their cutoffs, and the radial Fourier
transform of the smooth kinetic cutoff."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .quadrature import gauss_legendre

FOURIER_NORM = 1.0 / (2.0 * np.pi) ** 3


@dataclass(frozen=True)
class KernelConfig:
    gamma: float = -1.0
    s: float = 0.25
    K: float = 1.0
    n: float = 8.0
    r: float = 2.0
    N: int = 2
    alpha0: float = 2.0

    def __post_init__(self):
        if not (-2.0 <= self.gamma < 0.0):
            raise ValueError(f"gamma out of [-2,0): {self.gamma}")
        if not (0.0 < self.s < 1.0):
            raise ValueError(f"s out of (0,1): {self.s}")
        if self.K <= 0:
            raise ValueError(f"K must be positive: {self.K}")
        if self.n < 2:
            raise ValueError(f"cutoff level n must be >= 2: {self.n}")
        if self.r <= 1.0:
            raise ValueError(f"support parameter r must exceed 1: {self.r}")
        if self.N < 1:
            raise ValueError(f"decay order N must be >= 1: {self.N}")
        if not (2 * self.s < self.alpha0 <= 2.0):
            raise ValueError(f"alpha0 must lie in (2s, 2]: {self.alpha0}")

    def with_n(self, n) -> "KernelConfig":
        return replace(self, n=n)


# ---------------------------------------------------------------- angular part

@dataclass(frozen=True)
class AngularKernel:
    """b(cos theta) = K theta^(-1-2s) / sin theta on (0, pi/2], optionally
    capped at ``n`` and multiplied by ``scale``."""

    s: float
    K: float
    n: float = math.inf
    scale: float = 1.0

    @property
    def cutoff(self) -> float:
        return self.n

    def raw(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.K * theta ** (-1.0 - 2.0 * self.s) / np.sin(theta)
        return np.where((theta > 0) & (theta <= 0.5 * np.pi + 1e-15), val, 0.0)

    def __call__(self, theta):
        val = self.raw(theta)
        if math.isfinite(self.n):
            val = np.minimum(val, self.n)
        return self.scale * val

    def of_cos(self, mu):
        mu = np.clip(np.asarray(mu, dtype=float), -1.0, 1.0)
        return self(np.arccos(mu))

    @property
    def theta_cut(self) -> float:
        """Angle below which the cap is active (0 for the raw kernel)."""
        if not math.isfinite(self.n):
            return 0.0
        return _theta_cut(self.s, self.K, float(self.n))

    def sphere_integral(self) -> float:
        """Closed form of 2 pi int_0^{pi/2} b_n sin(theta) d theta."""
        if not math.isfinite(self.n):
            return math.inf
        tc = self.theta_cut
        cap = self.n * (1.0 - math.cos(tc))
        tail = self.K / (2 * self.s) * (tc ** (-2 * self.s) - (0.5 * math.pi) ** (-2 * self.s))
        return self.scale * 2.0 * math.pi * (cap + tail)

    def polar_rule(self, order: int):
        """Nodes theta_i and weights W_i with
        int_{S^2} b(sigma . e) g(sigma) d sigma ~ sum_i W_i <g>_azimuth(theta_i).

        The weights already include the factor 2 pi from the azimuth.
        """
        if not math.isfinite(self.n):
            raise ValueError("polar rule needs a bounded kernel")
        return _polar_rule(self.s, self.K, float(self.n), int(order), self.scale)


@lru_cache(maxsize=256)
def _theta_cut(s, K, n):
    f = lambda t: K * t ** (-1 - 2 * s) / math.sin(t) - n
    if f(0.5 * math.pi) >= 0:
        return 0.5 * math.pi
    return optimize.brentq(f, 1e-12, 0.5 * math.pi,
                           xtol=1e-15, rtol=1e-15)


@lru_cache(maxsize=256)
def _polar_rule(s, K, n, order, scale):
    tc = _theta_cut(s, K, n)
    n_cap = max(2, order // 4)
    n_tail = max(2, order - n_cap)
    # cap: b = n on [0, tc], measure n sin(theta) d theta
    t1, w1 = gauss_legendre(n_cap, 0.0, tc)
    w1 = w1 * n * np.sin(t1)
    if tc < 0.5 * math.pi:
        # tail: b sin(theta) = K theta^(-1-2s); substitute theta = exp(x)
        x, wx = gauss_legendre(n_tail, math.log(tc), math.log(0.5 * math.pi))
        t2 = np.exp(x)
        w2 = wx * K * t2 ** (-2 * s)
    else:
        t2 = np.empty(0)
        w2 = np.empty(0)
    theta = np.concatenate([t1, t2])
    w = 2.0 * math.pi * scale * np.concatenate([w1, w2])
    theta.setflags(write=False)
    w.setflags(write=False)
    return theta, w


def make_angular(cfg: KernelConfig) -> AngularKernel:
    return AngularKernel(s=cfg.s, K=cfg.K)


def cutoff_angular(b: AngularKernel, n) -> AngularKernel:
    if n < 2:
        raise ValueError("cutoff level must be >= 2")
    return replace(b, n=float(n))


def normalize_angular(b: AngularKernel) -> AngularKernel:
    total = b.sphere_integral()
    if not math.isfinite(total):
        raise ValueError("kernel is not integrable on the sphere")
    if total <= 0:
        raise ValueError("zero sphere integral")
    return replace(b, scale=b.scale / total)


def singular_weight_integral(b: AngularKernel, alpha0: float, lower: float = 0.0) -> float:
    """int_lower^{pi/2} sin^alpha0(theta/2) b(theta) sin(theta) d theta by adaptive quadrature.

    Integrated in x = log(theta) so the power singularity at 0 becomes an
    exponential tail; below theta = 1e-20 the integrand is replaced by its
    leading power law and integrated exactly.
    """
    def g(x):
        t = math.exp(x)
        return math.sin(0.5 * t) ** alpha0 * float(b(t)) * math.sin(t) * t

    hi = math.log(0.5 * math.pi)
    floor = 1e-20
    tail = 0.0
    if lower < floor:
        if math.isfinite(b.n):
            p = alpha0 + 2.0  # capped: b sin(theta) ~ n theta
            tail = b.scale * b.n * 2.0 ** -alpha0 * (floor ** p - lower ** p) / p
        else:
            p = alpha0 - 2.0 * b.s
            if p <= 0:
                return math.inf
            tail = b.scale * b.K * 2.0 ** -alpha0 * (floor ** p - lower ** p) / p
        lower = floor
    lo = math.log(lower)
    pts = [math.log(b.theta_cut)] if 0 < b.theta_cut < 0.5 * math.pi else []
    pts = [p for p in pts if p > lo]
    edges = [lo] + pts + [hi]
    return tail + sum(integrate.quad(g, a, c, limit=400, epsabs=0, epsrel=1e-12)[0]
                      for a, c in zip(edges[:-1], edges[1:]))


# ---------------------------------------------------------------- kinetic part

def _g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0
    out[m] = np.exp(-1.0 / x[m])
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a = _g(x)
    return a / (a + _g(1.0 - x))


@dataclass(frozen=True)
class KineticCutoff:
    gamma: float
    r: float
    A: float = field(init=False)

    def __post_init__(self):
        if self.r <= 1.0:
            raise ValueError("support parameter r must exceed 1")
        object.__setattr__(self, "A", _sup_scan(self.gamma, self.r))

    @property
    def support(self):
        return 0.5 / self.r, 2.0 * self.r

    def bump(self, rho):
        rho = np.asarray(rho, dtype=float)
        lo, li, hi, ho = 0.5 / self.r, 1.0 / self.r, self.r, 2.0 * self.r
        up = smooth_step((rho - lo) / (li - lo))
        down = smooth_step((ho - rho) / (ho - hi))
        return np.where(rho < li, up, np.where(rho > hi, down, 1.0))

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        pc = self.bump(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(pc > 0, np.abs(rho) ** self.gamma * pc, 0.0)
        return val

    def hat(self, zeta_norm):
        """Tabulated radial transform (Hermite interpolation)."""
        return hat_table(self.gamma, self.r).evaluate(zeta_norm)

    def hat_quad(self, zeta_norm) -> float:
        return hat_phi_c(self, zeta_norm)


def make_kinetic_cutoff(cfg: KernelConfig) -> KineticCutoff:
    return KineticCutoff(cfg.gamma, cfg.r)


def sup_A(kc: KineticCutoff) -> float:
    return kc.A


@lru_cache(maxsize=32)
def _sup_scan(gamma, r):
    kc_f = lambda rho: float(_phi_value(gamma, r, rho))
    lo, hi = 0.5 / r, 2.0 * r
    grid = np.linspace(lo, hi, 200001)
    vals = _phi_value(gamma, r, grid)
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda x: -kc_f(x), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-13})
    return max(float(vals[i]), -float(res.fun))


def _phi_value(gamma, r, rho):
    lo, li, hi, ho = 0.5 / r, 1.0 / r, r, 2.0 * r
    rho = np.asarray(rho, dtype=float)
    up = smooth_step((rho - lo) / (li - lo))
    down = smooth_step((ho - rho) / (ho - hi))
    pc = np.where(rho < li, up, np.where(rho > hi, down, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pc > 0, np.abs(rho) ** gamma * pc, 0.0)


def hat_phi_c(kc: KineticCutoff, zeta_norm) -> float:
    """(2 pi)^-3 (4 pi / z) int rho Phi_c(rho) sin(z rho) d rho by adaptive quadrature."""
    z = float(zeta_norm)
    if z < 0:
        raise ValueError("zeta_norm must be nonnegative")
    lo, li, hi, ho = 0.5 / kc.r, 1.0 / kc.r, kc.r, 2.0 * kc.r
    pieces = [(lo, li), (li, hi), (hi, ho)]
    f = lambda rho: rho * float(kc(rho))
    total = 0.0
    if z == 0.0:
        for a, b in pieces:
            total += integrate.quad(lambda t: t * f(t), a, b, epsabs=0, epsrel=1e-13, limit=200)[0]
        return FOURIER_NORM * 4.0 * math.pi * total
    for a, b in pieces:
        total += integrate.quad(f, a, b, weight="sin", wvar=z, epsabs=1e-15, limit=400)[0]
    return FOURIER_NORM * 4.0 * math.pi * total / z


class HatTable:
    """Uniform table of Phi_hat and its derivative on [0, z_max]."""

    def __init__(self, gamma, r, z_max, dz, panels=400, order=20):
        lo, hi = 0.5 / r, 2.0 * r
        edges = np.linspace(lo, hi, panels + 1)
        xg, wg = np.polynomial.legendre.leggauss(order)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        rho = (half[:, None] * xg + mid[:, None]).ravel()
        wr = (half[:, None] * wg).ravel()
        w = wr * rho ** 2 * _phi_value(gamma, r, rho)
        n = int(round(z_max / dz))
        z = np.arange(n + 1) * dz
        vals = np.empty(n + 1)
        ders = np.empty(n + 1)
        c = FOURIER_NORM * 4.0 * math.pi
        for i in range(0, n + 1, 256):
            x = z[i:i + 256, None] * rho
            j0 = _sinc(x)
            vals[i:i + 256] = c * (j0 @ w)
            ders[i:i + 256] = c * ((_dsinc(x) * rho) @ w)
        self.z_max = float(z[-1])
        self.dz = float(dz)
        self.values = vals
        self.derivs = ders

    def evaluate(self, z):
        return hermite_eval(self.values, self.derivs, self.dz, np.asarray(z, dtype=float))


def _sinc(x):
    out = np.ones_like(x)
    m = np.abs(x) > 1e-4
    out[m] = np.sin(x[m]) / x[m]
    xs = x[~m]
    out[~m] = 1 - xs ** 2 / 6 + xs ** 4 / 120
    return out


def _dsinc(x):
    out = np.empty_like(x)
    m = np.abs(x) > 1e-3
    xm = x[m]
    out[m] = (xm * np.cos(xm) - np.sin(xm)) / xm ** 2
    xs = x[~m]
    out[~m] = -xs / 3 + xs ** 3 / 30
    return out


def hermite_eval(vals, ders, dz, z):
    z = np.abs(z)
    t = z / dz
    i = np.minimum(np.floor(t).astype(np.int64), vals.size - 2)
    inside = z <= dz * (vals.size - 1)
    i = np.where(inside, i, 0)
    u = t - i
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u ** 2 * (3 - 2 * u)
    h11 = u ** 2 * (u - 1)
    out = h00 * vals[i] + h10 * dz * ders[i] + h01 * vals[i + 1] + h11 * dz * ders[i + 1]
    return np.where(inside, out, 0.0)


@lru_cache(maxsize=16)
def hat_table(gamma, r, z_max=40.0, dz=0.005) -> HatTable:
    return HatTable(gamma, r, z_max, dz)


def decay_fit(kc: KineticCutoff, N: int = 2, z_lo=1.0, z_hi=100.0, samples=2000):
    """Smallest C with |Phi_hat(z)| <= C <z>^(-2N) on the sampled window."""
    table = hat_table(kc.gamma, kc.r, z_max=max(z_hi, 40.0) + 1.0, dz=0.01)
    z = np.linspace(z_lo, z_hi, samples)
    env = (1.0 + z ** 2) ** N
    ratio = np.abs(table.evaluate(z)) * env
    return float(ratio.max()), z, table.evaluate(z)


def tail_cutoff_radius(kc: KineticCutoff, C: float, N: int = 2, rel=1e-8) -> float:
    """Radius beyond which C <z>^(-2N) < rel * Phi_hat(0)."""
    h0 = abs(float(kc.hat(0.0)))
    return math.sqrt(max((C / (rel * h0)) ** (1.0 / N) - 1.0, 0.0))
