"""Fourier-space collision operator and Picard time stepping.

The transformed gain and loss integrals are evaluated in centre-of-mass form:
with zeta = zeta*(sigma) + eta and zeta* = (a_- xi + a_+ |xi| sigma) / 2 the two
lookups become phi(xi/2 - eta) phi(xi/2 + eta) for every sigma, so the sphere
sum collapses into a kernel K_xi(eta) that is tabulated once per operator.

Two state layouts are supported: ``radial`` (isotropic data, phi sampled on
|xi| in [0, R]) and ``cube`` (full 3D grid).
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from numba import njit, prange
from scipy.interpolate import CubicSpline

from . import _splines
from .charfn import CharGrid, DiscreteMeasure, RadialCharGrid, distance, moments_from_char
from .kernels import (KernelConfig, cutoff_angular, hat_table, make_angular,
                      make_kinetic_cutoff, normalize_angular)
from .kinematics import RestitutionParams
from .quadrature import gauss_legendre, lebedev


class NonConvergence(RuntimeError):
    def __init__(self, message, residual=math.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "radial"
    T: float | None = None
    m: int = 8
    tol: float = 1e-8
    max_iter: int = 50
    alpha: float = 1.5
    sphere_order: int = 16
    n_azimuth: int = 64
    eta_radius: float = 8.0
    eta_radial: int = 48
    eta_angular: int = 32
    R_grid: float = 16.0
    M: int = 321
    R_eval: float = 15.0
    interpolation: str = "cubic"
    c_nodes: int = 41
    contraction_pairs: int = 8
    max_halvings: int = 6
    seed: int = 0

    @classmethod
    def radial_default(cls, **kw) -> "SolverConfig":
        return replace(cls(), **kw)

    @classmethod
    def cube_default(cls, **kw) -> "SolverConfig":
        base = cls(mode="cube", eta_radius=3.0, eta_radial=12, eta_angular=17,
                   R_grid=4.5, M=37, R_eval=4.0, interpolation="linear")
        return replace(base, **kw)

    def __post_init__(self):
        if self.mode not in ("radial", "cube"):
            raise ValueError(f"mode must be 'radial' or 'cube', got {self.mode!r}")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError(f"interpolation must be 'linear' or 'cubic', got {self.interpolation!r}")
        if self.m < 1 or self.max_iter < 1:
            raise ValueError("m and max_iter must be positive")
        if self.T is not None and self.T <= 0:
            raise ValueError("interval length T must be positive")
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError("alpha must lie in (0, 2]")
        if self.n_azimuth % 2:
            raise ValueError("n_azimuth must be even")
        if self.R_eval > self.R_grid:
            raise ValueError("R_eval must not exceed R_grid")
        if self.mode == "cube" and self.M % 2 == 0:
            raise ValueError("cube grids need odd M")
        if self.R_eval <= 2.0 * self.margin:
            raise ValueError("R_eval too small for the interpolation margin")

    @property
    def margin(self) -> float:
        """Lookups stay this far inside the evolved ball so that interpolation
        stencils only touch evolved nodes."""
        reach = 2.0 if (self.mode == "radial" or self.interpolation == "linear") else 4.0
        return reach * self.spacing

    def eta_radius_at(self, k):
        """Per-node eta truncation: lookups xi/2 +- eta stay inside the ball."""
        return np.minimum(self.eta_radius, self.R_eval - 0.5 * np.asarray(k) - self.margin)

    @property
    def spacing(self) -> float:
        if self.mode == "radial":
            return self.R_grid / (self.M - 1)
        return 2.0 * self.R_grid / (self.M - 1)


# ---------------------------------------------------------------- numba kernels

@njit(cache=True)
def _kernel_table(ks, rho, cs, th, wth, n_az, am, ap, hv, hd, dz, out):
    """out[i, j, l] = sum_sigma W_sigma Phi_hat(|zeta* + eta|), symmetrised in c.

    xi = k_i e_z, eta = rho[i, j] (sqrt(1 - c^2), 0, c); azimuths of sigma are
    uniform and mirror-paired, so only the upper half is visited.
    """
    half = n_az // 2
    for i in range(ks.shape[0]):
        k = ks[i]
        for t in range(th.shape[0]):
            st = math.sin(th[t])
            ct = math.cos(th[t])
            for u in range(half + 1):
                ph = 2.0 * math.pi * u / n_az
                w = wth[t] / n_az
                if 0 < u < half:
                    w *= 2.0
                zx = 0.5 * k * ap * st * math.cos(ph)
                zy = 0.5 * k * ap * st * math.sin(ph)
                zz = 0.5 * k * (am + ap * ct)
                z2 = zx * zx + zy * zy + zz * zz
                for j in range(rho.shape[1]):
                    r = rho[i, j]
                    base = z2 + r * r
                    for l in range(cs.shape[0]):
                        c = cs[l]
                        s = math.sqrt(max(1.0 - c * c, 0.0))
                        p1 = base + 2.0 * r * (zx * s + zz * c)
                        p2 = base + 2.0 * r * (zx * s - zz * c)
                        v1 = _splines.hermite_1d(hv, hd, dz, math.sqrt(max(p1, 0.0)))
                        v2 = _splines.hermite_1d(hv, hd, dz, math.sqrt(max(p2, 0.0)))
                        out[i, j, l] += 0.5 * w * (v1 + v2)


@njit(cache=True)
def _radial_apply(coef, h, ks, rho, cs, Q, out):
    for i in range(ks.shape[0]):
        x = 0.5 * ks[i]
        acc = 0.0
        for j in range(rho.shape[1]):
            r = rho[i, j]
            base = x * x + r * r
            for l in range(cs.shape[0]):
                t = 2.0 * x * r * cs[l]
                a = math.sqrt(max(base - t, 0.0))
                b = math.sqrt(base + t)
                acc += Q[i, j, l] * _splines.eval_1d(coef, h, a) * _splines.eval_1d(coef, h, b)
        out[i] = acc


@njit(cache=True, inline="always")
def _trilinear(vr, vi, lo, h, x, y, z):
    n = vr.shape[0]
    sx = (x - lo) / h
    sy = (y - lo) / h
    sz = (z - lo) / h
    ix = min(max(int(math.floor(sx)), 0), n - 2)
    iy = min(max(int(math.floor(sy)), 0), n - 2)
    iz = min(max(int(math.floor(sz)), 0), n - 2)
    tx = sx - ix
    ty = sy - iy
    tz = sz - iz
    re = 0.0
    im = 0.0
    for a in range(2):
        wa = tx if a else 1.0 - tx
        for b in range(2):
            wb = ty if b else 1.0 - ty
            for c in range(2):
                w = wa * wb * (tz if c else 1.0 - tz)
                re += w * vr[ix + a, iy + b, iz + c]
                im += w * vi[ix + a, iy + b, iz + c]
    return re, im


@njit(cache=True, parallel=True)
def _cube_apply(vr, vi, cubic, lo, h, xis, etas, scale, Q, out_re, out_im):
    for p in prange(xis.shape[0]):
        hx = 0.5 * xis[p, 0]
        hy = 0.5 * xis[p, 1]
        hz = 0.5 * xis[p, 2]
        sc = scale[p]
        accr = 0.0
        acci = 0.0
        for e in range(etas.shape[0]):
            ex = sc * etas[e, 0]
            ey = sc * etas[e, 1]
            ez = sc * etas[e, 2]
            if cubic:
                ar, ai = _splines.eval_3d(vr, vi, lo, h, hx - ex, hy - ey, hz - ez)
                br, bi = _splines.eval_3d(vr, vi, lo, h, hx + ex, hy + ey, hz + ez)
            else:
                ar, ai = _trilinear(vr, vi, lo, h, hx - ex, hy - ey, hz - ez)
                br, bi = _trilinear(vr, vi, lo, h, hx + ex, hy + ey, hz + ez)
            q = Q[p, e]
            accr += q * (ar * br - ai * bi)
            acci += q * (ar * bi + ai * br)
        out_re[p] = accr
        out_im[p] = acci


# ---------------------------------------------------------------- helpers

def angular_kernel(kcfg: KernelConfig, normalized: bool = True):
    """Capped angular kernel b_n, optionally scaled to unit sphere integral."""
    b = cutoff_angular(make_angular(kcfg), kcfg.n)
    return normalize_angular(b) if normalized else b


def _balanced(Kw, shell, shell_w):
    """Subtract the discrete total of each row of Kw from its outermost eta
    shell in proportion to the shell weights, so that every row sums to zero.

    ``shell`` indexes the shell within a flattened row; ``shell_w`` has one
    row of shell weights per output node.
    """
    flat = Kw.reshape(Kw.shape[0], -1).copy()
    tot = flat.sum(axis=1)
    frac = shell_w / shell_w.sum(axis=1, keepdims=True)
    flat[:, shell] -= tot[:, None] * frac
    return flat.reshape(Kw.shape)


def _half_lebedev(order):
    d, w = lebedev(order)
    tol = 1e-12
    keep = (d[:, 2] > tol) | ((np.abs(d[:, 2]) <= tol) & (d[:, 1] > tol)) | (
        (np.abs(d[:, 2]) <= tol) & (np.abs(d[:, 1]) <= tol) & (d[:, 0] > 0))
    if 2 * keep.sum() != d.shape[0]:
        raise RuntimeError("direction set is not inversion symmetric")
    return d[keep], 2.0 * w[keep]


@dataclass(frozen=True)
class EtaRule:
    """Unit-ball rule on the half space: radial Gauss in [0, 1] times half Lebedev."""

    unit_rho: np.ndarray
    dirs: np.ndarray
    etas: np.ndarray
    w_unit: np.ndarray

    @classmethod
    def build(cls, n_radial: int, order: int) -> "EtaRule":
        t, wt = gauss_legendre(n_radial, 0.0, 1.0)
        dirs, wd = _half_lebedev(order)
        etas = np.ascontiguousarray((t[:, None, None] * dirs[None]).reshape(-1, 3))
        w = ((wt * t ** 2)[:, None] * wd[None]).ravel()
        return cls(t, dirs, etas, w)

    @property
    def shell(self) -> slice:
        n = self.etas.shape[0]
        return slice(n - self.dirs.shape[0], n)


def exponential_weights(A: float, T: float, m: int) -> np.ndarray:
    """W[j, l] with int_0^{t_j} e^{-A (t_j - s)} g(s) ds = sum_l W[j, l] g(t_l)
    for g piecewise linear on the uniform nodes t_l = l T / m."""
    h = T / m
    x = A * h
    if x < 1e-6:
        one = h * (1.0 - x / 2.0 + x * x / 6.0)
        lin = h * (0.5 - x / 3.0 + x * x / 8.0)
    else:
        e = math.exp(-x)
        one = -math.expm1(-x) / A
        lin = (-math.expm1(-x) - x * e) / (h * A * A)
    # integrals over one subinterval, measured back from its right end
    w_left = lin * 1.0
    w_right = one - lin
    W = np.zeros((m + 1, m + 1))
    for j in range(1, m + 1):
        for l in range(j):
            decay = math.exp(-A * h * (j - l - 1))
            W[j, l] += decay * w_left
            W[j, l + 1] += decay * w_right
    return W


# ---------------------------------------------------------------- operator

class CollisionOperator:
    """Tabulated transformed collision operator for one kernel/grid setup.

    ``net(values)`` returns N[phi] = gain - loss on the grid, zero outside the
    evaluation region; ``g1``/``g2`` return the two pieces of the reformulated
    equation, with g1 + g2 - A_tot phi = N.
    """

    def __init__(self, kcfg: KernelConfig, rp: RestitutionParams, cfg: SolverConfig,
                 normalized: bool = True):
        self.kcfg = kcfg
        self.rp = rp
        self.cfg = cfg
        self.normalized = normalized
        self.angular = angular_kernel(kcfg, normalized)
        self.cutoff = make_kinetic_cutoff(kcfg)
        zmax = max(40.0, cfg.R_eval + cfg.eta_radius + 1.0)
        self.table = hat_table(kcfg.gamma, kcfg.r, z_max=float(math.ceil(zmax)))
        self.theta, self.w_theta = self.angular.polar_rule(cfg.sphere_order)
        self.b_mass = float(self.w_theta.sum())
        self.A = float(self.cutoff.A)
        self.A_tot = self.A * self.b_mass
        self.C_hat: float | None = None
        t0 = time.perf_counter()
        if cfg.mode == "radial":
            self._build_radial()
        else:
            self._build_cube()
        self.build_seconds = time.perf_counter() - t0

    # -------------------------------------------------------- construction

    def _kernel_rows(self, ks, rho, cs):
        """Gain kernel table; ``rho`` holds one row of radial eta nodes per k."""
        ks = np.ascontiguousarray(ks, dtype=float)
        rho = np.ascontiguousarray(np.broadcast_to(rho, (ks.size, np.shape(rho)[-1])))
        out = np.zeros((ks.size, rho.shape[1], cs.size))
        t = self.table
        _kernel_table(ks, rho, cs, self.theta, self.w_theta, self.cfg.n_azimuth,
                      self.rp.a_minus, self.rp.a_plus, t.values, t.derivs, t.dz, out)
        zero = ks == 0.0
        if np.any(zero):
            out[zero] = self.b_mass * self.table.evaluate(rho[zero])[:, :, None]
        return out

    def _loss_sym(self, x, rho, cs):
        """b_mass * (Phi_hat(|x e_z + eta|) + Phi_hat(|x e_z - eta|)) / 2."""
        X = np.asarray(x)[:, None, None]
        R = rho[:, :, None]
        base = X ** 2 + R ** 2
        cross = 2.0 * X * R * cs[None, None, :]
        ev = self.table.evaluate
        return 0.5 * self.b_mass * (ev(np.sqrt(np.maximum(base + cross, 0.0)))
                                    + ev(np.sqrt(np.maximum(base - cross, 0.0))))

    def _build_radial(self):
        cfg = self.cfg
        self.axis = np.linspace(0.0, cfg.R_grid, cfg.M)
        self.eval_index = np.nonzero(self.axis <= cfg.R_eval + 1e-12)[0]
        ks = self.axis[self.eval_index]
        t, wt = gauss_legendre(cfg.eta_radial, 0.0, 1.0)
        c, wc = gauss_legendre(cfg.eta_angular, -1.0, 1.0)
        pos = c > 0
        c, wc = c[pos], 2.0 * wc[pos]
        Z = cfg.eta_radius_at(ks)
        rho = Z[:, None] * t[None, :]
        w_eta = 2.0 * np.pi * (Z[:, None] * wt * rho ** 2)[:, :, None] * wc[None, None, :]
        K = self._kernel_rows(ks, rho, c)
        L = self._loss_sym(0.5 * ks, rho, c)
        self.rho, self.cs, self.w_eta = rho, c, w_eta
        nc = c.size
        shell = slice((cfg.eta_radial - 1) * nc, cfg.eta_radial * nc)
        shell_w = w_eta[:, -1, :]
        self.Kw = _balanced(K * w_eta, shell, shell_w)
        self.Lw = _balanced(L * w_eta, shell, shell_w)
        self.Kw[ks == 0.0] = self.Lw[ks == 0.0]
        self.Qw = self.Kw - self.Lw
        self._h = cfg.spacing

    def _build_cube(self):
        cfg = self.cfg
        M, R = cfg.M, cfg.R_grid
        a = np.linspace(-R, R, M)
        X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        center = (M ** 3) // 2
        lin = np.arange(M ** 3)
        r = np.linalg.norm(pts, axis=1)
        half = (lin <= center) & (r <= cfg.R_eval + 1e-12)
        self.half_index = lin[half]
        self.mirror_index = (M ** 3 - 1) - self.half_index
        self.xis = np.ascontiguousarray(pts[half])
        # unit-radius rule, scaled per output node
        self.rule = EtaRule.build(cfg.eta_radial, cfg.eta_angular)
        self.etas = self.rule.etas
        self.Kw, self.Lw, self.scale = self.cube_weights(self.xis)
        self.Qw = self.Kw - self.Lw
        self._h = cfg.spacing
        self._lo = -R

    def cube_weights(self, xis, eta_radius=None, rule: EtaRule = None):
        """Balanced gain/loss weights (Kw, Lw) and eta scale for arbitrary points.

        The gain kernel is tabulated on the distinct |xi| values and a uniform
        grid in |c| (it is even in c), then interpolated cubically in c.
        """
        cfg = self.cfg
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        rule = self.rule if rule is None else rule
        dirs, etas = rule.dirs, rule.etas
        norms = np.linalg.norm(xis, axis=1)
        radii, inv = np.unique(np.round(norms, 12), return_inverse=True)
        Zr = cfg.eta_radius_at(radii) if eta_radius is None else np.full(radii.size, eta_radius)
        if np.any(Zr <= 0):
            raise ValueError("output point too close to the edge of the evolved ball")
        cgrid = np.linspace(0.0, 1.0, cfg.c_nodes)
        table = self._kernel_rows(radii, Zr[:, None] * rule.unit_rho[None, :], cgrid)
        flat = ((1, np.zeros(rule.unit_rho.size)), "not-a-knot")
        splines = [CubicSpline(cgrid, table[q], axis=1, bc_type=flat) for q in range(radii.size)]
        unit = np.divide(xis, norms[:, None], out=np.zeros_like(xis), where=norms[:, None] > 0)
        scale = Zr[inv]
        Kw = np.empty((xis.shape[0], etas.shape[0]))
        Lw = np.empty_like(Kw)
        ev = self.table.evaluate
        for p in range(xis.shape[0]):
            c = np.abs(dirs @ unit[p])
            Kw[p] = splines[inv[p]](c).ravel()
            hx = 0.5 * xis[p]
            e = scale[p] * etas
            Lw[p] = 0.5 * self.b_mass * (ev(np.linalg.norm(hx + e, axis=1))
                                         + ev(np.linalg.norm(hx - e, axis=1)))
        w = scale[:, None] ** 3 * rule.w_unit[None, :]
        shell_w = w[:, rule.shell]
        Kw = _balanced(Kw * w, rule.shell, shell_w)
        Lw = _balanced(Lw * w, rule.shell, shell_w)
        Kw[norms == 0.0] = Lw[norms == 0.0]
        return Kw, Lw, np.ascontiguousarray(scale)

    # -------------------------------------------------------- state helpers

    @property
    def shape(self):
        if self.cfg.mode == "radial":
            return (self.cfg.M,)
        return (self.cfg.M,) * 3

    def wrap(self, values):
        cfg = self.cfg
        if cfg.mode == "radial":
            return RadialCharGrid(cfg.R_grid, cfg.M, np.real(values))
        return CharGrid(cfg.R_grid, cfg.M, values)

    def state(self, grid) -> np.ndarray:
        cfg = self.cfg
        if abs(grid.R - cfg.R_grid) > 1e-12 or grid.M != cfg.M:
            raise ValueError("initial grid does not match the solver grid (R_grid, M)")
        if cfg.mode == "radial":
            if not isinstance(grid, RadialCharGrid):
                raise ValueError("radial mode needs a RadialCharGrid")
            return grid.values.astype(float).copy()
        if not isinstance(grid, CharGrid):
            raise ValueError("cube mode needs a CharGrid")
        return grid.values.astype(complex).copy()

    @cached_property
    def eval_radius(self) -> np.ndarray:
        """|xi| at every evaluated node, for K^alpha distances."""
        if self.cfg.mode == "radial":
            return self.axis[self.eval_index]
        return np.linalg.norm(self.xis, axis=1)

    def eval_values(self, values) -> np.ndarray:
        if self.cfg.mode == "radial":
            return values[self.eval_index]
        return values.reshape(-1)[self.half_index]

    # -------------------------------------------------------- application

    def _apply(self, values, Qw):
        cfg = self.cfg
        if cfg.mode == "radial":
            coef = _splines.prefilter(values)
            ks = self.axis[self.eval_index]
            out_eval = np.empty(ks.size)
            _radial_apply(coef, self._h, ks, self.rho, self.cs, Qw, out_eval)
            out = np.zeros(cfg.M)
            out[self.eval_index] = out_eval
            return out
        if cfg.interpolation == "cubic":
            vr = _splines.prefilter(values.real)
            vi = _splines.prefilter(values.imag)
        else:
            vr = np.ascontiguousarray(values.real)
            vi = np.ascontiguousarray(values.imag)
        n = self.xis.shape[0]
        ore = np.empty(n)
        oim = np.empty(n)
        _cube_apply(vr, vi, cfg.interpolation == "cubic", self._lo, self._h, self.xis,
                    self.etas, self.scale, Qw, ore, oim)
        flat = np.zeros(cfg.M ** 3, dtype=complex)
        flat[self.half_index] = ore + 1j * oim
        flat[self.mirror_index] = ore - 1j * oim
        return flat.reshape(self.shape)

    def net(self, values) -> np.ndarray:
        return self._apply(values, self.Qw)

    def gain(self, values) -> np.ndarray:
        return self._apply(values, self.Kw)

    def loss(self, values) -> np.ndarray:
        return self._apply(values, self.Lw)

    def g1(self, grid):
        return self.wrap(self.gain(self.state(grid)))

    def g2(self, grid):
        v = self.state(grid)
        return self.wrap(self.A_tot * v - self.loss(v))

    def rhs(self, values) -> np.ndarray:
        """G1 + G2 = N + A_tot phi."""
        return self.net(values) + self.A_tot * values

    def kalpha_distance(self, a, b, alpha=None) -> float:
        alpha = self.cfg.alpha if alpha is None else alpha
        r = self.eval_radius
        m = r > 0
        d = np.abs(self.eval_values(a) - self.eval_values(b))[m]
        return float(np.max(d / r[m] ** alpha)) if d.size else 0.0


# ---------------------------------------------------------------- paths

@dataclass
class SolutionPath:
    times: np.ndarray
    values: np.ndarray
    operator: CollisionOperator = field(repr=False)
    iterations: int = 0
    residuals: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def grids(self):
        return [self.operator.wrap(v) for v in self.values]

    @property
    def terminal(self):
        return self.operator.wrap(self.values[-1])

    @property
    def initial(self):
        return self.operator.wrap(self.values[0])

    def norms(self, alpha=None):
        alpha = self.operator.cfg.alpha if alpha is None else alpha
        one = np.ones_like(self.values[0])
        return np.array([self.operator.kalpha_distance(v, one, alpha) for v in self.values])


def picard_map(op: CollisionOperator, path_values: np.ndarray, phi0_values: np.ndarray,
               T: float, W: np.ndarray | None = None, g0: np.ndarray | None = None) -> np.ndarray:
    """P[phi](t_j) = phi0 e^{-A t_j} + int_0^{t_j} e^{-A (t_j - s)} (G1 + G2)[phi](s) ds."""
    m = path_values.shape[0] - 1
    if W is None:
        W = exponential_weights(op.A_tot, T, m)
    times = np.linspace(0.0, T, m + 1)
    G = np.empty_like(path_values)
    for j in range(m + 1):
        if j == 0 and g0 is not None:
            G[0] = g0
        else:
            G[j] = op.rhs(path_values[j])
    out = np.empty_like(path_values)
    for j in range(m + 1):
        acc = math.exp(-op.A_tot * times[j]) * phi0_values
        for l in range(m + 1):
            if W[j, l] != 0.0:
                acc = acc + W[j, l] * G[l]
        out[j] = acc
    out[0] = phi0_values
    return out


def _path_distance(op, a, b) -> float:
    return max(op.kalpha_distance(x, y) for x, y in zip(a, b))


def solve_interval(phi0, op: CollisionOperator, T: float | None = None, t0: float = 0.0,
                   log: Callable[[dict], None] | None = None) -> SolutionPath:
    """Picard iteration from the constant path until successive iterates differ
    by less than ``tol`` in the sup-over-time K^alpha distance. T is halved on
    failure, up to ``max_halvings`` times."""
    cfg = op.cfg
    v0 = op.state(phi0) if not isinstance(phi0, np.ndarray) else phi0
    T = default_interval(op) if T is None else T
    last_res = math.nan
    for _ in range(cfg.max_halvings + 1):
        W = exponential_weights(op.A_tot, T, cfg.m)
        path = np.repeat(v0[None], cfg.m + 1, axis=0)
        g0 = op.rhs(v0)
        residuals, history = [], []
        start = time.perf_counter()
        converged = False
        for it in range(1, cfg.max_iter + 1):
            new = picard_map(op, path, v0, T, W, g0)
            res = _path_distance(op, new, path)
            path = new
            residuals.append(res)
            rec = {"t0": t0, "T": T, "iteration": it, "residual": res,
                   "wall_time": time.perf_counter() - start}
            history.append(rec)
            if log is not None:
                log(rec)
            if res < cfg.tol:
                converged = True
                break
            if not np.isfinite(res) or (it > 3 and res > residuals[-2] > residuals[-3]):
                break
        last_res = residuals[-1]
        if converged:
            return SolutionPath(t0 + np.linspace(0.0, T, cfg.m + 1), path, op, it,
                                residuals, history)
        T *= 0.5
    raise NonConvergence(f"Picard iteration did not reach tol {cfg.tol}; last residual {last_res:.3e}",
                         last_res, cfg.max_iter)


def default_interval(op: CollisionOperator) -> float:
    if op.cfg.T is not None:
        return op.cfg.T
    if op.C_hat is None:
        op.C_hat = estimate_contraction(op, op.cfg.contraction_pairs, op.cfg.seed)
    return 0.5 / (op.A_tot + max(op.C_hat, 0.0))


def solve(phi0, T_final: float, op: CollisionOperator, log=None) -> list[SolutionPath]:
    """Chain intervals of equal length (at most the default T) up to T_final."""
    v0 = op.state(phi0)
    if T_final <= 0:
        cfg = op.cfg
        return [SolutionPath(np.zeros(1), v0[None], op, 0, [], [])]
    Tmax = default_interval(op)
    n = max(1, int(math.ceil(T_final / Tmax - 1e-9)))
    T = T_final / n
    paths = []
    t = 0.0
    while t < T_final - 1e-12:
        step = min(T, T_final - t)
        p = solve_interval(v0, op, step, t0=t, log=log)
        paths.append(p)
        t = float(p.times[-1])
        v0 = p.values[-1]
    return paths


def path_times(paths) -> np.ndarray:
    ts = [paths[0].times[0]]
    for p in paths:
        ts.extend(p.times[1:])
    return np.asarray(ts)


def path_grids(paths):
    out = [paths[0].initial]
    for p in paths:
        out.extend(p.grids[1:])
    return out


# ---------------------------------------------------------------- contraction

def random_characteristic(op: CollisionOperator, rng) -> np.ndarray:
    """Characteristic function of a random zero-mean discrete measure, on the
    operator's grid (isotropised in radial mode)."""
    n_atoms = int(rng.integers(2, 5))
    w = rng.dirichlet(np.ones(n_atoms))
    v = rng.normal(size=(n_atoms, 3))
    v *= (rng.uniform(0.2, 1.0, n_atoms) / np.linalg.norm(v, axis=1))[:, None]
    if op.cfg.mode == "radial":
        F = DiscreteMeasure(w, v)
        return F.isotropic_char(op.axis)
    W = np.concatenate([w, w]) / 2.0
    V = np.concatenate([v, -v])
    F = DiscreteMeasure(W / W.sum(), V)
    M, R = op.cfg.M, op.cfg.R_grid
    a = np.linspace(-R, R, M)
    X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    vals = F.char(pts).reshape(M, M, M)
    c = M // 2
    vals[c, c, c] = 1.0
    return vals


def contraction_ratios(op: CollisionOperator, pair_count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(pair_count):
        a = random_characteristic(op, rng)
        b = random_characteristic(op, rng)
        d = op.kalpha_distance(a, b)
        if d == 0.0:
            continue
        out.append(op.kalpha_distance(op.rhs(a), op.rhs(b)) / d)
    return np.asarray(out)


def estimate_contraction(op: CollisionOperator, pair_count: int = 8, seed: int = 0) -> float:
    """C_hat = max over random pairs of dist(G[phi], G[psi]) / dist(phi, psi) - A_tot."""
    if pair_count < 2:
        raise ValueError("pair_count must be >= 2")
    ratios = contraction_ratios(op, pair_count, seed)
    return float(ratios.max() - op.A_tot) if ratios.size else 0.0


def picard_ratio(op: CollisionOperator, a: np.ndarray, b: np.ndarray, T: float) -> float:
    """dist(P[a] - P[b]) / dist(a - b) for constant-in-time paths sharing phi0 = a."""
    m = op.cfg.m
    W = exponential_weights(op.A_tot, T, m)
    pa = picard_map(op, np.repeat(a[None], m + 1, axis=0), a, T, W)
    pb = picard_map(op, np.repeat(b[None], m + 1, axis=0), a, T, W)
    d = max(op.kalpha_distance(a, b), 1e-300)
    return _path_distance(op, pa, pb) / d


# ---------------------------------------------------------------- cutoff sequence

@dataclass
class SequenceResult:
    levels: list
    terminals: list
    differences: list
    momenta: list
    energies: list
    runs: list = field(repr=False, default_factory=list)


def noncutoff_sequence(phi0, T_final: float, n_list, kcfg: KernelConfig, rp: RestitutionParams,
                       cfg: SolverConfig, log=None) -> SequenceResult:
    """Solve with b_n = min(b, n) (not normalised) for increasing n and report
    sup-grid differences between consecutive terminal states."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    terms, moms, ens, runs = [], [], [], []
    for n in n_list:
        op = CollisionOperator(kcfg.with_n(n), rp, cfg, normalized=False)
        paths = solve(phi0, T_final, op, log=log)
        runs.append(paths)
        grids = path_grids(paths)
        terms.append(grids[-1])
        mm = [moments_from_char(g) for g in grids]
        moms.append(np.array([x.momentum for x in mm]))
        ens.append(np.array([x.energy for x in mm]))
    diffs = []
    for a, b in zip(terms, terms[1:]):
        diffs.append(float(np.max(np.abs(a.values - b.values))))
    return SequenceResult(n_list, terms, diffs, moms, ens, runs)


def jsonl_logger(path):
    """Append-mode JSON-lines writer for convergence records."""
    fh = open(path, "a")

    def write(rec):
        fh.write(json.dumps(rec) + "\n")
        fh.flush()

    write.close = fh.close
    return write
