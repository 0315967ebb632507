"""Characteristic functions of probability measures on R^3: sampled grids,
K^alpha distances, positive-definiteness checks and moment extraction."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import _splines
from .quadrature import gauss_legendre, lebedev

Evaluator = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------- measures

@dataclass
class DiscreteMeasure:
    weights: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        v = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        if w.size != v.shape[0]:
            raise ValueError("weights and velocities differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(v)):
            raise ValueError("weights must be nonnegative and velocities finite")
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total}, expected 1")
        self.weights = w / total
        self.velocities = v

    @classmethod
    def dirac(cls, v0=(0.0, 0.0, 0.0)) -> "DiscreteMeasure":
        return cls(np.ones(1), np.asarray(v0, dtype=float).reshape(1, 3))

    def char(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        phase = xi @ self.velocities.T
        return np.exp(-1j * phase) @ self.weights

    __call__ = char

    def isotropic_char(self, k) -> np.ndarray:
        """Characteristic function of the rotation average, as a function of |xi|."""
        k = np.asarray(k, dtype=float)
        speeds = np.linalg.norm(self.velocities, axis=1)
        return np.sinc(np.multiply.outer(k, speeds) / np.pi) @ self.weights

    @property
    def momentum(self) -> np.ndarray:
        return self.weights @ self.velocities

    @property
    def energy(self) -> float:
        return float(self.weights @ np.sum(self.velocities ** 2, axis=1))

    def moment(self, psi) -> float:
        return float(self.weights @ np.asarray([psi(v) for v in self.velocities]))


# ---------------------------------------------------------------- grids

class CharGrid:
    """Samples of phi on the uniform cube [-R, R]^3 with M (odd) points per axis."""

    kind = "cube"

    def __init__(self, R: float, M: int, values: np.ndarray):
        if M % 2 == 0 or M < 3:
            raise ValueError("M must be odd and >= 3")
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (M, M, M):
            raise ValueError(f"values must have shape {(M, M, M)}")
        self.R = float(R)
        self.M = int(M)
        self.values = values
        self._coef = None

    @property
    def spacing(self) -> float:
        return 2.0 * self.R / (self.M - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.M)

    @property
    def center(self) -> int:
        return self.M // 2

    def node_points(self) -> np.ndarray:
        a = self.axis
        X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def node_radius(self) -> np.ndarray:
        return np.linalg.norm(self.node_points(), axis=-1)

    def with_values(self, values) -> "CharGrid":
        return CharGrid(self.R, self.M, values)

    def coefficients(self):
        if self._coef is None:
            self._coef = (_splines.prefilter(self.values.real), _splines.prefilter(self.values.imag))
        return self._coef

    def __call__(self, pts, method: str = "cubic") -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        flat = np.ascontiguousarray(pts.reshape(-1, 3))
        if np.any(np.abs(flat) > self.R * (1 + 1e-12)):
            raise ValueError("lookup outside the grid")
        re = np.empty(flat.shape[0])
        im = np.empty(flat.shape[0])
        if method == "cubic":
            cr, ci = self.coefficients()
            _splines.eval_3d_many(cr, ci, -self.R, self.spacing, flat, re, im)
        elif method == "linear":
            _splines.trilinear_many(np.ascontiguousarray(self.values.real),
                                    np.ascontiguousarray(self.values.imag),
                                    -self.R, self.spacing, flat, re, im)
        else:
            raise ValueError(f"unknown interpolation {method!r}")
        return (re + 1j * im).reshape(shape)

    def axis_values(self, j: int, steps) -> np.ndarray:
        """phi at +-step*h e_j, returned as array of shape (len(steps), 2)."""
        c = self.center
        out = []
        for s in steps:
            idx_p = [c, c, c]
            idx_m = [c, c, c]
            idx_p[j] += s
            idx_m[j] -= s
            out.append((self.values[tuple(idx_p)], self.values[tuple(idx_m)]))
        return np.asarray(out)

    @property
    def origin_value(self) -> complex:
        c = self.center
        return complex(self.values[c, c, c])

    def hermitian_error(self) -> float:
        flipped = self.values[::-1, ::-1, ::-1]
        return float(np.max(np.abs(self.values - np.conj(flipped))))

    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.values)))

    def radial_slice(self):
        c = self.center
        k = self.axis[c:]
        return k, self.values[c:, c, c]


class RadialCharGrid:
    """Isotropic characteristic function sampled at |xi| = 0, dk, ..., R."""

    kind = "radial"

    def __init__(self, R: float, M: int, values: np.ndarray):
        values = np.asarray(values)
        if np.iscomplexobj(values):
            if np.max(np.abs(values.imag)) > 1e-12:
                raise ValueError("isotropic characteristic functions are real")
            values = values.real
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (M,):
            raise ValueError(f"values must have shape ({M},)")
        self.R = float(R)
        self.M = int(M)
        self.values = values
        self._coef = None

    @property
    def spacing(self) -> float:
        return self.R / (self.M - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.M)

    def with_values(self, values) -> "RadialCharGrid":
        return RadialCharGrid(self.R, self.M, values)

    def coefficients(self):
        if self._coef is None:
            self._coef = _splines.prefilter(self.values)
        return self._coef

    def radial(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        flat = np.ascontiguousarray(np.abs(k).ravel())
        if np.any(flat > self.R * (1 + 1e-12)):
            raise ValueError("lookup outside the grid")
        out = np.empty(flat.size)
        _splines.eval_1d_many(self.coefficients(), self.spacing, flat, out)
        return out.reshape(k.shape)

    def __call__(self, pts, method: str = "cubic") -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        k = np.linalg.norm(pts, axis=-1)
        if method == "linear":
            return np.interp(k, self.axis, self.values).astype(complex)
        return self.radial(k).astype(complex)

    @property
    def origin_value(self) -> complex:
        return complex(self.values[0])

    def hermitian_error(self) -> float:
        return 0.0

    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.values)))

    def radial_slice(self):
        return self.axis, self.values.astype(complex)


AnyGrid = Union[CharGrid, RadialCharGrid]


def _cube_points(R, M):
    a = np.linspace(-R, R, M)
    X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
    return np.stack([X, Y, Z], axis=-1)


def from_measure(F: DiscreteMeasure, R: float, M: int) -> CharGrid:
    pts = _cube_points(R, M)
    vals = F.char(pts.reshape(-1, 3)).reshape(M, M, M)
    c = M // 2
    vals[c, c, c] = 1.0
    return CharGrid(R, M, vals)


def _radial_or_cube(fn, R, M, radial):
    if radial:
        return RadialCharGrid(R, M, fn(np.linspace(0.0, R, M)))
    pts = _cube_points(R, M)
    return CharGrid(R, M, fn(np.linalg.norm(pts, axis=-1)).astype(complex))


def gaussian_char(variance: float, R: float, M: int, radial: bool = False) -> AnyGrid:
    if variance <= 0:
        raise ValueError("variance must be positive")
    return _radial_or_cube(lambda k: np.exp(-0.5 * variance * k ** 2), R, M, radial)


def levy_char(alpha: float, R: float, M: int, radial: bool = False) -> AnyGrid:
    if not (0.0 < alpha <= 2.0):
        raise ValueError("levy exponent must lie in (0, 2]")
    return _radial_or_cube(lambda k: np.exp(-np.abs(k) ** alpha), R, M, radial)


def constant_char(R: float, M: int, radial: bool = False) -> AnyGrid:
    return _radial_or_cube(lambda k: np.ones_like(k), R, M, radial)


# ---------------------------------------------------------------- K^alpha

@dataclass(frozen=True)
class KAlphaNorm:
    alpha: float
    value: float


def _grid_nodes_and_values(phi: AnyGrid):
    if isinstance(phi, RadialCharGrid):
        return phi.axis, phi.values.astype(complex)
    return phi.node_radius().ravel(), phi.values.ravel()


def knorm(phi: AnyGrid, alpha: float, radius: float | None = None) -> KAlphaNorm:
    if not (0.0 < alpha <= 2.0):
        raise ValueError("alpha must lie in (0, 2]")
    r, v = _grid_nodes_and_values(phi)
    m = r > 0
    if radius is not None:
        m &= r <= radius + 1e-12
    return KAlphaNorm(alpha, float(np.max(np.abs(v[m] - 1.0) / r[m] ** alpha)))


def distance(phi: AnyGrid, psi: AnyGrid, alpha: float, radius: float | None = None) -> float:
    r, a = _grid_nodes_and_values(phi)
    _, b = _grid_nodes_and_values(psi)
    m = r > 0
    if radius is not None:
        m &= r <= radius + 1e-12
    return float(np.max(np.abs(a[m] - b[m]) / r[m] ** alpha))


# ---------------------------------------------------------------- Bochner checks

@dataclass(frozen=True)
class PDVerdict:
    passed: bool
    min_eigenvalue: float
    tolerance: float
    sample_count: int
    seed: int


def check_positive_definite(phi: Evaluator, sample_count: int = 16, seed: int = 0,
                            radius: float = 2.0, tol: float = 1e-8) -> PDVerdict:
    """Gram-matrix test of phi(xi_j - xi_l) on random points in the ball |xi| <= radius."""
    if sample_count < 2:
        raise ValueError("need at least two sample points")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(sample_count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * (radius * rng.random(sample_count) ** (1.0 / 3.0))[:, None]
    diff = pts[:, None, :] - pts[None, :, :]
    G = np.asarray(phi(diff.reshape(-1, 3)), dtype=complex).reshape(sample_count, sample_count)
    G = 0.5 * (G + G.conj().T)
    lam = float(np.linalg.eigvalsh(G).min())
    thr = -tol * sample_count
    return PDVerdict(lam >= thr, lam, thr, sample_count, seed)


def pd_inequality_residuals(phi: Evaluator, xi, eta, alpha: float, norm_value: float):
    """Residuals (r1, r2, r3) of the three positive-definite inequalities.

    All three are >= 0 for characteristic functions; ``norm_value`` is the
    K^alpha seminorm of phi.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    px, pe = phi(xi), phi(eta)
    pd_ = phi(xi - eta)
    ps = phi(xi + eta)
    r1 = 2.0 * (1.0 - pd_.real) - np.abs(px - pe) ** 2
    r2 = (1.0 - np.abs(px) ** 2) * (1.0 - np.abs(pe) ** 2) - np.abs(px * pe - ps) ** 2
    nx = np.linalg.norm(xi, axis=-1)
    ne = np.linalg.norm(eta, axis=-1)
    r3 = norm_value * (4.0 * nx ** (alpha / 2) * ne ** (alpha / 2) + ne ** alpha) - np.abs(px - ps)
    return r1, r2, r3


# ---------------------------------------------------------------- moments

_RICH = np.array([64.0, -20.0, 1.0]) / 45.0


@dataclass(frozen=True)
class Moments:
    mass: float
    momentum: np.ndarray
    energy: float
    energy_finite: bool


def _energy_flag(d2_levels) -> bool:
    """True when second differences stay bounded as h halves."""
    a = np.abs(np.asarray(d2_levels))
    if np.any(a == 0):
        return True
    r1 = math.log2(a[0] / a[1])
    r2 = math.log2(a[1] / a[2])
    return not (r1 > 0.05 and r1 > 0.5 * r2)


def moments_from_char(phi, h: float | None = None) -> Moments:
    """Mass, momentum i grad phi(0) and energy -lap phi(0).

    Central differences at steps h, 2h, 4h combined by Richardson extrapolation.
    ``phi`` is a grid (steps taken on grid nodes, h defaults to the spacing) or
    any evaluator of 3-vectors, in which case ``h`` is required.
    """
    if isinstance(phi, RadialCharGrid):
        step = 1 if h is None else int(round(h / phi.spacing))
        if step < 1 or 4 * step > phi.M - 1 or (h is not None and abs(step * phi.spacing - h) > 1e-12):
            raise ValueError("grid too coarse for the requested step")
        hh = step * phi.spacing
        f0 = phi.values[0]
        d2 = np.array([2.0 * (phi.values[s * step] - f0) / (s * hh) ** 2 for s in (1, 2, 4)])
        energy = -3.0 * float(_RICH @ d2)
        return Moments(float(f0), np.zeros(3), energy, _energy_flag(d2))
    if isinstance(phi, CharGrid):
        step = 1 if h is None else int(round(h / phi.spacing))
        if step < 1 or 4 * step > phi.center or (h is not None and abs(step * phi.spacing - h) > 1e-12):
            raise ValueError("grid too coarse for the requested step")
        hh = step * phi.spacing
        f0 = phi.origin_value
        pairs = [phi.axis_values(j, [step, 2 * step, 4 * step]) for j in range(3)]
    else:
        if h is None:
            raise ValueError("step h required for evaluator input")
        hh = float(h)
        f0 = complex(np.asarray(phi(np.zeros((1, 3))))[0])
        pairs = []
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            pts = np.array([s * hh * e * sign for s in (1, 2, 4) for sign in (1, -1)])
            vals = np.asarray(phi(pts)).reshape(3, 2)
            pairs.append(vals)
    momentum = np.empty(3)
    lap = np.zeros(3)
    finite = True
    for j in range(3):
        vals = pairs[j]
        levels = np.array([1.0, 2.0, 4.0]) * hh
        d1 = (vals[:, 0] - vals[:, 1]) / (2.0 * levels)
        d2 = (vals[:, 0] - 2.0 * f0 + vals[:, 1]) / levels ** 2
        momentum[j] = -float((_RICH @ d1).imag)
        lap[j] = float((_RICH @ d2).real)
        finite &= _energy_flag(d2.real)
    return Moments(float(np.real(f0)), momentum, -float(lap.sum()), bool(finite))


# ---------------------------------------------------------------- fractional moments

def _radial_log_rule(delta: float, nodes_per_decade: int = 24):
    lo, hi = math.log(delta), math.log(1.0 / delta)
    decades = max(1, int(math.ceil((hi - lo) / math.log(10.0))))
    edges = np.linspace(lo, hi, decades * 4 + 1)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(max(4, nodes_per_decade // 4), a, b)
        xs.append(x)
        ws.append(w)
    x = np.concatenate(xs)
    return np.exp(x), np.concatenate(ws)


def _shell_average(phi, k, order: int, edge_tol: float):
    """Spherical average of Re phi on shells |xi| = k."""
    if isinstance(phi, RadialCharGrid):
        out = np.zeros_like(k)
        inside = k <= phi.R
        out[inside] = phi.radial(k[inside])
        edge = abs(phi.values[-1])
        if np.any(~inside) and edge > edge_tol:
            raise ValueError("grid does not reach the decay region required for this delta")
        return out
    dirs, w = lebedev(order)
    w = w / w.sum()
    out = np.zeros_like(k)
    reach = phi.R if isinstance(phi, CharGrid) else math.inf
    inside = k <= reach
    if isinstance(phi, CharGrid) and np.any(~inside):
        shell = phi.node_radius() >= phi.R - 1e-12
        if np.max(np.abs(phi.values[shell])) > edge_tol:
            raise ValueError("grid does not reach the decay region required for this delta")
    for i in np.nonzero(inside)[0]:
        vals = np.asarray(phi(k[i] * dirs))
        out[i] = float(np.real(vals) @ w)
    return out


def _raw_fractional(shell_avg_fn, alpha, delta, nodes_per_decade=24):
    k, wx = _radial_log_rule(delta, nodes_per_decade)
    avg = shell_avg_fn(k)
    # d xi = 4 pi k^2 dk and dk = k dx
    return float(4.0 * math.pi * np.sum(wx * (1.0 - avg) * k ** (-alpha)))


@lru_cache(maxsize=128)
def calibration_constant(alpha: float, delta: float, reference_speed: float = 2.0) -> float:
    """c_alpha from a point mass at speed 2 (radial form of its shell average)."""
    raw = _raw_fractional(lambda k: np.sinc(k * reference_speed / np.pi), alpha, delta)
    return raw / reference_speed ** alpha


def fractional_moment(phi, alpha: float, delta: float = 1e-3, order: int = 41,
                      edge_tol: float = 1e-10, isotropic: bool = False) -> float:
    """(1/c_alpha) int_{delta <= |xi| <= 1/delta} (1 - Re phi) |xi|^(-3-alpha) d xi.

    ``phi`` may be a grid or an evaluator; an evaluator flagged ``isotropic``
    is called with |xi| directly. Beyond the grid the integrand uses Re phi = 0,
    which requires the grid edge to lie in the decay region.
    """
    if not (0.0 < alpha < 2.0):
        raise ValueError("fractional order must lie in (0, 2)")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if isotropic:
        shell = lambda k: np.real(np.asarray(phi(k)))
    else:
        shell = lambda k: _shell_average(phi, k, order, edge_tol)
    return _raw_fractional(shell, alpha, delta) / calibration_constant(alpha, delta)


# ---------------------------------------------------------------- I/O

_MAGIC = b"CHGR"
_VERSION = 1


def dump_grid(grid: AnyGrid, path) -> None:
    """Binary dump: magic, version, endianness tag, kind, R, M, complex64 samples."""
    path = Path(path)
    tag = b"<" if np.little_endian else b">"
    kind = 0 if isinstance(grid, CharGrid) else 1
    header = _MAGIC + struct.pack("=H", _VERSION) + tag + struct.pack("=BdI", kind, grid.R, grid.M)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.values, dtype=np.complex64).tobytes(order="C"))


def load_grid(path) -> AnyGrid:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a grid dump")
    (version,) = struct.unpack("=H", raw[4:6])
    if version != _VERSION:
        raise ValueError(f"unsupported grid dump version {version}")
    tag = raw[6:7].decode()
    kind, R, M = struct.unpack(tag + "BdI", raw[7:20])
    data = np.frombuffer(raw[20:], dtype=np.dtype(tag + "c8")).astype(np.complex128)
    if kind == 0:
        return CharGrid(R, M, data.reshape(M, M, M))
    return RadialCharGrid(R, M, data.real)


def export_radial_csv(grid: AnyGrid, path) -> None:
    k, v = grid.radial_slice()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "re", "im", "abs"])
        for kk, vv in zip(k, v):
            wr.writerow([f"{kk:.10g}", f"{vv.real:.17g}", f"{vv.imag:.17g}", f"{abs(vv):.17g}"])
