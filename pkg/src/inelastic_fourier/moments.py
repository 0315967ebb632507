"""Regime thresholds, weight functions and moment traces over solver output."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .charfn import fractional_moment, moments_from_char


def c_gamma_s(gamma: float, s: float) -> float:
    """Threshold on the moment order above which infinite-energy data propagate.

    Boundary inputs take the branch whose condition holds with >=.
    """
    if not (-2.0 <= gamma < 0.0):
        raise ValueError("gamma out of [-2,0)")
    if not (0.0 < s < 1.0):
        raise ValueError("s out of (0,1)")
    if s < 0.5:
        return max(gamma / (2.0 * s) + 1.0, 0.0)
    if gamma + 2.0 * s >= 1.0:
        return gamma / (2.0 * s - 1.0) + 2.0
    return max(gamma + 2.0 * s, 0.0)


def _bracket(v):
    return np.sqrt(1.0 + np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))


def weight_W_delta(v, delta: float, alpha0: float):
    """<v>^a0 <delta v>^-a0, bounded by delta^-a0."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not (0.0 < alpha0 <= 2.0):
        raise ValueError("alpha0 out of (0,2]")
    v = np.asarray(v, dtype=float)
    return (_bracket(v) / _bracket(delta * v)) ** alpha0


def weight_W_kappa(x, delta: float, kappa: float, n: float):
    """(1+x)^(1+n kappa/2) / (1 + delta (1+x)^(kappa/2)) for x >= 0."""
    if delta <= 0 or kappa <= 0 or n < 1:
        raise ValueError("need delta > 0, kappa > 0, n >= 1")
    y = 1.0 + np.asarray(x, dtype=float)
    return y ** (1.0 + 0.5 * n * kappa) / (1.0 + delta * y ** (0.5 * kappa))


def weight_W_kappa_d2(x, delta: float, kappa: float, n: float, h=None):
    """Central second difference of W_kappa divided by h^2.

    The default step is relative, h = 1e-3 (1 + x), so that the difference
    stays well conditioned over many decades of x.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    h = 1e-3 * (1.0 + x) if h is None else np.broadcast_to(h, x.shape)
    # the formula is smooth for x > -1, so x - h may dip below zero
    y = 1.0 + x
    w = lambda z: z ** (1.0 + 0.5 * n * kappa) / (1.0 + delta * z ** (0.5 * kappa))
    return (w(y + h) - 2.0 * w(y) + w(y - h)) / h ** 2


def weight_W_kappa_d2_exact(x, delta: float, kappa: float, n: float):
    """Closed-form second derivative, used as an oracle for the difference."""
    y = 1.0 + np.asarray(x, dtype=float)
    p = 1.0 + 0.5 * n * kappa
    q = 0.5 * kappa
    u = y ** p
    D = 1.0 + delta * y ** q
    du = p * y ** (p - 1)
    d2u = p * (p - 1) * y ** (p - 2)
    dD = delta * q * y ** (q - 1)
    d2D = delta * q * (q - 1) * y ** (q - 2)
    return d2u / D - (2 * du * dD + u * d2D) / D ** 2 + 2 * u * dD ** 2 / D ** 3


def envelope_constant(x, delta_list, kappa: float, n: float) -> float:
    """Fitted C with W'' <= C (1+x)^(n kappa/2 - 1), uniform over delta_list."""
    x = np.asarray(x, dtype=float)
    env = (1.0 + x) ** (0.5 * n * kappa - 1.0)
    return float(max(np.max(weight_W_kappa_d2(x, d, kappa, n) / env) for d in delta_list))


# ---------------------------------------------------------------- traces

@dataclass
class MomentTrace:
    times: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray
    energy: np.ndarray
    energy_finite: np.ndarray
    fractional: dict = field(default_factory=dict)

    def momentum_drift(self) -> float:
        return float(np.max(np.abs(self.momentum - self.momentum[0])))

    def energy_increments(self) -> np.ndarray:
        return np.diff(self.energy)

    def energy_monotone(self, tol: float = 1e-8) -> bool:
        return bool(np.all(self.energy_increments() <= tol))

    def mass_error(self) -> float:
        return float(np.max(np.abs(self.mass - 1.0)))

    def propagation_envelope(self, order):
        """Least-squares (C1, C2) with m(t) <= C1 + C2 t after shifting C1 up."""
        m = np.asarray(self.fractional[order])
        t = self.times - self.times[0]
        if t[-1] == 0:
            return float(m.max()), 0.0
        C2 = max(float(np.polyfit(t, m, 1)[0]), 0.0)
        C1 = float(np.max(m - C2 * t))
        return C1, C2

    def verdicts(self, drift_tol=1e-6, mono_tol=1e-8, mass_tol=1e-10) -> list:
        out = [
            dict(name="mass", value=self.mass_error(), tolerance=mass_tol,
                 passed=self.mass_error() < mass_tol),
            dict(name="momentum_drift", value=self.momentum_drift(), tolerance=drift_tol,
                 passed=self.momentum_drift() < drift_tol),
        ]
        if np.all(self.energy_finite):
            inc = float(np.max(self.energy_increments(), initial=0.0))
            out.append(dict(name="energy_monotone", value=inc, tolerance=mono_tol,
                            passed=inc <= mono_tol))
        for order, vals in self.fractional.items():
            sup = float(np.max(vals))
            out.append(dict(name=f"moment_{order:g}_bounded", value=sup, tolerance=float("inf"),
                            passed=bool(np.isfinite(sup))))
        return out

    def to_csv(self, path) -> None:
        orders = sorted(self.fractional)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "px", "py", "pz", "energy"] + [f"m_{a:g}" for a in orders])
            for k, t in enumerate(self.times):
                row = [t, self.mass[k], *self.momentum[k], self.energy[k]]
                row += [self.fractional[a][k] for a in orders]
                w.writerow([repr(float(x)) for x in row])

    def to_json(self, path, **kw) -> None:
        with open(path, "w") as fh:
            json.dump(self.verdicts(**kw), fh, indent=2)


def trace_grids(times, grids, orders=()) -> MomentTrace:
    times = np.asarray(times, dtype=float)
    mass, mom, en, fin = [], [], [], []
    frac = {float(a): [] for a in orders}
    for g in grids:
        m = moments_from_char(g)
        mass.append(m.mass)
        mom.append(m.momentum)
        en.append(m.energy)
        fin.append(m.energy_finite)
        for a in frac:
            frac[a].append(fractional_moment(g, a))
    return MomentTrace(times, np.array(mass), np.array(mom), np.array(en), np.array(fin),
                       {a: np.array(v) for a, v in frac.items()})


def trace_moments(run, orders=()) -> MomentTrace:
    """Moments at every time node of a list of solution paths."""
    from .spectral_solver import path_grids, path_times
    return trace_grids(path_times(run), path_grids(run), orders)


@dataclass
class BoundVerdict:
    passed: bool
    alpha: float
    orders: tuple
    sups: dict
    common_bound: float
    initial_energy_finite: bool


def infinite_energy_bound_check(traces: dict, alpha: float, orders, factor: float = 10.0):
    """Fractional moments below alpha stay bounded over time and across cutoff levels.

    ``traces`` maps a cutoff level n to its MomentTrace.  The common bound is
    ``factor`` times the largest initial value; every sup over time must stay
    below it.
    """
    orders = tuple(float(a) for a in orders)
    if any(a >= alpha for a in orders):
        raise ValueError("orders must lie below alpha")
    sups = {}
    init = 0.0
    fin0 = True
    for n, tr in traces.items():
        for a in orders:
            v = np.asarray(tr.fractional[a])
            sups[(n, a)] = float(np.max(v))
            init = max(init, float(v[0]))
        fin0 = fin0 and bool(tr.energy_finite[0])
    bound = factor * max(init, 1e-300)
    ok = all(np.isfinite(v) and v <= bound for v in sups.values())
    return BoundVerdict(ok, alpha, orders, sups, bound, fin0)
