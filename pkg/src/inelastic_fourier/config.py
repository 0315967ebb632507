"""Scenario files: YAML with line-aware validation errors."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .charfn import (AnyGrid, DiscreteMeasure, constant_char, from_measure, gaussian_char,
                     levy_char)
from .kernels import KernelConfig
from .kinematics import RestitutionParams
from .spectral_solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


DEFAULT_TOLERANCES = {
    "mass": 1e-10,
    "modulus": 1e-6,
    "hermitian": 1e-10,
    "momentum_drift": 1e-6,
    "energy_step": 1e-8,
    "energy_drop": 0.01,
    "elastic_energy": 1e-4,
    "pd_factor": 1e-8,
    "pd_inequality": 1e-10,
    "stationary": 1e-10,
    "gain_gap": 0.01,
    "crosscheck_gap": 0.02,
}

KNOWN_CHECKS = ("invariants", "energy", "momentum", "positive_definite", "pd_inequalities",
                "fractional_moments", "stationary")

STUDY_AXES = ("cutoff-n", "grid-M", "sphere-order", "zeta-nodes", "time-m")


@dataclass(frozen=True)
class Datum:
    kind: str
    weights: Optional[np.ndarray] = None
    velocities: Optional[np.ndarray] = None
    variance: float = 1.0
    alpha: float = 1.5

    def measure(self) -> DiscreteMeasure:
        if self.kind == "dirac":
            return DiscreteMeasure.dirac()
        if self.kind != "discrete":
            raise ValueError(f"datum '{self.kind}' is not a discrete measure")
        return DiscreteMeasure(self.weights, self.velocities)

    @property
    def isotropic(self) -> bool:
        return self.kind in ("gaussian", "levy", "dirac")

    def grid(self, R: float, M: int, radial: bool) -> AnyGrid:
        if self.kind == "gaussian":
            return gaussian_char(self.variance, R, M, radial=radial)
        if self.kind == "levy":
            return levy_char(self.alpha, R, M, radial=radial)
        if self.kind == "dirac":
            return constant_char(R, M, radial=radial)
        if radial:
            raise ValueError("discrete data need the cube solver mode")
        return from_measure(self.measure(), R, M)


@dataclass(frozen=True)
class Study:
    axis: str = "cutoff-n"
    levels: tuple = (4, 8, 16)


@dataclass(frozen=True)
class OracleSettings:
    xi_count: int = 10
    xi_scale: float = 1.5
    polar_order: int = 24
    n_azimuth: int = 32
    zeta_radius: float = 120.0
    zeta_nodes: int = 2400
    dts: tuple = (0.02, 0.01, 0.005)
    eta_radius: float = 30.0


@dataclass(frozen=True)
class Scenario:
    datum: Datum
    rp: RestitutionParams
    kernel: KernelConfig
    solver: SolverConfig
    T_final: float = 1.0
    normalized: bool = True
    checks: tuple = ("invariants",)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    pd_seeds: int = 20
    pd_samples: int = 16
    pd_radius: Optional[float] = None
    fractional_orders: tuple = ()
    study: Study = Study()
    oracle: OracleSettings = OracleSettings()
    output: str = "out"
    seed: int = 0

    def initial_grid(self) -> AnyGrid:
        return self.datum.grid(self.solver.R_grid, self.solver.M, self.solver.mode == "radial")


# ---------------------------------------------------------------- parsing

def _plain(node):
    """Python value and a line map {path: line} from a composed YAML node."""
    lines = {}

    def walk(n, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                key = k.value
                if key in out:
                    raise ConfigError(f"duplicate key '{key}'", k.start_mark.line + 1)
                lines[path + (key,)] = k.start_mark.line + 1
                out[key] = walk(v, path + (key,))
            return out
        if isinstance(n, yaml.SequenceNode):
            return [walk(v, path + (i,)) for i, v in enumerate(n.value)]
        return yaml.safe_load(yaml.serialize(n))

    return walk(node, ()), lines


class _Reader:
    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines

    def line(self, path) -> Optional[int]:
        path = tuple(path)
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, path, message):
        raise ConfigError(message, self.line(path))

    def section(self, key) -> dict:
        val = self.data.get(key, {})
        if val is None:
            return {}
        if not isinstance(val, dict):
            self.fail((key,), f"'{key}' must be a mapping")
        return val

    def build(self, cls, key, values: dict, base=None):
        names = {f.name for f in dataclasses.fields(cls)}
        for k in values:
            if k not in names:
                self.fail((key, k), f"unknown {key} option '{k}'")
        try:
            if base is not None:
                return dataclasses.replace(base, **values)
            return cls(**values)
        except (TypeError, ValueError) as exc:
            bad = next(iter(values), None)
            where = (key,)
            for k in values:
                if k in str(exc):
                    bad, where = k, (key, k)
                    break
            self.fail(where, str(exc))


def _datum(r: _Reader) -> Datum:
    d = r.section("datum")
    kind = d.get("kind")
    if kind not in ("discrete", "gaussian", "levy", "dirac"):
        r.fail(("datum", "kind"), "datum kind must be discrete, gaussian, levy or dirac")
    if kind == "discrete":
        try:
            w = np.asarray(d["weights"], dtype=float)
            V = np.asarray(d["velocities"], dtype=float)
            DiscreteMeasure(w, V)
        except KeyError as exc:
            r.fail(("datum",), f"discrete datum needs {exc.args[0]}")
        except (TypeError, ValueError) as exc:
            r.fail(("datum", "weights"), f"malformed discrete datum: {exc}")
        return Datum("discrete", w, V)
    if kind == "gaussian":
        var = d.get("variance", 1.0)
        if not isinstance(var, (int, float)) or var <= 0:
            r.fail(("datum", "variance"), "gaussian variance must be positive")
        return Datum("gaussian", variance=float(var))
    if kind == "levy":
        a = d.get("alpha", 1.5)
        if not isinstance(a, (int, float)) or not (0.0 < a < 2.0):
            r.fail(("datum", "alpha"), "levy alpha must lie in (0, 2)")
        return Datum("levy", alpha=float(a))
    return Datum("dirac")


def parse_scenario(text: str, source: str = "<config>") -> Scenario:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse {source}: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty configuration")
    data, lines = _plain(node)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1)
    r = _Reader(data, lines)
    known = {"datum", "restitution", "kernel", "solver", "T_final", "normalized", "checks",
             "tolerances", "pd", "fractional_orders", "study", "oracle", "output", "seed"}
    for k in data:
        if k not in known:
            r.fail((k,), f"unknown option '{k}'")
    datum = _datum(r)
    e = data.get("restitution", 0.8)
    try:
        rp = RestitutionParams(float(e))
    except (TypeError, ValueError) as exc:
        r.fail(("restitution",), str(exc))
    kernel = r.build(KernelConfig, "kernel", r.section("kernel"))
    sv = dict(r.section("solver"))
    mode = sv.get("mode", "radial" if datum.isotropic else "cube")
    base = SolverConfig.cube_default() if mode == "cube" else SolverConfig.radial_default()
    sv["mode"] = mode
    solver = r.build(SolverConfig, "solver", sv, base)
    if mode == "radial" and not datum.isotropic:
        r.fail(("solver", "mode"), "discrete data need the cube solver mode")
    T_final = data.get("T_final", 1.0)
    if not isinstance(T_final, (int, float)) or T_final <= 0:
        r.fail(("T_final",), "T_final must be positive")
    checks = data.get("checks", ["invariants"])
    if not isinstance(checks, list):
        r.fail(("checks",), "checks must be a list")
    for i, c in enumerate(checks):
        if c not in KNOWN_CHECKS:
            r.fail(("checks", i), f"unknown check '{c}' (known: {', '.join(KNOWN_CHECKS)})")
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in r.section("tolerances").items():
        if k not in tol:
            r.fail(("tolerances", k), f"unknown tolerance '{k}'")
        if not isinstance(v, (int, float)) or v < 0:
            r.fail(("tolerances", k), f"tolerance '{k}' must be a nonnegative number")
        tol[k] = float(v)
    pd = r.section("pd")
    for k in pd:
        if k not in ("seeds", "samples", "radius"):
            r.fail(("pd", k), f"unknown pd option '{k}'")
    st = dict(r.section("study"))
    if "axis" in st and st["axis"] not in STUDY_AXES:
        r.fail(("study", "axis"), f"study axis must be one of {', '.join(STUDY_AXES)}")
    if "levels" in st:
        if not isinstance(st["levels"], list) or not st["levels"]:
            r.fail(("study", "levels"), "levels must be a non-empty list")
        st["levels"] = tuple(st["levels"])
    study = r.build(Study, "study", st)
    orc = dict(r.section("oracle"))
    if "dts" in orc:
        orc["dts"] = tuple(orc["dts"])
    oracle = r.build(OracleSettings, "oracle", orc)
    orders = data.get("fractional_orders", [])
    if not isinstance(orders, list) or any(not (0 < float(a) < 2) for a in orders):
        r.fail(("fractional_orders",), "fractional orders must lie in (0, 2)")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        r.fail(("seed",), "seed must be a nonnegative integer")
    return Scenario(datum=datum, rp=rp, kernel=kernel, solver=solver, T_final=float(T_final),
                    normalized=bool(data.get("normalized", True)), checks=tuple(checks),
                    tolerances=tol, pd_seeds=int(pd.get("seeds", 20)),
                    pd_samples=int(pd.get("samples", 16)), pd_radius=pd.get("radius"),
                    fractional_orders=tuple(float(a) for a in orders), study=study,
                    oracle=oracle, output=str(data.get("output", "out")), seed=seed)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return parse_scenario(text, str(p))
