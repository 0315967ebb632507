"""Command-line front end: run, study, oracle and suite verbs."""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import report
from .charfn import dump_grid, export_radial_csv
from .config import ConfigError, Scenario, load_scenario
from .measure_oracle import (OracleKernels, OracleQuad, TestFunction,
                             crosscheck_time_derivative, gain_term_fourier_check)
from .moments import trace_grids
from .spectral_solver import (CollisionOperator, NonConvergence, jsonl_logger, path_grids,
                              path_times, solve)
from .suites import (kinematics_checks, pd_checks, pd_inequality_check, weight_delta_check,
                     weight_kappa_checks)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONV = 0, 1, 2, 3


def _operator(sc: Scenario, kernel=None, solver=None) -> CollisionOperator:
    solver = solver or sc.solver
    solver = dataclasses.replace(solver, seed=sc.seed)
    return CollisionOperator(kernel or sc.kernel, sc.rp, solver, normalized=sc.normalized)


def _pd_radius(sc: Scenario) -> float:
    return float(sc.pd_radius) if sc.pd_radius is not None else 0.25 * sc.solver.R_eval


def evaluate_checks(sc: Scenario, grids, trace, checks) -> list:
    tol = sc.tolerances
    out = []
    if "invariants" in checks:
        mass = max(abs(g.origin_value - 1.0) for g in grids)
        mod = max(g.max_modulus() for g in grids)
        herm = max(g.hermitian_error() for g in grids)
        out.append(report.verdict("mass", mass, tol["mass"], mass < tol["mass"]))
        out.append(report.verdict("modulus", mod, 1.0 + tol["modulus"], mod <= 1.0 + tol["modulus"]))
        out.append(report.verdict("hermitian", herm, tol["hermitian"], herm < tol["hermitian"]))
    if "stationary" in checks:
        dev = max(float(np.max(np.abs(g.values - 1.0))) for g in grids)
        out.append(report.verdict("stationary", dev, tol["stationary"], dev < tol["stationary"]))
    if "momentum" in checks:
        d = trace.momentum_drift()
        out.append(report.verdict("momentum_drift", d, tol["momentum_drift"],
                                  d < tol["momentum_drift"]))
    if "energy" in checks and bool(np.all(trace.energy_finite)):
        E = trace.energy
        if sc.rp.e < 1.0:
            inc = float(np.max(np.diff(E), initial=-np.inf))
            out.append(report.verdict("energy_monotone", inc, tol["energy_step"],
                                      inc <= tol["energy_step"]))
            if E[0] > 0:
                drop = float((E[0] - E[-1]) / E[0])
                out.append(report.verdict("energy_drop", drop, tol["energy_drop"],
                                          drop > tol["energy_drop"]))
            else:
                # a point mass at rest has nothing to dissipate
                dev = float(np.max(np.abs(E)))
                out.append(report.verdict("energy_zero", dev, tol["stationary"],
                                          dev < tol["stationary"]))
        else:
            rel = float(abs(E[-1] - E[0]) / max(abs(E[0]), 1e-300))
            out.append(report.verdict("elastic_energy", rel, tol["elastic_energy"],
                                      rel < tol["elastic_energy"]))
    if "positive_definite" in checks:
        out.append(pd_checks(grids[-1], sc.pd_seeds, sc.pd_samples, _pd_radius(sc),
                             tol["pd_factor"]))
    if "pd_inequalities" in checks:
        out.append(pd_inequality_check(grids[-1], sc.solver.alpha, 1000, sc.seed,
                                       _pd_radius(sc), tol["pd_inequality"]))
    if "fractional_moments" in checks:
        for a, vals in trace.fractional.items():
            sup = float(np.max(vals))
            out.append(report.verdict(f"moment_{a:g}_bounded", sup, "finite",
                                      bool(np.isfinite(sup))))
    return out


def _summary(out: Path, payload: dict) -> None:
    report.write_json(out / "summary.json", payload)


def run_scenario(sc: Scenario, out: Path, extra_checks=()) -> int:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    log = jsonl_logger(out / "convergence.jsonl")
    op = _operator(sc)
    phi0 = sc.initial_grid()
    try:
        paths = solve(phi0, sc.T_final, op, log=log)
    except NonConvergence as exc:
        log.close()
        _summary(out, {"status": "non-convergence", "message": str(exc),
                       "residual": exc.residual, "iterations": exc.iterations, "checks": []})
        return EXIT_NONCONV
    log.close()
    grids = path_grids(paths)
    times = path_times(paths)
    trace = trace_grids(times, grids, sc.fractional_orders)
    trace.to_csv(out / "moments.csv")
    dump_grid(grids[0], out / "initial.chgr")
    dump_grid(grids[-1], out / "terminal.chgr")
    export_radial_csv(grids[-1], out / "terminal_radial.csv")
    report.plot_trace(trace, out / "moments.png")
    report.plot_radial([grids[0], grids[-1]], ["t=0", f"t={times[-1]:g}"], out / "radial.png")
    checks = list(sc.checks) + [c for c in extra_checks if c not in sc.checks]
    verdicts = evaluate_checks(sc, grids, trace, checks)
    passed = all(v["passed"] for v in verdicts)
    _summary(out, {"status": "pass" if passed else "fail", "T_final": sc.T_final,
                   "intervals": len(paths), "iterations": [p.iterations for p in paths],
                   "A_tot": op.A_tot, "C_hat": op.C_hat, "wall_time": time.perf_counter() - t0,
                   "checks": verdicts})
    return EXIT_PASS if passed else EXIT_FAIL


def _study_variant(sc: Scenario, axis: str, level):
    if axis == "cutoff-n":
        return dataclasses.replace(sc, kernel=sc.kernel.with_n(float(level)), normalized=False)
    field = {"grid-M": "M", "sphere-order": "sphere_order", "zeta-nodes": "eta_radial",
             "time-m": "m"}[axis]
    return dataclasses.replace(sc, solver=dataclasses.replace(sc.solver, **{field: int(level)}))


def _compare(fine, coarse, radius) -> float:
    """sup |fine - coarse| on the coarse nodes inside ``radius``."""
    if coarse.kind == "radial":
        k = coarse.axis[coarse.axis <= radius]
        pts = np.stack([k, np.zeros_like(k), np.zeros_like(k)], axis=-1)
        vals = coarse.values[: k.size]
    else:
        P = coarse.node_points().reshape(-1, 3)
        m = np.linalg.norm(P, axis=1) <= radius
        pts, vals = P[m], coarse.values.reshape(-1)[m]
    return float(np.max(np.abs(fine(pts) - vals)))


def run_convergence_study(sc: Scenario, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    axis, levels = sc.study.axis, list(sc.study.levels)
    rows, terms = [], []
    for lev in levels:
        v = _study_variant(sc, axis, lev)
        op = _operator(v)
        try:
            paths = solve(v.initial_grid(), v.T_final, op)
        except NonConvergence as exc:
            _summary(out, {"status": "non-convergence", "axis": axis, "level": lev,
                           "message": str(exc), "checks": []})
            return EXIT_NONCONV
        grids = path_grids(paths)
        tr = trace_grids(path_times(paths), grids)
        diff = _compare(grids[-1], terms[-1], 0.5 * v.solver.R_eval) if terms else float("nan")
        terms.append(grids[-1])
        rows.append([lev, diff, tr.mass_error(), tr.momentum_drift(), float(tr.energy[-1])])
    report.write_table(out / "study.csv", ["level", "sup_diff_prev", "mass_error",
                                           "momentum_drift", "energy_T"], rows)
    diffs = [r[1] for r in rows[1:]]
    if diffs:
        report.plot_study(levels, diffs, axis, out / "study.png")
    verdicts = []
    if len(diffs) >= 2:
        ratio = diffs[0] / max(diffs[-1], 1e-300)
        verdicts.append(report.verdict("shrinking_differences", ratio, 1.5, ratio >= 1.5))
    passed = all(v["passed"] for v in verdicts)
    _summary(out, {"status": "pass" if passed else "fail", "axis": axis, "levels": levels,
                   "differences": diffs, "checks": verdicts})
    return EXIT_PASS if passed else EXIT_FAIL


def run_oracle_suite(sc: Scenario, out: Path) -> int:
    if sc.datum.kind != "discrete":
        raise ConfigError("the oracle suite needs a discrete datum")
    out.mkdir(parents=True, exist_ok=True)
    o = sc.oracle
    F = sc.datum.measure()
    kern = OracleKernels.from_config(sc.kernel, normalized=sc.normalized)
    quad = OracleQuad(o.polar_order, o.n_azimuth, o.zeta_radius, o.zeta_nodes)
    rng = np.random.default_rng(sc.seed)
    gains = []
    for _ in range(o.xi_count):
        xi = rng.normal(size=3) * o.xi_scale
        a = gain_term_fourier_check(F, xi, kern, sc.kernel, sc.rp, quad)
        b = gain_term_fourier_check(F, xi, kern, sc.kernel, sc.rp, quad.refined())
        gains.append((xi, a, b))
    tol = sc.tolerances
    worst = max(g[1].gap for g in gains)
    refined_ok = all(g[2].gap <= g[1].gap for g in gains)
    verdicts = [report.verdict("gain_identity_gap", worst, tol["gain_gap"], worst < tol["gain_gap"]),
                report.verdict("gain_gap_refines", refined_ok, True, refined_ok)]
    solver = sc.solver if sc.solver.mode == "cube" else dataclasses.replace(sc.solver, mode="cube")
    op = _operator(sc, solver=solver)
    psis = [TestFunction.constant(), TestFunction.coordinate(0), TestFunction.coordinate(1),
            TestFunction.coordinate(2), TestFunction.energy()]
    cross = crosscheck_time_derivative(F, psis, op, dts=o.dts, kernels=kern, quad=quad,
                                       eta_radius=o.eta_radius)
    for c in cross:
        if c.tag == "energy":
            verdicts.append(report.verdict("crosscheck_energy", c.gap, tol["crosscheck_gap"],
                                           c.gap < tol["crosscheck_gap"]))
        else:
            dev = abs(c.fourier - c.weak)
            verdicts.append(report.verdict(f"crosscheck_{c.tag}", dev, 1e-6, dev < 1e-6))
    report.plot_gaps([g[1].gap for g in gains], out / "gain_gaps.png")
    payload = {
        "status": "pass" if all(v["passed"] for v in verdicts) else "fail",
        "gain_checks": [{"xi": g[0], "lhs": g[1].lhs, "rhs": g[1].rhs, "gap": g[1].gap,
                         "gap_refined": g[2].gap} for g in gains],
        "crosscheck": [dataclasses.asdict(c) for c in cross],
        "checks": verdicts,
    }
    report.write_json(out / "oracle.json", payload)
    _summary(out, payload)
    return EXIT_PASS if payload["status"] == "pass" else EXIT_FAIL


def run_suite(sc: Scenario, out: Path) -> int:
    """Scenario run with every applicable check plus the sampled identity suites."""
    extra = ["invariants", "momentum", "positive_definite", "pd_inequalities"]
    if sc.datum.kind != "levy":
        extra.append("energy")
    if sc.datum.kind == "dirac":
        extra.append("stationary")
    if sc.fractional_orders:
        extra.append("fractional_moments")
    code = run_scenario(sc, out, extra)
    static = kinematics_checks(seed=sc.seed) + [weight_delta_check(seed=sc.seed)]
    static += weight_kappa_checks()
    static.append(pd_checks(sc.initial_grid(), sc.pd_seeds, sc.pd_samples, _pd_radius(sc),
                            sc.tolerances["pd_factor"]))
    static[-1]["name"] = "initial_positive_definite"
    report.write_json(out / "suite.json", {"checks": static})
    if code != EXIT_PASS:
        return code
    return EXIT_PASS if all(v["passed"] for v in static) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inelastic-fourier",
                                description="Fourier-side solver and checks for the "
                                            "inelastic Boltzmann equation.")
    p.add_argument("verb", choices=("run", "study", "oracle", "suite"))
    p.add_argument("--config", required=True, metavar="PATH", help="YAML scenario file")
    p.add_argument("--out", metavar="DIR", help="output directory (default from config)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--threads", type=int, default=0, help="numba threads (0 = auto)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads:
        import numba
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        sc = load_scenario(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be a nonnegative integer")
            sc = dataclasses.replace(sc, seed=args.seed)
        out = Path(args.out or sc.output)
        verb = {"run": run_scenario, "study": run_convergence_study,
                "oracle": run_oracle_suite, "suite": run_suite}[args.verb]
        code = verb(sc, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = {EXIT_PASS: "pass", EXIT_FAIL: "check failure",
              EXIT_NONCONV: "non-convergence"}[code]
    print(f"{args.verb}: {status} ({out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
