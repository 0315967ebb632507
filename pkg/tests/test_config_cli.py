import json
from pathlib import Path

import pytest

from inelastic_fourier.cli import main
from inelastic_fourier.config import ConfigError, load_scenario, parse_scenario

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
SMALL = """\
solver:
  mode: radial
  R_grid: 8.0
  M: 81
  R_eval: 7.0
  eta_radius: 4.0
  eta_radial: 16
  eta_angular: 11
  sphere_order: 8
  n_azimuth: 16
"""


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    sc = load_scenario(path)
    assert sc.T_final > 0 and sc.checks


def test_defaults_by_datum():
    sc = parse_scenario("datum: {kind: gaussian}\n")
    assert sc.solver.mode == "radial" and sc.rp.e == 0.8
    sc = parse_scenario("datum:\n  kind: discrete\n  weights: [0.5, 0.5]\n"
                        "  velocities: [[1, 0, 0], [-1, 0, 0]]\n")
    assert sc.solver.mode == "cube" and sc.solver.M == 37


@pytest.mark.parametrize("text,line,fragment", [
    ("datum: {kind: gaussian}\nbogus: 1\n", 2, "unknown option"),
    ("datum: {kind: gaussian}\nkernel:\n  gamma: 0.5\n", 3, "gamma"),
    ("datum: {kind: gaussian}\nchecks:\n  - invariants\n  - wizardry\n", 4, "unknown check"),
    ("datum: {kind: gaussian}\nsolver:\n  mode: radial\n  M: [1\n", 5, "cannot parse"),
    ("datum:\n  kind: unicorn\n", 2, "datum kind"),
    ("datum:\n  kind: discrete\n  weights: [0.5, 0.4]\n  velocities: [[0,0,0],[1,0,0]]\n", 3, "malformed"),
    ("datum:\n  kind: discrete\n  weights: [1]\n  velocities: [[0,0,0]]\nsolver:\n  mode: radial\n", 6,
     "cube"),
    ("datum: {kind: gaussian}\nrestitution: 1.5\n", 2, ""),
    ("datum: {kind: gaussian}\ntolerances:\n  mass: -1\n", 3, "nonnegative"),
    ("datum: {kind: gaussian}\nT_final: 0\n", 2, "T_final"),
    ("datum: {kind: gaussian}\ndatum: {kind: levy}\n", 2, "duplicate"),
])
def test_config_errors_carry_lines(text, line, fragment):
    with pytest.raises(ConfigError) as ei:
        parse_scenario(text)
    assert ei.value.line == line
    assert f"line {line}" in str(ei.value) and fragment in str(ei.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_scenario("/nonexistent/x.yaml")


def test_cli_run_pass(tmp_path):
    cfg = write(tmp_path, "datum: {kind: gaussian}\nrestitution: 0.5\nT_final: 0.3\n"
                          "checks: [invariants, energy, momentum]\n"
                          "tolerances: {energy_drop: 1.0e-4}\n" + SMALL)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "3", "--threads", "0"]) == 0
    for f in ("summary.json", "moments.csv", "moments.png", "radial.png", "terminal.chgr",
              "terminal_radial.csv", "convergence.jsonl"):
        assert (out / f).exists(), f
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "pass"
    assert {c["name"] for c in summary["checks"]} >= {"mass", "energy_monotone", "momentum_drift"}


def test_cli_check_failure(tmp_path):
    # requiring a 50% energy drop over a short horizon cannot be met
    cfg = write(tmp_path, "datum: {kind: gaussian}\nrestitution: 0.5\nT_final: 0.2\n"
                          "checks: [energy]\ntolerances: {energy_drop: 0.5}\n" + SMALL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_cli_nonconvergence(tmp_path):
    cfg = write(tmp_path, "datum: {kind: gaussian}\nT_final: 0.5\n" + SMALL +
                "  T: 0.5\n  max_iter: 2\n  tol: 1.0e-15\n  max_halvings: 0\n")
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 3
    assert json.loads((out / "summary.json").read_text())["status"] == "non-convergence"


def test_cli_config_errors(tmp_path, capsys):
    bad = write(tmp_path, "datum: {kind: gaussian}\nkernel:\n  s: 2.0\n")
    assert main(["run", "--config", bad]) == 2
    assert "line 3" in capsys.readouterr().err
    good = write(tmp_path, "datum: {kind: gaussian}\n" + SMALL, "g.yaml")
    assert main(["oracle", "--config", good, "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", good, "--threads", "-1"]) == 2
    assert main(["run", "--config", good, "--seed", "-1"]) == 2
    with pytest.raises(SystemExit):
        main(["explode", "--config", good])


def test_cli_suite_dirac(tmp_path):
    cfg = write(tmp_path, "datum: {kind: dirac}\nT_final: 0.2\n" + SMALL)
    out = tmp_path / "o"
    assert main(["suite", "--config", cfg, "--out", str(out)]) == 0
    names = {c["name"] for c in json.loads((out / "summary.json").read_text())["checks"]}
    assert {"stationary", "positive_definite", "energy_monotone", "energy_zero"} <= names
    suite = json.loads((out / "suite.json").read_text())["checks"]
    assert all(c["passed"] for c in suite)


def test_cli_study_outputs(tmp_path):
    cfg = write(tmp_path, "datum: {kind: gaussian}\nrestitution: 0.5\nT_final: 0.3\n"
                          "study: {axis: cutoff-n, levels: [4, 8, 16]}\n" + SMALL)
    out = tmp_path / "o"
    code = main(["study", "--config", cfg, "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text())
    assert code == (0 if summary["status"] == "pass" else 1)
    assert len(summary["differences"]) == 2
    assert (out / "study.csv").exists() and (out / "study.png").exists()
