import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kramerslab import cli
from kramerslab.records import read_csv

QUARTIC = {"name": "quartic1d", "parameters": {}}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(path)


def _config(workflow, params, potential=QUARTIC, **extra):
    d = {"format_version": "1", "workflow": workflow, "params": params}
    if potential is not None:
        d["potential"] = potential
    d.update(extra)
    return d


def _diagnostic(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def _run(tmp_path, cfg, out="out", argv=()):
    code = cli.main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / out), *argv])
    return code, tmp_path / out


# --------------------------------------------------------------- workflows

def test_predict_quartic(tmp_path):
    code, out = _run(tmp_path, _config("predict", {"eps": 0.1}))
    assert code == 0
    pred = json.loads((out / "prediction.json").read_text())["prediction"]
    assert pred["exponent"] == pytest.approx(0.25, rel=1e-12)
    assert pred["prefactor"] == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["workflow"] == "predict"
    assert manifest["outputs"] == ["prediction.json"]
    assert manifest["tool"]["name"] == "kramerslab" and manifest["wall_time_s"] >= 0


def test_predict_tiny_noise_keeps_log_time(tmp_path):
    code, out = _run(tmp_path, _config("predict", {"eps": 1e-4}))
    assert code == 0
    rec = json.loads((out / "prediction.json").read_text())
    assert rec["mean_time"] is None
    assert rec["log_mean_time"] == pytest.approx(math.log(math.pi * math.sqrt(2)) + 2500)


def test_analyze_threewell(tmp_path):
    code, out = _run(tmp_path, _config("analyze", {"box": [[-3, 3]]},
                                       potential={"name": "threewell1d", "parameters": {}}))
    assert code == 0
    rec = json.loads((out / "analyze.json").read_text())
    assert [round(x[0], 6) for x in rec["hierarchy"]["order"]] == [2.2, -2.0, 0.0]
    _, cols = read_csv(out / "critical_points.csv")
    assert sorted(np.round(cols["x0"], 6).tolist()) == [-2.0, -1.0, 0.0, 1.0, 2.2]


def test_analyze_symmetric_wells_reports_no_hierarchy(tmp_path):
    code, out = _run(tmp_path, _config("analyze", {"box": [[-2, 2]]}))
    assert code == 0
    assert "error" in json.loads((out / "analyze.json").read_text())["hierarchy"]


def test_committor_workflow(tmp_path):
    params = {"eps": 0.1, "h": 1 / 64, "box": [[-1, 1]],
              "A": {"kind": "halfspace", "radius": -1.0, "upper": False},
              "B": {"kind": "halfspace", "radius": 1.0, "upper": True}}
    code, out = _run(tmp_path, _config("committor", params))
    assert code == 0
    _, cols = read_csv(out / "committor.csv")
    assert cols["q"][0] == 1.0 and cols["q"][-1] == 0.0
    meta = json.loads((out / "committor.f64.json").read_text())
    assert np.fromfile(out / "committor.f64", dtype="<f8").size == meta["shape"][0]


def test_action_workflow(tmp_path):
    code, out = _run(tmp_path, _config("action", {"start": [-1.0], "end": [0.0]}))
    assert code == 0
    assert json.loads((out / "action.json").read_text())["action"] == pytest.approx(0.5, rel=0.02)


def test_spde_workflow(tmp_path):
    code, out = _run(tmp_path, _config("spde", {"L": 1.0, "N": 32, "eps": 1e-6}, potential=None))
    assert code == 0
    rec = json.loads((out / "spde.json").read_text())
    assert rec["prefactor_bifurcation"] == pytest.approx(rec["prefactor"], rel=1e-3)
    assert rec["barrier"] == pytest.approx(0.25, rel=1e-12)


def test_simulate_workflow_and_trajectory(tmp_path):
    params = {"eps": 0.3, "dt": 1e-3, "n": 20, "x0": [-1.0], "target": {"center": [1.0], "radius": 0.1},
              "max_time": 500.0, "trajectory_time": 1.0}
    code, out = _run(tmp_path, _config("simulate", params, seed=11))
    assert code == 0
    meta = json.loads((out / "trajectory.f64.json").read_text())
    traj = np.fromfile(out / "trajectory.f64", dtype="<f8").reshape(meta["shape"])
    assert traj.shape == (1001, 1) and traj[0, 0] == -1.0
    header, cols = read_csv(out / "hitting_times.csv")
    assert header == ["replica", "time", "censored", "aborted"] and len(cols["time"]) == 20


def test_validate_table(tmp_path):
    params = {"eps": [0.3], "n": 100, "h": 1 / 64}
    code, out = _run(tmp_path, _config("validate", params, seed=5))
    assert code == 0
    (row,) = json.loads((out / "validate.json").read_text())["table"]
    for key in ("mc_mean", "quadrature", "grid", "kramers"):
        assert row[key] > 0
    assert abs(row["mc_deviation_se"]) < 4
    assert row["grid"] == pytest.approx(row["quadrature"], rel=0.05)


# ------------------------------------------------------------ error contract

def test_malformed_json_is_parse_error(tmp_path, capsys):
    code = cli.main(["run", "--config", _write(tmp_path, "{not json"), "--out", str(tmp_path / "o")])
    assert code == 2
    diag = _diagnostic(capsys)
    assert diag["kind"] == "parse" and diag["exit_code"] == 2
    assert not (tmp_path / "o").exists()


def test_missing_config_is_parse_error(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    assert _diagnostic(capsys)["kind"] == "parse"


def test_non_integer_seed_flag_is_parse_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--config", _write(tmp_path, _config("predict", {"eps": 0.1})), "--seed", "abc"])
    assert exc.value.code == 2
    assert _diagnostic(capsys)["kind"] == "parse"


@pytest.mark.parametrize("cfg", [
    _config("predict", {"eps": 0.1, "bogus": 1}),
    _config("predict", {}),
    _config("predict", {"eps": -0.1}),
    _config("predict", {"eps": 0.1}, potential={"name": "nope", "parameters": {}}),
    _config("teleport", {}),
    dict(_config("predict", {"eps": 0.1}), format_version="99"),
    _config("predict", {"eps": 0.1}, seed=-1),
    _config("predict", {"eps": 0.1}, seed=2 ** 64),
])
def test_validation_errors(tmp_path, capsys, cfg):
    code, out = _run(tmp_path, cfg)
    assert code == 3
    assert _diagnostic(capsys)["kind"] == "validation"
    assert not out.exists()


def test_numerical_failure_leaves_no_outputs(tmp_path, capsys):
    params = {"eps": 0.05, "dt": 1e-3, "n": 4, "x0": [-1.0], "target": {"center": [1.0], "radius": 0.1},
              "max_time": 0.2}
    code, out = _run(tmp_path, _config("simulate", params))
    assert code == 4
    diag = _diagnostic(capsys)
    assert diag["kind"] == "numerical" and diag["error"] == "SimulationError"
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()] == ["cfg.json"]


def test_seed_flag_overrides_config(tmp_path):
    code, out = _run(tmp_path, _config("predict", {"eps": 0.1}, seed=3), argv=["--seed", "17"])
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 17


def test_output_from_config(tmp_path):
    cfg = _config("predict", {"eps": 0.1}, output=str(tmp_path / "from_cfg"))
    assert cli.main(["run", "--config", _write(tmp_path, cfg)]) == 0
    assert (tmp_path / "from_cfg" / "prediction.json").exists()


# ---------------------------------------------------------- reproducibility

def _tree(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_reruns_byte_identical_across_threads(tmp_path):
    params = {"eps": 0.3, "dt": 1e-3, "n": 24, "x0": [-1.0], "target": {"center": [1.0], "radius": 0.1},
              "max_time": 500.0}
    cfg = _config("simulate", params, seed=99)
    _, a = _run(tmp_path, cfg, "a")
    _, b = _run(tmp_path, cfg, "b")
    _, c = _run(tmp_path, cfg, "c", argv=["--threads", "3"])
    assert _tree(a) == _tree(b) == _tree(c)
    _, d = _run(tmp_path, cfg, "d", argv=["--seed", "100"])
    assert _tree(d) != _tree(a)


def test_json_outputs_round_trip(tmp_path):
    cfg = _config("cycling", {"period": 1.0, "lyapunov": 2.0, "kramers_time": 5.0, "eps": 0.05, "samples": 2000,
                              "bins": 40}, potential=None, seed=1)
    _, out = _run(tmp_path, cfg)
    for f in out.glob("*.json"):
        text = f.read_text()
        assert json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n" == text


# ------------------------------------------------------------------ report

def test_report_pitchfork_sweep_scales_like_quarter_power(tmp_path):
    sweep = {"lambda1": -1.0, "C4": 1.0, "det_min": 1.0, "others": [2.0]}
    mins = []
    for eps in (1e-4, 16e-4):
        _, out = _run(tmp_path, _config("predict", {"eps": eps, "pitchfork_sweep": sweep}), f"s{eps}")
        assert cli.main(["report", str(out)]) == 0
        data = np.loadtxt(out / "pitchfork_prefactor.dat")
        assert data.shape == (201, 2)
        assert (out / "pitchfork_prefactor.png").stat().st_size > 0
        i = int(np.argmin(data[:, 1]))
        assert abs(data[i, 0]) <= 0.1
        mins.append(data[i, 1])
    assert mins[0] / mins[1] == pytest.approx(0.5, rel=0.02)


def test_report_cycling_density_periodic(tmp_path):
    cfg = _config("cycling", {"period": 1.0, "lyapunov": 2.0, "kramers_time": 20.0, "eps": 0.05,
                              "points": 4001}, potential=None)
    _, out = _run(tmp_path, cfg)
    text = cli.report(str(out), plots=False)
    assert "curves: cycling_density" in text
    assert not (out / "cycling_density.png").exists()
    theta, p = np.loadtxt(out / "cycling_density.dat", unpack=True)
    peaks = theta[1:-1][(p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])]
    lam_t = json.loads((out / "cycling.json").read_text())["lambda_t"]
    assert len(peaks) >= 5
    assert np.diff(peaks)[2:] == pytest.approx(lam_t, abs=2 * (theta[1] - theta[0]))


def test_report_separate_destination(tmp_path):
    _, out = _run(tmp_path, _config("analyze", {"box": [[-2, 2]]}))
    dest = tmp_path / "rep"
    assert cli.main(["report", str(out), "--out", str(dest), "--no-plots"]) == 0
    assert (dest / "potential.dat").exists() and (dest / "summary.txt").exists()
    assert not (out / "summary.txt").exists()


def test_report_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert cli.main(["report", str(tmp_path / "empty")]) == 3
    assert _diagnostic(capsys)["kind"] == "validation"


def test_report_missing_artifact(tmp_path, capsys):
    _, out = _run(tmp_path, _config("predict", {"eps": 0.1}))
    (out / "prediction.json").unlink()
    assert cli.main(["report", str(out)]) == 3
    assert "prediction.json" in _diagnostic(capsys)["message"]


def test_console_entry_point(tmp_path):
    path = _write(tmp_path, _config("predict", {"eps": 0.1}))
    r = subprocess.run([sys.executable, "-m", "kramerslab.cli", "run", "--config", path, "--out",
                        str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip().endswith("manifest.json")
