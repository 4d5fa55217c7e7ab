import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from sqzsim.cli import main, run, sweep
from sqzsim.config import load_config, parse_config
from sqzsim.inference import forward_observables, operating_chain, MeasurementRecord

COMMANDS = ["simulate", "scan", "sweep", "fit", "check"]


def invoke(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


SWEEP_PUMP = """
mode = "vacuum_squeeze"
chain.opa.kappa = 1.78
chain.opa.delta = 0.62
pump.fundamental_power = 0.8
pump.shg_output = 0.11
pump.pump_into_wg2 = 0.06
sweep.parameter = "chain.pump_power"
sweep.start = 0.0
sweep.stop = 0.06
sweep.n_points = 7
"""


def test_simulate_vacuum_report(capsys, data_dir):
    code, out, err = invoke(capsys, "simulate", data_dir / "paper.cfg")
    assert code == 0, err
    (row,) = rows(out)
    assert list(row) == ["squeeze_db", "antisqueeze_db", "output_power_w", "lock_phase", "gain_max", "gain_min"]
    assert row["lock_phase"] == "nan" and float(row["output_power_w"]) == 0.0
    assert out.splitlines()[1].split(",")[0] == f"{float(row['squeeze_db']):.9e}"


def test_reference_cfg_carries_the_fitted_point(data_dir, measured_fit):
    cfg = load_config(data_dir / "paper.cfg")
    expected = forward_observables(measured_fit.params, operating_chain(MeasurementRecord()))
    vac = run(cfg).rows[0]
    bright = run(cfg.with_overrides(mode="bright_squeeze")).rows[0]
    assert np.isclose(vac[0], expected["vac_squeeze_db"], atol=1e-6)
    assert np.isclose(bright[0], expected["bsl_squeeze_db"], atol=1e-6)
    assert np.isclose(bright[2], expected["bsl_out_w"], rtol=1e-6)


def test_bright_report_locks_at_deamplification(capsys, data_dir):
    code, out, _ = invoke(capsys, "simulate", data_dir / "bright.cfg")
    (row,) = rows(out)
    assert code == 0
    assert float(row["squeeze_db"]) < 0 < float(row["antisqueeze_db"])
    assert 0 <= float(row["lock_phase"]) < np.pi
    assert float(row["output_power_w"]) > 0


def test_gain_scan_without_pump_is_flat(capsys, tmp_path):
    path = write(tmp_path, 'mode = "gain_scan"\nchain.pump_power = 0\nchain.opa.kappa = 1.8\nscan.n_samples = 50\n')
    code, out, _ = invoke(capsys, "simulate", path)
    table = rows(out)
    assert code == 0 and len(table) == 50
    assert all(float(r["gain"]) == 1.0 for r in table)


def test_sweep_pump_monotone_gain(capsys, tmp_path):
    code, out, err = invoke(capsys, "sweep", write(tmp_path, SWEEP_PUMP))
    assert code == 0, err
    table = rows(out)
    assert list(table[0])[0] == "chain.pump_power" and len(table) == 7
    gains = [float(r["gain_max"]) for r in table]
    assert np.all(np.diff(gains) >= 0)


def test_sweep_detector_loss_degrades_squeezing():
    cfg = parse_config(
        'mode = "vacuum_squeeze"\nchain.opa.kappa = 1.78\nsweep.parameter = "chain.eta_detector"\n'
        "sweep.start = 1.0\nsweep.stop = 0.5\nsweep.n_points = 6\n"
    )
    squeeze = [row[1] for row in sweep(cfg).rows]
    assert np.all(np.diff(squeeze) > 0) and squeeze[-1] < 0


def test_degenerate_sweep_equals_run():
    cfg = parse_config(
        'mode = "bright_squeeze"\nchain.opa.kappa = 1.78\nchain.phase_jitter_rms = 0.3\n'
        'sweep.parameter = "chain.eta_fiber"\nsweep.start = 0.74\nsweep.stop = 0.74\nsweep.n_points = 2\n'
    )
    single = run(cfg).rows[0]
    for row in sweep(cfg).rows:
        assert row[1:] == single


def test_scan_vacuum_trace(capsys, data_dir):
    code, out, _ = invoke(capsys, "scan", data_dir / "paper.cfg")
    table = rows(out)
    assert code == 0 and list(table[0]) == ["time_s", "noise_db", "dc_arb"]
    noise = np.array([float(r["noise_db"]) for r in table])
    report = run(load_config(data_dir / "paper.cfg")).rows[0]
    assert noise.min() >= report[0] - 1e-9 and noise.max() <= report[1] + 1e-9


def test_json_mirrors_csv(capsys, data_dir):
    _, csv_out, _ = invoke(capsys, "simulate", data_dir / "bright.cfg")
    _, json_out, _ = invoke(capsys, "simulate", data_dir / "bright.cfg", "--format", "json")
    (c,) = rows(csv_out)
    (j,) = json.loads(json_out)
    assert list(c) == list(j)
    for key in c:
        assert float(c[key]) == j[key]
    _, vac_json, _ = invoke(capsys, "simulate", data_dir / "paper.cfg", "--format", "json")
    assert json.loads(vac_json)[0]["lock_phase"] is None


def test_fit_command_writes_residuals_and_document(capsys, data_dir, tmp_path):
    doc = tmp_path / "fit.txt"
    code, out, err = invoke(capsys, "fit", data_dir / "fit.cfg", "--doc", doc)
    assert code == 0
    table = {r["observable"]: r for r in rows(out)}
    assert float(table["gain_max"]["normalized_residual"]) < -1 and table["gain_max"]["flag"] == "1"
    assert "fit.converged = true" in doc.read_text()
    assert "residuals above tolerance" in err


def test_check_flags_weak_lo(capsys, tmp_path):
    path = write(tmp_path, 'mode = "bright_squeeze"\nchain.lo_power = 1e-4\n')
    code, out, err = invoke(capsys, "check", path)
    assert code == 1
    assert any(r["check"] == "lo_signal_ratio" and r["ok"] == "0" for r in rows(out))
    assert json.loads(err.strip())["error"] == "check"


@pytest.mark.parametrize(
    "text, code, kind",
    [
        ("", 2, "config"),
        ('mode = "vacuum_squeeze"\nchain.eta_fiber = 1.2\n', 2, "config"),
        ('mode = "vacuum_squeeze"\nbad line\n', 2, "config"),
        ('mode = "vacuum_squeeze"\n', 1, "runtime"),  # sweep without a sweep section
        ('mode = "bright_squeeze"\nchain.lo_power = 1e-4\n', 1, "lo_dominance"),
    ],
)
def test_error_records(capsys, tmp_path, text, code, kind):
    command = "sweep" if code == 1 and kind == "runtime" else "simulate"
    got, out, err = invoke(capsys, command, write(tmp_path, text))
    assert got == code and out == ""
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["error"] == kind


def test_missing_file_and_bad_arguments(capsys, tmp_path):
    code, _, err = invoke(capsys, "simulate", tmp_path / "absent.cfg")
    assert code == 2 and json.loads(err)["error"] == "io"
    code = main(["frobnicate"])
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert code == 2 and json.loads(err)["error"] == "usage"


@pytest.mark.parametrize("command", COMMANDS)
def test_commands_are_deterministic(capsys, data_dir, tmp_path, command):
    cfg = {
        "simulate": data_dir / "bright.cfg",
        "scan": data_dir / "bright.cfg",
        "sweep": write(tmp_path, SWEEP_PUMP),
        "fit": data_dir / "fit.cfg",
        "check": data_dir / "paper.cfg",
    }[command]
    outputs = []
    for k in range(2):
        out = tmp_path / f"{command}{k}.csv"
        assert main([command, str(cfg), "--seed", "42", "--out", str(out)]) == 0
        outputs.append(out.read_bytes())
    capsys.readouterr()
    assert outputs[0] == outputs[1] and outputs[0]


def test_seed_changes_jittered_scan(capsys, data_dir):
    _, a, _ = invoke(capsys, "scan", data_dir / "bright.cfg", "--seed", "1")
    _, b, _ = invoke(capsys, "scan", data_dir / "bright.cfg", "--seed", "2")
    assert a != b


def test_module_entry_point(data_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "sqzsim", "check", str(data_dir / "ideal.cfg")],
        capture_output=True,
        text=True,
        env={"SQZSIM_LOG": "ERROR", "PATH": ""},
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("check,value,ok")
