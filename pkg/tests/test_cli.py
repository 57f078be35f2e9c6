import json
import os

import numpy as np
import pytest

from nvramsey.cli import main
from nvramsey.fileio import read_map, read_series

FLAT = """
sample: {width: 4, height: 3, beam_waist: 0, stress_amplitude: 0, transverse_amplitude: 0,
         rabi_gradient: 0}
run: {frames: 10}
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_flat(tmp_path):
    cfg = write(tmp_path, "c.yaml", FLAT)
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 0
    frames, rate, meta = read_series(tmp_path / "o" / "series.nvser")
    assert frames.shape == (10, 3, 4)
    assert meta["frame_rate"] == rate and rate > 1000
    cal = json.loads((tmp_path / "o" / "calibration.json").read_text())
    assert cal["basis"] == "DQ"


def test_simulate_byte_identical(tmp_path):
    cfg = write(tmp_path, "c.yaml", FLAT)
    main(["simulate", cfg, "--out", str(tmp_path / "a"), "--seed", "4"])
    main(["simulate", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
    main(["simulate", cfg, "--out", str(tmp_path / "c"), "--seed", "5"])
    for name in ("series.nvser", "series.nvser.json", "calibration.json", "slope.nvmap"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "series.nvser").read_bytes() != \
        (tmp_path / "c" / "series.nvser").read_bytes()


def test_invalid_table_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.yaml", """
protocol:
  basis: DQ
  phases_deg: [[[0, 0], [0, 0]], [[0, 0], [0, 180]]]
  weights: [1, -1]
""")
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    out = capsys.readouterr().out
    assert "valid: False" in out and "do not cancel" in out
    assert main(["validate", cfg]) == 2


def test_validate_good_table(tmp_path, capsys):
    cfg = write(tmp_path, "good.yaml", """
protocol:
  basis: DQ
  phases_deg: [[[10, 20], [10, 20]], [[0, 0], [0, 180]], [[0, 0], [180, 180]], [[0, 0], [180, 0]]]
  weights: [1, -1, 1, -1]
""")
    assert main(["validate", cfg]) == 0
    assert "valid: True" in capsys.readouterr().out


def test_user_errors(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "none.yaml")]) == 2
    cfg = write(tmp_path, "typo.yaml", "run: {framez: 3}\n")
    assert main(["simulate", cfg]) == 2
    assert "run.framez" in capsys.readouterr().err
    empty = write(tmp_path, "empty.nvser", "")
    assert main(["fit", empty]) == 2
    assert main(["bogus", empty]) == 2
    cfg = write(tmp_path, "late.yaml", "camera: {f_demod: 35000}\nrun: {tau: 1.2e-6, frames: 2}\n")
    assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "exceeds 1/f_demod" in capsys.readouterr().err


def test_sweep(tmp_path):
    cfg = write(tmp_path, "s.yaml", "sweep: {points: 41, range: 2.0e5}\n")
    assert main(["sweep", cfg, "--out", str(tmp_path / "o"), "--mode", "common", "--plot"]) == 0
    rep = json.loads((tmp_path / "o" / "sweep_report.json").read_text())
    s = rep["common"]["slopes"]
    assert abs(s["dq_4ramsey"]) < 1e-3 * abs(s["sq_2ramsey"])
    assert (tmp_path / "o" / "sweep_common.svg").exists()
    rows = (tmp_path / "o" / "sweep_common.csv").read_text().splitlines()
    assert rows[0] == "detuning_hz,sq_2ramsey,dq_2ramsey,dq_4ramsey" and len(rows) == 42
    assert not (tmp_path / "o" / "sweep_differential.csv").exists()


def test_sweep_differential_ordering(tmp_path):
    cfg = write(tmp_path, "s.yaml", "sweep: {points: 41, range: 2.0e5, mode: differential}\n")
    assert main(["sweep", cfg, "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "sweep_report.json").read_text())["differential"]["slopes"]
    assert abs(s["dq_4ramsey"]) > abs(s["sq_2ramsey"])


def test_fringe_fit_round_trip(tmp_path):
    cfg = write(tmp_path, "f.yaml", """
sample: {width: 6, height: 5}
protocol: {kind: sq_2ramsey}
run: {acquisition: fringe, frames_per_point: 64}
""")
    out = tmp_path / "o"
    assert main(["simulate", cfg, "--out", str(out)]) == 0
    assert main(["fit", str(out / "fringe.nvser"), "--out", str(tmp_path / "fit"), "--plot"]) == 0
    summary = json.loads((tmp_path / "fit" / "fit_summary.json").read_text())
    assert summary["converged"] == 30
    truth, _ = read_map(out / "truth" / "t2_star.nvmap")
    t2, meta = read_map(tmp_path / "fit" / "t2_star.nvmap")
    assert meta["units"] == "s"
    assert np.allclose(t2, truth, rtol=0.1)
    f0 = summary["parameters"]["f_0"]["median"]
    assert f0 == pytest.approx(3e6, rel=0.05)


def test_analyze_both_bases(tmp_path):
    for kind in ("sq_2ramsey", "dq_4ramsey"):
        cfg = write(tmp_path, f"{kind}.yaml",
                    f"sample: {{width: 5, height: 4}}\nprotocol: {{kind: {kind}}}\n"
                    "run: {frames: 300}\n")
        assert main(["simulate", cfg, "--out", str(tmp_path / kind)]) == 0
    cfg = write(tmp_path, "an.yaml", """
analyze: {series: dq_4ramsey/series.nvser, series_sq: sq_2ramsey/series.nvser}
run: {output: an}
""")
    assert main(["analyze", cfg]) == 0
    rep = json.loads((tmp_path / "an" / "sensitivity_report.json").read_text())
    assert rep["DQ"]["median"] < rep["SQ"]["median"]
    assert rep["improvement"]["fraction_above_one"] == 1.0
    assert os.path.exists(tmp_path / "an" / "allan_dq.csv")
    ratio, _ = read_map(tmp_path / "an" / "improvement.nvmap")
    assert ratio.shape == (4, 5)


def test_analyze_series_file_directly(tmp_path):
    cfg = write(tmp_path, "c.yaml", FLAT.replace("frames: 10", "frames: 200"))
    main(["simulate", cfg, "--out", str(tmp_path / "o")])
    assert main(["analyze", str(tmp_path / "o" / "series.nvser")]) == 0
    eta, _ = read_map(tmp_path / "o" / "out" / "eta_dq.nvmap")
    # flat grid: all pixels equal within shot-noise scatter
    assert np.std(eta) / np.mean(eta) < 0.15
