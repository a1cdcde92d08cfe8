import csv
import json
import os
import subprocess
import sys

import pytest

from mcsdecoy import cli
from mcsdecoy.channel import ChannelParams
from mcsdecoy.keyrate import ProtocolConfig, evaluate_point
from mcsdecoy.photon_stats import McsSource, SqueezeParams, mcs_distribution, mcs_from_c_nu


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.reader(text.splitlines()))


def test_stats_mcs_cancels_two_photons(capsys):
    code, out, err = run(capsys, "stats", "--family", "mcs", "--c", "1", "--nu", "0.53")
    assert code == 0
    rows = rows_of(out)
    assert rows[0] == ["n", "P_n"]
    assert float(rows[3][1]) <= 1e-12 and rows[3][0] == "2"
    assert "mean photon number" in err


def test_stats_vacuum(capsys):
    code, out, _ = run(capsys, "stats", "--family", "coherent", "--mean", "0")
    assert code == 0
    assert rows_of(out) == [["n", "P_n"], ["0", "1"]]


def test_stats_matches_library(capsys):
    code, out, _ = run(capsys, "stats", "--family", "mcs", "--alpha", "0.5", "--zeta", "0.3", "--format", "json")
    assert code == 0
    data = json.loads(out)
    lib = mcs_distribution(McsSource(0.5, SqueezeParams(0.3)))
    assert len(data["rows"]) == len(lib)
    for row in data["rows"]:
        assert row["P_n"] == pytest.approx(lib[row["n"]], rel=1e-11, abs=1e-300)


def test_stats_max_n_pads(capsys):
    code, out, _ = run(capsys, "stats", "--family", "coherent", "--mean", "0", "--max-n", "3")
    assert [r[1] for r in rows_of(out)[1:]] == ["1", "0", "0", "0"]


@pytest.mark.parametrize(
    "argv",
    [
        ["stats", "--family", "mcs", "--c", "1"],
        ["stats", "--family", "coherent", "--mean", "0.1", "--nu", "0.2"],
        ["stats", "--mean", "0.1"],
        ["scan", "--family", "mcs", "--decoy-nu", "0.1", "--signal-nu", "0.5"],
        ["scan", "--decoy-mean", "0.6", "--signal-mean", "0.2"],
        ["bogus"],
        ["scan", "--lengths", "1:2"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.strip()


def test_domain_error_exit_1(capsys):
    code, _, err = run(capsys, "optimize", "--families", "coherent", "--protocol", "two_intensity", "--e-det", "0.5")
    assert code == 1
    assert err.startswith("mcsdecoy: error:") and len(err.strip().splitlines()) == 1


def test_scan_columns_and_round_trip(capsys, tmp_path):
    out = tmp_path / "scan.csv"
    code, _, _ = run(
        capsys, "scan", "--family", "mcs", "--c", "1", "--decoy-nu", "0.196", "--signal-nu", "0.53",
        "--lengths", "0:100:25", "--out", str(out),
    )
    assert code == 0
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rows = rows_of(raw.decode())
    assert rows[0] == cli.SCAN_COLUMNS
    assert len(rows) == 6
    pair = (mcs_from_c_nu(1, 0.196), mcs_from_c_nu(1, 0.53))
    for row in rows[1:]:
        L = float(row[0])
        pt = evaluate_point(pair, ChannelParams(), ProtocolConfig(), L)
        assert float(row[1]) == pytest.approx(pt.signal_obs.gain, rel=1e-11)
        assert float(row[4]) == pytest.approx(pt.estimate.s1_lower, rel=1e-11)
        assert float(row[7]) == pytest.approx(pt.rate, rel=1e-11)
        assert float(row[8]) == pytest.approx(pt.rate_clamped, rel=1e-11)
        assert float(row[3]) >= float(row[4])


def test_scan_never_secure_single_row(capsys):
    code, out, _ = run(
        capsys, "scan", "--decoy-mean", "0.2", "--signal-mean", "0.6", "--lengths", "0", "--e-det", "0.5",
    )
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 2
    assert float(rows[1][-1]) == 0


def test_scan_deterministic_bytes(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert cli.main(["scan", "--decoy-mean", "0.2", "--signal-mean", "0.6", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_scan_json_mirrors_csv(capsys):
    args = ["scan", "--decoy-mean", "0.1", "--signal-mean", "0.5", "--lengths", "0,50"]
    _, csv_out, _ = run(capsys, *args)
    _, json_out, _ = run(capsys, *args, "--format", "json")
    rows = rows_of(csv_out)
    data = json.loads(json_out)
    assert [list(d) for d in data] == [rows[0]] * 2
    for d, r in zip(data, rows[1:]):
        assert [d[k] for k in rows[0]] == [float(v) for v in r]


def test_bound_failure_leaves_empty_fields(capsys, monkeypatch):
    from mcsdecoy import bounds
    from mcsdecoy.errors import PremiseViolationError

    def refuse(*args):
        raise PremiseViolationError("forced")

    monkeypatch.setattr(bounds, "estimate_2int", refuse)
    code, out, _ = run(capsys, "scan", "--decoy-mean", "0.2", "--signal-mean", "0.6", "--lengths", "10")
    assert code == 0
    row = rows_of(out)[1]
    assert row[4] == "" and row[6] == ""
    assert float(row[7]) < 0 and float(row[8]) == 0


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# coherent pair\nfamily = coherent\ndecoy-mean = 0.2\nsignal_mean = 0.6\nlengths = 0,10\ne_det = 0.02\n")
    code, out, _ = run(capsys, "scan", "--config", str(cfg))
    assert code == 0
    assert len(rows_of(out)) == 3
    code, out2, _ = run(capsys, "scan", "--config", str(cfg), "--e-det", "0.0135")
    _, out3, _ = run(capsys, "scan", "--decoy-mean", "0.2", "--signal-mean", "0.6", "--lengths", "0,10")
    assert out2 == out3 != out


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "scan", "--config", str(cfg))
    assert code == 2 and "colour" in err


def test_failed_write_leaves_no_file(capsys, tmp_path):
    target = tmp_path / "missing" / "out.csv"
    code, _, err = run(capsys, "scan", "--decoy-mean", "0.2", "--signal-mean", "0.6", "--out", str(target))
    assert code == 1 and str(target) in err
    assert not target.exists()


def test_no_partial_file_on_domain_error(capsys, tmp_path):
    target = tmp_path / "opt.csv"
    code, _, _ = run(capsys, "optimize", "--families", "coherent", "--e-det", "0.5", "--out", str(target))
    assert code == 1
    assert os.listdir(tmp_path) == []


def test_optimize_self_comparison(capsys):
    code, out, _ = run(capsys, "optimize", "--families", "coherent,coherent", "--protocol", "two_intensity")
    assert code == 0
    rows = rows_of(out)
    assert rows[0] == cli.OPTIMIZE_COLUMNS
    assert [float(r[3]) for r in rows[1:]] == [0.0, 0.0]


def test_optimize_c1_gap_and_curves(capsys, tmp_path):
    curves = tmp_path / "curves.csv"
    code, out, _ = run(
        capsys, "optimize", "--families", "coherent,mcs:1", "--protocol", "two_intensity",
        "--lengths", "0:200:100", "--curves-out", str(curves),
    )
    assert code == 0
    gap = float(rows_of(out)[2][3])
    assert gap == pytest.approx(3, abs=2)
    crow = rows_of(curves.read_text())
    assert crow[0] == cli.CURVE_COLUMNS and len(crow) == 7


def test_sweep_single_value(capsys):
    code, out, _ = run(capsys, "sweep-c", "--c-grid", "1.0")
    assert code == 0
    rows = rows_of(out)
    assert rows[0] == cli.SWEEP_COLUMNS and len(rows) == 2
    assert rows[1][0] == "1"


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mcsdecoy", "stats", "--family", "coherent", "--mean", "0.1", "--max-n", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "n,P_n"


def test_parse_grid():
    assert cli.parse_grid("1:2:0.5") == [1.0, 1.5, 2.0]
    assert cli.parse_grid("1.0:5.0:0.1")[-1] == 5.0
    assert len(cli.parse_grid("1.0:5.0:0.1")) == 41
    assert cli.parse_grid("3, 4") == [3.0, 4.0]
