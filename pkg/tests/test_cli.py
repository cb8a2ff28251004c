"""Command-line interface tests through the argparse entry point."""

import json
from pathlib import Path

import numpy as np
import pytest

from skynoma.cli import main


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(
        "m = 8\n"
        "l_cp = 2\n"
        "j_antennas = 2\n"
        "chip_rate = 1e6\n"
        "delta_a_chips = 0.9\n"
        "delta_t_chips = 0.0\n"
        "n_coh = 160\n"
        "n_a_train = 5\n"
        "n_t_train = 5\n"
        "snr_db = 10\n"
        "atr_db = 0\n"
        "detectors = wl-mmse-sic, l-mmse\n"
        "trials = 1\n"
        "batch_blocks = 64\n"
    )
    return path


class TestRun:
    def test_run_writes_results(self, fast_config, tmp_path):
        out = tmp_path / "results"
        rc = main(["run", "--config", str(fast_config), "--out", str(out), "--seed", "7"])
        assert rc == 0
        lines = (out / "results.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        state = json.loads((out / "results.json").read_text())
        assert state["trials_done"] == 1

    def test_csi_flag_override(self, fast_config, tmp_path, capsys):
        out = tmp_path / "results"
        main(["run", "--config", str(fast_config), "--out", str(out), "--csi", "exact"])
        rows = (out / "results.csv").read_text().strip().splitlines()[1:]
        assert all(",exact," in r for r in rows)


class TestScan:
    def test_scan_dumps_curves(self, tmp_path):
        cfg = tmp_path / "scan.cfg"
        cfg.write_text(
            "n_coh = 4096\nn_a_train = 5\nn_t_train = 5\ntrials = 1\n"
            "snr_db = 20\natr_db = 0\n"
        )
        out = tmp_path / "scans"
        rc = main(["scan", "--config", str(cfg), "--out", str(out), "--snr", "20"])
        assert rc == 0
        for name in ("doppler_objective.csv", "delay_objective_ray0.csv",
                     "delay_objective_ray1.csv"):
            lines = (out / name).read_text().strip().splitlines()
            assert lines[0] == "x,y"
            assert len(lines) > 100
            floats = [tuple(map(float, l.split(","))) for l in lines[1:4]]
            assert all(len(f) == 2 for f in floats)


class TestSelftest:
    def test_selftest_passes(self, capsys):
        rc = main(["selftest"])
        out = capsys.readouterr().out
        assert rc == 0
        assert out.count("PASS") == 5
        assert "FAIL" not in out


class TestTable:
    def test_table_shape(self, tmp_path, capsys):
        cfg = tmp_path / "table.cfg"
        cfg.write_text(
            "n_coh = 4096\nn_a_train = 10\nn_t_train = 10\ntrials = 1\n"
            "snr_db = 10\natr_db = 0\n"
        )
        out = tmp_path / "tables"
        rc = main([
            "table", "--config", str(cfg), "--out", str(out),
            "--which", "1", "--lengths", "5", "10", "--snr", "10",
        ])
        assert rc == 0
        lines = (out / "table1.csv").read_text().strip().splitlines()
        assert lines[0] == "n_a_train,ber_a,ber_t"
        assert len(lines) == 4   # header + exact + two sweep points
        printed = capsys.readouterr().out
        assert "exact" in printed
