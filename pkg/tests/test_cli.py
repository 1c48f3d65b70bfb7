import json
import math
import subprocess
import sys

import numpy as np
import pytest

from tamedns.cli import format_cost, main
from tamedns.io import read_energy_csv, read_field, write_field
from tamedns.spectral import SpectralField, TorusGrid


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


ZERO_NOISE = {"weights": [1.0]}


class TestCost:
    def test_format(self):
        assert format_cost(0.0) == "0"
        assert format_cost(2 * math.log(2) - 1) == "0.386294361120"

    def test_unit_control(self, tmp_path, capsys):
        f = tmp_path / "g.json"
        f.write_text('{"time_grid": [0, 1], "marks": 1, "values": [[1.0]]}')
        assert main(["cost", str(f)]) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_two(self, tmp_path, capsys):
        f = tmp_path / "g.json"
        f.write_text('{"time_grid": [0, 1], "marks": 1, "values": [[2.0]]}')
        assert main(["cost", str(f), "--weights", "1", "--T", "1"]) == 0
        assert capsys.readouterr().out.strip() == "0.386294361120"

    def test_negative_cell(self, tmp_path, capsys):
        f = tmp_path / "g.json"
        f.write_text('{"time_grid": [0, 1], "marks": 2,\n "values": [[1.0, -2.0]]}')
        assert main(["cost", str(f)]) == 2
        err = capsys.readouterr().err
        assert "interval 0, mark 1" in err and ":2:" in err

    def test_parse_error(self, tmp_path, capsys):
        f = tmp_path / "g.json"
        f.write_text('{"time_grid": [0, 1]\n "marks": 1}')
        assert main(["cost", str(f)]) == 2
        assert ":2:2" in capsys.readouterr().err

    def test_weight_count(self, tmp_path):
        f = tmp_path / "g.json"
        f.write_text('{"time_grid": [0, 1], "marks": 2, "values": [[1.0, 1.0]]}')
        assert main(["cost", str(f), "--weights", "1"]) == 2


class TestSkeleton:
    def test_zero_preset(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "zero"}}, "solver": {"dt": 0.01, "T": 0.1}})
        assert main(["skeleton", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        e = read_energy_csv(tmp_path / "o" / "energy.csv")
        assert np.all(e["H1_sq"] == 0) and np.all(e["cum_H2_sq"] == 0)
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_shear_closed_form(self, tmp_path):
        a, T = 0.8, 0.1
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "shear", "a": a}}, "solver": {"dt": 1e-3, "T": T}})
        assert main(["skeleton", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        expect = a**2 / 2 * (1 + 4 * math.pi**2) * math.exp(-8 * math.pi**2 * T)
        assert abs(math.sqrt(s["final_h1_sq"]) - math.sqrt(expect)) <= 1e-6

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "random", "scale": 2.0}},
                                   "noise": {"weights": [1.0], "scales": [0.5], "fields": [{"amplitude": 0.5}]},
                                   "control": {"constant": 2.0}, "solver": {"dt": 0.01, "T": 0.05, "snapshot_stride": 2}})
        for d in ("a", "b"):
            assert main(["skeleton", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        assert a == b and "snapshots/u_00000.sfld" in a

    def test_manifest_lists_digests(self, tmp_path):
        cfg = write_cfg(tmp_path, {"solver": {"dt": 0.01, "T": 0.02}})
        main(["skeleton", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "4"])
        m = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert m["command"] == "skeleton" and m["seeds"]["master"] == 4
        assert set(m["files"]) >= {"energy.csv", "events.jsonl", "summary.json"}
        assert m["input_hash"].startswith("sha256:")

    def test_file_preset(self, tmp_path):
        g = TorusGrid(16)
        _, x2, _ = g.physical_coords()
        z = np.zeros_like(x2)
        write_field(tmp_path / "u0.sfld", SpectralField.from_physical(g, np.stack([0.5 * np.sin(2 * np.pi * x2), z, z])))
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "file", "path": "u0.sfld"}},
                                   "solver": {"dt": 0.01, "T": 0.02}})
        assert main(["skeleton", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        u, h = read_field(tmp_path / "o" / "snapshots" / "u_00000.sfld")
        assert h["t"] == 0.0

    def test_solver_failure_exit(self, tmp_path):
        g = TorusGrid(16)
        write_field(tmp_path / "bad.sfld", SpectralField(np.full((3,) + g.spectral_shape, np.nan + 0j), g))
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "file", "path": "bad.sfld"}},
                                   "solver": {"dt": 0.01, "T": 0.02}})
        assert main(["skeleton", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


class TestValidation:
    @pytest.mark.parametrize("cfg", [
        {"experiment": {"replicas": 0}},
        {"problem": {"n": 7}},
        {"solver": {"dt": 0.3, "T": 1.0}},
        {"noise": {"weights": [1.0, 1.0], "scales": [0.1]}},
        {"bogus": 1},
        {"problem": {"u0": {"preset": "spiral"}}},
        {"experiment": {"eps_ladder": [0.1, 0.2]}},
        {"control": {"constant": 1.0}, "noise": {"weights": [-1.0]}},
    ])
    def test_rejected_without_outputs(self, tmp_path, cfg, capsys):
        p = write_cfg(tmp_path, cfg)
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(p), "--out", str(out)]) == 2
        assert not out.exists()
        assert "error" in capsys.readouterr().err

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text('{"seed": 1,}')
        assert main(["skeleton", "--config", str(p)]) == 2
        assert "c.json:1:" in capsys.readouterr().err

    def test_missing_control_file(self, tmp_path):
        p = write_cfg(tmp_path, {"control": {"file": "nothere.json"}, "solver": {"dt": 0.01, "T": 0.02}})
        assert main(["skeleton", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_control_horizon_mismatch(self, tmp_path):
        (tmp_path / "g.json").write_text('{"time_grid": [0, 1], "marks": 1, "values": [[1.0]]}')
        p = write_cfg(tmp_path, {"control": {"file": "g.json"}, "solver": {"dt": 0.01, "T": 0.02}})
        assert main(["skeleton", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_noise_needs_positive_eps(self, tmp_path):
        p = write_cfg(tmp_path, {"solver": {"dt": 0.01, "T": 0.02, "eps": 0.0}})
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


ENSEMBLE = {
    "problem": {"u0": {"preset": "random", "scale": 1.0}},
    "noise": {"weights": [1.0, 0.5], "scales": [0.3, 0.0], "fields": [None, {"amplitude": 0.5}]},
    "solver": {"dt": 0.01, "T": 0.05, "eps": 0.1},
    "experiment": {"replicas": 6},
}


class TestEnsembles:
    def test_zero_noise_collapses(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "random"}}, "noise": ZERO_NOISE,
                                   "solver": {"dt": 0.01, "T": 0.05}, "experiment": {"replicas": 4}})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        energies = {(tmp_path / "o" / f"replica_{r:04d}" / "energy.csv").read_text() for r in range(4)}
        assert len(energies) == 1

    def test_jump_count_mean(self, tmp_path):
        cfg = write_cfg(tmp_path, {"noise": {"weights": [1.0, 0.5], "fields": [{"amplitude": 0.1}, None]},
                                   "solver": {"dt": 0.01, "T": 0.1, "eps": 0.05}, "experiment": {"replicas": 200}})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        mean = s["expected_jump_count"]
        assert mean == pytest.approx(1.5 * 0.1 / 0.05)
        assert abs(s["jump_count"]["mean"] - mean) <= 3 * math.sqrt(mean / 200)

    @pytest.mark.parametrize("command", ["simulate", "controlled"])
    def test_parallel_matches_serial(self, tmp_path, command):
        cfg = write_cfg(tmp_path, ENSEMBLE)
        assert main([command, "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
        assert main([command, "--config", str(cfg), "--out", str(tmp_path / "p"), "--threads", "3"]) == 0
        assert tree_bytes(tmp_path / "s") == tree_bytes(tmp_path / "p")

    def test_seed_changes_output(self, tmp_path):
        cfg = write_cfg(tmp_path, ENSEMBLE)
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
        assert (tmp_path / "a" / "summary.json").read_bytes() != (tmp_path / "b" / "summary.json").read_bytes()

    def test_sweep_eps(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, ENSEMBLE | {"control": {"constant": 1.5},
                                              "experiment": {"replicas": 4, "eps_ladder": [0.2, 0.05]}})
        code = main(["sweep-eps", "--config", str(cfg), "--out", str(tmp_path / "o")])
        rep = json.loads((tmp_path / "o" / "eps_sweep.json").read_text())
        assert code == (0 if rep["monotone"] else 4)
        assert rep["ladder"] == [0.2, 0.05] and len(rep["errors"]) == 2


class TestVerify:
    def test_skew(self, tmp_path, capsys):
        assert main(["verify", "skew", "--out", str(tmp_path / "v")]) == 0
        assert capsys.readouterr().out.startswith("PASS skew")
        rep = json.loads((tmp_path / "v" / "verify.json").read_text())
        assert rep["skew"]["passed"]

    def test_unknown_selector(self, tmp_path, capsys):
        assert main(["verify", "bogus", "--out", str(tmp_path / "v")]) == 2
        assert not (tmp_path / "v").exists()

    @pytest.mark.slow
    def test_all_tiny(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"u0": {"preset": "random", "s": 1.5, "scale": 1.0, "seed": 1}},
                                   "noise": {"weights": [1.0], "scales": [0.5], "fields": [{"amplitude": 0.5, "radius": 1}]},
                                   "control": {"constant": 1.5}, "solver": {"dt": 1e-3, "T": 0.1},
                                   "experiment": {"trials": 10, "replicas": 4}})
        import time

        t0 = time.perf_counter()
        code = main(["verify", "all", "--config", str(cfg), "--out", str(tmp_path / "v")])
        assert time.perf_counter() - t0 < 300
        rows = (tmp_path / "v" / "verify.csv").read_text().splitlines()
        assert rows[0] == "check,passed,metric,value" and len(rows) == 18
        assert code in (0, 4)

    def test_usage_error_exit(self):
        r = subprocess.run([sys.executable, "-m", "tamedns.cli", "frobnicate"], capture_output=True)
        assert r.returncode == 2
