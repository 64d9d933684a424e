import csv
import json
import subprocess
import sys

import pytest

from vegdyn import cli

GF = {
    "model": {"family": "gf"},
    "domain": {"type": "patches", "M": 1},
    "kernels": {"jbar": 1.1},
    "initial": {"law": {"G": 0.5, "F": 0.5}},
    "sim": {"N": 200, "t_end": 5, "snapshot_times": [0, 1, 2, 5]},
    "gke": {"h": 0.01, "t_end": 5, "snapshot_times": [0, 1, 2, 5]},
    "meanfield": {"checkpoints": {"start": 0.5, "stop": 5, "num": 10}, "replicas": 2000},
    "qsd": {"N_list": [10, 50], "jbar_grid": [0.3, 0.6]},
    "equilibria": {"jbar_grid": {"start": 0.1, "stop": 1.2, "num": 12}},
    "converge": {"N_list": [50, 200], "replicas": 3, "t_end": 3},
    "chaos": {"N": 100, "t": 2, "replicas": 50},
}

RING = {
    "model": {"family": "gf"},
    "domain": {"type": "ring", "L": 5.0},
    "kernels": {"jbar": 1.25, "sigma": 0.05},
    "initial": {"law": {"G": 1.0, "F": 0.0}, "blocks": [{"lo": 1.0, "hi": 2.5, "law": {"G": 0.0, "F": 1.0}}]},
    "gke": {"h": 0.05, "t_end": 20, "snapshot_times": {"start": 0, "stop": 20, "num": 5}},
}

EXPECTED = {
    "simulate": {"events.csv", "snapshots.csv", "occupancy.csv"},
    "gke": {"field.csv"},
    "meanfield": {"occupancy.csv", "gke_reference.csv"},
    "qsd": {"rho.csv", "qsd.csv", "log_rho.csv"},
    "equilibria": {"branches.csv", "bifurcations.csv"},
    "converge": {"convergence.csv", "slope.csv"},
    "chaos": {"correlations.csv", "chaos_summary.csv"},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=1))
    return path


def csv_files(out):
    return sorted(p for p in out.iterdir() if p.suffix == ".csv" or p.name.endswith(".csv.partial"))


def assert_headers(out):
    for p in csv_files(out):
        with open(p, newline="") as fh:
            header = next(csv.reader(fh))
        assert header and all(h and not h[0].isdigit() and h[0] != "-" for h in header), p.name
        assert b"\r\n" not in p.read_bytes()


class TestConfigErrors:
    """Configuration problems exit with status 2."""

    def test_empty_config(self, tmp_path, capsys):
        path = tmp_path / "empty.json"
        path.write_text("")
        assert cli.main(["gke", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "empty" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = json.loads(json.dumps(GF))
        cfg["sim"]["colour"] = "green"
        code = cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "sim.colour" in capsys.readouterr().err

    def test_wrong_type(self, tmp_path, capsys):
        cfg = json.loads(json.dumps(GF))
        cfg["sim"]["N"] = "many"
        assert cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
        assert "sim.N" in capsys.readouterr().err

    def test_syntax_error_has_line_and_column(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "model": {"family": "gf"},\n  "domain": {"type": "patches" "M": 1}\n}\n')
        assert cli.main(["gke", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert f"{path}:3:" in err

    def test_missing_section(self, tmp_path, capsys):
        cfg = {k: v for k, v in GF.items() if k != "gke"}
        assert cli.main(["gke", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
        assert "gke" in capsys.readouterr().err

    def test_task_needs_config(self, tmp_path):
        assert cli.main(["gke", "--out", str(tmp_path / "o")]) == 2

    def test_invalid_model_values(self, tmp_path, capsys):
        cfg = json.loads(json.dumps(GF))
        cfg["kernels"]["jbar"] = -1.0
        assert cli.main(["gke", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
        assert "jbar" in capsys.readouterr().err

    def test_bad_override(self, tmp_path):
        path = write_config(tmp_path, GF)
        assert cli.main(["gke", "--config", str(path), "--out", str(tmp_path / "o"), "--set", "gke.h"]) == 2
        assert cli.main(["gke", "--config", str(path), "--out", str(tmp_path / "o"), "--set", "gke.bogus=1"]) == 2


class TestOverrides:
    """Dotted-path overrides and seeds."""

    def test_apply_override_parses_json(self):
        cfg = {}
        cli.apply_override(cfg, "sim.N=500")
        cli.apply_override(cfg, "sim.snapshot_times=[1, 2]")
        cli.apply_override(cfg, "model.family=gstf")
        assert cfg == {"sim": {"N": 500, "snapshot_times": [1, 2]}, "model": {"family": "gstf"}}

    def test_override_and_seed_reach_manifest(self, tmp_path):
        out = tmp_path / "o"
        code = cli.main(["simulate", "--config", str(write_config(tmp_path, GF)), "--out", str(out),
                         "--set", "sim.N=50", "--seed", "17"])
        assert code == 0
        m = json.loads((out / "manifest.json").read_text())
        assert m["config"]["sim"]["N"] == 50 and m["seed"] == 17

    def test_grid_values(self):
        assert cli.grid_values({"start": 0, "stop": 1, "num": 3}) == [0.0, 0.5, 1.0]
        assert cli.grid_values([1, 2]) == [1.0, 2.0]


class TestTasks:
    """Every task writes its artifacts and a manifest."""

    @pytest.mark.parametrize("task", sorted(EXPECTED))
    def test_task_artifacts(self, tmp_path, task):
        out = tmp_path / task
        assert cli.main([task, "--config", str(write_config(tmp_path, GF)), "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert EXPECTED[task] | {"manifest.json"} <= names
        assert_headers(out)
        m = json.loads((out / "manifest.json").read_text())
        assert m["status"] == "ok" and m["kind"] == "task"
        assert set(m["artifacts"]) == names - {"manifest.json"}
        assert {"numpy", "scipy", "numba", "vegdyn"} <= set(m["versions"])

    def test_fronts(self, tmp_path):
        out = tmp_path / "fronts"
        assert cli.main(["fronts", "--config", str(write_config(tmp_path, RING)), "--out", str(out)]) == 0
        assert {"field.csv", "fronts.csv", "wave_speed.csv"} <= {p.name for p in out.iterdir()}
        rows = list(csv.reader(open(out / "wave_speed.csv")))
        assert float(rows[1][-1]) > 0  # forest invades at this jbar
        assert_headers(out)

    def test_simulate_replicas(self, tmp_path):
        out = tmp_path / "o"
        code = cli.main(["simulate", "--config", str(write_config(tmp_path, GF)), "--out", str(out),
                         "--set", "sim.replicas=2", "--set", "sim.N=30"])
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"events_r000.csv", "events_r001.csv", "occupancy_r001.csv"} <= names


class TestAbort:
    """Numerical aborts keep partial artifacts and exit with status 3."""

    def test_euler_blowup(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = cli.main(["gke", "--config", str(write_config(tmp_path, GF)), "--out", str(out),
                         "--set", "gke.h=5.0", "--set", "gke.t_end=100"])
        assert code == 3
        assert (out / "field.csv.partial").exists()
        m = json.loads((out / "manifest.json").read_text())
        assert m["status"] == "numerical_abort" and "field.csv.partial" in m["artifacts"]
        assert "step" in capsys.readouterr().err
        assert_headers(out)


class TestReproducibility:
    """Identical inputs give identical CSV bytes; manifests resolve to themselves."""

    @pytest.mark.parametrize("task", ["simulate", "meanfield", "chaos"])
    def test_byte_identical_rerun(self, tmp_path, task):
        path = write_config(tmp_path, GF)
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main([task, "--config", str(path), "--out", str(a), "--seed", "3"]) == 0
        assert cli.main([task, "--config", str(path), "--out", str(b), "--seed", "3"]) == 0
        files = csv_files(a)
        assert files and [p.name for p in files] == [p.name for p in csv_files(b)]
        for p in files:
            assert p.read_bytes() == (b / p.name).read_bytes(), p.name

    def test_different_seed_differs(self, tmp_path):
        path = write_config(tmp_path, GF)
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["simulate", "--config", str(path), "--out", str(a), "--seed", "1"])
        cli.main(["simulate", "--config", str(path), "--out", str(b), "--seed", "2"])
        assert (a / "events.csv").read_bytes() != (b / "events.csv").read_bytes()

    @pytest.mark.parametrize("target", ["simulate", "gke", "fig4"])
    def test_manifest_round_trip(self, tmp_path, target):
        out = tmp_path / "o"
        args = [target, "--out", str(out), "--set", "sim.N=40", "--set", "sim.t_end=5", "--set", "gke.t_end=5",
                "--seed", "9"]
        if target != "fig4":
            args += ["--config", str(write_config(tmp_path, GF))]
        else:
            args += ["--set", "periods.window=[0, 5]", "--set", "sim.snapshot_times=[0, 5]",
                     "--set", "gke.snapshot_times=[0, 5]"]
        assert cli.main(args) == 0
        resolved = json.loads((out / "manifest.json").read_text())["config"]
        # the recorded config, fed back as a plain file, resolves to itself
        again = cli.resolve_config(target, json.loads(json.dumps(resolved)))
        assert again == resolved
        out2 = tmp_path / "o2"
        assert cli.main([target, "--config", str(write_config(tmp_path, resolved, "resolved.json")),
                         "--out", str(out2)]) == 0
        for p in csv_files(out):
            assert p.read_bytes() == (out2 / p.name).read_bytes()


class TestRecipes:
    """Named experiment presets, shrunk through overrides."""

    def test_fig2(self, tmp_path):
        out = tmp_path / "fig2"
        code = cli.main(["fig2", "--out", str(out), "--set", "basin.N=100", "--set", "basin.t_end=10",
                         "--set", "basin.seeds=2", "--set", "basin.jbar=[0.7]"])
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"branches.csv", "bifurcations.csv", "endstates.csv", "basins.csv"} <= names
        kinds = [r[0] for r in csv.reader(open(out / "bifurcations.csv"))][1:]
        assert kinds.count("saddle_node") == 2 and kinds.count("transcritical") == 1
        assert_headers(out)

    def test_fig5_waves(self, tmp_path):
        out = tmp_path / "w"
        code = cli.main(["fig5_waves", "--out", str(out), "--set", "sim.N=100", "--set", "sim.t_end=2",
                         "--set", "sim.snapshot_times=[0, 1, 2]", "--set", "gke.t_end=2",
                         "--set", "gke.snapshot_times=[0, 2]"])
        assert code == 0
        names = {p.name for p in out.iterdir()}
        for tag in ("0p5", "0p9", "1p25"):
            assert {f"gke_jbar{tag}.csv", f"ssa_jbar{tag}.csv"} <= names
        assert_headers(out)

    def test_fig3(self, tmp_path):
        out = tmp_path / "q"
        assert cli.main(["fig3", "--out", str(out), "--set", "qsd.N_list=[20]"]) == 0
        rows = list(csv.reader(open(out / "rho.csv")))
        assert rows[0] == ["N", "jbar", "rho"] and len(rows) == 22

    def test_fig5_pinning(self, tmp_path):
        out = tmp_path / "p"
        code = cli.main(["fig5_pinning", "--out", str(out), "--set", "gke.t_end=5", "--set", "gke.snapshot_times=[0, 5]",
                         "--set", "sim.N=100", "--set", "sim.t_end=1", "--set", "sim.snapshot_times=[0, 1]"])
        assert code == 0
        assert {"gke_field.csv", "fronts.csv", "zero_dispersal.csv", "ssa_snapshots.csv"} <= {p.name for p in out.iterdir()}
        assert_headers(out)


def test_console_script(tmp_path):
    """The installed entry point runs as a separate process."""
    res = subprocess.run([sys.executable, "-m", "vegdyn.cli", "equilibria", "--config",
                          str(write_config(tmp_path, GF)), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "branches.csv").exists()
