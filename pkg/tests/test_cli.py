"""Command-line surface: exit codes, output formats, config precedence."""

import json
import shutil
import socket
import subprocess

import numpy as np
import pytest

from coverage_pilot.cli import main
from coverage_pilot.gridworld import Cell, GridMap, generate_map, save_map


@pytest.fixture()
def empty_map_file(tmp_path):
    path = tmp_path / "empty3.json"
    save_map(generate_map(3, 3, 0.0, seed=0), str(path))
    return str(path)


@pytest.fixture()
def disconnected_map_file(tmp_path):
    occ = np.zeros((3, 3), dtype=bool)
    occ[1, :] = True
    path = tmp_path / "disc.json"
    save_map(GridMap(3, 3, occ, Cell(0, 0)), str(path))
    return str(path)


class TestSimulate:
    def test_empty_map_completes_exit_0(self, empty_map_file, capsys):
        rc = main(
            ["simulate", "--map", empty_map_file, "--planner", "single-shot", "--target-cr", "1.0"]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "CR 100.00" in out
        assert "DR 0.00" in out
        assert "steps 8" in out  # 9 free cells, start pre-visited
        assert "status Complete" in out

    def test_structured_output_is_json(self, empty_map_file, capsys):
        rc = main(
            [
                "simulate", "--map", empty_map_file, "--planner", "single-shot",
                "--target-cr", "1.0", "--format", "structured",
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["cr"] == pytest.approx(100.0)
        assert payload["dr"] == pytest.approx(0.0)
        assert payload["status"] == "Complete"
        assert set(payload) >= {"cr", "dr", "steps", "replans", "status"}

    def test_budget_exhausted_exit_1(self, capsys):
        rc = main(
            [
                "simulate", "--width", "10", "--height", "10", "--density", "0.0",
                "--planner", "single-shot", "--max-steps", "3", "--format", "structured",
            ]
        )
        assert rc == 1
        assert json.loads(capsys.readouterr().out)["status"] != "Complete"

    def test_disconnected_map_exit_2_names_region(self, disconnected_map_file, capsys):
        rc = main(["simulate", "--map", disconnected_map_file])
        err = capsys.readouterr().err
        assert rc == 2
        assert "unreachable" in err
        assert "(2, 0)" in err

    def test_missing_map_file_exit_2(self, tmp_path, capsys):
        rc = main(["simulate", "--map", str(tmp_path / "nope.json")])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_same_seed_writes_identical_replays(self, tmp_path):
        replays = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            rc = main(
                [
                    "simulate", "--width", "8", "--height", "8", "--density", "0.15",
                    "--planner", "mcts", "--rollouts", "2", "--seed", "11",
                    "--replay-out", str(out),
                ]
            )
            assert rc == 0
            replays.append(out.read_bytes())
        assert replays[0] == replays[1]
        assert len(replays[0]) > 0


class TestConfigFile:
    def test_precedence_flags_over_file_over_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {"width": 4, "height": 4, "density": 0.0, "planner": "single-shot", "target_cr": 1.0}
            )
        )
        rc = main(["simulate", "--config", str(cfg), "--format", "structured"])
        assert rc == 0
        from_file = json.loads(capsys.readouterr().out)
        assert from_file["steps"] == 15  # the file's 4x4, not the built-in 10x10

        rc = main(
            ["simulate", "--config", str(cfg), "--width", "3", "--height", "3",
             "--format", "structured"]
        )
        assert rc == 0
        from_flags = json.loads(capsys.readouterr().out)
        assert from_flags["steps"] == 8  # the flags' 3x3 wins over the file's 4x4

    def test_unknown_config_key_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        rc = main(["simulate", "--config", str(cfg)])
        assert rc == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_malformed_config_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("not json{")
        rc = main(["simulate", "--config", str(cfg)])
        assert rc == 2
        assert "config file" in capsys.readouterr().err


class TestBench:
    ARGS = [
        "bench", "--densities", "sparse", "--planners", "mcts,single-shot",
        "--trials", "2", "--rollouts", "2", "--timing", "off", "--seed", "3",
    ]

    def test_plain_table_lists_requested_rows(self, capsys):
        rc = main(self.ARGS)
        out = capsys.readouterr().out
        assert rc == 0
        assert "sparse" in out
        assert "mcts" in out
        assert "single-shot" in out

    def test_timing_off_is_deterministic(self, capsys):
        rc1 = main(self.ARGS)
        first = capsys.readouterr().out
        rc2 = main(self.ARGS)
        second = capsys.readouterr().out
        assert rc1 == rc2 == 0
        assert first == second

    def test_out_prefix_writes_three_files(self, tmp_path, capsys):
        prefix = tmp_path / "results" / "bench"
        rc = main(self.ARGS + ["--out", str(prefix)])
        capsys.readouterr()
        assert rc == 0
        csv = (tmp_path / "results" / "bench.csv").read_text()
        assert csv.splitlines()[0] == "tier,planner,CR%,CR sd,DR%,DR sd,SR,CSI%,IL ms,IL sd,trials"
        assert (tmp_path / "results" / "bench.txt").exists()
        trial_lines = (tmp_path / "results" / "bench.trials.jsonl").read_text().splitlines()
        assert len(trial_lines) == 4  # 1 tier x 2 planners x 2 trials
        assert all(json.loads(line) for line in trial_lines)

    def test_unknown_tier_exit_2(self, capsys):
        rc = main(["bench", "--densities", "urban", "--trials", "1"])
        assert rc == 2
        assert "unknown density tier" in capsys.readouterr().err


class TestCollect:
    def test_collect_then_validate_exit_0(self, tmp_path, capsys):
        stem = tmp_path / "ds" / "data"
        rc = main(
            [
                "collect", "--episodes", "3", "--out", str(stem), "--shard-size", "2",
                "--rollouts", "2", "--width", "5", "--height", "5",
                "--validate", "--seed", "1",
            ]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "wrote 3 records" in out
        assert "3/3 records passed" in out
        assert (tmp_path / "ds" / "data.manifest.json").exists()

    def test_structured_emits_json_lines(self, tmp_path, capsys):
        stem = tmp_path / "ds" / "data"
        rc = main(
            [
                "collect", "--episodes", "2", "--out", str(stem), "--rollouts", "2",
                "--width", "5", "--height", "5", "--format", "structured", "--seed", "2",
            ]
        )
        assert rc == 0
        lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert lines[-1]["episodes"] == 2
        assert all("q" in line for line in lines[:-1])


class TestServe:
    def test_bad_addr_exit_2(self, capsys):
        rc = main(["serve", "--addr", "nohost"])
        assert rc == 2
        assert "expected host:port" in capsys.readouterr().err

    def test_port_occupied_exit_2(self, capsys):
        holder = socket.socket()
        try:
            holder.bind(("127.0.0.1", 0))
            holder.listen(1)
            port = holder.getsockname()[1]
            rc = main(["serve", "--addr", f"127.0.0.1:{port}"])
        finally:
            holder.close()
        assert rc == 2
        assert "cannot listen" in capsys.readouterr().err


class TestEntryPoint:
    def test_installed_script_runs(self, empty_map_file):
        exe = shutil.which("coverage-pilot")
        assert exe, "console script should be installed"
        proc = subprocess.run(
            [exe, "simulate", "--map", empty_map_file, "--planner", "single-shot",
             "--target-cr", "1.0"],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0
        assert "CR 100.00" in proc.stdout

    def test_no_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
