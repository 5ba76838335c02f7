import json
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from meanreflect.cli import csv_text, format_float, main, read_csv, run
from meanreflect.config import ConfigError, list_scenarios, load_yaml, parse_config, scenario_path

SP = {"command": "sp", "y": {"segments": [{"from": 0, "to": 1, "value": 0.0, "slope": 3.0}]},
      "l": 0, "u": 1, "steps": 100}


def files_of(d: Path):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


class TestParseConfig:
    def test_minimal_file_gets_defaults(self):
        cfg = parse_config(SP)
        assert cfg.command == "sp"
        assert cfg["steps"] == 100 and cfg["seed"] == 0 and cfg["tol"] == 1e-10 and cfg["horizon"] == 1.0

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError, match="barrierz"):
            parse_config({**SP, "barrierz": 1})

    def test_unknown_meta_key(self):
        with pytest.raises(ConfigError, match="owner"):
            parse_config({**SP, "meta": {"owner": "x"}})

    def test_flag_beats_file(self):
        assert parse_config({**SP, "seed": 3}, {"seed": 42})["seed"] == 42
        assert parse_config({**SP, "seed": 3}, {"seed": None})["seed"] == 3

    def test_key_from_other_command_rejected(self):
        with pytest.raises(ConfigError, match="picard_tol"):
            parse_config({**SP, "picard_tol": 1e-9})

    @pytest.mark.parametrize("bad", [{"steps": 0}, {"steps": 1.5}, {"seed": -1}, {"tol": "small"},
                                     {"particles": True}, {"out": 3}])
    def test_type_errors(self, bad):
        with pytest.raises(ConfigError):
            parse_config({**SP, **bad})

    def test_command_conflict(self):
        with pytest.raises(ConfigError):
            parse_config(SP, command="picard")
        with pytest.raises(ConfigError):
            parse_config({"y": 1})

    def test_parse_error_position(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("command: sp\nl: [0, 1\nu: 2\n")
        with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
            load_yaml(p)

    def test_missing_file_and_scenario(self, tmp_path):
        with pytest.raises(ConfigError):
            load_yaml(tmp_path / "nope.yaml")
        with pytest.raises(ConfigError, match="shipped"):
            scenario_path("nope")

    def test_run_id_ignores_workers_and_out(self):
        a = parse_config(SP, {"workers": 1, "out": "a"})
        b = parse_config(SP, {"workers": 4, "out": "b"})
        assert a.run_id == b.run_id != parse_config(SP, {"seed": 1}).run_id


class TestArtifacts:
    def test_float_format(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert float(format_float(1 / 3)) == 1 / 3
        assert csv_text({"a": [1.0, 2.5], "b": [0.0, -1e-300]}) == "a,b\n1,0\n2.5,-1e-300\n"

    def test_sp_example(self, tmp_path):
        code = main(["--scenario", "sp_example", "--out", str(tmp_path)])
        assert code == 0
        (run_dir,) = tmp_path.iterdir()
        data = read_csv(run_dir / "solution.csv")
        assert data["k"].tolist() == [0.0, -1.0, 1.0]
        assert data["x"].tolist() == [0.0, 1.0, 0.0]
        raw = (run_dir / "solution.csv").read_bytes()
        assert raw.startswith(b"t,y,l,u,k,x\n") and b"\r" not in raw
        meta = json.loads((run_dir / "meta.json").read_text())
        assert meta["exit_code"] == 0 and meta["run_id"] == run_dir.name
        assert not list(tmp_path.rglob("*.tmp"))
        assert not (run_dir / "timing.json").exists()

    def test_timing_is_opt_in(self, tmp_path):
        assert main(["--scenario", "sp_example", "--out", str(tmp_path), "--timing"]) == 0
        (run_dir,) = tmp_path.iterdir()
        assert "wall_time" in json.loads((run_dir / "timing.json").read_text())

    def test_verify_round_trip_and_corruption(self, tmp_path):
        assert main(["--scenario", "sp_example", "--out", str(tmp_path / "a")]) == 0
        (run_dir,) = (tmp_path / "a").iterdir()
        good = run_dir / "solution.csv"
        assert main(["verify", "--input", str(good), "--out", str(tmp_path / "v")]) == 0
        lines = good.read_text().splitlines()
        cols = lines[0].split(",")
        row = lines[2].split(",")
        # push down by 0.5 more than needed: x leaves the upper barrier while k decreases
        row[cols.index("k")] = "-1.5"
        row[cols.index("x")] = "0.5"
        lines[2] = ",".join(row)
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(lines) + "\n")
        out = tmp_path / "v2"
        assert main(["verify", "--input", str(bad), "--out", str(out)]) == 1
        (vdir,) = out.iterdir()
        rep = json.loads((vdir / "report.json").read_text())
        assert rep["ok"] is False

    def test_converge_writes_table(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        write_yaml(cfg, {"command": "converge", "x0": 1.0, "terms": [{"g": -1, "driver": "deterministic_clock"}],
                         "l": 0.0, "horizon": 2.0, "particles": 1, "n_list": [10, 20, 40], "reference_n": 80})
        assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        (d,) = (tmp_path / "o").iterdir()
        data = read_csv(d / "solution.csv")
        assert data["n"].tolist() == [10, 20, 40]
        assert np.all(data["err_k"] <= 1e-12)


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [], ["nosuch"], ["sp", "--steps", "x"], ["sp"],
        ["--scenario", "nope"], ["verify"], ["--scenario", "sp_example", "--config", "x.yaml"],
    ])
    def test_usage_errors_exit_2(self, argv, tmp_path, capsys):
        assert main([*argv, "--out", str(tmp_path)]) == 2

    def test_admissibility_failure_exit_1(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", {"command": "simulate", "x0": 1.0, "terms": [{"f": 0.1}],
                                              "l": 2.0, "particles": 10, "steps": 5})
        assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_list_scenarios(self, capsys):
        assert main(["--list-scenarios"]) == 0
        assert "sp_example" in capsys.readouterr().out.split()


@pytest.mark.slow
@pytest.mark.parametrize("name", list_scenarios())
def test_shipped_scenario_within_budget(name, tmp_path):
    data = load_yaml(scenario_path(name))
    budget = data["meta"]["budget_seconds"]
    t0 = time.perf_counter()
    code, run_dir = run(parse_config(data, {"out": str(tmp_path)}))
    elapsed = time.perf_counter() - t0
    assert code == 0, (run_dir / "report.json").read_text()
    assert elapsed <= budget
    assert (run_dir / "solution.csv").is_file() and (run_dir / "meta.json").is_file()


def test_byte_identity_across_workers(tmp_path):
    args = ["--scenario", "mean_sp_band", "--particles", "5000", "--steps", "20"]
    assert main([*args, "--workers", "1", "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--workers", "4", "--out", str(tmp_path / "b")]) == 0
    fa, fb = files_of(tmp_path / "a"), files_of(tmp_path / "b")
    assert fa.keys() == fb.keys() and fa == fb
