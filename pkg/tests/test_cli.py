import json
import xml.etree.ElementTree as ET

import pytest

from proxflow.cli import main


class TestTables:
    def test_ppm_only_deterministic(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["tables", "--only", "ppm", "--out", str(out1)]) == 0
        assert main(["tables", "--only", "ppm", "--out", str(out2)]) == 0
        assert (out1 / "table2.csv").read_bytes() == (out2 / "table2.csv").read_bytes()
        assert (out1 / "table3.csv").read_bytes() == (out2 / "table3.csv").read_bytes()

    def test_ppm_row_counts(self, tmp_path):
        out = tmp_path / "t"
        assert main(["tables", "--only", "ppm", "--out", str(out)]) == 0
        table2 = (out / "table2.csv").read_text().splitlines()
        table3 = (out / "table3.csv").read_text().splitlines()
        assert len(table2) == 1 + 4  # (beta in {1,10}) x (L in {2,10})
        assert len(table3) == 1 + 8  # (m in {4,20}) x (beta in {1,10}) x L
        assert all(line.endswith(",1") for line in table2[1:])

    def test_default_run_full_row_counts(self, tmp_path):
        out = tmp_path / "full"
        assert main(["tables", "--out", str(out), "--jobs", "4"]) == 0
        table2 = (out / "table2.csv").read_text().splitlines()
        table3 = (out / "table3.csv").read_text().splitlines()
        assert len(table2) == 1 + 12
        assert len(table3) == 1 + 24
        # every row passes outright or carries a logged oracle discrepancy
        assert all(line.endswith(",1") for line in table2[1:] + table3[1:])

    def test_tolerance_failure_exits_4_with_outputs(self, tmp_path, monkeypatch):
        import proxflow.cli as cli

        # single-step rows carry no oracle escape: a wrong reference
        # value must surface as exit code 4 (rows still written)
        monkeypatch.setitem(
            cli.TABLE2_REFERENCE, ("ppm", 1.0), {2.0: 0.9, 10.0: 0.9}
        )
        out = tmp_path / "bad"
        assert main(["tables", "--only", "ppm", "--out", str(out)]) == 4
        assert (out / "table2.csv").exists()


class TestRun:
    def test_l1_trace_cardinality(self, tmp_path):
        out = tmp_path / "l1"
        code = main(
            [
                "run", "l1", "--tau", "1,2,3", "--seed", "7", "--iters", "60",
                "--p", "20", "--q", "40", "--out", str(out),
            ]
        )
        assert code == 0
        text = (out / "l1_traces.csv").read_text().splitlines()
        taus = {line.split(",")[2] for line in text[1:]}
        assert taus == {"1", "2", "3"}
        ET.parse(out / "l1.svg")
        meta = json.loads((out / "run.json").read_text())
        assert meta["config"]["seed"] == 7

    def test_invalid_experiment_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "bogus", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_divergent_inner_step_exit_code_with_outputs(self, tmp_path):
        out = tmp_path / "div"
        code = main(
            [
                "run", "l1", "--tau", "1", "--iters", "40", "--alpha", "1e8",
                "--p", "10", "--q", "20", "--out", str(out),
            ]
        )
        assert code == 3
        assert (out / "l1_traces.csv").exists()

    def test_matfac_runs(self, tmp_path):
        out = tmp_path / "mf"
        code = main(
            [
                "run", "matfac", "--tau", "1,4", "--iters", "25", "--n", "30",
                "--rank", "3", "--out", str(out),
            ]
        )
        assert code in (0, 3)
        assert (out / "matfac_traces.csv").exists()

    def test_altproj_sigma_flag(self, tmp_path):
        out = tmp_path / "ap"
        code = main(
            [
                "run", "altproj", "--sigma", "0.4", "--tau", "1,2", "--iters",
                "40", "--n", "40", "--d", "8", "--out", str(out),
            ]
        )
        assert code == 0
        ET.parse(out / "altproj.svg")


class TestConfigPrecedence:
    def test_config_supplies_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"iters": 15, "seed": 9, "n": 24, "d": 6}))
        out = tmp_path / "o"
        code = main(
            [
                "run", "altproj", "--config", str(cfg), "--seed", "3",
                "--tau", "1", "--out", str(out),
            ]
        )
        assert code == 0
        meta = json.loads((out / "run.json").read_text())
        assert meta["config"]["iters"] == 15  # from config
        assert meta["config"]["seed"] == 3  # flag wins

    def test_env_seed_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PROXFLOW_SEED", "41")
        out = tmp_path / "env"
        main(["run", "altproj", "--tau", "1", "--iters", "5", "--n", "16",
              "--d", "4", "--out", str(out)])
        meta = json.loads((out / "run.json").read_text())
        assert meta["config"]["seed"] == 41


class TestAccel:
    def test_rho_quarter(self, tmp_path, capsys):
        out = tmp_path / "acc"
        assert main(["accel", "--rho", "0.25", "--iters", "150", "--out", str(out)]) == 0
        text = (out / "accel.csv").read_text().splitlines()
        assert len(text) == 3
        captured = capsys.readouterr().out
        assert "tuned-2step" in captured
        ET.parse(out / "accel.svg")

    def test_bad_rho_is_usage_error(self, tmp_path):
        assert main(["accel", "--rho", "1.5", "--out", str(tmp_path)]) == 2


class TestFigure1:
    def test_panel_outputs(self, tmp_path):
        out = tmp_path / "fig"
        code = main(
            [
                "figure1", "--tau", "1,2", "--m-list", "4", "--l-list", "2",
                "--beta-points", "6", "--out", str(out), "--jobs", "2",
            ]
        )
        assert code == 0
        assert (out / "figure1_L2_m4.csv").exists()
        ET.parse(out / "figure1_L2_m4.svg")
