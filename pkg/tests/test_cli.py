import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from rotorfall.cli import main
from rotorfall.harness import ENV_LOG_COLUMNS


TINY_CFG = {
    "sac": {"warmup_steps": 100, "batch_size": 32, "hidden_width": 16},
    "train": {
        "total_steps": 600,
        "eval_interval": 300,
        "checkpoint_interval": 300,
        "log_interval": 100,
        "eval_seconds": 1.0,
    },
}


def write_cfg(tmp_path, extra=None):
    cfg = json.loads(json.dumps(TINY_CFG))
    if extra:
        for section, vals in extra.items():
            cfg.setdefault(section, {}).update(vals)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def make_checkpoint(tmp_path):
    out = tmp_path / "ckpt_run"
    code = main(
        ["train", "--config", write_cfg(tmp_path), "--steps", "0", "--out", str(out), "--seed", "1"]
    )
    assert code == 0
    return out / "checkpoints" / "last.npz"


class TestTrainCommand:
    def test_zero_steps_creates_run_layout(self, tmp_path):
        out = tmp_path / "run1"
        code = main(["train", "--steps", "0", "--out", str(out), "--seed", "0"])
        assert code == 0
        assert (out / "config.echo").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoints" / "last.npz").exists()

    def test_seeded_runs_byte_identical_metrics(self, tmp_path):
        cfg = write_cfg(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", cfg, "--seed", "7", "--out", str(a)]) == 0
        assert main(["train", "--config", cfg, "--seed", "7", "--out", str(b)]) == 0
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_failed_rotor_flag_pins_speed(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "run"
        code = main(
            ["train", "--config", cfg, "--failed-rotor", "2", "--out", str(out), "--seed", "0"]
        )
        assert code == 0
        lines = (out / "episode0.csv").read_text().splitlines()
        w2 = lines[0].split(",").index("w2")
        assert all(float(r.split(",")[w2]) == 0.0 for r in lines[1:])

    def test_unknown_config_key_names_it(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"sac": {"gama": 0.5}}))
        code = main(["train", "--config", str(bad), "--out", str(tmp_path / "x")])
        assert code == 1
        assert "sac.gama" in capsys.readouterr().err

    def test_unknown_section_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"quadd": {}}))
        code = main(["train", "--config", str(bad), "--out", str(tmp_path / "x")])
        assert code == 1
        assert "quadd" in capsys.readouterr().err

    def test_invalid_value_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"sac": {"gamma": 2.0}}))
        code = main(["train", "--config", str(bad), "--out", str(tmp_path / "x")])
        assert code == 1

    def test_config_echo_reproduces_run(self, tmp_path):
        cfg = write_cfg(tmp_path)
        a = tmp_path / "a"
        assert main(["train", "--config", cfg, "--seed", "3", "--out", str(a)]) == 0
        b = tmp_path / "b"
        assert main(["train", "--config", str(a / "config.echo"), "--out", str(b)]) == 0
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_env_var_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ROTORFALL_SEED", "42")
        out = tmp_path / "run"
        assert main(["train", "--steps", "0", "--out", str(out)]) == 0
        echoed = json.loads((out / "config.echo").read_text())
        assert echoed["train"]["seed"] == 42

    def test_flag_seed_beats_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ROTORFALL_SEED", "42")
        out = tmp_path / "run"
        assert main(["train", "--steps", "0", "--seed", "5", "--out", str(out)]) == 0
        echoed = json.loads((out / "config.echo").read_text())
        assert echoed["train"]["seed"] == 5


class TestEvalCommand:
    def test_hover_eval_writes_report(self, tmp_path):
        ckpt = make_checkpoint(tmp_path)
        out = tmp_path / "eval"
        code = main(
            [
                "eval", "--ckpt", str(ckpt), "--maneuver", "hover", "--wind", "0",
                "--duration", "2", "--out", str(out), "--seed", "0",
            ]
        )
        assert code == 0
        report = (out / "report.csv").read_text().splitlines()
        assert report[1].startswith("hover,")
        assert (out / "trajectory.csv").exists()

    def test_unknown_maneuver_lists_valid_names(self, tmp_path, capsys):
        ckpt = make_checkpoint(tmp_path)
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--ckpt", str(ckpt), "--maneuver", "backflip", "--out", str(tmp_path / "e")])
        assert exc.value.code != 0
        err = capsys.readouterr().err
        assert "hover" in err and "saddle" in err

    def test_missing_checkpoint_is_runtime_failure(self, tmp_path, capsys):
        code = main(
            ["eval", "--ckpt", str(tmp_path / "nope.npz"), "--maneuver", "hover",
             "--out", str(tmp_path / "e")]
        )
        assert code == 2
        assert "checkpoint" in capsys.readouterr().err

    def test_wind_eval_runs(self, tmp_path):
        ckpt = make_checkpoint(tmp_path)
        out = tmp_path / "eval"
        code = main(
            ["eval", "--ckpt", str(ckpt), "--maneuver", "saddle", "--wind", "2.0",
             "--duration", "2", "--out", str(out), "--seed", "0"]
        )
        assert code == 0
        assert (out / "report.csv").exists()


class TestSuiteCommand:
    def test_suite_writes_five_reports(self, tmp_path):
        ckpt = make_checkpoint(tmp_path)
        out = tmp_path / "suite"
        code = main(["suite", "--ckpt", str(ckpt), "--out", str(out), "--seed", "0"])
        assert code == 0
        rows = (out / "summary.csv").read_text().splitlines()
        assert len(rows) == 6


def write_log(path, rows=60, land=False):
    lines = [ENV_LOG_COLUMNS]
    for k in range(rows):
        t = k * 0.01
        z = 1.6 * k / rows if land else 0.01 * np.sin(t)
        pwm = 0.0 if (land and z >= 1.5) else 0.58
        lines.append(
            ",".join(
                repr(float(v))
                for v in [
                    t, 0.02 * k / rows, -0.01, z,
                    1, 0, 0, 0,
                    0.1, 0.0, 0.05,
                    0.01, -0.02, 0.3,
                    0, 520, 530, 510,
                    pwm, pwm, pwm, pwm,
                    0.0, 0.0, min(0.1 * t, 1.5), -1.2,
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


class TestPlotCommand:
    @pytest.mark.parametrize("kind", ["coords", "pwm", "traj3d"])
    def test_kinds_produce_wellformed_svg(self, tmp_path, kind):
        log = tmp_path / "log.csv"
        write_log(log)
        out = tmp_path / f"{kind}.svg"
        assert main(["plot", "--log", str(log), "--kind", kind, "--out", str(out)]) == 0
        root = ET.fromstring(out.read_text())
        assert root.tag.endswith("svg")

    def test_byte_identical_rerender(self, tmp_path):
        log = tmp_path / "log.csv"
        write_log(log)
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        assert main(["plot", "--log", str(log), "--kind", "coords", "--out", str(a)]) == 0
        assert main(["plot", "--log", str(log), "--kind", "coords", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_coords_plot_includes_goal_traces(self, tmp_path):
        log = tmp_path / "log.csv"
        write_log(log)
        out = tmp_path / "c.svg"
        main(["plot", "--log", str(log), "--kind", "coords", "--out", str(out)])
        svg = out.read_text()
        assert "goal x" in svg and "goal z" in svg

    def test_landing_log_z_reaches_depth_before_cutoff(self, tmp_path):
        log = tmp_path / "land.csv"
        write_log(log, land=True)
        lines = log.read_text().splitlines()
        cols = lines[0].split(",")
        iz, ipwm1 = cols.index("z"), cols.index("pwm1")
        cut_rows = [r for r in lines[1:] if float(r.split(",")[ipwm1]) == 0.0]
        assert cut_rows
        assert all(float(r.split(",")[iz]) >= 1.5 for r in cut_rows)
        out = tmp_path / "land.svg"
        assert main(["plot", "--log", str(log), "--kind", "coords", "--out", str(out)]) == 0

    def test_malformed_csv_reports_line_number(self, tmp_path, capsys):
        log = tmp_path / "bad.csv"
        write_log(log)
        content = log.read_text().splitlines()
        content[3] = content[3] + ",extra_field"
        log.write_text("\n".join(content) + "\n")
        code = main(["plot", "--log", str(log), "--kind", "pwm", "--out", str(tmp_path / "x.svg")])
        assert code == 2
        assert "line 4" in capsys.readouterr().err

    def test_non_numeric_cell_reports_line(self, tmp_path, capsys):
        log = tmp_path / "bad.csv"
        write_log(log, rows=5)
        content = log.read_text().splitlines()
        parts = content[2].split(",")
        parts[1] = "not-a-number"
        content[2] = ",".join(parts)
        log.write_text("\n".join(content) + "\n")
        code = main(["plot", "--log", str(log), "--kind", "pwm", "--out", str(tmp_path / "x.svg")])
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_columns_rejected(self, tmp_path, capsys):
        log = tmp_path / "bad.csv"
        log.write_text("t,x,y\n0.0,1.0,2.0\n")
        code = main(["plot", "--log", str(log), "--kind", "coords", "--out", str(tmp_path / "x.svg")])
        assert code == 2
        assert "line 1" in capsys.readouterr().err


class TestConfigCommand:
    def test_prints_defaults(self, capsys):
        assert main(["config"]) == 0
        cfg = json.loads(capsys.readouterr().out)
        assert cfg["quad"]["mass"] == 1.2
        assert cfg["sac"]["gamma"] == 0.99
        assert cfg["reward"]["c1"] == 10.0
        assert cfg["episode"]["horizon_steps"] == 1000
        assert cfg["sac"]["buffer_capacity"] == 1_000_000
        assert cfg["sac"]["batch_size"] == 256

    def test_merges_file(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"quad": {"mass": 2.0}}))
        assert main(["config", "--config", str(p)]) == 0
        cfg = json.loads(capsys.readouterr().out)
        assert cfg["quad"]["mass"] == 2.0
