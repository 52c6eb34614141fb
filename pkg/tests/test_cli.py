import os

from volstream.cli import EXIT_CONFIG, EXIT_OK, main
from volstream.config import render_config

from conftest import make_small_config


def _write_cfg(tmp_path, **overrides):
    cfg = make_small_config(out_dir=str(tmp_path / "out"), **overrides)
    path = tmp_path / "scenario.cfg"
    path.write_text(render_config(cfg))
    return str(path)


def test_validate_canned_scenarios(capsys):
    assert main(["validate", "--scenario", "paper-default"]) == EXIT_OK
    assert "valid" in capsys.readouterr().out


def test_run_config_file(tmp_path, capsys):
    path = _write_cfg(tmp_path, **{"duration_s": 0.3})
    assert main(["run", "--config", path]) == EXIT_OK
    out = capsys.readouterr().out
    assert "service_l" in out
    assert os.path.exists(tmp_path / "out" / "frames.csv")
    assert os.path.exists(tmp_path / "out" / "summary.csv")


def test_zero_duration_exits_2(tmp_path, capsys):
    cfg = make_small_config(out_dir=str(tmp_path / "out"))
    cfg.duration_s = 0.0
    path = tmp_path / "bad.cfg"
    path.write_text(render_config(cfg))
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "duration_s" in capsys.readouterr().err


def test_unknown_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("definitely.not.a.key=1\n")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "unknown" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_unwritable_output_exits_1(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    path = _write_cfg(tmp_path, **{"duration_s": 0.2})
    from volstream.cli import EXIT_RUNTIME
    assert main(["run", "--config", path, "--out",
                 str(blocker / "nested"), "--quiet"]) == EXIT_RUNTIME
    assert "runtime error" in capsys.readouterr().err


def test_seed_and_out_overrides(tmp_path):
    path = _write_cfg(tmp_path, **{"duration_s": 0.2})
    out2 = str(tmp_path / "elsewhere")
    assert main(["run", "--config", path, "--seed", "42", "--out", out2,
                 "--quiet"]) == EXIT_OK
    dumped = open(os.path.join(out2, "config.txt")).read()
    assert "seed=42" in dumped


def test_env_override(tmp_path, monkeypatch):
    path = _write_cfg(tmp_path, **{"duration_s": 0.2})
    monkeypatch.setenv("VOLSTREAM_SEED", "1234")
    out = str(tmp_path / "env_out")
    assert main(["run", "--config", path, "--out", out, "--quiet"]) == EXIT_OK
    assert "seed=1234" in open(os.path.join(out, "config.txt")).read()


def test_env_override_bad_value_exits_2(tmp_path, monkeypatch, capsys):
    path = _write_cfg(tmp_path)
    monkeypatch.setenv("VOLSTREAM_HOP1_LOSS_RATE", "2.0")
    assert main(["run", "--config", path]) == EXIT_CONFIG
    assert "hop1.loss_rate" in capsys.readouterr().err


def test_probe_scenario_runs(tmp_path, capsys):
    assert main(["run", "--scenario", "paper-probe",
                 "--out", str(tmp_path / "probe")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "serialization" in out
    assert os.path.exists(tmp_path / "probe" / "probe.csv")


def test_rerun_same_seed_same_csv_via_cli(tmp_path):
    path = _write_cfg(tmp_path, **{"duration_s": 0.2})
    a, b = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["run", "--config", path, "--out", a, "--quiet"]) == EXIT_OK
    assert main(["run", "--config", path, "--out", b, "--quiet"]) == EXIT_OK
    assert open(os.path.join(a, "frames.csv"), "rb").read() == \
        open(os.path.join(b, "frames.csv"), "rb").read()
