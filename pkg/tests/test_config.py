import pytest

from volstream.config import (ScenarioConfig, apply_overrides, env_overrides,
                              flat_keys, load_config_file, parse_config_text,
                              render_config, validate)
from volstream.errors import ConfigError
from volstream.scenarios import CANNED, scenario_config, scenario_names


def test_defaults_are_valid():
    assert validate(ScenarioConfig()) == []


def test_loss_rate_out_of_range_names_constraint():
    cfg = ScenarioConfig()
    cfg.hop1.loss_rate = 1.5
    diags = validate(cfg)
    assert any(d.key == "hop1.loss_rate" and "[0, 1]" in d.constraint for d in diags)


def test_zero_pacing_names_the_hop():
    cfg = ScenarioConfig()
    cfg.hop2.pacing_bps = [0]
    diags = validate(cfg)
    assert any(d.key == "hop2.pacing_bps" for d in diags)


def test_zero_duration_is_invalid():
    cfg = ScenarioConfig()
    cfg.duration_s = 0.0
    assert any(d.key == "duration_s" for d in validate(cfg))


def test_unknown_key_is_rejected():
    cfg, diags = parse_config_text("no.such.key=1\n")
    assert any("unknown" in d.constraint for d in diags)


def test_parse_round_trip():
    cfg = ScenarioConfig()
    cfg.seed = 99
    cfg.hop1.loss_rate = 0.25
    cfg.hop2.pacing_bps = [123, 456]
    cfg.capture.busywork = True
    text = render_config(cfg)
    cfg2, diags = parse_config_text(text)
    assert diags == []
    assert cfg2.seed == 99
    assert cfg2.hop1.loss_rate == 0.25
    assert cfg2.hop2.pacing_bps == [123, 456]
    assert cfg2.capture.busywork is True
    assert render_config(cfg2) == text


def test_parse_comments_and_bad_lines():
    text = "# comment\n\nseed=5\nbroken line\ncapture.fps=60\n"
    cfg, diags = parse_config_text(text)
    assert cfg.seed == 5
    assert cfg.capture.fps == 60
    assert len(diags) == 1 and "key=value" in diags[0].constraint


def test_scientific_notation_for_int_keys():
    cfg, diags = parse_config_text("hop1.bandwidth_bps=2e9\nhop1.pacing_bps=1.5e9\n")
    assert diags == []
    assert cfg.hop1.bandwidth_bps == 2_000_000_000
    assert cfg.hop1.pacing_bps == [1_500_000_000]


def test_env_override_mapping():
    environ = {"VOLSTREAM_HOP1_LOSS_RATE": "0.125", "VOLSTREAM_SEED": "77",
               "VOLSTREAM_NODE_RELAY_RX_SW_US": "40",
               "UNRELATED": "x"}
    overrides = env_overrides(environ)
    assert overrides == {"hop1.loss_rate": "0.125", "seed": "77",
                         "node.relay.rx_sw_us": "40"}
    cfg = ScenarioConfig()
    assert apply_overrides(cfg, overrides) == []
    assert cfg.hop1.loss_rate == 0.125
    assert cfg.seed == 77
    assert cfg.node_relay.rx_sw_us == 40


def test_every_flat_key_is_unique():
    keys = flat_keys(ScenarioConfig())
    assert len(keys) == len(set(keys))
    env_names = {k.upper().replace(".", "_") for k in keys}
    assert len(env_names) == len(keys)     # env mapping is collision-free


def test_socket_mode_restricts_experiment():
    cfg = ScenarioConfig()
    cfg.mode = "socket"
    cfg.experiment = "probe"
    assert any(d.key == "experiment" for d in validate(cfg))


def test_canned_scenarios_build_and_validate():
    assert scenario_names() == sorted(CANNED)
    for name in scenario_names():
        cfg = scenario_config(name)
        assert validate(cfg) == [], name
    with pytest.raises(ConfigError):
        scenario_config("nope")


def test_load_config_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "absent.cfg"))
