import pytest

from volstream.config import ScenarioConfig, apply_overrides, validate


def _textify(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def make_small_config(out_dir="out", **overrides) -> ScenarioConfig:
    """A fast two-segment-frame scenario for integration-level tests."""
    cfg = ScenarioConfig()
    cfg.duration_s = 1.0
    cfg.out_dir = out_dir
    cfg.capture.color_bytes = 12_000
    cfg.capture.depth_bytes = 6_000
    cfg.capture.audio_bytes = 2_000
    cfg.segment_payload_size = 4_000
    cfg.transport.packet_payload_size = 1_200
    cfg.hop1.pacing_bps = [100_000_000]
    cfg.hop2.pacing_bps = [100_000_000]
    diags = apply_overrides(cfg, {k: _textify(v) for k, v in overrides.items()})
    assert diags == [], diags
    assert validate(cfg) == []
    return cfg


@pytest.fixture
def small_cfg(tmp_path):
    def factory(**overrides):
        return make_small_config(out_dir=str(tmp_path / "out"), **overrides)
    return factory
