"""Loopback smoke tests for the real-socket mode.

These assert functional outcomes (delivery, identities, report shape), not
absolute latencies: timings on a shared CI host are whatever they are.
"""

import csv
import os
from decimal import Decimal

from volstream.config import validate
from volstream.sockets import run_socket_orchestrated

from conftest import make_small_config


def _socket_cfg(tmp_path, base_port, **extra):
    cfg = make_small_config(out_dir=str(tmp_path / "out"), **{
        "mode": "socket",
        "duration_s": 1.0,
        "capture.fps": 10,
        "capture.app_tx_ms": 2.0,
        "render.app_rx_ms": 3.0,
        "capture.color_bytes": 20_000,
        "capture.depth_bytes": 8_000,
        "capture.audio_bytes": 2_000,
        "segment_payload_size": 8_000,
        "hop1.pacing_bps": [30_000_000],
        "hop2.pacing_bps": [30_000_000],
        "transport.deadline_ms": 500.0,
        "socket.base_port": base_port,
        **extra,
    })
    assert validate(cfg) == []
    return cfg


def test_loopback_stream_end_to_end(tmp_path):
    # role processes carry internal hard deadlines, so this cannot hang
    cfg = _socket_cfg(tmp_path, base_port=47410)
    results = run_socket_orchestrated(cfg)
    assert len(results) == 1
    _records, summary = results[0]
    assert summary.frames_completed > 0
    frames_path = os.path.join(cfg.out_dir, "frames.csv")
    assert os.path.exists(frames_path)
    rows = list(csv.DictReader(open(frames_path)))
    assert len(rows) == cfg.frame_count()
    done = [r for r in rows if r["completed"] == "1"]
    assert len(done) >= cfg.frame_count() - 2    # shared-host slack
    for row in done:
        assert Decimal(row["service_l_ms"]) == (Decimal(row["app_tx_ms"])
                                                + Decimal(row["frame_l_ms"])
                                                + Decimal(row["app_rx_ms"]))
        assert Decimal(row["frame_l_ms"]) == (Decimal(row["network_l_ms"])
                                              + Decimal(row["frame_rx_ms"]))
        assert Decimal(row["frame_rx_ms"]) >= 0
    assert os.path.exists(os.path.join(cfg.out_dir, "summary.csv"))
    for role in ("sender", "relay", "receiver0"):
        assert os.path.exists(os.path.join(cfg.out_dir, f"{role}_log.json"))


def test_socket_mode_via_cli(tmp_path, capsys):
    from volstream.cli import EXIT_OK, main
    from volstream.config import render_config
    cfg = _socket_cfg(tmp_path, base_port=47610, **{"duration_s": 0.6})
    path = tmp_path / "sock.cfg"
    path.write_text(render_config(cfg))
    assert main(["run", "--config", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ignored" in out          # link models do not apply on sockets
    assert "service_l" in out


def test_loopback_two_receivers(tmp_path):
    cfg = _socket_cfg(tmp_path, base_port=47520, receivers=2,
                      **{"duration_s": 0.8})
    results = run_socket_orchestrated(cfg)
    assert len(results) == 2
    for r, (_records, summary) in enumerate(results):
        assert summary.frames_completed >= cfg.frame_count() - 2, r
    assert os.path.exists(os.path.join(cfg.out_dir, "frames_r1.csv"))
