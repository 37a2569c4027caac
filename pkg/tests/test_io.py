import json

import numpy as np
import pytest

from emgshift.io import (SCHEMA_VERSIONS, atomic_path, read_emg_csv, read_manifest, write_emg_csv,
                         write_frames_csv, write_manifest, write_text_atomic)
from emgshift.signal import FeatureFrame, SignalBuffer


def test_emg_csv_round_trip(tmp_path):
    x = np.random.default_rng(0).normal(scale=1e-4, size=(3, 50))
    buf = SignalBuffer(x, 2000.0, ["a", "b", "c"], t0_s=0.25)
    write_emg_csv(buf, tmp_path / "e.csv")
    back = read_emg_csv(tmp_path / "e.csv")
    assert back.sample_rate_hz == 2000.0
    assert back.channel_names == ["a", "b", "c"]
    assert back.t0_s == pytest.approx(0.25)
    assert np.allclose(back.samples, x, rtol=1e-6, atol=0)


def test_emg_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,ch01\n0,1\n")
    with pytest.raises(ValueError):
        read_emg_csv(p)


def test_emg_csv_rejects_ragged_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time_s,ch01,ch02\n0,1\n0.1,2\n")
    with pytest.raises(ValueError):
        read_emg_csv(p)


def test_manifest_round_trip(tmp_path):
    doc = write_manifest(tmp_path / "m.json", subject=2, session=3, electrode_position="left",
                         sample_rate_hz=2000, channels=["ch01"], extra_field=1)
    back = read_manifest(tmp_path / "m.json")
    assert back == doc and back["schema_version"] == SCHEMA_VERSIONS["manifest"]


def test_manifest_validation(tmp_path):
    with pytest.raises(ValueError):
        write_manifest(tmp_path / "m.json", subject=1, session=1, electrode_position="up",
                       sample_rate_hz=2000, channels=[])
    (tmp_path / "x.json").write_text(json.dumps({"subject": 1}))
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "x.json")


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"
    write_text_atomic(target, "old")
    with pytest.raises(RuntimeError):
        with atomic_path(target) as tmp:
            tmp.write_text("half")
            raise RuntimeError("crash")
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_frames_csv(tmp_path):
    frames = [FeatureFrame(np.arange(6.0).reshape(3, 2) + k, 1.0 + 0.05 * k, 100) for k in range(2)]
    write_frames_csv(frames, tmp_path / "f.csv")
    data = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert data.shape == (2, 7)
    assert np.allclose(data[1, 1:], frames[1].values.ravel())
    with pytest.raises(ValueError):
        write_frames_csv([], tmp_path / "g.csv")
