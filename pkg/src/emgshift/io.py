"""File formats: EMG CSV with JSON sidecar manifests, frame CSV export and
atomic writes."""
from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .signal import FeatureFrame, SignalBuffer

POSITIONS = ("left", "center", "right")
SCHEMA_VERSIONS = {
    "emg_csv": 1,
    "manifest": 1,
    "labels_csv": 1,
    "task_csv": 1,
    "frames_csv": 1,
    "results_csv": 1,
    "summary_json": 1,
    "checkpoint": 1,
    "train_log_csv": 1,
}


@contextmanager
def atomic_path(path: str | Path):
    """Yield a temp path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path: str | Path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)


def channel_header(n_channels: int) -> list[str]:
    return [f"ch{i + 1:02d}" for i in range(n_channels)]


def write_emg_csv(buf: SignalBuffer, path: str | Path) -> None:
    """CSV with ``time_s,ch01,...`` and one row per sample (volts)."""
    t = buf.t0_s + np.arange(buf.n_samples) / buf.sample_rate_hz
    data = np.column_stack([t, buf.samples.T])
    header = ",".join(["time_s"] + list(buf.channel_names))
    with atomic_path(path) as tmp:
        np.savetxt(tmp, data, fmt=["%.6f"] + ["%.6e"] * buf.n_channels,
                   delimiter=",", header=header, comments="")


def read_emg_csv(path: str | Path, sample_rate_hz: float | None = None) -> SignalBuffer:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "time_s":
        raise ValueError(f"{path}: first column must be time_s")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: row width does not match header")
    t = data[:, 0]
    if sample_rate_hz is None:
        if t.size < 2:
            raise ValueError(f"{path}: cannot infer sample rate from one row")
        sample_rate_hz = round(1.0 / float(np.median(np.diff(t))), 6)
    return SignalBuffer(np.ascontiguousarray(data[:, 1:].T), sample_rate_hz,
                        list(header[1:]), float(t[0]) if t.size else 0.0)


def write_manifest(path: str | Path, *, subject: int | str, session: int | str,
                   electrode_position: str, sample_rate_hz: float, channels, **extra) -> dict:
    if electrode_position not in POSITIONS:
        raise ValueError(f"electrode_position must be one of {POSITIONS}")
    doc = {
        "schema_version": SCHEMA_VERSIONS["manifest"],
        "subject": subject,
        "session": session,
        "electrode_position": electrode_position,
        "sample_rate_hz": float(sample_rate_hz),
        "channels": list(channels),
        **extra,
    }
    write_text_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def read_manifest(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    missing = {"subject", "session", "electrode_position", "sample_rate_hz", "channels"} - doc.keys()
    if missing:
        raise ValueError(f"{path}: manifest lacks {sorted(missing)}")
    if doc["electrode_position"] not in POSITIONS:
        raise ValueError(f"{path}: bad electrode_position {doc['electrode_position']!r}")
    return doc


def write_frames_csv(frames: list[FeatureFrame], path: str | Path) -> None:
    """One row per frame: emission time then the row-major flattened frame."""
    if not frames:
        raise ValueError("no frames to write")
    L, C = frames[0].values.shape
    header = ["t_emit_s"] + [f"s{i:02d}_c{j:03d}" for i in range(L) for j in range(C)]
    data = np.column_stack([[f.t_emit for f in frames],
                            np.stack([f.values.reshape(-1) for f in frames])])
    with atomic_path(path) as tmp:
        np.savetxt(tmp, data, fmt="%.9g", delimiter=",", header=",".join(header), comments="")
