"""Synthetic 12-channel surface EMG driven by generated arm tasks.

Each channel is a band-limited noise carrier whose envelope follows the
activation of the muscle group under it.  Moving the electrode array
(left/right of the center placement) rescales every channel and changes the
direction of crosstalk between neighbouring channels.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfiltfilt

from .io import POSITIONS, SCHEMA_VERSIONS, channel_header, write_emg_csv, write_manifest, write_text_atomic
from .kinematics import TASK_RATE_HZ, generate_task, resample_task, write_task_csv
from .labeling import LABEL_RATE_HZ, LabelSeries, LabelThresholds, label_pipeline, write_labels_csv
from .signal import SignalBuffer

EMG_RATE_HZ = 2000.0
FLEXOR, EXTENSOR, NEUTRAL = "flexor", "extensor", "neutral"
# biceps x4, brachialis, brachioradialis, anconeus, triceps lateral x2,
# triceps long x2, extensor carpi radialis longus
MUSCLES = ("biceps",) * 4 + ("brachialis", "brachioradialis", "anconeus") \
    + ("triceps_lateral",) * 2 + ("triceps_long",) * 2 + ("ecrl",)
MUSCLE_GROUP = {
    "biceps": FLEXOR, "brachialis": FLEXOR, "brachioradialis": FLEXOR,
    "anconeus": EXTENSOR, "triceps_lateral": EXTENSOR, "triceps_long": EXTENSOR,
    "ecrl": NEUTRAL,
}
NEUTRAL_SHARE = 0.3


@dataclass(frozen=True)
class MuscleModel:
    groups: tuple = tuple(MUSCLE_GROUP[m] for m in MUSCLES)
    base_gain_v: float = 1e-4
    gain_jitter: float = 0.25  # per-subject channel gain spread, +-fraction
    tau_ms: float = 50.0
    omega_ref: float = 3.0

    def __post_init__(self):
        if len(self.groups) != 12:
            raise ValueError("the muscle model covers 12 channels")
        if not (self.base_gain_v > 0 and self.tau_ms > 0 and self.omega_ref > 0):
            raise ValueError("gains, time constant and omega_ref must be positive")
        if not 0 <= self.gain_jitter < 1:
            raise ValueError("gain_jitter must be in [0, 1)")

    def channel_gains(self, rng: np.random.Generator) -> np.ndarray:
        return self.base_gain_v * rng.uniform(1 - self.gain_jitter, 1 + self.gain_jitter, 12)


@dataclass(frozen=True)
class ShiftModel:
    gain_low: tuple = (0.3, 0.5)
    gain_high: tuple = (1.6, 2.0)
    crosstalk: float = 0.1
    noise_floor_v: float = 3e-6

    def __post_init__(self):
        lo = min(self.gain_low[0], self.gain_high[0])
        hi = max(self.gain_low[1], self.gain_high[1])
        if not (0.3 <= lo and hi <= 2.0):
            raise ValueError("position gains must lie in [0.3, 2.0]")
        if not 0 <= self.crosstalk <= 0.5:
            raise ValueError("crosstalk must lie in [0, 0.5]")
        if self.noise_floor_v < 0:
            raise ValueError("noise floor must be non-negative")

    def position_gains(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Center is the reference placement; left and right move every
        channel in opposite directions."""
        sign = rng.choice([-1.0, 1.0], 12)
        out = {"center": np.ones(12)}
        for pos, s in (("left", sign), ("right", -sign)):
            lo = rng.uniform(*self.gain_low, 12)
            hi = rng.uniform(*self.gain_high, 12)
            out[pos] = np.where(s > 0, hi, lo)
        return out

    def mixing(self, position: str, n: int = 12) -> np.ndarray:
        """Crosstalk matrix ``M`` with ``x = M @ s``."""
        M = np.eye(n)
        k = self.crosstalk
        for c in range(n):
            if position == "left" and c > 0:
                M[c, c - 1] += k
            elif position == "right" and c < n - 1:
                M[c, c + 1] += k
            elif position == "center":
                if c > 0:
                    M[c, c - 1] += k / 2
                if c < n - 1:
                    M[c, c + 1] += k / 2
        return M


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 3
    trials_per_position: int = 4
    duration_s: float = 60.0
    seed: int = 0
    muscle: MuscleModel = field(default_factory=MuscleModel)
    shift: ShiftModel = field(default_factory=ShiftModel)
    thresholds: LabelThresholds = field(default_factory=LabelThresholds)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def carrier_noise(rng: np.random.Generator, n_channels: int, n_samples: int,
                  fs: float = EMG_RATE_HZ, clip: float = 4.0) -> np.ndarray:
    """Unit-variance 40-200 Hz noise, clipped at +-``clip``."""
    sos = butter(4, [40.0, 200.0], btype="bandpass", fs=fs, output="sos")
    x = sosfiltfilt(sos, rng.standard_normal((n_channels, n_samples)), axis=1)
    x /= x.std(axis=1, keepdims=True)
    return np.clip(x, -clip, clip)


def activations(theta_elb: np.ndarray, muscle: MuscleModel, duration_s: float,
                fs: float = EMG_RATE_HZ) -> np.ndarray:
    """Per-group activation at ``fs`` from the 120 Hz elbow angle: rectified,
    saturating angular velocity through a first-order low-pass."""
    t_task = np.arange(theta_elb.size) / TASK_RATE_HZ
    omega = np.gradient(theta_elb, 1.0 / TASK_RATE_HZ)
    n = int(round(duration_s * fs))
    w = np.interp(np.arange(n) / fs, t_task, omega)
    drive = {
        FLEXOR: np.clip(w / muscle.omega_ref, 0.0, 1.0),
        EXTENSOR: np.clip(-w / muscle.omega_ref, 0.0, 1.0),
        NEUTRAL: NEUTRAL_SHARE * np.clip(np.abs(w) / muscle.omega_ref, 0.0, 1.0),
    }
    a = np.exp(-1.0 / (fs * muscle.tau_ms / 1000.0))
    out = {g: lfilter([1 - a], [1, -a], d) for g, d in drive.items()}
    return np.stack([out[g] for g in muscle.groups])


@dataclass
class Trial:
    emg: SignalBuffer
    labels: LabelSeries
    task_kind: int
    theta_elb: np.ndarray  # 120 Hz
    task: object = None


def subject_models(cfg: SynthConfig, subject: int):
    rng = _rng(cfg.seed, subject, 0)
    return cfg.muscle.channel_gains(rng), cfg.shift.position_gains(rng)


def task_kind_for(trial: int, position: str) -> int:
    return 1 + (trial + POSITIONS.index(position)) % 5


def synthesize_trial(cfg: SynthConfig, subject: int, position: str, trial: int) -> Trial:
    """One labeled trial; identical arguments give bit-identical output."""
    if position not in POSITIONS:
        raise ValueError(f"position must be one of {POSITIONS}")
    chan_gain, pos_gain = subject_models(cfg, subject)
    p_idx = POSITIONS.index(position)
    kind = task_kind_for(trial, position)
    task = generate_task(kind, np.random.SeedSequence(cfg.seed, spawn_key=(subject, 1 + p_idx, trial, 1)),
                         duration_s=cfg.duration_s)
    rng = _rng(cfg.seed, subject, 1 + p_idx, trial, 2)
    act = activations(task.theta_elb, cfg.muscle, cfg.duration_s)
    n = act.shape[1]
    s = chan_gain[:, None] * act * carrier_noise(rng, 12, n)
    x = pos_gain[position][:, None] * (cfg.shift.mixing(position) @ s)
    if cfg.shift.noise_floor_v > 0:
        x += cfg.shift.noise_floor_v * np.clip(rng.standard_normal(x.shape), -4.0, 4.0)
    emg = SignalBuffer(x, EMG_RATE_HZ, channel_header(12))
    labels = label_pipeline(resample_task(task, LABEL_RATE_HZ), LABEL_RATE_HZ, cfg.thresholds)
    return Trial(emg, labels, kind, task.theta_elb, task)


def trial_stem(root: str | Path, subject: int, position: str, trial: int) -> Path:
    return Path(root) / f"subject_{subject:02d}" / f"position_{position}" / f"trial_{trial:02d}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_dataset(cfg: SynthConfig, root: str | Path, subjects=None) -> dict:
    """Write every trial (EMG, labels, task angles, manifest) under ``root``
    and return the dataset index, also saved as ``root/dataset.json``."""
    root = Path(root)
    index = {"schema_version": SCHEMA_VERSIONS["manifest"], "config": asdict(cfg), "trials": []}
    for subject in (range(1, cfg.n_subjects + 1) if subjects is None else subjects):
        for position in POSITIONS:
            for trial in range(1, cfg.trials_per_position + 1):
                tr = synthesize_trial(cfg, subject, position, trial)
                stem = trial_stem(root, subject, position, trial)
                stem.parent.mkdir(parents=True, exist_ok=True)
                emg_path = stem.with_suffix(".csv")
                write_emg_csv(tr.emg, emg_path)
                write_labels_csv(tr.labels, stem.with_suffix(".labels.csv"))
                write_task_csv(tr.task, stem.with_suffix(".task.csv"))
                rest = float(np.mean(tr.labels.labels == 0))
                write_manifest(stem.with_suffix(".json"), subject=subject, session=trial,
                               electrode_position=position, sample_rate_hz=EMG_RATE_HZ,
                               channels=tr.emg.channel_names, task_kind=tr.task_kind,
                               label_rate_hz=LABEL_RATE_HZ, rest_fraction=rest,
                               emg_sha256=_sha256(emg_path))
                index["trials"].append({
                    "subject": subject, "position": position, "trial": trial,
                    "path": str(stem.relative_to(root)), "task_kind": tr.task_kind,
                    "rest_fraction": rest,
                })
    write_text_atomic(root / "dataset.json", json.dumps(index, indent=2, sort_keys=True) + "\n")
    return index
