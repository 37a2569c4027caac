"""Rest / flexion / extension labels from elbow angular velocity."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

REST, FLEXION, EXTENSION = 0, 1, 2
LABEL_NAMES = ("rest", "flexion", "extension")
LABEL_RATE_HZ = 20.0


@dataclass(frozen=True)
class LabelThresholds:
    th_omega1: float = 3.0  # rad/s, movement detection
    th_omega2: float = 1.0  # rad/s, onset hysteresis
    th_s: float = 5.0       # rad/s^2, slope for bridging gaps
    w_t_ms: float = 200.0

    def __post_init__(self):
        if min(self.th_omega1, self.th_omega2, self.th_s, self.w_t_ms) <= 0:
            raise ValueError("thresholds must be positive")
        if not self.th_omega2 < self.th_omega1:
            raise ValueError("th_omega2 must be below th_omega1")

    def w_samples(self, rate_hz: float = LABEL_RATE_HZ) -> int:
        return max(1, int(round(self.w_t_ms * rate_hz / 1000.0)))


@dataclass
class LabelSeries:
    labels: np.ndarray
    omega: np.ndarray
    rate_hz: float = LABEL_RATE_HZ

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if self.labels.shape != self.omega.shape:
            raise ValueError("labels and omega must have the same length")
        if np.any((self.labels < 0) | (self.labels > 2)):
            raise ValueError("labels must be 0 (rest), 1 (flexion) or 2 (extension)")

    def names(self) -> list[str]:
        return [LABEL_NAMES[i] for i in self.labels]

    def with_labels(self, labels) -> "LabelSeries":
        return LabelSeries(labels, self.omega, self.rate_hz)


def runs(labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Maximal constant runs as ``(starts, stops, values)``, stops exclusive."""
    lab = np.asarray(labels)
    if lab.size == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    cut = np.flatnonzero(np.diff(lab)) + 1
    starts = np.concatenate([[0], cut])
    stops = np.concatenate([cut, [lab.size]])
    return starts, stops, lab[starts]


def angular_velocity(theta, rate_hz: float = LABEL_RATE_HZ) -> np.ndarray:
    """Forward difference times the sample rate; last value repeated."""
    th = np.asarray(theta, dtype=np.float64)
    if th.ndim != 1 or th.size < 2:
        raise ValueError("need at least two angle samples")
    w = np.diff(th) * rate_hz
    return np.append(w, w[-1])


def step1_threshold(omega, th: LabelThresholds = LabelThresholds(),
                    rate_hz: float = LABEL_RATE_HZ) -> LabelSeries:
    w = np.asarray(omega, dtype=np.float64)
    lab = np.full(w.shape, REST, dtype=np.int64)
    lab[w > th.th_omega1] = FLEXION
    lab[w < -th.th_omega1] = EXTENSION
    return LabelSeries(lab, w, rate_hz)


def step2_drop_short(series: LabelSeries, w_t_ms: float = 200.0) -> LabelSeries:
    """Movement runs shorter than ``w_t_ms`` become rest."""
    w = LabelThresholds(w_t_ms=w_t_ms).w_samples(series.rate_hz)
    lab = series.labels.copy()
    for a, b, v in zip(*runs(lab)):
        if v != REST and b - a < w:
            lab[a:b] = REST
    return series.with_labels(lab)


def step3_extend_onsets(series: LabelSeries, th_omega2: float = 1.0) -> LabelSeries:
    """Grow each movement run over neighbouring rest samples while
    ``|omega| > th_omega2``."""
    lab = series.labels.copy()
    fast = np.abs(series.omega) > th_omega2
    n = lab.size
    for a, b, v in zip(*runs(series.labels)):
        if v == REST:
            continue
        i = a - 1
        while i >= 0 and lab[i] == REST and fast[i]:
            lab[i] = v
            i -= 1
        i = b
        while i < n and lab[i] == REST and fast[i]:
            lab[i] = v
            i += 1
    return series.with_labels(lab)


def _ols_slope(t: np.ndarray, y: np.ndarray) -> float:
    if t.size < 2:
        return 0.0
    tc = t - t.mean()
    return float(tc @ (y - y.mean()) / (tc @ tc))


def step4_bridge_transitions(series: LabelSeries, th_omega2: float = 1.0,
                             th_s: float = 5.0) -> LabelSeries:
    """Relabel rest gaps between two movements that look like a continuous
    movement: mean omega beyond ``th_omega2`` and least-squares slope
    ``>= th_s``."""
    lab = series.labels.copy()
    starts, stops, vals = runs(series.labels)
    t = np.arange(lab.size) / series.rate_hz
    for k in range(1, len(vals) - 1):
        if vals[k] != REST or vals[k - 1] == REST or vals[k + 1] == REST:
            continue
        a, b = starts[k], stops[k]
        w = series.omega[a:b]
        s = _ols_slope(t[a:b], w)
        mean = w.mean()
        if mean >= th_omega2 and s >= th_s:
            lab[a:b] = FLEXION
        elif mean < -th_omega2 and s >= th_s:
            lab[a:b] = EXTENSION
    return series.with_labels(lab)


def step5_absorb_short(series: LabelSeries, w_t_ms: float = 200.0) -> LabelSeries:
    """Runs shorter than ``w_t_ms`` take the preceding run's label (the
    following run's when at the start)."""
    w = LabelThresholds(w_t_ms=w_t_ms).w_samples(series.rate_hz)
    lab = series.labels.copy()
    while True:
        starts, stops, vals = runs(lab)
        if len(vals) < 2:
            break
        short = np.flatnonzero(stops - starts < w)
        if short.size == 0:
            break
        k = short[0]
        lab[starts[k]:stops[k]] = vals[k + 1] if k == 0 else vals[k - 1]
    return series.with_labels(lab)


def label_pipeline(theta, rate_hz: float = LABEL_RATE_HZ,
                   th: LabelThresholds = LabelThresholds()) -> LabelSeries:
    """Five-step labeling of an elbow-angle series sampled at ``rate_hz``."""
    s = step1_threshold(angular_velocity(theta, rate_hz), th, rate_hz)
    s = step2_drop_short(s, th.w_t_ms)
    s = step3_extend_onsets(s, th.th_omega2)
    s = step4_bridge_transitions(s, th.th_omega2, th.th_s)
    return step5_absorb_short(s, th.w_t_ms)


def write_labels_csv(series: LabelSeries, path: str | Path, t0_s: float = 0.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "label"])
        for i, name in enumerate(series.names()):
            w.writerow([repr(t0_s + i / series.rate_hz), name])


def read_labels_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(time_s, label_index)``."""
    times, labs = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["time_s", "label"]:
            raise ValueError(f"unexpected label header {header}")
        for row in r:
            times.append(float(row[0]))
            labs.append(LABEL_NAMES.index(row[1]))
    return np.asarray(times), np.asarray(labs, dtype=np.int64)
