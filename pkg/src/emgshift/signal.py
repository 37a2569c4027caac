"""Streaming EMG preprocessing.

The chain is band-pass (causal SOS cascade) -> decimation -> sliding-window
z-score normalization -> trailing slice -> rectification -> 100 ms / 50 ms
segmentation with the segments stacked along the channel axis.  Frames are
emitted every 50 ms of signal time.

Arrays are ``[channels x time]`` inside :class:`SignalBuffer` and
``[time x channels]`` inside :class:`FeatureFrame` (the layout the CNN reads).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

WORKING_RATE_HZ = 500.0
SEGMENT_MS = 100
SEGMENT_HOP_MS = 50
FRAME_RATE_HZ = 20.0
NORM_WINDOWS_MS = (200, 400, 600, 800, 1000)


class ConfigError(ValueError):
    """Invalid processing configuration (band edges, window lengths, ...)."""


class InsufficientHistoryError(ValueError):
    """A window needs more samples than the buffer holds."""


@dataclass
class SignalBuffer:
    """Multi-channel time series.

    ``t0_s`` is the time of the first sample; stages that consume history
    (rolling normalization, warm-up trimming) advance it so emission times
    stay on the trial clock.
    """

    samples: np.ndarray
    sample_rate_hz: float
    channel_names: list[str] = field(default_factory=list)
    t0_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim == 1:
            self.samples = self.samples[None, :]
        if self.samples.ndim != 2:
            raise ValueError("samples must be 2-D [channels x time]")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")
        if not self.channel_names:
            self.channel_names = [f"ch{i + 1:02d}" for i in range(self.n_channels)]
        if len(self.channel_names) != self.n_channels:
            raise ValueError("channel_names does not match channel count")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def replace(self, samples: np.ndarray, sample_rate_hz: float | None = None,
                t0_s: float | None = None) -> "SignalBuffer":
        return SignalBuffer(
            samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            list(self.channel_names),
            self.t0_s if t0_s is None else t0_s,
        )


@dataclass(frozen=True)
class FilterSpec:
    order: int = 6
    low_hz: float = 40.0
    high_hz: float = 200.0


@dataclass(frozen=True)
class SwnConfig:
    window_len_ms: int = 1000
    mode: str = "rolling"  # or "block"
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.mode not in ("rolling", "block"):
            raise ConfigError(f"unknown SWN mode {self.mode!r}")
        if self.window_len_ms <= 0:
            raise ConfigError("window_len_ms must be positive")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")

    def window_samples(self, sample_rate_hz: float = WORKING_RATE_HZ) -> int:
        n = self.window_len_ms * sample_rate_hz / 1000.0
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(
                f"{self.window_len_ms} ms is not a whole number of samples at {sample_rate_hz} Hz")
        return int(round(n))


@dataclass
class FeatureFrame:
    values: np.ndarray  # [segment_len_samples x concat_channels]
    t_emit: float
    feature_len_ms: int

    @property
    def n_segments(self) -> int:
        return n_segments(self.feature_len_ms)


# ---------------------------------------------------------------------------
# filtering and decimation


def design_bandpass(spec: FilterSpec, sample_rate_hz: float) -> np.ndarray:
    """Butterworth band-pass as second-order sections, shape ``(n_sections, 6)``.

    ``spec.order`` is the prototype order handed to the designer, so the
    band-pass has ``2 * order`` poles.  Band edges are pre-warped: the
    digital response is exactly -3 dB at ``low_hz`` and ``high_hz``.
    """
    nyq = sample_rate_hz / 2.0
    if not (0 < spec.low_hz < spec.high_hz < nyq):
        raise ConfigError(
            f"band edges must satisfy 0 < low < high < Nyquist ({nyq} Hz); "
            f"got {spec.low_hz}-{spec.high_hz} Hz")
    if spec.order < 1:
        raise ConfigError("filter order must be >= 1")
    return sps.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass",
                      fs=sample_rate_hz, output="sos")


def filter_stream(sos: np.ndarray, buf: SignalBuffer) -> SignalBuffer:
    """Causal per-channel filtering from a zero initial state."""
    return buf.replace(sps.sosfilt(sos, buf.samples, axis=1))


def decimate(buf: SignalBuffer, factor: int, *, band_high_hz: float | None = None) -> SignalBuffer:
    """Keep every ``factor``-th sample starting at index 0.

    No anti-alias stage is applied; pass ``band_high_hz`` (the upper edge of
    the preceding band-pass) to have the call refuse factors that would alias.
    """
    if int(factor) != factor or factor < 1:
        raise ConfigError("decimation factor must be a positive integer")
    factor = int(factor)
    new_rate = buf.sample_rate_hz / factor
    if band_high_hz is not None and band_high_hz >= new_rate / 2.0:
        raise ConfigError(
            f"decimating by {factor} aliases: band edge {band_high_hz} Hz >= "
            f"new Nyquist {new_rate / 2.0} Hz")
    return buf.replace(buf.samples[:, ::factor], sample_rate_hz=new_rate)


# ---------------------------------------------------------------------------
# sliding-window normalization


def _window_stats(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # population statistics over the last axis
    return np.mean(windows, axis=-1), np.std(windows, axis=-1)


def _safe_zscore(x: np.ndarray, mean: np.ndarray, std: np.ndarray, eps: float) -> np.ndarray:
    ok = std >= eps
    out = np.zeros(np.broadcast(x, mean, std).shape)
    np.divide(x - mean, std, out=out, where=np.broadcast_to(ok, out.shape))
    return out


def swn_window(x: np.ndarray, window_len: int, t: int | None = None, epsilon: float = 1e-8) -> np.ndarray:
    """Normalize the ``window_len`` samples ending at index ``t`` (inclusive).

    Literal block form: every sample of the window shares the window's mean
    and population standard deviation.  ``x`` is ``[channels x time]`` (a 1-D
    series is treated as one channel).  Returns ``[channels x window_len]``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    t = n - 1 if t is None else t
    if window_len < 1:
        raise ConfigError("window length must be >= 1")
    if t >= n or t - window_len + 1 < 0:
        raise InsufficientHistoryError(
            f"window of {window_len} samples ending at {t} does not fit in {n} samples")
    start = t - window_len + 1
    # same strided view the rolling path reduces over, so statistics match bit for bit
    win = sliding_window_view(x, window_len, axis=1)[:, start:start + 1, :]
    mean, std = _window_stats(win)
    return _safe_zscore(win[:, 0, :], mean, std, epsilon)


def _rolling_swn(x: np.ndarray, window_len: int, epsilon: float, chunk: int = 2048) -> np.ndarray:
    views = sliding_window_view(x, window_len, axis=1)
    n_out = views.shape[1]
    out = np.empty((x.shape[0], n_out))
    for a in range(0, n_out, chunk):
        b = min(a + chunk, n_out)
        mean, std = _window_stats(views[:, a:b, :])
        out[:, a:b] = _safe_zscore(views[:, a:b, -1], mean, std, epsilon)
    return out


def swn(buf: SignalBuffer, cfg: SwnConfig) -> SignalBuffer:
    """Sliding-window z-score normalization, per channel.

    ``rolling``: sample ``n`` is normalized by the statistics of the window
    ending at ``n``; the output starts at the first full window, so it is
    ``window_len - 1`` samples shorter and ``t0_s`` moves accordingly.

    ``block``: only the trailing window is returned, every sample normalized
    by that window's statistics.

    Windows whose standard deviation is below ``cfg.epsilon`` map to zeros.
    """
    L = cfg.window_samples(buf.sample_rate_hz)
    if buf.n_samples < L:
        raise InsufficientHistoryError(
            f"SWN window needs {L} samples, buffer has {buf.n_samples}")
    if cfg.mode == "block":
        y = swn_window(buf.samples, L, epsilon=cfg.epsilon)
        t0 = buf.t0_s + (buf.n_samples - L) / buf.sample_rate_hz
        return buf.replace(y, t0_s=t0)
    y = _rolling_swn(buf.samples, L, cfg.epsilon)
    return buf.replace(y, t0_s=buf.t0_s + (L - 1) / buf.sample_rate_hz)


def rectify(buf: SignalBuffer) -> SignalBuffer:
    return buf.replace(np.abs(buf.samples))


# ---------------------------------------------------------------------------
# segmentation


def n_segments(feature_len_ms: int) -> int:
    if feature_len_ms < SEGMENT_MS or (feature_len_ms - SEGMENT_MS) % SEGMENT_HOP_MS:
        raise ConfigError(
            f"feature length {feature_len_ms} ms is not a whole number of "
            f"{SEGMENT_MS} ms segments at {SEGMENT_HOP_MS} ms hop")
    return (feature_len_ms - SEGMENT_MS) // SEGMENT_HOP_MS + 1


def _ms_to_samples(ms: float, fs: float) -> int:
    n = ms * fs / 1000.0
    if abs(n - round(n)) > 1e-9:
        raise ConfigError(f"{ms} ms is not a whole number of samples at {fs} Hz")
    return int(round(n))


def _segment_index(feature_len_ms: int, fs: float) -> np.ndarray:
    """Offsets ``[n_seg, seg_len]`` of every segment sample inside the slice."""
    n_seg = n_segments(feature_len_ms)
    seg = _ms_to_samples(SEGMENT_MS, fs)
    hop = _ms_to_samples(SEGMENT_HOP_MS, fs)
    return np.arange(n_seg)[:, None] * hop + np.arange(seg)[None, :]


def segment_and_concat(buf: SignalBuffer, feature_len_ms: int) -> FeatureFrame:
    """Cut the trailing ``feature_len_ms`` into 100 ms segments (50 ms hop)
    and stack them along the channel axis.

    Column ``k * n_channels + c`` of the result is channel ``c`` in segment
    ``k`` (oldest segment first).
    """
    n_seg = n_segments(feature_len_ms)
    Lf = _ms_to_samples(feature_len_ms, buf.sample_rate_hz)
    if buf.n_samples < Lf:
        raise InsufficientHistoryError(
            f"feature window needs {Lf} samples, buffer has {buf.n_samples}")
    tail = buf.samples[:, -Lf:]
    idx = _segment_index(feature_len_ms, buf.sample_rate_hz)
    seg = tail[:, idx]  # [C, n_seg, seg_len]
    values = seg.transpose(2, 1, 0).reshape(idx.shape[1], n_seg * buf.n_channels)
    t_emit = buf.t0_s + buf.n_samples / buf.sample_rate_hz
    return FeatureFrame(values, t_emit, feature_len_ms)


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class PipelineConfig:
    filter: FilterSpec = FilterSpec()
    input_rate_hz: float = 2000.0
    decimation: int = 4
    swn: SwnConfig | None = SwnConfig()
    feature_len_ms: int = 1000
    frame_rate_hz: float = FRAME_RATE_HZ
    warmup_s: float = 0.5

    @property
    def working_rate_hz(self) -> float:
        return self.input_rate_hz / self.decimation

    def history_s(self) -> float:
        """Signal time needed before the first frame can be emitted."""
        fs = self.working_rate_hz
        norm = 0.0
        if self.swn is not None:
            L = self.swn.window_samples(fs)
            norm = (L - 1) / fs if self.swn.mode == "rolling" else 0.0
        return self.warmup_s + norm + self.feature_len_ms / 1000.0


def preprocess(raw: SignalBuffer, cfg: PipelineConfig) -> SignalBuffer:
    """Filter, decimate and drop the warm-up transient."""
    if abs(raw.sample_rate_hz - cfg.input_rate_hz) > 1e-9:
        raise ConfigError(
            f"pipeline expects {cfg.input_rate_hz} Hz input, got {raw.sample_rate_hz} Hz")
    sos = design_bandpass(cfg.filter, raw.sample_rate_hz)
    dec = decimate(filter_stream(sos, raw), cfg.decimation, band_high_hz=cfg.filter.high_hz)
    skip = int(round(cfg.warmup_s * dec.sample_rate_hz))
    if skip >= dec.n_samples:
        raise InsufficientHistoryError("signal shorter than the filter warm-up")
    return dec.replace(dec.samples[:, skip:], t0_s=dec.t0_s + skip / dec.sample_rate_hz)


def emission_times(stream: SignalBuffer, feature_len_ms: int, frame_rate_hz: float = FRAME_RATE_HZ,
                   t_start_s: float | None = None, stride: int = 1) -> np.ndarray:
    """Emission instants on the ``1 / frame_rate_hz`` grid whose feature
    window lies inside ``stream``."""
    fs = stream.sample_rate_hz
    hop = _ms_to_samples(1000.0 / frame_rate_hz, fs)
    Lf = _ms_to_samples(feature_len_ms, fs)
    first = int(round(stream.t0_s * fs)) + Lf
    last = int(round(stream.t0_s * fs)) + stream.n_samples
    if t_start_s is not None:
        first = max(first, int(np.ceil(t_start_s * fs - 1e-9)))
    e0 = -(-first // hop) * hop
    idx = np.arange(e0, last + 1, hop * stride)
    return idx / fs


def extract_frames(stream: SignalBuffer, feature_len_ms: int, t_emit: Sequence[float]) -> np.ndarray:
    """Vectorized slice -> rectify -> segment/concat for many emission times.

    Returns ``[n_frames x seg_len x concat_channels]``; frame ``i`` equals
    ``segment_and_concat(rectify(stream up to t_emit[i]))``.
    """
    fs = stream.sample_rate_hz
    Lf = _ms_to_samples(feature_len_ms, fs)
    base = int(round(stream.t0_s * fs))
    ends = np.rint(np.asarray(t_emit, dtype=np.float64) * fs).astype(np.int64) - base
    if ends.size and (ends.min() - Lf < 0 or ends.max() > stream.n_samples):
        raise InsufficientHistoryError("emission time outside the available stream")
    idx = _segment_index(feature_len_ms, fs)  # [n_seg, seg]
    pos = (ends - Lf)[:, None, None] + idx[None]  # [F, n_seg, seg]
    seg = np.abs(stream.samples[:, pos])  # [C, F, n_seg, seg]
    F, n_seg, seg_len = pos.shape
    return seg.transpose(1, 3, 2, 0).reshape(F, seg_len, n_seg * stream.n_channels)


def normalized_stream(raw: SignalBuffer, cfg: PipelineConfig) -> SignalBuffer:
    """Everything up to (and including) rolling SWN; block mode is per frame."""
    pre = preprocess(raw, cfg)
    if cfg.swn is not None and cfg.swn.mode == "rolling":
        return swn(pre, cfg.swn)
    return pre


def run_pipeline(raw: SignalBuffer, cfg: PipelineConfig = PipelineConfig(),
                 t_start_s: float | None = None) -> Iterator[FeatureFrame]:
    """Yield one :class:`FeatureFrame` per 50 ms of signal time.

    The first ``cfg.warmup_s`` seconds never reach a frame.  In block mode
    every frame re-normalizes its own trailing window, which requires the
    feature window to fit inside the normalization window.
    """
    stream = normalized_stream(raw, cfg)
    block = cfg.swn is not None and cfg.swn.mode == "block"
    fs = stream.sample_rate_hz
    if block:
        L = cfg.swn.window_samples(fs)
        Lf = _ms_to_samples(cfg.feature_len_ms, fs)
        if Lf > L:
            raise ConfigError("block-mode SWN needs feature_len_ms <= window_len_ms")
        start = stream.t0_s + (L - Lf) / fs
        t_start_s = start if t_start_s is None else max(t_start_s, start)
    times = emission_times(stream, cfg.feature_len_ms, cfg.frame_rate_hz, t_start_s)
    base = int(round(stream.t0_s * fs))
    for t in times:
        if block:
            end = int(round(t * fs)) - base
            win = swn_window(stream.samples, L, end - 1, cfg.swn.epsilon)
            piece = stream.replace(win, t0_s=t - L / fs)
            yield segment_and_concat(rectify(piece), cfg.feature_len_ms)
        else:
            yield FeatureFrame(extract_frames(stream, cfg.feature_len_ms, [t])[0], float(t),
                               cfg.feature_len_ms)


class StreamingPipeline:
    """Chunk-at-a-time version of :func:`run_pipeline` (rolling SWN or none).

    Feed raw ``[channels x n]`` chunks to :meth:`push`; it returns the frames
    whose emission time has been reached.  Output matches the batch pipeline.
    """

    def __init__(self, cfg: PipelineConfig, n_channels: int):
        if cfg.swn is not None and cfg.swn.mode != "rolling":
            raise ConfigError("streaming pipeline supports rolling SWN only")
        self.cfg = cfg
        self.n_channels = n_channels
        self.sos = design_bandpass(cfg.filter, cfg.input_rate_hz)
        self.zi = np.zeros((self.sos.shape[0], n_channels, 2))
        fs = cfg.working_rate_hz
        decimate(SignalBuffer(np.zeros((1, 1)), cfg.input_rate_hz), cfg.decimation,
                 band_high_hz=cfg.filter.high_hz)
        self._skip = int(round(cfg.warmup_s * fs))
        self._L = cfg.swn.window_samples(fs) if cfg.swn is not None else 1
        self._Lf = _ms_to_samples(cfg.feature_len_ms, fs)
        self._hop = _ms_to_samples(1000.0 / cfg.frame_rate_hz, fs)
        self._raw_seen = 0
        self._dec_seen = 0  # decimated samples produced so far (absolute index)
        self._hist = np.zeros((n_channels, 0))  # post-warm-up decimated samples
        self._hist_start = self._skip  # absolute index of _hist[:, 0]
        self._norm = np.zeros((n_channels, 0))
        self._norm_start = None
        self._next_emit = None

    def push(self, chunk: np.ndarray) -> list[FeatureFrame]:
        chunk = np.atleast_2d(np.asarray(chunk, dtype=np.float64))
        if chunk.shape[0] != self.n_channels:
            raise ValueError("chunk channel count mismatch")
        if chunk.shape[1] == 0:
            return []
        y, self.zi = sps.sosfilt(self.sos, chunk, axis=1, zi=self.zi)
        q = self.cfg.decimation
        first = (-self._raw_seen) % q
        dec = y[:, first::q]
        self._raw_seen += chunk.shape[1]
        abs0 = self._dec_seen
        self._dec_seen += dec.shape[1]
        keep = max(0, self._skip - abs0)
        if keep < dec.shape[1]:
            self._hist = np.concatenate([self._hist, dec[:, keep:]], axis=1)
        return self._advance()

    def _advance(self) -> list[FeatureFrame]:
        fs = self.cfg.working_rate_hz
        L = self._L
        n_hist = self._hist.shape[1]
        if n_hist < L:
            return []
        # new normalized samples: windows ending at hist index >= already done
        done = 0 if self._norm_start is None else (
            self._norm_start - self._hist_start) + self._norm.shape[1]
        first_end = max(done, L - 1)
        if first_end < n_hist:
            seg = self._hist[:, first_end - L + 1:]
            if self.cfg.swn is not None:
                new = _rolling_swn(seg, L, self.cfg.swn.epsilon)
            else:
                new = seg.copy()
            if self._norm_start is None:
                self._norm_start = self._hist_start + first_end
            self._norm = np.concatenate([self._norm, new], axis=1)
        frames = []
        norm_end = self._norm_start + self._norm.shape[1]
        if self._next_emit is None:
            e = self._norm_start + self._Lf
            self._next_emit = -(-e // self._hop) * self._hop
        while self._next_emit <= norm_end:
            e = self._next_emit
            buf = SignalBuffer(self._norm, fs, t0_s=self._norm_start / fs)
            frames.append(FeatureFrame(extract_frames(buf, self.cfg.feature_len_ms, [e / fs])[0],
                                       e / fs, self.cfg.feature_len_ms))
            self._next_emit += self._hop
        # drop samples no future window or frame can reach
        drop = max(0, (self._next_emit - self._Lf) - self._norm_start)
        drop = min(drop, self._norm.shape[1])
        self._norm = self._norm[:, drop:]
        self._norm_start += drop
        drop = max(0, self._hist.shape[1] - (L - 1))
        self._hist = self._hist[:, drop:]
        self._hist_start += drop
        return frames
