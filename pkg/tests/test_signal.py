import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import freqz_sos, sosfilt

from emgshift.signal import (ConfigError, FeatureFrame, FilterSpec, InsufficientHistoryError,
                             PipelineConfig, SignalBuffer, StreamingPipeline, SwnConfig,
                             decimate, design_bandpass, emission_times, extract_frames,
                             n_segments, preprocess, rectify, run_pipeline, segment_and_concat,
                             swn, swn_window)


def _buf(x, fs=500.0, t0=0.0):
    return SignalBuffer(np.atleast_2d(x), fs, t0_s=t0)


# -- SignalBuffer -----------------------------------------------------------

def test_buffer_rejects_nan():
    with pytest.raises(ValueError):
        SignalBuffer(np.array([[0.0, np.nan]]), 500.0)


def test_buffer_rejects_bad_rate():
    with pytest.raises(ValueError):
        SignalBuffer(np.zeros((2, 4)), 0.0)


def test_buffer_default_names():
    b = SignalBuffer(np.zeros((3, 10)), 500.0)
    assert b.channel_names == ["ch01", "ch02", "ch03"]
    assert b.duration_s == pytest.approx(0.02)


# -- filter -------------------------------------------------------------------

def _gain(sos, f, fs=2000.0):
    # independent evaluation: product of biquad transfer functions at z = e^{jw}
    z = np.exp(1j * 2 * np.pi * f / fs)
    h = 1.0 + 0j
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return abs(h)


def test_bandpass_is_12_poles_in_6_sections():
    sos = design_bandpass(FilterSpec(), 2000.0)
    assert sos.shape == (6, 6)


@pytest.mark.parametrize("f,lo,hi", [(40, 0.98 / np.sqrt(2), 1.02 / np.sqrt(2)),
                                     (200, 0.98 / np.sqrt(2), 1.02 / np.sqrt(2)),
                                     (100, 0.99, 1.01)])
def test_bandpass_gain_points(f, lo, hi):
    sos = design_bandpass(FilterSpec(), 2000.0)
    assert lo <= _gain(sos, f) <= hi


@pytest.mark.parametrize("f", [10.0, 400.0])
def test_bandpass_stopband(f):
    sos = design_bandpass(FilterSpec(), 2000.0)
    assert 20 * np.log10(_gain(sos, f)) <= -20


def test_gain_oracle_matches_freqz():
    sos = design_bandpass(FilterSpec(), 2000.0)
    w, h = freqz_sos(sos, worN=[40.0, 123.0, 200.0], fs=2000.0)
    assert np.allclose(np.abs(h), [_gain(sos, f) for f in w], rtol=1e-10)


@pytest.mark.parametrize("spec", [FilterSpec(low_hz=200, high_hz=40), FilterSpec(high_hz=1000),
                                  FilterSpec(low_hz=0)])
def test_bandpass_rejects_bad_band(spec):
    with pytest.raises(ConfigError):
        design_bandpass(spec, 2000.0)


def test_decimate_alias_guard():
    with pytest.raises(ConfigError):
        decimate(_buf(np.zeros(100), 2000.0), 4, band_high_hz=260.0)


def test_decimate_keeps_every_fourth():
    x = np.arange(20.0)
    d = decimate(_buf(x, 2000.0), 4, band_high_hz=200.0)
    assert d.sample_rate_hz == 500.0
    assert np.array_equal(d.samples[0], x[::4])


# -- SWN ----------------------------------------------------------------------

def test_swn_block_statistics():
    rng = np.random.default_rng(0)
    y = swn_window(rng.normal(3.0, 2.0, size=(4, 500)), 500)
    assert np.abs(y.mean(axis=1)).max() < 1e-10
    assert np.abs(y.std(axis=1) - 1).max() < 1e-10


def test_swn_constant_gives_zero():
    y = swn(_buf(np.full((2, 600), 7.5)), SwnConfig(window_len_ms=200))
    assert np.all(y.samples == 0)


def test_swn_rolling_matches_block_tail():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 400))
    L = 100
    roll = swn(_buf(x), SwnConfig(window_len_ms=200)).samples
    for n in range(L - 1, 400):
        assert np.array_equal(roll[:, n - L + 1], swn_window(x, L, n)[:, -1])


def test_swn_rolling_shortens_and_shifts_clock():
    out = swn(_buf(np.random.default_rng(2).normal(size=(1, 300)), t0=1.0), SwnConfig(window_len_ms=200))
    assert out.n_samples == 300 - 99
    assert out.t0_s == pytest.approx(1.0 + 99 / 500)


def test_swn_block_mode_returns_window():
    out = swn(_buf(np.random.default_rng(3).normal(size=(2, 300))), SwnConfig(200, mode="block"))
    assert out.n_samples == 100


def test_swn_window_needs_history():
    with pytest.raises(InsufficientHistoryError):
        swn_window(np.zeros((1, 10)), 20)


@pytest.mark.parametrize("ms", [0, -200])
def test_swn_rejects_bad_window(ms):
    with pytest.raises(ConfigError):
        SwnConfig(window_len_ms=ms)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 100.0), b=st.floats(-10.0, 10.0), seed=st.integers(0, 2**16))
def test_swn_affine_invariance(a, b, seed):
    x = np.random.default_rng(seed).normal(size=(2, 250))
    cfg = SwnConfig(window_len_ms=200)
    assert np.allclose(swn(_buf(a * x + b), cfg).samples, swn(_buf(x), cfg).samples, atol=1e-9, rtol=0)


# -- segmentation ---------------------------------------------------------------

@pytest.mark.parametrize("ms,n", [(100, 1), (200, 3), (600, 11), (1000, 19)])
def test_segment_count(ms, n):
    assert n_segments(ms) == n


@pytest.mark.parametrize("ms", [50, 125, 230])
def test_segment_count_rejects(ms):
    with pytest.raises(ConfigError):
        n_segments(ms)


def test_segment_layout():
    # channel c of segment k sits in column k*C + c
    C, fs = 2, 500.0
    x = np.vstack([np.arange(100.0), 1000 + np.arange(100.0)])
    f = segment_and_concat(_buf(x, fs), 200)
    assert f.values.shape == (50, 3 * C)
    assert np.array_equal(f.values[:, 0], np.arange(50.0))
    assert np.array_equal(f.values[:, 1], 1000 + np.arange(50.0))
    assert np.array_equal(f.values[:, 2], np.arange(25.0, 75.0))
    assert np.array_equal(f.values[:, 5], 1000 + np.arange(50.0, 100.0))
    assert f.t_emit == pytest.approx(0.2)


@pytest.mark.parametrize("ms", [200, 400, 600, 800, 1000])
def test_extract_frames_matches_single_frame(ms):
    rng = np.random.default_rng(4)
    stream = _buf(rng.normal(size=(3, 1500)), t0=0.7)
    t = emission_times(stream, ms)
    X = extract_frames(stream, ms, t)
    for i in (0, len(t) // 2, len(t) - 1):
        e = int(round((t[i] - 0.7) * 500))
        ref = segment_and_concat(rectify(_buf(stream.samples[:, :e], t0=0.7)), ms)
        assert np.array_equal(X[i], ref.values)
        assert ref.t_emit == pytest.approx(t[i])


def test_emission_times_on_grid_and_monotone():
    stream = _buf(np.zeros((1, 2000)), t0=0.5)
    t = emission_times(stream, 1000)
    assert t[0] == pytest.approx(1.5)
    assert np.allclose(np.diff(t), 0.05)
    assert t[-1] <= 0.5 + 2000 / 500 + 1e-12


# -- pipeline -----------------------------------------------------------------

def _raw(seconds=4.0, C=12, seed=0):
    rng = np.random.default_rng(seed)
    return SignalBuffer(rng.normal(scale=1e-4, size=(C, int(seconds * 2000))), 2000.0)


def test_pipeline_frame_count_and_shape():
    raw = _raw(60.0, C=2)
    frames = list(run_pipeline(raw, PipelineConfig()))
    assert len(frames) <= 1200
    assert frames[0].values.shape == (50, 2 * 19)
    assert np.all(np.diff([f.t_emit for f in frames]) > 0)


def test_pipeline_without_swn_matches_manual_chain():
    raw = _raw()
    cfg = PipelineConfig(swn=None, feature_len_ms=600)
    frames = list(run_pipeline(raw, cfg))
    pre = preprocess(raw, cfg)
    ref = sosfilt(design_bandpass(FilterSpec(), 2000.0), raw.samples, axis=1)[:, ::4][:, 250:]
    assert np.array_equal(pre.samples, ref)
    e = int(round((frames[0].t_emit - pre.t0_s) * 500))
    manual = segment_and_concat(rectify(pre.replace(pre.samples[:, :e])), 600)
    assert np.array_equal(frames[0].values, manual.values)


def test_pipeline_constant_input_with_swn_is_zero():
    raw = SignalBuffer(np.full((2, 8000), 3e-4), 2000.0)
    frames = list(run_pipeline(raw, PipelineConfig(swn=SwnConfig(200), feature_len_ms=200)))
    assert frames and all(np.all(f.values == 0) for f in frames)


def test_pipeline_is_deterministic():
    raw = _raw()
    a = [f.values for f in run_pipeline(raw, PipelineConfig(feature_len_ms=400))]
    b = [f.values for f in run_pipeline(raw, PipelineConfig(feature_len_ms=400))]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_pipeline_block_mode_requires_short_feature():
    with pytest.raises(ConfigError):
        list(run_pipeline(_raw(), PipelineConfig(swn=SwnConfig(200, mode="block"), feature_len_ms=400)))


@pytest.mark.parametrize("swn_cfg", [SwnConfig(400), None])
@pytest.mark.parametrize("chunk", [1, 37, 1000])
def test_streaming_matches_batch(swn_cfg, chunk):
    raw = _raw(3.0, C=3, seed=5)
    cfg = PipelineConfig(swn=swn_cfg, feature_len_ms=400)
    batch = list(run_pipeline(raw, cfg))
    sp = StreamingPipeline(cfg, 3)
    live = []
    for a in range(0, raw.n_samples, chunk):
        live.extend(sp.push(raw.samples[:, a:a + chunk]))
    assert len(live) == len(batch)
    for x, y in zip(live, batch):
        assert x.t_emit == pytest.approx(y.t_emit)
        assert np.array_equal(x.values, y.values)


def test_feature_frame_segments():
    assert FeatureFrame(np.zeros((50, 36)), 1.0, 200).n_segments == 3


# -- spec-level examples ----------------------------------------------------------

def _direct_form(sos, x):
    """Cascade of biquads as explicit difference equations."""
    y = np.asarray(x, dtype=float)
    for b0, b1, b2, a0, a1, a2 in sos:
        out = np.zeros_like(y)
        for n in range(y.size):
            acc = b0 * y[n]
            if n >= 1:
                acc += b1 * y[n - 1] - a1 * out[n - 1]
            if n >= 2:
                acc += b2 * y[n - 2] - a2 * out[n - 2]
            out[n] = acc / a0
        y = out
    return y


def test_filter_impulse_response_matches_difference_equation():
    from emgshift.signal import filter_stream
    sos = design_bandpass(FilterSpec(), 2000.0)
    imp = np.zeros(400)
    imp[0] = 1.0
    out = filter_stream(sos, SignalBuffer(imp[None], 2000.0)).samples[0]
    assert np.allclose(out, _direct_form(sos, imp), atol=1e-14)


def test_filter_zero_and_dc():
    from emgshift.signal import filter_stream
    sos = design_bandpass(FilterSpec(), 2000.0)
    assert np.all(filter_stream(sos, SignalBuffer(np.zeros((2, 100)), 2000.0)).samples == 0)
    assert _gain(sos, 1e-9) < 1e-12


def test_filter_passes_100hz_sinusoid():
    from emgshift.signal import filter_stream
    sos = design_bandpass(FilterSpec(), 2000.0)
    t = np.arange(8000) / 2000.0
    y = filter_stream(sos, SignalBuffer(np.sin(2 * np.pi * 100 * t)[None], 2000.0)).samples[0]
    amp = np.abs(y[t >= 0.5]).max()
    assert abs(amp - 1.0) < 0.01


def test_decimate_examples():
    d = decimate(_buf(np.arange(8.0), 2000.0), 4, band_high_hz=200.0)
    assert d.samples[0].tolist() == [0.0, 4.0]
    same = decimate(_buf(np.arange(8.0), 2000.0), 1, band_high_hz=200.0)
    assert np.array_equal(same.samples, _buf(np.arange(8.0)).samples) and same.sample_rate_hz == 2000.0


def test_swn_hand_case():
    y = swn_window(np.array([[1.0, 2.0, 3.0]]), 3)
    assert np.allclose(y, [[-1.2247, 0.0, 1.2247]], atol=1e-4)
    assert np.all(swn_window(np.full((1, 4), 5.0), 4) == 0)


@pytest.mark.parametrize("ms,n", [(200, 100), (400, 200), (600, 300), (800, 400), (1000, 500)])
def test_swn_window_lengths(ms, n):
    assert SwnConfig(ms).window_samples(500.0) == n


def test_rectify():
    b = rectify(_buf(np.array([-1.0, 2.0, -3.0])))
    assert b.samples[0].tolist() == [1.0, 2.0, 3.0]
    assert np.array_equal(rectify(b).samples, b.samples)


def test_single_segment_is_trailing_window():
    x = np.random.default_rng(6).normal(size=(2, 120))
    f = segment_and_concat(_buf(x), 100)
    assert np.array_equal(f.values, x[:, -50:].T)


@pytest.mark.parametrize("ms", [200, 400, 600, 800, 1000])
def test_segment_channel_count(ms):
    f = segment_and_concat(_buf(np.zeros((12, 600))), ms)
    assert f.values.shape == (50, 12 * ((ms - 100) // 50 + 1))
