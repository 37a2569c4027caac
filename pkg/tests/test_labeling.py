import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from emgshift.kinematics import MinJerkSegment, min_jerk_coeffs, min_jerk_eval
from emgshift.labeling import (EXTENSION, FLEXION, REST, LabelSeries, LabelThresholds,
                               angular_velocity, label_pipeline, read_labels_csv, runs,
                               step1_threshold, step2_drop_short, step3_extend_onsets,
                               step4_bridge_transitions, step5_absorb_short, write_labels_csv)

F, E, R = FLEXION, EXTENSION, REST


def _series(labels, omega=None):
    labels = np.asarray(labels)
    return LabelSeries(labels, np.zeros(labels.size) if omega is None else omega)


def random_theta(rng, n=1200, rate=20.0):
    """Smooth random elbow trajectory: rests and bursts of motion."""
    w = np.zeros(n)
    i = 0
    while i < n:
        i += rng.integers(5, 40)
        k = min(int(rng.integers(3, 20)), max(n - i, 0))
        if k == 0:
            break
        w[i:i + k] = rng.choice([-1, 1]) * rng.uniform(0.5, 8.0) * np.hanning(k + 2)[1:-1][:n - i]
        i += k
    return np.cumsum(w + 0.2 * rng.standard_normal(n)) / rate


def test_thresholds_validate():
    with pytest.raises(ValueError):
        LabelThresholds(th_omega1=1.0, th_omega2=2.0)
    with pytest.raises(ValueError):
        LabelThresholds(th_s=0)
    assert LabelThresholds().w_samples(20.0) == 4


def test_runs():
    s, e, v = runs([0, 0, 1, 1, 1, 2, 0])
    assert s.tolist() == [0, 2, 5, 6] and e.tolist() == [2, 5, 6, 7] and v.tolist() == [0, 1, 2, 0]


# -- angular velocity --------------------------------------------------------------

def test_velocity_constant_and_ramp():
    assert np.all(angular_velocity(np.full(10, 0.4)) == 0)
    assert np.allclose(angular_velocity(np.arange(30) / 20.0 * 2.5), 2.5)


def test_velocity_central_difference_oracle():
    t = np.arange(400) / 20.0
    theta = np.sin(0.7 * t)
    w = angular_velocity(theta)
    central = np.gradient(theta, 1 / 20.0)
    # forward difference sits half a sample ahead: error bounded by dt * max|theta''|
    assert np.max(np.abs(w[1:-1] - central[1:-1])) <= 0.7**2 / 20.0


def test_velocity_needs_two_samples():
    with pytest.raises(ValueError):
        angular_velocity([1.0])


# -- step 1 ------------------------------------------------------------------------

@pytest.mark.parametrize("w,lab", [(0.0, R), (4.0, F), (-4.0, E), (3.0, R), (-3.0, R)])
def test_step1_constant(w, lab):
    assert np.all(step1_threshold(np.full(8, w)).labels == lab)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-10, 10)))
def test_step1_odd_symmetry(w):
    a = step1_threshold(w).labels
    b = step1_threshold(-w).labels
    swap = np.array([R, E, F])
    assert np.array_equal(b, swap[a])


# -- step 2 ------------------------------------------------------------------------

def test_step2_examples():
    blip = _series([R] * 5 + [F] * 2 + [R] * 5)  # 100 ms
    assert np.all(step2_drop_short(blip).labels == R)
    keep = _series([R] * 5 + [F] * 6 + [R] * 5)  # 300 ms
    assert np.array_equal(step2_drop_short(keep).labels, keep.labels)
    rest = _series([R] * 10)
    assert np.all(step2_drop_short(rest).labels == R)


def test_step2_boundary_is_kept():
    s = _series([R] * 3 + [E] * 4 + [R] * 3)  # exactly 200 ms
    assert np.array_equal(step2_drop_short(s).labels, s.labels)


label_arrays = arrays(np.int64, st.integers(1, 80), elements=st.sampled_from([R, F, E]))


@settings(max_examples=100, deadline=None)
@given(label_arrays)
def test_step2_idempotent(lab):
    once = step2_drop_short(_series(lab))
    assert np.array_equal(step2_drop_short(once).labels, once.labels)


# -- step 3 ------------------------------------------------------------------------

def test_step3_triangle_crossings():
    rate = 20.0
    t = np.arange(60) / rate
    peak_t, half = 1.5, 1.0
    w = np.maximum(0.0, 4.0 * (1 - np.abs(t - peak_t) / half))
    s = step2_drop_short(step1_threshold(w))
    out = step3_extend_onsets(s)
    # analytic crossings of the triangle
    on3 = peak_t - half * (1 - 3 / 4)
    on1 = peak_t - half * (1 - 1 / 4)
    assert np.flatnonzero(s.labels == F)[0] == np.flatnonzero(t > on3)[0]
    idx = np.flatnonzero(out.labels == F)
    assert idx[0] == np.flatnonzero(t > on1)[0]
    assert idx[-1] == np.flatnonzero(t < peak_t + half * (1 - 1 / 4))[-1]


def test_step3_saturation_and_identity():
    w = np.full(30, 2.0)
    w[10:15] = 5.0
    s = step2_drop_short(step1_threshold(w))
    assert np.all(step3_extend_onsets(s).labels == F)
    rest = _series([R] * 10, np.full(10, 2.0))
    assert np.all(step3_extend_onsets(rest).labels == R)


# -- step 4 ------------------------------------------------------------------------

def test_step4_steep_gap_relabeled():
    rate = 20.0
    lab = np.array([F] * 6 + [R] * 4 + [F] * 6)
    w = np.zeros(lab.size)
    w[:6] = 4.0
    w[6:10] = 1.2 + 8.0 * np.arange(4) / rate  # slope 8 rad/s^2, mean above 1
    w[10:] = 4.0
    out = step4_bridge_transitions(_series(lab, w))
    assert np.all(out.labels == F)


def test_step4_ols_slope_oracle():
    rate = 20.0
    rng = np.random.default_rng(0)
    gap = 1.5 + rng.normal(size=5)
    t = np.arange(5) / rate
    slope = np.polyfit(t, gap, 1)[0]
    lab = np.array([F] * 5 + [R] * 5 + [F] * 5)
    w = np.concatenate([np.full(5, 4.0), gap, np.full(5, 4.0)])
    relabeled = bool(np.all(step4_bridge_transitions(_series(lab, w)).labels[5:10] == F))
    assert relabeled == (gap.mean() >= 1.0 and slope >= 5.0)


def test_step4_flat_gap_unchanged():
    lab = np.array([E] * 5 + [R] * 4 + [E] * 5)
    w = np.concatenate([np.full(5, -4.0), np.full(4, -2.0), np.full(5, -4.0)])
    assert np.array_equal(step4_bridge_transitions(_series(lab, w)).labels, lab)


def test_step4_edge_gap_unchanged():
    lab = np.array([R] * 4 + [F] * 5)
    w = np.concatenate([1.0 + 10 * np.arange(4) / 20, np.full(5, 4.0)])
    assert np.array_equal(step4_bridge_transitions(_series(lab, w)).labels, lab)


def test_step4_single_sample_gap_unchanged():
    lab = np.array([F] * 5 + [R] + [F] * 5)
    w = np.full(lab.size, 4.0)
    assert np.array_equal(step4_bridge_transitions(_series(lab, w)).labels, lab)


# -- step 5 ------------------------------------------------------------------------

def test_step5_examples():
    s = _series([F] * 10 + [R] * 2 + [F] * 10)
    assert np.all(step5_absorb_short(s).labels == F)
    head = _series([E] * 2 + [R] * 10)
    assert np.all(step5_absorb_short(head).labels == R)
    clean = _series([R] * 5 + [F] * 5)
    assert np.array_equal(step5_absorb_short(clean).labels, clean.labels)


@settings(max_examples=100, deadline=None)
@given(label_arrays)
def test_step5_idempotent_and_no_short_runs(lab):
    once = step5_absorb_short(_series(lab))
    assert np.array_equal(step5_absorb_short(once).labels, once.labels)
    s, e, v = runs(once.labels)
    assert len(v) == 1 or np.all(e - s >= 4)


# -- pipeline -----------------------------------------------------------------------

def test_pipeline_rest_trial():
    assert np.all(label_pipeline(np.full(100, 0.8)).labels == R)


def test_pipeline_min_jerk_cycle():
    rate = 20.0
    up = min_jerk_coeffs(MinJerkSegment(1.0, 1.6, (0.5,), (2.0,)))
    down = min_jerk_coeffs(MinJerkSegment(2.6, 3.2, (2.0,), (0.5,)))
    t = np.arange(int(4.5 * rate)) / rate
    theta = np.full(t.size, 0.5)
    m1 = (t >= 1.0) & (t <= 1.6)
    m2 = (t >= 2.6) & (t <= 3.2)
    theta[m1] = min_jerk_eval(up, 1.0, t[m1])
    theta[(t > 1.6) & (t < 2.6)] = 2.0
    theta[m2] = min_jerk_eval(down, 2.6, t[m2])
    out = label_pipeline(theta, rate)
    s, e, v = runs(out.labels)
    moves = [(a, b, x) for a, b, x in zip(s, e, v) if x != R]
    assert [x for _, _, x in moves] == [F, E]
    assert all(b - a >= 4 for a, b, _ in moves)


def test_pipeline_random_trials_have_no_short_runs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        out = label_pipeline(random_theta(rng))
        s, e, v = runs(out.labels)
        assert len(v) == 1 or np.min(e - s) >= 4
        assert np.any(out.labels != R)


def test_pipeline_deterministic_and_length():
    th = random_theta(np.random.default_rng(1))
    a, b = label_pipeline(th), label_pipeline(th.copy())
    assert a.labels.size == th.size and np.array_equal(a.labels, b.labels)


def test_labels_csv_round_trip(tmp_path):
    s = _series([R, F, F, E, R])
    write_labels_csv(s, tmp_path / "l.csv", t0_s=1.0)
    t, lab = read_labels_csv(tmp_path / "l.csv")
    assert np.array_equal(lab, s.labels)
    assert np.allclose(t, 1.0 + np.arange(5) / 20)
    assert s.names() == ["rest", "flexion", "flexion", "extension", "rest"]


def test_label_series_validates():
    with pytest.raises(ValueError):
        LabelSeries(np.array([0, 3]), np.zeros(2))
    with pytest.raises(ValueError):
        LabelSeries(np.array([0, 1]), np.zeros(3))
