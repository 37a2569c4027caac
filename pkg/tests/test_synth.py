import hashlib
import json

import numpy as np
import pytest

from emgshift.io import read_emg_csv, read_manifest
from emgshift.labeling import read_labels_csv
from emgshift.signal import SwnConfig, swn
from emgshift.synth import (EXTENSOR, FLEXOR, MUSCLE_GROUP, MUSCLES, MuscleModel, ShiftModel,
                            SynthConfig, activations, carrier_noise, generate_dataset,
                            subject_models, synthesize_trial)

SHORT = SynthConfig(duration_s=20.0)


def _group_idx(group):
    return np.array([MUSCLE_GROUP[m] == group for m in MUSCLES])


def test_muscle_map_covers_twelve_sites():
    assert len(MUSCLES) == 12
    assert _group_idx(FLEXOR).sum() == 6 and _group_idx(EXTENSOR).sum() == 5


@pytest.mark.parametrize("kw", [dict(gain_low=(0.2, 0.5)), dict(gain_high=(1.5, 2.5)),
                                dict(crosstalk=0.6), dict(noise_floor_v=-1.0)])
def test_shift_model_validation(kw):
    with pytest.raises(ValueError):
        ShiftModel(**kw)


def test_muscle_model_validation():
    with pytest.raises(ValueError):
        MuscleModel(base_gain_v=0)
    with pytest.raises(ValueError):
        MuscleModel(groups=("flexor",) * 11)


def test_position_gains_differ_everywhere():
    _, gains = subject_models(SynthConfig(), 1)
    assert np.all(gains["center"] == 1)
    for a, b in [("left", "center"), ("right", "center"), ("left", "right")]:
        assert np.all(gains[a] != gains[b])
    for g in gains.values():
        assert np.all((g >= 0.3) & (g <= 2.0))


def test_mixing_is_neighbour_crosstalk():
    M = ShiftModel(crosstalk=0.2).mixing("left", 4)
    assert np.allclose(M, np.eye(4) + 0.2 * np.eye(4, k=-1))
    assert np.allclose(ShiftModel(crosstalk=0.2).mixing("right", 4), np.eye(4) + 0.2 * np.eye(4, k=1))
    assert np.allclose(ShiftModel(crosstalk=0.0).mixing("center"), np.eye(12))


def test_carrier_noise_unit_variance_and_band():
    x = carrier_noise(np.random.default_rng(0), 2, 40000)
    assert np.allclose(x.std(axis=1), 1.0, atol=0.02)
    spec = np.abs(np.fft.rfft(x[0])) ** 2
    f = np.fft.rfftfreq(x.shape[1], 1 / 2000)
    assert spec[(f > 40) & (f < 200)].sum() / spec.sum() > 0.9


def test_activation_zero_when_still():
    a = activations(np.full(1200, 1.0), MuscleModel(), 10.0)
    assert a.shape == (12, 20000) and np.all(a == 0)


def test_trial_is_deterministic_and_bounded():
    a = synthesize_trial(SHORT, 1, "left", 2)
    b = synthesize_trial(SHORT, 1, "left", 2)
    assert np.array_equal(a.emg.samples, b.emg.samples)
    assert np.array_equal(a.labels.labels, b.labels.labels)
    assert a.emg.samples.shape == (12, 40000) and a.labels.labels.size == 400
    assert np.all(np.isfinite(a.emg.samples))
    assert np.abs(a.emg.samples).max() <= 10 * MuscleModel().base_gain_v


def test_rest_trial_sits_at_noise_floor():
    cfg = SynthConfig(duration_s=5.0)
    tr = synthesize_trial(cfg, 1, "center", 1)
    x = tr.emg.samples[:, : int(0.8 * 2000)]  # every task starts with >= 1 s of rest
    rms = np.sqrt((x**2).mean(axis=1))
    assert np.allclose(rms, cfg.shift.noise_floor_v, rtol=0.1)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_flexion_drives_flexors(seed):
    cfg = SynthConfig(duration_s=30.0, seed=seed)
    tr = synthesize_trial(cfg, 1, "center", 1)
    lab = np.repeat(tr.labels.labels, 100)  # 20 Hz -> 2000 Hz
    x = tr.emg.samples
    flex = x[:, lab == 1]
    ext = x[:, lab == 2]
    rms = lambda m, g: np.sqrt((m[_group_idx(g)] ** 2).mean())
    assert rms(flex, FLEXOR) > 3 * rms(flex, EXTENSOR)
    assert rms(ext, EXTENSOR) > 3 * rms(ext, FLEXOR)


def test_shift_is_cancelled_by_swn():
    # without crosstalk and noise the positions differ by per-channel gains only
    cfg = SynthConfig(duration_s=8.0, shift=ShiftModel(crosstalk=0.0, noise_floor_v=0.0))
    _, gains = subject_models(cfg, 1)
    c = synthesize_trial(cfg, 1, "center", 1).emg
    shifted = c.replace(c.samples * gains["left"][:, None])
    sw = SwnConfig(window_len_ms=400)
    a, b = swn(shifted, sw).samples, swn(c, sw).samples
    # the epsilon guard zeroes near-silent windows, so compare where it is
    # inactive for both versions
    live = (a != 0) & (b != 0)
    assert live.mean() > 0.5
    assert np.abs(a - b)[live].max() < 1e-9


def test_dataset_layout_and_hashes(tmp_path):
    cfg = SynthConfig(n_subjects=1, trials_per_position=2, duration_s=6.0)
    idx = generate_dataset(cfg, tmp_path / "a")
    assert len(idx["trials"]) == 6
    stem = tmp_path / "a" / "subject_01" / "position_right" / "trial_02"
    man = read_manifest(stem.with_suffix(".json"))
    emg = read_emg_csv(stem.with_suffix(".csv"), man["sample_rate_hz"])
    t, lab = read_labels_csv(stem.with_suffix(".labels.csv"))
    assert emg.n_channels == 12 and emg.n_samples == 12000 and lab.size == 120
    assert man["emg_sha256"] == hashlib.sha256(stem.with_suffix(".csv").read_bytes()).hexdigest()
    assert json.loads((tmp_path / "a" / "dataset.json").read_text())["trials"] == idx["trials"]
    generate_dataset(cfg, tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*.*")):
        g = tmp_path / "b" / f.relative_to(tmp_path / "a")
        assert f.read_bytes() == g.read_bytes(), f.name


def test_rest_fraction_range():
    cfg = SynthConfig()
    fr = [np.mean(synthesize_trial(cfg, s, p, t).labels.labels == 0)
          for s in (1, 2) for p in ("left", "right") for t in (1, 3)]
    assert all(0.35 <= f <= 0.65 for f in fr)


def test_unknown_position():
    with pytest.raises(ValueError):
        synthesize_trial(SHORT, 1, "up", 1)
