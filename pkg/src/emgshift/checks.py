"""Self-checks of the numerical core against independent oracles.

Each check returns :class:`CheckResult` rows (measured value, tolerance,
verdict).  ``run_checks`` drives them for the ``check`` command and the
acceptance suite.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np
from scipy.signal import freqz_sos
from scipy.spatial.transform import Rotation
from scipy.stats import rankdata

from .geometry import Frame3, alignment_transform, apply, sequential_rotation
from .kinematics import ArmGeometry, MinJerkSegment, fk_arrays, ik_arrays, min_jerk_coeffs, min_jerk_eval
from .labeling import (EXTENSION, FLEXION, REST, LabelSeries, LabelThresholds, label_pipeline, runs,
                       step1_threshold, step2_drop_short, step5_absorb_short)
from .nn import layers as nl
from .nn.gradcheck import grad_check
from .nn.loss import focal_loss
from .signal import FilterSpec, SignalBuffer, SwnConfig, design_bandpass, swn, swn_window
from .stats import bonferroni, wilcoxon_rank_sum


@dataclass(frozen=True)
class CheckResult:
    group: str
    name: str
    value: float
    tol: float
    passed: bool
    relation: str = "<"

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        if self.relation == "holds":
            return f"{verdict}  {self.group}.{self.name}: {'holds' if self.passed else 'violated'}"
        return f"{verdict}  {self.group}.{self.name}: {self.value:.3g} {self.relation} {self.tol:.3g}"


def _lt(group, name, value, tol):
    value = float(value)
    return CheckResult(group, name, value, tol, bool(value < tol))


def _ge(group, name, value, tol):
    value = float(value)
    return CheckResult(group, name, value, tol, bool(value >= tol), ">=")


def _flag(group, name, ok):
    return CheckResult(group, name, float(not ok), 0.0, bool(ok), "holds")


# -- SWN ----------------------------------------------------------------------


def check_swn_stats(seed: int = 0, n_windows: int = 10_000, tol: float = 1e-10) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_mu = worst_sd = 0.0
    # windows of every length 2..500, one row per window, each with its own offset and scale
    lengths = np.arange(2, 501)
    counts = np.full(lengths.size, n_windows // lengths.size)
    counts[:n_windows - counts.sum()] += 1
    for L, k in zip(lengths, counts):
        x = rng.uniform(-5, 5, (k, 1)) + rng.uniform(0.1, 10, (k, 1)) * rng.normal(size=(k, L))
        y = swn_window(x, int(L))
        worst_mu = max(worst_mu, np.abs(y.mean(axis=1)).max())
        worst_sd = max(worst_sd, np.abs(y.std(axis=1) - 1).max())
    exact = True
    for _ in range(5):
        x = rng.normal(size=(2, 700))
        L = 100
        out = swn(SignalBuffer(x, 500.0), SwnConfig(window_len_ms=200)).samples
        tails = np.stack([swn_window(x, L, n)[:, -1] for n in range(L - 1, 700)], axis=1)
        exact &= bool(np.array_equal(out, tails))
    return [_lt("swn", "block_mean", worst_mu, tol), _lt("swn", "block_std", worst_sd, tol),
            _flag("swn", "rolling_equals_block", exact)]


def check_swn_affine(seed: int = 0, n_cases: int = 100, tol: float = 1e-9) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    cfg = SwnConfig(window_len_ms=200)
    for _ in range(n_cases):
        x = rng.normal(size=(3, 400))
        a = 10 ** rng.uniform(-2, 2)
        b = rng.uniform(-10, 10)
        y0 = swn(SignalBuffer(x, 500.0), cfg).samples
        y1 = swn(SignalBuffer(a * x + b, 500.0), cfg).samples
        worst = max(worst, np.abs(y1 - y0).max())
    return [_lt("swn", "affine_invariance", worst, tol)]


# -- filter -------------------------------------------------------------------


def biquad_gain(sos: np.ndarray, f: float, fs: float) -> float:
    """|H| as the product of the section transfer functions at ``e^{jw}``."""
    z = np.exp(1j * 2 * np.pi * f / fs)
    h = 1.0 + 0j
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return abs(h)


def check_filter(spec: FilterSpec = FilterSpec(), fs: float = 2000.0) -> list[CheckResult]:
    sos = design_bandpass(spec, fs)
    out = []
    for f in (spec.low_hz, spec.high_hz):
        dev = abs(biquad_gain(sos, f, fs) * np.sqrt(2) - 1)
        out.append(_lt("filter", f"corner_{f:g}Hz_rel_dev", dev, 0.02))
    for f in (spec.low_hz / 4, spec.high_hz * 2):
        att = -20 * np.log10(biquad_gain(sos, f, fs))
        out.append(_ge("filter", f"atten_{f:g}Hz_dB", att, 20.0))
    freqs = np.array([spec.low_hz / 4, spec.low_hz, spec.high_hz, spec.high_hz * 2])
    _, h = freqz_sos(sos, worN=freqs, fs=fs)
    ours = np.array([biquad_gain(sos, f, fs) for f in freqs])
    out.append(_lt("filter", "oracle_vs_freqz_rel", np.abs(np.abs(h) / ours - 1).max(), 1e-9))
    return out


# -- kinematics ---------------------------------------------------------------


def check_kinematics(seed: int = 0, arm: ArmGeometry = ArmGeometry()) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    lo = abs(arm.l_sld - arm.l_elb) + 1e-3
    r = rng.uniform(lo, arm.reach - 1e-6, 10_000)
    phi = rng.uniform(-np.pi, np.pi, r.size)
    x, y = r * np.cos(phi), r * np.sin(phi)
    xr, yr = fk_arrays(*ik_arrays(x, y, arm), arm)
    round_trip = np.hypot(xr - x, yr - y).max()

    resid = 0.0
    for _ in range(200):
        t0, dur = rng.uniform(0, 10), rng.uniform(0.3, 2.0)
        start, end = tuple(rng.normal(size=3)), tuple(rng.normal(size=3))
        c = min_jerk_coeffs(MinJerkSegment(t0, t0 + dur, start, end))
        for d in range(3):
            resid = max(resid, abs(min_jerk_eval(c, t0, t0, d) - start[d]),
                        abs(min_jerk_eval(c, t0, t0 + dur, d) - end[d]))

    tau = np.linspace(0, 1, 1001)
    c = min_jerk_coeffs(MinJerkSegment(0.0, 1.0, (0.0,), (1.0,)))
    quintic = np.abs(min_jerk_eval(c, 0.0, tau) - (10 * tau**3 - 15 * tau**4 + 6 * tau**5)).max()
    return [_lt("kinematics", "fk_ik_round_trip_m", round_trip, 1e-9),
            _lt("kinematics", "min_jerk_boundary", resid, 1e-9),
            _lt("kinematics", "rest_to_rest_quintic", quintic, 1e-12)]


# -- labeling -----------------------------------------------------------------


def random_elbow_trace(rng: np.random.Generator, n: int = 1200, rate_hz: float = 20.0) -> np.ndarray:
    """Smooth random elbow angle with rests and bursts of motion."""
    w = np.zeros(n)
    i = 0
    while i < n:
        i += int(rng.integers(5, 40))
        k = min(int(rng.integers(3, 20)), max(n - i, 0))
        if k == 0:
            break
        w[i:i + k] = rng.choice([-1, 1]) * rng.uniform(0.5, 8.0) * np.hanning(k + 2)[1:-1]
        i += k
    return np.cumsum(w + 0.2 * rng.standard_normal(n)) / rate_hz


def check_labeling(seed: int = 0, th: LabelThresholds = LabelThresholds()) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    w = th.w_samples()
    shortest = np.inf
    for _ in range(100):
        lab = label_pipeline(random_elbow_trace(rng), th=th).labels
        s, e, v = runs(lab)
        if len(v) > 1:
            shortest = min(shortest, int((e - s).min()))
    idem2 = idem5 = sym = True
    swap = np.array([REST, EXTENSION, FLEXION])
    for _ in range(300):
        n = int(rng.integers(1, 120))
        lab = rng.choice([REST, FLEXION, EXTENSION], n)
        s = LabelSeries(lab, np.zeros(n))
        once = step2_drop_short(s, th.w_t_ms)
        idem2 &= bool(np.array_equal(step2_drop_short(once, th.w_t_ms).labels, once.labels))
        once = step5_absorb_short(s, th.w_t_ms)
        idem5 &= bool(np.array_equal(step5_absorb_short(once, th.w_t_ms).labels, once.labels))
        om = rng.uniform(-10, 10, n)
        sym &= bool(np.array_equal(step1_threshold(-om, th).labels, swap[step1_threshold(om, th).labels]))
    return [_ge("labeling", "shortest_run_samples", shortest, w),
            _flag("labeling", "step2_idempotent", idem2),
            _flag("labeling", "step5_idempotent", idem5),
            _flag("labeling", "step1_sign_symmetry", sym)]


# -- geometry -----------------------------------------------------------------


def check_geometry(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    Qs = Rotation.random(1000, random_state=seed).as_matrix()
    to_basis = seq = 0.0
    for Q in Qs:
        o = rng.uniform(-2, 2, 3)
        scale = rng.uniform(0.05, 2.0, 3)
        f = Frame3(Q[:, 0] * scale[0], Q[:, 1] * scale[1], Q[:, 2] * scale[2], o)
        tf = alignment_transform(f, cross_check_tol=None)
        to_basis = max(to_basis, np.abs(apply(tf, f.unit_tips()) - np.eye(3)).max(),
                       np.abs(apply(tf, o)).max())
        # skip the gimbal branches where an arrow lies on an elementary axis
        if np.abs(Q).max() <= 0.99:
            seq = max(seq, np.abs(sequential_rotation(Q) - Q.T).max())
    return [_lt("geometry", "arrows_to_basis", to_basis, 1e-9),
            _lt("geometry", "sequential_vs_transpose", seq, 1e-6)]


# -- neural net -------------------------------------------------------------


def check_nn(seed: int = 0, corrupt: float = 0.0) -> list[CheckResult]:
    report = grad_check(n_channels=4, n_frames=3, seed=seed, corrupt=corrupt)
    loss, _ = focal_loss(np.array([[0.5, 0.25, 0.25]]), np.array([0]))
    g = np.random.default_rng(seed).normal(size=(3, 4))
    grl = all(np.array_equal(nl.grl_backward(g, lam), -lam * g) for lam in (0.0, 0.5, 1.0, 2.0))
    return [_lt("nn", "grad_check_max_rel", max(report.values()), 1e-3),
            _lt("nn", "focal_hand_case", abs(loss - 0.25 * np.log(2)), 1e-9),
            _flag("nn", "grl_exact", grl)]


# -- statistics -----------------------------------------------------------------


def permutation_p(a, b) -> float:
    """Two-sided rank-sum p by enumerating every split of the pooled midranks."""
    pooled = np.concatenate([a, b])
    r = rankdata(pooled)
    n1, N = len(a), len(pooled)
    centre = n1 * (N + 1) / 2
    obs = abs(r[:n1].sum() - centre)
    hits = total = 0
    for idx in itertools.combinations(range(N), n1):
        total += 1
        hits += abs(r[list(idx)].sum() - centre) >= obs - 1e-9
    return hits / total


def check_stats(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for N in range(2, 11):
        for n1 in range(1, N):
            for tied in (False, True):
                x = rng.integers(0, 4, N).astype(float) if tied else rng.normal(size=N)
                if np.all(x == x[0]):
                    continue
                a, b = x[:n1], x[n1:]
                worst = max(worst, abs(wilcoxon_rank_sum(a, b, "exact")[1] - permutation_p(a, b)))
    clamp = bool(np.all(bonferroni([0.5, 0.02, 0.9], 3) == [1.0, 0.06, 1.0]))
    return [_lt("stats", "exact_vs_permutation", worst, 1e-12), _flag("stats", "bonferroni_clamp", clamp)]


CHECKS = {
    "swn_stats": check_swn_stats,
    "swn_affine": check_swn_affine,
    "filter": check_filter,
    "kinematics": check_kinematics,
    "labeling": check_labeling,
    "geometry": check_geometry,
    "nn": check_nn,
    "stats": check_stats,
}


def run_checks(names=None, *, filter_spec: FilterSpec = FilterSpec(),
               thresholds: LabelThresholds = LabelThresholds(), inject_fault: bool = False,
               seed: int = 0) -> list[tuple[str, float, list[CheckResult]]]:
    """Run the named checks (all by default); returns ``(name, seconds, rows)``."""
    out = []
    for name in names or CHECKS:
        kw = {}
        if name == "filter":
            kw["spec"] = filter_spec
        elif name == "labeling":
            kw["th"] = thresholds
        elif name == "nn" and inject_fault:
            kw["corrupt"] = 0.01
        if name != "filter":
            kw["seed"] = seed
        t = time.perf_counter()
        rows = CHECKS[name](**kw)
        out.append((name, time.perf_counter() - t, rows))
    return out
