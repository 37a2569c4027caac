"""Electrode-shift evaluation protocol.

Every trial is cut into contiguous blocks of feature frames.  Per subject,
seed and electrode position the blocks are split once into test, training
and tuning sets; the same test blocks serve every strategy, normalization
and window setting.  Models are trained per (strategy, normalization,
window pair) and scored by their accuracy relative to the matched-position
baseline.
"""
from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .io import POSITIONS, read_emg_csv, read_manifest, write_text_atomic
from .labeling import LABEL_RATE_HZ, read_labels_csv
from .nn import Adam, CnnLstm, FocalConfig, ModelConfig
from .nn.checkpoint import save_checkpoint
from .signal import (FRAME_RATE_HZ, FilterSpec, PipelineConfig, SwnConfig, emission_times,
                     extract_frames, n_segments, preprocess, swn)
from .stats import bonferroni, wilcoxon_rank_sum

TRAIN_LOG_HEADER = ["epoch", "split", "loss", "accuracy"]

STRATEGIES = ("Vanilla", "TL", "ADA", "MIX", "BASELINE")
NORMS = ("SWN", "None")
WINDOW_GRID_FULL = (200, 400, 600, 800, 1000)
WINDOW_GRID_DESK = (200, 600, 1000)
RESULTS_HEADER = ["subject", "strategy", "norm", "train_pos", "test_pos", "norm_win_ms",
                  "feat_win_ms", "accuracy", "baseline", "differential"]
MIXED = "all"
STREAM_SCALE = 1e6  # volts -> microvolts, keeps raw inputs well above the layer-norm epsilon
_STRATEGY_ID = {s: k for k, s in enumerate(STRATEGIES)}


class MissingBaselineError(KeyError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    tl_epochs: int = 10
    lr: float = 1e-3
    frame_stride: int = 10  # train/test on every k-th 20 Hz frame
    batch_sequences: int = 1
    gamma: float = 2.0
    grl_lambda: float = 1.0
    domain_weight: float = 1.0
    ln_axes: str = "frame"
    dtype: str = "float32"
    block_dropout: tuple = (0.1, 0.2, 0.3, 0.4)
    lstm_dropout: float = 0.1

    def __post_init__(self):
        if min(self.epochs, self.tl_epochs, self.frame_stride, self.batch_sequences) < 1:
            raise ValueError("epochs, stride and batch size must be positive")


@dataclass(frozen=True)
class ExperimentPlan:
    strategies: tuple = ("Vanilla", "TL", "ADA", "MIX", "BASELINE")
    norms: tuple = NORMS
    norm_windows_ms: tuple = WINDOW_GRID_DESK
    feat_windows_ms: tuple = WINDOW_GRID_DESK
    seeds: tuple = (0, 1, 2, 3, 4)
    subjects: tuple | None = None  # None: every subject in the dataset
    blocks_per_trial: int = 5
    test_fraction: float = 0.3
    tune_fraction: float = 0.2
    warmup_s: float = 0.5
    filter: FilterSpec = field(default_factory=FilterSpec)
    swn_epsilon: float = 1e-8
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        if "BASELINE" not in self.strategies:
            raise ValueError("BASELINE is required: every differential refers to it")
        if set(self.norms) - set(NORMS):
            raise ValueError(f"norms must be drawn from {NORMS}")
        for w in tuple(self.norm_windows_ms) + tuple(self.feat_windows_ms):
            if w not in WINDOW_GRID_FULL:
                raise ValueError(f"window {w} ms is not on the 200..1000 ms grid")
        if not self.norm_windows_ms or not self.feat_windows_ms:
            raise ValueError("window grids must be non-empty")
        if not (0 < self.test_fraction < 1 and 0 < self.tune_fraction
                and self.test_fraction + self.tune_fraction <= 1):
            raise ValueError("invalid split fractions")

    @classmethod
    def desk(cls, **kw) -> "ExperimentPlan":
        return cls(**kw)

    @classmethod
    def full(cls, **kw) -> "ExperimentPlan":
        kw.setdefault("norm_windows_ms", WINDOW_GRID_FULL)
        kw.setdefault("feat_windows_ms", WINDOW_GRID_FULL)
        kw.setdefault("train", TrainConfig(epochs=40, frame_stride=1, batch_sequences=8))
        return cls(**kw)

    @property
    def t_start_s(self) -> float:
        """Common first emission time: warm-up plus the longest history."""
        return self.warmup_s + (max(self.norm_windows_ms) + max(self.feat_windows_ms)) / 1000.0

    def grid(self, norm: str) -> list[tuple[int, int]]:
        nws = self.norm_windows_ms if norm == "SWN" else (0,)
        return [(nw, fw) for nw in nws for fw in self.feat_windows_ms]

    def needs(self, strategy: str) -> bool:
        return strategy in self.strategies


@dataclass(frozen=True)
class Block:
    position: str
    trial: int
    index: int
    t_emit: np.ndarray
    labels: np.ndarray

    @property
    def key(self) -> tuple:
        return (self.trial, self.index)


@dataclass(frozen=True)
class SplitSpec:
    """Block keys per position: ``test``, ``train`` (the complement of test)
    and ``tune`` (a subset of train)."""
    test: dict
    train: dict
    tune: dict
    seed: int


@dataclass(frozen=True)
class ResultRecord:
    subject: int
    strategy: str
    norm: str
    train_pos: str
    test_pos: str
    norm_win_ms: int
    feat_win_ms: int
    accuracy: float
    baseline: float
    differential: float

    def row(self) -> list[str]:
        return [str(self.subject), self.strategy, self.norm, self.train_pos, self.test_pos,
                str(self.norm_win_ms), str(self.feat_win_ms), repr(self.accuracy),
                repr(self.baseline), repr(self.differential)]


def run_seed(seed: int, *key) -> np.random.SeedSequence:
    """Seed derived from the run identifiers, independent of execution order."""
    ints = []
    for k in key:
        if isinstance(k, str):
            ints.append(int.from_bytes(hashlib.sha256(k.encode()).digest()[:4], "little"))
        else:
            ints.append(int(k))
    return np.random.SeedSequence(seed, spawn_key=tuple(ints))


# ---------------------------------------------------------------------------
# data


@functools.lru_cache(maxsize=4)
def _load_subject(root: str, subject: int, warmup_s: float, filt: FilterSpec = FilterSpec()):
    """Band-passed, decimated, warm-up-trimmed streams and 20 Hz labels per
    (position, trial)."""
    base = Path(root) / f"subject_{subject:02d}"
    if not base.is_dir():
        raise FileNotFoundError(f"no data for subject {subject} under {root}")
    cfg = PipelineConfig(filter=filt, swn=None, warmup_s=warmup_s)
    out = {}
    for pos in POSITIONS:
        d = base / f"position_{pos}"
        trials = sorted(d.glob("trial_*.json"))
        if not trials:
            raise FileNotFoundError(f"{d}: no trials")
        for man in trials:
            meta = read_manifest(man)
            stem = man.with_suffix("")
            raw = read_emg_csv(stem.with_suffix(".csv"), meta["sample_rate_hz"])
            _, labels = read_labels_csv(stem.with_name(stem.name + ".labels.csv"))
            pre = preprocess(raw, cfg)
            out[(pos, int(meta["session"]))] = (pre.replace(pre.samples * STREAM_SCALE), labels)
    return out


def list_subjects(root: str | Path) -> list[int]:
    subs = sorted(int(p.name.split("_")[1]) for p in Path(root).glob("subject_*") if p.is_dir())
    if not subs:
        raise FileNotFoundError(f"no subject directories under {root}")
    return subs


def frame_labels(labels: np.ndarray, t_emit: np.ndarray, rate_hz: float = LABEL_RATE_HZ) -> np.ndarray:
    """Label of the last label interval inside each frame window."""
    idx = np.rint(np.asarray(t_emit) * rate_hz).astype(np.int64) - 1
    return labels[np.clip(idx, 0, labels.size - 1)]


def make_blocks(streams: dict, plan: ExperimentPlan, feat_ms: int) -> dict[str, list[Block]]:
    """Cut each trial's emission times (shared start) into equal blocks."""
    blocks: dict[str, list[Block]] = {p: [] for p in POSITIONS}
    for (pos, trial), (stream, labels) in sorted(streams.items()):
        t = emission_times(stream, feat_ms, FRAME_RATE_HZ, t_start_s=plan.t_start_s)
        for b, tb in enumerate(np.array_split(t, plan.blocks_per_trial)):
            blocks[pos].append(Block(pos, trial, b, tb, frame_labels(labels, tb)))
    return blocks


def make_splits(block_keys: dict[str, list], plan: ExperimentPlan, subject: int, seed: int) -> SplitSpec:
    """Per-position test/train/tune block sets, fixed per (subject, seed)."""
    test, train, tune = {}, {}, {}
    for pos in POSITIONS:
        keys = sorted(block_keys[pos])
        n = len(keys)
        n_test = int(round(plan.test_fraction * n))
        n_tune = int(round(plan.tune_fraction * n))
        if n_test < 1 or n_tune < 1 or n - n_test < n_tune:
            raise ValueError(f"position {pos}: {n} blocks are too few to split")
        order = np.random.default_rng(run_seed(seed, subject, "split", pos)).permutation(n)
        test[pos] = [keys[k] for k in sorted(order[:n_test])]
        train[pos] = [keys[k] for k in sorted(order[n_test:])]
        tune[pos] = [keys[k] for k in sorted(order[n_test:n_test + n_tune])]
    return SplitSpec(test, train, tune, seed)


def combinations(strategy: str) -> list[tuple[str, str]]:
    """(train position, test position) pairs evaluated for a strategy."""
    if strategy in ("Vanilla", "TL"):
        return [(i, j) for i in POSITIONS for j in POSITIONS if i != j]
    if strategy in ("ADA", "MIX"):
        return [(MIXED, j) for j in POSITIONS]
    return [(j, j) for j in POSITIONS]


# ---------------------------------------------------------------------------
# training


class FrameSource:
    """Lazily extracts frames for blocks from normalized streams."""

    def __init__(self, streams: dict, feat_ms: int, dtype: str):
        self.streams = streams
        self.feat_ms = feat_ms
        self.dtype = dtype

    def frames(self, block: Block, idx) -> np.ndarray:
        stream = self.streams[(block.position, block.trial)][0]
        return extract_frames(stream, self.feat_ms, block.t_emit[idx]).astype(self.dtype)


def _batch(src: FrameSource, blocks: list[Block], phases: list[int], stride: int):
    n = min(len(range(ph, b.t_emit.size, stride)) for b, ph in zip(blocks, phases))
    X, y, d = [], [], []
    for b, ph in zip(blocks, phases):
        idx = np.arange(ph, b.t_emit.size, stride)[:n]
        X.append(src.frames(b, idx))
        y.append(b.labels[idx])
        d.append(np.full(n, POSITIONS.index(b.position)))
    return np.stack(X), np.stack(y), np.stack(d)


def _domain_order(blocks: list[Block], rng: np.random.Generator) -> np.ndarray:
    """Shuffled order in which every run of len(POSITIONS) blocks holds one
    block per position, as long as every position has blocks left."""
    per = [rng.permutation([k for k, b in enumerate(blocks) if b.position == p]) for p in POSITIONS]
    out = []
    for r in range(max(len(q) for q in per)):
        out.extend(int(q[r]) for q in per if r < len(q))
    return np.asarray(out, dtype=np.int64)


def train_model(model: CnnLstm, src: FrameSource, blocks: list[Block], tcfg: TrainConfig,
                rng: np.random.Generator, epochs: int, freeze_cnn: bool = False) -> list[dict]:
    """Adam training over shuffled block sequences; each block contributes a
    random stride phase per epoch.  With the domain head enabled every batch
    holds one block per electrode position, so the domain loss always sees
    all domains.  Returns the per-epoch log."""
    opt = Adam(lr=tcfg.lr)
    frozen = set(model.names("cnn")) if freeze_cnn else set()
    mixed = model.cfg.ada
    batch = max(tcfg.batch_sequences, len(POSITIONS)) if mixed else tcfg.batch_sequences
    history = []
    for epoch in range(1, epochs + 1):
        order = _domain_order(blocks, rng) if mixed else rng.permutation(len(blocks))
        phases = rng.integers(0, tcfg.frame_stride, len(blocks))
        tot_loss = correct = count = 0
        for s in range(0, len(order), batch):
            sel = order[s:s + batch]
            X, y, d = _batch(src, [blocks[k] for k in sel], [phases[k] for k in sel], tcfg.frame_stride)
            if freeze_cnn:
                F = model.features(X)
                loss, grads, st = model.loss_and_grads(F, y, d, True, rng, from_features=True)
            else:
                loss, grads, st = model.loss_and_grads(X, y, d, True, rng)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            opt.step(model.params, grads, frozen)
            tot_loss += loss
            correct += int((st["probs"].argmax(-1) == y).sum())
            count += y.size
        history.append({"epoch": epoch, "split": "train", "loss": tot_loss / max(count, 1),
                        "accuracy": correct / max(count, 1)})
    return history


def evaluate(model: CnnLstm, src: FrameSource, blocks: list[Block], stride: int) -> float:
    """Fraction of correctly classified frames over the test blocks."""
    correct = total = 0
    for b in blocks:
        idx = np.arange(0, b.t_emit.size, stride)
        pred = model.predict(src.frames(b, idx)[None])[0]
        correct += int((pred == b.labels[idx]).sum())
        total += idx.size
    return correct / total


@functools.lru_cache(maxsize=4)
def _norm_streams(root: str, subject: int, warmup_s: float, filt: FilterSpec, norm_win: int,
                  epsilon: float = 1e-8) -> dict:
    base = _load_subject(root, subject, warmup_s, filt)
    if norm_win == 0:
        return base
    cfg = SwnConfig(window_len_ms=norm_win, epsilon=epsilon)
    return {k: (swn(s, cfg), lab) for k, (s, lab) in base.items()}


def write_train_log(history: list[dict], path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAIN_LOG_HEADER)
    for h in history:
        w.writerow([h["epoch"], h["split"], repr(float(h["loss"])), repr(float(h["accuracy"]))])
    write_text_atomic(path, buf.getvalue())


def run_unit(root: str, plan: ExperimentPlan, seed: int, subject: int, norm: str,
             norm_win: int, model_dir: str | None = None) -> list[tuple]:
    """All models for one (seed, subject, normalization window).

    Returns raw accuracy tuples ``(strategy, train_pos, test_pos, feat_win,
    accuracy)``; baselines are attached later.  With ``model_dir`` every
    trained model is saved with its training log.
    """
    tcfg = plan.train
    streams = _norm_streams(str(root), subject, plan.warmup_s, plan.filter, norm_win, plan.swn_epsilon)
    out = []
    for feat in plan.feat_windows_ms:
        blocks = make_blocks(streams, plan, feat)
        by_key = {pos: {b.key: b for b in blocks[pos]} for pos in POSITIONS}
        split = make_splits({p: list(by_key[p]) for p in POSITIONS}, plan, subject, seed)
        pick = lambda part, pos: [by_key[pos][k] for k in getattr(split, part)[pos]]
        src = FrameSource(streams, feat, tcfg.dtype)
        C = 12 * n_segments(feat)
        focal = FocalConfig(gamma=tcfg.gamma)
        mcfg = ModelConfig(C, ln_axes=tcfg.ln_axes, focal=focal, dtype=tcfg.dtype,
                           grl_lambda=tcfg.grl_lambda, domain_weight=tcfg.domain_weight,
                           block_dropout=tuple(tcfg.block_dropout), lstm_dropout=tcfg.lstm_dropout)
        tests = {j: pick("test", j) for j in POSITIONS}

        def rng_for(strategy, *k):
            return np.random.default_rng(run_seed(seed, subject, strategy, norm, norm_win, feat, *k))

        def fresh(strategy, *k, ada=False):
            r = rng_for(strategy, *k)
            cfg = replace(mcfg, ada=ada)
            return CnnLstm(cfg, seed=r.integers(2**63)), r

        def keep(model, history, strategy, i, j=""):
            if model_dir is None:
                return
            d = Path(model_dir) / f"seed{seed}" / f"subject{subject}"
            d.mkdir(parents=True, exist_ok=True)
            stem = f"{strategy}_{norm}{norm_win}_f{feat}_{i}" + (f"_{j}" if j else "")
            save_checkpoint(model, d / f"{stem}.npz")
            write_train_log(history, d / f"{stem}_log.csv")

        if plan.needs("Vanilla") or plan.needs("BASELINE") or plan.needs("TL"):
            for i in POSITIONS:
                model, r = fresh("Vanilla", i)
                keep(model, train_model(model, src, pick("train", i), tcfg, r, tcfg.epochs),
                     "Vanilla", i)
                for j in POSITIONS:
                    acc = evaluate(model, src, tests[j], tcfg.frame_stride)
                    out.append(("BASELINE" if i == j else "Vanilla", i, j, feat, acc))
                if plan.needs("TL"):
                    trained = {k: v.copy() for k, v in model.params.items()}
                    for j in POSITIONS:
                        if j == i:
                            continue
                        tl = CnnLstm(model.cfg, {k: v.copy() for k, v in trained.items()})
                        r = rng_for("TL", i, j)
                        hist = train_model(tl, src, pick("tune", j), tcfg, r, tcfg.tl_epochs,
                                           freeze_cnn=True)
                        keep(tl, hist, "TL", i, j)
                        out.append(("TL", i, j, feat, evaluate(tl, src, tests[j], tcfg.frame_stride)))
        for strategy, ada in (("MIX", False), ("ADA", True)):
            if not plan.needs(strategy):
                continue
            model, r = fresh(strategy, MIXED, ada=ada)
            mixed = [b for p in POSITIONS for b in pick("tune", p)]
            keep(model, train_model(model, src, mixed, tcfg, r, tcfg.epochs), strategy, MIXED)
            for j in POSITIONS:
                out.append((strategy, MIXED, j, feat, evaluate(model, src, tests[j], tcfg.frame_stride)))
    return out


def _unit_task(args):
    root, plan, seed, subject, norm, norm_win, model_dir = args
    return (seed, subject, norm, norm_win), run_unit(root, plan, seed, subject, norm, norm_win,
                                                     model_dir)


def attach_baselines(seed_rows: list[tuple], plan: ExperimentPlan) -> list[ResultRecord]:
    """Turn ``(subject, norm, norm_win, strategy, i, j, feat, acc)`` tuples into
    records with the matched-position baseline of the same setting."""
    base = {(s, n, nw, j, f): a for s, n, nw, st, i, j, f, a in seed_rows if st == "BASELINE"}
    recs = []
    for s, n, nw, st, i, j, f, a in seed_rows:
        if st == "BASELINE" and not plan.needs("BASELINE"):
            continue
        if st == "Vanilla" and not plan.needs("Vanilla"):
            continue
        try:
            b = base[(s, n, nw, j, f)]
        except KeyError:
            raise MissingBaselineError(f"no baseline for subject {s}, {n} {nw}/{f} ms, position {j}")
        recs.append(ResultRecord(s, st, n, i, j, nw, f, a, b, a - b))
    recs.sort(key=lambda r: (r.subject, _STRATEGY_ID[r.strategy], r.norm, r.norm_win_ms,
                             r.feat_win_ms, POSITIONS.index(r.test_pos),
                             -1 if r.train_pos == MIXED else POSITIONS.index(r.train_pos)))
    return recs


def run_experiment(root: str | Path, plan: ExperimentPlan, jobs: int = 1,
                   progress=None, model_dir: str | Path | None = None) -> dict[int, list[ResultRecord]]:
    """Run every seed of the plan; returns records per seed."""
    root = str(root)
    model_dir = None if model_dir is None else str(model_dir)
    subjects = list(plan.subjects) if plan.subjects else list_subjects(root)
    # seeds innermost so cached streams are reused
    tasks = [(root, plan, seed, subj, norm, nw, model_dir)
             for subj in subjects for norm in plan.norms
             for nw in (plan.norm_windows_ms if norm == "SWN" else (0,)) for seed in plan.seeds]
    rows: dict[int, list[tuple]] = {s: [] for s in plan.seeds}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_unit_task, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_unit_task(t))
            if progress:
                progress(len(results), len(tasks))
    for (seed, subj, norm, nw), accs in results:
        rows[seed].extend((subj, norm, nw) + a for a in accs)
    return {seed: attach_baselines(r, plan) for seed, r in rows.items()}


# ---------------------------------------------------------------------------
# evaluation


def differential_accuracy(x: float, baseline: float) -> float:
    return x - baseline


def accuracy_from_counts(success: int, failure: int) -> float:
    return success / (success + failure)


def sweep_windows(mean_acc: dict[tuple[int, int], float]) -> tuple[int, int]:
    """Grid point of highest mean accuracy; ties go to the smaller
    normalization window, then the smaller feature window."""
    if not mean_acc:
        raise ValueError("empty grid")
    return min(mean_acc, key=lambda k: (-mean_acc[k], k[0], k[1]))


def _mean_over(records, key) -> dict:
    acc: dict = {}
    for r in records:
        acc.setdefault(key(r), []).append(r)
    return acc


def strategy_summary(records: list[ResultRecord]) -> dict:
    """Per (strategy, norm): the best grid point and the per-subject mean
    differential against the baseline at its own best grid point."""
    groups = _mean_over(records, lambda r: (r.strategy, r.norm))
    best = {}
    for (st, norm), recs in groups.items():
        by_grid = _mean_over(recs, lambda r: (r.norm_win_ms, r.feat_win_ms))
        best[(st, norm)] = sweep_windows({g: float(np.mean([r.accuracy for r in rs]))
                                          for g, rs in by_grid.items()})
    out = {}
    for (st, norm), recs in groups.items():
        g = best[(st, norm)]
        gb = best.get(("BASELINE", norm))
        if gb is None:
            raise MissingBaselineError(f"no BASELINE records for {norm}")
        base = {(r.subject, r.test_pos): r.accuracy for r in groups[("BASELINE", norm)]
                if (r.norm_win_ms, r.feat_win_ms) == gb}
        sel = [r for r in recs if (r.norm_win_ms, r.feat_win_ms) == g]
        diffs = [r.accuracy - base[(r.subject, r.test_pos)] for r in sel]
        per_subject = _mean_over(list(zip(sel, diffs)), lambda rd: rd[0].subject)
        subj_means = {s: float(np.mean([d for _, d in v])) for s, v in sorted(per_subject.items())}
        out[f"{st}_{norm}"] = {
            "strategy": st, "norm": norm, "norm_win_ms": g[0], "feat_win_ms": g[1],
            "baseline_norm_win_ms": gb[0], "baseline_feat_win_ms": gb[1],
            "mean_accuracy": float(np.mean([r.accuracy for r in sel])),
            "mean_differential": float(np.mean(list(subj_means.values()))),
            "sd_differential": float(np.std(list(subj_means.values()))),
            "per_subject_differential": subj_means,
            "differentials": diffs,
        }
    return out


def summarize(per_seed: dict[int, list[ResultRecord]], reference: str = "Vanilla_None") -> dict:
    """Seed-averaged summary with rank-sum tests against ``reference``."""
    seeds = {s: strategy_summary(r) for s, r in per_seed.items()}
    names = sorted(set().union(*[set(v) for v in seeds.values()]))
    combined = {}
    for name in names:
        vals = [seeds[s][name]["mean_differential"] for s in seeds if name in seeds[s]]
        combined[name] = {"mean_differential": float(np.mean(vals)),
                          "sd_over_seeds": float(np.std(vals)),
                          "per_seed": {str(s): seeds[s][name]["mean_differential"]
                                       for s in seeds if name in seeds[s]},
                          "best_grid_per_seed": {str(s): [seeds[s][name]["norm_win_ms"],
                                                          seeds[s][name]["feat_win_ms"]]
                                                 for s in seeds if name in seeds[s]}}
    tests = {}
    others = [n for n in names if n != reference and not n.startswith("BASELINE")]
    if reference in names:
        ref = [d for s in seeds for d in seeds[s][reference]["differentials"]]
        raw = {}
        for n in others:
            cur = [d for s in seeds if n in seeds[s] for d in seeds[s][n]["differentials"]]
            raw[n] = wilcoxon_rank_sum(cur, ref)[1]
        adj = bonferroni(list(raw.values()), max(len(raw), 1)) if raw else []
        tests = {n: {"p": p, "p_bonferroni": float(a)} for (n, p), a in zip(raw.items(), adj)}
    return {"reference": reference, "strategies": combined, "tests": tests,
            "per_seed": {str(s): {k: {kk: vv for kk, vv in v.items() if kk != "differentials"}
                                  for k, v in d.items()} for s, d in seeds.items()}}


# ---------------------------------------------------------------------------
# output


def results_csv_text(records: list[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_results(out_dir: str | Path, per_seed: dict[int, list[ResultRecord]], plan: ExperimentPlan) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed, recs in per_seed.items():
        write_text_atomic(out / f"results_seed{seed}.csv", results_csv_text(recs))
    summary = summarize(per_seed)
    summary["plan"] = json.loads(json.dumps(asdict(plan)))
    write_text_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def read_results(path: str | Path) -> list[ResultRecord]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if next(r) != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected header")
        return [ResultRecord(int(a), b, c, d, e, int(f), int(g), float(h), float(i), float(j))
                for a, b, c, d, e, f, g, h, i, j in r]


def records_digest(records: list[ResultRecord]) -> str:
    return hashlib.sha256(results_csv_text(records).encode()).hexdigest()
