"""INI configuration covering every tunable of the package.

Each section maps onto one frozen dataclass.  Values are parsed by the type
of the dataclass default, so a file only needs to list what it changes.
Unknown sections and keys raise :class:`ConfigFileError`.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .experiment import (NORMS, STRATEGIES, WINDOW_GRID_DESK, WINDOW_GRID_FULL, ExperimentPlan,
                         TrainConfig)
from .labeling import LabelThresholds
from .signal import FilterSpec, SwnConfig
from .synth import MuscleModel, ShiftModel, SynthConfig


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class PlanSettings:
    strategies: tuple = STRATEGIES
    norms: tuple = NORMS
    grid: str = "desk"
    norm_windows_ms: tuple = ()  # empty: taken from the grid
    feat_windows_ms: tuple = ()
    subjects: tuple = ()  # empty: every subject in the dataset
    n_seeds: int = 5
    blocks_per_trial: int = 5
    test_fraction: float = 0.3
    tune_fraction: float = 0.2


@dataclass(frozen=True)
class PipelineSettings:
    warmup_s: float = 0.5


@dataclass(frozen=True)
class SynthSettings:
    n_subjects: int = 3
    trials_per_position: int = 4
    duration_s: float = 60.0


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    jobs: int = 1
    data_dir: str = "data"
    out_dir: str = "out"


@dataclass(frozen=True)
class Config:
    labeling: LabelThresholds = field(default_factory=LabelThresholds)
    filter: FilterSpec = field(default_factory=FilterSpec)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    swn: SwnConfig = field(default_factory=SwnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    plan: PlanSettings = field(default_factory=PlanSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    muscle: MuscleModel = field(default_factory=MuscleModel)
    shift: ShiftModel = field(default_factory=ShiftModel)
    run: RunSettings = field(default_factory=RunSettings)

    def with_seed(self, seed: int | None) -> "Config":
        return self if seed is None else replace(self, run=replace(self.run, seed=int(seed)))

    def synth_config(self) -> SynthConfig:
        s = self.synth
        return SynthConfig(n_subjects=s.n_subjects, trials_per_position=s.trials_per_position,
                           duration_s=s.duration_s, seed=self.run.seed, muscle=self.muscle,
                           shift=self.shift, thresholds=self.labeling)

    def experiment_plan(self, *, grid: str | None = None, strategies=None, norms=None) -> ExperimentPlan:
        """Plan with seeds ``seed .. seed + n_seeds - 1``.  Keyword arguments
        override the file."""
        p = self.plan
        grid = grid or p.grid
        if grid not in ("desk", "full"):
            raise ConfigFileError(f"plan.grid must be desk or full, got {grid!r}")
        windows = WINDOW_GRID_FULL if grid == "full" else WINDOW_GRID_DESK
        kw = dict(
            strategies=tuple(strategies or p.strategies),
            norms=tuple(norms or p.norms),
            norm_windows_ms=tuple(p.norm_windows_ms or windows),
            feat_windows_ms=tuple(p.feat_windows_ms or windows),
            seeds=tuple(range(self.run.seed, self.run.seed + p.n_seeds)),
            subjects=tuple(p.subjects) or None,
            blocks_per_trial=p.blocks_per_trial,
            test_fraction=p.test_fraction,
            tune_fraction=p.tune_fraction,
            warmup_s=self.pipeline.warmup_s,
            filter=self.filter,
            swn_epsilon=self.swn.epsilon,
            train=self.train,
        )
        try:
            return ExperimentPlan(**kw)
        except ValueError as exc:
            raise ConfigFileError(str(exc)) from exc


def _parse_value(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            kind = type(default[0]) if default else None
            if kind is None:
                kind = int if all(t.lstrip("-").isdigit() for t in items) else str
            return tuple(kind(t) for t in items)
        return text
    except ValueError:
        raise ConfigFileError(f"{where}: cannot parse {text!r} as {type(default).__name__}") from None


def _build(cls, current, overrides: dict, section: str):
    names = {f.name for f in fields(cls)}
    # nested dataclasses are configured by their own section
    scalar = {f.name for f in fields(cls)
              if not dataclasses.is_dataclass(getattr(current, f.name))}
    kw = {}
    for key, text in overrides.items():
        if key not in names or key not in scalar:
            raise ConfigFileError(f"unknown key {section}.{key}")
        kw[key] = _parse_value(text, getattr(current, key), f"{section}.{key}")
    try:
        return replace(current, **kw)
    except ValueError as exc:
        raise ConfigFileError(f"[{section}] {exc}") from exc


def parse_config(text: str, source: str = "<string>") -> Config:
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigFileError(f"{source}: {exc}") from exc
    cfg = Config()
    sections = {f.name: f for f in fields(Config)}
    updates = {}
    for name in cp.sections():
        if name not in sections:
            raise ConfigFileError(f"unknown section [{name}]")
        current = getattr(cfg, name)
        updates[name] = _build(type(current), current, dict(cp.items(name)), name)
    return replace(cfg, **updates)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def config_to_ini(cfg: Config) -> str:
    """Effective configuration as INI text; ``parse_config`` reads it back."""
    lines = []
    for sec in fields(Config):
        obj = getattr(cfg, sec.name)
        lines.append(f"[{sec.name}]")
        for f in fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                continue
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)
