"""Command-line entry point: ``emgshift {synth,run,check}``.

Exit codes: 0 success, 1 check or run failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .checks import CHECKS, run_checks
from .config import ConfigFileError, config_to_ini, load_config
from .experiment import STRATEGIES, list_subjects, run_experiment, write_results
from .io import SCHEMA_VERSIONS, write_text_atomic
from .signal import ConfigError
from .synth import generate_dataset

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_STRATEGY_NAMES = {s.lower(): s for s in STRATEGIES}
_NORM_CHOICES = {"swn": ("SWN",), "none": ("None",), "both": ("SWN", "None")}


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"emgshift: {msg}", file=sys.stderr)


def parse_strategies(text: str) -> tuple:
    """Comma list, case-insensitive.  BASELINE is always included because
    every differential is measured against it."""
    out = []
    for item in text.split(","):
        key = item.strip().lower()
        if not key:
            continue
        if key not in _STRATEGY_NAMES:
            raise UsageError(f"unknown strategy {item.strip()!r}; choose from {', '.join(STRATEGIES)}")
        out.append(_STRATEGY_NAMES[key])
    if not out:
        raise UsageError("--strategies is empty")
    if "BASELINE" not in out:
        out.append("BASELINE")
    return tuple(s for s in STRATEGIES if s in out)


def tree_digest(root: Path) -> str:
    """SHA-256 over every file's relative path and contents, in sorted order."""
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode() + b"\0")
            h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def cmd_synth(args, cfg) -> int:
    out = Path(args.out or cfg.run.data_dir)
    scfg = cfg.synth_config()
    t = time.perf_counter()
    index = generate_dataset(scfg, out)
    trials = index["trials"]
    rest = sum(tr["rest_fraction"] for tr in trials) / len(trials)
    print(f"dataset: {out}")
    print(f"subjects: {scfg.n_subjects}  positions: 3  trials: {len(trials)}")
    print(f"trial length: {scfg.duration_s:g} s  seed: {scfg.seed}")
    print(f"mean rest fraction: {rest:.3f}")
    print(f"sha256: {tree_digest(out)}")
    print(f"elapsed: {time.perf_counter() - t:.1f} s")
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    data = Path(args.data or cfg.run.data_dir)
    if not (data / "dataset.json").is_file():
        raise UsageError(f"no dataset at {data} (expected {data / 'dataset.json'}); run `emgshift synth` first")
    strategies = parse_strategies(args.strategies) if args.strategies else None
    norms = _NORM_CHOICES[args.norm] if args.norm else None
    try:
        plan = cfg.experiment_plan(grid=args.grid, strategies=strategies, norms=norms)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    missing = set(plan.subjects or ()) - set(list_subjects(data))
    if missing:
        raise UsageError(f"subjects {sorted(missing)} not in {data}")
    out = Path(args.out or cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / "config.ini", config_to_ini(cfg))
    jobs = args.jobs if args.jobs is not None else cfg.run.jobs
    t = time.perf_counter()

    def progress(done, total):
        print(f"  unit {done}/{total}  {time.perf_counter() - t:.0f} s", file=sys.stderr)

    model_dir = out / "models" if args.save_models else None
    per_seed = run_experiment(data, plan, jobs=jobs, progress=progress, model_dir=model_dir)
    summary = write_results(out, per_seed, plan)
    n_rows = sum(len(r) for r in per_seed.values())
    print(f"results: {out}  rows: {n_rows}  seeds: {list(plan.seeds)}")
    print(f"{'strategy':<16}{'mean diff':>12}{'sd seeds':>10}{'p (bonf.)':>12}")
    for name, s in sorted(summary["strategies"].items()):
        p = summary["tests"].get(name, {}).get("p_bonferroni")
        p_txt = f"{p:.3g}" if p is not None else "-"
        print(f"{name:<16}{s['mean_differential']:>12.4f}{s['sd_over_seeds']:>10.4f}{p_txt:>12}")
    print(f"elapsed: {time.perf_counter() - t:.1f} s")
    return EXIT_OK


def cmd_check(args, cfg) -> int:
    names = None
    if args.only:
        names = [n.strip() for n in args.only.split(",") if n.strip()]
        bad = [n for n in names if n not in CHECKS]
        if bad:
            raise UsageError(f"unknown checks {bad}; choose from {', '.join(CHECKS)}")
    results = run_checks(names, filter_spec=cfg.filter, thresholds=cfg.labeling,
                         inject_fault=args.inject_fault, seed=cfg.run.seed)
    ok = True
    for name, secs, rows in results:
        print(f"[{name}] {secs:.2f} s")
        for r in rows:
            print(f"  {r.line()}")
            ok &= r.passed
    print("all checks passed" if ok else "CHECK FAILURE")
    return EXIT_OK if ok else EXIT_FAIL


class _VersionAction(argparse.Action):
    def __init__(self, option_strings, dest, **kw):
        super().__init__(option_strings, dest, nargs=0, default=argparse.SUPPRESS, **kw)

    def __call__(self, parser, namespace, values, option_string=None):
        print(f"emgshift {__version__}")
        print(json.dumps({"schema_versions": SCHEMA_VERSIONS}, indent=2, sort_keys=True))
        parser.exit(EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    def common_flags(default):
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--config", metavar="PATH", default=default,
                       help="INI file; unknown keys are rejected")
        p.add_argument("--seed", type=int, metavar="N", default=default,
                       help="overrides run.seed from the config")
        return p

    # flags may come before or after the subcommand; the subcommand's copy
    # must not reset a value given before it
    common = common_flags(argparse.SUPPRESS)
    ap = argparse.ArgumentParser(prog="emgshift", parents=[common_flags(None)],
                                 description="EMG motion classification under electrode shift")
    ap.add_argument("--version", action=_VersionAction, help="print file-format schema versions")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    s.add_argument("--out", metavar="DIR", help="dataset directory (default: run.data_dir)")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", parents=[common], help="train and evaluate every strategy")
    r.add_argument("--data", metavar="DIR", help="dataset directory (default: run.data_dir)")
    r.add_argument("--out", metavar="DIR", help="results directory (default: run.out_dir)")
    r.add_argument("--strategies", metavar="LIST", help="e.g. vanilla,mix (BASELINE is always run)")
    r.add_argument("--norm", choices=sorted(_NORM_CHOICES))
    r.add_argument("--grid", choices=("desk", "full"))
    r.add_argument("--jobs", type=int, metavar="N", help="worker processes")
    r.add_argument("--save-models", action="store_true",
                   help="write checkpoints and training logs under OUT/models")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", parents=[common], help="run the numerical self-checks")
    c.add_argument("--only", metavar="LIST", help=f"subset of: {', '.join(CHECKS)}")
    c.add_argument("--inject-fault", action="store_true",
                   help="perturb the analytic gradient; the gradient check must fail")
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        if getattr(args, "jobs", None) is not None and args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args, cfg)
    except (UsageError, ConfigFileError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
