"""``rangeloc`` command-line interface.

Every command validates the scenario and the output directory before any
simulation starts, so a configuration error never leaves partial output.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from pathlib import Path

import yaml

from . import metrics
from .config import ConfigError, dump_scenario, load_scenario, scenario_from_dict, scenario_to_dict
from .consensus import Scheme
from .experiments import compare_consensus, refine_study, variance_study
from .linmodel import WeightMode
from .sim import ScenarioConfig, run_monte_carlo

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario YAML path or preset name")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--scheme", choices=[s.value for s in Scheme])
    common.add_argument("--weight-mode", choices=[w.value for w in WeightMode])
    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument("--out", required=True, type=Path, help="output directory")
    outputs.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    outputs.add_argument("--threads", type=int, default=1, help="trial-level worker threads")

    parser = argparse.ArgumentParser(prog="rangeloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common, outputs], help="simulate one scenario")
    sweep = sub.add_parser("sweep", parents=[common, outputs], help="run a grid of scenario variants")
    sweep.add_argument("--set", action="append", default=[], metavar="KEY=V1,V2",
                       help="scenario field and comma-separated values; repeat for a product grid")
    sub.add_parser("compare-consensus", parents=[common, outputs], help="CDFs of consensus information errors")
    sub.add_parser("variance", parents=[common, outputs], help="estimate variance against consensus rounds")
    sub.add_parser("refine-study", parents=[common, outputs], help="likelihood refinement of the estimates")
    sub.add_parser("validate", parents=[common], help="check a scenario file and print ok")
    return parser


def _overridden(cfg: ScenarioConfig, args) -> ScenarioConfig:
    data = scenario_to_dict(cfg)
    for key, value in (("seed", args.seed), ("trials", args.trials), ("scheme", args.scheme),
                       ("weight_mode", args.weight_mode)):
        if value is not None:
            data[key] = value
    return scenario_from_dict(data, f"{cfg.name} (command-line overrides)")


def _sweep_grid(cfg: ScenarioConfig, settings: list[str]) -> list[tuple[str, ScenarioConfig]]:
    keys, choices = [], []
    for item in settings:
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise ConfigError(f"--set {item!r}: expected KEY=V1,V2,...")
        keys.append(key.strip())
        choices.append([yaml.safe_load(v) for v in values.split(",")])
    base = scenario_to_dict(cfg)
    grid = []
    for combo in itertools.product(*choices):
        data = dict(base)
        data.update(zip(keys, combo))
        label = "_".join(f"{k}={v}" for k, v in zip(keys, combo)) or "base"
        grid.append((label, scenario_from_dict(data, f"--set {label}")))
    return grid


def _check_writable(out: Path) -> None:
    probe = out
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK | os.X_OK):
        raise ConfigError(f"{out}: output directory is not writable")


def _write(out: Path, stem: str, fmt: str, columns, rows) -> None:
    metrics.write_table(out / f"{stem}.{fmt}", columns, rows, fmt)


def _run_outputs(cfg: ScenarioConfig, out: Path, fmt: str, threads: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    traces = run_monte_carlo(cfg, threads=threads)
    (out / "scenario.yaml").write_text(dump_scenario(cfg))
    for k in range(len(cfg.targets)):
        suffix = "" if len(cfg.targets) == 1 else f"_target{k}"
        metrics.export(metrics.mae(traces, k), out / f"mae{suffix}.{fmt}", fmt)
    _write(out, "trace", fmt, metrics.trace_columns(cfg.dim), metrics.trace_rows(traces))
    _write(out, "decisions", fmt, metrics.DECISION_COLUMNS, metrics.decision_rows(traces))


def _compare_outputs(cfg: ScenarioConfig, out: Path, fmt: str) -> None:
    result = compare_consensus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for (quantity, scheme), cdf in result.cdfs().items():
        metrics.export(cdf, out / f"cdf_{quantity}_{scheme.value}.{fmt}", fmt)
    rows = [{"quantity": q, "scheme": s.value, "median": m} for (q, s), m in result.medians().items()]
    _write(out, "medians", fmt, ("quantity", "scheme", "median"), rows)


def _variance_outputs(cfg: ScenarioConfig, out: Path, fmt: str) -> None:
    schemes = {Scheme.ISEEU, Scheme.CONS_INNOV, cfg.scheme}
    result = variance_study(cfg, sorted(schemes, key=list(Scheme).index))
    out.mkdir(parents=True, exist_ok=True)
    for scheme, study in result.items():
        metrics.export(study.trace, out / f"variance_{scheme.value}.{fmt}", fmt)
    rows = [{"scheme": s.value, "plateau_entry": study.plateau_entry(), "final_tau_var": float(study.trace.tau_var[-1])}
            for s, study in result.items()]
    _write(out, "plateau", fmt, ("scheme", "plateau_entry", "final_tau_var"), rows)


def _refine_outputs(cfg: ScenarioConfig, out: Path, fmt: str, threads: int) -> None:
    result = refine_study(cfg, threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    for method, series in result.mae.items():
        metrics.export(series, out / f"mae_{method}.{fmt}", fmt)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _overridden(load_scenario(args.scenario), args)
        grid = _sweep_grid(cfg, args.set) if args.command == "sweep" else None
        if args.command != "validate":
            if args.threads < 1:
                raise ConfigError("--threads: must be at least 1")
            if args.command in ("compare-consensus", "variance") and cfg.placement_per_trial:
                raise ConfigError(f"{cfg.name}: placement_per_trial: ensemble studies need a fixed placement")
            _check_writable(args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print("ok")
        return EXIT_OK
    try:
        if args.command == "run":
            _run_outputs(cfg, args.out, args.format, args.threads)
        elif args.command == "sweep":
            for label, variant in grid:
                _run_outputs(variant, args.out / label, args.format, args.threads)
        elif args.command == "compare-consensus":
            _compare_outputs(cfg, args.out, args.format)
        elif args.command == "variance":
            _variance_outputs(cfg, args.out, args.format)
        else:
            _refine_outputs(cfg, args.out, args.format, args.threads)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
