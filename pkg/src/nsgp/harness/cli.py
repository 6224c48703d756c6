"""Command line entry point.

Subcommands: ``synth`` writes a synthetic dataset, ``fit`` fits a model
and saves a snapshot, ``simulate`` replays the sensing simulation from
a snapshot, ``run`` does everything end to end, ``oracle`` cross-checks
the numerics against dense reference implementations.

Exit codes: 0 success, 2 configuration or input validation, 3 numerical
or stage failure, 4 file system trouble.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from ..errors import NumericalError, StageError, ValidationError
from ..lisal import lisal_fit
from ..oracles import run_battery
from .config import ExperimentConfig, load_config
from .dataio import Standardizer, write_csv, write_latent_csv
from .experiment import load_dataset, run_experiment, write_rmse_csv
from .simulate import simulate_sensing
from .snapshot import load_snapshot, save_snapshot

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _add_common(sub: argparse.ArgumentParser, needs_config: bool = True) -> None:
    if needs_config:
        sub.add_argument("--config", required=True, help="path to a TOML experiment config")
        sub.add_argument("--out", default=None, help="override the output directory")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["out"] = Path(args.out)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _standardizer(cfg: ExperimentConfig, train) -> Standardizer:
    return Standardizer.fit(train.values) if cfg.standardize else Standardizer.identity()


def _cmd_synth(args) -> int:
    cfg = _load(args)
    if cfg.synth is None:
        raise ValidationError("the synth command needs a config with a 'synth' entry")
    train, test, truth = load_dataset(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "dataset.csv", train, test)
    points = np.vstack([train.points, test.points])
    write_latent_csv(out / "latent.csv", points, truth)
    print(f"wrote {out / 'dataset.csv'} ({train.n} train, {test.n} test)")
    print(f"wrote {out / 'latent.csv'}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    cfg = _load(args)
    train_raw, _, _ = load_dataset(cfg)
    std = _standardizer(cfg, train_raw)
    model, trace = lisal_fit(std.transform_set(train_raw), cfg.lisal_config())
    print(f"stationary objective: {trace.stationary_objective:.3f}")
    for rec in trace.records:
        print(f"iteration {rec.iteration}: objective {rec.objective:.3f} (+{len(rec.selected)} latent locations)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_snapshot(out / "snapshot.json", model, std)
    print(f"wrote {out / 'snapshot.json'}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    snap_path = Path(args.snapshot) if args.snapshot else Path(cfg.out) / "snapshot.json"
    model, std = load_snapshot(snap_path)
    if std is None:
        std = Standardizer.identity()
    train_raw, test_raw, _ = load_dataset(cfg)
    report = simulate_sensing(
        model,
        std.transform_set(train_raw),
        std.transform_set(test_raw),
        cfg.k,
        cfg.history_window,
        standardizer=std,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rmse_csv(out / "rmse.csv", {"snapshot": report})
    print(f"mean rmse over {len(report.rmse)} timesteps: {report.mean_rmse:.6f}")
    print(f"wrote {out / 'rmse.csv'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, progress=print)
    for stage, mean_rmse in result.report.per_iteration:
        print(f"{stage}: mean rmse {mean_rmse:.6f}")
    if result.latent_correlation is not None:
        print(f"latent recovery |corr|: {result.latent_correlation:.3f}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    results = run_battery(seed=args.seed if args.seed is not None else 0, instances=args.instances)
    failed = False
    for name, err, tol in results:
        ok = err <= tol
        failed = failed or not ok
        print(f"{name}: worst error {err:.2e} (tolerance {tol:.0e}) {'ok' if ok else 'FAIL'}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsgp",
        description="Nonstationary GP experiments with adaptive latent-location sampling",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("synth", help="generate a synthetic dataset")
    _add_common(sub)
    sub.set_defaults(handler=_cmd_synth)

    sub = subs.add_parser("fit", help="fit a model and save a snapshot")
    _add_common(sub)
    sub.set_defaults(handler=_cmd_fit)

    sub = subs.add_parser("simulate", help="run the sensing simulation from a snapshot")
    _add_common(sub)
    sub.add_argument("--snapshot", default=None, help="snapshot path (default: <out>/snapshot.json)")
    sub.set_defaults(handler=_cmd_simulate)

    sub = subs.add_parser("run", help="fit, simulate every stage, write reports")
    _add_common(sub)
    sub.set_defaults(handler=_cmd_run)

    sub = subs.add_parser("oracle", help="cross-check numerics against dense references")
    _add_common(sub, needs_config=False)
    sub.add_argument("--instances", type=int, default=100, help="random instances per check")
    sub.set_defaults(handler=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
