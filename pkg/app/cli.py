#!/usr/bin/env python3
"""
Command-line runner.

Verbs:
    run         run one scenario (preset or config file)
    sweep       one run per phase difference
    refine      refinement study against an exact solution
    presets     list the shipped presets
    sweep-rows  show the registry rows of one sweep
    delete-run  remove a run from the registry
    backup      copy the registry file

Exit status is 0 on success and 1 when a solver or config error is reported
or a registry entry is missing.
"""

import os
import sys
import logging
import argparse
from typing import Dict, List, Optional

from app.config import get_settings, setup_logging
from app.errors import ConfigInvalid, SolverError
from app.run_registry import RunRegistry
from app.scenario_handler import (ScenarioConfig, list_presets, load_config, load_preset,
                                  run_phase_sweep, run_refinement_study, run_scenario,
                                  write_sweep_csv)

logger = logging.getLogger(__name__)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    result: Dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigInvalid(f"override {pair!r} is not key=value", field="--set")
        key, value = pair.split("=", 1)
        result[key.strip()] = value.strip()
    return result


def _add_scenario_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="path to a key = value scenario config")
    source.add_argument("--preset", help="name of a shipped preset")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnls", description="Linearly coupled NLS soliton collision runner")
    parser.add_argument("--log-level", default=None, help="logging level (default SOLVER_LOG_LEVEL)")
    verbs = parser.add_subparsers(dest="verb", required=True)

    run = verbs.add_parser("run", help="run one scenario")
    _add_scenario_arguments(run)
    run.add_argument("--phase-diff", type=float, help="phase difference [delta] in degrees")
    run.add_argument("--snapshot-times", type=_float_list, help="comma-separated snapshot times")
    run.add_argument("--series-every", type=int, help="steps between series rows")

    sweep = verbs.add_parser("sweep", help="one run per phase difference")
    _add_scenario_arguments(sweep)
    sweep.add_argument("--phases", type=_float_list, required=True, help="comma-separated phase differences (deg)")
    sweep.add_argument("--workers", type=int, help="worker processes")
    sweep.add_argument("--normalize", nargs=2, type=float, metavar=("PHASE", "ENERGY"),
                       help="fit one energy constant so that PHASE reports ENERGY")
    sweep.add_argument("--series-every", type=int, help="steps between series rows")

    refine = verbs.add_parser("refine", help="refinement study against an exact solution")
    _add_scenario_arguments(refine)
    refine.add_argument("--levels", type=int, default=3, help="number of refinement levels")

    verbs.add_parser("presets", help="list shipped presets")

    sweep_rows = verbs.add_parser("sweep-rows", help="show the registry rows of one sweep")
    sweep_rows.add_argument("sweep_id", help="sweep id printed by 'sweep'")

    delete = verbs.add_parser("delete-run", help="remove a run from the registry")
    delete.add_argument("run_id", help="run id to remove")

    backup = verbs.add_parser("backup", help="copy the registry file")
    backup.add_argument("--dir", dest="backup_dir", help="backup directory (default: next to the registry)")
    return parser


def _load(args: argparse.Namespace) -> ScenarioConfig:
    overrides = _overrides(args.set)
    if getattr(args, "phase_diff", None) is not None:
        overrides["phase_diff"] = repr(args.phase_diff)
    if getattr(args, "series_every", None) is not None:
        overrides["series_every"] = str(args.series_every)
    if getattr(args, "snapshot_times", None) is not None:
        overrides["snapshot_times"] = ", ".join(repr(t) for t in args.snapshot_times)
    if args.preset:
        return load_preset(args.preset, overrides=overrides)
    return load_config(args.config, overrides)


def _registry_command(args: argparse.Namespace, registry: RunRegistry) -> int:
    if args.verb == "sweep-rows":
        rows = registry.get_sweep(args.sweep_id)
        if not rows:
            logger.error(f"Sweep {args.sweep_id} not found in the registry")
            return 1
        for row in rows:
            print(f"[delta]={row['phase_diff_deg']:g} {row['status']} run={row.get('run_id')} "
                  f"E={row.get('energy')} M={row.get('mass')} {row.get('error') or ''}")
        return 0
    if args.verb == "delete-run":
        if not registry.delete_run(args.run_id):
            logger.error(f"Run {args.run_id} not found in the registry")
            return 1
        print(f"deleted {args.run_id}")
        return 0
    result = registry.backup(args.backup_dir)
    if not result["success"]:
        logger.error(result["error"])
        return 1
    print(f"registry backup: {result['backup_path']}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    settings = get_settings()

    try:
        if args.verb == "presets":
            for name in list_presets(settings.preset_dir):
                config = load_preset(name, settings.preset_dir)
                specs = ", ".join(f"(X={s.X:g}, c={s.c:g}, n=({s.n_psi:g}, {s.n_phi:g}))" for s in config.solitons)
                print(f"{name}: alpha1={config.model.alpha1:g} Gamma={config.model.gamma_re:g} "
                      f"t_final={config.t_final:g} solitons {specs}")
            return 0

        if args.verb in ("sweep-rows", "delete-run", "backup"):
            return _registry_command(args, RunRegistry(settings.registry_path))

        config = _load(args)
        registry = RunRegistry(settings.registry_path)
        if args.verb == "run":
            artifacts = run_scenario(config, output_dir=args.out, registry=registry, settings=settings)
            with open(artifacts.summary_path) as f:
                print(f.read())
        elif args.verb == "sweep":
            out = args.out or os.path.join(settings.output_dir, f"{config.name}-sweep")
            rows = run_phase_sweep(config, args.phases, output_dir=out, workers=args.workers,
                                   registry=registry, normalization=tuple(args.normalize) if args.normalize else None)
            os.makedirs(out, exist_ok=True)
            path = write_sweep_csv(rows, os.path.join(out, "sweep.csv"))
            for row in rows:
                print(f"[delta]={row.phase_diff_deg:g} {row.status} E={row.energy} "
                      f"E_norm={row.energy_normalized} M={row.mass} {row.error or ''}")
            print(f"sweep id: {rows[0].sweep_id}" if rows else "sweep id: -")
            print(f"sweep table: {path}")
            if any(r.status == "failed" for r in rows):
                return 1
        elif args.verb == "refine":
            rows = run_refinement_study(config, args.levels)
            print("level        h          dtau        error        order")
            for row in rows:
                order = f"{row.order:.3f}" if row.order is not None else "-"
                print(f"{row.level:5d} {row.h:11.5g} {row.dtau:11.5g} {row.error:12.5e} {order:>8s}")
        return 0
    except SolverError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
