"""
Command-line entry point: run, sweep, validate and audit
"""

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional

from joblib import Parallel, delayed

from api_docs import CLI_DOCUMENTATION, EXIT_OK, EXIT_RUNTIME_ERROR, EXIT_USAGE_ERROR
from config import (SWEEP_PARAMETERS, ConfigParseError, ConfigValidationError, ScenarioConfig,
                    configure_logging, default_output_dir, dump_config, parse_config,
                    scenario_from_preset, with_parameter)
from metrics_report import FLOAT_FORMAT, emit_csv, metrics_row, write_sweep
from models import RunMetrics, SweepSpec
from replay_audit import audit_file
from sim_engine import run

logger = logging.getLogger(__name__)


class UsageError(ValueError):
    """Bad command-line input"""


def sweep_seed(root_seed: int, value_index: int, seed_index: int) -> int:
    """Stable 64-bit run seed for one point of a sweep"""
    digest = hashlib.sha256(f"{root_seed}:{value_index}:{seed_index}".encode()).digest()
    return int.from_bytes(digest[:8], 'big')


def parse_values(text: str) -> tuple:
    values = tuple(float(v) for v in (text or '').split(',') if v.strip())
    if not values:
        raise UsageError('--values must list at least one value')
    return values


def load_scenario(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return scenario_from_preset('default')
    if not os.path.isfile(path):
        raise UsageError(f"Config file not found: {path}")
    return parse_config(path)


def _fmt(value) -> str:
    return 'NA' if value is None else FLOAT_FORMAT % value


def summary_line(metrics: RunMetrics) -> str:
    return (f"seed={metrics.seed} accuracy={_fmt(metrics.accuracy)} f1={_fmt(metrics.f1)} "
            f"specificity={_fmt(metrics.specificity)} "
            f"mean_detection_epochs={_fmt(metrics.mean_detection_epochs)}")


def cmd_run(args) -> int:
    scenario = load_scenario(args.config)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed).ensure_valid()
    out_dir = args.out or default_output_dir()

    log, metrics = run(scenario)
    emit_csv(metrics, log, out_dir)
    config_path = os.path.join(out_dir, 'config.yaml')
    try:
        with open(config_path, 'w', encoding='utf-8') as handle:
            handle.write(dump_config(scenario))
    except OSError as e:
        raise OSError(f"Cannot write {config_path}: {e.strerror or e}") from e

    print(summary_line(metrics))
    return EXIT_OK


def _sweep_point(base: ScenarioConfig, param: str, value: float, run_seed: int) -> dict:
    scenario = replace(with_parameter(base, param, value), seed=run_seed)
    _, metrics = run(scenario)
    return metrics_row(metrics, param, value)


def sweep_rows(base: ScenarioConfig, sweep: SweepSpec, jobs: int = 1) -> List[dict]:
    """
    Execute every (value, seed) point of a sweep

    Args:
        base (ScenarioConfig): Scenario the sweep varies
        sweep (SweepSpec): Parameter, values and seeds per value
        jobs (int): Worker processes

    Returns:
        list: metrics rows, one per run, in execution-independent order
    """
    points = []
    for value_index, value in enumerate(sweep.values):
        # fail fast on values the scenario cannot take
        with_parameter(base, sweep.param, value)
        root = int(value) if sweep.param == 'seed' else base.seed
        for seed_index in range(sweep.seeds):
            points.append((value, sweep_seed(root, value_index, seed_index)))

    logger.info(f"Sweep over {sweep.param}: {len(sweep.values)} values x {sweep.seeds} seeds, {jobs} jobs")
    rows = Parallel(n_jobs=jobs)(
        delayed(_sweep_point)(base, sweep.param, value, run_seed) for value, run_seed in points
    )
    return sorted(rows, key=lambda r: (float(r['sweep_value']), r['seed']))


def cmd_sweep(args) -> int:
    base = load_scenario(args.config)
    if args.seeds < 1:
        raise UsageError('--seeds must be >= 1')
    if args.jobs == 0:
        raise UsageError('--jobs must be non-zero')
    sweep = SweepSpec(param=args.param, values=parse_values(args.values), seeds=args.seeds)
    out_dir = args.out or default_output_dir()

    rows = sweep_rows(base, sweep, args.jobs)
    for path in write_sweep(rows, out_dir):
        print(path)
    return EXIT_OK


def cmd_validate(args) -> int:
    load_scenario(args.config)
    print('OK')
    return EXIT_OK


def cmd_audit(args) -> int:
    if not os.path.isfile(args.events):
        raise UsageError(f"Events file not found: {args.events}")
    config_path = args.config
    if config_path is None:
        # run writes config.yaml next to events.csv
        sibling = os.path.join(os.path.dirname(args.events), 'config.yaml')
        config_path = sibling if os.path.isfile(sibling) else None
    report = audit_file(args.events, load_scenario(config_path))
    for mismatch in report.mismatches:
        print(mismatch)
    if not report.ok:
        return EXIT_RUNTIME_ERROR
    print(f"OK ({report.trust_records} trust records, {report.suspect_records} suspect events, "
          f"{report.accepted_responses} accepted responses)")
    return EXIT_OK


def _epilog() -> str:
    outputs = '\n'.join(f"  {name}: {', '.join(columns)}" for name, columns in CLI_DOCUMENTATION['outputs'].items())
    codes = '\n'.join(f"  {code}  {text}" for code, text in CLI_DOCUMENTATION['exit_codes'].items())
    return f"outputs:\n{outputs}\n\nexit codes:\n{codes}"


def build_parser() -> argparse.ArgumentParser:
    docs = CLI_DOCUMENTATION
    common_help = docs['common_options']
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-level', default='INFO', help=common_help['--log-level'])
    common.add_argument('--log-json', action='store_true', help=common_help['--log-json'])

    parser = argparse.ArgumentParser(prog=docs['prog'], description=docs['description'], epilog=_epilog(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    commands = parser.add_subparsers(dest='command', required=True)

    def add_command(name, handler):
        doc = docs['commands'][name]
        sub = commands.add_parser(name, parents=[common], help=doc['description'], description=doc['description'])
        sub.set_defaults(handler=handler)
        return sub, doc['options']

    run_parser, options = add_command('run', cmd_run)
    run_parser.add_argument('--config', help=options['--config'])
    run_parser.add_argument('--seed', type=int, help=options['--seed'])
    run_parser.add_argument('--out', help=options['--out'])

    sweep_parser, options = add_command('sweep', cmd_sweep)
    sweep_parser.add_argument('--config', help=options['--config'])
    sweep_parser.add_argument('--param', required=True, choices=sorted(SWEEP_PARAMETERS), help=options['--param'])
    sweep_parser.add_argument('--values', required=True, help=options['--values'])
    sweep_parser.add_argument('--seeds', type=int, default=5, help=options['--seeds'])
    sweep_parser.add_argument('--jobs', type=int, default=1, help=options['--jobs'])
    sweep_parser.add_argument('--out', help=options['--out'])

    validate_parser, options = add_command('validate', cmd_validate)
    validate_parser.add_argument('--config', required=True, help=options['--config'])

    audit_parser, options = add_command('audit', cmd_audit)
    audit_parser.add_argument('--events', required=True, help=options['--events'])
    audit_parser.add_argument('--config', help=options['--config'])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE_ERROR

    configure_logging(args.log_level, args.log_json)
    try:
        return args.handler(args)
    except ConfigValidationError as e:
        for violation in e.violations:
            print(violation)
        return EXIT_USAGE_ERROR
    except (ConfigParseError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE_ERROR
    except Exception as e:
        logger.error(f"Command {args.command} failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == '__main__':
    sys.exit(main())
