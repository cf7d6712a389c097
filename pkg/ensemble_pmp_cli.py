#!/usr/bin/env python3
"""
Ensemble PMP CLI

Entry point for SAA solves of ensemble optimal control problems.
Usage: python ensemble_pmp_cli.py [command] [options]
"""

import argparse
import logging
import os
import sys

# Add repo root to path
sys.path.insert(0, os.path.dirname(__file__))

from ensemble_pmp.analysis import analyze_run
from ensemble_pmp.config import RunConfig, dump_config, parse_config
from ensemble_pmp.errors import ConfigError, IntegrationAbort, SolverError
from ensemble_pmp.report import write_gnuplot_script, write_outputs
from ensemble_pmp.solver import saa_solve
from ensemble_pmp.utils import data_status_emoji, format_number
from ensemble_pmp.validate import validate_run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3


def _fmt(value):
    return "-" if value is None else format_number(value)


def print_metric_table(records):
    """Per-iteration metrics to standard output."""
    print(f"\n📊 {'k':>5} {'J':>14} {'rel_J':>12} {'rel_u':>12} {'inner':>6}")
    for rec in records:
        flag = " ⚠️ stalled" if rec.stalled else ""
        print(f"   {rec.k:>5} {_fmt(rec.J):>14} {_fmt(rec.rel_J):>12} {_fmt(rec.rel_u):>12} "
              f"{rec.inner_iters:>6}{flag}")


def run(config: RunConfig, quiet: bool = False) -> int:
    """
    Execute saa_solve for a validated config and write the run directory.

    Returns:
        Exit code (0 success, 2 solver failure, 3 I/O failure)
    """
    spec = config.problem()
    schedule = config.saa_schedule()
    print(f"🚀 Solving '{config.model}' on N={config.grid} for k in "
          f"{schedule.sizes[0]}..{schedule.sizes[-1]} (seed {config.seed})")
    try:
        report = saa_solve(spec, schedule, config.solver_options(),
                           validation_samples=config.validation_samples, progress=not quiet)
    except SolverError as e:
        print(f"❌ Solver failed: {e}")
        if e.partial_report:
            print_metric_table(e.partial_report)
        return EXIT_SOLVER
    except IntegrationAbort as e:
        print(f"❌ Integration aborted: {e}")
        return EXIT_SOLVER

    print_metric_table(report.iterations)
    print(f"\n✓ Final J = {format_number(report.final_J)} "
          f"(u ≡ u_min baseline {format_number(report.baseline_J)})")
    if report.validation:
        v = report.validation
        print(f"✓ Out-of-sample J = {format_number(v['mean'])} ± {format_number(v['stderr'])} "
              f"({v['samples']} samples)")
    counts = {label: report.arcs.count(label) for label in ("MAX", "MIN", "SINGULAR")}
    print(f"✓ Arc labels: {counts}, {len(report.arcs.intervals)} interval(s)")
    if counts["SINGULAR"] == 0:
        print("⚠️ no first-order singular arc detected")

    try:
        paths = write_outputs(report, config.out, spec.fields.state_names, config.normalize())
        write_gnuplot_script(config.out)
    except OSError as e:
        print(f"❌ Could not write outputs: {e}")
        return EXIT_IO
    print(f"✅ Results written to {config.out}/ ({', '.join(sorted(paths))}, plot.gp)")
    return EXIT_OK


def cmd_solve(args):
    """Parse the config, apply overrides and run the SAA solve."""
    try:
        config = parse_config(args.config).with_overrides(
            seed=args.seed, samples=args.samples, grid=args.grid, out=args.out)
        if args.dry_run:
            print(dump_config(config))
            return EXIT_OK
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        return EXIT_CONFIG
    return run(config, quiet=args.quiet)


def cmd_plotscript(args):
    """Write a gnuplot script for the CSVs of a run directory."""
    try:
        path = write_gnuplot_script(args.out)
    except OSError as e:
        print(f"❌ Could not write plot script: {e}")
        return EXIT_IO
    print(f"✅ Plot script written: {path}")
    return EXIT_OK


def cmd_validate(args):
    """Validate the output manifest of a run directory."""
    print(f"🔍 Validating run directory {args.out}...")

    results = validate_run(args.out)

    for component, result in results.items():
        if component == 'overall':
            continue
        status = result.get('status', 'UNKNOWN')
        print(f"{data_status_emoji(status)} {component}: {status}")

        if 'error' in result:
            print(f"   Error: {result['error']}")

    overall_status = results.get('overall', {}).get('status', 'FAIL')
    print(f"\n🎯 Overall status: {overall_status}")

    return 0 if overall_status in ['PASS', 'WARNING'] else 1


def cmd_analyze(args):
    """Recompute acceptance metrics of a run directory."""
    print("📊 Analyzing run...")

    try:
        result = analyze_run(args.out)
    except (OSError, KeyError, ValueError) as e:
        print(f"❌ Analysis failed: {e}")
        return EXIT_IO

    conv = result['convergence']
    print(f"✓ {conv['pairs']} consecutive-k pairs")
    print(f"   • slope log rel_J: {_fmt(conv['slope_log_rel_J'])}")
    print(f"   • slope log rel_u: {_fmt(conv['slope_log_rel_u'])}")
    print(f"   • tail min rel_J: {_fmt(conv['tail_min_rel_J'])}")
    print(f"   • tail min rel_u: {_fmt(conv['tail_min_rel_u'])}")
    for label, entry in result['bang_bang'].items():
        print(f"   • {label} nodes: {entry['nodes']}, within 1% of bound: {_fmt(entry['fraction'])}")
    sing = result['singular']
    if sing['detected']:
        print(f"   • singular nodes with feedback: {sing['nodes']}, "
              f"max mismatch {_fmt(sing['max_mismatch'])}")
    else:
        print("   • no first-order singular arc detected")

    print("\n📈 CHECKS:")
    for name, status in result['checks'].items():
        print(f"{data_status_emoji(status)} {name}: {status}")
    return 0


def main(argv=None):
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        description="Ensemble PMP - SAA solves for ensemble optimal control",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Library log level')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # Solve command
    solve_parser = subparsers.add_parser('solve', help='Run the SAA solve')
    solve_parser.add_argument('--config', required=True, help='JSON run config')
    solve_parser.add_argument('--seed', type=int, help='Override the base seed')
    solve_parser.add_argument('--samples', type=int, help='Override the largest ensemble size')
    solve_parser.add_argument('--grid', type=int, help='Override the number of grid steps N')
    solve_parser.add_argument('--out', help='Override the output directory')
    solve_parser.add_argument('--dry-run', action='store_true',
                              help='Print the normalized config and exit')
    solve_parser.add_argument('--quiet', action='store_true', help='Hide the progress bar')

    # Plot script command
    plot_parser = subparsers.add_parser('plotscript', help='Write a gnuplot script')
    plot_parser.add_argument('--out', default='output', help='Run directory')

    # Validate command
    validate_parser = subparsers.add_parser('validate', help='Validate a run directory')
    validate_parser.add_argument('--out', default='output', help='Run directory')

    # Analyze command
    analyze_parser = subparsers.add_parser('analyze', help='Recompute acceptance metrics')
    analyze_parser.add_argument('--out', default='output', help='Run directory')

    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(levelname)s %(name)s: %(message)s')

    if not args.command:
        parser.print_help()
        return 1

    # Execute command
    commands = {
        'solve': cmd_solve,
        'plotscript': cmd_plotscript,
        'validate': cmd_validate,
        'analyze': cmd_analyze,
    }

    if args.command in commands:
        return commands[args.command](args)
    else:
        print(f"❌ Unknown command: {args.command}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
