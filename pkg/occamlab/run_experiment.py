#!/usr/bin/env python3
"""
Experiment runner for the MAP / MDL / Bayes inconsistency simulations.

Runs one experiment over its (m, trial) grid and writes rows.csv,
summary.csv, meta.json (plus region.csv for the region sweep and
timing.csv / run_info.json) into the output directory.

Usage:
    occamlab inconsistency --m 4096 --trials 50 --out results/inconsistency
"""

import argparse
import logging
import sys
from datetime import datetime, timezone

from occamlab import __version__
from occamlab.experiments import CONFIG_KEYS, EXPERIMENTS, MODES, ExperimentConfig, run_experiment
from occamlab.result_exporters import export_run

logger = logging.getLogger('occamlab')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_HARD_FAILURE = 2
EXIT_STATISTICAL_FAILURE = 3


class _UsageParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_key_help():
    defaults = ExperimentConfig().to_dict()
    lines = ["Config keys (flat JSON, or --set KEY=VALUE):"]
    for key in CONFIG_KEYS:
        lines.append(f"  {key:<26} default: {defaults[key]}")
    lines.append("  (m_list and trials have per-experiment defaults)")
    return "\n".join(lines)


def build_parser():
    parser = _UsageParser(
        prog='occamlab',
        description='Simulate where MAP, MDL and Bayes classification go wrong',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  Inconsistency of MAP / sMAP / MDL at m = 4096:
    occamlab inconsistency --m 4096 --trials 50 --out results/inconsistency

  ORB consistency on the same problem:
    occamlab orb-consistency --m 16384 --out results/orb

  Sequential Bayes mistake bound:
    occamlab sequential --m 2000 --out results/sequential

  Polynomial-tail prior contrast:
    occamlab inconsistency --config configs/poly.json --set prior.classifier=block-polynomial

{_config_key_help()}

Exit codes: 0 success, 1 usage/config error, 2 hard invariant failure,
3 statistical failure under --strict.
        """
    )

    parser.add_argument('experiment', type=str, choices=EXPERIMENTS,
                        help='Experiment to run')
    parser.add_argument('--config', type=str, default=None,
                        help='Flat JSON config file (default: built-in defaults)')

    # Frequently changed keys
    parser.add_argument('--seed', type=int, default=None, help='Run seed')
    parser.add_argument('--m', type=int, nargs='+', default=None,
                        help='Sample sizes (overrides m_list)')
    parser.add_argument('--trials', type=int, default=None, help='Trials per sample size')
    parser.add_argument('--mode', type=str, default=None, choices=MODES,
                        help='Sample representation (default: auto)')
    parser.add_argument('--mu', type=float, default=None, help='Error rate of c_0')
    parser.add_argument('--mu-prime', type=float, default=None,
                        help='Error rate of the bad classifiers')
    parser.add_argument('--mu-hard', type=float, default=None,
                        help='Bad-classifier error rate on hard examples')
    parser.add_argument('--workers', type=int, default=None,
                        help='Worker processes (default: 1)')
    parser.add_argument('--set', dest='overrides', action='append', default=[],
                        metavar='KEY=VALUE', help='Override any config key (repeatable)')

    # Output options
    parser.add_argument('-o', '--out', type=str, default=None,
                        help='Output directory (default: results)')
    parser.add_argument('--stdout', action='store_true',
                        help='Also print summary.csv to standard output')
    parser.add_argument('--strict', action='store_true',
                        help='Exit 3 when a statistical check fails')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='Progress on stderr (-v info, -vv debug)')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    return parser


def configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s')


def load_config(args):
    """
    Merge defaults, the config file and command-line flags.

    Args:
        args: Parsed argparse namespace

    Returns:
        ExperimentConfig
    """
    if args.config:
        config = ExperimentConfig.from_json(args.config, experiment=args.experiment)
    else:
        config = ExperimentConfig.for_experiment(args.experiment)

    flags = {
        'seed': args.seed,
        'm_list': args.m,
        'trials': args.trials,
        'mode': args.mode,
        'mu': args.mu,
        'mu_prime': args.mu_prime,
        'mu_hard': args.mu_hard,
        'workers': args.workers,
        'out_dir': args.out,
    }
    config.apply({k: v for k, v in flags.items() if v is not None})
    config.apply_overrides(args.overrides)
    return config


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    # Step 1: Configuration
    logger.info("[1/4] Validating configuration...")
    try:
        config = load_config(args)
    except (OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    is_valid, issues = config.validate()
    if not is_valid:
        print("Error: Invalid configuration:", file=sys.stderr)
        for issue in issues:
            print(f"  - {issue}", file=sys.stderr)
        return EXIT_USAGE
    logger.info("  Experiment: %s, m=%s, trials=%d, seed=%d, mode=%s",
                config.experiment, config.m_list, config.trials, config.seed, config.mode)
    logger.info("  Config hash: %s", config.config_hash())

    # Step 2: Trials
    logger.info("[2/4] Running trials...")
    started = datetime.now(timezone.utc)
    result = run_experiment(config)
    finished = datetime.now(timezone.utc)
    logger.info("  %d rows in %.1fs", len(result.rows), (finished - started).total_seconds())

    # Step 3: Checks
    logger.info("[3/4] Evaluating checks...")
    for check in result.checks:
        log = logger.info if check.passed else logger.warning
        log("  %s %s m=%d %s: %.6g vs %.6g (%s)", 'PASS' if check.passed else 'FAIL',
            check.statistic, check.m, check.algorithm or '-', check.value, check.threshold,
            check.kind)

    # Step 4: Output
    logger.info("[4/4] Writing results...")
    paths = export_run(result, config.out_dir, started, finished)
    if args.stdout:
        with open(paths['summary'], 'r', encoding='utf-8') as f:
            sys.stdout.write(f.read())

    code = result.exit_code(strict=args.strict)
    if result.hard_failures:
        print(f"Error: {len(result.hard_failures)} invariant check(s) failed", file=sys.stderr)
    elif result.statistical_failures:
        print(f"Warning: {len(result.statistical_failures)} statistical check(s) failed",
              file=sys.stderr)

    print(f"Results written to {config.out_dir}", file=sys.stderr)
    return code


if __name__ == '__main__':
    sys.exit(main())
