"""
Command-line entry point for the federated shuffling simulator.
"""

import sys
import logging
import argparse
from typing import List, Optional

from src.analysis.theory import generate_theory_report
from src.data.libsvm import load_libsvm, summarize_dataset
from src.harness.experiment import load_experiment_config
from src.harness.runner import ExperimentRunner
from src.utils.config import Config
from src.utils.errors import ConfigurationError, FedShuffleError
from src.utils.helpers import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='fedshuffle',
        description='Federated random reshuffling with compressed communication',
    )
    parser.add_argument('--seed', type=int, default=None,
                        help='Override the seed of the experiment config')
    parser.add_argument('--quiet', action='store_true',
                        help='Only print errors (suppresses parameter-condition warnings)')
    parser.add_argument('--serial', action='store_true',
                        help='Run clients one after another even if settings enable the thread pool')

    commands = parser.add_subparsers(dest='command', required=True)
    for name, text in (('run', 'Run a single experiment'),
                       ('sweep', 'Run every grid point of a sweep config'),
                       ('theory', 'Write the theory report without training')):
        command = commands.add_parser(name, help=text)
        command.add_argument('config', help='Path to a JSON experiment config')

    check = commands.add_parser('parse-check', help='Validate a LIBSVM file')
    check.add_argument('path', help='Path to a LIBSVM file')
    return parser


def _parse_check(path: str) -> int:
    summary = summarize_dataset(load_libsvm(path))
    print(f"{summary['source']}: {summary['rows']} rows, {summary['features']} features, "
          f"{summary['nonzeros']} nonzeros, labels in [{summary['label_min']:g}, {summary['label_max']:g}]")
    return EXIT_OK


def _execute(args) -> int:
    if args.command == 'parse-check':
        return _parse_check(args.path)

    experiment = load_experiment_config(args.config, seed=args.seed)
    runner = ExperimentRunner(experiment, parallel=False if args.serial else None)

    if args.command == 'theory':
        report = runner.theory()
        print(generate_theory_report(report))
        return EXIT_OK

    outcomes = [runner.run()] if args.command == 'run' else runner.sweep()
    diverged = [outcome for outcome in outcomes if outcome.diverged]
    for outcome in outcomes:
        print(f"{outcome.prefix}.trace.csv: {len(outcome.traces)} run(s), "
              f"final sq_dist {outcome.traces[0].records[-1].sq_dist:.6g}")
    if diverged:
        logger.error(f"{len(diverged)} grid point(s) diverged; partial traces were written")
        return EXIT_DIVERGED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and return the process exit status."""
    args = build_parser().parse_args(argv)
    logging_config = Config().logging_config
    setup_logging(
        level=logging_config.get('level', 'INFO'),
        log_file=logging_config.get('file'),
        quiet=args.quiet,
        log_format=logging_config.get('format', '%(asctime)s - %(name)s - %(levelname)s - %(message)s'),
    )

    try:
        return _execute(args)
    except ConfigurationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except FedShuffleError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
