#!/usr/bin/env python3

""" cli.py
    ...Command line interface: train, sweep, aggregate, plot, verify,
    compare and acceptance.

    Exit codes: 0 success, 1 runtime failure (or failed checks), 2 bad
    configuration.
"""

import argparse
import json
import logging
import os
import sys

from . import __version__
from .common_base import (
    BackedUpWriter,
    dcConfigError,
    dcError,
)
from .config import (
    expand_grid,
    layered_run_config,
    load_grid,
)
from .harness import (
    acceptance_grids,
    acceptance_report,
    aggregate,
    find_runs,
    group_runs,
    invariance_report,
    learning_report,
    read_aggregate,
    read_manifest,
    run_experiment,
    sweep,
    write_aggregate,
)
from .oracle import verify_suite
from .plotting import emit_plot

log = logging.getLogger('distcritic')

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def write_report(records, filename=None):
    """ Print check records as JSON, or write them to `filename`. """
    text = json.dumps(records, indent=4, sort_keys=True)
    if filename:
        with BackedUpWriter(filename) as f:
            f.write(text + '\n')
    else:
        print(text)
    return EXIT_OK if all(r['passed'] for r in records) else EXIT_FAILURE


def cmd_train(args):
    cfg = layered_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.total_steps = args.steps
    if args.out:
        cfg.out = args.out
    if args.save_config:
        cfg.validate()
        log.info('Saved merged config: {}'.format(cfg.save(args.save_config)))
    print(run_experiment(cfg))
    return EXIT_OK


def cmd_sweep(args):
    configs = expand_grid(load_grid(args.config))
    results = sweep(configs, args.out, jobs=args.jobs)
    failed = [d for d, status in results.items() if status != 'complete']
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_aggregate(args):
    runs = find_runs(args.runs)
    name = os.path.splitext(os.path.basename(args.out))[0]
    print(write_aggregate(aggregate(runs, name=name), args.out))
    return EXIT_OK


def cmd_plot(args):
    names = args.names or []
    curves = []
    for i, filename in enumerate(args.agg):
        curves.append(read_aggregate(
            filename,
            name=names[i] if i < len(names) else None,
        ))
    print(emit_plot(curves, args.out, title=args.title or ''))
    return EXIT_OK


def cmd_verify(args):
    return write_report(verify_suite(fast=args.fast), args.out)


def cmd_compare(args):
    runs = find_runs(args.runs)
    groups = group_runs(runs)
    records = []
    if args.learning:
        candidate, scalar = args.learning
        missing = [g for g in (candidate, scalar) if g not in groups]
        if missing:
            raise dcConfigError('No runs for: {}'.format(', '.join(missing)))
        env = read_manifest(groups[candidate][0])['config']['env']
        records.extend(learning_report(
            groups[candidate],
            groups[scalar],
            env,
            episodes=args.episodes,
        ))
        groups.pop(scalar)
    if len(groups) > 1:
        records.append(invariance_report(groups))
    if not records:
        raise dcConfigError('Nothing to compare among {} runs.'.format(
            len(runs),
        ))
    return write_report(records, args.report)


def cmd_acceptance(args):
    grids = acceptance_grids(
        algo=args.algo,
        env=args.env,
        steps=args.steps,
        seeds=args.seeds,
    )
    os.makedirs(args.out, exist_ok=True)
    configs = []
    for name, grid in sorted(grids.items()):
        with BackedUpWriter(os.path.join(args.out, name + '.json')) as f:
            json.dump(grid, f, indent=4, sort_keys=True)
        configs.extend(expand_grid(grid))
    sweep(configs, args.out, jobs=args.jobs)
    records = acceptance_report(find_runs([args.out]), args.algo, args.env)
    return write_report(records, os.path.join(args.out, 'acceptance.json'))


def build_parser():
    parser = argparse.ArgumentParser(
        prog='distcritic',
        description='Distributional critics for TD3 and SAC.',
    )
    parser.add_argument('--version', action='version',
                        version='%(prog)s {}'.format(__version__))
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true',
                           help='Debug logging.')
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help='Warnings and errors only.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Run one training run.')
    p.add_argument('--config', required=True, action='append',
                   help='Run config file. Repeat to layer files; later '
                        'files win.')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--steps', type=int, default=None,
                   help='Override total steps.')
    p.add_argument('--out', default=None, help='Run directory.')
    p.add_argument('--save-config', default=None,
                   help='Write the merged config to this file.')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('sweep', help='Run every config of a grid.')
    p.add_argument('--config', required=True, help='Grid file.')
    p.add_argument('--jobs', type=int, default=None)
    p.add_argument('--out', required=True, help='Sweep directory.')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('aggregate', help='Mean and std across seeds.')
    p.add_argument('--runs', nargs='+', required=True,
                   help='Run or sweep directories.')
    p.add_argument('--out', required=True, help='Aggregate CSV.')
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser('plot', help='SVG learning curves.')
    p.add_argument('--agg', nargs='+', required=True,
                   help='Aggregate CSV files.')
    p.add_argument('--names', nargs='+', default=None,
                   help='Legend names, in --agg order.')
    p.add_argument('--title', default=None)
    p.add_argument('--out', required=True, help='SVG file.')
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser('verify', help='Run the oracle checks.')
    p.add_argument('--fast', action='store_true',
                   help='Fewer instances per check.')
    p.add_argument('--out', default=None, help='JSON report file.')
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser('compare', help='Learning and invariance checks.')
    p.add_argument('--runs', nargs='+', required=True,
                   help='Run or sweep directories.')
    p.add_argument('--learning', nargs=2, metavar=('CANDIDATE', 'SCALAR'),
                   default=None,
                   help='Variant names, e.g. sac-fixed-n7-pendulum '
                        'sac-fixed-n1-pendulum.')
    p.add_argument('--episodes', type=int, default=5,
                   help='Episodes per random-policy score.')
    p.add_argument('--report', default=None, help='JSON report file.')
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('acceptance',
                       help='Run and check the acceptance experiments.')
    p.add_argument('--out', required=True, help='Sweep directory.')
    p.add_argument('--algo', default='sac', choices=('sac', 'td3'))
    p.add_argument('--env', default='pendulum')
    p.add_argument('--steps', type=int, default=100000)
    p.add_argument('--seeds', type=int, default=10)
    p.add_argument('--jobs', type=int, default=None)
    p.set_defaults(func=cmd_acceptance)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        return args.func(args)
    except (dcConfigError, ImportError) as ex:
        log.error('Config error: {}'.format(ex))
        return EXIT_CONFIG
    except (dcError, OSError) as ex:
        log.error('{}: {}'.format(type(ex).__name__, ex))
        return EXIT_FAILURE
    except KeyboardInterrupt:
        log.error('Interrupted.')
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
