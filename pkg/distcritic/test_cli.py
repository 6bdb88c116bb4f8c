#!/usr/bin/env python3
""" test_cli.py
    Unit tests for the command line interface and its exit codes.
"""

import contextlib
import io
import json
import os
import tempfile
import unittest
from unittest import mock

from .cli import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    EXIT_OK,
    build_parser,
    main,
)
from .harness import read_aggregate
from .test_harness import (
    fake_run,
    tiny_run_config,
)


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory(prefix='distcritic.')

    def tearDown(self):
        self.tmpdir.cleanup()

    def path(self, *names):
        return os.path.join(self.tmpdir.name, *names)

    def run_main(self, *argv):
        """ main() with stdout captured. Returns (exit code, stdout). """
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            code = main(['-q'] + list(argv))
        return code, stdout.getvalue()


class ParserTests(unittest.TestCase):
    def test_command_required(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                build_parser().parse_args([])

    def test_train_args(self):
        args = build_parser().parse_args(
            ['train', '--config', 'run.json', '--seed', '3']
        )
        self.assertEqual(args.seed, 3)
        self.assertIsNone(args.steps)


class CommandTests(CliTestCase):
    def test_train(self):
        filename = tiny_run_config().save(self.path('run.json'))
        out_dir = self.path('run')
        code, stdout = self.run_main('train', '--config', filename,
                                     '--out', out_dir, '--seed', '2')
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(stdout.strip(), os.path.join(out_dir, 'metrics.csv'))
        with open(os.path.join(out_dir, 'manifest.json'), 'r') as f:
            self.assertEqual(json.load(f)['seed'], 2)

    def test_train_bad_config(self):
        filename = tiny_run_config(algo='dqn').save(self.path('run.json'))
        code, _ = self.run_main('train', '--config', filename)
        self.assertEqual(code, EXIT_CONFIG)

    def test_train_missing_config(self):
        """ A named config file that does not exist never starts a run. """
        with mock.patch('distcritic.cli.run_experiment') as run:
            code, _ = self.run_main('train', '--config',
                                    self.path('typo.json'))
        self.assertEqual(code, EXIT_CONFIG)
        run.assert_not_called()

    def test_train_layered_config(self):
        base = tiny_run_config().save(self.path('base.json'))
        extra = self.path('extra.json')
        with open(extra, 'w') as f:
            json.dump({'seed': 5}, f)
        merged = self.path('merged.json')
        with mock.patch('distcritic.cli.run_experiment',
                        return_value='metrics.csv') as run:
            code, _ = self.run_main('train', '--config', base,
                                    '--config', extra,
                                    '--save-config', merged)
        self.assertEqual(code, EXIT_OK)
        cfg = run.call_args[0][0]
        self.assertEqual(cfg.seed, 5)
        self.assertEqual(cfg.env, 'pointmass')
        with open(merged, 'r') as f:
            self.assertEqual(json.load(f)['seed'], 5)

    def test_aggregate_and_plot(self):
        runs = [
            fake_run(self.path('a'), [1.0, 2.0]),
            fake_run(self.path('b'), [3.0, 4.0], seed=1),
        ]
        agg_file = self.path('sac.csv')
        code, _ = self.run_main('aggregate', '--runs', *runs,
                                '--out', agg_file)
        self.assertEqual(code, EXIT_OK)
        agg = read_aggregate(agg_file)
        self.assertEqual(agg.means, [2.0, 3.0])
        svg_file = self.path('sac.svg')
        code, _ = self.run_main('plot', '--agg', agg_file, '--names', 'SAC',
                                '--out', svg_file)
        self.assertEqual(code, EXIT_OK)
        with open(svg_file, 'r') as f:
            self.assertIn('>SAC</text>', f.read())

    def test_aggregate_missing_runs(self):
        code, _ = self.run_main('aggregate', '--runs', self.path('nowhere'),
                                '--out', self.path('agg.csv'))
        self.assertEqual(code, EXIT_FAILURE)

    def test_verify(self):
        """ verify exits 1 when any check fails. """
        passed = {'name': 'a', 'measured': 0.0, 'bound': 1.0, 'passed': True}
        failed = dict(passed, name='b', passed=False)
        report = self.path('report.json')
        with mock.patch('distcritic.cli.verify_suite',
                        return_value=[passed]):
            code, _ = self.run_main('verify', '--fast', '--out', report)
        self.assertEqual(code, EXIT_OK)
        with open(report, 'r') as f:
            self.assertEqual(json.load(f), [passed])
        with mock.patch('distcritic.cli.verify_suite',
                        return_value=[passed, failed]):
            code, stdout = self.run_main('verify')
        self.assertEqual(code, EXIT_FAILURE)
        self.assertEqual(json.loads(stdout), [passed, failed])

    def test_compare(self):
        runs = [
            fake_run(self.path('a1'), [0.0, 1.0], strategy='fixed'),
            fake_run(self.path('a2'), [0.0, 3.0], strategy='fixed', seed=1),
            fake_run(self.path('b1'), [0.0, 2.0], strategy='learned'),
        ]
        report = self.path('compare.json')
        code, _ = self.run_main('compare', '--runs', *runs,
                                '--report', report)
        self.assertEqual(code, EXIT_OK)
        with open(report, 'r') as f:
            records = json.load(f)
        self.assertEqual([r['name'] for r in records], ['invariance'])

    def test_compare_nothing(self):
        runs = [fake_run(self.path('a'), [0.0, 1.0])]
        code, _ = self.run_main('compare', '--runs', *runs)
        self.assertEqual(code, EXIT_CONFIG)
        code, _ = self.run_main('compare', '--runs', *runs, '--learning',
                                'sac-fixed-n7-pendulum',
                                'sac-fixed-n1-pendulum')
        self.assertEqual(code, EXIT_CONFIG)


if __name__ == '__main__':
    unittest.main()
