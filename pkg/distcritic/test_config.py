#!/usr/bin/env python3
""" test_config.py
    Unit tests for run configs, sweep grids and worker counts.
"""

import json
import os
import tempfile
import unittest
from unittest import mock

try:
    import toml
except ImportError:
    toml = None
try:
    import yaml
except ImportError:
    yaml = None

from .agents import AgentConfig
from .common_base import dcConfigError
from .config import (
    DEFAULTS,
    RunConfig,
    expand_grid,
    layered_run_config,
    load_grid,
    load_run_config,
    run_name,
    worker_count,
)


class RunConfigTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory(prefix='distcritic.')

    def tearDown(self):
        self.tmpdir.cleanup()

    def path(self, name):
        return os.path.join(self.tmpdir.name, name)

    def test_defaults(self):
        cfg = RunConfig()
        for key, val in DEFAULTS.items():
            self.assertEqual(cfg[key], val)
        self.assertEqual(cfg.algo, 'sac')
        agent = cfg.validate()
        self.assertIsInstance(agent, AgentConfig)
        self.assertEqual(agent.base, 'sac')
        self.assertEqual(agent.critic.n_atoms, 7)
        # The default agent overrides are not shared between configs.
        cfg.agent['gamma'] = 0.5
        self.assertEqual(RunConfig().agent, {})

    def test_agent_overrides(self):
        cfg = RunConfig({
            'algo': 'td3',
            'agent': {'hidden': [8, 8], 'actor_hidden': [4], 'gamma': 0.9},
        })
        agent = cfg.agent_config()
        self.assertEqual(tuple(agent.critic.hidden), (8, 8))
        self.assertEqual(agent.actor_hidden, (4,))
        self.assertEqual(agent.gamma, 0.9)
        self.assertEqual(agent.critic.activation, 'relu')

    def test_validate(self):
        """ validate() rejects anything a run would trip over. """
        bad = (
            {'algo': 'dqn'},
            {'strategy': 'random'},
            {'env': 'humanoid'},
            {'n_atoms': 0},
            {'n_atoms': 'seven'},
            {'eval_episodes': 0},
            {'total_steps': 1500},
            {'seed': -1},
            {'bogus': 1},
            {'agent': {'gamma': 2.0}},
            {'agent': {'no_such_field': 1}},
        )
        for data in bad:
            with self.assertRaises(dcConfigError, msg=repr(data)):
                RunConfig(data).validate()

    def test_missing_file(self):
        """ A missing config file means defaults. """
        filename = self.path('missing.json')
        cfg = load_run_config(filename, default={'seed': 3})
        self.assertEqual(cfg.seed, 3)
        self.assertEqual(cfg.env, 'pendulum')
        self.assertEqual(cfg.filename, filename)

    def test_layered_files(self):
        """ Later files win, and agent overrides merge key by key. """
        base = RunConfig({'algo': 'td3', 'agent': {'batch_size': 8}})
        base_file = base.save(self.path('base.json'))
        extra_file = self.path('extra.json')
        with open(extra_file, 'w') as f:
            json.dump({'seed': 4, 'agent': {'tau': 0.01}}, f)
        cfg = layered_run_config([base_file, extra_file])
        self.assertEqual(cfg.algo, 'td3')
        self.assertEqual(cfg.seed, 4)
        self.assertEqual(cfg.env, DEFAULTS['env'])
        self.assertEqual(cfg.agent, {'batch_size': 8, 'tau': 0.01})
        self.assertEqual(layered_run_config(base_file).agent,
                         {'batch_size': 8})

    def test_layered_missing(self):
        """ Every named file must exist, unlike load_run_config(). """
        base_file = RunConfig().save(self.path('base.json'))
        for names in ([self.path('typo.json')],
                      [base_file, self.path('typo.json')],
                      []):
            with self.assertRaises(dcConfigError, msg=repr(names)):
                layered_run_config(names)

    def test_bad_files(self):
        for name, content in (('broken.json', '{not json'),
                              ('list.json', '[1, 2]')):
            filename = self.path(name)
            with open(filename, 'w') as f:
                f.write(content)
            with self.assertRaises(dcConfigError, msg=name):
                load_run_config(filename)

    def roundtrip(self, name):
        cfg = RunConfig({
            'algo': 'td3',
            'n_atoms': 3,
            'agent': {'batch_size': 8, 'learning_rate': None},
        })
        filename = cfg.save(self.path(name))
        self.assertTrue(os.path.exists(filename))
        loaded = load_run_config(filename)
        self.assertEqual(loaded.algo, 'td3')
        self.assertEqual(loaded.n_atoms, 3)
        self.assertEqual(loaded.total_steps, DEFAULTS['total_steps'])
        # Null overrides are dropped on save.
        self.assertEqual(loaded.agent, {'batch_size': 8})
        loaded.validate()

    def test_json(self):
        self.roundtrip('run.json')

    @unittest.skipUnless(yaml, 'pyyaml is not installed.')
    def test_yaml(self):
        self.roundtrip('run.yaml')

    @unittest.skipUnless(toml, 'toml is not installed.')
    def test_toml(self):
        self.roundtrip('run.toml')


class GridTests(unittest.TestCase):
    def test_order(self):
        """ Seeds vary fastest, algorithms slowest. """
        configs = expand_grid({
            'base': {'total_steps': 100, 'eval_interval': 50},
            'algos': ['td3', 'sac'],
            'strategies': ['fixed', 'learned'],
            'seeds': [0, 1],
        })
        self.assertEqual(
            [run_name(cfg) for cfg in configs],
            [
                'td3-fixed-n7-pendulum-s0',
                'td3-fixed-n7-pendulum-s1',
                'td3-learned-n7-pendulum-s0',
                'td3-learned-n7-pendulum-s1',
                'sac-fixed-n7-pendulum-s0',
                'sac-fixed-n7-pendulum-s1',
                'sac-learned-n7-pendulum-s0',
                'sac-learned-n7-pendulum-s1',
            ],
        )
        for cfg in configs:
            self.assertEqual(cfg.total_steps, 100)

    def test_independent_overrides(self):
        configs = expand_grid({'base': {'agent': {'gamma': 0.9}},
                               'seeds': [0, 1]})
        configs[0].agent['gamma'] = 0.5
        self.assertEqual(configs[1].agent['gamma'], 0.9)

    def test_invalid(self):
        bad = (
            {'colors': ['red']},
            {'seeds': 3},
            {'seeds': []},
            {'n_atoms': [0]},
        )
        for grid in bad:
            with self.assertRaises(dcConfigError, msg=repr(grid)):
                expand_grid(grid)

    def test_load_grid(self):
        with tempfile.TemporaryDirectory(prefix='distcritic.') as tmpdir:
            filename = os.path.join(tmpdir, 'grid.json')
            with open(filename, 'w') as f:
                json.dump({'envs': ['pointmass'], 'seeds': [4]}, f)
            configs = expand_grid(load_grid(filename))
            self.assertEqual([run_name(c) for c in configs],
                             ['sac-fixed-n7-pointmass-s4'])
            with open(filename, 'w') as f:
                f.write('"grid"')
            with self.assertRaises(dcConfigError):
                load_grid(filename)


class WorkerCountTests(unittest.TestCase):
    def test_cap(self):
        with mock.patch.dict(os.environ, {'DISTCRITIC_THREADS': '2'}):
            self.assertEqual(worker_count(8), 2)
            self.assertEqual(worker_count(1), 1)
        with mock.patch.dict(os.environ, {'DISTCRITIC_THREADS': '0'}):
            self.assertEqual(worker_count(8), 1)

    def test_uncapped(self):
        with mock.patch.dict(os.environ):
            os.environ.pop('DISTCRITIC_THREADS', None)
            self.assertEqual(worker_count(3), 3)
            self.assertGreaterEqual(worker_count(), 1)

    def test_bad_cap(self):
        with mock.patch.dict(os.environ, {'DISTCRITIC_THREADS': 'many'}):
            with self.assertRaises(dcConfigError):
                worker_count(4)


if __name__ == '__main__':
    unittest.main()
