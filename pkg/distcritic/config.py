#!/usr/bin/env python3
""" config.py

    ...Run configuration files in JSON, YAML, or TOML.
    * YAML needs `pyyaml` and TOML needs `toml` (from pip), imported lazily.
"""
import itertools
import json
import logging
import os

try:
    import toml
except ImportError:
    # Raise when used, not while importing. This format may not even be used.
    toml = None
try:
    import yaml
except ImportError:
    yaml = None

from .agents import (
    AgentConfig,
    BASES,
)
from .common_base import (
    ConfigBase,
    dcConfigError,
    dcValueError,
    preferred_file,
)
from .critics import STRATEGIES
from .envs import ENVS

__all__ = [
    'DEFAULTS',
    'GRID_AXES',
    'RunConfig',
    'expand_grid',
    'layered_run_config',
    'load_grid',
    'load_run_config',
    'run_name',
    'worker_count',
]

log = logging.getLogger(__name__)

DEFAULTS = {
    'algo': 'sac',
    'strategy': 'fixed',
    'n_atoms': 7,
    'env': 'pendulum',
    'total_steps': 100000,
    'eval_interval': 1000,
    'eval_episodes': 5,
    'seed': 0,
    'out': 'runs',
    # AgentConfig / CriticConfig field overrides.
    'agent': {},
}

# Grid axis name -> RunConfig key.
GRID_AXES = (
    ('algos', 'algo'),
    ('strategies', 'strategy'),
    ('n_atoms', 'n_atoms'),
    ('envs', 'env'),
    ('seeds', 'seed'),
)

# Decoder errors of every supported format.
PARSE_ERRORS = (ValueError, TypeError) + (
    (yaml.YAMLError,) if yaml is not None else ()
)


class _JsonFormat(object):
    @staticmethod
    def load(f):
        return json.load(f)

    @staticmethod
    def dump(data, f):
        json.dump(data, f, indent=4, sort_keys=True)
        f.write('\n')


class _YamlFormat(object):
    @staticmethod
    def load(f):
        return yaml.safe_load(f)

    @staticmethod
    def dump(data, f):
        yaml.safe_dump(data, f, default_flow_style=False)


def config_format(filename):
    """ Format module (load/dump) for a config file name. """
    ext = os.path.splitext(str(filename))[-1].lower()
    if ext in ('.yaml', '.yml'):
        if yaml is None:
            raise ImportError(
                'pyyaml could not be imported. Install it with `pip`?'
            )
        return _YamlFormat
    if ext == '.toml':
        if toml is None:
            raise ImportError(
                'toml could not be imported. Install it with `pip`?'
            )
        return toml
    return _JsonFormat


class RunConfig(ConfigBase):
    """ One training run: variant, env, step count, evaluation schedule,
        seed and output directory, plus AgentConfig overrides under
        `agent`.
    """
    def __init__(self, iterable=None, filename=None, **kwargs):
        super(RunConfig, self).__init__(
            iterable=iterable,
            filename=filename,
            **kwargs
        )
        self.set_defaults(DEFAULTS)
        for key, val in DEFAULTS.items():
            self.data.setdefault(key, dict(val) if isinstance(val, dict)
                                 else val)

    @classmethod
    def format_module(cls, filename):
        return config_format(filename)

    def agent_config(self):
        """ Typed AgentConfig for this run. """
        overrides = dict(self.data.get('agent') or {})
        if 'hidden' in overrides:
            overrides['hidden'] = tuple(overrides['hidden'])
        if 'actor_hidden' in overrides:
            overrides['actor_hidden'] = tuple(overrides['actor_hidden'])
        try:
            return AgentConfig.for_variant(
                self.algo,
                self.strategy,
                self.n_atoms,
                **overrides
            )
        except (dcValueError, TypeError) as ex:
            raise dcConfigError(
                'Bad agent settings {!r}: {}'.format(overrides, ex)
            ) from ex

    def merge(self, other):
        """ ConfigBase.merge(), except `agent` overrides merge key by key. """
        agent = dict(self.data.get('agent') or {})
        super(RunConfig, self).merge(other)
        if isinstance(other.get('agent', None), dict):
            agent.update(other['agent'])
            self.data['agent'] = agent
        return self

    def save_item_hook(self, key, value):
        # TOML has no null.
        if isinstance(value, dict):
            value = {k: v for k, v in value.items() if v is not None}
        return key, value

    def validate(self):
        """ Raise dcConfigError for anything a run would trip over.
            Returns the AgentConfig on success.
        """
        unknown = set(self.data) - set(DEFAULTS)
        if unknown:
            raise dcConfigError('Unknown config keys: {}'.format(
                ', '.join(sorted(unknown)),
            ))
        self.check_types()
        if str(self.algo).lower() not in BASES:
            raise dcConfigError('`algo` must be one of {}, got: {!r}'.format(
                '/'.join(BASES),
                self.algo,
            ))
        if str(self.strategy).lower() not in STRATEGIES:
            raise dcConfigError(
                '`strategy` must be one of {}, got: {!r}'.format(
                    '/'.join(STRATEGIES),
                    self.strategy,
                )
            )
        if str(self.env).lower() not in ENVS:
            raise dcConfigError('`env` must be one of {}, got: {!r}'.format(
                '/'.join(sorted(ENVS)),
                self.env,
            ))
        for key in ('n_atoms', 'total_steps', 'eval_interval',
                    'eval_episodes'):
            if self.data[key] < 1:
                raise dcConfigError('`{}` must be >= 1, got: {}'.format(
                    key,
                    self.data[key],
                ))
        if self.total_steps % self.eval_interval:
            raise dcConfigError(
                '`total_steps` ({}) must be divisible by `eval_interval` ({}).'
                .format(self.total_steps, self.eval_interval)
            )
        if self.seed < 0:
            raise dcConfigError('`seed` must be >= 0, got: {}'.format(
                self.seed,
            ))
        return self.agent_config()


def load_run_config(filename, default=None):
    """ RunConfig from `filename`, or a default RunConfig if the file does
        not exist. Keys in `default` fill in whatever the file leaves out.
    """
    config = RunConfig(default or {})
    config.filename = preferred_file(filename)
    try:
        config.load()
    except FileNotFoundError:
        log.debug('No config file, using defaults: {}'.format(filename))
    except PARSE_ERRORS as ex:
        if isinstance(ex, dcConfigError):
            raise
        raise dcConfigError('Cannot parse {}: {}'.format(filename, ex)) \
            from ex
    return config


def layered_run_config(filenames):
    """ RunConfig from one or more files that must all exist. Later files
        win key by key, and their `agent` overrides merge into the earlier
        ones.
    """
    if isinstance(filenames, (str, os.PathLike)):
        filenames = [filenames]
    filenames = [str(name) for name in filenames]
    if not filenames:
        raise dcConfigError('At least one config file is required.')
    current = filenames[0]
    try:
        config = RunConfig.from_file(current)
        for current in filenames[1:]:
            config.add_file(current, optional=False)
    except FileNotFoundError:
        raise dcConfigError(
            'Config file does not exist: {}'.format(current)
        ) from None
    except PARSE_ERRORS as ex:
        if isinstance(ex, dcConfigError):
            raise
        raise dcConfigError('Cannot parse {}: {}'.format(current, ex)) \
            from ex
    return config


def load_grid(filename):
    """ Sweep grid mapping: a `base` run config plus list-valued axes. """
    try:
        with open(filename, 'r') as f:
            grid = config_format(filename).load(f)
    except PARSE_ERRORS as ex:
        raise dcConfigError('Cannot parse {}: {}'.format(filename, ex)) \
            from ex
    if not isinstance(grid, dict):
        raise dcConfigError('Grid must be a mapping, got: {}'.format(
            type(grid).__name__,
        ))
    return grid


def expand_grid(grid):
    """ Cross product of the grid axes over the base config, in a fixed
        order (algos, strategies, n_atoms, envs, seeds; seeds fastest).
        Returns a list of validated RunConfigs.
    """
    known = {'base'} | {axis for axis, _ in GRID_AXES}
    unknown = set(grid) - known
    if unknown:
        raise dcConfigError('Unknown grid keys: {}'.format(
            ', '.join(sorted(unknown)),
        ))
    base = RunConfig(grid.get('base') or {})
    axes = []
    for axis, key in GRID_AXES:
        values = grid.get(axis)
        if values is None:
            values = [base[key]]
        if not isinstance(values, list) or not values:
            raise dcConfigError('Grid axis `{}` must be a non-empty list.'
                                .format(axis))
        axes.append((key, values))
    configs = []
    for combo in itertools.product(*(values for _, values in axes)):
        cfg = RunConfig(dict(base.data))
        cfg['agent'] = dict(base.agent)
        for (key, _), value in zip(axes, combo):
            cfg[key] = value
        cfg.validate()
        configs.append(cfg)
    return configs


def run_name(cfg):
    """ Directory name for one run of a sweep. """
    return '{}-{}-n{}-{}-s{}'.format(
        cfg.algo,
        cfg.strategy,
        cfg.n_atoms,
        cfg.env,
        cfg.seed,
    )


def worker_count(jobs=None):
    """ Worker processes for a sweep, capped by DISTCRITIC_THREADS. """
    jobs = jobs or os.cpu_count() or 1
    cap = os.environ.get('DISTCRITIC_THREADS', '')
    if cap:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError:
            raise dcConfigError(
                'DISTCRITIC_THREADS must be an integer, got: {!r}'.format(cap)
            ) from None
    return max(1, jobs)
