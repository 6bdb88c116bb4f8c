#!/usr/bin/env python3

""" harness.py
    ...Seeded training runs, crash-safe metrics files, cross-seed
    aggregation, sweeps over a worker pool, and the acceptance comparisons.

    Run directory layout:
        metrics.csv    One row per evaluation point (step 0 included).
        manifest.json  Config, seed, step count and status.
        checkpoint/    Final networks and optimizer state.
"""

import csv
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .agents import (
    DistributionalAgent,
    evaluate,
    random_policy_returns,
    save_checkpoint,
)
from .common_base import (
    BackedUpWriter,
    dcDivergenceError,
    dcError,
    dcValueError,
)
from .config import (
    RunConfig,
    run_name,
    worker_count,
)
from .envs import make_env

__all__ = [
    'Aggregate',
    'CSV_HEADER',
    'MetricsRow',
    'MetricsWriter',
    'aggregate',
    'final_score',
    'invariance_report',
    'learning_report',
    'read_aggregate',
    'read_metrics',
    'run_experiment',
    'sweep',
    'write_aggregate',
]

log = logging.getLogger(__name__)

CSV_HEADER = (
    'step',
    'mean_return',
    'ep_returns',
    'critic_loss',
    'actor_loss',
    'fpn_loss',
    'wall_s',
)
AGGREGATE_HEADER = ('step', 'mean', 'std', 'n_runs')
LOSS_KEYS = ('critic_loss', 'actor_loss', 'fpn_loss')
METRICS_FILE = 'metrics.csv'
MANIFEST_FILE = 'manifest.json'


def _cell(value):
    return '' if value is None else repr(float(value))


def _parse_cell(text):
    return None if text == '' else float(text)


@dataclass
class MetricsRow(object):
    step: int
    mean_return: float
    ep_returns: list = field(default_factory=list)
    critic_loss: float = None
    actor_loss: float = None
    fpn_loss: float = None
    wall_s: float = 0.0

    def cells(self):
        """ CSV cells. Floats use repr(), so values round-trip exactly. """
        return [
            str(int(self.step)),
            repr(float(self.mean_return)),
            ';'.join(repr(float(r)) for r in self.ep_returns),
            _cell(self.critic_loss),
            _cell(self.actor_loss),
            _cell(self.fpn_loss),
            '{:.3f}'.format(self.wall_s),
        ]

    @classmethod
    def from_cells(cls, cells):
        if len(cells) != len(CSV_HEADER):
            raise dcValueError('Expected {} metrics cells, got: {}'.format(
                len(CSV_HEADER),
                len(cells),
            ))
        step, mean, returns, critic, actor, fpn, wall = cells
        return cls(
            int(step),
            float(mean),
            [float(r) for r in returns.split(';') if r],
            _parse_cell(critic),
            _parse_cell(actor),
            _parse_cell(fpn),
            float(wall),
        )


class MetricsWriter(object):
    """ Single writer of one metrics file. Every row is flushed and synced
        before write() returns, so a crash loses at most the row in flight.
    """
    def __init__(self, filename):
        self.filename = str(filename)
        self.file = open(self.filename, 'w', newline='')
        self.writer = csv.writer(self.file, lineterminator='\n')
        self.last_step = None
        self._emit(CSV_HEADER)

    def __enter__(self):
        return self

    def __exit__(self, typ, val, trace):
        self.close()

    def _emit(self, cells):
        self.writer.writerow(cells)
        self.file.flush()
        os.fsync(self.file.fileno())

    def close(self):
        if not self.file.closed:
            self.file.close()

    def write(self, row):
        if self.last_step is not None and row.step <= self.last_step:
            raise dcValueError(
                'Metrics steps must increase: {} after {}.'.format(
                    row.step,
                    self.last_step,
                )
            )
        self._emit(row.cells())
        self.last_step = row.step


def _metrics_path(path):
    path = str(path)
    return os.path.join(path, METRICS_FILE) if os.path.isdir(path) else path


def read_metrics(path):
    """ Rows of a metrics file (or of the metrics file in a run dir). """
    filename = _metrics_path(path)
    with open(filename, 'r', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise dcValueError('Not a metrics file: {}'.format(filename))
        return [MetricsRow.from_cells(cells) for cells in reader if cells]


def write_manifest(directory, data):
    with BackedUpWriter(os.path.join(directory, MANIFEST_FILE)) as f:
        json.dump(data, f, indent=4, sort_keys=True)
        f.write('\n')


def read_manifest(directory):
    with open(os.path.join(directory, MANIFEST_FILE), 'r') as f:
        return json.load(f)


class _LossMeter(object):
    """ Mean of each loss over the updates since the last reset. """
    def __init__(self):
        self.reset()

    def add(self, diagnostics):
        for key in LOSS_KEYS:
            val = diagnostics.get(key)
            if val is not None:
                self.sums[key].append(val)

    def means(self):
        return {
            key: (math.fsum(vals) / len(vals) if vals else None)
            for key, vals in self.sums.items()
        }

    def reset(self):
        self.sums = {key: [] for key in LOSS_KEYS}


def run_experiment(cfg, out_dir=None):
    """ Train one agent for cfg.total_steps, evaluating every
        cfg.eval_interval steps.
        Arguments:
            cfg      : RunConfig (validated here).
            out_dir  : Run directory. Defaults to cfg.out.
        Returns the metrics file path.
    """
    agent_cfg = cfg.validate()
    out_dir = str(out_dir or cfg.out)
    os.makedirs(out_dir, exist_ok=True)
    agent = DistributionalAgent(
        agent_cfg,
        make_env(cfg.env),
        seed=cfg.seed,
        buffer_size=cfg.total_steps,
    )
    eval_env = make_env(cfg.env)
    eval_rng = agent.rngs['eval']
    manifest = {
        'config': dict(cfg.data),
        'agent': agent_cfg.to_dict(),
        'seed': cfg.seed,
        'steps': 0,
        'status': 'running',
        'metrics': METRICS_FILE,
    }
    write_manifest(out_dir, manifest)
    metrics_file = os.path.join(out_dir, METRICS_FILE)
    start = time.perf_counter()
    meter = _LossMeter()
    log.info('Training {} in {}'.format(run_name(cfg), out_dir))
    with MetricsWriter(metrics_file) as writer:
        mean, returns = evaluate(
            agent.actor, eval_env, cfg.eval_episodes, eval_rng,
        )
        writer.write(MetricsRow(0, mean, returns,
                                wall_s=time.perf_counter() - start))
        try:
            for step in range(1, cfg.total_steps + 1):
                meter.add(agent.train_step())
                if step % cfg.eval_interval:
                    continue
                mean, returns = evaluate(
                    agent.actor, eval_env, cfg.eval_episodes, eval_rng,
                )
                writer.write(MetricsRow(
                    step,
                    mean,
                    returns,
                    wall_s=time.perf_counter() - start,
                    **meter.means()
                ))
                meter.reset()
                log.info('{}: step {}, mean return {:.2f}'.format(
                    run_name(cfg),
                    step,
                    mean,
                ))
        except dcDivergenceError as ex:
            manifest.update(
                steps=agent.num_timesteps,
                status='diverged',
                diagnostics=ex.diagnostics,
            )
            write_manifest(out_dir, manifest)
            raise
    save_checkpoint(agent, os.path.join(out_dir, 'checkpoint'))
    manifest.update(steps=agent.num_timesteps, status='complete')
    write_manifest(out_dir, manifest)
    return metrics_file


@dataclass
class Aggregate(object):
    """ Per-step mean and population std of the evaluation return across
        runs.
    """
    steps: list
    means: list
    stds: list
    n_runs: int
    name: str = ''

    def __len__(self):
        return len(self.steps)


def aggregate(run_paths, name=''):
    """ Aggregate runs (run dirs or metrics files) sharing one step grid.
        Order of `run_paths` does not matter.
    """
    if not run_paths:
        raise dcValueError('aggregate() needs at least one run.')
    grids = {}
    returns = {}
    for path in run_paths:
        rows = read_metrics(path)
        grids[str(path)] = tuple(r.step for r in rows)
        returns[str(path)] = [r.mean_return for r in rows]
    distinct = sorted(set(grids.values()))
    if len(distinct) > 1:
        reference = grids[str(run_paths[0])]
        offending = sorted(p for p, g in grids.items() if g != reference)
        raise dcValueError(
            'Runs do not share a step grid. Differing from {}: {}'.format(
                run_paths[0],
                ', '.join(offending),
            )
        )
    steps = list(distinct[0])
    n = len(run_paths)
    means, stds = [], []
    for i in range(len(steps)):
        # fsum is exact, so the result is independent of run order.
        column = [returns[str(p)][i] for p in run_paths]
        mean = math.fsum(column) / n
        means.append(mean)
        stds.append(math.sqrt(math.fsum((x - mean) ** 2 for x in column) / n))
    return Aggregate(steps, means, stds, n, name)


def write_aggregate(agg, filename):
    with BackedUpWriter(filename) as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(AGGREGATE_HEADER)
        for step, mean, std in zip(agg.steps, agg.means, agg.stds):
            writer.writerow([step, repr(mean), repr(std), agg.n_runs])
    return str(filename)


def read_aggregate(filename, name=None):
    with open(filename, 'r', newline='') as f:
        reader = csv.reader(f)
        if tuple(next(reader, None) or ()) != AGGREGATE_HEADER:
            raise dcValueError('Not an aggregate file: {}'.format(filename))
        rows = [cells for cells in reader if cells]
    if name is None:
        name = os.path.splitext(os.path.basename(str(filename)))[0]
    return Aggregate(
        [int(c[0]) for c in rows],
        [float(c[1]) for c in rows],
        [float(c[2]) for c in rows],
        int(rows[0][3]) if rows else 0,
        name,
    )


def _sweep_worker(data, out_dir):
    """ Run one config in a worker process. Returns (out_dir, status). """
    try:
        run_experiment(RunConfig(data), out_dir)
    except dcDivergenceError as ex:
        return out_dir, 'diverged: {}'.format(ex)
    return out_dir, 'complete'


def sweep(configs, out_dir, jobs=None):
    """ Run every config in its own directory under `out_dir`, across at
        most worker_count(jobs) processes. Returns {run_dir: status}.
    """
    os.makedirs(out_dir, exist_ok=True)
    tasks = [
        (dict(cfg.data), os.path.join(out_dir, run_name(cfg)))
        for cfg in configs
    ]
    names = [t[1] for t in tasks]
    if len(set(names)) != len(names):
        raise dcValueError('Sweep has duplicate runs.')
    workers = min(worker_count(jobs), len(tasks) or 1)
    log.info('Sweeping {} runs on {} workers.'.format(len(tasks), workers))
    if workers == 1:
        results = [_sweep_worker(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, *zip(*tasks)))
    for run_dir, status in results:
        if status != 'complete':
            log.warning('{}: {}'.format(run_dir, status))
    return dict(results)


def find_runs(paths):
    """ Run directories among `paths`, descending one level into sweep
        directories.
    """
    runs = []
    for path in paths:
        path = str(path)
        if os.path.exists(os.path.join(path, MANIFEST_FILE)):
            runs.append(path)
            continue
        if not os.path.isdir(path):
            raise dcValueError('Not a run or sweep directory: {}'.format(path))
        runs.extend(
            os.path.join(path, name)
            for name in sorted(os.listdir(path))
            if os.path.exists(os.path.join(path, name, MANIFEST_FILE))
        )
    return runs


def variant_name(run_dir):
    """ Run name without the seed, e.g. 'sac-fixed-n7-pendulum'. """
    cfg = RunConfig(read_manifest(run_dir)['config'])
    return run_name(cfg).rsplit('-s', 1)[0]


def group_runs(run_dirs):
    groups = {}
    for run_dir in run_dirs:
        groups.setdefault(variant_name(run_dir), []).append(run_dir)
    return groups


def final_score(run_dir, last=10):
    """ Mean evaluation return over the last `last` evaluation points. """
    rows = read_metrics(run_dir)[1:]
    if not rows:
        raise dcValueError('{} has no evaluations after step 0.'.format(
            run_dir,
        ))
    return float(np.mean([r.mean_return for r in rows[-last:]]))


def _check(name, measured, bound, passed, **extra):
    record = {
        'name': name,
        'measured': measured,
        'bound': bound,
        'passed': bool(passed),
    }
    record.update(extra)
    return record


def invariance_report(groups, last=10):
    """ Pairwise overlap of final mean +- std intervals between variants.
        Arguments:
            groups : {variant name: [run dirs]}.
    """
    intervals = {}
    for name in sorted(groups):
        scores = [final_score(d, last) for d in groups[name]]
        mean, std = float(np.mean(scores)), float(np.std(scores))
        intervals[name] = (mean - std, mean + std)
    pairs = []
    for a, b in itertools.combinations(sorted(intervals), 2):
        (lo_a, hi_a), (lo_b, hi_b) = intervals[a], intervals[b]
        pairs.append({
            'pair': [a, b],
            'overlap': max(lo_a, lo_b) <= min(hi_a, hi_b),
        })
    n_overlap = sum(p['overlap'] for p in pairs)
    return _check(
        'invariance',
        n_overlap,
        len(pairs),
        n_overlap == len(pairs),
        intervals={k: list(v) for k, v in intervals.items()},
        pairs=pairs,
    )


def learning_report(candidate_runs, scalar_runs, env_name, episodes=5,
                    last=10, seed=0, ratio=0.9, alpha=0.05):
    """ The candidate must beat a random policy (one-sided Mann-Whitney U)
        and close at least `ratio` of the gap between the random policy and
        the scalar baseline.
    """
    candidate = [final_score(d, last) for d in candidate_runs]
    scalar = [final_score(d, last) for d in scalar_runs]
    env = make_env(env_name)
    rng = np.random.default_rng(seed)
    random_scores = [
        float(np.mean(random_policy_returns(env, episodes, rng)))
        for _ in range(max(len(candidate), 2))
    ]
    test = stats.mannwhitneyu(candidate, random_scores, alternative='greater')
    random_mean = float(np.mean(random_scores))
    gap = float(np.mean(scalar)) - random_mean
    if gap <= 0:
        closed = math.inf if np.mean(candidate) > random_mean else 0.0
    else:
        closed = (float(np.mean(candidate)) - random_mean) / gap
    return [
        _check('learning/vs_random', float(test.pvalue), alpha,
               test.pvalue < alpha, candidate=candidate,
               random=random_scores),
        _check('learning/vs_scalar', closed, ratio, closed >= ratio,
               scalar=scalar),
    ]


def acceptance_grids(algo='sac', env='pendulum', steps=100000, seeds=10):
    """ Grids for the invariance and learning acceptance experiments. """
    base = {'algo': algo, 'env': env, 'total_steps': steps}
    seed_list = list(range(seeds))
    return {
        'invariance': {
            'base': base,
            'strategies': ['fixed', 'sampled', 'learned'],
            'n_atoms': [7, 51],
            'seeds': seed_list,
        },
        # n_atoms = 1 with fixed fractions is the scalar baseline.
        'scalar': {
            'base': base,
            'strategies': ['fixed'],
            'n_atoms': [1],
            'seeds': seed_list,
        },
    }


def acceptance_report(run_dirs, algo='sac', env='pendulum'):
    """ Learning and invariance checks over the runs of an acceptance
        sweep.
    """
    groups = group_runs(run_dirs)
    candidate = '{}-fixed-n7-{}'.format(algo, env)
    scalar = '{}-fixed-n1-{}'.format(algo, env)
    records = []
    if candidate in groups and scalar in groups:
        records.extend(learning_report(groups[candidate], groups[scalar],
                                       env))
    distributional = {k: v for k, v in groups.items() if k != scalar}
    if len(distributional) > 1:
        records.append(invariance_report(distributional))
    if not records:
        raise dcError('No comparable variants among {} runs.'.format(
            len(run_dirs),
        ))
    return records
