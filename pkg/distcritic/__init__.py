#!/usr/bin/env python3
'''
  DistCritic
  Distributional critics (fixed, sampled and learned quantile fractions)
  for TD3 and SAC, with exact oracles and an experiment harness.
'''

__version__ = '1.0.0'

from .agents import (  # noqa
    AgentConfig,
    DistributionalAgent,
    ReplayBuffer,
    actor_update,
    build_target_distribution,
    evaluate,
)
from .common_base import (  # noqa
    dcConfigError,
    dcDivergenceError,
    dcError,
    dcResourceError,
    dcStateError,
    dcValueError,
)
from .config import (  # noqa
    RunConfig,
    layered_run_config,
    load_run_config,
)
from .critics import (  # noqa
    CriticConfig,
    DistCritic,
    critic_td_loss,
    fpn_update,
    predict,
)
from .distcore import (  # noqa
    DiscreteDistribution,
    FractionSet,
    QuantileDistribution,
    fixed_fractions,
    fqf_mean,
    fractions_from_logits,
    huber_quantile_loss,
    inverse_cdf,
    pairwise_qr_loss,
    project_w1,
    sample_fractions,
    w1_fraction_gradient,
    wasserstein_p,
)
from .envs import (  # noqa
    make_env,
)
from .harness import (  # noqa
    aggregate,
    run_experiment,
)
from .plotting import emit_plot  # noqa

__all__ = [
    'AgentConfig',
    'CriticConfig',
    'DiscreteDistribution',
    'DistCritic',
    'DistributionalAgent',
    'FractionSet',
    'QuantileDistribution',
    'ReplayBuffer',
    'RunConfig',
    'actor_update',
    'aggregate',
    'build_target_distribution',
    'critic_td_loss',
    'dcConfigError',
    'dcDivergenceError',
    'dcError',
    'dcResourceError',
    'dcStateError',
    'dcValueError',
    'emit_plot',
    'evaluate',
    'fixed_fractions',
    'fpn_update',
    'fqf_mean',
    'fractions_from_logits',
    'huber_quantile_loss',
    'inverse_cdf',
    'layered_run_config',
    'load_run_config',
    'make_env',
    'pairwise_qr_loss',
    'predict',
    'project_w1',
    'run_experiment',
    'sample_fractions',
    'w1_fraction_gradient',
    'wasserstein_p',
]
