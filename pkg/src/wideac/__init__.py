"""Wide-network actor-critic on finite MDPs and its infinite-width limit."""
__version__ = "0.1.0"

from .mdp import (
    ChainKernel,
    Ergodicity,
    FiniteMdp,
    NotErgodic,
    SingularSystem,
    advantage,
    aux_chain_kernel,
    aux_stationary,
    chain_kernel,
    ergodicity_check,
    objective,
    policy_distance,
    policy_gradient,
    state_value,
    stationary_distribution,
    tv_distance,
    value_function,
    visiting_measure,
)
from .nets import (
    WideNetParams,
    clip,
    default_embedding,
    exploration_policy,
    init_params,
    network_output,
    schedule_values,
    schedule_values_ct,
    softmax_policy,
)
from .fixtures import chain3, get_fixture, random_mdp

__all__ = [name for name in dir() if not name.startswith("_")]
