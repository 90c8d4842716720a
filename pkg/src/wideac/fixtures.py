"""Named MDP fixtures and random-instance generators."""
from __future__ import annotations

import numpy as np

from .mdp import FiniteMdp
from .nets import SeedLike, make_rng


def chain3(gamma: float = 0.9) -> FiniteMdp:
    """Three-state corridor with actions L=0 and R=1.

    Each action moves one step in its direction with probability 0.8 (the
    walls absorb the move), otherwise the state is unchanged.  Reward 1 in
    state 2.  rho0 is uniform over the six pairs.
    """
    p = np.zeros((3, 2, 3))
    for x in range(3):
        left, right = max(x - 1, 0), min(x + 1, 2)
        p[x, 0, left] += 0.8
        p[x, 0, x] += 0.2
        p[x, 1, right] += 0.8
        p[x, 1, x] += 0.2
    r = np.zeros((3, 2))
    r[2, :] = 1.0
    return FiniteMdp(p, r, gamma, np.full((3, 2), 1.0 / 6.0))


def chain3_zero_reward(gamma: float = 0.9) -> FiniteMdp:
    base = chain3(gamma)
    return FiniteMdp(base.transition, np.zeros_like(base.reward), gamma, base.rho0)


def iid_mdp(n_states: int, n_actions: int, gamma: float = 0.9, seed: SeedLike = 0) -> FiniteMdp:
    """Next state drawn from one fixed law regardless of the current pair."""
    rng = make_rng(seed)
    law = rng.dirichlet(np.ones(n_states))
    p = np.broadcast_to(law, (n_states, n_actions, n_states)).copy()
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return FiniteMdp(p, r, gamma, np.full((n_states, n_actions), 1.0 / (n_states * n_actions)))


def random_mdp(
    n_states: int, n_actions: int, gamma: float | None = None, seed: SeedLike = 0,
    dense: bool = True,
) -> FiniteMdp:
    """Random MDP with Dirichlet transitions and uniform rewards in [-1, 1].

    With ``dense=False`` roughly half of the transition entries are zeroed
    (each row keeps at least one successor, plus a self loop on state 0 so
    that some kernels remain aperiodic).
    """
    rng = make_rng(seed)
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if not dense:
        mask = rng.random(p.shape) < 0.5
        keep = rng.integers(0, n_states, size=(n_states, n_actions))
        for x in range(n_states):
            for a in range(n_actions):
                mask[x, a, keep[x, a]] = False
        p = np.where(mask, 0.0, p)
        p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    if gamma is None:
        gamma = float(rng.uniform(0.5, 0.95))
    rho0 = rng.dirichlet(np.ones(n_states * n_actions)).reshape(n_states, n_actions)
    return FiniteMdp(p, r, gamma, rho0)


FIXTURES = {
    "chain3": chain3,
    "chain3_zero_reward": chain3_zero_reward,
}


def get_fixture(name: str, **kwargs) -> FiniteMdp:
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None
    return factory(**kwargs)
