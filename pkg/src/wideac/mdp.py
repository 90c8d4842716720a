"""Exact finite-MDP machinery.

State-action pairs are flattened as ``xi = x * n_actions + a``.  Pair
functions and pair distributions are plain length-``M`` arrays; policies are
``(n_states, n_actions)`` row-stochastic arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .nets import softmax_policy

# entries below this are structural zeros for the reachability graph
STRUCTURAL_ZERO = 1e-15


class NotErgodic(ValueError):
    """Raised when a chain kernel has no unique, aperiodic stationary law."""


class SingularSystem(RuntimeError):
    pass


class Ergodicity(str, enum.Enum):
    ERGODIC = "ergodic"
    REDUCIBLE = "reducible"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class FiniteMdp:
    """A finite Markov decision process.

    Parameters
    ----------
    transition : ndarray, shape (n_states, n_actions, n_states)
        ``transition[x, a, y]`` is the probability of moving to ``y`` from
        ``x`` under action ``a``.
    reward : ndarray, shape (n_states, n_actions)
        Rewards, bounded in [-1, 1].
    gamma : float
        Discount factor in (0, 1).
    rho0 : ndarray, shape (n_states, n_actions)
        Initial distribution over state-action pairs.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    rho0: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        rho0 = np.array(self.rho0, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {p.shape}")
        n_states, n_actions = p.shape[:2]
        if n_states < 1 or n_actions < 1:
            raise ValueError("need at least one state and one action")
        if r.shape != (n_states, n_actions):
            raise ValueError(f"reward must have shape {(n_states, n_actions)}, got {r.shape}")
        if rho0.shape != (n_states, n_actions):
            raise ValueError(f"rho0 must have shape {(n_states, n_actions)}, got {rho0.shape}")
        if not 0.0 < float(self.gamma) < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("transition probabilities must be finite and nonnegative")
        row_sums = p.sum(axis=2)
        bad = np.argwhere(np.abs(row_sums - 1.0) > 1e-12)
        if bad.size:
            x, a = bad[0]
            raise ValueError(
                f"transition row (x={x}, a={a}) sums to {row_sums[x, a]!r}, not 1"
            )
        if not np.all(np.isfinite(r)) or np.any(np.abs(r) > 1.0):
            raise ValueError("rewards must lie in [-1, 1]")
        if np.any(rho0 < 0) or abs(rho0.sum() - 1.0) > 1e-12:
            raise ValueError("rho0 must be a probability mass over state-action pairs")
        for arr in (p, r, rho0):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "rho0", rho0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    def pair_index(self, x: int, a: int) -> int:
        return x * self.n_actions + a

    @property
    def rho0_states(self) -> np.ndarray:
        """State marginal of the initial pair distribution."""
        return self.rho0.sum(axis=1)

    @property
    def reward_pairs(self) -> np.ndarray:
        return self.reward.reshape(-1)

    @property
    def pair_transition(self) -> np.ndarray:
        """``(M, n_states)`` matrix of next-state laws ``p(. | xi)``."""
        return self.transition.reshape(self.n_pairs, self.n_states)

    @property
    def aux_pair_transition(self) -> np.ndarray:
        """Next-state laws of the restart chain: ``gamma p + (1 - gamma) rho0``."""
        return self.gamma * self.pair_transition + (1.0 - self.gamma) * self.rho0_states


@dataclass(frozen=True)
class ChainKernel:
    matrix: np.ndarray
    flavor: Literal["critic-chain", "actor-aux-chain", "generic"] = "generic"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _pair_kernel(next_state: np.ndarray, g: np.ndarray) -> np.ndarray:
    m = next_state.shape[0]
    return (next_state[:, :, None] * g[None, :, :]).reshape(m, -1)


def chain_kernel(mdp: FiniteMdp, g: np.ndarray) -> ChainKernel:
    """Pair chain ``(x, a) -> (x', a')`` with probability ``p(x'|x,a) g(x',a')``."""
    return ChainKernel(_pair_kernel(mdp.pair_transition, _check_policy(mdp, g)), "critic-chain")


def aux_chain_kernel(mdp: FiniteMdp, g: np.ndarray) -> ChainKernel:
    """Pair chain that restarts from the state marginal of rho0 w.p. ``1 - gamma``."""
    return ChainKernel(
        _pair_kernel(mdp.aux_pair_transition, _check_policy(mdp, g)), "actor-aux-chain"
    )


def _check_policy(mdp: FiniteMdp, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy must have shape {(mdp.n_states, mdp.n_actions)}, got {g.shape}")
    if np.any(g < 0) or np.any(np.abs(g.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("policy rows must be probability vectors")
    return g


def ergodicity_check(k: ChainKernel | np.ndarray) -> Ergodicity:
    """Classify a kernel by reachability and the gcd of its cycle lengths."""
    mat = k.matrix if isinstance(k, ChainKernel) else np.asarray(k)
    adj = mat > STRUCTURAL_ZERO
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp > 1:
        return Ergodicity.REDUCIBLE
    order, pred = breadth_first_order(adj, 0, directed=True, return_predecessors=True)
    level = np.zeros(adj.shape[0], dtype=np.int64)
    for node in order[1:]:
        level[node] = level[pred[node]] + 1
    src, dst = np.nonzero(adj)
    period = 0
    for diff in np.abs(level[src] + 1 - level[dst]):
        period = math.gcd(period, int(diff))
        if period == 1:
            return Ergodicity.ERGODIC
    return Ergodicity.ERGODIC if period == 1 else Ergodicity.PERIODIC


def solve_stationary(mat: np.ndarray) -> np.ndarray:
    """Stationary law of a row-stochastic matrix without the ergodicity check.

    Hot path for the ODE drift; callers are responsible for ergodicity.
    """
    m = mat.shape[0]
    lhs = mat.T - np.eye(m)
    lhs[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise NotErgodic("stationary system is singular") from exc
    if np.max(np.abs(pi @ mat - pi)) > 1e-10 or np.any(pi < -1e-10):
        pi = _power_iteration(mat, pi)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _power_iteration(mat: np.ndarray, start: np.ndarray, max_iter: int = 100_000) -> np.ndarray:
    pi = np.clip(start, 0.0, None)
    pi = pi / pi.sum() if pi.sum() > 0 else np.full(mat.shape[0], 1.0 / mat.shape[0])
    for _ in range(max_iter):
        nxt = pi @ mat
        if np.max(np.abs(nxt - pi)) < 1e-14:
            return nxt
        pi = nxt
    return pi


def stationary_distribution(k: ChainKernel | np.ndarray) -> np.ndarray:
    """Unique stationary law ``pi`` with ``pi K = pi``.

    Raises
    ------
    NotErgodic
        If the kernel is reducible or periodic.
    """
    mat = k.matrix if isinstance(k, ChainKernel) else np.asarray(k, dtype=float)
    kind = ergodicity_check(mat)
    if kind is not Ergodicity.ERGODIC:
        raise NotErgodic(f"chain is {kind.value}")
    return solve_stationary(mat)


def aux_stationary(mdp: FiniteMdp, g: np.ndarray) -> np.ndarray:
    """Probability-normalised visiting measure, i.e. ``(1 - gamma) sigma``."""
    return stationary_distribution(aux_chain_kernel(mdp, g))


def visiting_measure(mdp: FiniteMdp, g: np.ndarray) -> np.ndarray:
    """Discounted state-action occupancy; total mass ``1 / (1 - gamma)``."""
    return aux_stationary(mdp, g) / (1.0 - mdp.gamma)


def value_function(mdp: FiniteMdp, f: np.ndarray) -> np.ndarray:
    """Action-value function of ``f`` from the linear Bellman system."""
    kmat = chain_kernel(mdp, f).matrix
    lhs = np.eye(mdp.n_pairs) - mdp.gamma * kmat
    r = mdp.reward_pairs
    try:
        v = np.linalg.solve(lhs, r)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(v)) or np.max(np.abs(v - r - mdp.gamma * kmat @ v)) > 1e-10:
        raise SingularSystem("Bellman solve did not reach residual 1e-10")
    return v


def state_value(mdp: FiniteMdp, f: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (np.asarray(v).reshape(mdp.n_states, mdp.n_actions) * f).sum(axis=1)


def advantage(mdp: FiniteMdp, f: np.ndarray, v: np.ndarray) -> np.ndarray:
    vs = state_value(mdp, f, v)
    return np.asarray(v) - np.repeat(vs, mdp.n_actions)


def objective(mdp: FiniteMdp, f: np.ndarray) -> float:
    """Discounted return from rho0, computed as ``sum sigma(xi) r(xi)``."""
    return float(visiting_measure(mdp, f) @ mdp.reward_pairs)


def policy_gradient(mdp: FiniteMdp, logits: np.ndarray) -> np.ndarray:
    """Exact gradient of the objective with respect to softmax logits.

    Uses ``dJ/dP(x,a) = sigma(x,a) A(x,a)`` under ``f = softmax(P)``.
    """
    f = softmax_policy(np.asarray(logits, dtype=float).reshape(mdp.n_states, mdp.n_actions))
    v = value_function(mdp, f)
    return visiting_measure(mdp, f) * advantage(mdp, f, v)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def policy_distance(f: np.ndarray, g: np.ndarray) -> float:
    """Largest per-state TV distance between two policy tables."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    return max(tv_distance(fr, gr) for fr, gr in zip(f, g))
