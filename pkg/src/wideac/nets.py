"""Wide one-hidden-layer networks with ``1/sqrt(N)`` output scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy.special import expit

if TYPE_CHECKING:
    from .mdp import FiniteMdp

Role = Literal["actor", "critic"]
SeedLike = int | np.random.SeedSequence | np.random.Generator | None


def sigmoid(z):
    return expit(np.asarray(z, dtype=float))


def sigmoid_prime(z):
    s = sigmoid(z)
    return s * (1.0 - s)


def sigmoid_second(z):
    s = sigmoid(z)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based (Philox) generator from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class WideNetParams:
    """Parameters of ``(1/sqrt(N)) sum_i outer_i sigmoid(inner_i . xi)``.

    ``outer`` holds C (critic) or B (actor); ``inner`` holds W or U, one row
    per hidden unit.
    """

    outer: np.ndarray
    inner: np.ndarray
    role: Role = "critic"

    def __post_init__(self) -> None:
        self.outer = np.asarray(self.outer, dtype=float)
        self.inner = np.asarray(self.inner, dtype=float)
        if self.inner.ndim != 2 or self.inner.shape[0] != self.outer.shape[0]:
            raise ValueError(
                f"inner must be (N, d) with N={self.outer.shape[0]}, got {self.inner.shape}"
            )

    @property
    def n_hidden(self) -> int:
        return self.outer.shape[0]

    @property
    def dim(self) -> int:
        return self.inner.shape[1]

    def copy(self) -> "WideNetParams":
        return WideNetParams(self.outer.copy(), self.inner.copy(), self.role)


def init_params(n_hidden: int, dim: int, role: Role, seed: SeedLike) -> WideNetParams:
    """Draw ``outer ~ U(-1, 1)`` and inner components ``~ U(-1/sqrt(d), 1/sqrt(d))``.

    Every inner row then has norm at most one.
    """
    if n_hidden < 1 or dim < 2:
        raise ValueError(f"need n_hidden >= 1 and dim >= 2, got {n_hidden}, {dim}")
    rng = make_rng(seed)
    outer = rng.uniform(-1.0, 1.0, size=n_hidden)
    bound = 1.0 / math.sqrt(dim)
    inner = rng.uniform(-bound, bound, size=(n_hidden, dim))
    return WideNetParams(outer, inner, role)


def network_output(params: WideNetParams, emb: np.ndarray) -> np.ndarray:
    emb = np.asarray(emb, dtype=float)
    if emb.ndim != 2 or emb.shape[1] != params.dim:
        raise ValueError(f"embedding dimension {emb.shape} does not match params dim {params.dim}")
    return params.outer @ sigmoid(params.inner @ emb.T) / math.sqrt(params.n_hidden)


def softmax_policy(logits: np.ndarray, n_actions: int | None = None) -> np.ndarray:
    """Row-wise softmax of logits given as ``(S, A)`` or flat with ``n_actions``."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim == 1:
        if n_actions is None:
            raise ValueError("flat logits need n_actions")
        logits = logits.reshape(-1, n_actions)
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def exploration_policy(f: np.ndarray, eta: float) -> np.ndarray:
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"exploration rate must lie in (0, 1], got {eta}")
    f = np.asarray(f, dtype=float)
    return eta / f.shape[1] + (1.0 - eta) * f


def clip(x):
    """Critic clipping to [0, 2]."""
    return np.minimum(np.maximum(x, 0.0), 2.0)


def schedule_values_ct(t: float) -> tuple[float, float]:
    """``(zeta_t, eta_t)`` in rescaled time."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 1.0 / (1.0 + t), 1.0 / (1.0 + math.log(t + 1.0) ** 2)


def schedule_values(k: int, n_hidden: int) -> tuple[float, float]:
    """Step-``k`` learning and exploration rates for a width-``N`` run."""
    if k < 0 or n_hidden < 1:
        raise ValueError("need k >= 0 and N >= 1")
    return schedule_values_ct(k / n_hidden)


def default_embedding(mdp: "FiniteMdp") -> np.ndarray:
    """One-hot state, one-hot action and a trailing bias coordinate."""
    s, a = mdp.n_states, mdp.n_actions
    emb = np.zeros((s * a, s + a + 1))
    for x in range(s):
        for b in range(a):
            row = emb[x * a + b]
            row[x] = 1.0
            row[s + b] = 1.0
            row[-1] = 1.0
    return emb


def distinct_directions(emb: np.ndarray, tol: float = 1e-12) -> bool:
    """True when no two embedded pairs are scalar multiples of each other."""
    emb = np.asarray(emb, dtype=float)
    gram = emb @ emb.T
    norms = np.diag(gram)
    cross = np.outer(norms, norms) - gram**2
    iu = np.triu_indices(emb.shape[0], k=1)
    return bool(np.all(cross[iu] > tol * np.outer(norms, norms)[iu]))


def validate_embedding(emb: np.ndarray, n_pairs: int | None = None) -> np.ndarray:
    emb = np.asarray(emb, dtype=float)
    if emb.ndim != 2:
        raise ValueError("embedding must be a 2-D array (pairs x dim)")
    if n_pairs is not None and emb.shape[0] != n_pairs:
        raise ValueError(f"embedding has {emb.shape[0]} rows, MDP has {n_pairs} pairs")
    if not np.all(emb[:, -1] == 1.0):
        raise ValueError("last embedding coordinate must be the bias column of ones")
    if not distinct_directions(emb):
        raise ValueError("embedded pairs are not in distinct directions")
    return emb
