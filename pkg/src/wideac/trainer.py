"""Online actor-critic training of two wide networks on coupled Markov chains.

The critic follows the MDP chain ``xi_k`` under the exploration policy; the
actor follows the restart chain ``xi~_k``.  Besides the parameter updates
the loop keeps the fluctuation accumulators, the occupancy deviation of the
restart chain, and run-long maxima of the per-unit increments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _backend
from ._kernels_numpy import ACC_M1, ACC_M2, ACC_M3, ACC_MN, ACC_OCC, INC_B, INC_C, INC_U, INC_W
from .mdp import FiniteMdp, aux_chain_kernel, chain_kernel, solve_stationary
from .nets import (
    WideNetParams,
    exploration_policy,
    init_params,
    make_rng,
    network_output,
    schedule_values,
    softmax_policy,
    validate_embedding,
)


@dataclass
class TrainConfig:
    """Settings of one training run.

    ``record_times`` are in rescaled time ``t = k / N``; a record at ``t`` is
    the snapshot after ``floor(t N)`` steps.  ``diagnostics_period`` defaults
    to ``ceil(N / 50)`` steps.  ``keep_params`` also stores copies of both
    networks at every record step.
    """

    n_hidden: int
    horizon_T: float
    alpha: float = 1.0
    record_times: Sequence[float] = (0.0,)
    seed: int = 0
    diagnostics_period: int | None = None
    track_fluctuations: bool = True
    backend: str | None = None
    keep_params: bool = False

    def __post_init__(self) -> None:
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be positive")
        if not self.horizon_T > 0:
            raise ValueError(f"horizon_T must be positive, got {self.horizon_T}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        times = sorted(float(t) for t in self.record_times)
        if times and (times[0] < 0 or times[-1] > self.horizon_T):
            raise ValueError(f"record_times must lie in [0, {self.horizon_T}]")
        self.record_times = tuple(times)
        if self.diagnostics_period is None:
            self.diagnostics_period = max(1, math.ceil(self.n_hidden / 50))
        if self.diagnostics_period < 1:
            raise ValueError("diagnostics_period must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.n_hidden * self.horizon_T))

    def record_steps(self) -> list[int]:
        # the tolerance guards grid points such as 0.3 * 250 landing just below an integer
        return [int(math.floor(t * self.n_hidden + 1e-9)) for t in self.record_times]


@dataclass
class TrainState:
    actor: WideNetParams
    critic: WideNetParams
    critic_pair: int
    actor_pair: int
    step: int
    rng: np.random.Generator

    def copy(self) -> "TrainState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return TrainState(
            self.actor.copy(), self.critic.copy(), self.critic_pair, self.actor_pair, self.step, rng
        )


@dataclass
class Trajectory:
    times: np.ndarray
    steps: np.ndarray
    q: np.ndarray
    p: np.ndarray
    f: np.ndarray
    g: np.ndarray


@dataclass
class FluctuationLog:
    """Accumulated fluctuation terms at the record times, one row per time."""

    times: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    mn: np.ndarray
    occupancy: np.ndarray
    tracked: bool = True


@dataclass
class IncrementStats:
    max_dc: float = 0.0
    max_dw: float = 0.0
    max_db: float = 0.0
    max_du: float = 0.0

    def scaled(self, n_hidden: int) -> dict[str, float]:
        """Critic maxima times ``N``, actor maxima times ``N^{3/2}``."""
        n32 = n_hidden**1.5
        return {
            "dc_N": self.max_dc * n_hidden,
            "dw_N": self.max_dw * n_hidden,
            "db_N32": self.max_db * n32,
            "du_N32": self.max_du * n32,
        }


@dataclass
class RunResult:
    trajectory: Trajectory
    fluctuations: FluctuationLog
    increments: IncrementStats
    initial_state: TrainState
    final_state: TrainState
    meta: dict = field(default_factory=dict)
    params: dict[int, tuple[WideNetParams, WideNetParams]] = field(default_factory=dict)


def initial_state(mdp: FiniteMdp, emb: np.ndarray, cfg: TrainConfig) -> TrainState:
    """Draw initial parameters and starting pairs from independent seed streams."""
    s_critic, s_actor, s_start, s_steps = np.random.SeedSequence(cfg.seed).spawn(4)
    d = emb.shape[1]
    critic = init_params(cfg.n_hidden, d, "critic", s_critic)
    actor = init_params(cfg.n_hidden, d, "actor", s_actor)
    start = make_rng(s_start)
    rho = mdp.rho0.reshape(-1)
    xi, xti = start.choice(mdp.n_pairs, size=2, p=rho)
    return TrainState(actor, critic, int(xi), int(xti), 0, make_rng(s_steps))


def _policies(state: TrainState, emb: np.ndarray, mdp: FiniteMdp):
    _, eta = schedule_values(state.step, state.actor.n_hidden)
    f = softmax_policy(network_output(state.actor, emb), mdp.n_actions)
    return f, exploration_policy(f, eta)


def _stationary_pair(mdp: FiniteMdp, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return (
        solve_stationary(chain_kernel(mdp, g).matrix),
        solve_stationary(aux_chain_kernel(mdp, g).matrix),
    )


def _advance(
    state: TrainState, mdp: FiniteMdp, emb: np.ndarray, alpha: float, n: int, kern,
    pi: np.ndarray, sig: np.ndarray, track: bool, acc: np.ndarray, inc: np.ndarray,
) -> None:
    """Run ``n`` steps in place; uniforms come from the state's own stream."""
    if n <= 0:
        return
    uniforms = state.rng.random((n, 4))
    k0 = state.step
    xi, xti = kern.train_segment(
        state.critic.outer, state.critic.inner, state.actor.outer, state.actor.inner,
        emb, mdp.n_actions, np.ascontiguousarray(mdp.pair_transition),
        np.ascontiguousarray(mdp.aux_pair_transition), np.ascontiguousarray(mdp.reward_pairs),
        float(mdp.gamma), float(alpha), uniforms, k0, k0 + n, int(state.critic_pair),
        int(state.actor_pair), pi, sig, bool(track), acc, inc,
    )
    state.critic_pair, state.actor_pair = int(xi), int(xti)
    state.step += n


def train_step(state: TrainState, mdp: FiniteMdp, emb: np.ndarray, cfg: TrainConfig) -> TrainState:
    """One step of the online loop; returns a new state and leaves ``state`` intact."""
    emb = np.ascontiguousarray(emb, dtype=float)
    new = state.copy()
    m = mdp.n_pairs
    acc = np.zeros((5, m))
    inc = np.zeros(4)
    flat = np.full(m, 1.0 / m)
    _advance(new, mdp, emb, cfg.alpha, 1, _backend.get_kernels(cfg.backend), flat, flat, False, acc, inc)
    return new


def _snapshot(state: TrainState, emb: np.ndarray, mdp: FiniteMdp):
    f, g = _policies(state, emb, mdp)
    return network_output(state.critic, emb), network_output(state.actor, emb), f, g


def run(
    mdp: FiniteMdp, emb: np.ndarray, cfg: TrainConfig, state: TrainState | None = None
) -> RunResult:
    """Execute ``floor(N T)`` steps and collect snapshots and diagnostics.

    The stationary laws used by the fluctuation and occupancy accumulators
    are recomputed every ``cfg.diagnostics_period`` steps and held fixed in
    between.  ``state`` defaults to :func:`initial_state`; it is copied, not
    mutated.
    """
    emb = np.ascontiguousarray(validate_embedding(emb, mdp.n_pairs))
    kern = _backend.get_kernels(cfg.backend)
    state = initial_state(mdp, emb, cfg) if state is None else state.copy()
    if state.step != 0:
        raise ValueError("run expects a state at step 0")
    start = state.copy()
    n_steps = cfg.n_steps
    period = cfg.diagnostics_period
    rec_steps = cfg.record_steps()
    m = mdp.n_pairs
    acc = np.zeros((5, m))
    inc = np.zeros(4)
    stops = sorted(set(rec_steps) | set(range(period, n_steps, period)) | {n_steps})

    snaps: dict[int, tuple] = {}
    accs: dict[int, np.ndarray] = {}
    kept: dict[int, tuple[WideNetParams, WideNetParams]] = {}
    pi, sig = _stationary_pair(mdp, _policies(state, emb, mdp)[1])
    for stop in [0] + [s for s in stops if s > 0]:
        _advance(state, mdp, emb, cfg.alpha, stop - state.step, kern, pi, sig,
                 cfg.track_fluctuations, acc, inc)
        if stop in rec_steps:
            snaps[stop] = _snapshot(state, emb, mdp)
            accs[stop] = acc.copy()
            if cfg.keep_params:
                kept[stop] = (state.critic.copy(), state.actor.copy())
        if stop % period == 0 and stop < n_steps:
            pi, sig = _stationary_pair(mdp, _policies(state, emb, mdp)[1])

    q, p, f, g = (np.array([snaps[k][j] for k in rec_steps]) for j in range(4))
    stacked = np.array([accs[k] for k in rec_steps]).reshape(len(rec_steps), 5, m)
    times = np.array(cfg.record_times, dtype=float)
    traj = Trajectory(times, np.array(rec_steps), q, p, f, g)
    fluct = FluctuationLog(
        times,
        stacked[:, ACC_M1], stacked[:, ACC_M2], stacked[:, ACC_M3], stacked[:, ACC_MN],
        stacked[:, ACC_OCC], cfg.track_fluctuations,
    )
    incs = IncrementStats(
        float(inc[INC_C]), float(inc[INC_W]), float(inc[INC_B]), float(inc[INC_U])
    )
    backend = "numba" if kern is _backend._kernels_numba else "numpy"
    return RunResult(traj, fluct, incs, start, state, {"backend": backend, "n_steps": n_steps}, kept)


def empirical_kernel(params: WideNetParams, emb: np.ndarray) -> np.ndarray:
    """Finite-width tangent kernel of the given parameters (symmetric ``M x M``)."""
    emb = np.ascontiguousarray(emb, dtype=float)
    return _backend.kernels.empirical_kernel(params.outer, params.inner, emb)


def increment_stats(before: TrainState, after: TrainState) -> IncrementStats:
    """Per-unit maxima of the parameter changes between two states."""
    def row_max(a, b):
        diff = np.asarray(a) - np.asarray(b)
        return float(np.max(np.linalg.norm(diff.reshape(diff.shape[0], -1), axis=1)))

    return IncrementStats(
        row_max(after.critic.outer, before.critic.outer),
        row_max(after.critic.inner, before.critic.inner),
        row_max(after.actor.outer, before.actor.outer),
        row_max(after.actor.inner, before.actor.inner),
    )


TestFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def phi_outer_squared(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    return outer**2


def phi_tanh(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    return np.tanh(outer + inner.sum(axis=1))


def measure_drift(
    params_t: WideNetParams, params_0: WideNetParams, phi: TestFunction = phi_outer_squared
) -> float:
    """``|<phi, nu_t> - <phi, nu_0>|`` for the empirical parameter measures."""
    now = float(np.mean(phi(params_t.outer, params_t.inner)))
    then = float(np.mean(phi(params_0.outer, params_0.inner)))
    return abs(now - then)
