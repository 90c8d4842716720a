"""Infinite-width limit dynamics of the actor-critic pair and their diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import LimitKernel
from .mdp import (
    Ergodicity,
    FiniteMdp,
    NotErgodic,
    advantage,
    aux_chain_kernel,
    chain_kernel,
    ergodicity_check,
    objective,
    policy_gradient,
    solve_stationary,
    value_function,
    visiting_measure,
)
from .nets import (
    WideNetParams,
    clip,
    exploration_policy,
    make_rng,
    network_output,
    schedule_values_ct,
    sigmoid,
    softmax_policy,
)

# step-halving tolerances (sup norm) for short and long horizons
SHORT_TOL = 1e-6
LONG_TOL = 1e-4
LONG_HORIZON = 50.0


class StepInconsistency(RuntimeError):
    """Halving the step changed the recorded trajectory beyond tolerance."""


@dataclass
class OdeState:
    q: np.ndarray
    p_logits: np.ndarray
    t: float = 0.0

    def copy(self) -> "OdeState":
        return OdeState(self.q.copy(), self.p_logits.copy(), self.t)


@dataclass
class OdeRunConfig:
    """Integration settings.

    ``record_times`` are rounded to the nearest multiple of ``dt``.  A
    ``None`` tolerance picks 1e-6 up to ``t_end = 50`` and 1e-4 beyond.
    """

    kernel: LimitKernel
    t_end: float
    dt: float = 0.01
    alpha: float = 1.0
    record_times: tuple[float, ...] | None = None
    check_consistency: bool = True
    tolerance: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.dt <= 0.1:
            raise ValueError(f"dt must lie in (0, 0.1], got {self.dt}")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.record_times is None:
            self.record_times = (0.0, self.t_end)
        times = tuple(sorted({float(t) for t in self.record_times}))
        if times and (times[0] < 0 or times[-1] > self.t_end + 1e-12):
            raise ValueError("record_times must lie in [0, t_end]")
        self.record_times = times

    @property
    def gate(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return SHORT_TOL if self.t_end <= LONG_HORIZON else LONG_TOL


@dataclass
class OdeTrajectory:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    consistency_error: float = float("nan")
    meta: dict = field(default_factory=dict)

    def state(self, i: int) -> OdeState:
        return OdeState(self.q[i].copy(), self.p[i].copy(), float(self.times[i]))

    def __len__(self) -> int:
        return len(self.times)


def policies_at(t: float, p_logits: np.ndarray, n_actions: int) -> tuple[np.ndarray, np.ndarray]:
    """``(f_t, g_t)`` from logits at time ``t``."""
    f = softmax_policy(p_logits, n_actions)
    _, eta = schedule_values_ct(t)
    return f, exploration_policy(f, eta)


def drift(
    t: float, state: OdeState, mdp: FiniteMdp, kernel: LimitKernel, alpha: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side ``(dQ/dt, dP/dt)`` of the limit system.

    The critic is driven by the TD residual weighted with the stationary law
    of the pair chain under ``g_t``.  The actor is driven by the clipped
    critic weighted with the stationary law of the restart chain, i.e. the
    visiting measure normalised to a probability.
    """
    s, a = mdp.n_states, mdp.n_actions
    q = np.asarray(state.q, dtype=float)
    f, g = policies_at(t, state.p_logits, a)
    zeta, _ = schedule_values_ct(t)
    kmat = chain_kernel(mdp, g).matrix
    pi = solve_stationary(kmat)
    sig = solve_stationary(aux_chain_kernel(mdp, g).matrix)
    amat = kernel.a
    resid = mdp.reward_pairs + mdp.gamma * (kmat @ q) - q
    dq = alpha * (amat @ (resid * pi))
    w = (clip(q) * sig).reshape(s, a)
    centred = (w - f * w.sum(axis=1, keepdims=True)).reshape(-1)
    dp = zeta * (amat @ centred)
    return dq, dp


def _rk4_step(t, q, p, dt, mdp, kernel, alpha):
    def rhs(tt, qq, pp):
        return drift(tt, OdeState(qq, pp, tt), mdp, kernel, alpha)

    k1q, k1p = rhs(t, q, p)
    k2q, k2p = rhs(t + dt / 2, q + dt / 2 * k1q, p + dt / 2 * k1p)
    k3q, k3p = rhs(t + dt / 2, q + dt / 2 * k2q, p + dt / 2 * k2p)
    k4q, k4p = rhs(t + dt, q + dt * k3q, p + dt * k3p)
    q = q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    p = p + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return q, p


def _run_fixed(state0: OdeState, mdp, kernel, alpha, dt, n_steps, record_steps):
    q = np.array(state0.q, dtype=float)
    p = np.array(state0.p_logits, dtype=float)
    out_q, out_p = [], []
    wanted = iter(record_steps)
    nxt = next(wanted, None)
    for k in range(n_steps + 1):
        while nxt == k:
            out_q.append(q.copy())
            out_p.append(p.copy())
            nxt = next(wanted, None)
        if k == n_steps:
            break
        q, p = _rk4_step(state0.t + k * dt, q, p, dt, mdp, kernel, alpha)
    return np.array(out_q), np.array(out_p)


def integrate(state0: OdeState, cfg: OdeRunConfig, mdp: FiniteMdp) -> OdeTrajectory:
    """Fixed-step RK4 integration, optionally verified against a half-step pass.

    Raises
    ------
    NotErgodic
        If the restart chain is not ergodic under the uniform policy; then
        no exploration policy can be ergodic either.
    StepInconsistency
        If the half-step pass differs by more than the configured gate.
    """
    uniform = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    for k in (chain_kernel(mdp, uniform), aux_chain_kernel(mdp, uniform)):
        kind = ergodicity_check(k)
        if kind is not Ergodicity.ERGODIC:
            raise NotErgodic(f"{k.flavor} is {kind.value} under the uniform policy")
    dt = cfg.dt
    n_steps = int(round(cfg.t_end / dt))
    record_steps = [int(round(t / dt)) for t in cfg.record_times]
    times = state0.t + np.array(record_steps) * dt
    q, p = _run_fixed(state0, mdp, cfg.kernel, cfg.alpha, dt, n_steps, record_steps)
    err = float("nan")
    if cfg.check_consistency and n_steps > 0:
        q2, p2 = _run_fixed(
            state0, mdp, cfg.kernel, cfg.alpha, dt / 2, 2 * n_steps, [2 * k for k in record_steps]
        )
        err = float(max(np.max(np.abs(q - q2)), np.max(np.abs(p - p2))))
        if err > cfg.gate:
            raise StepInconsistency(
                f"dt={dt} vs dt/2 differ by {err:.3e} (gate {cfg.gate:g})"
            )
    return OdeTrajectory(times, q, p, err)


def critic_gap(state: OdeState, mdp: FiniteMdp) -> float:
    """Sup-norm distance from ``Q_t`` to the value function of ``f_t``."""
    f = softmax_policy(state.p_logits, mdp.n_actions)
    return float(np.max(np.abs(np.asarray(state.q) - value_function(mdp, f))))


def grad_norm(state: OdeState, mdp: FiniteMdp) -> float:
    return float(np.linalg.norm(policy_gradient(mdp, state.p_logits)))


def approx_grad(state: OdeState, mdp: FiniteMdp) -> np.ndarray:
    """Policy gradient with the critic standing in for the value function.

    Weighted by the visiting measure of ``g_t`` rather than ``f_t``.
    """
    f, g = policies_at(state.t, state.p_logits, mdp.n_actions)
    return visiting_measure(mdp, g) * advantage(mdp, f, state.q)


def lyapunov(state: OdeState, mdp: FiniteMdp, kernel: LimitKernel) -> float:
    """``0.5 phi^T A^{-1} phi`` with ``phi = Q_t - V^{g_t}``."""
    _, g = policies_at(state.t, state.p_logits, mdp.n_actions)
    phi = np.asarray(state.q) - value_function(mdp, g)
    return 0.5 * float(phi @ np.linalg.solve(kernel.a, phi))


def objective_at(state: OdeState, mdp: FiniteMdp) -> float:
    return objective(mdp, softmax_policy(state.p_logits, mdp.n_actions))


def coupled_initial_state(
    critic: WideNetParams, actor: WideNetParams, emb: np.ndarray
) -> OdeState:
    """Start the limit system from the finite-width initial outputs."""
    return OdeState(network_output(critic, emb), network_output(actor, emb), 0.0)


def gaussian_initial_state(
    emb: np.ndarray, seed=None, n_cov_samples: int = 200_000
) -> OdeState:
    """Independent Gaussian draws for ``Q_0`` and ``P_0``.

    Both share the covariance ``E[c^2 s(w.xi) s(w.xi')]`` under the
    initialization law, estimated here by sampling.
    """
    emb = np.asarray(emb, dtype=float)
    rng = make_rng(seed)
    d = emb.shape[1]
    c = rng.uniform(-1.0, 1.0, size=n_cov_samples)
    w = rng.uniform(-1.0 / math.sqrt(d), 1.0 / math.sqrt(d), size=(n_cov_samples, d))
    feats = sigmoid(w @ emb.T) * c[:, None]
    cov = feats.T @ feats / n_cov_samples
    cov = 0.5 * (cov + cov.T)
    m = emb.shape[0]
    q0 = rng.multivariate_normal(np.zeros(m), cov, method="eigh")
    p0 = rng.multivariate_normal(np.zeros(m), cov, method="eigh")
    return OdeState(q0, p0, 0.0)
