"""Poisson equations and geometric-ergodicity measurements for pair chains."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ChainKernel, FiniteMdp, NotErgodic, stationary_distribution
from .parallel import pmap

TAIL_TOL = 1e-12
RESIDUAL_TOL = 1e-8


class NoConvergence(RuntimeError):
    """The series did not reach its tail tolerance within the term budget."""


@dataclass(frozen=True)
class PoissonSolution:
    values: np.ndarray
    target: int
    residual: float
    n_terms: int


@dataclass(frozen=True)
class ErgodicityEstimate:
    """Sup-TV decay of ``K^n`` towards ``pi`` and a dominating geometric envelope.

    ``tv_curve[n] <= (1 - beta) ** (n // n0)`` holds for every recorded
    ``n`` with TV above the fit floor.  ``rate`` is the fitted per-step contraction factor.
    """

    n0: int
    beta: float
    rate: float
    tv_curve: np.ndarray
    r_squared: float
    min_pi: float

    def envelope(self, n: np.ndarray | int) -> np.ndarray:
        return (1.0 - self.beta) ** (np.asarray(n) // self.n0)


def _matrix(k: ChainKernel | np.ndarray) -> np.ndarray:
    return k.matrix if isinstance(k, ChainKernel) else np.asarray(k, dtype=float)


def _sup_tv(power: np.ndarray, pi: np.ndarray) -> float:
    return 0.5 * float(np.max(np.abs(power - pi).sum(axis=1)))


def _row_spread(power: np.ndarray) -> float:
    """Largest TV distance between two rows of ``power``."""
    return 0.5 * float(np.max(np.abs(power[:, None, :] - power[None, :, :]).sum(axis=2)))


def poisson_matrix(k: ChainKernel | np.ndarray, max_terms: int = 1_000_000) -> tuple[np.ndarray, int]:
    """``sum_n (K^n - 1 pi^T)``, truncated once the tail bound drops below 1e-12.

    Column ``xi`` solves the Poisson equation with source ``1_xi - pi(xi)``.
    With ``d(j)`` the row-to-row TV of ``K^j``, ``d`` is submultiplicative and
    non-increasing, so for any ``m <= n`` the tail after ``n`` terms is at most
    ``m d(n) / (1 - d(m))``. The best ``m`` seen so far is used.
    """
    mat = _matrix(k)
    pi = stationary_distribution(mat)
    power = np.eye(mat.shape[0])
    total = np.zeros_like(mat)
    block = np.inf
    for n in range(1, max_terms + 1):
        total += power - pi
        power = power @ mat
        dbar = _row_spread(power)
        if dbar < 1.0:
            block = min(block, n / (1.0 - dbar))
        if block * dbar < TAIL_TOL:
            return total, n
    raise NoConvergence(f"series tail still above {TAIL_TOL:g} after {max_terms} terms")


def solve_poisson(k: ChainKernel | np.ndarray, target: int, max_terms: int = 1_000_000) -> PoissonSolution:
    """Solve ``nu - K nu = 1_target - pi(target)`` by the truncated series.

    Raises
    ------
    NotErgodic
        If the chain is reducible or periodic.
    NoConvergence
        If the TV decay is too slow for ``max_terms`` terms.
    """
    mat = _matrix(k)
    m = mat.shape[0]
    if not 0 <= target < m:
        raise IndexError(f"target {target} outside 0..{m - 1}")
    total, n_terms = poisson_matrix(mat, max_terms)
    nu = total[:, target].copy()
    pi = stationary_distribution(mat)
    source = -np.full(m, pi[target])
    source[target] += 1.0
    residual = float(np.max(np.abs(nu - mat @ nu - source)))
    return PoissonSolution(nu, target, residual, n_terms)


def tv_curve(k: ChainKernel | np.ndarray, n_max: int) -> np.ndarray:
    """``sup_xi TV(K^n(xi, .), pi)`` for ``n = 0 .. n_max``."""
    mat = _matrix(k)
    pi = stationary_distribution(mat)
    power = np.eye(mat.shape[0])
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        out[n] = _sup_tv(power, pi)
        power = power @ mat
    return out


def ergodicity_rate(k: ChainKernel | np.ndarray, n_max: int = 200, floor: float = 1e-13) -> ErgodicityEstimate:
    """Measure the TV decay and fit ``(n0, beta)``.

    ``n0`` is the first ``n`` with sup-TV below ``1 - 1e-3``.  The per-step
    rate comes from least squares on ``log TV`` over ``n >= n0`` where TV is
    above ``floor``; ``beta`` is then lowered, if needed, until the envelope
    dominates the whole curve.
    """
    mat = _matrix(k)
    pi = stationary_distribution(mat)
    curve = tv_curve(mat, n_max)
    below = np.nonzero(curve[1:] < 1.0 - 1e-3)[0]
    if below.size == 0:
        raise NoConvergence(f"sup-TV stays above 1 - 1e-3 up to n = {n_max}")
    n0 = int(below[0]) + 1
    ns = np.arange(n0, n_max + 1)
    vals = curve[n0:]
    keep = vals > floor
    if keep.sum() >= 2:
        slope, icpt = np.polyfit(ns[keep], np.log(vals[keep]), 1)
        pred = slope * ns[keep] + icpt
        resid = np.log(vals[keep]) - pred
        centred = np.log(vals[keep]) - np.log(vals[keep]).mean()
        ss_tot = float(centred @ centred)
        r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
        rate = float(np.exp(slope))
    elif keep.sum() == 1:
        rate, r2 = float(vals[keep][0]) ** (1.0 / ns[keep][0]), float("nan")
    else:
        rate, r2 = 0.0, float("nan")
    factor = min(1.0, rate**n0)
    blocks = ns // n0
    # values under the floor are roundoff; they would inflate the root
    if keep.any():
        factor = max(factor, float(np.max(vals[keep] ** (1.0 / blocks[keep]))))
    return ErgodicityEstimate(n0, 1.0 - factor, rate, curve, r2, float(pi.min()))


def poisson_bound(est: ErgodicityEstimate) -> float:
    """``sum_n (1 - beta)^(n // n0) = n0 / beta``, a bound on the series entries."""
    return est.n0 / est.beta if est.beta > 0 else float("inf")


@dataclass(frozen=True)
class DecayRow:
    n_hidden: int
    n_seeds: int
    mean_sq: np.ndarray
    stderr_sq: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mean_sq.sum())


def _decay_run(job) -> np.ndarray:
    from .trainer import TrainConfig, initial_state, run

    mdp, emb, n_hidden, seed, horizon, alpha, frozen = job
    cfg = TrainConfig(
        n_hidden, horizon, alpha=0.0 if frozen else alpha, record_times=(horizon,),
        seed=seed, track_fluctuations=False,
    )
    state = initial_state(mdp, emb, cfg)
    if frozen:
        state.critic.outer[:] = 0.0
        state.actor.outer[:] = 0.0
    res = run(mdp, emb, cfg, state)
    return res.fluctuations.occupancy[-1] ** 2


def fluctuation_decay_experiment(
    mdp: FiniteMdp,
    emb: np.ndarray,
    n_values,
    seeds,
    horizon_T: float = 1.0,
    alpha: float = 1.0,
    frozen: bool = False,
    workers: int = 1,
) -> list[DecayRow]:
    """Seed-mean of the squared occupancy deviation of the restart chain at ``T``.

    The deviation is ``(1/N) sum_k (1{xi~_k = xi} - sigma(xi))`` with
    ``sigma`` the probability-normalised visiting measure of the current
    exploration policy.  ``frozen=True`` zeroes both outer layers and the
    critic rate so the policy stays uniform.
    """
    jobs = [(mdp, emb, n, s, horizon_T, alpha, frozen) for n in n_values for s in seeds]
    results = pmap(_decay_run, jobs, workers)
    rows = []
    n_seeds = len(list(seeds))
    for i, n in enumerate(n_values):
        block = np.array(results[i * n_seeds:(i + 1) * n_seeds])
        rows.append(DecayRow(
            n, n_seeds, block.mean(axis=0), block.std(axis=0, ddof=1) / np.sqrt(n_seeds)
            if n_seeds > 1 else np.zeros(block.shape[1]),
        ))
    return rows
