"""Independent reference computations used only by the tests.

Each oracle avoids the library code path it checks: Monte Carlo in place of
linear solves, explicit loops in place of vectorised sums.
"""
import math

import numpy as np
from numba import njit

from wideac.mdp import FiniteMdp


def sample_transition_counts(mdp: FiniteMdp, g: np.ndarray, n_steps: int, seed: int):
    """Pair-to-pair transition counts from a simulated chain."""
    rng = np.random.default_rng(seed)
    s, a = mdp.n_states, mdp.n_actions
    m = s * a
    counts = np.zeros((m, m))
    xs = np.empty(n_steps + 1, dtype=np.int64)
    u = rng.random((n_steps, 2))
    p_cdf = np.cumsum(mdp.transition, axis=2)
    g_cdf = np.cumsum(g, axis=1)
    x, b = 0, 0
    xs[0] = 0
    for k in range(n_steps):
        y = min(int(np.searchsorted(p_cdf[x, b], u[k, 0], side="right")), s - 1)
        c = min(int(np.searchsorted(g_cdf[y], u[k, 1], side="right")), a - 1)
        xs[k + 1] = y * a + c
        x, b = y, c
    np.add.at(counts, (xs[:-1], xs[1:]), 1.0)
    return counts


@njit(cache=True)
def _rollouts(p_cdf, r, f_cdf, gamma, horizon, n_rollouts, seed):
    np.random.seed(seed)
    s, a = r.shape
    means = np.empty(s * a)
    errs = np.empty(s * a)
    for x0 in range(s):
        for a0 in range(a):
            tot = 0.0
            tot2 = 0.0
            for _ in range(n_rollouts):
                x, b = x0, a0
                ret, disc = 0.0, 1.0
                for _ in range(horizon):
                    ret += disc * r[x, b]
                    disc *= gamma
                    u = np.random.random()
                    nx = 0
                    while nx < s - 1 and u > p_cdf[x, b, nx]:
                        nx += 1
                    # the position of u inside its bin is again uniform
                    lo = p_cdf[x, b, nx - 1] if nx > 0 else 0.0
                    hi = p_cdf[x, b, nx] if nx < s - 1 else 1.0
                    u = min(max((u - lo) / (hi - lo), 0.0), 1.0) if hi > lo else 0.5
                    nb = 0
                    while nb < a - 1 and u > f_cdf[nx, nb]:
                        nb += 1
                    x, b = nx, nb
                tot += ret
                tot2 += ret * ret
            mean = tot / n_rollouts
            var = max(tot2 / n_rollouts - mean * mean, 0.0) * n_rollouts / (n_rollouts - 1)
            means[x0 * a + a0] = mean
            errs[x0 * a + a0] = math.sqrt(var / n_rollouts)
    return means, errs


def rollout_values(mdp: FiniteMdp, f: np.ndarray, n_rollouts: int, seed: int, tol: float = 1e-8):
    """Monte Carlo discounted returns from every pair, truncated at ``gamma^H < tol``.

    Returns ``(mean, stderr, bias)`` where ``bias`` bounds the truncation
    error ``gamma^H max|r| / (1 - gamma)``.
    """
    horizon = int(math.ceil(math.log(tol) / math.log(mdp.gamma)))
    means, errs = _rollouts(
        np.cumsum(mdp.transition, axis=2), np.ascontiguousarray(mdp.reward, dtype=float),
        np.cumsum(f, axis=1), float(mdp.gamma), horizon, n_rollouts, seed,
    )
    bias = mdp.gamma**horizon * np.max(np.abs(mdp.reward)) / (1.0 - mdp.gamma)
    return means, errs, bias


def power_iteration(mat: np.ndarray, n_iter: int = 10_000) -> np.ndarray:
    pi = np.full(mat.shape[0], 1.0 / mat.shape[0])
    for _ in range(n_iter):
        pi = pi @ mat
    return pi / pi.sum()


def visiting_series(mdp: FiniteMdp, g: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """``sum_k gamma^k P(x_k = x) g(x, a)`` by forward propagation.

    ``x_0`` follows the state marginal of rho0; every action, including the
    first, is drawn from ``g``.
    """
    s, a = mdp.n_states, mdp.n_actions
    dist = (mdp.rho0.sum(axis=1)[:, None] * g).reshape(-1)
    out = np.zeros(s * a)
    k = 0
    while mdp.gamma**k >= tol:
        out += mdp.gamma**k * dist
        nxt = np.zeros(s * a)
        for x in range(s):
            for b in range(a):
                for y in range(s):
                    for c in range(a):
                        nxt[y * a + c] += dist[x * a + b] * mdp.transition[x, b, y] * g[y, c]
        dist = nxt
        k += 1
    return out


def finite_difference_gradient(func, logits: np.ndarray, h: float = 1e-5) -> np.ndarray:
    flat = logits.reshape(-1)
    out = np.empty_like(flat)
    for j in range(flat.size):
        e = np.zeros_like(flat)
        e[j] = h
        out[j] = (func((flat + e).reshape(logits.shape)) - func((flat - e).reshape(logits.shape))) / (2 * h)
    return out


def fundamental_poisson(mat: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``Z - 1 pi^T`` with ``Z = (I - K + 1 pi^T)^{-1}``; column ``xi`` solves the Poisson equation."""
    m = mat.shape[0]
    piv = np.outer(np.ones(m), pi)
    return np.linalg.inv(np.eye(m) - mat + piv) - piv


def logistic(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def naive_drift(t, q, p_logits, mdp: FiniteMdp, amat: np.ndarray, alpha: float, pi, sig):
    """Limit drift with every sum written out; stationary laws supplied by the caller."""
    s, a = mdp.n_states, mdp.n_actions
    m = s * a
    f = np.empty((s, a))
    for x in range(s):
        z = [math.exp(p_logits[x * a + b]) for b in range(a)]
        for b in range(a):
            f[x, b] = z[b] / sum(z)
    zeta = 1.0 / (1.0 + t)
    eta = 1.0 / (1.0 + math.log(t + 1.0) ** 2)
    g = eta / a + (1.0 - eta) * f
    dq = np.zeros(m)
    dp = np.zeros(m)
    for i in range(m):
        for j in range(m):
            x1, a1 = divmod(j, a)
            nxt = 0.0
            for z in range(s):
                for b in range(a):
                    nxt += q[z * a + b] * g[z, b] * mdp.transition[x1, a1, z]
            dq[i] += alpha * amat[i, j] * (mdp.reward[x1, a1] + mdp.gamma * nxt - q[j]) * pi[j]
            cq = min(max(q[j], 0.0), 2.0)
            inner = amat[i, j]
            for b in range(a):
                inner -= f[x1, b] * amat[i, x1 * a + b]
            dp[i] += zeta * cq * inner * sig[j]
    return dq, dp


def hand_step(C, W, B, U, emb, mdp: FiniteMdp, k, n_hidden, alpha, xi, xi1, xti):
    """One actor-critic update written unit by unit with scalar arithmetic.

    The caller supplies the sampled next critic pair ``xi1``.
    """
    a = mdp.n_actions
    n = n_hidden
    d = emb.shape[1]

    def net(outer, inner, j):
        return sum(outer[i] * logistic(sum(inner[i, c] * emb[j, c] for c in range(d)))
                   for i in range(n)) / math.sqrt(n)

    zeta = 1.0 / (1.0 + k / n)
    xt = xti // a
    f = [math.exp(net(B, U, xt * a + b)) for b in range(a)]
    f = [v / sum(f) for v in f]
    r = mdp.reward_pairs
    td = r[xi] + mdp.gamma * net(C, W, xi1) - net(C, W, xi)
    qt = min(max(net(C, W, xti), 0.0), 2.0)
    dC = np.zeros(n)
    dW = np.zeros_like(W)
    dB = np.zeros(n)
    dU = np.zeros_like(U)
    for i in range(n):
        zk = sum(W[i, c] * emb[xi, c] for c in range(d))
        sk = logistic(zk)
        dC[i] = alpha / n**1.5 * td * sk
        for c in range(d):
            dW[i, c] = alpha / n**1.5 * td * C[i] * sk * (1 - sk) * emb[xi, c]
        zs = [logistic(sum(U[i, c] * emb[xt * a + b, c] for c in range(d))) for b in range(a)]
        st = logistic(sum(U[i, c] * emb[xti, c] for c in range(d)))
        dB[i] = zeta / n**1.5 * qt * (st - sum(f[b] * zs[b] for b in range(a)))
        for c in range(d):
            dU[i, c] = zeta / n**1.5 * qt * (
                B[i] * st * (1 - st) * emb[xti, c]
                - sum(f[b] * B[i] * zs[b] * (1 - zs[b]) * emb[xt * a + b, c] for b in range(a))
            )
    return dC, dW, dB, dU
