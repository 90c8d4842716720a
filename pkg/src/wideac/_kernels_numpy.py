"""Pure-numpy training kernels (fallback when numba is disabled or missing).

Signatures mirror ``_kernels_numba`` exactly.  Parameter arrays are updated
in place.
"""
import math

import numpy as np

# rows of the accumulator array
ACC_M1, ACC_M2, ACC_M3, ACC_MN, ACC_OCC = range(5)
# entries of the increment-maximum array
INC_C, INC_W, INC_B, INC_U = range(4)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def inverse_cdf(probs, u):
    c = 0.0
    n = probs.shape[0]
    for j in range(n):
        c += probs[j]
        if u < c:
            return j
    return n - 1


def empirical_kernel(outer, inner, emb):
    """``(1/N) sum_i [s_i(xi) s_i(xi') + c_i^2 s'_i(xi) s'_i(xi') (xi . xi')]``."""
    n = outer.shape[0]
    s = _sigmoid(inner @ emb.T)
    ds = s * (1.0 - s) * outer[:, None]
    return (s.T @ s + (ds.T @ ds) * (emb @ emb.T)) / n


def train_segment(
    C, W, B, U, emb, n_actions, p_next, pt_next, reward, gamma, alpha,
    uniforms, k0, k1, xi, xti, pi, sig, track, acc, inc_max,
):
    """Run steps ``k0 <= k < k1`` of the online actor-critic loop.

    Row ``k - k0`` of ``uniforms`` drives step ``k``.  ``pi`` and ``sig`` are
    the (held) stationary laws of the critic and auxiliary chains used by the
    fluctuation and occupancy accumulators.
    Returns the new ``(xi, xti)`` pair indices.
    """
    n = C.shape[0]
    m = emb.shape[0]
    n_states = m // n_actions
    sqrt_n = math.sqrt(n)
    scale = 1.0 / (n * sqrt_n)
    gram = emb @ emb.T if track else None
    for k in range(k0, k1):
        tk = k / n
        zeta = 1.0 / (1.0 + tk)
        lg = math.log(tk + 1.0)
        eta = 1.0 / (1.0 + lg * lg)

        sw = _sigmoid(W @ emb.T)
        su = _sigmoid(U @ emb.T)
        q = C @ sw / sqrt_n
        logits = (B @ su / sqrt_n).reshape(n_states, n_actions)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        f = z / z.sum(axis=1, keepdims=True)
        g = eta / n_actions + (1.0 - eta) * f

        u = uniforms[k - k0]
        x1 = inverse_cdf(p_next[xi], u[0])
        xi1 = x1 * n_actions + inverse_cdf(g[x1], u[1])
        xt1 = inverse_cdf(pt_next[xti], u[2])
        xti1 = xt1 * n_actions + inverse_cdf(g[xt1], u[3])

        # critic step, target held at old parameters
        td = reward[xi] + gamma * q[xi1] - q[xi]
        s_k = sw[:, xi]
        d_c = (alpha * scale * td) * s_k
        w_coef = (alpha * scale * td) * C * s_k * (1.0 - s_k)
        d_w = np.outer(w_coef, emb[xi])

        # actor step on the auxiliary sample
        base = (xti // n_actions) * n_actions
        ft = f[xti // n_actions]
        qt = min(max(q[xti], 0.0), 2.0)
        su_x = su[:, base:base + n_actions]
        dsu_x = su_x * (1.0 - su_x)
        a_rate = zeta * scale * qt
        d_b = a_rate * (su[:, xti] - su_x @ ft)
        d_u = (a_rate * B)[:, None] * (
            dsu_x[:, xti - base][:, None] * emb[xti][None, :]
            - (dsu_x * ft[None, :]) @ emb[base:base + n_actions]
        )

        if track:
            dsw = sw * (1.0 - sw) * C[:, None]
            bc = (sw.T @ sw + (dsw.T @ dsw) * gram) / n
            dsu = su * (1.0 - su) * B[:, None]
            ba = (su.T @ su + (dsu.T @ dsu) * gram) / n
            col = bc[:, xi]
            kq = p_next @ (g * q.reshape(n_states, n_actions)).sum(axis=1)
            acc[ACC_M1] += (-q[xi] * col + bc @ (q * pi)) / n
            acc[ACC_M2] += (reward[xi] * col - bc @ (reward * pi)) / n
            acc[ACC_M3] += (gamma * q[xi1] * col - bc @ (gamma * kq * pi)) / n
            obs = qt * (ba[:, xti] - ba[:, base:base + n_actions] @ ft)
            w = np.minimum(np.maximum(q, 0.0), 2.0) * sig
            wsum = np.repeat(w.reshape(n_states, n_actions).sum(axis=1), n_actions)
            acc[ACC_MN] += zeta * (obs - ba @ (w - f.reshape(-1) * wsum)) / n
        acc[ACC_OCC] -= sig / n
        acc[ACC_OCC, xti] += 1.0 / n

        inc_max[INC_C] = max(inc_max[INC_C], np.max(np.abs(d_c)))
        inc_max[INC_W] = max(inc_max[INC_W], np.max(np.abs(w_coef)) * np.linalg.norm(emb[xi]))
        inc_max[INC_B] = max(inc_max[INC_B], np.max(np.abs(d_b)))
        inc_max[INC_U] = max(inc_max[INC_U], np.sqrt(np.max(np.einsum("ij,ij->i", d_u, d_u))))

        C += d_c
        W += d_w
        B += d_b
        U += d_u
        xi, xti = xi1, xti1
    return xi, xti
