"""numba-compiled training kernels; same contract as ``_kernels_numpy``."""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


@njit(cache=True)
def inverse_cdf(probs, u):
    c = 0.0
    n = probs.shape[0]
    for j in range(n):
        c += probs[j]
        if u < c:
            return j
    return n - 1


@njit(cache=True)
def _preact(inner, emb, out):
    n, d = inner.shape
    m = emb.shape[0]
    for i in range(n):
        for j in range(m):
            z = 0.0
            for c in range(d):
                z += inner[i, c] * emb[j, c]
            out[i, j] = z


@njit(cache=True)
def _activate(z, out):
    n, m = z.shape
    for i in range(n):
        for j in range(m):
            out[i, j] = _sigmoid(z[i, j])


@njit(cache=True)
def _features(inner, emb, out):
    _preact(inner, emb, out)
    _activate(out, out)


@njit(cache=True)
def _kernel_from_features(s, outer, gram, out):
    n, m = s.shape
    out[:, :] = 0.0
    for i in range(n):
        c2 = outer[i] * outer[i]
        for a in range(m):
            sa = s[i, a]
            da = sa * (1.0 - sa)
            for b in range(a, m):
                sb = s[i, b]
                out[a, b] += sa * sb + c2 * da * sb * (1.0 - sb) * gram[a, b]
    for a in range(m):
        out[a, a] /= n
        for b in range(a + 1, m):
            out[a, b] /= n
            out[b, a] = out[a, b]


@njit(cache=True)
def empirical_kernel(outer, inner, emb):
    n = outer.shape[0]
    m = emb.shape[0]
    s = np.empty((n, m))
    _features(inner, emb, s)
    out = np.empty((m, m))
    _kernel_from_features(s, outer, emb @ emb.T, out)
    return out


@njit(cache=True)
def train_segment(
    C, W, B, U, emb, n_actions, p_next, pt_next, reward, gamma, alpha,
    uniforms, k0, k1, xi, xti, pi, sig, track, acc, inc_max,
):
    n, d = W.shape
    m = emb.shape[0]
    n_states = m // n_actions
    sqrt_n = math.sqrt(n)
    scale = 1.0 / (n * sqrt_n)
    gram = emb @ emb.T
    sw = np.empty((n, m))
    su = np.empty((n, m))
    # pre-activations kept in step with W and U to skip the d-dot each step
    zw = np.empty((n, m))
    zu = np.empty((n, m))
    _preact(W, emb, zw)
    _preact(U, emb, zu)
    q = np.empty(m)
    logits = np.empty(m)
    f = np.empty((n_states, n_actions))
    g = np.empty((n_states, n_actions))
    bc = np.empty((m, m))
    ba = np.empty((m, m))
    d_c = np.empty(n)
    w_coef = np.empty(n)
    d_b = np.empty(n)
    d_u = np.empty((n, d))
    kq = np.empty(m)
    for k in range(k0, k1):
        tk = k / n
        zeta = 1.0 / (1.0 + tk)
        lg = math.log(tk + 1.0)
        eta = 1.0 / (1.0 + lg * lg)

        _activate(zw, sw)
        _activate(zu, su)
        for j in range(m):
            acc_q = 0.0
            acc_p = 0.0
            for i in range(n):
                acc_q += C[i] * sw[i, j]
                acc_p += B[i] * su[i, j]
            q[j] = acc_q / sqrt_n
            logits[j] = acc_p / sqrt_n
        for x in range(n_states):
            mx = logits[x * n_actions]
            for a in range(1, n_actions):
                mx = max(mx, logits[x * n_actions + a])
            tot = 0.0
            for a in range(n_actions):
                f[x, a] = math.exp(logits[x * n_actions + a] - mx)
                tot += f[x, a]
            for a in range(n_actions):
                f[x, a] /= tot
                g[x, a] = eta / n_actions + (1.0 - eta) * f[x, a]

        x1 = inverse_cdf(p_next[xi], uniforms[k - k0, 0])
        xi1 = x1 * n_actions + inverse_cdf(g[x1], uniforms[k - k0, 1])
        xt1 = inverse_cdf(pt_next[xti], uniforms[k - k0, 2])
        xti1 = xt1 * n_actions + inverse_cdf(g[xt1], uniforms[k - k0, 3])

        td = reward[xi] + gamma * q[xi1] - q[xi]
        crate = alpha * scale * td
        xt = xti // n_actions
        base = xt * n_actions
        qt = min(max(q[xti], 0.0), 2.0)
        arate = zeta * scale * qt
        max_c = 0.0
        max_w = 0.0
        max_b = 0.0
        max_u = 0.0
        norm_xi = 0.0
        for c in range(d):
            norm_xi += emb[xi, c] * emb[xi, c]
        norm_xi = math.sqrt(norm_xi)
        for i in range(n):
            s_k = sw[i, xi]
            d_c[i] = crate * s_k
            w_coef[i] = crate * C[i] * s_k * (1.0 - s_k)
            mean_s = 0.0
            for a in range(n_actions):
                mean_s += f[xt, a] * su[i, base + a]
            d_b[i] = arate * (su[i, xti] - mean_s)
            s_t = su[i, xti]
            ds_t = s_t * (1.0 - s_t)
            for c in range(d):
                e_sum = 0.0
                for a in range(n_actions):
                    sa = su[i, base + a]
                    e_sum += f[xt, a] * sa * (1.0 - sa) * emb[base + a, c]
                d_u[i, c] = arate * B[i] * (ds_t * emb[xti, c] - e_sum)
            max_c = max(max_c, abs(d_c[i]))
            max_w = max(max_w, abs(w_coef[i]) * norm_xi)
            max_b = max(max_b, abs(d_b[i]))
            nu = 0.0
            for c in range(d):
                nu += d_u[i, c] * d_u[i, c]
            max_u = max(max_u, math.sqrt(nu))

        if track:
            _kernel_from_features(sw, C, gram, bc)
            _kernel_from_features(su, B, gram, ba)
            for jp in range(m):
                kq[jp] = 0.0
                for z in range(n_states):
                    inner_sum = 0.0
                    for a in range(n_actions):
                        inner_sum += g[z, a] * q[z * n_actions + a]
                    kq[jp] += p_next[jp, z] * inner_sum
            for j in range(m):
                v1 = 0.0
                v2 = 0.0
                v3 = 0.0
                for jp in range(m):
                    v1 += bc[j, jp] * q[jp] * pi[jp]
                    v2 += bc[j, jp] * reward[jp] * pi[jp]
                    v3 += bc[j, jp] * gamma * kq[jp] * pi[jp]
                col = bc[j, xi]
                acc[0, j] += (-q[xi] * col + v1) / n
                acc[1, j] += (reward[xi] * col - v2) / n
                acc[2, j] += (gamma * q[xi1] * col - v3) / n
                obs = ba[j, xti]
                for a in range(n_actions):
                    obs -= f[xt, a] * ba[j, base + a]
                obs *= qt
                expct = 0.0
                for x in range(n_states):
                    wsum = 0.0
                    for a in range(n_actions):
                        jj = x * n_actions + a
                        wsum += min(max(q[jj], 0.0), 2.0) * sig[jj]
                    for a in range(n_actions):
                        jj = x * n_actions + a
                        wj = min(max(q[jj], 0.0), 2.0) * sig[jj]
                        expct += ba[j, jj] * (wj - f[x, a] * wsum)
                acc[3, j] += zeta * (obs - expct) / n
        for j in range(m):
            acc[4, j] -= sig[j] / n
        acc[4, xti] += 1.0 / n

        inc_max[0] = max(inc_max[0], max_c)
        inc_max[1] = max(inc_max[1], max_w)
        inc_max[2] = max(inc_max[2], max_b)
        inc_max[3] = max(inc_max[3], max_u)

        for i in range(n):
            C[i] += d_c[i]
            B[i] += d_b[i]
            for c in range(d):
                W[i, c] += w_coef[i] * emb[xi, c]
                U[i, c] += d_u[i, c]
            s_t = su[i, xti]
            ds_t = s_t * (1.0 - s_t)
            cu = arate * (B[i] - d_b[i])
            for j in range(m):
                zw[i, j] += w_coef[i] * gram[xi, j]
                e_sum = 0.0
                for a in range(n_actions):
                    sa = su[i, base + a]
                    e_sum += f[xt, a] * sa * (1.0 - sa) * gram[base + a, j]
                zu[i, j] += cu * (ds_t * gram[xti, j] - e_sum)
        xi = xi1
        xti = xti1
    return xi, xti
