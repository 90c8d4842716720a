"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py`` (lines go to stdout).
Criteria 4, 8 and 9 share one training sweep; 5 and 6 share one ODE run.
"""
from __future__ import annotations

import functools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import finite_difference_gradient, rollout_values  # noqa: E402
from wideac import cli  # noqa: E402
from wideac.config import parse_config  # noqa: E402
from wideac.fixtures import chain3, random_mdp  # noqa: E402
from wideac.kernel import estimate_limit_kernel, kernel_agreement  # noqa: E402
from wideac.mdp import (  # noqa: E402
    chain_kernel,
    objective,
    policy_gradient,
    stationary_distribution,
    value_function,
)
from wideac.nets import (  # noqa: E402
    default_embedding,
    distinct_directions,
    exploration_policy,
    init_params,
    schedule_values_ct,
    softmax_policy,
)
from wideac.ode import (  # noqa: E402
    OdeRunConfig,
    coupled_initial_state,
    critic_gap,
    grad_norm,
    integrate,
    objective_at,
)
from wideac.poisson import ergodicity_rate, fluctuation_decay_experiment, solve_poisson  # noqa: E402
from wideac.trainer import TrainConfig, initial_state, measure_drift, run  # noqa: E402

pytestmark = pytest.mark.acceptance

REPORT: list[str] = []

SWEEP_N = (250, 1000, 4000)
SWEEP_SEEDS = range(20)
SWEEP_T = 5.0
GRID = tuple(round(0.1 * i, 10) for i in range(51))


def report(num: int, passed: bool, detail: str) -> bool:
    line = f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line, flush=True)
    return passed


@functools.lru_cache(maxsize=None)
def chain3_kernel():
    return estimate_limit_kernel(default_embedding(chain3()), 1_000_000, seed=0)


def random_mdps(count=20, seed0=100):
    return [random_mdp(1 + i % 5, 1 + (3 * i) % 5, seed=seed0 + i) for i in range(count)]


# -- 1 ----------------------------------------------------------------------------------

def criterion_1() -> bool:
    mdps = [chain3()] + random_mdps()
    worst_z, exceed, total, worst_res = 0.0, [], 0, 0.0
    for i, mdp in enumerate(mdps):
        f = softmax_policy(np.random.default_rng(i).normal(size=(mdp.n_states, mdp.n_actions)))
        v = value_function(mdp, f)
        mean, se, bias = rollout_values(mdp, f, 100_000, seed=1000 + i)
        dev = np.abs(mean - v)
        bad = dev > 3 * se + bias
        total += v.size
        exceed += [(i, int(j), float(dev[j] / se[j])) for j in np.nonzero(bad)[0]]
        ok = se > 0
        if ok.any():
            worst_z = max(worst_z, float(np.max(dev[ok] / se[ok])))
        k = chain_kernel(mdp, exploration_policy(f, 0.5)).matrix
        pi = stationary_distribution(k)
        worst_res = max(worst_res, float(np.max(np.abs(pi @ k - pi))))
    passed = not exceed and worst_res <= 1e-10
    return report(1, passed, f"{total} pairs, {len(exceed)} outside 3 SE {exceed}, max |z| {worst_z:.2f}, "
                             f"max stationary residual {worst_res:.1e}")


# -- 2 ----------------------------------------------------------------------------------

def criterion_2() -> bool:
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        mdp = random_mdp(int(rng.integers(1, 6)), int(rng.integers(2, 6)), seed=500 + seed)
        logits = rng.normal(size=(mdp.n_states, mdp.n_actions))
        fd = finite_difference_gradient(lambda p: objective(mdp, softmax_policy(p)), logits, h=1e-5)
        g = policy_gradient(mdp, logits)
        worst = max(worst, float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)))
    return report(2, worst < 1e-5, f"max relative error {worst:.2e} over 20 instances (bound 1e-5)")


# -- 3 ----------------------------------------------------------------------------------

def random_embeddings(count=20):
    rng = np.random.default_rng(2024)
    out = []
    while len(out) < count:
        m = int(rng.integers(2, 65))
        d = int(rng.integers(2, 13))
        emb = np.hstack([rng.normal(size=(m, d - 1)), np.ones((m, 1))])
        if distinct_directions(emb):
            out.append(emb)
    return out


def criterion_3() -> bool:
    lams = [chain3_kernel().min_eigenvalue]
    low = []
    for j, emb in enumerate(random_embeddings()):
        lams.append(estimate_limit_kernel(emb, 1_000_000, seed=j, check_pd=False).min_eigenvalue)
        if lams[-1] < 1e-8:
            low.append(f"{emb.shape[0]}x{emb.shape[1]}")
    emb = default_embedding(chain3())
    ns = np.array([100, 1_000, 10_000, 100_000])
    means = [np.mean([kernel_agreement(init_params(int(n), emb.shape[1], "critic", 7000 + s), chain3_kernel(), emb)
                      for s in range(10)]) for n in ns]
    slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    passed = min(lams) >= 1e-8 and -0.7 <= slope <= -0.3
    return report(3, passed, f"min eigenvalue {min(lams):.2e} over 21 kernels, chain3 {lams[0]:.2e}, "
                             f"{len(low)} below 1e-8 (M x d: {', '.join(low) or 'none'}); agreement slope {slope:.3f} "
                             f"(means {', '.join(f'{m:.2e}' for m in means)})")


# -- 4, 8, 9 ------------------------------------------------------------------------

def _sweep_job(n, seed):
    mdp = chain3()
    emb = default_embedding(mdp)
    cfg = TrainConfig(n, SWEEP_T, record_times=GRID, seed=seed, track_fluctuations=False, keep_params=True)
    res = run(mdp, emb, cfg)
    s0 = coupled_initial_state(res.initial_state.critic, res.initial_state.actor, emb)
    lim = integrate(s0, OdeRunConfig(chain3_kernel(), SWEEP_T, record_times=GRID), mdp)
    critic_t2 = res.params[2 * n][0]
    return {
        "q_gap": float(np.max(np.abs(res.trajectory.q - lim.q))),
        "p_gap": float(np.max(np.abs(res.trajectory.p - lim.p))),
        "dc_N": res.increments.max_dc * n,
        "db_N32": res.increments.max_db * n**1.5,
        "drift_T2": measure_drift(critic_t2, res.initial_state.critic),
    }


@functools.lru_cache(maxsize=None)
def convergence_sweep():
    table = {}
    for n in SWEEP_N:
        rows = [_sweep_job(n, s) for s in SWEEP_SEEDS]
        table[n] = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    return table


def criterion_4() -> bool:
    tab = convergence_sweep()
    ok = True
    parts = []
    for key in ("q_gap", "p_gap"):
        means = [tab[n][key] for n in SWEEP_N]
        dec = all(a > b for a, b in zip(means, means[1:]))
        half = means[-1] < 0.5 * means[0]
        ok &= dec and half
        parts.append(f"{key} means {', '.join(f'{m:.3e}' for m in means)}")
    return report(4, ok, "; ".join(parts))


def criterion_8() -> bool:
    tab = convergence_sweep()
    parts, ok = [], True
    for key in ("dc_N", "db_N32"):
        vals = [tab[n][key] for n in SWEEP_N]
        ratio = max(vals) / min(vals)
        ok &= ratio < 4
        parts.append(f"{key} {', '.join(f'{v:.3e}' for v in vals)} (spread {ratio:.2f}x)")
    return report(8, ok, "; ".join(parts) + " (bound < 4x)")


def criterion_9() -> bool:
    tab = convergence_sweep()
    lo, hi = tab[SWEEP_N[0]]["drift_T2"], tab[SWEEP_N[-1]]["drift_T2"]
    return report(9, hi < lo, f"seed-mean drift of c^2 at T=2: N=250 {lo:.3e}, N=4000 {hi:.3e}")


# -- 5, 6 ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def long_ode_run():
    mdp = chain3()
    emb = default_embedding(mdp)
    st = initial_state(mdp, emb, TrainConfig(1000, 1.0, seed=0))
    s0 = coupled_initial_state(st.critic, st.actor, emb)
    times = tuple(float(t) for t in range(201))
    return integrate(s0, OdeRunConfig(chain3_kernel(), 200.0, alpha=1.0, record_times=times), mdp)


def criterion_5() -> bool:
    mdp = chain3()
    traj = long_ode_run()
    gaps = np.array([critic_gap(traj.state(i), mdp) for i in range(len(traj))])
    t = traj.times
    tail = (t >= 100) & (t <= 200)
    etas = np.array([schedule_values_ct(x)[1] for x in t[tail]])
    slope = float(np.polyfit(t[tail], gaps[tail] / etas, 1)[0])
    g20, g200 = gaps[t == 20][0], gaps[t == 200][0]
    return report(5, g200 < g20 and slope <= 0,
                  f"critic gap t=20 {g20:.4f}, t=200 {g200:.4f}; slope of gap/eta on [100,200] {slope:.2e}")


def criterion_6() -> bool:
    mdp = chain3()
    traj = long_ode_run()
    t = traj.times
    g1 = grad_norm(traj.state(int(np.nonzero(t == 1)[0][0])), mdp)
    g200 = grad_norm(traj.state(int(np.nonzero(t == 200)[0][0])), mdp)
    idx = np.nonzero(t >= 50)[0]
    js = np.array([objective_at(traj.state(i), mdp) for i in idx])
    worst_drop = float(max(0.0, -np.min(np.diff(js))))
    passed = g200 < 0.1 * g1 and worst_drop <= 1e-4
    return report(6, passed, f"grad norm t=1 {g1:.4f}, t=200 {g200:.4f} (need < {0.1 * g1:.4f}); "
                             f"J t=50 {js[0]:.4f}, t=200 {js[-1]:.4f}, worst step drop {worst_drop:.1e}")


# -- 7 ----------------------------------------------------------------------------------

def criterion_7() -> bool:
    rng = np.random.default_rng(77)
    worst_res = 0.0
    for _ in range(100):
        m = int(rng.integers(2, 26))
        k = rng.dirichlet(np.ones(m), size=m)
        for xi in range(m):
            worst_res = max(worst_res, solve_poisson(k, xi).residual)
    worst_tv = 0.0
    for eps in (0.05, 0.2, 0.35):
        k = np.array([[1 - eps, eps], [eps, 1 - eps]])
        est = ergodicity_rate(k, n_max=60)
        exact = (1 - 2 * eps) ** np.arange(61) / 2
        worst_tv = max(worst_tv, float(np.max(np.abs(est.tv_curve - exact))), abs(est.rate - (1 - 2 * eps)))
    mdp = chain3()
    rows = fluctuation_decay_experiment(mdp, default_embedding(mdp), [250, 4000], range(50))
    small, large = rows[0].total, rows[1].total
    passed = worst_res <= 1e-8 and worst_tv <= 1e-6 and large < 0.25 * small
    return report(7, passed, f"max residual {worst_res:.1e}; two-state error {worst_tv:.1e}; "
                             f"occupancy deviation^2 N=250 {small:.3e}, N=4000 {large:.3e} "
                             f"(ratio {large / small:.3f}, need < 0.25)")


# -- 10 ---------------------------------------------------------------------------------

DETERMINISM_CONFIGS = {
    "simulate": "n_hidden = [50, 100]\nseeds = [0, 1]\nhorizon_T = 2.0",
    "ode": "mc_samples = 100000\nt_end = 2.0",
    "compare": "mc_samples = 100000\nn_hidden = [50]\nseeds = [0, 1]\nhorizon_T = 1.0",
    "kernel": "mc_samples = 100000\nn_hidden = [100, 1000]\nseeds = [0, 1]",
    "poisson-check": "",
    "gradcheck": "seeds = [0, 1]",
    "fluctuation-sweep": "n_hidden = [50, 100]\nseeds = [0, 1, 2]",
}


def criterion_10(tmp: Path) -> bool:
    differing = []
    for kind, extra in DETERMINISM_CONFIGS.items():
        cfg = parse_config(f'kind = "{kind}"\n{extra}\n[mdp]\nfixture = "chain3"\n')
        a = cli.run_experiment(cfg, tmp / kind / "a")
        b = cli.run_experiment(cfg, tmp / kind / "b")
        fa = {p.name: p.read_bytes() for p in a.glob("*.csv")}
        fb = {p.name: p.read_bytes() for p in b.glob("*.csv")}
        if fa != fb or not fa:
            differing.append(kind)
    return report(10, not differing, f"{len(DETERMINISM_CONFIGS)} experiment kinds re-run; "
                                     f"differing: {differing or 'none'}")


# -- pytest entry points --------------------------------------------------------------

def test_criterion_1_exact_solvers():
    assert criterion_1()


def test_criterion_2_policy_gradient():
    assert criterion_2()


def test_criterion_3_kernel_pd():
    assert criterion_3()


def test_criterion_4_prelimit_convergence():
    assert criterion_4()


def test_criterion_5_critic_rate():
    assert criterion_5()


def test_criterion_6_actor_stationarity():
    assert criterion_6()


def test_criterion_7_poisson_suite():
    assert criterion_7()


def test_criterion_8_increment_bounds():
    assert criterion_8()


def test_criterion_9_measure_stasis():
    assert criterion_9()


def test_criterion_10_determinism(tmp_path):
    assert criterion_10(tmp_path)


def main() -> int:
    import tempfile

    results = []
    with tempfile.TemporaryDirectory() as tmp:
        for num in range(1, 11):
            t0 = time.perf_counter()
            fn = globals()[f"criterion_{num}"]
            results.append(fn(Path(tmp)) if num == 10 else fn())
            print(f"             ({time.perf_counter() - t0:.0f} s)", flush=True)
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
