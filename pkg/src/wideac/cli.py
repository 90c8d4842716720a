"""Command-line entry point: ``wideac <kind> --config <path> [--out <dir>] [--workers <n>]``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .config import KINDS, ExperimentConfig, ParseError, ValidationError, load_config
from .kernel import LimitKernel, estimate_limit_kernel, kernel_agreement, load_kernel, save_kernel
from .mdp import chain_kernel, objective, policy_gradient
from .nets import exploration_policy, init_params, make_rng, schedule_values_ct, softmax_policy
from .ode import (
    OdeRunConfig,
    OdeState,
    coupled_initial_state,
    critic_gap,
    gaussian_initial_state,
    grad_norm,
    integrate,
    lyapunov,
)
from .parallel import pmap
from .poisson import ergodicity_rate, fluctuation_decay_experiment, solve_poisson
from .trainer import TrainConfig, initial_state, measure_drift, phi_outer_squared, phi_tanh, run

OUT_ENV = "WIDEAC_OUT_DIR"
DEFAULT_OUT = "wideac_out"


def fmt(x) -> str:
    """Round-trip float formatting (17 significant digits)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# -- experiment kinds -------------------------------------------------------

def _train_cfg(cfg: ExperimentConfig, n: int, seed: int, horizon: float) -> TrainConfig:
    return TrainConfig(
        n, horizon, alpha=cfg.alpha, record_times=cfg.record_times(horizon), seed=seed,
        diagnostics_period=cfg.diagnostics_period, track_fluctuations=cfg.track_fluctuations,
    )


def _simulate_job(job):
    cfg, n, seed = job
    mdp = cfg.build_mdp()
    emb = cfg.build_embedding(mdp)
    res = run(mdp, emb, _train_cfg(cfg, n, seed, cfg.horizon_T))
    drift = {
        "c_squared": measure_drift(res.final_state.critic, res.initial_state.critic, phi_outer_squared),
        "tanh": measure_drift(res.final_state.critic, res.initial_state.critic, phi_tanh),
    }
    return res.trajectory, res.fluctuations, res.increments, drift


def _simulate(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    jobs = [(cfg, n, s) for n in cfg.n_hidden for s in cfg.seeds]
    results = pmap(_simulate_job, jobs, workers)
    inc_rows, drift_rows = [], []
    for (_, n, seed), (traj, fl, inc, drift) in zip(jobs, results):
        m = traj.q.shape[1]
        write_csv(
            out / f"simulate_N{n}_s{seed}.csv", ["t", "xi", "q", "p", "f", "g"],
            ([t, j, traj.q[i, j], traj.p[i, j], traj.f[i].reshape(-1)[j], traj.g[i].reshape(-1)[j]]
             for i, t in enumerate(traj.times) for j in range(m)),
        )
        write_csv(
            out / f"fluctuations_N{n}_s{seed}.csv", ["t", "xi", "m1", "m2", "m3", "mn", "occupancy"],
            ([t, j, fl.m1[i, j], fl.m2[i, j], fl.m3[i, j], fl.mn[i, j], fl.occupancy[i, j]]
             for i, t in enumerate(fl.times) for j in range(m)),
        )
        sc = inc.scaled(n)
        inc_rows.append([n, seed, inc.max_dc, inc.max_dw, inc.max_db, inc.max_du, sc["dc_N"], sc["db_N32"]])
        drift_rows += [[n, seed, name, val] for name, val in drift.items()]
    write_csv(out / "increments.csv",
              ["n_hidden", "seed", "max_dc", "max_dw", "max_db", "max_du", "dc_times_N", "db_times_N32"],
              inc_rows)
    write_csv(out / "drift.csv", ["n_hidden", "seed", "phi", "drift"], drift_rows)


def _kernel_for(cfg: ExperimentConfig, emb: np.ndarray, workers: int = 1) -> LimitKernel:
    if cfg.kernel_path:
        kern, dim = load_kernel(cfg.kernel_path)
        if dim != emb.shape[1] or kern.n_pairs != emb.shape[0]:
            raise ValidationError("stored kernel does not match the embedding", field="kernel_path")
        return kern
    return estimate_limit_kernel(emb, cfg.mc_samples, cfg.kernel_seed, workers=workers)


def _ode_rows(traj, mdp, kern):
    m = traj.q.shape[1]
    for i, t in enumerate(traj.times):
        st = traj.state(i)
        zeta, eta = schedule_values_ct(t)
        yield [t, *st.q, *st.p_logits, critic_gap(st, mdp), grad_norm(st, mdp),
               lyapunov(st, mdp, kern), eta, zeta,
               objective(mdp, softmax_policy(st.p_logits, mdp.n_actions))]


def _ode(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    mdp = cfg.build_mdp()
    emb = cfg.build_embedding(mdp)
    kern = _kernel_for(cfg, emb, workers)
    seed = cfg.seeds[0]
    if cfg.ode_init == "zero":
        state0 = OdeState(np.zeros(mdp.n_pairs), np.zeros(mdp.n_pairs))
    elif cfg.ode_init == "gaussian":
        state0 = gaussian_initial_state(emb, seed)
    else:
        st = initial_state(mdp, emb, TrainConfig(cfg.n_hidden[0], 1.0, seed=seed))
        state0 = coupled_initial_state(st.critic, st.actor, emb)
    ocfg = OdeRunConfig(kern, cfg.t_end, cfg.dt, cfg.alpha, cfg.record_times(cfg.t_end))
    traj = integrate(state0, ocfg, mdp)
    m = mdp.n_pairs
    header = (["t"] + [f"q{j}" for j in range(m)] + [f"p{j}" for j in range(m)]
              + ["critic_gap", "grad_norm", "lyapunov", "eta", "zeta", "objective"])
    write_csv(out / "ode.csv", header, _ode_rows(traj, mdp, kern))


def _compare_job(job):
    cfg, kern, n, seed = job
    mdp = cfg.build_mdp()
    emb = cfg.build_embedding(mdp)
    tcfg = replace(_train_cfg(cfg, n, seed, cfg.horizon_T), track_fluctuations=False)
    res = run(mdp, emb, tcfg)
    state0 = coupled_initial_state(res.initial_state.critic, res.initial_state.actor, emb)
    ocfg = OdeRunConfig(kern, cfg.horizon_T, cfg.dt, cfg.alpha, tuple(res.trajectory.steps / n))
    lim = integrate(state0, ocfg, mdp)
    q_gap = float(np.max(np.abs(res.trajectory.q - lim.q)))
    p_gap = float(np.max(np.abs(res.trajectory.p - lim.p)))
    return q_gap, p_gap, res.increments, measure_drift(
        res.final_state.critic, res.initial_state.critic, phi_outer_squared)


def compare_sweep(cfg: ExperimentConfig, kern: LimitKernel, workers: int = 1):
    """Per ``(N, seed)``: sup over the grid of the pre-limit vs limit gaps."""
    jobs = [(cfg, kern, n, s) for n in cfg.n_hidden for s in cfg.seeds]
    return jobs, pmap(_compare_job, jobs, workers)


def _compare(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    mdp = cfg.build_mdp()
    kern = _kernel_for(cfg, cfg.build_embedding(mdp), workers)
    jobs, results = compare_sweep(cfg, kern, workers)
    rows = [[n, s, q, p, inc.max_dc * n, inc.max_db * n**1.5, dr]
            for (_, _, n, s), (q, p, inc, dr) in zip(jobs, results)]
    write_csv(out / "compare.csv",
              ["n_hidden", "seed", "sup_q_gap", "sup_p_gap", "dc_times_N", "db_times_N32", "drift_c_squared"],
              rows)
    summary = []
    for n in cfg.n_hidden:
        block = np.array([r[2:] for r in rows if r[0] == n], dtype=float)
        summary.append([n, len(block), *block.mean(axis=0)])
    write_csv(out / "compare_summary.csv",
              ["n_hidden", "n_seeds", "mean_q_gap", "mean_p_gap", "mean_dc_times_N",
               "mean_db_times_N32", "mean_drift_c_squared"], summary)


def _kernel(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    mdp = cfg.build_mdp()
    emb = cfg.build_embedding(mdp)
    kern = _kernel_for(cfg, emb, workers)
    save_kernel(out / "kernel.csv", kern, emb.shape[1])
    write_csv(out / "kernel_eigenvalues.csv", ["index", "eigenvalue"], enumerate(kern.eigenvalues()))
    rows = []
    for n in cfg.n_hidden:
        for s in cfg.seeds:
            params = init_params(n, emb.shape[1], "critic", np.random.SeedSequence(s).spawn(1)[0])
            rows.append([n, s, kernel_agreement(params, kern, emb)])
    write_csv(out / "kernel_agreement.csv", ["n_hidden", "seed", "agreement"], rows)


def _poisson(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    mdp = cfg.build_mdp()
    uniform = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    k = chain_kernel(mdp, exploration_policy(uniform, cfg.poisson_eta))
    est = ergodicity_rate(k, cfg.poisson_n_max)
    write_csv(out / "tv_curve.csv", ["n", "sup_tv"], enumerate(est.tv_curve))
    sols = [solve_poisson(k, j) for j in range(k.size)]
    write_csv(out / "poisson.csv", ["target", "xi", "nu"],
              ([s.target, j, v] for s in sols for j, v in enumerate(s.values)))
    write_csv(out / "ergodicity.csv",
              ["n0", "beta", "rate", "r_squared", "min_pi", "max_residual"],
              [[est.n0, est.beta, est.rate, est.r_squared, est.min_pi, max(s.residual for s in sols)]])


def _gradcheck(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    mdp = cfg.build_mdp()
    h = cfg.gradcheck_h
    rows = []
    for seed in cfg.seeds:
        logits = make_rng(seed).normal(size=(mdp.n_states, mdp.n_actions))
        grad = policy_gradient(mdp, logits).reshape(-1)
        for j in range(mdp.n_pairs):
            e = np.zeros(mdp.n_pairs)
            e[j] = h
            e = e.reshape(logits.shape)
            fd = (objective(mdp, softmax_policy(logits + e)) - objective(mdp, softmax_policy(logits - e))) / (2 * h)
            rel = abs(grad[j] - fd) / max(abs(fd), abs(grad[j]), 1e-12)
            rows.append([seed, j, grad[j], fd, rel])
    write_csv(out / "gradcheck.csv", ["seed", "xi", "analytic", "finite_diff", "rel_error"], rows)


def _fluct_sweep(cfg: ExperimentConfig, out: Path, workers: int) -> None:
    mdp = cfg.build_mdp()
    emb = cfg.build_embedding(mdp)
    table = fluctuation_decay_experiment(
        mdp, emb, cfg.n_hidden, cfg.seeds, cfg.horizon_T, cfg.alpha, workers=workers
    )
    write_csv(out / "fluctuation_sweep.csv", ["n_hidden", "xi", "mean_sq", "stderr_sq"],
              ([r.n_hidden, j, r.mean_sq[j], r.stderr_sq[j]] for r in table for j in range(len(r.mean_sq))))
    write_csv(out / "fluctuation_summary.csv", ["n_hidden", "n_seeds", "total_mean_sq"],
              ([r.n_hidden, r.n_seeds, r.total] for r in table))


RUNNERS = {
    "simulate": _simulate,
    "ode": _ode,
    "compare": _compare,
    "kernel": _kernel,
    "poisson-check": _poisson,
    "gradcheck": _gradcheck,
    "fluctuation-sweep": _fluct_sweep,
}


def write_manifest(out: Path, cfg: ExperimentConfig) -> None:
    lines = [
        f"config_hash={cfg.digest()}",
        f"kind={cfg.kind}",
        f"seeds={','.join(str(s) for s in cfg.seeds)}",
        f"n_hidden={','.join(str(n) for n in cfg.n_hidden)}",
        f"kernel_seed={cfg.kernel_seed}",
        f"version={__version__}",
        f"backend={BACKEND}",
        f"timestamp={datetime.now(timezone.utc).isoformat(timespec='seconds')}",
    ]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, out: str | Path, workers: int = 1) -> Path:
    """Run ``cfg`` and write its CSVs plus ``manifest.txt`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    RUNNERS[cfg.kind](cfg, out, workers)
    write_manifest(out, cfg)
    return out


def _error_record(exc: BaseException, out: Path | None) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "field"):
        val = getattr(exc, attr, None)
        if val is not None:
            rec[attr] = val
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(rec, sort_keys=True) + "\n")
        except OSError:
            pass
    return rec


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wideac", description="Wide actor-critic experiments on finite MDPs.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    ap.add_argument("--workers", type=int, default=1, help="process pool size for sweeps")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = None
    try:
        cfg = load_config(args.config, kind=args.kind)
        out = Path(args.out or cfg.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)
        if args.workers < 1:
            raise ValidationError("worker count must be positive", field="workers")
        run_experiment(cfg, out, args.workers)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        print(json.dumps(_error_record(exc, out), sort_keys=True), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report anything as a record
        rec = _error_record(exc, out)
        rec["traceback"] = traceback.format_exc(limit=5)
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        return 1
    print(str(out))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
