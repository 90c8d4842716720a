"""Time the numba and numpy training kernels on chain3.

Usage: python benchmarks/bench_kernels.py [--widths 250 1000 4000] [--steps 2000]

Both backends run the same steps from the same state; the script reports
seconds per step, the speedup, and the largest parameter difference.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from wideac import _backend
from wideac.fixtures import chain3
from wideac.nets import default_embedding
from wideac.trainer import TrainConfig, initial_state, run


def time_backend(backend: str, n: int, steps: int, repeats: int):
    mdp = chain3()
    emb = default_embedding(mdp)
    cfg = TrainConfig(n, steps / n, record_times=(steps / n,), seed=0, backend=backend)
    state = initial_state(mdp, emb, cfg)
    run(mdp, emb, TrainConfig(n, 2 / n, seed=0, backend=backend), state)  # warm-up and JIT
    best = float("inf")
    res = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = run(mdp, emb, cfg, state)
        best = min(best, time.perf_counter() - t0)
    return best / cfg.n_steps, res


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--widths", type=int, nargs="+", default=[250, 1000, 4000])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    if not _backend.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'N':>6} {'numpy s/step':>14} {'numba s/step':>14} {'speedup':>8} {'max |diff|':>11}")
    for n in args.widths:
        t_np, r_np = time_backend("numpy", n, args.steps, args.repeats)
        t_nb, r_nb = time_backend("numba", n, args.steps, args.repeats)
        diff = max(
            np.max(np.abs(r_np.final_state.critic.inner - r_nb.final_state.critic.inner)),
            np.max(np.abs(r_np.final_state.actor.inner - r_nb.final_state.actor.inner)),
        )
        print(f"{n:>6} {t_np:>14.3e} {t_nb:>14.3e} {t_np / t_nb:>8.1f} {diff:>11.1e}")


if __name__ == "__main__":
    main()
