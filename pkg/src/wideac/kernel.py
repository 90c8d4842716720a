"""Monte Carlo estimation of the infinite-width tangent kernel ``A``."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nets import WideNetParams, init_params, sigmoid
from ._backend import kernels

PD_THRESHOLD = 1e-8
DEFAULT_MC_SAMPLES = 1_000_000
DEFAULT_BLOCK = 100_000


class PDCheckFailed(RuntimeError):
    """Estimated kernel is not numerically positive definite."""


@dataclass(frozen=True)
class LimitKernel:
    """Symmetric ``M x M`` kernel estimate with per-entry standard errors."""

    a: np.ndarray
    mc_samples: int
    seed: int
    stderr: np.ndarray | None = field(default=None, compare=False)

    @property
    def n_pairs(self) -> int:
        return self.a.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.a)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])


def _block_moments(emb: np.ndarray, n: int, seed: np.random.SeedSequence):
    """Sum and sum of squares of the per-sample kernel contribution."""
    draw = init_params(n, emb.shape[1], "critic", seed)
    s = sigmoid(draw.inner @ emb.T)
    ds = s * (1.0 - s) * draw.outer[:, None]
    gram = emb @ emb.T
    total = s.T @ s + (ds.T @ ds) * gram
    s2, ds2, mix = s * s, ds * ds, s * ds
    squares = s2.T @ s2 + 2.0 * gram * (mix.T @ mix) + gram**2 * (ds2.T @ ds2)
    return total, squares


def estimate_limit_kernel(
    emb: np.ndarray,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    *,
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
    check_pd: bool = True,
) -> LimitKernel:
    """Estimate ``A`` by averaging tangent features over the initialization law.

    Parameters
    ----------
    emb : ndarray, shape (M, d)
        Embedded state-action pairs.
    mc_samples : int
        Number of ``(c, w)`` draws, at least ``10**4``.
    seed : int
        Root seed; block ``j`` uses the ``j``-th spawned child.
    workers : int
        Threads used for blocks.  The reduction order is fixed, so the
        result does not depend on this value.
    check_pd : bool
        Raise :class:`PDCheckFailed` when the smallest eigenvalue is below
        ``1e-8``.
    """
    emb = np.asarray(emb, dtype=float)
    if mc_samples < 10_000:
        raise ValueError(f"mc_samples must be at least 1e4, got {mc_samples}")
    n_blocks = math.ceil(mc_samples / block_size)
    sizes = [block_size] * (n_blocks - 1) + [mc_samples - block_size * (n_blocks - 1)]
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    jobs = list(zip(sizes, children))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda job: _block_moments(emb, *job), jobs))
    else:
        parts = [_block_moments(emb, *job) for job in jobs]
    m = emb.shape[0]
    total = np.zeros((m, m))
    squares = np.zeros((m, m))
    for t, sq in parts:
        total += t
        squares += sq
    mean = total / mc_samples
    var = np.maximum(squares / mc_samples - mean**2, 0.0)
    stderr = np.sqrt(var / (mc_samples - 1))
    a = 0.5 * (mean + mean.T)
    kern = LimitKernel(a, mc_samples, seed, stderr)
    if check_pd:
        lam = kern.min_eigenvalue
        if lam < PD_THRESHOLD:
            raise PDCheckFailed(
                f"minimum eigenvalue {lam:.3e} is below {PD_THRESHOLD:g}; "
                "increase mc_samples or check that embedded pairs have distinct directions"
            )
    return kern


def kernel_agreement(params: WideNetParams, kernel: LimitKernel, emb: np.ndarray) -> float:
    """Largest entrywise gap between the empirical kernel of ``params`` and ``A``."""
    emb = np.asarray(emb, dtype=float)
    b = kernels.empirical_kernel(params.outer, params.inner, emb)
    return float(np.max(np.abs(b - kernel.a)))


def save_kernel(path: str | Path, kernel: LimitKernel, dim: int) -> None:
    """CSV with a ``#`` header line carrying M, d, mc_samples and seed."""
    path = Path(path)
    m = kernel.n_pairs
    lines = [f"# M={m},d={dim},mc_samples={kernel.mc_samples},seed={kernel.seed}"]
    lines.append(",".join(f"a{j}" for j in range(m)))
    lines += [",".join(format(v, ".17g") for v in row) for row in kernel.a]
    path.write_text("\n".join(lines) + "\n")


def load_kernel(path: str | Path) -> tuple[LimitKernel, int]:
    """Inverse of :func:`save_kernel`; returns the kernel and embedding dimension."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing kernel header line")
    meta = dict(item.split("=", 1) for item in text[0][1:].strip().split(","))
    a = np.array([[float(v) for v in line.split(",")] for line in text[2:] if line])
    m = int(meta["M"])
    if a.shape != (m, m):
        raise ValueError(f"{path}: header says M={m}, matrix is {a.shape}")
    return LimitKernel(a, int(meta["mc_samples"]), int(meta["seed"])), int(meta["d"])
