"""Deterministic fan-out of trajectory batches over threads.

Work is split into fixed-size id chunks before any thread starts, each chunk
is computed independently (the noise is a pure function of trajectory id), and
results are concatenated in chunk order.  The output is therefore a function
of (seed, chunk_size) alone — bit-identical for any thread count.  Threads
suffice because the heavy kernels (FFTs, ufuncs) release the GIL.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["map_trajectories", "mc_mean", "block_se"]

DEFAULT_CHUNK = 256


def map_trajectories(n_traj: int, worker, threads: int = 1,
                     chunk_size: int = DEFAULT_CHUNK) -> dict[str, np.ndarray]:
    """worker(start, stop) -> dict of arrays with leading dim (stop - start);
    returns the same dict with chunks concatenated in id order."""
    if n_traj <= 0:
        raise ValueError(f"need n_traj >= 1, got {n_traj}")
    bounds = [(s, min(s + chunk_size, n_traj)) for s in range(0, n_traj, chunk_size)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda se: worker(*se), bounds))
    else:
        parts = [worker(*se) for se in bounds]
    return {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}


def mc_mean(values: np.ndarray) -> tuple[float, float, int]:
    """(mean, standard error, usable count) over axis 0, dropping NaN samples."""
    values = np.asarray(values, dtype=float)
    good = values[np.isfinite(values)]
    n = good.size
    if n == 0:
        return float("nan"), float("inf"), 0
    if n == 1:
        return float(good[0]), float("inf"), 1
    return float(good.mean()), float(good.std(ddof=1) / np.sqrt(n)), n


def block_se(values: np.ndarray, groups: np.ndarray | None = None,
             target_blocks: int = 16) -> float:
    """Standard error of the mean for serially correlated samples, by block means.

    Values from one MCMC chain are correlated, so the iid formula understates
    the error; block means over contiguous stretches (within a chain, when
    `groups` gives chain labels) are nearly independent and their spread gives
    an honest SE.
    """
    values = np.asarray(values, dtype=float)
    if groups is None:
        groups = np.zeros(len(values), dtype=int)
    groups = np.asarray(groups)
    labels = np.unique(groups)
    per_group = max(2, -(-target_blocks // len(labels)))
    means = []
    for lab in labels:
        vals = values[groups == lab]
        vals = vals[np.isfinite(vals)]
        if len(vals) == 0:
            continue
        for chunk in np.array_split(vals, min(per_group, len(vals))):
            if len(chunk):
                means.append(chunk.mean())
    if len(means) < 2:
        return float("inf")
    means = np.asarray(means)
    return float(means.std(ddof=1) / np.sqrt(len(means)))
