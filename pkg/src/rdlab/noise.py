"""Reproducible mode-wise Brownian increments.

Each (master_seed, trajectory_id) pair owns a counter-based substream: step j
reads a fixed block of raw 64-bit words at counter offset j, so any increment
is a pure function of (master_seed, trajectory_id, level, step) -- independent
of scheduling, consumption order, or thread count.  Normals are produced by
inverting the standard normal CDF on fixed-width uniforms (constant word
consumption per draw; rejection samplers would consume a variable number of
words and break random access).

The per-step block layout is 4*ceil(max(64, modes)/4) words, independent of
the requested mode count up to 64, so streams that differ only in their mode
count are nested: the first M components agree.  Mode-ladder couplings rely
on this.

Refinement halves dt by the Brownian bridge: fine increments (p/2 + Z, p/2 - Z)
around each parent increment p, with the midpoint displacements Z drawn from a
level-keyed substream, so coarse increments are exactly pairwise sums of fine
ones and every level remains individually addressable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

__all__ = ["NoiseStream", "increments", "all_increments", "refine", "derive_seed", "normal_array"]

_U53 = 2.0**-53


def _layout_width(modes: int) -> int:
    return 4 * ((max(modes, 64) + 3) // 4)


def _tag_word(tag) -> int:
    """Stable 32-bit word per tag: small ints pass through, anything else is
    hashed content-wise (never Python's salted hash)."""
    if isinstance(tag, (int, np.integer)) and 0 <= int(tag) < 2**32:
        return int(tag)
    blob = hashlib.sha256(repr(tag).encode()).digest()
    return int.from_bytes(blob[:4], "little")


def _philox(master_seed: int, spawn_key: tuple, counter: int) -> np.random.Philox:
    spawn_key = tuple(_tag_word(t) for t in spawn_key)
    key = np.random.SeedSequence(master_seed, spawn_key=spawn_key).generate_state(2, np.uint64)
    return np.random.Philox(counter=counter, key=key)


def _standard_rows(master_seed: int, spawn_key: tuple, step0: int, n_steps: int,
                   width: int, modes: int) -> np.ndarray:
    """Standard normals, rows = steps, columns = the first `modes` layout slots."""
    bg = _philox(master_seed, spawn_key, counter=step0 * (width // 4))
    raw = bg.random_raw(n_steps * width).reshape(n_steps, width)[:, :modes]
    return ndtri((raw >> np.uint64(11)).astype(np.float64) * _U53 + 0.5 * _U53)


def derive_seed(master_seed: int, *tags) -> int:
    """A decorrelated 63-bit sub-seed for an auxiliary purpose; tags may be
    ints or strings (strings are hashed content-wise)."""
    spawn_key = tuple(_tag_word(t) for t in tags)
    ss = np.random.SeedSequence(master_seed, spawn_key=spawn_key)
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def normal_array(master_seed: int, tags: tuple, shape: tuple) -> np.ndarray:
    """Deterministic standard-normal array for non-path sampling needs."""
    n = int(np.prod(shape, dtype=np.int64))
    bg = _philox(master_seed, tuple(tags), counter=0)
    n_pad = -(-n // 4) * 4
    raw = bg.random_raw(n_pad)[:n]
    return ndtri((raw >> np.uint64(11)).astype(np.float64) * _U53 + 0.5 * _U53).reshape(shape)


@dataclass(frozen=True)
class NoiseStream:
    """Mode-wise Brownian increments for one trajectory.

    dt is the step size at the current refinement level; level 0 is the stream
    as originally created.
    """

    master_seed: int
    trajectory_id: int
    modes: int
    dt: float
    level: int = 0

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("need at least one noise mode")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def _width(self) -> int:
        return _layout_width(self.modes)

    def _spawn_key(self) -> tuple:
        return (self.trajectory_id, self.level)


def increments(stream: NoiseStream, step: int) -> np.ndarray:
    """Increments (one per mode) for a single step; N(0, dt) components."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return _increment_rows(stream, step, 1)[0]


def all_increments(stream: NoiseStream, n_steps: int) -> np.ndarray:
    """Increments for steps 0..n_steps-1, shape (n_steps, modes)."""
    return _increment_rows(stream, 0, n_steps)


def _increment_rows(stream: NoiseStream, step0: int, n_steps: int) -> np.ndarray:
    if stream.level == 0:
        z = _standard_rows(stream.master_seed, stream._spawn_key(), step0, n_steps,
                           stream._width, stream.modes)
        return np.sqrt(stream.dt) * z
    parent = replace(stream, level=stream.level - 1, dt=2.0 * stream.dt)
    p0, p1 = step0 // 2, (step0 + n_steps - 1) // 2
    coarse = _increment_rows(parent, p0, p1 - p0 + 1)
    z = _standard_rows(stream.master_seed, stream._spawn_key(), p0, p1 - p0 + 1,
                       stream._width, stream.modes)
    # midpoint displacement has variance dt_parent/4 = dt/2
    mid = np.sqrt(0.5 * stream.dt) * z
    fine = np.empty((2 * (p1 - p0 + 1), stream.modes))
    fine[0::2] = 0.5 * coarse + mid
    fine[1::2] = 0.5 * coarse - mid
    lo = step0 - 2 * p0
    return fine[lo:lo + n_steps]


def refine(stream: NoiseStream) -> NoiseStream:
    """The same Brownian path sampled at dt/2 (bridge-consistent)."""
    return replace(stream, level=stream.level + 1, dt=0.5 * stream.dt)
