"""Seeded Brownian paths on dyadic grids.

Increments are rounded to multiples of 2**-40. Every partial sum of such
numbers (at the magnitudes used here) is exactly representable, so cumulative
sums, pairwise coarsening and the endpoint w(T) are free of rounding error and
independent of summation order.
"""

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidFactor, InvalidSteps

QUANTUM = 2.0 ** -40
_HEADER = struct.Struct("<QdQ")


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (int(n) & (int(n) - 1)) == 0


def derive_seed(base_seed, role):
    """64-bit sub-seed from ``(base_seed, role)`` via BLAKE2b.

    ``role`` may be a string (named stream) or an integer (sample index).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(base_seed).to_bytes(8, "little", signed=False))
    h.update(str(role).encode())
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Brownian path sampled at ``n_steps`` equal steps on ``[0, T]``.

    Attributes
    ----------
    seed : int
        Seed of the finest-level draw (kept through coarsening).
    T : float
    n_steps : int
    increments : ndarray
        ``w(t_{i+1}) - w(t_i)``.
    """

    seed: int
    T: float
    n_steps: int
    increments: np.ndarray

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def cumulative(self):
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def value_at(self, step):
        """``w(t_step)``."""
        return float(np.sum(self.increments[:step]))

    def step_index(self, t):
        """Grid index of time ``t``; raises if ``t`` is off the grid."""
        k = t / self.dt
        i = int(round(k))
        if abs(k - i) > 1e-9 or i < 0 or i > self.n_steps:
            raise ValueError(f"time {t} is not on the path grid")
        return i


def sample_brownian(seed, T, n_steps):
    """Draw a Brownian path with ``n_steps`` increments of variance ``T/n_steps``.

    Raises
    ------
    InvalidSteps
        ``n_steps`` is not a power of two or is smaller than 2.
    """
    if not is_power_of_two(n_steps) or n_steps < 2:
        raise InvalidSteps(f"n_steps={n_steps} must be a power of two >= 2")
    rng = np.random.default_rng(int(seed))
    inc = rng.standard_normal(n_steps) * np.sqrt(T / n_steps)
    inc = np.round(inc / QUANTUM) * QUANTUM
    return BrownianPath(int(seed), float(T), int(n_steps), inc)


def zero_path(T, n_steps):
    """Path with ``w == 0``."""
    if not is_power_of_two(n_steps):
        raise InvalidSteps(f"n_steps={n_steps} must be a power of two")
    return BrownianPath(0, float(T), int(n_steps), np.zeros(n_steps))


def coarsen(path, factor):
    """Sum increments in consecutive blocks of ``factor``.

    Raises
    ------
    InvalidFactor
        ``factor`` is not a power of two dividing ``n_steps``.
    """
    if not is_power_of_two(factor) or path.n_steps % factor:
        raise InvalidFactor(f"factor={factor} must be a power of two dividing {path.n_steps}")
    inc = path.increments
    f = factor
    while f > 1:
        inc = inc[0::2] + inc[1::2]
        f //= 2
    return BrownianPath(path.seed, path.T, path.n_steps // factor, inc)


def truncate(path, steps):
    """First ``steps`` increments of a path (horizon shortened accordingly)."""
    return BrownianPath(path.seed, path.dt * steps, steps, path.increments[:steps].copy())


def reversed_increments(path, step):
    """Increments ``step-1, ..., 0`` in backward order."""
    return path.increments[:step][::-1]


def path_bytes(path):
    """Little-endian binary layout: seed u64, T f64, n_steps u64, increments f64."""
    return _HEADER.pack(path.seed, path.T, path.n_steps) + path.increments.astype("<f8").tobytes()


def path_from_bytes(data):
    seed, T, n = _HEADER.unpack_from(data, 0)
    inc = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=n).astype(float)
    return BrownianPath(seed, T, n, inc)


def export_path(path, stem):
    """Write ``<stem>.bin`` and ``<stem>.json`` (manifest with SHA-256)."""
    data = path_bytes(path)
    with open(f"{stem}.bin", "wb") as fh:
        fh.write(data)
    manifest = {"seed": path.seed, "T": path.T, "n_steps": path.n_steps,
                "sha256": hashlib.sha256(data).hexdigest(), "layout": "<QdQ + <f8[n_steps]"}
    with open(f"{stem}.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def import_path(stem):
    """Read a path written by :func:`export_path`, verifying the hash."""
    with open(f"{stem}.bin", "rb") as fh:
        data = fh.read()
    with open(f"{stem}.json") as fh:
        manifest = json.load(fh)
    if hashlib.sha256(data).hexdigest() != manifest["sha256"]:
        raise ValueError(f"content hash mismatch for {stem}.bin")
    return path_from_bytes(data)
