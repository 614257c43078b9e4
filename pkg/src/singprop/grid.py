"""Periodic grids, grid functions and initial data.

Spectral convention: ``u_hat = fft(u) / N**d``, so that
``u(x_j) = sum_k u_hat_k exp(i xi_k . x_j)`` with ``xi_k = 2 pi k / L``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .brownian import is_power_of_two


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on ``[0, L)^d``."""

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d = 1 or 2 is supported")
        if not is_power_of_two(self.N):
            raise ValueError(f"N={self.N} must be a power of two")
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self):
        return self.L / self.N

    @property
    def shape(self):
        return (self.N,) * self.d

    @cached_property
    def axis(self):
        return np.arange(self.N) * self.dx

    @cached_property
    def nodes(self):
        """``(N,)`` for d = 1, ``(2, N, N)`` for d = 2."""
        if self.d == 1:
            return self.axis
        return np.stack(np.meshgrid(self.axis, self.axis, indexing="ij"))

    @cached_property
    def modes(self):
        """Integer mode numbers in FFT order (``[-N/2, N/2)`` as a set)."""
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        if self.d == 1:
            return k
        return np.stack(np.meshgrid(k, k, indexing="ij"))

    @cached_property
    def freqs(self):
        """Angular frequencies ``2 pi k / L`` in FFT order."""
        return 2 * np.pi / self.L * self.modes

    def mode_norm(self):
        m = self.modes
        return np.abs(m) if self.d == 1 else np.sqrt(np.sum(m * m, axis=0))

    def periodic_distance(self, a, b):
        """Signed periodic difference ``a - b`` mapped to ``[-L/2, L/2)``."""
        return (np.asarray(a) - np.asarray(b) + self.L / 2) % self.L - self.L / 2

    def to_dict(self):
        return {"d": self.d, "N": self.N, "L": self.L}


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on a :class:`PeriodicGrid`."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @cached_property
    def spectrum(self):
        return np.fft.fftn(self.values) / self.grid.N ** self.grid.d

    @classmethod
    def from_spectrum(cls, grid, coeffs):
        return cls(grid, np.fft.ifftn(coeffs) * grid.N ** grid.d)

    def l2(self):
        """Continuum L2 norm approximated by the grid sum."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dx ** self.grid.d))

    def sup(self):
        return float(np.max(np.abs(self.values)))


def sobolev_norm(u, s):
    """``(L^d sum_k (1 + |xi_k|^2)^s |u_hat_k|^2)^(1/2)``.

    With this normalization ``s = 0`` equals the grid L2 norm
    ``(dx^d sum_j |u_j|^2)^(1/2)`` (Parseval), and a single mode
    ``exp(i xi x)`` has norm ``sqrt(L^d)``.
    """
    g = u.grid
    xi = g.freqs
    xi2 = xi * xi if g.d == 1 else np.sum(xi * xi, axis=0)
    return float(np.sqrt(g.L ** g.d * np.sum((1.0 + xi2) ** s * np.abs(u.spectrum) ** 2)))


def bandlimit(u, fraction=1.0 / 3.0):
    """Project onto modes with ``|k| <= fraction * N`` (per axis)."""
    g = u.grid
    keep = np.abs(g.modes) <= fraction * g.N
    if g.d == 2:
        keep = keep[0] & keep[1]
    return GridFunction.from_spectrum(g, np.where(keep, u.spectrum, 0.0))


def trig_interpolate(u, points, chunk=256):
    """Evaluate the trigonometric interpolant of ``u`` (d = 1) at ``points``.

    The Nyquist mode is split symmetrically (cosine), so real data give
    real interpolants.
    """
    g = u.grid
    if g.d != 1:
        raise ValueError("trigonometric interpolation implemented for d = 1")
    pts = np.asarray(points, dtype=float)
    flat = pts.ravel()
    c = u.spectrum.copy()
    xi = g.freqs.copy()
    nyq = g.N // 2
    c_nyq = c[nyq]
    c[nyq] = 0.0
    out = np.empty(flat.shape, dtype=complex)
    for s in range(0, flat.size, chunk):
        seg = flat[s:s + chunk]
        out[s:s + chunk] = np.exp(1j * np.outer(seg, xi)) @ c + c_nyq * np.cos(np.pi * g.N / g.L * seg)
    return out.reshape(pts.shape)


# ----------------------------------------------------------------- initial data


def gaussian(grid, center=None, width=1.0, images=2):
    """Periodized Gaussian ``sum_m exp(-|x - c - m L|^2 / (2 width^2))``."""
    c = grid.L / 2 if center is None else center
    c = np.broadcast_to(np.asarray(c, dtype=float), (grid.d,))
    x = grid.nodes
    val = np.zeros(grid.shape)
    shifts = range(-images, images + 1)
    if grid.d == 1:
        for m in shifts:
            val += np.exp(-((x - c[0] - m * grid.L) ** 2) / (2 * width ** 2))
    else:
        for m1 in shifts:
            for m2 in shifts:
                r2 = (x[0] - c[0] - m1 * grid.L) ** 2 + (x[1] - c[1] - m2 * grid.L) ** 2
                val += np.exp(-r2 / (2 * width ** 2))
    return GridFunction(grid, val)


def step(grid, x0=None):
    """``H(x - x0)`` on ``[0, L)``; jumps up at ``x0`` and down at the seam 0."""
    x0 = grid.L / 2 if x0 is None else x0
    if grid.d != 1:
        raise ValueError("step datum is one-dimensional")
    return GridFunction(grid, (grid.nodes >= x0 - 1e-12 * grid.L).astype(float))


def kink(grid, x0=None, width=None):
    """``|x - x0| exp(-(x - x0)^2 / width^2)``: a single corner at ``x0``."""
    x0 = grid.L / 2 if x0 is None else x0
    width = grid.L / 16 if width is None else width
    if grid.d != 1:
        raise ValueError("kink datum is one-dimensional")
    r = grid.periodic_distance(grid.nodes, x0)
    return GridFunction(grid, np.abs(r) * np.exp(-(r / width) ** 2))


def line_singularity_2d(grid, a=None, width=None):
    """``H(x1 - a) exp(-(x1 - a)^2 / width^2)``: smooth except on the line ``x1 = a``."""
    if grid.d != 2:
        raise ValueError("line singularity datum is two-dimensional")
    a = grid.L / 2 if a is None else a
    width = grid.L / 8 if width is None else width
    r = grid.periodic_distance(grid.nodes[0], a)
    return GridFunction(grid, (r >= 0) * np.exp(-(r / width) ** 2))


def plane_wave(grid, k=3):
    """``exp(i xi_k . x)`` for integer mode ``k`` (scalar or per axis)."""
    k = np.broadcast_to(np.asarray(k, dtype=float), (grid.d,))
    x = grid.nodes
    phase = 2 * np.pi / grid.L * (k[0] * x if grid.d == 1 else k[0] * x[0] + k[1] * x[1])
    return GridFunction(grid, np.exp(1j * phase))


DATA = {
    "gaussian": gaussian,
    "step": step,
    "kink": kink,
    "line_singularity_2d": line_singularity_2d,
    "plane_wave": plane_wave,
}
