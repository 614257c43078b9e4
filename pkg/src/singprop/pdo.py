"""Kohn-Nirenberg quantization of symbols on periodic grids.

``Op(a)u(x_j) = sum_k a(t, x_j, xi_k) u_hat_k exp(i xi_k . x_j)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GridTooLarge
from .grid import GridFunction
from .symbols import cutoff, xi_norm

MAX_DIRECT = {1: 4096, 2: 256}


def regularized_values(a, t, x, xi, dim):
    """Symbol values with homogeneous symbols excised near ``xi = 0``.

    Homogeneous symbols that are not smooth at the origin are multiplied by
    ``1 - chi(2 |xi|)``, which vanishes for ``|xi| <= 1/2`` and equals 1 for
    ``|xi| >= 1``.
    """
    if not a.homogeneous or a.smooth_at_origin:
        return a.func(t, x, xi)
    r = xi_norm(xi, dim)
    w = 1.0 - cutoff(2.0 * r)
    safe = np.where(r > 0, xi, 1.0)
    return np.where(w > 0, w * a.func(t, x, safe), 0.0)


def _grid_freqs_flat(grid):
    xi = grid.freqs
    return xi if grid.d == 1 else xi.reshape(2, -1)


def _grid_nodes_flat(grid):
    x = grid.nodes
    return x if grid.d == 1 else x.reshape(2, -1)


def apply_pdo(a, t, u, block=128):
    """Direct Kohn-Nirenberg quantization, summed in row blocks.

    Raises
    ------
    GridTooLarge
        ``N`` above 4096 (d = 1) or 256 (d = 2).
    """
    g = u.grid
    if g.N > MAX_DIRECT[g.d]:
        raise GridTooLarge(f"direct quantization limited to N <= {MAX_DIRECT[g.d]} for d = {g.d}")
    c = u.spectrum.ravel()
    xi = _grid_freqs_flat(g)
    x = _grid_nodes_flat(g)
    n = c.size
    out = np.empty(n, dtype=complex)
    for s in range(0, n, block):
        if g.d == 1:
            xb = x[s:s + block, None]
            sym = regularized_values(a, t, xb, xi[None, :], 1)
            ph = np.exp(1j * xb * xi[None, :])
        else:
            xb = x[:, s:s + block, None]
            xib = xi[:, None, :]
            sym = regularized_values(a, t, xb, xib, 2)
            ph = np.exp(1j * (xb[0] * xib[0] + xb[1] * xib[1]))
        out[s:s + block] = (np.broadcast_to(sym, ph.shape) * ph) @ c
    return GridFunction(g, out.reshape(g.shape))


def apply_multiplier(a, t, u):
    """Fourier multiplier path for x-independent symbols (O(N log N))."""
    g = u.grid
    x0 = np.zeros_like(g.freqs[0]) if g.d == 2 else np.zeros_like(g.freqs)
    x0 = np.zeros((2,) + g.shape) if g.d == 2 else x0
    m = np.broadcast_to(regularized_values(a, t, x0, g.freqs, g.d), g.shape)
    return GridFunction.from_spectrum(g, m * u.spectrum)


@dataclass(frozen=True, eq=False)
class PdoOperator:
    """Precompiled quantization of a time-frozen symbol on a grid.

    The sampled symbol matrix ``S[j, k] = a(t, x_j, xi_k)`` is factored once:
    x-independent symbols become a Fourier multiplier, symbols of low
    separation rank become ``sum_r f_r(x_j) IFFT(g_r(xi) u_hat)``, and anything
    else falls back to the dense sum.
    """

    grid: object
    kind: str
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def compile(cls, a, grid, t=0.0, rank_tol=1e-13, max_rank=16):
        if grid.N > MAX_DIRECT[grid.d]:
            raise GridTooLarge(f"operator compilation limited to N <= {MAX_DIRECT[grid.d]}")
        x = _grid_nodes_flat(grid)
        xi = _grid_freqs_flat(grid)
        if grid.d == 1:
            S = np.broadcast_to(regularized_values(a, t, x[:, None], xi[None, :], 1),
                                (x.size, xi.size)).astype(complex)
        else:
            S = np.broadcast_to(regularized_values(a, t, x[:, :, None], xi[:, None, :], 2),
                                (x.shape[1], xi.shape[1])).astype(complex)
        row0 = S[0]
        if np.allclose(S, row0[None, :], rtol=0, atol=1e-15 * max(1.0, np.max(np.abs(S)))):
            return cls(grid, "multiplier", np.ones((1, S.shape[0])), row0[None, :].copy())
        U, sv, Vh = np.linalg.svd(S, full_matrices=False)
        r = int(np.sum(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
        if r <= max_rank:
            return cls(grid, "separable", (U[:, :r] * sv[:r]).T.copy(), Vh[:r].copy())
        return cls(grid, "dense", S, np.empty((0, 0)))

    def __call__(self, u):
        g = self.grid
        c = u.spectrum
        n = g.N ** g.d
        if self.kind == "dense":
            if g.d == 1:
                ph = np.exp(1j * np.outer(g.freqs, g.nodes)).T
                out = (self.left * ph) @ c
            else:
                xi = _grid_freqs_flat(g)
                x = _grid_nodes_flat(g)
                ph = np.exp(1j * (x[0][:, None] * xi[0][None, :] + x[1][:, None] * xi[1][None, :]))
                out = (self.left * ph) @ c.ravel()
            return GridFunction(g, out.reshape(g.shape))
        out = np.zeros(n, dtype=complex)
        for f, m in zip(self.left, self.right):
            out += f * (np.fft.ifftn(m.reshape(g.shape) * c) * n).ravel()
        return GridFunction(g, out.reshape(g.shape))

    def apply_values(self, values):
        """Apply to a raw value array (skips GridFunction bookkeeping)."""
        g = self.grid
        if self.kind == "dense":
            return self(GridFunction(g, values)).values
        c = np.fft.fftn(values)
        out = np.zeros(g.shape, dtype=complex)
        for f, m in zip(self.left, self.right):
            out += f.reshape(g.shape) * np.fft.ifftn(m.reshape(g.shape) * c)
        return out
