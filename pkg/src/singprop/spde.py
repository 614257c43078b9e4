"""Pathwise integration of ``du = A u o dw + B u dt`` on periodic grids.

``A = -i Op(a)`` and ``B = -i Op(b)``. With the Kohn-Nirenberg convention
``Op(xi) = -i d/dx`` this makes ``a = -alpha(x) xi`` the transport operator
``alpha d/dx``, whose solution is ``u0(psi_t^{-1} x)`` for the flow
``dX = -alpha(X) o dw - beta(X) dt`` (method of characteristics).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp, Instability
from .grid import GridFunction, trig_interpolate
from .pdo import PdoOperator
from .symbols import eval_deriv

SCHEME = "stratonovich_heun"


@dataclass(frozen=True, eq=False)
class SPDESolution:
    """Frames ``u(t_k)`` at a subset of path grid times (``frames[0] = u0``).

    ``diagnostics["cutoff_gain"]`` bounds the spurious growth of the Heun
    scheme at the dealiasing cutoff (see :func:`heun_cutoff_gain`).
    """

    times: np.ndarray
    frames: list
    path_ref: dict
    scheme: str
    symbols: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.frames[-1]


def _path_ref(path):
    return {"seed": path.seed, "T": path.T, "n_steps": path.n_steps}


def _stride(path, frame_every):
    if frame_every is None:
        return max(1, path.n_steps // 64)
    if frame_every < 1:
        raise ValueError("frame_every must be >= 1")
    return int(frame_every)


def _is_zero(sym):
    return sym.name == "zero"


def _unit_directions(d):
    if d == 1:
        return np.array([-1.0, 1.0])
    th = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
    return np.stack([np.cos(th), np.sin(th)])


def _speed(sym, grid, t=0.0):
    """``(sup |d_xi a|, sup |d_x d_xi a|)`` over nodes and unit covectors."""
    if _is_zero(sym):
        return 0.0, 0.0
    d = grid.d
    dirs = _unit_directions(d)
    if d == 1:
        X, XI = np.meshgrid(grid.axis, dirs, indexing="ij")
        v = eval_deriv(sym, (1,), (0,), t, X, XI)
        vx = eval_deriv(sym, (1,), (1,), t, X, XI)
        return float(np.max(np.abs(v))), float(np.max(np.abs(vx)))
    g = np.meshgrid(grid.axis[::4], grid.axis[::4], np.arange(dirs.shape[1]), indexing="ij")
    X = np.stack([g[0], g[1]])
    XI = dirs[:, g[2]]
    v = sum(np.abs(eval_deriv(sym, e, (0, 0), t, X, XI)) for e in ((1, 0), (0, 1)))
    vx = sum(np.abs(eval_deriv(sym, e, f, t, X, XI))
             for e in ((1, 0), (0, 1)) for f in ((1, 0), (0, 1)))
    return float(np.max(v)), float(np.max(vx))


class _Generator:
    """``u -> -i Op(a) u`` with 2/3-rule truncation after variable-coefficient products."""

    def __init__(self, sym, grid, t=0.0):
        self.zero = _is_zero(sym)
        self.grid = grid
        if self.zero:
            return
        self.op = PdoOperator.compile(sym, grid, t)
        keep = np.abs(grid.modes) <= grid.N / 3
        self.keep = keep if grid.d == 1 else keep[0] & keep[1]

    def __call__(self, values):
        if self.zero:
            return np.zeros_like(values)
        out = -1j * self.op.apply_values(values)
        if self.op.kind != "multiplier":
            out = np.fft.ifftn(np.where(self.keep, np.fft.fftn(out), 0.0))
        return out


def _l2(values, grid):
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.dx ** grid.d))


def _heun(A, B, values, dw, dt):
    Au, Bu = A(values), B(values)
    star = values + dw * Au + dt * Bu
    return values + 0.5 * dw * (Au + A(star)) + 0.5 * dt * (Bu + B(star))


def heun_cutoff_gain(speed_a, speed_b, increments, dt, grid):
    """Upper bound on the Heun amplification of modes at the dealiasing cutoff.

    One Heun step multiplies a mode with phase increment ``theta`` by
    ``1 + i theta - theta^2 / 2``, whose modulus is ``sqrt(1 + theta^4 / 4)``;
    the exact propagator is unitary. Values well above 1 mean high
    frequencies (and hence detected singularities) are unreliable.
    """
    k_cut = 2 * np.pi / grid.L * grid.N / 3
    theta = k_cut * (speed_a * np.abs(increments) + speed_b * abs(dt))
    return float(np.exp(0.5 * np.sum(np.log1p(theta ** 4 / 4))))


def _integrate(a, b, u0, increments, dt, record_every, n_total):
    """Heun steps over ``increments``; returns recorded frames and step indices."""
    grid = u0.grid
    speed_a, growth_a = _speed(a, grid)
    speed_b, growth_b = _speed(b, grid)
    disp = speed_a * np.abs(increments) + speed_b * abs(dt)
    bad = np.nonzero(disp > grid.dx)[0]
    if bad.size:
        i = int(bad[0])
        raise Instability(f"step {i}: displacement {disp[i]:.3g} exceeds one cell ({grid.dx:.3g}); "
                          "refine n_steps or the grid period", step=i)
    A = _Generator(a, grid)
    B = _Generator(b, grid)
    u = u0.values.copy()
    frames, steps = [GridFunction(grid, u)], [0]
    norm = _l2(u, grid)
    for i, dw in enumerate(increments):
        u = _heun(A, B, u, dw, dt)
        new = _l2(u, grid)
        bound = np.exp(growth_a * abs(dw) + growth_b * abs(dt))
        if not np.isfinite(new) or new > 10.0 * bound * max(norm, 1e-300):
            raise Instability(f"step {i}: L2 norm grew from {norm:.3g} to {new:.3g}", step=i)
        norm = new
        if (i + 1) % record_every == 0 or i + 1 == n_total:
            frames.append(GridFunction(grid, u))
            steps.append(i + 1)
    gain = heun_cutoff_gain(speed_a, speed_b, increments, dt, grid)
    return frames, steps, {"cutoff_gain": gain}


def solve_spde(a, b, u0, path, frame_every=None):
    """Stratonovich-Heun solution of ``du = -i Op(a) u o dw - i Op(b) u dt``.

    Parameters
    ----------
    a, b : SymbolField
        Time-independent diffusion and drift symbols.
    u0 : GridFunction
        Initial datum, expected band-limited to ``|k| <= N/3``.
    path : BrownianPath
    frame_every : int, optional
        Record every this many steps (default: at most 64 frames); the final
        time is always recorded.

    Raises
    ------
    Instability
        A step moves information further than one cell, or the L2 norm grows
        more than tenfold beyond its per-step bound.
    GridTooLarge
    """
    stride = _stride(path, frame_every)
    frames, steps, diag = _integrate(a, b, u0, path.increments, path.dt, stride, path.n_steps)
    return SPDESolution(path.times[steps], frames, _path_ref(path), SCHEME,
                        {"a": a.name, "b": b.name}, diag)


def solve_backward(a, b, path, t, phi):
    """Apply the backward propagator ``U_b(t, 0)``: integrate over reversed increments.

    For ``phi = u(t)`` this recovers ``u0`` up to the integrator error.
    """
    k = path.step_index(t)
    if k == 0:
        return GridFunction(phi.grid, phi.values.copy())
    inc = -path.increments[:k][::-1]
    frames, _, _ = _integrate(a, b, phi, inc, -path.dt, k, k)
    return frames[-1]


# ------------------------------------------------------------ characteristics


def _coefficient(c):
    if callable(c):
        return c
    c = float(c)
    return lambda t, x: c + 0.0 * x


def characteristic_inverse(alpha, beta, path, step, x):
    """``psi_t^{-1}(x)`` for ``dX = -alpha o dw - beta dt`` at ``t = t_step``.

    Heun steps run backward over the reversed increments.
    """
    al, be = _coefficient(alpha), _coefficient(beta)
    X = np.asarray(x, dtype=float).copy()
    dt = path.dt
    for i in range(step - 1, -1, -1):
        dw = path.increments[i]
        t1, t0 = path.times[i + 1], path.times[i]
        f = al(t1, X) * dw + be(t1, X) * dt
        Y = X + f
        X = X + 0.5 * (f + al(t0, Y) * dw + be(t0, Y) * dt)
        if not np.all(np.isfinite(X)):
            raise BlowUp(f"characteristic diverged at step {i}", step=i, sample=None)
    return X


def solve_characteristics(alpha, beta, u0, path, frame_every=None):
    """Method-of-characteristics solution ``u(t, x) = u0(psi_t^{-1} x)`` (d = 1).

    ``alpha`` and ``beta`` are callables ``(t, x)`` or constants; ``u0`` is
    evaluated off-grid by trigonometric interpolation. Agrees with
    :func:`solve_spde` for ``a = -alpha xi``, ``b = -beta xi``.
    """
    grid = u0.grid
    stride = _stride(path, frame_every)
    steps = list(range(0, path.n_steps + 1, stride))
    if steps[-1] != path.n_steps:
        steps.append(path.n_steps)
    frames = [GridFunction(grid, u0.values.copy())]
    for k in steps[1:]:
        pts = characteristic_inverse(alpha, beta, path, k, grid.axis)
        frames.append(GridFunction(grid, trig_interpolate(u0, pts % grid.L)))
    return SPDESolution(path.times[steps], frames, _path_ref(path), "characteristics_heun",
                        {"alpha": getattr(alpha, "__name__", str(alpha)),
                         "beta": getattr(beta, "__name__", str(beta))})


# --------------------------------------------------------- stochastic Fubini


def stochastic_fubini_check(p, v, path, grid=None):
    """Residual of ``q(t) u(t) = int p u o dw + int q v o dw`` at ``t = T``.

    ``u = int v o dw`` and ``q = int p o dw`` with a time-constant ``p``, so
    ``Op(q(tau)) = w(tau) Op(p)``. All Stratonovich integrals use the
    trapezoid rule on the path grid.

    Parameters
    ----------
    p : SymbolField
        Time-constant symbol.
    v : callable or sequence
        ``v(tau)`` returning a GridFunction, or one GridFunction per grid time.
    path : BrownianPath

    Returns
    -------
    float
        L2 norm of LHS - RHS.
    """
    times = path.times
    vs = [v(t) for t in times] if callable(v) else list(v)
    if len(vs) != path.n_steps + 1:
        raise ValueError("need one value of v per path grid time")
    grid = vs[0].grid if grid is None else grid
    V = np.stack([f.values for f in vs])
    w = path.cumulative
    dw = path.increments.reshape((-1,) + (1,) * grid.d)
    U = np.concatenate([np.zeros((1,) + grid.shape), np.cumsum(0.5 * (V[:-1] + V[1:]) * dw, axis=0)])
    lhs_pre = w[-1] * U[-1]
    wv = w.reshape((-1,) + (1,) * grid.d) * V
    rhs_pre = np.sum(0.5 * (U[:-1] + U[1:]) * dw, axis=0) + np.sum(0.5 * (wv[:-1] + wv[1:]) * dw, axis=0)
    op = PdoOperator.compile(p, grid)
    diff = op.apply_values(lhs_pre) - op.apply_values(rhs_pre)
    return _l2(diff, grid)


# ------------------------------------------------------------------ exports


def export_frames_csv(sol, filename):
    """Rows ``t, x_j (per axis), Re u, Im u``."""
    with open(filename, "w", newline="") as fh:
        wr = csv.writer(fh)
        g = sol.frames[0].grid
        xcols = ["x"] if g.d == 1 else ["x1", "x2"]
        wr.writerow(["t"] + xcols + ["re_u", "im_u"])
        nodes = g.nodes if g.d == 1 else g.nodes.reshape(2, -1)
        for t, f in zip(sol.times, sol.frames):
            vals = f.values.ravel()
            for j in range(vals.size):
                xs = [nodes[j]] if g.d == 1 else [nodes[0, j], nodes[1, j]]
                wr.writerow([repr(float(t))] + [repr(float(c)) for c in xs]
                            + [repr(float(vals[j].real)), repr(float(vals[j].imag))])


def export_spectra_csv(sol, filename):
    """Rows ``t, k (per axis), |u_hat_k|`` with modes in ascending order."""
    with open(filename, "w", newline="") as fh:
        wr = csv.writer(fh)
        g = sol.frames[0].grid
        kcols = ["k"] if g.d == 1 else ["k1", "k2"]
        wr.writerow(["t"] + kcols + ["abs_u_hat"])
        modes = np.fft.fftshift(g.modes, axes=tuple(range(-g.d, 0)))
        modes = modes.ravel() if g.d == 1 else modes.reshape(2, -1)
        for t, f in zip(sol.times, sol.frames):
            mag = np.fft.fftshift(np.abs(f.spectrum)).ravel()
            for j in range(mag.size):
                ks = [int(modes[j])] if g.d == 1 else [int(modes[0, j]), int(modes[1, j])]
                wr.writerow([repr(float(t))] + ks + [repr(float(mag[j]))])
