"""Bicharacteristic flow driven by a Brownian path.

The system integrated is

    dx  =  d_xi a1 o dw + d_xi b1 dt
    dxi = -d_x a1  o dw - d_x b1  dt

in the Stratonovich sense. States are arrays: for ``dim == 1`` ``x`` and ``xi``
have the batch shape, for ``dim == 2`` they carry a leading axis of length 2.
"""

from dataclasses import dataclass

import numpy as np

from .brownian import coarsen, derive_seed, sample_brownian, truncate
from .errors import BlowUp, ZeroFrequency
from .symbols import SymbolField, eval_deriv, hamiltonian_fields, xi_norm

BLOWUP = 1e12


@dataclass(frozen=True)
class PhasePoint:
    """Point (or batch of points) in phase space."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    """States of the flow on the path grid.

    ``x[i]`` and ``xi[i]`` are the state at ``times[i]``.
    """

    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    path_ref: tuple
    scheme: str

    def state(self, i):
        return PhasePoint(self.x[i], self.xi[i])

    @property
    def final(self):
        return self.state(-1)


@dataclass(frozen=True)
class MomentReport:
    """Monte Carlo moment estimate with a 3-sigma half width."""

    moment: int
    samples: int
    estimate: float
    ci_half_width: float
    component: str
    statistic: str
    n_steps: int


def _is_zero(sym):
    return sym.name == "zero"


def _mag(x, xi, dim):
    if dim == 1:
        return np.abs(x) + np.abs(xi)
    return np.sqrt(np.sum(x * x, axis=0)) + np.sqrt(np.sum(xi * xi, axis=0))


def _check(x, xi, dim, step, sample_axis=False):
    m = _mag(x, xi, dim)
    bad = ~np.isfinite(m) | (m > BLOWUP)
    if np.any(bad):
        idx = int(np.flatnonzero(np.ravel(bad))[0]) if np.ndim(bad) else None
        raise BlowUp(f"|x| + |xi| exceeded {BLOWUP:g} at step {step}", step=step,
                     sample=idx if sample_axis else None)


def _check_start(a1, xi):
    if a1.smooth_at_origin:
        return
    if np.any(xi_norm(xi, a1.dim) == 0):
        raise ZeroFrequency("flow started at xi = 0")


class _Stepper:
    """Heun step for the diffusion/drift pair, skipping an identically zero drift."""

    def __init__(self, a1, b1):
        self.diff, self.drift = hamiltonian_fields(a1, b1)
        self.no_drift = _is_zero(b1)
        self.no_diff = _is_zero(a1)
        self.dim = a1.dim

    def rhs(self, t, x, xi, dw, dt):
        fx = fxi = gx = gxi = 0.0
        if not self.no_diff:
            fx, fxi = self.diff(t, x, xi)
        if not self.no_drift:
            gx, gxi = self.drift(t, x, xi)
        return fx * dw + gx * dt, fxi * dw + gxi * dt

    def heun(self, t0, t1, x, xi, dw, dt):
        k1x, k1xi = self.rhs(t0, x, xi, dw, dt)
        k2x, k2xi = self.rhs(t1, x + k1x, xi + k1xi, dw, dt)
        return x + 0.5 * (k1x + k2x), xi + 0.5 * (k1xi + k2xi)


def integrate_flow(a1, b1, path, p0, store=True):
    """Stratonovich-Heun integration of the bicharacteristic system.

    Parameters
    ----------
    a1, b1 : SymbolField
        Real first-order homogeneous diffusion and drift symbols.
    path : BrownianPath
    p0 : PhasePoint
        Initial point(s); may be a batch.
    store : bool
        Keep every state (otherwise only the initial and final ones).

    Returns
    -------
    FlowTrajectory

    Raises
    ------
    BlowUp
        ``|x| + |xi|`` exceeded 1e12.
    """
    stepper = _Stepper(a1, b1)
    x, xi = np.array(p0.x, dtype=float), np.array(p0.xi, dtype=float)
    _check_start(a1, xi)
    dt = path.dt
    xs, xis = [x], [xi]
    for i, dw in enumerate(path.increments):
        x, xi = stepper.heun(i * dt, (i + 1) * dt, x, xi, dw, dt)
        _check(x, xi, a1.dim, i + 1)
        if store:
            xs.append(x)
            xis.append(xi)
    if not store:
        xs.append(x)
        xis.append(xi)
        times = np.array([0.0, path.T])
    else:
        times = path.times
    return FlowTrajectory(times, np.stack(xs), np.stack(xis), (path.seed, path.n_steps),
                          "stratonovich_heun")


def _unit(dim, k):
    return tuple(int(i == k) for i in range(dim))


def ito_correction(a1, t, x, xi):
    """Ito drift correction ``1/2 (Df) f`` of the diffusion field ``f = (a_xi, -a_x)``."""
    d = a1.dim
    z = (0,) * d
    if d == 1:
        a_x = eval_deriv(a1, 0, 1, t, x, xi)
        a_xi = eval_deriv(a1, 1, 0, t, x, xi)
        a_xx = eval_deriv(a1, 0, 2, t, x, xi)
        a_xixi = eval_deriv(a1, 2, 0, t, x, xi)
        a_xxi = eval_deriv(a1, 1, 1, t, x, xi)
        cx = 0.5 * (a_xxi * a_xi - a_xixi * a_x)
        cxi = -0.5 * (a_xx * a_xi - a_xxi * a_x)
        return np.real(cx), np.real(cxi)
    e = [_unit(d, k) for k in range(d)]
    a_x = [eval_deriv(a1, z, e[j], t, x, xi) for j in range(d)]
    a_xi = [eval_deriv(a1, e[j], z, t, x, xi) for j in range(d)]

    def two(ax, bx):
        # mixed second derivative d_{xi^ax} d_{x^bx}
        return eval_deriv(a1, ax, bx, t, x, xi)

    cx, cxi = [], []
    for i in range(d):
        sx = 0.0
        sxi = 0.0
        for j in range(d):
            xi_i_x_j = two(e[i], e[j])
            xi_i_xi_j = two(tuple(np.add(e[i], e[j])), z)
            x_i_x_j = two(z, tuple(np.add(e[i], e[j])))
            x_i_xi_j = two(e[j], e[i])
            sx = sx + xi_i_x_j * a_xi[j] - xi_i_xi_j * a_x[j]
            sxi = sxi + x_i_x_j * a_xi[j] - x_i_xi_j * a_x[j]
        cx.append(0.5 * sx)
        cxi.append(-0.5 * sxi)
    return np.real(np.stack(cx)), np.real(np.stack(cxi))


def integrate_flow_ito(a1, b1, path, p0, store=True):
    """Euler-Maruyama integration of the Ito form of the bicharacteristic system."""
    stepper = _Stepper(a1, b1)
    x, xi = np.array(p0.x, dtype=float), np.array(p0.xi, dtype=float)
    _check_start(a1, xi)
    dt = path.dt
    xs, xis = [x], [xi]
    for i, dw in enumerate(path.increments):
        t = i * dt
        kx, kxi = stepper.rhs(t, x, xi, dw, dt)
        if not stepper.no_diff:
            cx, cxi = ito_correction(a1, t, x, xi)
            kx = kx + cx * dt
            kxi = kxi + cxi * dt
        x, xi = x + kx, xi + kxi
        _check(x, xi, a1.dim, i + 1)
        if store:
            xs.append(x)
            xis.append(xi)
    if not store:
        xs.append(x)
        xis.append(xi)
        times = np.array([0.0, path.T])
    else:
        times = path.times
    return FlowTrajectory(times, np.stack(xs), np.stack(xis), (path.seed, path.n_steps), "ito_euler")


def inverse_flow_batch(a1, b1, path, steps, x, xi, record=False):
    """Backward Heun integration from ``t_steps`` to 0, one chain per point.

    Each point ``(x, xi)[j]`` is mapped by the inverse flow of its own time
    ``t = steps[j] * dt``. Chains are advanced together: at backward step
    ``k`` only chains with ``steps > k`` move.

    Parameters
    ----------
    steps : array_like of int
        Broadcastable against the batch shape of ``x``.
    record : bool
        Also return the states at every grid time (``rec[k]`` is the state at
        ``t_k`` for chains with ``steps >= k``).

    Returns
    -------
    (x0, xi0) or (x0, xi0, rec_x, rec_xi)
    """
    stepper = _Stepper(a1, b1)
    dim = a1.dim
    x = np.array(x, dtype=float)
    xi = np.array(xi, dtype=float)
    batch = x.shape[1:] if dim == 2 else x.shape
    batch = np.broadcast_shapes(batch, xi.shape[1:] if dim == 2 else xi.shape, np.shape(steps))
    steps = np.broadcast_to(np.asarray(steps, dtype=int), batch)
    x = np.array(np.broadcast_to(x, ((dim,) if dim == 2 else ()) + batch))
    xi = np.array(np.broadcast_to(xi, ((dim,) if dim == 2 else ()) + batch))
    _check_start(a1, xi)
    kmax = int(steps.max()) if steps.size else 0
    dt = path.dt
    rec_x = rec_xi = None
    if record:
        rec_x = np.empty((kmax + 1,) + x.shape)
        rec_xi = np.empty((kmax + 1,) + xi.shape)
        rec_x[kmax], rec_xi[kmax] = x, xi
    uniform = bool(np.all(steps == kmax))
    for k in range(kmax - 1, -1, -1):
        dw = -path.increments[k]
        nx, nxi = stepper.heun((k + 1) * dt, k * dt, x, xi, dw, -dt)
        if uniform:
            x, xi = nx, nxi
        else:
            active = steps > k
            x, xi = np.where(active, nx, x), np.where(active, nxi, xi)
        _check(x, xi, dim, k)
        if record:
            rec_x[k], rec_xi[k] = x, xi
    if record:
        return x, xi, rec_x, rec_xi
    return x, xi


def inverse_flow(a1, b1, path, t, p):
    """``Phi_t^{-1}(p)`` by backward integration over the reversed increments."""
    step = path.step_index(t)
    x, xi = inverse_flow_batch(a1, b1, path, step, p.x, p.xi)
    return PhasePoint(x, xi)


def homogeneity_check(a1, b1, path, p0, lam):
    """Max over grid times of ``|Phi_t(x0, lam xi0) - (x_t, lam xi_t)| / (1 + lam |xi0|)``."""
    base = integrate_flow(a1, b1, path, p0)
    scaled = integrate_flow(a1, b1, path, PhasePoint(p0.x, lam * p0.xi))
    dim = a1.dim
    ex = scaled.x - base.x
    exi = scaled.xi - lam * base.xi
    if dim == 1:
        err = np.sqrt(ex ** 2 + exi ** 2)
    else:
        err = np.sqrt(np.sum(ex ** 2, axis=1) + np.sum(exi ** 2, axis=1))
    return float(np.max(err / (1.0 + lam * xi_norm(p0.xi, dim))))


def ensemble_increments(base_seed, M, T, n_steps, master_steps=None):
    """Increments of M paths with seeds ``derive_seed(base_seed, m)``.

    Each path is drawn at ``master_steps`` resolution and coarsened to
    ``n_steps``, so different ``n_steps`` see the same Brownian motions.
    """
    master = master_steps or n_steps
    out = np.empty((n_steps, M))
    for m in range(M):
        p = sample_brownian(derive_seed(base_seed, m), T, master)
        out[:, m] = coarsen(p, master // n_steps).increments
    return out


def ensemble_flow(a1, b1, increments, dt, x0, xi0, scheme="stratonovich_heun", sup=False):
    """Integrate a batch of paths at once.

    Returns the final state and, if ``sup``, the running maxima of ``|x|``
    and ``|xi|`` over the grid.
    """
    stepper = _Stepper(a1, b1)
    M = increments.shape[1]
    x = np.full(M, float(x0)) if np.ndim(x0) == 0 else np.array(x0, dtype=float)
    xi = np.full(M, float(xi0)) if np.ndim(xi0) == 0 else np.array(xi0, dtype=float)
    _check_start(a1, xi)
    sx, sxi = np.abs(x), np.abs(xi)
    for i, dw in enumerate(increments):
        t = i * dt
        if scheme == "stratonovich_heun":
            x, xi = stepper.heun(t, t + dt, x, xi, dw, dt)
        else:
            kx, kxi = stepper.rhs(t, x, xi, dw, dt)
            if not stepper.no_diff:
                cx, cxi = ito_correction(a1, t, x, xi)
                kx, kxi = kx + cx * dt, kxi + cxi * dt
            x, xi = x + kx, xi + kxi
        _check(x, xi, 1, i + 1, sample_axis=True)
        if sup:
            sx = np.maximum(sx, np.abs(x))
            sxi = np.maximum(sxi, np.abs(xi))
    return x, xi, sx, sxi


def moment_probe(a1, b1, n, M, p0, T, n_steps, base_seed=0, component="x",
                 statistic="sup", master_steps=None):
    """Monte Carlo estimate of ``E sup_t |component|^n`` (or of the terminal moment).

    Parameters
    ----------
    n : int
        Moment order (``n <= 8``).
    M : int
        Number of samples (``M >= 100``).
    component : {"x", "xi"}
    statistic : {"sup", "terminal"}
    master_steps : int, optional
        Resolution at which paths are drawn before coarsening to ``n_steps``.

    Raises
    ------
    BlowUp
        With the offending ``sample`` index.
    """
    if n > 8 or n < 1:
        raise ValueError("moment order must be in 1..8")
    if M < 100:
        raise ValueError("need at least 100 samples")
    if a1.dim != 1:
        raise ValueError("moment probe supports d = 1")
    inc = ensemble_increments(base_seed, M, T, n_steps, master_steps)
    x, xi, sx, sxi = ensemble_flow(a1, b1, inc, T / n_steps, p0.x, p0.xi, sup=True)
    if statistic == "sup":
        vals = (sx if component == "x" else sxi) ** n
    else:
        vals = np.abs(x if component == "x" else xi) ** n
    est = float(np.mean(vals))
    ci = float(3.0 * np.std(vals, ddof=1) / np.sqrt(M))
    return MomentReport(n, M, est, ci, component, statistic, n_steps)


def halfwave_moment_bound(c0, c1, k, xi0, T, n_grid=4097):
    """Upper bound for ``E |xi(T)|^2`` under the halfwave flow.

    From the Ito form of ``d log|xi| = -c'(x) o dw`` one gets
    ``E |xi_T|^2 <= |xi_0|^2 exp(T sup(2 c'^2 - c c''))`` (exponential
    martingale argument); the supremum is taken on a fine grid.
    """
    s = np.linspace(0.0, 2 * np.pi / k, n_grid)
    c = c0 + c1 * np.sin(k * s)
    cp = c1 * k * np.cos(k * s)
    cpp = -c1 * k * k * np.sin(k * s)
    rate = float(np.max(2 * cp ** 2 - c * cpp))
    return float(xi0 ** 2 * np.exp(max(rate, 0.0) * T)), rate


def flow_states(a1, b1, path, x, xi):
    """All forward Heun states from (x, xi); arrays of shape ``(n+1,) + x.shape``."""
    traj = integrate_flow(a1, b1, path, PhasePoint(x, xi))
    return traj.x, traj.xi


def flow_composed(sym, a1, b1, path):
    """Random symbol ``p(t, x, xi) = sym(t, Phi_t(x, xi))``.

    ``t`` must lie on the path grid; arrays of times are supported.
    """
    dim = a1.dim

    def func(t, x, xi):
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(np.shape(x)[1:] if dim == 2 else np.shape(x),
                                    np.shape(xi)[1:] if dim == 2 else np.shape(xi), t.shape)
        steps = np.broadcast_to(np.rint(t / path.dt).astype(int), shape)
        lead = (dim,) if dim == 2 else ()
        xb = np.broadcast_to(x, lead + shape)
        xib = np.broadcast_to(xi, lead + shape)
        kmax = int(steps.max()) if steps.size else 0
        sub = path if kmax == path.n_steps else _prefix(path, kmax)
        xs, xis = flow_states(a1, b1, sub, xb, xib)
        idx = steps[None, ...] if dim == 1 else steps[None, None, ...]
        xt = np.take_along_axis(xs, np.broadcast_to(idx, (1,) + xs.shape[1:]), axis=0)[0]
        xit = np.take_along_axis(xis, np.broadcast_to(idx, (1,) + xis.shape[1:]), axis=0)[0]
        return sym.func(t, xt, xit)

    def time_series(x, xi, kmax):
        sub = path if kmax == path.n_steps else _prefix(path, kmax)
        xs, xis = flow_states(a1, b1, sub, x, xi)
        tt = sub.times[: kmax + 1].reshape((-1,) + (1,) * (xs.ndim - 1 - (dim == 2)))
        return sym.func(tt, xs[: kmax + 1], xis[: kmax + 1])

    return SymbolField(func=func, order=sym.order, dim=dim, homogeneous=sym.homogeneous,
                       real_principal=sym.real_principal, smooth_at_origin=sym.smooth_at_origin,
                       name=f"{sym.name}@flow", params={"seed": path.seed, "n_steps": path.n_steps},
                       time_series=time_series)


def _prefix(path, steps):
    return truncate(path, max(steps, 1))


def stochastic_integral_symbol(p, path):
    """``q(t, x, xi) = int_0^t p(tau, x, xi) o dw(tau)`` with the trapezoid rule.

    Evaluates ``p`` at every grid time for every requested point, then takes
    the cumulative trapezoid sum along the path.
    """
    dim = p.dim
    times = path.times

    def func(t, x, xi):
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(np.shape(x)[1:] if dim == 2 else np.shape(x),
                                    np.shape(xi)[1:] if dim == 2 else np.shape(xi), t.shape)
        steps = np.broadcast_to(np.rint(t / path.dt).astype(int), shape)
        kmax = int(steps.max()) if steps.size else 0
        lead = (dim,) if dim == 2 else ()
        tt = times[: kmax + 1].reshape((kmax + 1,) + (1,) * len(shape))
        xb = np.broadcast_to(x, lead + shape)
        xib = np.broadcast_to(xi, lead + shape)
        if p.time_series is not None:
            vals = np.asarray(p.time_series(np.array(xb), np.array(xib), kmax))
        else:
            if dim == 2:
                xb, xib = xb[:, None], xib[:, None]
            vals = np.asarray(p.func(tt, xb, xib))
        vals = np.broadcast_to(vals, (kmax + 1,) + shape)
        inc = path.increments[:kmax].reshape((kmax,) + (1,) * len(shape))
        cum = np.concatenate([np.zeros((1,) + shape, dtype=vals.dtype),
                              np.cumsum(0.5 * (vals[:-1] + vals[1:]) * inc, axis=0)])
        return np.take_along_axis(cum, steps[None], axis=0)[0]

    return SymbolField(func=func, order=p.order, dim=dim, homogeneous=p.homogeneous,
                       real_principal=p.real_principal, smooth_at_origin=p.smooth_at_origin,
                       name=f"int({p.name})dw", params={"seed": path.seed, "n_steps": path.n_steps})
