"""Transport of symbols along the stochastic flow.

``Q_0(t, p) = q_0(Phi_t^{-1} p)`` solves ``dQ_0 = -H_{a1} Q_0 o dw``. Lower-order
terms solve ``dQ_j = -(H_{a1} Q_j + R_j) o dw`` where ``R_j`` is the degree
``-j`` part of the commutator expansion of ``Q_0..Q_{j-1}`` against ``a``;
along the flow this integrates to

    Q_j(t, p) = q_j(Phi_t^{-1} p) - int_0^t R_j(tau, Phi_tau Phi_t^{-1} p) o dw(tau).

The integral is evaluated with the trapezoid rule on the backward
trajectory of each point.
"""

from dataclasses import dataclass

import numpy as np

from .errors import OrderExceeded
from .flow import flow_states, inverse_flow_batch, stochastic_integral_symbol
from .symbols import SymbolExpansion, SymbolField, commutator_expansion, eval_deriv, multi_indices


def _batch_shape(x, xi, t, dim):
    sx = np.shape(x)[1:] if dim == 2 else np.shape(x)
    sxi = np.shape(xi)[1:] if dim == 2 else np.shape(xi)
    return np.broadcast_shapes(sx, sxi, np.shape(t))


def _steps(path, t, shape):
    t = np.asarray(t, dtype=float)
    k = np.rint(t / path.dt).astype(int)
    if np.any(np.abs(t / path.dt - k) > 1e-6) or np.any(k < 0) or np.any(k > path.n_steps):
        raise ValueError("times must lie on the path grid")
    return np.broadcast_to(k, shape)


def transported_symbol(q0, a1, b1, path):
    """Symbol ``Q_0(t, x, xi) = q0(0, Phi_t^{-1}(x, xi))`` (times on the path grid)."""
    dim = a1.dim

    def func(t, x, xi):
        shape = _batch_shape(x, xi, t, dim)
        steps = _steps(path, t, shape)
        x0, xi0 = inverse_flow_batch(a1, b1, path, steps, x, xi)
        return q0.func(0.0, x0, xi0)

    return SymbolField(func=func, order=q0.order, dim=dim, homogeneous=q0.homogeneous,
                       real_principal=q0.real_principal, smooth_at_origin=q0.smooth_at_origin,
                       name=f"Q0[{q0.name}]")


def transport_Q0(q0, a1, b1, path, t, p):
    """Value of ``Q_0`` at time ``t`` (on the path grid) and point ``p``."""
    return transported_symbol(q0, a1, b1, path).func(t, p.x, p.xi)


def remainder_symbol(Q_prior, a, j):
    """``R_j``: degree ``-j`` term of the commutator expansion of ``Q_0..Q_{j-1}`` against ``a``."""
    if len(Q_prior) < j:
        raise ValueError(f"need Q_0..Q_{j - 1} to form R_{j}")
    prior = SymbolExpansion(Q_prior.terms[:j], Q_prior.base_order)
    return commutator_expansion(prior, a, j).terms[j]


def transported_term(q_j, R_j, a1, b1, path):
    """Symbol ``Q_j`` from its initial value ``q_j`` and forcing ``R_j``."""
    dim = a1.dim
    times = path.times

    def func(t, x, xi):
        shape = _batch_shape(x, xi, t, dim)
        steps = _steps(path, t, shape)
        if R_j.params.get("structural_zero"):
            x0, xi0 = inverse_flow_batch(a1, b1, path, steps, x, xi)
            return q_j.func(0.0, x0, xi0) + 0.0j
        x0, xi0, rx, rxi = inverse_flow_batch(a1, b1, path, steps, x, xi, record=True)
        base = q_j.func(0.0, x0, xi0)
        kmax = rx.shape[0] - 1
        if kmax == 0:
            return base + 0.0j
        tau = times[: kmax + 1].reshape((kmax + 1,) + (1,) * len(shape))
        tau = np.broadcast_to(tau, (kmax + 1,) + shape)
        vals = np.asarray(R_j.func(tau, rx, rxi))
        vals = np.broadcast_to(vals, (kmax + 1,) + shape)
        inc = path.increments[:kmax].reshape((kmax,) + (1,) * len(shape))
        pieces = 0.5 * (vals[:-1] + vals[1:]) * inc
        k = np.arange(kmax).reshape((kmax,) + (1,) * len(shape))
        integral = np.sum(np.where(k < steps[None], pieces, 0.0), axis=0)
        return base - integral

    return SymbolField(func=func, order=q_j.order, dim=dim, homogeneous=q_j.homogeneous,
                       real_principal=False, smooth_at_origin=q_j.smooth_at_origin,
                       name=f"Q[{q_j.name}]")


def transported_expansion(q, a, b1, path, upto=None):
    """Transported terms ``Q_0..Q_J`` of an initial expansion ``q``.

    Parameters
    ----------
    q : SymbolExpansion
        Initial terms ``q_0, q_1, ...``.
    a : SymbolExpansion
        Diffusion symbol expansion; ``a[0]`` is the principal part driving
        the flow.
    b1 : SymbolField
        Principal drift symbol.
    upto : int, optional
        Highest index J (at most 2).
    """
    J = len(q) - 1 if upto is None else upto
    if J > 2:
        raise OrderExceeded("transport of lower-order terms is supported for j <= 2")
    a1 = a[0]
    Q = [transported_symbol(q[0], a1, b1, path)]
    for j in range(1, J + 1):
        R_j = remainder_symbol(SymbolExpansion(Q, q.base_order), a, j)
        Q.append(transported_term(q[j], R_j, a1, b1, path))
    return SymbolExpansion(Q, q.base_order)


def transport_Qj(Q_prior, a, path, t, p, j, q_j, b1):
    """Value of ``Q_j`` at ``(t, p)`` given the transported ``Q_0..Q_{j-1}``.

    Raises
    ------
    OrderExceeded
        ``j > 2``.
    """
    if j > 2 or j < 1:
        raise OrderExceeded("transport_Qj supports j in {1, 2}")
    R_j = remainder_symbol(Q_prior, a, j)
    return transported_term(q_j, R_j, a[0], b1, path).func(t, p.x, p.xi)


def transport_residual(Q_j, q_j, R_j, a1, b1, path, p0):
    """Deviation of ``Q_j`` from its transport equation along one trajectory.

    Compares ``Q_j(t_k, Phi_{t_k} p0)`` with ``q_j(p0) - int_0^{t_k} R_j o dw``
    evaluated along the forward trajectory.

    Returns
    -------
    (float, float)
        Max residual over grid times and max ``|R_j|`` along the trajectory.
    """
    xs, xis = flow_states(a1, b1, path, p0.x, p0.xi)
    lhs = Q_j.func(path.times, xs, xis)
    rvals = np.asarray(R_j.func(path.times, xs, xis)) + 0.0 * path.times
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (rvals[:-1] + rvals[1:]) * path.increments)])
    rhs = q_j.func(0.0, p0.x, p0.xi) - integral
    return float(np.max(np.abs(lhs - rhs))), float(np.max(np.abs(rvals)))


@dataclass(frozen=True)
class RandomSymbolReport:
    """Per-path sup ratios of a stochastic-integral symbol and their drift under refinement."""

    coarse: np.ndarray
    fine: np.ndarray
    drift: np.ndarray
    indices: tuple
    passed: bool


def _unit_sphere(dim, n_dir):
    if dim == 1:
        return np.array([-1.0, 1.0])
    th = np.linspace(0.0, 2 * np.pi, n_dir, endpoint=False)
    return np.stack([np.cos(th), np.sin(th)])


def _sup_ratio(q_sym, path, box, ab_max, n_x, n_dir):
    """Sup over grid times, sampled x and unit xi of the class ratios of ``q``.

    Values at ``|xi| >= 1`` follow by homogeneity: ``d^a_xi d^b_x q`` has degree
    ``m - |a|`` so its weighted size is the unit-sphere value times
    ``sup_{r >= 1} (r / (1 + r))^(m - |a|)``.
    """
    dim = q_sym.dim
    m = q_sym.order
    axes = [np.linspace(lo, hi, n_x) for lo, hi in box]
    dirs = _unit_sphere(dim, n_dir)
    if dim == 1:
        X, XI = np.meshgrid(axes[0], dirs, indexing="ij")
    else:
        gx = np.meshgrid(axes[0], axes[1], np.arange(dirs.shape[1]), indexing="ij")
        X = np.stack([gx[0], gx[1]])
        XI = dirs[:, gx[2]]
    T = path.T
    out = {}
    for total in range(ab_max + 1):
        for k in range(total + 1):
            for alpha in multi_indices(dim, k):
                for beta in multi_indices(dim, total - k):
                    deg = m - k
                    factor = 1.0 if deg >= 0 else 2.0 ** (-deg)
                    vals = eval_deriv(q_sym, alpha, beta, T, X, XI)
                    out[(alpha, beta)] = float(np.max(np.abs(vals))) * factor
    return out


def random_symbol_probe(p, paths, box, ab_max, n_x=17, n_dir=16, tol=0.1, refine=None):
    """Pathwise class constants of ``q = int_0^t p o dw`` and their refinement drift.

    Parameters
    ----------
    p : callable
        ``p(path)`` returning the (possibly path-dependent) integrand symbol.
    paths : list of (BrownianPath, BrownianPath)
        Coarse/fine pairs of the same Brownian motion.
    box : sequence of (lo, hi)
    ab_max : int
    tol : float
        Allowed relative drift between coarse and refined estimates.

    Returns
    -------
    RandomSymbolReport
        ``coarse[i, j]`` is the constant for path ``i`` and index pair ``j``.
    """

    coarse, fine = [], []
    keys = None
    for cp, fp in paths:
        c = _sup_ratio(stochastic_integral_symbol(p(cp), cp), cp, box, ab_max, n_x, n_dir)
        f = _sup_ratio(stochastic_integral_symbol(p(fp), fp), fp, box, ab_max, 2 * n_x - 1, 2 * n_dir)
        keys = list(c)
        coarse.append([c[k] for k in keys])
        fine.append([f[k] for k in keys])
    coarse = np.array(coarse)
    fine = np.array(fine)
    drift = np.abs(fine - coarse) / np.maximum(np.abs(fine), 1e-300)
    drift = np.where((fine == 0) & (coarse == 0), 0.0, drift)
    ok = bool(np.all(np.isfinite(fine)) and np.all(drift < tol))
    return RandomSymbolReport(coarse, fine, drift, tuple(keys or ()), ok)
