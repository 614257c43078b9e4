"""Named symbols addressable from scenario files."""

import numpy as np

from .errors import ConfigError
from .symbols import SymbolField, multi_indices, zero_partial

ANALYTIC_ORDER = 6


def _sin_deriv(k, n, x):
    # n-th derivative of sin(k x)
    return k ** n * np.sin(k * x + n * np.pi / 2)


def _zero_like(*arrays):
    return np.zeros(np.broadcast_shapes(*[np.shape(a) for a in arrays]))


def zero(dim=1):
    """The zero symbol, treated as homogeneous of degree 1."""
    def z(t, x, xi):
        return _zero_like(x[0] if dim == 2 else x, xi[0] if dim == 2 else xi, t)

    z.structural_zero = True
    partials = {}
    for total in range(1, ANALYTIC_ORDER + 1):
        for k in range(total + 1):
            for a in multi_indices(dim, k):
                for b in multi_indices(dim, total - k):
                    partials[(a, b)] = z
    return SymbolField(func=z, order=1.0, dim=dim, partials=partials, max_order=ANALYTIC_ORDER,
                       homogeneous=True, smooth_at_origin=True, name="zero", params={})


def _coefficient_symbol(coef, name, params, absolute):
    """Symbol ``c(x) * xi`` (or ``c(x) * |xi|``) with ``c`` given by its derivatives.

    ``coef(n, x)`` returns the n-th derivative of c.
    """
    mult = np.abs if absolute else (lambda xi: xi)
    dmult = np.sign if absolute else (lambda xi: np.ones_like(np.asarray(xi, dtype=float)))

    def func(t, x, xi):
        return coef(0, x) * mult(xi) + 0.0 * t

    partials = {}
    for b in range(ANALYTIC_ORDER + 1):
        if b:
            partials[((0,), (b,))] = (lambda b: lambda t, x, xi: coef(b, x) * mult(xi) + 0.0 * t)(b)
        if b + 1 <= ANALYTIC_ORDER:
            partials[((1,), (b,))] = (lambda b: lambda t, x, xi: coef(b, x) * dmult(xi) + 0.0 * t)(b)
        for a in range(2, ANALYTIC_ORDER + 1 - b):
            # xi-linear (or |xi|, away from 0) symbols have vanishing higher xi-derivatives
            partials[((a,), (b,))] = zero_partial
    return SymbolField(func=func, order=1.0, dim=1, partials=partials, max_order=ANALYTIC_ORDER,
                       homogeneous=True, real_principal=True, smooth_at_origin=not absolute,
                       name=name, params=params)


def constant_transport(c=1.0):
    """``a = c * xi`` (d = 1)."""
    c = float(c)
    coef = lambda n, x: (c if n == 0 else 0.0) + 0.0 * np.asarray(x, dtype=float)
    return _coefficient_symbol(coef, "constant_transport", {"c": c}, absolute=False)


def variable_transport(c0=0.5, c1=0.25, k=1.0):
    """``a = (c0 + c1 sin(k x)) * xi`` (d = 1)."""
    c0, c1, k = float(c0), float(c1), float(k)

    def coef(n, x):
        x = np.asarray(x, dtype=float)
        return (c0 if n == 0 else 0.0) + c1 * _sin_deriv(k, n, x)

    return _coefficient_symbol(coef, "variable_transport", {"c0": c0, "c1": c1, "k": k}, absolute=False)


def halfwave(c0=1.0, c1=0.5, k=1.0):
    """``a = (c0 + c1 sin(k x)) * |xi|`` (d = 1)."""
    c0, c1, k = float(c0), float(c1), float(k)

    def coef(n, x):
        x = np.asarray(x, dtype=float)
        return (c0 if n == 0 else 0.0) + c1 * _sin_deriv(k, n, x)

    return _coefficient_symbol(coef, "halfwave", {"c0": c0, "c1": c1, "k": k}, absolute=True)


def linear_phase():
    """``a = x * xi`` (d = 1)."""
    def coef(n, x):
        x = np.asarray(x, dtype=float)
        if n == 0:
            return x
        return (1.0 if n == 1 else 0.0) + 0.0 * x

    sym = _coefficient_symbol(coef, "linear_phase", {}, absolute=False)
    return sym


LIBRARY = {
    "zero": zero,
    "constant_transport": constant_transport,
    "variable_transport": variable_transport,
    "halfwave": halfwave,
    "linear_phase": linear_phase,
}


def from_spec(spec, path="symbol"):
    """Build a library symbol from ``{"name": ..., "params": {...}}``."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(path, "expected an object with a 'name' field")
    extra = set(spec) - {"name", "params"}
    if extra:
        raise ConfigError(path, f"unknown keys {sorted(extra)}")
    name = spec["name"]
    if name not in LIBRARY:
        raise ConfigError(f"{path}.name", f"unknown symbol '{name}'")
    params = spec.get("params", {}) or {}
    try:
        return LIBRARY[name](**params)
    except TypeError as exc:
        raise ConfigError(f"{path}.params", str(exc)) from None


def coefficient_of(sym):
    """Return ``alpha(x) = -d_xi a`` for a first-order differential symbol.

    Used to drive the characteristics oracle from the same symbol that the
    grid solver quantizes (``a = -xi * alpha(x)``).
    """
    if sym.name not in ("zero", "constant_transport", "variable_transport", "linear_phase"):
        raise ValueError(f"{sym.name} is not a first-order differential symbol")

    def alpha(t, x):
        x = np.asarray(x, dtype=float)
        return -np.real(sym.partials[((1,), (0,))](t, x, np.ones_like(x)))

    def alpha_x(t, x):
        x = np.asarray(x, dtype=float)
        return -np.real(sym.partials[((1,), (1,))](t, x, np.ones_like(x)))

    return alpha, alpha_x
