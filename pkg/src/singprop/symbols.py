"""Symbols a(t, x, xi), their derivatives and the symbolic calculus used by
the transport construction.

Array conventions
-----------------
For ``dim == 1`` the arguments ``x`` and ``xi`` are arrays of any broadcastable
shape. For ``dim == 2`` their leading axis has length 2 and holds the
components. ``t`` is a scalar or an array broadcastable against the trailing
shape. Derivatives are plain partials ``d_xi^alpha d_x^beta`` (no factors of
``-i``).
"""

from dataclasses import dataclass, field
from itertools import product
from math import factorial

import numpy as np

from .errors import OrderExceeded, SymbolError, ZeroFrequency

FD_MAX_ORDER = 4
FD_REL_STEP = 1e-5


def zero_partial(t, x, xi):
    """Closure for a derivative that vanishes identically."""
    return np.zeros(np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(xi)))


zero_partial.structural_zero = True


def _as_index(idx, dim):
    if idx is None:
        return (0,) * dim
    if np.isscalar(idx):
        idx = (int(idx),)
    idx = tuple(int(i) for i in idx)
    if len(idx) != dim or any(i < 0 for i in idx):
        raise ValueError(f"multi-index {idx} invalid for dimension {dim}")
    return idx


def xi_norm(xi, dim):
    """Euclidean length of the covector(s) ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if dim == 1:
        return np.abs(xi)
    return np.sqrt(np.sum(xi * xi, axis=0))


def multi_indices(dim, total):
    """All multi-indices of length ``dim`` with ``|idx| == total``."""
    return [idx for idx in product(range(total + 1), repeat=dim) if sum(idx) == total]


@dataclass(frozen=True, eq=False)
class SymbolField:
    """Evaluable symbol with derivative closures and metadata.

    Attributes
    ----------
    func : callable
        ``func(t, x, xi)`` returning the symbol values.
    order : float
        Order m of the symbol class.
    dim : int
        Space dimension (1 or 2).
    partials : dict
        Analytic derivatives keyed by ``(alpha, beta)`` tuples.
    max_order : int
        Highest total order covered by ``partials`` (0 if none).
    homogeneous : bool
        Positively homogeneous of degree ``order`` in xi for ``|xi| >= 1``.
    real_principal : bool
        Real valued (for principal symbols).
    smooth_at_origin : bool
        Smooth near xi = 0 (polynomial in xi or already cut off), so no
        regularization is needed before quantization.
    name : str
        Library name or description.
    params : dict
        Parameters used to build the symbol.
    time_series : callable, optional
        ``time_series(x, xi, kmax)`` returning values at the first
        ``kmax + 1`` grid times of a driving path, shape ``(kmax+1,) + batch``.
        Set by path-dependent symbols that can produce all times at once.
    """

    func: object
    order: float
    dim: int = 1
    partials: dict = field(default_factory=dict)
    max_order: int = 0
    homogeneous: bool = False
    real_principal: bool = True
    smooth_at_origin: bool = False
    name: str = ""
    params: dict = field(default_factory=dict)
    time_series: object = None

    def __call__(self, t, x, xi):
        return self.func(t, x, xi)


@dataclass(frozen=True, eq=False)
class SymbolExpansion:
    """Ordered homogeneous terms; term j has degree ``base_order - j``."""

    terms: tuple
    base_order: float

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for j, term in enumerate(self.terms):
            if not np.isclose(term.order, self.base_order - j):
                raise SymbolError(
                    f"term {j} has order {term.order}, expected {self.base_order - j}"
                )

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, j):
        return self.terms[j]

    @property
    def dim(self):
        return self.terms[0].dim if self.terms else 1


def make_symbol(func, order, dim=1, partials=None, **meta):
    """Build a :class:`SymbolField`, inferring ``max_order`` from ``partials``."""
    partials = dict(partials or {})
    max_order = max((sum(a) + sum(b) for a, b in partials), default=0)
    return SymbolField(func=func, order=order, dim=dim, partials=partials,
                       max_order=meta.pop("max_order", max_order), **meta)


def _check_zero_frequency(sym, alpha, xi):
    if not sym.homogeneous or sym.smooth_at_origin:
        return
    if sym.order - sum(alpha) >= 0:
        return
    if np.any(xi_norm(xi, sym.dim) == 0):
        raise ZeroFrequency(
            f"{sym.name or 'symbol'} of order {sym.order} differentiated "
            f"{sum(alpha)} times in xi at xi = 0"
        )


def _shift(arr, dim, axis, amount):
    arr = np.asarray(arr, dtype=float)
    if dim == 1:
        return arr + amount
    comp = [arr[i] + amount if i == axis else arr[i] for i in range(dim)]
    comp = np.broadcast_arrays(*comp)
    return np.stack(comp)


def _stencil(n):
    """Offsets (in units of h) and weights of the central n-th derivative."""
    offs = [n / 2 - j for j in range(n + 1)]
    wts = [(-1) ** j * factorial(n) / (factorial(j) * factorial(n - j)) for j in range(n + 1)]
    return offs, wts


def finite_difference(sym, alpha, beta, t, x, xi, h_x, h_xi):
    """Central finite-difference partial ``d_xi^alpha d_x^beta`` with given steps.

    ``h_xi`` may be an array (relative steps); ``h_x`` is a scalar.
    The stencil is the tensor product of second-order central stencils.
    """
    dim = sym.dim
    alpha = _as_index(alpha, dim)
    beta = _as_index(beta, dim)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    axes = [("xi", i, n) for i, n in enumerate(alpha) if n] + [("x", i, n) for i, n in enumerate(beta) if n]
    if not axes:
        return sym.func(t, x, xi)
    stencils = [_stencil(n) for _, _, n in axes]
    total = 0.0
    for combo in product(*[range(len(s[0])) for s in stencils]):
        xs, xis, weight = x, xi, 1.0
        for (kind, i, _), (offs, wts), c in zip(axes, stencils, combo):
            weight = weight * wts[c]
            if kind == "xi":
                xis = _shift(xis, dim, i, offs[c] * h_xi)
            else:
                xs = _shift(xs, dim, i, offs[c] * h_x)
        total = total + weight * sym.func(t, xs, xis)
    scale = 1.0
    for (kind, _, n) in axes:
        scale = scale * (h_xi if kind == "xi" else h_x) ** n
    return total / scale


def _fd_step(total_order):
    # order 1 uses the fixed relative step; higher orders balance truncation
    # against cancellation (eps^(1/(k+2)))
    if total_order <= 1:
        return FD_REL_STEP
    return np.finfo(float).eps ** (1.0 / (total_order + 2))


def eval_deriv(sym, alpha, beta, t, x, xi):
    """Partial derivative ``d_xi^alpha d_x^beta`` of a symbol.

    Parameters
    ----------
    sym : SymbolField
    alpha, beta : int or tuple of int
        Multi-indices for xi and x.
    t, x, xi : array_like
        Evaluation point(s).

    Returns
    -------
    ndarray
        Analytic partial when a closure exists, otherwise a central
        finite difference.

    Raises
    ------
    ZeroFrequency
        Homogeneous symbol with negative residual degree evaluated at xi = 0.
    OrderExceeded
        Total order above 4 without an analytic closure.
    """
    alpha = _as_index(alpha, sym.dim)
    beta = _as_index(beta, sym.dim)
    _check_zero_frequency(sym, alpha, xi)
    key = (alpha, beta)
    if key in sym.partials:
        return sym.partials[key](t, x, xi)
    k = sum(alpha) + sum(beta)
    if k == 0:
        return sym.func(t, x, xi)
    if sym.dim == 1 and sym.homogeneous and alpha[0] > 0:
        # in one dimension f = g(x, sign xi) |xi|^m, so each xi-derivative
        # multiplies by (m - j) / xi exactly
        c = _falling(sym.order, alpha[0])
        if c == 0:
            return zero_partial(t, x, xi)
        return c * eval_deriv(sym, 0, beta, t, x, xi) / np.asarray(xi, dtype=float) ** alpha[0]
    if k > FD_MAX_ORDER:
        raise OrderExceeded(f"derivative of total order {k} needs an analytic closure")
    s = _fd_step(k)
    return finite_difference(sym, alpha, beta, t, x, xi, h_x=s, h_xi=s * (1.0 + xi_norm(xi, sym.dim)))


def _falling(m, n):
    out = 1.0
    for j in range(n):
        out *= m - j
    return out


def is_structural_zero(sym, alpha, beta):
    """True when ``d_xi^alpha d_x^beta sym`` is known to vanish identically."""
    alpha = _as_index(alpha, sym.dim)
    beta = _as_index(beta, sym.dim)
    closure = sym.partials.get((alpha, beta))
    if closure is not None:
        return bool(getattr(closure, "structural_zero", False))
    if sym.dim == 1 and sym.homogeneous and alpha[0] > 0:
        return _falling(sym.order, alpha[0]) == 0
    return False


@dataclass(frozen=True)
class PhaseField:
    """Hamiltonian vector field (d_xi a, -d_x a) of a first-order symbol."""

    symbol: SymbolField

    def __call__(self, t, x, xi):
        d = self.symbol.dim
        if d == 1:
            return (np.real(eval_deriv(self.symbol, 1, 0, t, x, xi)),
                    -np.real(eval_deriv(self.symbol, 0, 1, t, x, xi)))
        unit = np.eye(d, dtype=int)
        dx = np.stack([np.real(eval_deriv(self.symbol, tuple(unit[i]), None, t, x, xi)) for i in range(d)])
        dxi = np.stack([-np.real(eval_deriv(self.symbol, None, tuple(unit[i]), t, x, xi)) for i in range(d)])
        return dx, dxi


def hamiltonian_fields(a1, b1):
    """Diffusion and drift fields of the bicharacteristic system.

    Returns
    -------
    (PhaseField, PhaseField)
        ``(d_xi a1, -d_x a1)`` and ``(d_xi b1, -d_x b1)``.
    """
    for sym in (a1, b1):
        if not sym.homogeneous or not np.isclose(sym.order, 1.0) or not sym.real_principal:
            raise SymbolError(f"{sym.name or 'symbol'} must be real and homogeneous of degree 1")
    if a1.dim != b1.dim:
        raise SymbolError("diffusion and drift symbols differ in dimension")
    return PhaseField(a1), PhaseField(b1)


def _unit_indices(dim):
    return [tuple(int(i == k) for i in range(dim)) for k in range(dim)]


def poisson_bracket(a, q):
    """Poisson bracket ``sum_i d_xi_i a d_x_i q ... `` as a new symbol.

    Returns the symbol ``sum_i (d_x_i a d_xi_i q - d_xi_i a d_x_i q)``. With this
    sign, ``H_a q = poisson_bracket(q, a)`` is the derivative of ``q`` along
    the flow ``x' = d_xi a, xi' = -d_x a``.
    """
    if a.dim != q.dim:
        raise SymbolError("symbols differ in dimension")
    units = _unit_indices(a.dim)
    zero = (0,) * a.dim

    def func(t, x, xi):
        out = 0.0
        for e in units:
            out = out + eval_deriv(a, zero, e, t, x, xi) * eval_deriv(q, e, zero, t, x, xi)
            out = out - eval_deriv(a, e, zero, t, x, xi) * eval_deriv(q, zero, e, t, x, xi)
        return out

    return SymbolField(
        func=func, order=a.order + q.order - 1, dim=a.dim,
        homogeneous=a.homogeneous and q.homogeneous,
        real_principal=a.real_principal and q.real_principal,
        smooth_at_origin=a.smooth_at_origin and q.smooth_at_origin,
        name=f"{{{a.name},{q.name}}}",
    )


def commutator_expansion(Q, a, N):
    """Homogeneous expansion of the symbol of ``[Op(Q), -i Op(a)]``.

    Term ``n`` (degree ``m_Q + m_a - 1 - n``) collects
    ``(-i)^(|g|+1) / g! (d_xi^g Q_j d_x^g a_k - d_xi^g a_k d_x^g Q_j)``
    over ``j + k + |g| - 1 == n``, ``|g| >= 1``. The degree-0 term equals
    ``poisson_bracket(Q_0, a_0)``.

    Parameters
    ----------
    Q, a : SymbolExpansion
    N : int
        Last degree offset kept; terms ``n = 0..N`` are exact.

    Raises
    ------
    OrderExceeded
        ``N > 3`` and some needed derivative has no analytic closure.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    if len(Q) == 0 or len(a) == 0:
        return SymbolExpansion((), 0.0)
    dim = Q.dim
    if N > FD_MAX_ORDER - 1:
        need = N + 1
        for sym in tuple(Q.terms) + tuple(a.terms):
            if sym.max_order < need:
                raise OrderExceeded(f"expansion to N={N} needs analytic partials of order {need}")
    zero = (0,) * dim
    base = Q.base_order + a.base_order - 1
    terms = []
    for n in range(N + 1):
        pieces = []
        for j, Qj in enumerate(Q.terms):
            for k, ak in enumerate(a.terms):
                g_abs = n + 1 - j - k
                if g_abs < 1:
                    continue
                for g in multi_indices(dim, g_abs):
                    coef = (-1j) ** (g_abs + 1) / np.prod([factorial(gi) for gi in g])
                    # each half is (coef, Q factor, its indices, a factor, its indices)
                    if not (is_structural_zero(Qj, g, zero) or is_structural_zero(ak, zero, g)):
                        pieces.append((coef, Qj, (g, zero), ak, (zero, g)))
                    if not (is_structural_zero(ak, g, zero) or is_structural_zero(Qj, zero, g)):
                        pieces.append((-coef, Qj, (zero, g), ak, (g, zero)))
        terms.append(_commutator_term(pieces, base - n, dim, Q, a))
    return SymbolExpansion(terms, base)


def _commutator_term(pieces, degree, dim, Q, a):
    def func(t, x, xi):
        out = 0.0
        for coef, Qj, qidx, ak, aidx in pieces:
            out = out + coef * eval_deriv(ak, *aidx, t, x, xi) * eval_deriv(Qj, *qidx, t, x, xi)
        shape = np.broadcast_shapes(np.shape(t), np.shape(xi_norm(xi, dim)),
                                    np.shape(x)[1:] if dim == 2 else np.shape(x))
        return np.broadcast_to(out, shape) + 0.0j

    homog = all(s.homogeneous for s in tuple(Q.terms) + tuple(a.terms))
    return SymbolField(func=func, order=degree, dim=dim, homogeneous=homog,
                       real_principal=False, name=f"commutator[{degree:g}]",
                       params={"structural_zero": not pieces})


def cutoff(s):
    """Smooth cutoff: 1 for |s| <= 1, 0 for |s| >= 2, C-infinity in between."""
    s = np.abs(np.asarray(s, dtype=float)) - 1.0
    s = np.clip(s, 0.0, 1.0)
    f0 = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    r = 1.0 - s
    f1 = np.where(r > 0, np.exp(-1.0 / np.where(r > 0, r, 1.0)), 0.0)
    return f1 / (f0 + f1)


@dataclass(frozen=True)
class CutoffChain:
    """Cutoff function and decreasing excision radii ``epsilons``."""

    epsilons: tuple
    chi: object = cutoff

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if any(e <= 0 for e in eps):
            raise ValueError("epsilons must be positive")
        if any(b > a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be non-increasing")


def asymptotic_sum(expansion, chain):
    """Excised sum ``q = sum_j (1 - chi(eps_j |xi|)) q_j``.

    Each term is evaluated only where its excision factor is non-zero, so
    homogeneous terms are never touched at xi = 0.
    """
    n = len(expansion)
    if len(chain.epsilons) < n:
        raise ValueError("need one epsilon per expansion term")
    dim = expansion.dim

    def func(t, x, xi):
        r = xi_norm(xi, dim)
        safe_xi = np.where(r > 0, xi, 1.0)
        out = np.zeros(np.shape(r), dtype=complex)
        for qj, eps in zip(expansion.terms, chain.epsilons):
            w = 1.0 - chain.chi(eps * r)
            if not np.any(w > 0):
                continue
            out = out + np.where(w > 0, w * qj.func(t, x, safe_xi), 0.0)
        return out

    return SymbolField(func=func, order=expansion.base_order if n else 0.0, dim=dim,
                       homogeneous=False, smooth_at_origin=True,
                       real_principal=all(q.real_principal for q in expansion.terms),
                       name="asymptotic_sum")


@dataclass(frozen=True)
class SymbolClassEstimate:
    """Sampled estimate of a symbol-class constant C(alpha, beta, K)."""

    alpha: tuple
    beta: tuple
    box: tuple
    constant_hat: float
    sample_grid: dict
    stable: bool
    coarse_hat: float


def _sample_points(box, dim, n_x, bands, n_xi):
    """Tensor samples over the box in x and over dyadic shells in xi."""
    axes = [np.linspace(lo, hi, n_x) for lo, hi in box]
    radii = np.concatenate([np.geomspace(lo, hi, n_xi) for lo, hi in bands])
    if dim == 1:
        xi = np.concatenate([radii, -radii])
        X, XI = np.meshgrid(axes[0], xi, indexing="ij")
        return X, XI
    theta = np.linspace(0.0, 2 * np.pi, 2 * n_xi, endpoint=False)
    g = np.meshgrid(axes[0], axes[1], radii, theta, indexing="ij")
    x = np.stack([g[0], g[1]])
    xi = np.stack([g[2] * np.cos(g[3]), g[2] * np.sin(g[3])])
    return x, xi


def _class_sup(sym, alpha, beta, t, box, n_x, bands, n_xi):
    x, xi = _sample_points(box, sym.dim, n_x, bands, n_xi)
    vals = np.abs(eval_deriv(sym, alpha, beta, t, x, xi))
    weight = (1.0 + xi_norm(xi, sym.dim)) ** (sum(alpha) - sym.order)
    return float(np.max(vals * weight))


def symbol_class_probe(sym, box, ab_max, bands, t=0.0, n_x=17, n_xi=16, tol=0.05):
    """Estimate ``max |d_xi^a d_x^b sym| (1+|xi|)^(|a|-m)`` for all ``|a|+|b| <= ab_max``.

    Each estimate is recomputed once on a doubled sample grid; ``stable`` is
    set when the two values agree within ``tol`` (relative). The refined
    value is reported.

    Parameters
    ----------
    sym : SymbolField
    box : sequence of (lo, hi)
        Compact x-box, one pair per dimension.
    ab_max : int
    bands : sequence of (lo, hi)
        Frequency shells ``lo <= |xi| <= hi``.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    bands = tuple((float(lo), float(hi)) for lo, hi in bands)
    out = []
    for total in range(ab_max + 1):
        for k in range(total + 1):
            for alpha in multi_indices(sym.dim, k):
                for beta in multi_indices(sym.dim, total - k):
                    c0 = _class_sup(sym, alpha, beta, t, box, n_x, bands, n_xi)
                    c1 = _class_sup(sym, alpha, beta, t, box, 2 * n_x - 1, bands, 2 * n_xi)
                    stable = abs(c1 - c0) <= tol * max(c1, 1e-300) or c1 == c0
                    out.append(SymbolClassEstimate(
                        alpha=alpha, beta=beta, box=box, constant_hat=c1,
                        sample_grid={"n_x": 2 * n_x - 1, "n_xi": 2 * n_xi, "bands": bands},
                        stable=bool(stable), coarse_hat=c0))
    return out


def choose_epsilons(expansion, box, bands, n_x=17, n_xi=16):
    """Excision radii from sampled class constants.

    ``eps_j = min(eps_{j-1}, 2^-j, min_{|a+b| <= j} 1 / C_hat(a, b, q_j))``.
    """
    eps = []
    prev = 1.0
    for j, qj in enumerate(expansion.terms):
        cands = [prev, 2.0 ** (-j)]
        for est in symbol_class_probe(qj, box, j, bands, n_x=n_x, n_xi=n_xi):
            if est.constant_hat > 0:
                cands.append(1.0 / est.constant_hat)
        prev = min(cands)
        eps.append(prev)
    return CutoffChain(tuple(eps))


def remainder_profile(q, expansion, k, box, r_values=range(3, 9), t=0.0, n_x=17, n_xi=32):
    """Sup over dyadic shells of ``|q - sum_{j<k} q_j| |xi|^(k-m)``.

    Differences at the level of cancellation error in double precision
    (``64 eps`` times the largest summand) count as zero, so an exactly
    vanishing remainder is reported as 0 rather than amplified rounding.

    Returns
    -------
    ndarray
        One value per shell ``2^r <= |xi| <= 2^(r+1)``.
    """
    m = expansion.base_order
    dim = expansion.dim
    out = []
    for r in r_values:
        x, xi = _sample_points(box, dim, n_x, [(2.0 ** r, 2.0 ** (r + 1))], n_xi)
        total = q.func(t, x, xi)
        rem = total
        scale = np.abs(total)
        for qj in expansion.terms[:k]:
            vj = qj.func(t, x, xi)
            rem = rem - vj
            scale = np.maximum(scale, np.abs(vj))
        rem = np.where(np.abs(rem) <= 64 * np.finfo(float).eps * scale, 0.0, rem)
        out.append(float(np.max(np.abs(rem) * xi_norm(xi, dim) ** (k - m))))
    return np.array(out)


def homogeneity_defect(sym, t, x, xi, lam):
    """Relative defect ``|a(lam xi) - lam^m a(xi)| / (lam^m |a(xi)|)`` (max)."""
    xi = np.asarray(xi, dtype=float)
    base = sym.func(t, x, xi)
    scaled = sym.func(t, x, lam * xi)
    ref = lam ** sym.order * base
    denom = np.maximum(np.abs(ref), 1e-300)
    return float(np.max(np.where(np.abs(ref) > 0, np.abs(scaled - ref) / denom, np.abs(scaled))))
