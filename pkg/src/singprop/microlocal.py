"""Numerical wave front sets by windowed Fourier decay classification.

At a point ``x`` and covector direction ``theta`` the localized spectrum
``F(xi) = FFT(phi_x u)`` is sampled along the ray (d = 1) or in a 15 degree
cone (d = 2) over the fit band. The decay exponent is the least-squares slope
of ``log|F|`` against ``log|xi|``, fitted from the in-band maximum down to the
first point at the numerical floor. A point is singular in that direction when
the slope exceeds ``-threshold``.
"""

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erfc

from .brownian import truncate
from .errors import EmptyBand
from .flow import PhasePoint, integrate_flow

FLOOR = 1e-14
# fits need at least two magnitudes clear of round-off
NOISE = 10 * FLOOR
# factor by which a profile must rise after its trough to end the fit there
REBOUND = 100.0
CONE_DEG = 15.0
DEFAULT_THRESHOLD = 2.5
# phase estimates are trusted only for singularities well inside the window plateau
LOCATE_FRACTION = 0.25


def default_window_cells(N):
    """Default window half-width in cells: ``min(192, 3N/8)``."""
    return int(min(192, 3 * N // 8))


def default_band(N):
    return (N // 16, N // 3)


@dataclass(frozen=True)
class WindowFunction:
    """Smooth bump: 1 for ``|x - c| <= width/2``, 0 for ``|x - c| >= width`` (per axis).

    The transition is ``erfc((|d| - 3w/4) / (w/24)) / 2``, clamped to the
    support; the clamping error is erfc(6) / 2, about 1e-17.
    """

    center: tuple
    width: float

    def profile(self, dist):
        d = np.abs(dist)
        p = 0.5 * erfc((d - 0.75 * self.width) / (self.width / 24.0))
        p = np.where(d <= 0.5 * self.width, 1.0, p)
        return np.where(d >= self.width, 0.0, p)

    def on_grid(self, grid):
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (grid.d,))
        if grid.d == 1:
            return self.profile(grid.periodic_distance(grid.axis, c[0]))
        p0 = self.profile(grid.periodic_distance(grid.axis, c[0]))
        p1 = self.profile(grid.periodic_distance(grid.axis, c[1]))
        return p0[:, None] * p1[None, :]


@dataclass(frozen=True)
class WaveFrontSample:
    """Classification of one (point, direction) candidate.

    ``x_est`` is the singularity position inferred from the spectral phase
    (d = 1; ``None`` when the estimate falls outside the inner quarter of the
    window), or ``x`` itself for d = 2.
    """

    x: tuple
    direction: tuple
    slope_hat: float
    singular: bool
    x_est: tuple = None


@dataclass(frozen=True, eq=False)
class WaveFrontSet:
    samples: list
    grid: object
    window_width: float
    threshold: float
    meta: dict = field(default_factory=dict)

    @property
    def singular(self):
        return [s for s in self.samples if s.singular]

    def singular_support(self):
        return sorted({s.x for s in self.singular})

    def localized(self, merge_cells=4.0):
        """One representative per singularity (d = 1); all singular samples for d = 2.

        Singular samples sharing a direction whose phase estimates agree within
        ``merge_cells`` are clustered; the representative sits at the grid node
        nearest the cluster's median estimate and carries the slope of the
        most centered window.
        """
        g = self.grid
        sing = [s for s in self.singular if s.x_est is not None]
        if g.d == 2:
            return replace(self, samples=list(sing), meta={**self.meta, "localized": True})
        out = []
        for sgn in (-1.0, 1.0):
            group = sorted((s for s in sing if s.direction[0] == sgn), key=lambda s: s.x_est[0])
            clusters = []
            for s in group:
                if clusters and abs(g.periodic_distance(s.x_est[0], clusters[-1][-1].x_est[0])) <= merge_cells * g.dx:
                    clusters[-1].append(s)
                else:
                    clusters.append([s])
            if len(clusters) > 1 and abs(g.periodic_distance(clusters[0][0].x_est[0],
                                                             clusters[-1][-1].x_est[0])) <= merge_cells * g.dx:
                clusters[0] = clusters.pop() + clusters[0]
            for cl in clusters:
                est = np.array([s.x_est[0] for s in cl])
                ref = est[0]
                med = ref + float(np.median(g.periodic_distance(est, ref)))
                node = (round(med / g.dx) % g.N) * g.dx
                best = min(cl, key=lambda s: abs(g.periodic_distance(s.x_est[0], s.x[0])))
                out.append(WaveFrontSample((node,), (sgn,), best.slope_hat, True, (med % g.L,)))
        out.sort(key=lambda s: (s.x, s.direction))
        return replace(self, samples=out, meta={**self.meta, "localized": True})


# ----------------------------------------------------------------- detection


def _ray_profile(F, grid, direction, band):
    """In-band (|k|, magnitude, k vectors) along the ray or cone, ascending radius."""
    N = grid.N
    lo, hi = band
    if grid.d == 1:
        sgn = 1.0 if direction[0] > 0 else -1.0
        ks = np.arange(int(np.ceil(lo)), int(np.floor(hi)) + 1)
        if ks.size == 0 or hi >= N // 2 + 1 or lo <= 0:
            raise EmptyBand(f"band {band} has no frequencies below Nyquist")
        k = (sgn * ks).astype(int)
        return ks.astype(float), np.abs(F[k % N]), F[k % N], k.astype(float)
    m = grid.modes
    r = np.sqrt(m[0] ** 2 + m[1] ** 2)
    cosang = (m[0] * direction[0] + m[1] * direction[1]) / np.where(r > 0, r, 1.0)
    inside = (r >= lo) & (r <= hi) & (cosang >= np.cos(np.deg2rad(CONE_DEG)))
    if not np.any(inside):
        raise EmptyBand(f"no frequencies in cone and band {band}")
    shell = np.rint(r[inside]).astype(int)
    mags = np.abs(F[inside])
    radii = np.unique(shell)
    peak = np.full(radii.size, 0.0)
    np.maximum.at(peak, np.searchsorted(radii, shell), mags)
    return radii.astype(float), peak, None, None


def _fit(radii, mags):
    """Slope fitted from the in-band maximum to the first floored point.

    If the magnitudes rebound by more than ``REBOUND`` after their minimum,
    the fit ends at that minimum.

    Spectra with fewer than two in-band magnitudes above ``NOISE`` are
    numerically band-limited and get slope ``-inf``.
    """
    mags = np.maximum(mags, FLOOR)
    i0 = int(np.argmax(mags))
    rr, mm = radii[i0:], mags[i0:]
    above = mm > FLOOR
    stop = mm.size if above.all() else int(np.argmin(above)) + 1
    rr, mm = rr[:stop], mm[:stop]
    # a rise after the trough is edge content from hard spectral truncation
    trough = int(np.argmin(mm))
    if trough < mm.size - 1 and mm[trough + 1:].max() > REBOUND * mm[trough]:
        stop = trough + 1
        rr, mm = rr[:stop], mm[:stop]
    if rr.size < 3 or np.count_nonzero(mm > NOISE) < 2:
        return -np.inf, slice(i0, i0)
    return float(np.polyfit(np.log(rr), np.log(mm), 1)[0]), slice(i0, i0 + stop)


def _spectrum(u, window):
    g = u.grid
    return np.fft.fftn(window.on_grid(g) * u.values) / g.N ** g.d


def _classify(F, grid, x0, direction, band, threshold, width):
    radii, mags, coeffs, kvec = _ray_profile(F, grid, direction, band)
    slope, sl = _fit(radii, mags)
    singular = bool(slope > -threshold)
    x_est = tuple(float(c) for c in np.atleast_1d(x0))
    if grid.d == 1 and singular:
        k = kvec[sl]
        xi = 2 * np.pi / grid.L * k
        ph = np.unwrap(np.angle(coeffs[sl] * np.exp(1j * xi * x0[0])))
        off = -np.polyfit(xi, ph, 1)[0]
        x_est = (float((x0[0] + off) % grid.L),) if abs(off) <= LOCATE_FRACTION * width else None
    return WaveFrontSample(tuple(float(c) for c in x0), tuple(float(c) for c in direction),
                           slope, singular, x_est)


def decay_slope(u, x0, direction, window, band=None):
    """Fitted decay exponent of the windowed spectrum along ``direction``.

    Returns ``-inf`` when fewer than three in-band magnitudes sit above the
    1e-14 floor (numerically band-limited, hence regular).

    Raises
    ------
    EmptyBand
        No frequencies in the cone (or ray) intersected with the band.
    """
    g = u.grid
    band = default_band(g.N) if band is None else band
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    radii, mags, _, _ = _ray_profile(_spectrum(u, window), g, direction, band)
    return _fit(radii, mags)[0]


def default_directions(d, n_dir=16):
    if d == 1:
        return [(-1.0,), (1.0,)]
    th = 2 * np.pi * np.arange(n_dir) / n_dir
    return [(float(np.round(np.cos(a), 15)), float(np.round(np.sin(a), 15))) for a in th]


def default_candidates(grid, stride=4, n_dir=16):
    """Every ``stride``-th node (per axis) with all default directions."""
    dirs = default_directions(grid.d, n_dir)
    ax = grid.axis[::stride]
    if grid.d == 1:
        pts = [(float(x),) for x in ax]
    else:
        pts = [(float(x1), float(x2)) for x1 in ax for x2 in ax]
    return [(p, dvec) for p in pts for dvec in dirs]


def detect_wavefront(u, candidates=None, window_width=None, threshold=DEFAULT_THRESHOLD, band=None):
    """Classify every ``(x, direction)`` candidate.

    Parameters
    ----------
    u : GridFunction
    candidates : list of (point, direction), optional
        Defaults to :func:`default_candidates`.
    window_width : float, optional
        Window half-width (physical units); default ``min(192, 3N/8)`` cells.
    threshold : float
        Singular iff fitted slope ``> -threshold``.
    band : (float, float), optional
        Fit band in mode numbers; default ``(N/16, N/3)``.
    """
    g = u.grid
    band = default_band(g.N) if band is None else band
    width = default_window_cells(g.N) * g.dx if window_width is None else float(window_width)
    cands = default_candidates(g) if candidates is None else candidates
    by_point = {}
    for x, dvec in cands:
        key = tuple(float(c) for c in np.atleast_1d(x))
        by_point.setdefault(key, []).append(np.atleast_1d(np.asarray(dvec, dtype=float)))
    samples = []
    for x0 in sorted(by_point):
        F = _spectrum(u, WindowFunction(x0, width))
        for dvec in by_point[x0]:
            dvec = dvec / np.linalg.norm(dvec)
            samples.append(_classify(F, g, np.array(x0), dvec, band, threshold, width))
    return WaveFrontSet(samples, g, width, threshold, {"band": list(band)})


# ----------------------------------------------------------- push-forward


def push_forward_wf(wf0, a1, b1, path, t):
    """Transport the singular samples of ``wf0`` along the bicharacteristic flow to time ``t``.

    Each sample starts at its located position with its unit direction as
    covector; directions are renormalized afterwards (wave front sets are
    conic).
    """
    g = wf0.grid
    sing = wf0.singular
    k = path.step_index(t)
    if not sing or k == 0:
        return replace(wf0, samples=list(sing), meta={**wf0.meta, "pushed_to": float(t)})
    sub = truncate(path, k)
    pos = np.array([s.x_est if s.x_est is not None else s.x for s in sing], dtype=float).T
    dirs = np.array([s.direction for s in sing], dtype=float).T
    if g.d == 1:
        pos, dirs = pos[0], dirs[0]
    traj = integrate_flow(a1, b1, sub, PhasePoint(pos, dirs), store=False)
    x1, xi1 = traj.x[-1], traj.xi[-1]
    out = []
    for i, s in enumerate(sing):
        if g.d == 1:
            xe = (float(x1[i] % g.L),)
            dvec = (float(np.sign(xi1[i])),)
        else:
            xe = tuple(float(c) for c in x1[:, i] % g.L)
            v = xi1[:, i] / np.linalg.norm(xi1[:, i])
            dvec = tuple(float(c) for c in v)
        node = tuple(float((round(c / g.dx) % g.N) * g.dx) for c in xe)
        out.append(WaveFrontSample(node, dvec, s.slope_hat, True, xe))
    return replace(wf0, samples=out, meta={**wf0.meta, "pushed_to": float(t)})


# -------------------------------------------------------------- comparison


@dataclass(frozen=True)
class MatchReport:
    matched_pairs: list
    matched_fraction_detected: float
    matched_fraction_predicted: float
    max_position_error_cells: float
    max_angle_error_deg: float
    passed: bool
    vacuous: bool
    x_tol: float
    angle_tol: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _position(s):
    return s.x_est if s.x_est is not None else s.x


def _angle_deg(u, v):
    c = float(np.clip(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)), -1.0, 1.0))
    return float(np.degrees(np.arccos(c)))


def _cell_distance(grid, p, q):
    diff = grid.periodic_distance(np.asarray(p), np.asarray(q))
    return float(np.linalg.norm(np.atleast_1d(diff))) / grid.dx


def compare_wf(detected, predicted, x_tol=2.0, angle_tol=10.0, exclude=(), exclude_cells=3.0):
    """Greedy one-to-one matching of singular samples.

    Parameters
    ----------
    detected, predicted : WaveFrontSet
    x_tol : float
        Position tolerance in grid cells (periodic distance).
    angle_tol : float
        Direction tolerance in degrees.
    exclude : sequence of points
        Seam mask: samples within ``exclude_cells`` of these points are ignored.

    Returns
    -------
    MatchReport
        ``passed`` iff every sample on each side is matched.
    """
    g = detected.grid

    def keep(s):
        return all(_cell_distance(g, _position(s), np.atleast_1d(e)) > exclude_cells for e in exclude)

    det = [s for s in detected.singular if keep(s)]
    pre = [s for s in predicted.singular if keep(s)]
    pairs = []
    for i, p in enumerate(pre):
        for j, s in enumerate(det):
            dpos = _cell_distance(g, _position(p), _position(s))
            dang = _angle_deg(p.direction, s.direction)
            if dpos <= x_tol and dang <= angle_tol:
                pairs.append((dpos + dang / max(angle_tol, 1e-12), i, j, dpos, dang))
    pairs.sort()
    used_p, used_d, matched = set(), set(), []
    for _, i, j, dpos, dang in pairs:
        if i in used_p or j in used_d:
            continue
        used_p.add(i)
        used_d.add(j)
        matched.append({"predicted": list(_position(pre[i])), "detected": list(_position(det[j])),
                        "direction": list(pre[i].direction), "position_error_cells": dpos,
                        "angle_error_deg": dang})
    fd = len(used_d) / len(det) if det else 1.0
    fp = len(used_p) / len(pre) if pre else 1.0
    return MatchReport(matched, fd, fp,
                       max((m["position_error_cells"] for m in matched), default=0.0),
                       max((m["angle_error_deg"] for m in matched), default=0.0),
                       bool(fd == 1.0 and fp == 1.0), not det and not pre, float(x_tol), float(angle_tol))


# ------------------------------------------------------------------ exports


def export_wf_csv(wf, filename):
    """Rows ``x (per axis), direction components, slope_hat, singular``."""
    d = wf.grid.d
    with open(filename, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow((["x"] if d == 1 else ["x1", "x2"]) + (["dir"] if d == 1 else ["dir1", "dir2"])
                    + ["slope_hat", "singular"])
        for s in wf.samples:
            wr.writerow([repr(c) for c in s.x] + [repr(c) for c in s.direction]
                        + [repr(s.slope_hat), int(s.singular)])


def export_report_json(report, filename):
    with open(filename, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
