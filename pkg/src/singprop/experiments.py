"""Scenario runners: flows, SPDE solves, singularity propagation, convergence ladders.

Every runner writes plot-ready CSV and JSON files into ``out`` and returns a
:class:`RunManifest`. Data files are byte-identical across runs with the same
scenario; only the manifest's wall-clock field varies.
"""

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .brownian import coarsen, derive_seed, sample_brownian
from .errors import ConfigError, SingpropError
from .flow import PhasePoint, homogeneity_check, integrate_flow
from .grid import DATA, PeriodicGrid, bandlimit
from .library import coefficient_of, from_spec
from .microlocal import (compare_wf, default_candidates, detect_wavefront, export_report_json,
                         export_wf_csv, push_forward_wf)
from .spde import export_frames_csv, export_spectra_csv, solve_characteristics, solve_spde


@dataclass
class RunManifest:
    """Provenance of one run: inputs, artifact hashes and check outcomes."""

    scenario_hash: str
    seed: int
    tool_version: str
    artifacts: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    checks: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _sha256(filename):
    with open(filename, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _finish(manifest, out, files, t0, stem):
    manifest.artifacts = {os.path.basename(f): _sha256(f) for f in files}
    manifest.wall_clock_s = time.perf_counter() - t0
    with open(os.path.join(out, f"{stem}_manifest.json"), "w") as fh:
        json.dump(_jsonable(manifest.to_dict()), fh, indent=2, sort_keys=True)
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(obj, filename):
    with open(filename, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)


def scenario_path(sc):
    """Master Brownian path of a scenario (sub-seed ``"path"``)."""
    return sample_brownian(derive_seed(sc["seed"], "path"), sc["time"]["T"], sc["time"]["n_steps"])


def scenario_grid(sc):
    g = sc["grid"]
    return PeriodicGrid(g["d"], g["N"], g["L"])


def scenario_datum(sc, grid):
    return DATA[sc["datum"]["name"]](grid, **sc["datum"]["params"])


def scenario_symbols(sc):
    return from_spec(sc["a"], "a"), from_spec(sc["b"], "b")


def check_periodic_coefficients(sc):
    """Coefficient frequencies ``k`` must fit the grid period: ``k L / 2 pi`` integer.

    Otherwise the coefficient jumps at the period seam and the grid solution
    acquires spurious singularities.

    Raises
    ------
    ConfigError
    """
    L = sc["grid"]["L"]
    for key in ("a", "b"):
        spec = sc[key]
        if spec["name"] not in ("variable_transport", "halfwave"):
            continue
        k = from_spec(spec, key).params["k"]
        m = k * L / (2 * np.pi)
        if abs(m - round(m)) > 1e-9 or round(m) == 0:
            raise ConfigError(f"{key}.params.k", f"k*L/(2 pi) = {m:.6g} must be a nonzero integer "
                                                 f"for grid period L = {L}")


def _point(sc):
    p = sc["p0"]
    return PhasePoint(np.asarray(p["x"], dtype=float), np.asarray(p["xi"], dtype=float))


# ---------------------------------------------------------------- run_flow


def run_flow(sc, out):
    """Integrate the bicharacteristic flow from ``p0``; trajectory CSV and homogeneity report."""
    t0 = time.perf_counter()
    os.makedirs(out, exist_ok=True)
    a1, b1 = scenario_symbols(sc)
    path = scenario_path(sc)
    p0 = _point(sc)
    man = RunManifest(sc.digest(), sc["seed"], __version__)
    traj = integrate_flow(a1, b1, path, p0)
    traj_file = os.path.join(out, "flow_trajectory.csv")
    with open(traj_file, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "w", "x", "xi"])
        for t, w, x, xi in zip(traj.times, path.cumulative, traj.x, traj.xi):
            wr.writerow([repr(float(t)), repr(float(w)), repr(float(np.ravel(x)[0])),
                         repr(float(np.ravel(xi)[0]))])
    man.checks["finite"] = bool(np.all(np.isfinite(traj.x)) and np.all(np.isfinite(traj.xi)))
    report = {"final": {"x": np.ravel(traj.x[-1]).tolist(), "xi": np.ravel(traj.xi[-1]).tolist()}}
    if a1.homogeneous and a1.order == 1.0:
        dev = max(homogeneity_check(a1, b1, path, p0, lam) for lam in (2.0, 10.0))
        report["homogeneity_deviation"] = dev
        man.checks["homogeneity"] = bool(dev <= 1e-6)
    man.measured = report
    rep_file = os.path.join(out, "flow_report.json")
    _write_json(report, rep_file)
    return _finish(man, out, [traj_file, rep_file], t0, "flow")


# ---------------------------------------------------------------- run_spde


def solve_scenario(sc, path=None, grid=None, u0=None):
    """Solve the scenario's SPDE with its configured solver; returns (solution, u0)."""
    grid = scenario_grid(sc) if grid is None else grid
    path = scenario_path(sc) if path is None else path
    if u0 is None:
        u0 = scenario_datum(sc, grid)
    check_periodic_coefficients(sc)
    a, b = scenario_symbols(sc)
    if sc["solver"] == "characteristics":
        alpha, _ = coefficient_of(a)
        beta, _ = coefficient_of(b)
        return solve_characteristics(alpha, beta, u0, path, sc["frame_every"]), u0
    u0 = bandlimit(u0)
    return solve_spde(a, b, u0, path, sc["frame_every"]), u0


def run_spde(sc, out):
    """Solve and export frames, spectra and a manifest."""
    t0 = time.perf_counter()
    os.makedirs(out, exist_ok=True)
    man = RunManifest(sc.digest(), sc["seed"], __version__)
    try:
        sol, _ = solve_scenario(sc)
    except ConfigError:
        raise
    except SingpropError as exc:
        man.checks["solved"] = False
        man.measured = {"error": f"{type(exc).__name__}: {exc}"}
        return _finish(man, out, [], t0, "spde")
    frames = os.path.join(out, "spde_frames.csv")
    spectra = os.path.join(out, "spde_spectra.csv")
    export_frames_csv(sol, frames)
    export_spectra_csv(sol, spectra)
    man.checks["solved"] = True
    man.checks["finite"] = bool(all(np.all(np.isfinite(f.values)) for f in sol.frames))
    man.measured = {"frames": len(sol.frames), "final_l2": sol.final.l2(), "scheme": sol.scheme,
                    **sol.diagnostics}
    return _finish(man, out, [frames, spectra], t0, "spde")


# ---------------------------------------------------------- run_propagation


def propagation_report(sc, path=None):
    """Detect WF(u0) and WF(u(T)), push WF(u0) forward, compare. Returns a dict."""
    grid = scenario_grid(sc)
    path = scenario_path(sc) if path is None else path
    sol, u0 = solve_scenario(sc, path=path, grid=grid)
    det = sc["detector"]
    cands = default_candidates(grid, det["candidate_stride"], det["n_directions"])
    kw = {"window_width": det["window_width"], "threshold": det["threshold"]}
    wf0 = detect_wavefront(u0, cands, **kw)
    wfT = detect_wavefront(sol.final, cands, **kw)
    loc0, locT = wf0.localized(), wfT.localized()
    a, b = scenario_symbols(sc)
    pred = push_forward_wf(loc0, a, b, path, path.T)
    tol = sc["tolerances"]
    rep = compare_wf(locT, pred, tol["x_tol"], tol["angle_tol"])
    return {"report": rep, "wf0": wf0, "wfT": wfT, "detected": locT, "predicted": pred,
            "w_T": float(path.cumulative[-1]), "diagnostics": sol.diagnostics}


def run_propagation(sc, out):
    """End-to-end check that singularities travel along the bicharacteristic flow."""
    t0 = time.perf_counter()
    os.makedirs(out, exist_ok=True)
    man = RunManifest(sc.digest(), sc["seed"], __version__)
    res = propagation_report(sc)
    files = [os.path.join(out, n) for n in ("wf_initial.csv", "wf_final.csv", "wf_predicted.csv",
                                            "wf_comparison.json")]
    export_wf_csv(res["wf0"], files[0])
    export_wf_csv(res["wfT"], files[1])
    export_wf_csv(res["predicted"], files[2])
    export_report_json(res["report"], files[3])
    rep = res["report"]
    man.checks["wavefront_match"] = rep.passed
    man.measured = {"vacuous": rep.vacuous, "max_position_error_cells": rep.max_position_error_cells,
                    "max_angle_error_deg": rep.max_angle_error_deg,
                    "n_detected": len(res["detected"].samples), "n_predicted": len(res["predicted"].samples),
                    **res["diagnostics"]}
    return _finish(man, out, files, t0, "propagation")


# --------------------------------------------------------- run_convergence


def observed_order(dts, errors):
    """Least-squares slope of ``log error`` against ``log dt``; ``None`` if all errors vanish."""
    e = np.asarray(errors, dtype=float)
    if np.all(e <= 1e-13):
        return None
    mask = e > 0
    return float(np.polyfit(np.log(np.asarray(dts)[mask]), np.log(e[mask]), 1)[0])


def _flow_closed_form(a1, p0, w, T):
    """Closed-form endpoint for library symbols that have one, else None."""
    name = a1.name
    if name == "linear_phase":
        return p0.x * np.exp(w), p0.xi * np.exp(-w)
    if name == "constant_transport":
        return p0.x + a1.params["c"] * w, p0.xi
    if name == "zero":
        return p0.x, p0.xi
    return None


def run_convergence(sc, out, ladder=None, target=None):
    """Errors against a reference across a dyadic ladder and the observed order.

    ``target`` is ``"flow"`` (reference: closed form if known, else finest
    level) or ``"spde"`` (reference: the characteristics oracle on the same
    path). Defaults to ``"spde"`` when the scenario solver is ``spde`` and the
    diffusion symbol is a first-order transport symbol, else ``"flow"``.
    """
    t0 = time.perf_counter()
    os.makedirs(out, exist_ok=True)
    ladder = sorted(ladder or sc["ladder"] or [2 ** k for k in range(8, 13)])
    man = RunManifest(sc.digest(), sc["seed"], __version__)
    a, b = scenario_symbols(sc)
    if target is None:
        target = "spde" if (sc["solver"] == "spde" and "transport" in a.name) else "flow"
    master = sample_brownian(derive_seed(sc["seed"], "path"), sc["time"]["T"], ladder[-1])
    errors = []
    if target == "flow":
        p0 = _point(sc)
        exact = _flow_closed_form(a, p0, master.cumulative[-1], master.T) if b.name == "zero" else None
        ends = []
        for n in ladder:
            tr = integrate_flow(a, b, coarsen(master, ladder[-1] // n), p0, store=False)
            ends.append((tr.x[-1], tr.xi[-1]))
        ref = exact if exact is not None else ends[-1]
        levels = ladder if exact is not None else ladder[:-1]
        for (x, xi) in ends[: len(levels)]:
            errors.append(float(np.max(np.abs(np.concatenate([np.ravel(x - ref[0]), np.ravel(xi - ref[1])])))))
        reference = "closed_form" if exact is not None else "finest_level"
    else:
        check_periodic_coefficients(sc)
        grid = scenario_grid(sc)
        u0 = bandlimit(scenario_datum(sc, grid))
        alpha, _ = coefficient_of(a)
        beta, _ = coefficient_of(b)
        levels = ladder
        for n in ladder:
            p = coarsen(master, ladder[-1] // n)
            us = solve_spde(a, b, u0, p, n).final.values
            uc = solve_characteristics(alpha, beta, u0, p, n).final.values
            errors.append(float(np.max(np.abs(us - uc))))
        reference = "characteristics"
    dts = [master.T / n for n in levels]
    order = observed_order(dts, errors)
    report = {"target": target, "reference": reference, "ladder": list(levels), "errors": errors,
              "observed_order": order, "exact": order is None}
    man.measured = report
    man.checks["finite"] = bool(np.all(np.isfinite(errors)))
    rep_file = os.path.join(out, "convergence.json")
    _write_json(report, rep_file)
    csv_file = os.path.join(out, "convergence.csv")
    with open(csv_file, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n_steps", "dt", "error"])
        for n, dt, e in zip(levels, dts, errors):
            wr.writerow([n, repr(dt), repr(e)])
    return _finish(man, out, [rep_file, csv_file], t0, "convergence")
