"""Versioned JSON scenario files.

Unknown keys are errors; every error names the offending field path.
"""

import copy
import hashlib
import json
from dataclasses import dataclass

from .brownian import is_power_of_two
from .errors import ConfigError
from .grid import DATA
from .library import LIBRARY

SCHEMA_VERSION = 1

_REQUIRED = object()

# field -> (type(s), default); nested dicts have their own tables
_SYMBOL = {"name": (str, _REQUIRED), "params": (dict, {})}
_DATUM = {"name": (str, _REQUIRED), "params": (dict, {})}
_GRID = {"d": (int, 1), "N": (int, 1024), "L": ((int, float), 256.0)}
_TIME = {"T": ((int, float), 1.0), "n_steps": (int, 1024)}
_DETECTOR = {"threshold": ((int, float), 2.5), "window_width": ((int, float, type(None)), None),
             "candidate_stride": (int, 4), "n_directions": (int, 16)}
_TOLERANCES = {"x_tol": ((int, float), 2.0), "angle_tol": ((int, float), 10.0)}
_POINT = {"x": ((int, float, list), 0.5), "xi": ((int, float, list), 1.0)}
_TOP = {
    "schema_version": (int, SCHEMA_VERSION),
    "name": (str, _REQUIRED),
    "a": (dict, {"name": "zero"}),
    "b": (dict, {"name": "zero"}),
    "grid": (dict, {}),
    "time": (dict, {}),
    "seed": (int, 0),
    "datum": (dict, {"name": "gaussian"}),
    "detector": (dict, {}),
    "tolerances": (dict, {}),
    "solver": (str, "spde"),
    "frame_every": ((int, type(None)), None),
    "ladder": ((list, type(None)), None),
    "p0": (dict, {}),
}
_NESTED = {"a": _SYMBOL, "b": _SYMBOL, "datum": _DATUM, "grid": _GRID, "time": _TIME,
           "detector": _DETECTOR, "tolerances": _TOLERANCES, "p0": _POINT}


def _fill(raw, table, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(raw) - set(table))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    out = {}
    for key, (typ, default) in table.items():
        where = f"{path}.{key}" if path else key
        if key in raw:
            val = raw[key]
            if isinstance(val, bool) or not isinstance(val, typ):
                raise ConfigError(where, f"wrong type {type(val).__name__}")
        elif default is _REQUIRED:
            raise ConfigError(where, "missing required key")
        else:
            val = copy.deepcopy(default)
        out[key] = val
    return out


@dataclass(frozen=True)
class Scenario:
    """Validated scenario; ``data`` holds the fully defaulted JSON object."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    def digest(self):
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()

    def with_seed(self, seed):
        d = self.to_dict()
        d["seed"] = int(seed)
        return parse_scenario(d)


def parse_scenario(raw):
    """Validate and default a scenario object.

    Raises
    ------
    ConfigError
        With the dotted path of the first offending field.
    """
    top = _fill(raw, _TOP, "")
    if top["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {top['schema_version']}")
    for key, table in _NESTED.items():
        top[key] = _fill(top[key], table, key)
    for key in ("a", "b"):
        if top[key]["name"] not in LIBRARY:
            raise ConfigError(f"{key}.name", f"unknown symbol {top[key]['name']!r}")
    if top["datum"]["name"] not in DATA:
        raise ConfigError("datum.name", f"unknown datum {top['datum']['name']!r}")
    g = top["grid"]
    if g["d"] not in (1, 2):
        raise ConfigError("grid.d", "must be 1 or 2")
    if not is_power_of_two(g["N"]):
        raise ConfigError("grid.N", "must be a power of two")
    if not is_power_of_two(top["time"]["n_steps"]) or top["time"]["n_steps"] < 2:
        raise ConfigError("time.n_steps", "must be a power of two >= 2")
    d_name = top["datum"]["name"]
    if (d_name == "line_singularity_2d") != (g["d"] == 2) and d_name not in ("gaussian", "plane_wave"):
        raise ConfigError("datum.name", f"datum {d_name!r} incompatible with d={g['d']}")
    if top["solver"] not in ("spde", "characteristics"):
        raise ConfigError("solver", "must be 'spde' or 'characteristics'")
    if top["ladder"] is not None:
        lad = top["ladder"]
        if not lad or not all(is_power_of_two(n) for n in lad) or sorted(lad) != lad:
            raise ConfigError("ladder", "must be ascending powers of two")
    return Scenario(top)


def load_scenario(filename):
    with open(filename) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
    return parse_scenario(raw)
