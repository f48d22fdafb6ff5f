"""JSON run configuration: defaults, strict key checking, range validation.

Every precondition that can be decided from config values alone is checked
here, and all problems are reported together.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

from .device import ABSORBER_CELLS, GEOMETRIES, TRANSPORT_DELTA, TRANSPORT_EXTENT, TRANSPORT_HALF_WIDTH
from .errors import ConfigError
from .quantum import CIRCUIT_MODES
from .ribbon import EDGE_DELTA, INTERFACES
from .transport import TRANSPORT_ENVELOPE

FORMATS = ("csv", "json", "svg")

DEFAULTS = {
    "lattice": {"a_nm": 470.0, "t": 1.0, "delta": 0.1},
    "grid": {"nk": 200, "n_per_segment": 32},
    # delta of the ribbon and device sections defaults to their own presets
    "ribbon": {"width": 20, "interface": "I12", "k_samples": 128, "delta": EDGE_DELTA,
               "window": 4, "threshold": 0.6},
    "device": {"geometry": "hsbs", "extent": TRANSPORT_EXTENT, "lead_length": 12,
               "half_width": TRANSPORT_HALF_WIDTH, "delta": TRANSPORT_DELTA},
    "transport": {"carrier": 0.0, "gamma": 0.5, "dt": 0.02, "steps": None,
                  "envelope": TRANSPORT_ENVELOPE, "port": None, "valley": 1},
    # null v0 / sigma / pair select the per-command preset (see pipeline.QUANTUM_PRESETS)
    "quantum": {"v0": None, "sigma": None, "delays": {"start": -15.0, "stop": 15.0, "num": 31},
                "pair": None, "leak": 0.0, "pair_rate": 1000.0, "integration_s": 10.0},
    "fit": {"shape": None},  # null: preset per command, inferred for `fit`
    "output": {"dir": "out", "formats": ["csv", "json", "svg"]},
    "seed": 0,
}


@dataclass(frozen=True)
class RunConfig:
    lattice: dict
    grid: dict
    ribbon: dict
    device: dict
    transport: dict
    quantum: dict
    fit: dict
    output: dict
    seed: int

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS}

    def delays(self) -> list:
        d = self.quantum["delays"]
        if isinstance(d, dict):
            n = d["num"]
            step = (d["stop"] - d["start"]) / (n - 1)
            return [d["start"] + i * step for i in range(n)]
        return [float(x) for x in d]


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; raises ConfigError listing every problem."""
    return validate(load_raw(text))


def load_raw(text: str) -> dict:
    """JSON object with duplicate keys rejected; no validation."""
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    return raw


def validate(raw: dict) -> RunConfig:
    errors = []
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if key not in DEFAULTS:
            errors.append(f"{key}: unknown key")
            continue
        if key == "seed":
            cfg["seed"] = val
            continue
        if not isinstance(val, dict):
            errors.append(f"{key}: must be an object")
            continue
        for sub, v in val.items():
            if sub not in DEFAULTS[key]:
                errors.append(f"{key}.{sub}: unknown key")
            else:
                cfg[key][sub] = v

    def need(path, ok, msg):
        if not ok:
            errors.append(f"{path}: {msg}")
        return ok

    lat = cfg["lattice"]
    if need("lattice.a_nm", _is_num(lat["a_nm"]), "must be a number"):
        need("lattice.a_nm", lat["a_nm"] > 0, "must be > 0")
    t_ok = need("lattice.t", _is_num(lat["t"]), "must be a number") and need("lattice.t", lat["t"] > 0, "must be > 0")
    t = lat["t"] if t_ok else 1.0
    for sec in ("lattice", "ribbon", "device"):
        d = cfg[sec]["delta"]
        if need(f"{sec}.delta", _is_num(d), "must be a number"):
            need(f"{sec}.delta", abs(d) < 3 * t, "requires |delta| < 3t")
            if sec != "lattice":
                need(f"{sec}.delta", d != 0, "must be nonzero (gapped domains)")

    g = cfg["grid"]
    need("grid.nk", _is_int(g["nk"]) and g["nk"] >= 24, "must be an integer >= 24")
    need("grid.n_per_segment", _is_int(g["n_per_segment"]) and g["n_per_segment"] >= 2, "must be an integer >= 2")

    r = cfg["ribbon"]
    need("ribbon.width", _is_int(r["width"]) and r["width"] >= 8, "must be an integer >= 8")
    need("ribbon.interface", r["interface"] in INTERFACES, f"must be one of {list(INTERFACES)}")
    need("ribbon.k_samples", _is_int(r["k_samples"]) and r["k_samples"] >= 64, "must be an integer >= 64")
    need("ribbon.window", _is_int(r["window"]) and r["window"] >= 1, "must be an integer >= 1")
    need("ribbon.threshold", _is_num(r["threshold"]) and 0 < r["threshold"] < 1, "must lie in (0, 1)")

    dv = cfg["device"]
    need("device.geometry", dv["geometry"] in GEOMETRIES, f"must be one of {list(GEOMETRIES)}")
    ext_ok = need("device.extent", _is_int(dv["extent"]) and dv["extent"] >= 24, "must be an integer >= 24")
    if need("device.lead_length", _is_int(dv["lead_length"]) and dv["lead_length"] >= 10, "must be an integer >= 10"):
        need("device.lead_length", dv["lead_length"] >= ABSORBER_CELLS + 2, "too short for the absorber ramp")
        if ext_ok:
            need("device.lead_length", dv["lead_length"] <= dv["extent"] - 8, "must leave >= 8 cells of arm")
    need("device.half_width", _is_int(dv["half_width"]) and dv["half_width"] >= 4, "must be an integer >= 4")

    tr = cfg["transport"]
    if need("transport.carrier", _is_num(tr["carrier"]), "must be a number") and _is_num(dv["delta"]):
        need("transport.carrier", abs(tr["carrier"]) < abs(dv["delta"]), "must lie inside the bulk gap (-|delta|, |delta|)")
    need("transport.gamma", _is_num(tr["gamma"]) and tr["gamma"] > 0, "must be > 0")
    need("transport.dt", _is_num(tr["dt"]) and 0 < tr["dt"] <= 0.5, "must lie in (0, 0.5]")
    need("transport.steps", tr["steps"] is None or (_is_int(tr["steps"]) and tr["steps"] > 0), "must be null or a positive integer")
    need("transport.envelope", _is_num(tr["envelope"]) and tr["envelope"] >= 4, "must be >= 4 cells")
    need("transport.valley", tr["valley"] in (1, -1) and not isinstance(tr["valley"], bool), "must be +1 or -1")
    if dv["geometry"] in GEOMETRIES:
        ports = ("a", "b", "c", "d") if dv["geometry"] == "hsbs" else ("in", "out")
        need("transport.port", tr["port"] is None or tr["port"] in ports, f"must be one of {list(ports)} for {dv['geometry']}")

    q = cfg["quantum"]
    need("quantum.v0", q["v0"] is None or (_is_num(q["v0"]) and 0 <= q["v0"] <= 1), "must be null or lie in [0, 1]")
    need("quantum.sigma", q["sigma"] is None or (_is_num(q["sigma"]) and q["sigma"] > 0), "must be null or > 0")
    need("quantum.leak", _is_num(q["leak"]) and 0 <= q["leak"] < 1, "must lie in [0, 1)")
    need("quantum.pair_rate", _is_num(q["pair_rate"]) and q["pair_rate"] > 0, "must be > 0")
    need("quantum.integration_s", _is_num(q["integration_s"]) and q["integration_s"] > 0, "must be > 0")
    d = q["delays"]
    if isinstance(d, dict):
        if need("quantum.delays", set(d) == {"start", "stop", "num"}, "object form needs exactly start, stop, num"):
            ok = _is_num(d["start"]) and _is_num(d["stop"]) and d["stop"] > d["start"]
            need("quantum.delays", ok, "needs numeric start < stop")
            need("quantum.delays.num", _is_int(d["num"]) and d["num"] >= 7, "must be an integer >= 7")
    elif isinstance(d, list):
        need("quantum.delays", len(d) >= 7 and all(_is_num(x) for x in d), "needs >= 7 numeric delays")
    else:
        errors.append("quantum.delays: must be a list or {start, stop, num}")
    p = q["pair"]
    if p is not None and need("quantum.pair", isinstance(p, list) and len(p) == 2, "must be null or a list of two mode labels"):
        need("quantum.pair", all(m in CIRCUIT_MODES for m in p), f"modes must be in {list(CIRCUIT_MODES)}")
        need("quantum.pair", p[0] != p[1], "modes must differ")

    need("fit.shape", cfg["fit"]["shape"] in (None, "dip", "peak"), "must be null, 'dip' or 'peak'")
    o = cfg["output"]
    need("output.dir", isinstance(o["dir"], str) and o["dir"] != "", "must be a non-empty string")
    need("output.formats", isinstance(o["formats"], list) and all(f in FORMATS for f in o["formats"]),
         f"must be a list drawn from {list(FORMATS)}")
    need("seed", _is_int(cfg["seed"]) and cfg["seed"] >= 0, "must be a non-negative integer")

    if errors:
        raise ConfigError(errors)
    return RunConfig(**cfg)


def default_config() -> RunConfig:
    return validate({})
