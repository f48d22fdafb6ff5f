"""Command pipelines: each command turns a RunConfig into files plus a manifest."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .device import build_device
from .errors import InvalidParameterError, ValleonError
from .fitting import fit_scan
from .io import branches_json, emit_plot_data, read_hom_csv, sha256, svg_line_plot, write_csv, write_json
from .lattice import DEFAULT_PATH, GapCalibration, band_path, build_lattice_spec, calibrate_to_gap
from .quantum import C_MM_PER_PS, HomScan, Source, cascade_circuit, hom_scan, sample_counts, single_circuit
from .ribbon import S0, build_ribbon, extract_edge_states, group_velocity, ribbon_bands
from .topology import BERRY_SIGN, MOMENT_SIGN, berry_curvature_map, valley_report
from .transport import port_flux, run_transport

COMMANDS = ("bands", "berry", "ribbon", "transport", "hom", "circuit", "fit")
REPRO = ("repro-fig1c", "repro-fig1d", "repro-fig2d", "repro-fig3de",
         "repro-fig4a", "repro-fig4b", "repro-fig4c", "repro-fig4d")

# stream offsets for the per-stage random generators
STAGE_STREAMS = {"counts": 1}

# (circuit, default pair, v0, coherence length in mm, fit shape)
QUANTUM_PRESETS = {
    "hom": ("single", ("c", "d"), 0.956, 1.29, "dip"),
    "circuit": ("cascade", ("c", "f"), 0.956, 1.29, "dip"),
    # off-chip fibre splitter after the straight and Omega interfaces
    "repro-fig4a": ("single", ("c", "d"), 0.969, 1.23, "dip"),
    "repro-fig4b": ("single", ("c", "d"), 0.977, 1.23, "dip"),
    "repro-fig4c": ("cascade", ("c", "f"), 0.956, 1.29, "dip"),
    "repro-fig4d": ("cascade", ("f", "g"), 0.999, 1.29, "peak"),
}

CONVENTIONS = {
    "s0": S0,
    "valley_partition": "nearest BZ corner on the torus; equidistant plaquettes split 1/2 - 1/2",
    "berry_sign": BERRY_SIGN,
    "moment_sign": MOMENT_SIGN,
    "coherence_length": "c * tau_c with tau_c the 1/e half-width of exp(-(tau - tau0)^2 / tau_c^2)",
    "gap_calibration": GapCalibration.convention,
    "bloch_gauge": "periodic: f(k) = -t sum_j exp(i k.(delta_j - delta_1))",
}


class PipelineError(ValleonError):
    def __init__(self, stage, config_path, cause):
        self.stage, self.config_path, self.cause = stage, config_path, cause
        super().__init__(f"stage '{stage}' ({config_path}): {type(cause).__name__}: {cause}")


class _Run:
    def __init__(self, cfg: RunConfig, command: str, out_dir):
        self.cfg = cfg
        self.command = command
        self.out = Path(out_dir if out_dir is not None else cfg.output["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.formats = tuple(cfg.output["formats"])
        self.files = []
        self.stages = []
        self.extra = {}

    def stage(self, name, config_path, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kw)
        except ValleonError as exc:
            raise PipelineError(name, config_path, exc) from exc
        self.stages.append({"name": name, "wall_time_s": time.perf_counter() - t0})
        return result

    def rng(self, stream: str):
        return np.random.default_rng([self.cfg.seed, STAGE_STREAMS[stream]])

    def emit(self, artifact, stem, formats=None):
        for f in formats or self.formats:
            if f in self.formats:
                self.files.append(emit_plot_data(artifact, f, self.out / f"{stem}.{f}"))

    def json(self, name, obj):
        self.files.append(write_json(self.out / name, obj))

    def svg(self, name, text):
        if "svg" in self.formats:
            p = self.out / name
            p.write_text(text)
            self.files.append(p)

    def manifest(self) -> dict:
        m = {
            "artifact_version": __version__,
            "command": self.command,
            "config": self.cfg.to_dict(),
            "conventions": CONVENTIONS,
            "stages": self.stages,
            "outputs": {p.name: sha256(p) for p in sorted(set(self.files))},
        }
        m.update(self.extra)
        write_json(self.out / "manifest.json", m)
        return m


def _lattice(cfg, section="lattice"):
    lat = cfg.lattice
    delta = getattr(cfg, section)["delta"]
    return build_lattice_spec(lat["a_nm"], lat["t"], delta)


# ---------------------------------------------------------------- stages

def _bands(r: _Run, stem="bands", delta=None):
    spec = _lattice(r.cfg)
    if delta is not None:
        spec = spec.with_delta(delta)
    bs = r.stage("bands", "grid.n_per_segment", band_path, spec, DEFAULT_PATH, r.cfg.grid["n_per_segment"])
    r.emit(bs, stem)
    return bs


def _berry(r: _Run):
    spec = _lattice(r.cfg)
    field = r.stage("berry", "grid.nk", berry_curvature_map, spec, "lower", r.cfg.grid["nk"])
    r.emit(field, "berry", ("csv", "json"))
    rep = r.stage("valley_report", "lattice.delta", valley_report, spec, field=field)
    r.json("valley_report.json", rep.to_dict())
    return rep


def _ribbon(r: _Run, interface=None, suffix=""):
    rc = r.cfg.ribbon
    spec = _lattice(r.cfg, "ribbon")
    iface = interface or rc["interface"]
    rib = r.stage("ribbon", "ribbon.width", build_ribbon, spec, iface, rc["width"])
    rb = r.stage("ribbon_bands", "ribbon.k_samples", ribbon_bands, rib, rc["k_samples"])
    branches = r.stage("edge_states", "ribbon.threshold", extract_edge_states, rb, rc["threshold"], rc["window"])
    r.emit(rb, f"ribbon{suffix}", ("csv", "svg"))
    r.json(f"edge_branches{suffix}.json", branches_json(branches))
    return rb, branches


def _device_and_run(r: _Run, port=None, valley=None, carrier=None, stem="transport", emit=True):
    dc, tc = r.cfg.device, r.cfg.transport
    spec = _lattice(r.cfg, "device")
    dev = r.stage("device", "device", build_device, spec, dc["geometry"], dc["extent"],
                  dc["lead_length"], half_width=dc["half_width"], gamma_peak=tc["gamma"])
    port = port or tc["port"] or ("a" if dc["geometry"] == "hsbs" else "in")
    valley = valley or tc["valley"]
    carrier = tc["carrier"] if carrier is None else carrier
    run = r.stage("transport", "transport", run_transport, dev, port, valley, carrier,
                  tc["envelope"], tc["dt"], tc["steps"])
    flux = r.stage("port_flux", "transport.steps", port_flux, run)
    if emit:
        r.emit(run, stem, ("csv", "svg"))
    return dev, run, flux


def _quantum(r: _Run, preset_key):
    circuit_kind, pair0, v0_preset, length_preset, shape = QUANTUM_PRESETS[preset_key]
    q = r.cfg.quantum
    pair = tuple(q["pair"]) if q["pair"] is not None else pair0
    v0 = q["v0"] if q["v0"] is not None else v0_preset
    sigma = q["sigma"] if q["sigma"] is not None else C_MM_PER_PS / length_preset
    src = r.stage("source", "quantum.sigma", Source, sigma, v0)
    net = single_circuit() if circuit_kind == "single" else cascade_circuit(leak=q["leak"])
    delays = np.asarray(r.cfg.delays())
    scan = r.stage("hom_scan", "quantum.pair", hom_scan, net, pair, src, delays)
    scan = r.stage("sample_counts", "quantum.pair_rate", sample_counts, scan, q["pair_rate"],
                   q["integration_s"], r.rng("counts"))
    r.emit(scan, "hom", ("csv", "svg"))
    if r.cfg.fit["shape"] is not None:
        shape = r.cfg.fit["shape"]
    elif q["pair"] is not None:
        shape = infer_shape(_noiseless(scan))
    ideal = r.stage("fit_ideal", "fit.shape", fit_scan, _noiseless(scan), shape)
    fit = r.stage("fit", "fit.shape", fit_scan, scan, shape)
    r.json("fit.json", fit.to_dict())
    r.json("fit_ideal.json", ideal.to_dict())
    r.extra["source"] = {"v0": v0, "sigma_per_ps": sigma, "tau_c_ps": src.tau_c,
                         "length_mm": C_MM_PER_PS * src.tau_c, "pair": list(pair), "circuit": circuit_kind}
    return scan, fit, ideal


def infer_shape(scan) -> str:
    """'peak' when the rate nearest zero delay exceeds the mean of the two ends."""
    y = np.asarray(scan.counts if scan.counts is not None else scan.rates, dtype=float)
    mid = y[int(np.argmin(np.abs(scan.delays)))]
    return "peak" if mid > 0.5 * (y[0] + y[-1]) else "dip"


def _noiseless(scan):
    return HomScan(scan.delays, scan.rates, scan.pair, meta=scan.meta)


# ---------------------------------------------------------------- commands

def _cmd_bands(r):
    bs = _bands(r)
    gap = bs.direct_gap()
    r.json("bands_summary.json", {"min_direct_gap": float(gap.min()), "delta": r.cfg.lattice["delta"]})


def _cmd_berry(r):
    _berry(r)


def _cmd_ribbon(r):
    _ribbon(r)


def _cmd_transport(r):
    dev, run, flux = _device_and_run(r)
    r.json("device.json", dev.to_dict())
    r.json("fluxes.json", {"fluxes": flux, "residual": float(run.residual_norm[-1]),
                           "budget_error": run.budget_error()})


def _cmd_hom(r):
    _quantum(r, "hom")


def _cmd_circuit(r):
    _quantum(r, "circuit")


def _cmd_fit(r, hom_csv=None):
    if hom_csv is None:
        raise PipelineError("fit", "fit", InvalidParameterError("fit needs a hom.csv path"))
    scan = r.stage("read", "fit", read_hom_csv, hom_csv)
    fit = r.stage("fit", "fit.shape", fit_scan, scan, r.cfg.fit["shape"] or infer_shape(scan))
    r.json("fit.json", fit.to_dict())


def _cmd_fig1c(r):
    d = abs(r.cfg.lattice["delta"])
    b1 = _bands(r, "bands", +d)
    b2 = _bands(r, "bands_vpc2", -d)
    cal = r.stage("calibrate", "lattice", calibrate_to_gap, 1520.0, 1600.0, d / r.cfg.lattice["t"])
    r.json("calibration.json", {
        "t_thz": cal.t, "delta_thz": cal.delta, "f_mid_thz": cal.f_mid_thz, "width_thz": cal.width_thz,
        "convention": cal.convention,
        "max_band_difference": float(np.abs(b1.energies - b2.energies).max()),
        "min_direct_gap": float(b1.direct_gap().min()),
    })


def _cmd_fig1d(r):
    table = {}
    for iface in ("I12", "I21"):
        _, branches = _ribbon(r, iface, f"_{iface}")
        for b in branches:
            try:
                table[f"{iface}@{'K' if b.valley == 1 else 'Kprime'}"] = int(np.sign(group_velocity(b, b.valley)))
            except ValleonError:
                pass
    r.json("velocity_signs.json", table)


def _cmd_fig2d(r):
    dev, run, flux = _device_and_run(r, port="a" if r.cfg.device["geometry"] == "hsbs" else None)
    r.json("fluxes.json", {"fluxes": flux, "suppression_b": flux.get("b"),
                           "ratio_b_over_cd": flux.get("b", 0.0) / max(flux.get("c", 0.0) + flux.get("d", 0.0), 1e-300),
                           "ratio_c_over_d": flux.get("c", 0.0) / max(flux.get("d", 0.0), 1e-300),
                           "budget_error": run.budget_error()})


def _cmd_fig3de(r):
    if r.cfg.device["geometry"] != "hsbs":
        raise PipelineError("fig3de", "device.geometry", InvalidParameterError("repro-fig3de needs geometry hsbs"))
    gap = abs(r.cfg.device["delta"])
    energies = [-0.6 * gap, 0.0, 0.6 * gap]
    rows, series = [], {"c/b": [], "d/b": [], "c/d": []}
    for E in energies:
        _, run, f = _device_and_run(r, port="a", carrier=E, emit=False)
        rows.append((E, f["b"], f["c"], f["d"], f["c"] / f["b"], f["d"] / f["b"], f["c"] / f["d"]))
        series["c/b"].append(f["c"] / f["b"])
        series["d/b"].append(f["d"] / f["b"])
        series["c/d"].append(f["c"] / f["d"])
    if "csv" in r.formats:
        r.files.append(write_csv(r.out / "spectra.csv",
                                 ["energy", "I_b", "I_c", "I_d", "I_c_over_I_b", "I_d_over_I_b", "I_c_over_I_d"], rows))
    r.svg("spectra.svg", svg_line_plot([("c/d", energies, series["c/d"])], "carrier energy (t)", "I_c / I_d",
                                       "output balance across the gap"))


def _quantum_cmd(key):
    def cmd(r):
        _quantum(r, key)
    return cmd


_DISPATCH = {
    "bands": _cmd_bands,
    "berry": _cmd_berry,
    "ribbon": _cmd_ribbon,
    "transport": _cmd_transport,
    "hom": _cmd_hom,
    "circuit": _cmd_circuit,
    "repro-fig1c": _cmd_fig1c,
    "repro-fig1d": _cmd_fig1d,
    "repro-fig2d": _cmd_fig2d,
    "repro-fig3de": _cmd_fig3de,
    "repro-fig4a": _quantum_cmd("repro-fig4a"),
    "repro-fig4b": _quantum_cmd("repro-fig4b"),
    "repro-fig4c": _quantum_cmd("repro-fig4c"),
    "repro-fig4d": _quantum_cmd("repro-fig4d"),
}


def run_pipeline(cfg: RunConfig, command: str, out_dir=None, hom_csv=None) -> dict:
    """Run one command; writes its artifacts, then manifest.json last, and returns the manifest."""
    r = _Run(cfg, command, out_dir)
    if command == "fit":
        _cmd_fit(r, hom_csv)
    elif command in _DISPATCH:
        _DISPATCH[command](r)
    else:
        raise PipelineError("dispatch", "command", InvalidParameterError(f"unknown command {command!r}"))
    return r.manifest()
