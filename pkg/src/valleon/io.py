"""Deterministic CSV / JSON / SVG writers for every artifact type."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import UnsupportedFormatError
from .fitting import FitResult
from .lattice import BandStructure
from .quantum import HomScan
from .ribbon import EdgeBranch, RibbonBandStructure, group_velocity
from .topology import CurvatureField, ValleyReport
from .transport import TransportRun


def fmt(x) -> str:
    """IEEE double round-trip text (17 significant digits)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return path


# ---------------------------------------------------------------- tables

def bands_table(bs: BandStructure):
    header = ["segment", "k_index", "kx", "ky", "E_minus", "E_plus"]
    rows = [
        (int(seg), int(ki), s.k[0], s.k[1], s.energies[0], s.energies[1])
        for seg, ki, s in zip(bs.segment, bs.k_index, bs.samples)
    ]
    return header, rows


def berry_table(field: CurvatureField):
    rows = zip(field.kx.ravel(), field.ky.ravel(), field.omega.ravel())
    return ["kx", "ky", "omega"], list(rows)


def ribbon_table(rb: RibbonBandStructure, window: int = 4):
    loc = rb.localization(window)
    rows = []
    for i, k in enumerate(rb.k):
        for n in range(rb.energies.shape[1]):
            rows.append((k, n, rb.energies[i, n], loc[i, n]))
    return ["k", "band_index", "energy", "localization"], rows


def transport_table(run: TransportRun):
    rows = []
    for i, t in enumerate(run.times):
        for port in sorted(run.port_absorbed):
            rows.append((t, port, run.port_absorbed[port][i], run.residual_norm[i]))
    return ["time", "port", "absorbed", "residual"], rows


def hom_table(scan: HomScan):
    n = len(scan.delays)
    counts = scan.counts if scan.counts is not None else [""] * n
    errors = scan.errors if scan.errors is not None else [""] * n
    rows = [
        (scan.delays[i], scan.delays_mm[i], scan.rates[i],
         fmt(counts[i]) if counts[i] != "" else "", errors[i] if errors[i] != "" else "")
        for i in range(n)
    ]
    return ["delay_ps", "delay_mm", "rate", "counts", "error"], rows


def branches_json(branches):
    out = []
    for b in branches:
        entry = {
            "interface": b.interface,
            "band_index": b.band_index,
            "k": b.k_values,
            "energy": b.energies,
            "localization": b.localization,
            "valley": b.valley,
        }
        try:
            entry["velocity_at_valley"] = group_velocity(b, b.valley)
        except Exception:
            entry["velocity_at_valley"] = None
        out.append(entry)
    return out


def read_hom_csv(path) -> HomScan:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "delay_ps" not in rows[0]:
        raise UnsupportedFormatError(f"{path} is not a hom.csv table")
    delays = np.array([float(r["delay_ps"]) for r in rows])
    rates = np.array([float(r["rate"]) for r in rows])
    counts = errors = None
    if all(r.get("counts", "") != "" for r in rows):
        counts = np.array([int(float(r["counts"])) for r in rows])
        errors = np.sqrt(counts)
    return HomScan(delays, rates, counts=counts, errors=errors)


# ---------------------------------------------------------------- svg

def svg_line_plot(series, xlabel, ylabel, title="", width=640, height=420) -> str:
    """Minimal self-contained line plot.  ``series`` is a list of (label, x, y)."""
    ml, mr, mt, mb = 70, 20, 40, 55
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = width - ml - mr, height - mt - mb

    def X(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def Y(y):
        return mt + (1.0 - (y - y0) / (y1 - y0)) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        out.append(f'<text x="{X(xv):.2f}" y="{mt + ph + 18}" font-size="11" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 6}" y="{Y(yv) + 4:.2f}" font-size="11" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 12}" font-size="13" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="16" y="{mt + ph / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2})">{ylabel}</text>'
    )
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="22" font-size="14" text-anchor="middle">{title}</text>')
    for n, (label, x, y) in enumerate(series):
        c = colors[n % len(colors)]
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ml + pw - 4}" y="{mt + 14 + 14 * n}" font-size="11" fill="{c}" text-anchor="end">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _svg_for(artifact):
    if isinstance(artifact, BandStructure):
        x = np.arange(len(artifact.samples))
        e = artifact.energies
        return svg_line_plot([("E-", x, e[:, 0]), ("E+", x, e[:, 1])], "path index", "energy (t)", "bulk bands")
    if isinstance(artifact, HomScan):
        y = artifact.counts if artifact.counts is not None else artifact.rates
        lab = "counts" if artifact.counts is not None else "rate"
        return svg_line_plot([(f"{artifact.pair[0]},{artifact.pair[1]}", artifact.delays, y)],
                             "delay (ps)", lab, "two-photon coincidences")
    if isinstance(artifact, TransportRun):
        series = [(p, artifact.times, artifact.port_absorbed[p]) for p in sorted(artifact.port_absorbed)]
        series.append(("residual", artifact.times, artifact.residual_norm))
        return svg_line_plot(series, "time (1/t)", "probability", "port fluxes")
    if isinstance(artifact, RibbonBandStructure):
        e = artifact.energies
        series = [("", artifact.k * artifact.ribbon.lattice.a, e[:, n]) for n in range(e.shape[1])]
        return svg_line_plot(series, "k a", "energy (t)", "ribbon bands")
    raise UnsupportedFormatError(f"no svg rendering for {type(artifact).__name__}")


def emit_plot_data(artifact, fmt_: str, path) -> Path:
    """Write ``artifact`` as csv, json or svg to ``path``."""
    path = Path(path)
    if fmt_ not in ("csv", "json", "svg"):
        raise UnsupportedFormatError(f"unknown format {fmt_!r}")
    if fmt_ == "svg":
        path.write_text(_svg_for(artifact))
        return path
    if fmt_ == "csv":
        if isinstance(artifact, BandStructure):
            return write_csv(path, *bands_table(artifact))
        if isinstance(artifact, CurvatureField):
            return write_csv(path, *berry_table(artifact))
        if isinstance(artifact, RibbonBandStructure):
            return write_csv(path, *ribbon_table(artifact))
        if isinstance(artifact, TransportRun):
            return write_csv(path, *transport_table(artifact))
        if isinstance(artifact, HomScan):
            return write_csv(path, *hom_table(artifact))
        raise UnsupportedFormatError(f"no csv table for {type(artifact).__name__}")
    # json
    if isinstance(artifact, CurvatureField):
        return write_json(path, {
            "layout": "row-major: omega[i][j] is the plaquette at k = (i b1 + j b2) / n_grid "
                      "+ (b1 + b2) / (2 n_grid); i indexes rows",
            "band": artifact.band,
            "n_grid": artifact.n_grid,
            "chern_total": artifact.chern_total,
            "kx": artifact.kx,
            "ky": artifact.ky,
            "omega": artifact.omega,
        })
    if isinstance(artifact, ValleyReport):
        return write_json(path, artifact.to_dict())
    if isinstance(artifact, FitResult):
        return write_json(path, artifact.to_dict())
    if isinstance(artifact, HomScan):
        return write_json(path, {"pair": list(artifact.pair), "delay_ps": artifact.delays,
                                 "delay_mm": artifact.delays_mm, "rate": artifact.rates,
                                 "counts": artifact.counts, "error": artifact.errors, "meta": artifact.meta})
    if isinstance(artifact, BandStructure):
        header, rows = bands_table(artifact)
        return write_json(path, {"columns": header, "rows": rows})
    if isinstance(artifact, (list, tuple)) and all(isinstance(b, EdgeBranch) for b in artifact):
        return write_json(path, branches_json(artifact))
    if isinstance(artifact, dict):
        return write_json(path, artifact)
    raise UnsupportedFormatError(f"no json form for {type(artifact).__name__}")
