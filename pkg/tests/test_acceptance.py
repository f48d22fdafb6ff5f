"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single PASS/FAIL line before asserting, so ``pytest -v``
output doubles as the acceptance report.
"""

import json
import time

import numpy as np
import pytest

from test_quantum import brute_rates, expand, fock_amplitude
from valleon.cli import main
from valleon.fitting import fit_scan, model
from valleon.lattice import band_path, build_lattice_spec, high_symmetry_points
from valleon.pipeline import REPRO
from valleon.quantum import (
    CIRCUIT_MODES,
    C_MM_PER_PS,
    Source,
    TwoPhotonState,
    HomScan,
    bs_unitary,
    cascade_circuit,
    classical_visibility,
    coincidence_rate,
    dip_visibility,
    evolve_fock,
    hom_scan,
    sample_counts,
    single_circuit,
)
from valleon.ribbon import (
    EDGE_DELTA,
    branch_for_valley,
    build_ribbon,
    edge_preset,
    extract_edge_states,
    group_velocity,
    ribbon_bands,
)
from valleon.topology import berry_curvature_map, valley_chern
from valleon.transport import port_flux


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok

    return emit


def test_criterion_01_chern_quantization(report):
    t0 = time.perf_counter()
    f = berry_curvature_map(build_lattice_spec(470, 1.0, 0.1), "lower", 200)
    cK, cKp = valley_chern(f, +1), valley_chern(f, -1)
    wall = time.perf_counter() - t0
    cv = cK - cKp
    ok = (abs(cK - 0.5) <= 0.02 and abs(cKp + 0.5) <= 0.02 and abs(cv - 1.0) <= 0.04
          and f.chern_total == 0 and wall < 30)
    report(1, "Chern quantization", ok,
           f"c_K={cK:.5f} c_K'={cKp:.5f} c_v={cv:.5f} total={f.chern_total} wall={wall:.2f}s")
    assert ok


def test_criterion_02_berry_localization(report, spec):
    f = berry_curvature_map(spec, "lower", 200)
    top = np.argsort(np.abs(f.omega).ravel())[::-1][:10]
    dist = f.corner_distance().ravel()[top] / f.plaquette_width
    ok = bool(np.all(dist <= 3.0))
    report(2, "Berry localization", ok, f"top-10 distances to nearest corner (plaquettes) <= {dist.max():.3f}")
    assert ok


def test_criterion_03_band_symmetry(report, spec):
    bp, bm = band_path(spec, n_per_segment=32), band_path(spec.with_delta(-spec.delta), n_per_segment=32)
    diff = float(np.abs(bp.energies - bm.energies).max())
    gap = bp.direct_gap()
    pts = high_symmetry_points(spec)
    at_corners = [gap[i] for i, s in enumerate(bp.samples)
                  if min(np.linalg.norm(s.k - pts["K"]), np.linalg.norm(s.k - pts["K'"])) < 1e-12]
    gerr = max(abs(g - 2 * abs(spec.delta)) for g in at_corners)
    ok = len(bp.samples) == 128 and diff <= 1e-12 and len(at_corners) >= 2 and gerr <= 1e-9
    report(3, "Band symmetry", ok, f"{len(bp.samples)} points, max |E+ - E-|={diff:.1e}, corner gap error={gerr:.1e}")
    assert ok


def test_criterion_04_edge_sign_table(report):
    # run at the edge preset delta/t = 0.4; at 0.1 no interface branch clears the localization threshold
    t0 = time.perf_counter()
    spec = edge_preset(+1)
    sign, holes = {}, []
    for iface in ("I12", "I21"):
        brs = extract_edge_states(ribbon_bands(build_ribbon(spec, iface, 20), 128))
        for v in (1, -1):
            sign[iface, v] = int(np.sign(group_velocity(branch_for_valley(brs, v), v)))
        e = np.sort(np.concatenate([b.energies for b in brs]))
        res = max(b.energy_step() for b in brs)
        holes.append(np.diff(np.r_[-EDGE_DELTA, e, EDGE_DELTA]).max() / res)
    wall = time.perf_counter() - t0
    antisym = all(sign[i, 1] == -sign[i, -1] for i in ("I12", "I21")) and all(
        sign["I12", v] == -sign["I21", v] for v in (1, -1))
    ok = antisym and max(holes) <= 3.0 and wall < 60
    table = " ".join(f"{i}/{'K' if v > 0 else 'Kp'}={s:+d}" for (i, v), s in sign.items())
    report(4, "Edge-state sign table", ok, f"{table}; worst hole={max(holes):.2f}x resolution; wall={wall:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_05_valley_wave_division(report, hsbs, hsbs_run_a, hsbs_run_mirror, timings):
    f, g = port_flux(hsbs_run_a), port_flux(hsbs_run_mirror)
    supp = f["b"] / (f["c"] + f["d"])
    bal = abs(f["c"] / f["d"] - 1.0)
    swap = max(abs(f["c"] - g["d"]), abs(f["d"] - g["c"]))
    wall = timings["hsbs"] + timings["hsbs_run_a"] + timings["hsbs_run_mirror"]
    ok = supp < 0.05 and bal < 0.02 and swap <= 1e-10 and wall < 300
    report(5, "Valley wave division", ok,
           f"b/(c+d)={supp:.4f} |c/d-1|={bal:.1e} mirror swap={swap:.1e} wall={wall:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_06_bend_robustness(report, bend_runs):
    fwd = {g: port_flux(r)["out"] for g, r in bend_runs.items()}
    worst = max(abs(fwd[g] - fwd["straight"]) / fwd["straight"] for g in ("z", "omega"))
    ok = worst <= 0.02
    report(6, "Bend robustness", ok,
           " ".join(f"{g}={v:.5f}" for g, v in fwd.items()) + f"; worst relative deviation={worst:.4f}")
    assert ok


def test_criterion_07_hom_null_and_classical_bound(report):
    null = coincidence_rate(single_circuit(), ("c", "d"), 1.0)
    Rs = np.linspace(0.0, 1.0, 201)
    vmax_classical = max(classical_visibility(R) for R in Rs)
    vmax_dist = max(dip_visibility(single_circuit(bs_unitary(R)), ("c", "d"), 0.0) for R in Rs)
    ok = abs(null) <= 1e-12 and vmax_classical <= 0.5 + 1e-12 and vmax_dist <= 0.5 + 1e-12
    report(7, "HOM null and classical bound", ok,
           f"P_cd(chi=1)={null:.1e}; max classical V={vmax_classical:.12f}; max V at chi=0={vmax_dist:.1e}")
    assert ok


def test_criterion_08_entangled_amplitudes(report):
    U = single_circuit()
    out = evolve_fock(U, TwoPhotonState.pair(CIRCUIT_MODES, "a", "b"))
    amps = np.array([out.amplitude("c", "c"), out.amplitude("c", "d"), out.amplitude("d", "d")])
    ref = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
    phase = amps[0] / ref[0]
    err_state = np.abs(amps - phase * ref).max()
    poly = expand(U.matrix, (0, 1))
    ic, id_ = U.index("c"), U.index("d")
    oracle = np.array([fock_amplitude(poly, ic, ic), fock_amplitude(poly, ic, id_), fock_amplitude(poly, id_, id_)])
    err_oracle = np.abs(amps - oracle).max()
    ok = err_state <= 1e-12 and err_oracle <= 1e-12 and abs(abs(phase) - 1) <= 1e-12
    report(8, "Entangled-state amplitudes", ok,
           f"(|2c>,|1c1d>,|2d>)=({amps[0].real:+.6f},{abs(amps[1]):.1e},{amps[2].real:+.6f}); "
           f"vs target {err_state:.1e}, vs oracle {err_oracle:.1e}")
    assert ok


def test_criterion_09_cascade_rates(report):
    U = cascade_circuit()
    got = {pair: (coincidence_rate(U, pair, 0.0), coincidence_rate(U, pair, 1.0)) for pair in (("c", "f"), ("f", "g"))}
    target = {("c", "f"): (0.25, 0.0), ("f", "g"): (0.125, 0.25)}
    brute = {pair: brute_rates(U.matrix, (0, 1), U.index(pair[0]), U.index(pair[1]))[::-1] for pair in got}
    err_t = max(abs(a - b) for p in got for a, b in zip(got[p], target[p]))
    err_b = max(abs(a - b) for p in got for a, b in zip(got[p], brute[p]))
    vis = (got["f", "g"][1] - got["f", "g"][0]) / got["f", "g"][0]
    ok = err_t <= 1e-12 and err_b <= 1e-12 and abs(vis - 1.0) <= 1e-12
    report(9, "Cascade rates", ok,
           f"P(c,f) {got['c', 'f'][0]:.6f}->{got['c', 'f'][1]:.1e}, P(f,g) {got['f', 'g'][0]:.6f}->{got['f', 'g'][1]:.6f}, "
           f"peak V={vis:.12f}; vs brute force {err_b:.1e}")
    assert ok


def test_criterion_10_fit_round_trips(report):
    errs = []
    for V, L in ((0.965, 1.23), (0.956, 1.29)):
        tc = L / C_MM_PER_PS
        x = np.linspace(-3 * tc, 3 * tc, 31)
        r = fit_scan(HomScan(x, model(x, 0.5, V, tc, 0.0)))
        errs.append(max(abs(r.visibility - V), abs(r.length_c - L)))
    scan = hom_scan(single_circuit(), ("c", "d"), Source.from_length(1.29, 0.956), np.linspace(-15, 15, 31))
    noisy = sample_counts(scan, 1e5 / scan.rates.sum(), 1.0, seed=2024)
    r = fit_scan(noisy)
    se = r.std_errors["visibility"]
    within = abs(r.visibility - 0.956) < 3 * se
    same_order = 0.006 / 10 < se < 0.006 * 10
    ok = max(errs) <= 1e-6 and within and same_order
    report(10, "Fit round-trips", ok,
           f"noiseless max error={max(errs):.1e}; Poisson ({noisy.counts.sum()} counts) "
           f"V={r.visibility:.4f}+-{se:.4f}, L={r.length_c:.3f}+-{r.std_errors['length_c']:.3f} mm")
    assert ok


@pytest.mark.slow
def test_criterion_11_determinism(report, tmp_path):
    mismatched, ran = [], 0
    for cmd in REPRO:
        dirs = [tmp_path / cmd / str(i) for i in (1, 2)]
        codes = [main([cmd, "--seed", "11", "--out", str(d)]) for d in dirs]
        if codes != [0, 0]:
            mismatched.append(f"{cmd} exit {codes}")
            continue
        ran += 1
        names = sorted(p.name for p in dirs[0].iterdir())
        if names != sorted(p.name for p in dirs[1].iterdir()):
            mismatched.append(f"{cmd} file sets differ")
        # manifest.json carries wall times; its digest table is compared instead
        for name in names:
            if name != "manifest.json" and (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
                mismatched.append(f"{cmd}/{name}")
        m1, m2 = (json.loads((d / "manifest.json").read_text()) for d in dirs)
        if m1["outputs"] != m2["outputs"]:
            mismatched.append(f"{cmd} manifest digests")
        if cmd == "repro-fig2d":
            flux = json.loads((dirs[0] / "fluxes.json").read_text())["fluxes"]
            if not flux["b"] < 0.05 * (flux["c"] + flux["d"]):
                mismatched.append("repro-fig2d port b not suppressed")
    ok = not mismatched and ran == len(REPRO)
    report(11, "Determinism", ok, f"{ran}/{len(REPRO)} repro commands byte-identical"
           + ("" if ok else f"; problems: {', '.join(mismatched)}"))
    assert ok
