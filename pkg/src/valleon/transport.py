"""Edge wavepackets, Cayley time stepping with absorbing leads, port fluxes.

The integrator solves (1 + i dt H/2) psi' = (1 - i dt H/2) psi with
H = H0 - i Gamma.  With psi_mid = (psi + psi')/2 the norm change per step is
exactly -2 dt <psi_mid|Gamma|psi_mid>, so accumulating that quantity per port
closes the probability budget to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import polar
from scipy.sparse.linalg import splu

from .device import DeviceGraph, lattice_coords, rotate_about
from .errors import (
    InvalidCarrierError,
    InvalidParameterError,
    NonUnitarizableError,
    OutOfRangeError,
    ResidualTooLargeError,
    StepSizeError,
)
from .ribbon import build_ribbon, find_carrier

DEFAULT_DT = 0.02
TRANSPORT_ENVELOPE = 12.0  # cells; pairs with device.TRANSPORT_DELTA


@dataclass
class Wavepacket:
    psi: np.ndarray
    port: str
    valley: int
    energy: float
    k0: float  # carrier momentum along the arm in the ribbon frame (1/nm)
    velocity: float  # group velocity along the ribbon x axis (energy * nm)
    interface: str
    envelope_width: float
    rotation: float  # deg; ribbon frame = device frame rotated by this about J


def _arm_frame(device: DeviceGraph, port: str):
    """Rotation (deg, multiple of 60) that lays the arm along the x axis."""
    arm = device.arms[port]
    rot = -arm.heading
    # smallest rotation bringing the heading to 0 or 180 deg
    for cand in (0.0, -60.0, 60.0, -120.0, 120.0, 180.0):
        if np.isclose((arm.heading + cand) % 180.0, 0.0, atol=1e-9) or np.isclose(
            (arm.heading + cand) % 180.0, 180.0, atol=1e-9
        ):
            rot = cand
            break
    outward = np.sign(np.cos(np.deg2rad(arm.heading + rot)))
    return rot, outward


def _ribbon_index(coords, width):
    """Map reference-lattice coords (p, j, s) to ribbon orbital indices (or -1)."""
    idx = np.full(len(coords), -1, dtype=int)
    for n, c in enumerate(coords):
        if c is None:
            continue
        p, j, s = c
        row = j + width - 1
        chain = row if s == 0 else row + 1
        if 0 <= chain < 2 * width:
            idx[n] = 2 * chain + 1 if s == 0 else 2 * chain
    return idx


def arm_profile(device: DeviceGraph, port: str, valley: int, energy: float, ribbon_width: int = 20):
    """Edge eigenmode of the arm's wall, laid out on device sites.

    Returns (phi, meta) with phi the plane-wave mode u(site) exp(i k0 x') on
    every device site (no envelope) and x' the along-arm coordinate in the
    rotated frame.
    """
    rot, outward = _arm_frame(device, port)
    J = device.junction
    rpos = rotate_about(device.positions, J, rot)
    coords = lattice_coords(device.spec, rpos)
    if any(c is None for c in coords):
        raise InvalidCarrierError("arm frame rotation is not a lattice symmetry")
    idx = _ribbon_index(coords, ribbon_width)

    near = np.abs(rpos[:, 1] - J[1]) < 3 * device.spec.a
    s_along, _ = device.arms[port].local(device.positions)
    near &= (s_along > 0.25 * device.arms[port].length) & (s_along < 0.75 * device.arms[port].length)
    match = None
    for iface in ("I12", "I21"):
        rib = build_ribbon(device.spec, iface, ribbon_width)
        ok = idx[near] >= 0
        if np.allclose(rib.onsite[idx[near][ok]], device.onsite[near][ok]):
            match = rib
            break
    if match is None:
        raise InvalidCarrierError(f"wall of arm {port!r} does not match a zigzag interface")

    # a 60 deg rotation maps K onto K'
    ribbon_valley = valley * (-1) ** int(round(abs(rot) / 60.0))
    k0, u, vel = find_carrier(match, ribbon_valley, energy)
    phi = np.where(idx >= 0, u[np.clip(idx, 0, None)], 0.0) * np.exp(1j * k0 * rpos[:, 0])
    meta = dict(
        k0=k0, velocity=vel, interface=match.spec.interface, rotation=rot,
        outward=outward, x_rot=rpos[:, 0], ribbon_valley=ribbon_valley,
    )
    return phi, meta


def make_edge_wavepacket(
    device: DeviceGraph,
    port: str = "a",
    valley: int = +1,
    energy: float = 0.0,
    envelope_width: float = 6.0,
    centre: float | None = None,
) -> Wavepacket:
    """Gaussian-enveloped interface eigenmode travelling from ``port`` inwards.

    ``centre`` is the distance from the junction along the arm (nm); by default
    midway between the junction and the lead.
    """
    if envelope_width < 4:
        raise InvalidParameterError("envelope_width must be >= 4 cells")
    if port not in device.arms:
        raise InvalidParameterError(f"unknown port {port!r}")
    try:
        phi, meta = arm_profile(device, port, valley, energy)
    except OutOfRangeError as exc:
        raise InvalidCarrierError(str(exc)) from None
    inward = -meta["outward"]
    if np.sign(meta["velocity"]) != inward:
        raise InvalidCarrierError(
            f"valley {valley:+d} mode on arm {port!r} propagates away from the junction"
        )
    a = device.spec.a
    arm = device.arms[port]
    if centre is None:
        centre = 0.5 * (arm.length - device.lead_length * a)
    x_rot = meta["x_rot"]
    x0 = device.junction[0] + meta["outward"] * centre
    sigma = envelope_width * a
    env = np.exp(-((x_rot - x0) ** 2) / (4.0 * sigma**2))
    s_along, _ = arm.local(device.positions)
    env[s_along < -1e-9 * a] = 0.0  # keep the packet on its own arm
    psi = phi * env
    psi /= np.linalg.norm(psi)
    return Wavepacket(
        psi=psi, port=port, valley=valley, energy=energy, k0=meta["k0"],
        velocity=meta["velocity"], interface=meta["interface"],
        envelope_width=envelope_width, rotation=meta["rotation"],
    )


def momentum_spread(device: DeviceGraph, packet: Wavepacket, nk: int = 2048) -> tuple:
    """Mean and standard deviation of the along-arm momentum of a packet."""
    rpos = rotate_about(device.positions, device.junction, packet.rotation)
    x = rpos[:, 0]
    a = device.spec.a
    # sites in a row repeat with period a, so the row spectrum is 2 pi / a periodic
    ks = np.linspace(0.0, 2 * np.pi / a, nk, endpoint=False)
    rows = np.rint(rpos[:, 1] / (np.sqrt(3) / 2 * a) * 4).astype(int)
    weight = np.zeros(nk)
    sel = np.abs(packet.psi) > 1e-12 * np.abs(packet.psi).max()
    for r in np.unique(rows[sel]):
        m = sel & (rows == r)
        amp = np.exp(-1j * np.outer(ks, x[m])) @ packet.psi[m]
        weight += np.abs(amp) ** 2
    weight /= weight.sum()
    # measure about the spectral peak with wrapped offsets
    peak = ks[np.argmax(weight)]
    dk = (ks - peak + np.pi / a) % (2 * np.pi / a) - np.pi / a
    mean = weight @ dk
    spread = np.sqrt(weight @ (dk - mean) ** 2)
    kbar = (peak + mean + np.pi / a) % (2 * np.pi / a) - np.pi / a
    return float(kbar), float(spread)


@dataclass
class TransportRun:
    times: np.ndarray
    port_absorbed: dict  # port -> cumulative absorbed probability per recorded time
    residual_norm: np.ndarray  # |psi|^2 per recorded time
    carrier_energy: float
    dt: float
    gamma: float
    final_state: np.ndarray = field(repr=False)
    probes: dict = field(default_factory=dict, repr=False)  # port -> complex time series

    def budget_error(self) -> float:
        total = sum(v for v in self.port_absorbed.values()) + self.residual_norm
        return float(np.abs(total - 1.0).max())


def propagate(
    device: DeviceGraph,
    state,
    dt: float = DEFAULT_DT,
    n_steps: int = 1000,
    absorber_gamma: float | None = None,
    record_every: int = 10,
    probes: dict | None = None,
    stop_residual: float | None = None,
) -> TransportRun:
    """Cayley evolution of ``state`` under H0 - i Gamma.

    ``probes`` maps a name to a vector phi; <phi|psi(t)> is recorded every step.
    ``stop_residual`` ends the run early once |psi|^2 falls below it.
    """
    psi = np.array(state.psi if isinstance(state, Wavepacket) else state, dtype=complex)
    energy = state.energy if isinstance(state, Wavepacket) else float("nan")
    if dt <= 0 or n_steps < 1:
        raise InvalidParameterError("need dt > 0 and n_steps >= 1")
    gamma_peak = device.gamma_peak if absorber_gamma is None else absorber_gamma
    if gamma_peak < 0:
        raise InvalidParameterError("absorber_gamma must be >= 0")
    gamma = device.absorber(gamma_peak)
    H = device.hamiltonian().astype(complex) - 1j * sp.diags(gamma)
    n = device.n_sites
    eye = sp.identity(n, dtype=complex, format="csc")
    lhs = splu((eye + 0.5j * dt * H).tocsc())
    rhs = (eye - 0.5j * dt * H).tocsr()

    port_masks = {name: port.sites for name, port in device.ports.items()}
    absorbed = {name: 0.0 for name in port_masks}
    rec_t, rec_res = [0.0], [float(np.vdot(psi, psi).real)]
    rec_abs = {name: [0.0] for name in port_masks}
    probes = probes or {}
    probe_rec = {name: [np.vdot(vec, psi)] for name, vec in probes.items()}
    norm0 = rec_res[0]

    for step in range(1, n_steps + 1):
        new = lhs.solve(rhs @ psi)
        mid = 0.5 * (psi + new)
        w = gamma * np.abs(mid) ** 2
        for name, sites in port_masks.items():
            absorbed[name] += 2.0 * dt * w[sites].sum()
        psi = new
        for name, vec in probes.items():
            probe_rec[name].append(np.vdot(vec, psi))
        res = None
        if step % record_every == 0 or step == n_steps:
            res = float(np.vdot(psi, psi).real)
            if gamma_peak == 0.0 and abs(res - norm0) > 1e-6:
                raise StepSizeError(f"norm drifted by {res - norm0:.2e} at step {step}")
            rec_t.append(step * dt)
            rec_res.append(res)
            for name in port_masks:
                rec_abs[name].append(absorbed[name])
        if stop_residual is not None and res is not None and res < stop_residual:
            break

    return TransportRun(
        times=np.array(rec_t),
        port_absorbed={k: np.array(v) for k, v in rec_abs.items()},
        residual_norm=np.array(rec_res),
        carrier_energy=energy,
        dt=dt,
        gamma=gamma_peak,
        final_state=psi,
        probes={k: np.array(v) for k, v in probe_rec.items()},
    )


def port_flux(run: TransportRun, max_residual: float = 0.05) -> dict:
    residual = float(run.residual_norm[-1])
    if residual >= max_residual:
        raise ResidualTooLargeError(residual)
    return {name: float(v[-1]) for name, v in run.port_absorbed.items()}


def default_steps(device: DeviceGraph, packet: Wavepacket, dt: float, margin: float = 2.5) -> int:
    """Enough steps for the packet to cross junction and outgoing lead ``margin`` times over."""
    a = device.spec.a
    arm = device.arms[packet.port]
    dist = 0.5 * (arm.length - device.lead_length * a) + arm.length
    speed = abs(packet.velocity) / a  # cells per time unit, in units of a
    return int(np.ceil(margin * (dist / a) / speed / dt))


def run_transport(
    device: DeviceGraph,
    port: str = "a",
    valley: int = +1,
    energy: float = 0.0,
    envelope_width: float = 6.0,
    dt: float = DEFAULT_DT,
    n_steps: int | None = None,
    absorber_gamma: float | None = None,
    probes: dict | None = None,
    packet: Wavepacket | None = None,
) -> TransportRun:
    if packet is None:
        packet = make_edge_wavepacket(device, port, valley, energy, envelope_width)
    steps = n_steps or default_steps(device, packet, dt)
    return propagate(
        device, packet, dt, steps, absorber_gamma, probes=probes, stop_residual=1e-4,
    )


def _outgoing_probe(device: DeviceGraph, port: str, valley: int, energy: float, width_cells: float = 3.0):
    """Outgoing edge mode of ``port`` restricted to a slab in the middle of the arm."""
    phi, meta = arm_profile(device, port, valley, energy)
    if np.sign(meta["velocity"]) != meta["outward"]:
        phi, meta = arm_profile(device, port, -valley, energy)
    arm = device.arms[port]
    s_along, _ = arm.local(device.positions)
    centre = 0.5 * (arm.length - device.lead_length * device.spec.a)
    slab = np.abs(s_along - centre) <= width_cells * device.spec.a / 2.0
    probe = np.where(slab, phi, 0.0)
    return probe / np.linalg.norm(probe)


@dataclass
class SplittingResult:
    matrix: np.ndarray  # unitarized 2x2, rows (c, d), columns (a, b)
    raw: np.ndarray
    polar_correction: float
    suppression: float  # flux into the forward port b for input a
    fluxes: dict  # input port -> port flux map


def splitting_matrix(
    device: DeviceGraph,
    carrier_energy: float = 0.0,
    envelope_width: float = 6.0,
    dt: float = DEFAULT_DT,
    runs: dict | None = None,
) -> SplittingResult:
    """2x2 amplitudes from inputs (a, b) to outputs (c, d) of an HSBS at one energy.

    Magnitudes are sqrt(flux); phases come from the energy-resolved overlap of
    the outgoing field with each output arm's edge mode.
    """
    if device.geometry_tag != "hsbs":
        raise InvalidParameterError("splitting_matrix needs an hsbs device")
    probes = {out: _outgoing_probe(device, out, +1, carrier_energy) for out in ("c", "d")}
    raw = np.zeros((2, 2), dtype=complex)
    fluxes = {}
    runs = dict(runs or {})
    for col, inp in enumerate(("a", "b")):
        run = runs.get(inp)
        if run is None or not set(probes) <= set(run.probes):
            run = run_transport(device, inp, +1, carrier_energy, envelope_width, dt, probes=probes)
        flux = port_flux(run)
        fluxes[inp] = flux
        t = np.arange(len(run.probes["c"])) * run.dt
        for row, out in enumerate(("c", "d")):
            amp = np.sum(run.probes[out] * np.exp(1j * carrier_energy * t))
            raw[row, col] = np.sqrt(flux[out]) * np.exp(1j * np.angle(amp))
    W, P = polar(raw)
    corr = float(np.linalg.norm(raw - W, 2))
    if corr > 0.1:
        raise NonUnitarizableError(corr)
    return SplittingResult(W, raw, corr, fluxes["a"]["b"], fluxes)
