"""Berry curvature, valley Chern numbers, phase-vortex chirality, valley moment sign."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBandError, DegenerateVortexError, InvalidParameterError
from .lattice import LatticeSpec, _check_valley, bloch_hamiltonian

# The raw Fukui-Hatsugai-Suzuki plaquette phase built from <u(k)|u(k+dk)> equals
# minus the curvature of A = i<u|grad u>; flipping it makes the lower band obey
# C_K = +tau_z sgn(delta) / 2.  Pinned in tests/test_topology.py.
BERRY_SIGN = -1
# Raw two-band moment with unit positive charge has sign -tau_z sgn(delta) for the
# lower band; the reported sign follows the m(K, K') = tau_z mu_B* convention.
MOMENT_SIGN = -1

BANDS = {"lower": 0, "upper": 1}


@dataclass(frozen=True)
class CurvatureField:
    kx: np.ndarray  # (N, N) plaquette centres, 1/nm
    ky: np.ndarray
    omega: np.ndarray  # (N, N) Berry flux per plaquette; sums to 2 pi C
    band: str
    n_grid: int
    spec: LatticeSpec
    chern_total: int

    @property
    def plaquette_width(self) -> float:
        return float(np.linalg.norm(self.spec.reciprocal_vectors[0])) / self.n_grid

    def corner_distance(self) -> np.ndarray:
        """Distance of each plaquette centre from the nearest BZ corner (any image)."""
        dK = _torus_distance(self.spec, self.kx, self.ky, self.spec.K)
        dKp = _torus_distance(self.spec, self.kx, self.ky, -self.spec.K)
        return np.minimum(dK, dKp)


def _torus_distance(spec, kx, ky, point):
    b1, b2 = spec.reciprocal_vectors
    best = np.full(np.shape(kx), np.inf)
    for m in range(-2, 3):
        for n in range(-2, 3):
            g = point + m * b1 + n * b2
            best = np.minimum(best, np.hypot(kx - g[0], ky - g[1]))
    return best


def _band_vectors(spec, k, band_idx):
    H = bloch_hamiltonian(spec, k)
    w, v = np.linalg.eigh(H)
    return w, v[..., :, band_idx]


def berry_curvature_map(spec: LatticeSpec, band: str = "lower", n_grid: int = 200) -> CurvatureField:
    """Gauge-invariant plaquette curvature on an n_grid x n_grid tiling of the BZ torus."""
    if band not in BANDS:
        raise InvalidParameterError(f"band must be 'lower' or 'upper', got {band!r}")
    if int(n_grid) != n_grid or n_grid < 24:
        raise InvalidParameterError("n_grid must be an integer >= 24")
    n = int(n_grid)
    if spec.delta == 0.0:
        raise DegenerateBandError("bands touch at the Dirac point K (delta = 0)", k=spec.K)
    b1, b2 = spec.reciprocal_vectors
    frac = np.arange(n) / n
    k = frac[:, None, None] * b1 + frac[None, :, None] * b2
    w, u = _band_vectors(spec, k, BANDS[band])
    gap = w[..., 1] - w[..., 0]
    if gap.min() < 1e-12 * spec.t:
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        raise DegenerateBandError(f"bands touch at k = {k[i, j]}", k=k[i, j])

    u1 = (u.conj() * np.roll(u, -1, axis=0)).sum(-1)
    u2 = (u.conj() * np.roll(u, -1, axis=1)).sum(-1)
    loop = u1 * np.roll(u2, -1, axis=0) * np.conj(np.roll(u1, -1, axis=1)) * np.conj(u2)
    omega = BERRY_SIGN * np.angle(loop)

    total = omega.sum() / (2.0 * np.pi)
    chern = int(np.rint(total))
    assert abs(total - chern) < 1e-8, total
    centre = k + (b1 + b2) / (2.0 * n)
    return CurvatureField(centre[..., 0], centre[..., 1], omega, band, n, spec, chern)


def valley_weights(field: CurvatureField, valley: int, tie_tol: float = 1e-9) -> np.ndarray:
    """Nearest-corner partition of the torus; equidistant plaquettes count one half."""
    _check_valley(valley)
    dK = _torus_distance(field.spec, field.kx, field.ky, field.spec.K)
    dKp = _torus_distance(field.spec, field.kx, field.ky, -field.spec.K)
    tie = np.abs(dK - dKp) <= tie_tol * np.maximum(dK, dKp)
    mine, other = (dK, dKp) if valley == 1 else (dKp, dK)
    return np.where(tie, 0.5, (mine < other).astype(float))


def valley_chern(field: CurvatureField, valley: int) -> float:
    """Half-BZ Chern number of one valley; approximately quantized, never rounded."""
    w = valley_weights(field, valley)
    return float((field.omega * w).sum() / (2.0 * np.pi))


def _hexagon_sites(spec: LatticeSpec):
    """Six sites of the hexagon centred at -delta_1, anticlockwise from +90 deg.

    Returns (sublattice, cell vector) per site.
    """
    a0 = spec.bond_length
    centre = -spec.nn_vectors[0]
    out = []
    for m in range(6):
        ang = np.pi / 2.0 + m * np.pi / 3.0
        r = centre + a0 * np.array([np.cos(ang), np.sin(ang)])
        sub = m % 2  # A at 90, 210, 330 deg
        out.append((sub, r - spec.sublattice_offsets[sub]))
    return out


def phase_winding(spec: LatticeSpec, valley: int, band: str = "lower", tol: float = 1e-9) -> float:
    """Phase accumulated anticlockwise around one hexagon by the valley Bloch state.

    At the valley point the eigenstate is fully sublattice-polarized, so the
    loop runs over the occupied sites only (three of the six).
    """
    _check_valley(valley)
    if band not in BANDS:
        raise InvalidParameterError(f"band must be 'lower' or 'upper', got {band!r}")
    if spec.delta == 0.0:
        raise DegenerateBandError("valley states are degenerate at delta = 0", k=spec.valley_point(valley))
    k = spec.valley_point(valley)
    _, u = _band_vectors(spec, k, BANDS[band])
    amps = np.array([u[sub] * np.exp(1j * (k @ cell)) for sub, cell in _hexagon_sites(spec)])
    occupied = np.abs(amps) > tol * np.abs(amps).max()
    if occupied.sum() < 3:
        raise DegenerateVortexError("fewer than three plaquette sites carry amplitude")
    loop = amps[occupied]
    steps = np.angle(np.roll(loop, -1) / loop)
    return float(steps.sum())


def phase_vortex_chirality(spec: LatticeSpec, valley: int, band: str = "lower") -> str:
    """'ACW' if the phase grows anticlockwise by 2 pi, 'CW' if clockwise."""
    winding = phase_winding(spec, valley, band)
    if not np.isclose(abs(winding), 2.0 * np.pi, atol=1e-9):
        raise DegenerateVortexError(f"winding {winding / (2 * np.pi):.6f} x 2pi is not a unit vortex")
    return "ACW" if winding > 0 else "CW"


def _moment_raw(spec, valley, h):
    k0 = spec.valley_point(valley)
    dx = np.array([h, 0.0])
    dy = np.array([0.0, h])
    dHx = (bloch_hamiltonian(spec, k0 + dx) - bloch_hamiltonian(spec, k0 - dx)) / (2 * h)
    dHy = (bloch_hamiltonian(spec, k0 + dy) - bloch_hamiltonian(spec, k0 - dy)) / (2 * h)
    w, v = np.linalg.eigh(bloch_hamiltonian(spec, k0))
    lo, hi = v[:, 0], v[:, 1]
    # m_n = -Im sum_{m != n} <n|dxH|m><m|dyH|n> / (E_n - E_m), unit charge
    num = (lo.conj() @ dHx @ hi) * (hi.conj() @ dHy @ lo)
    return -np.imag(num) / (w[0] - w[1])


def valley_moment_sign(spec: LatticeSpec, valley: int) -> int:
    """Sign of the lower-band orbital moment at the valley centre."""
    _check_valley(valley)
    if spec.delta == 0.0:
        raise DegenerateBandError("moment undefined for gapless bands (delta = 0)", k=spec.valley_point(valley))
    h = 1e-4 * 2.0 * np.pi / spec.a
    m1 = _moment_raw(spec, valley, h)
    m2 = _moment_raw(spec, valley, h / 2.0)
    if np.sign(m1) != np.sign(m2) or m1 == 0.0:
        raise DegenerateBandError("moment sign not stable under step refinement", k=spec.valley_point(valley))
    return int(MOMENT_SIGN * np.sign(m1))


@dataclass(frozen=True)
class ValleyReport:
    c_K: float
    c_Kprime: float
    c_v: float
    moment_sign_K: int
    moment_sign_Kprime: int
    chirality_K: str
    chirality_Kprime: str
    n_grid: int
    delta: float
    t: float
    chern_total: int

    def to_dict(self) -> dict:
        return {
            "c_K": self.c_K,
            "c_Kprime": self.c_Kprime,
            "c_v": self.c_v,
            "moment_sign_K": self.moment_sign_K,
            "moment_sign_Kprime": self.moment_sign_Kprime,
            "chirality_K": self.chirality_K,
            "chirality_Kprime": self.chirality_Kprime,
            "n_grid": self.n_grid,
            "delta": self.delta,
            "t": self.t,
        }


def valley_report(spec: LatticeSpec, n_grid: int = 200, field: CurvatureField | None = None) -> ValleyReport:
    field = field or berry_curvature_map(spec, "lower", n_grid)
    cK = valley_chern(field, +1)
    cKp = valley_chern(field, -1)
    return ValleyReport(
        c_K=cK,
        c_Kprime=cKp,
        c_v=cK - cKp,
        moment_sign_K=valley_moment_sign(spec, +1),
        moment_sign_Kprime=valley_moment_sign(spec, -1),
        chirality_K=phase_vortex_chirality(spec, +1),
        chirality_Kprime=phase_vortex_chirality(spec, -1),
        n_grid=field.n_grid,
        delta=spec.delta,
        t=spec.t,
        chern_total=field.chern_total,
    )
