"""Zigzag domain-wall supercells (interfaces I12 / I21) and their edge branches.

The ribbon is periodic along x (period a) and finite along y.  It is built from
2*width zigzag chains; chain c holds B(c-1) (lower) and A(c) (upper), and
neighbouring chains are joined by the vertical delta_1 bonds.  Both outer
terminations are therefore zigzag.  The domain wall cuts the vertical bonds
between chain width-1 and chain width.

Interface naming: I12 has VPC1 (sublattice mass +delta on A) above the wall
and VPC2 (-delta) below; I21 is the same with both signs flipped.  With this
naming the K-valley edge mode of I12 moves towards -x for delta > 0, i.e. the
orientation constant S0 below is +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParameterError, OutOfRangeError, TooNarrowError
from .lattice import LatticeSpec, build_lattice_spec

INTERFACES = ("I12", "I21")
S0 = +1  # sign(v_I21 @ K) = +S0, sign(v_I12 @ K) = -S0

DEFAULT_WIDTH = 20
DEFAULT_K_SAMPLES = 128
DEFAULT_WINDOW = 4
DEFAULT_THRESHOLD = 0.6
# |delta|/t for which the defaults above converge (wall decay length ~2.5 chains)
EDGE_DELTA = 0.4


def edge_preset(sign: int = +1) -> LatticeSpec:
    return build_lattice_spec(470.0, 1.0, EDGE_DELTA * (1 if sign >= 0 else -1))


def valley_momentum(a: float, valley: int) -> float:
    """Projection of K (valley=+1) or K' (valley=-1) onto the zigzag direction."""
    if valley not in (1, -1):
        raise InvalidParameterError(f"valley must be +1 or -1, got {valley}")
    return -valley * 2.0 * np.pi / (3.0 * a)


def _wrap(k, a):
    return (np.asarray(k) + np.pi / a) % (2.0 * np.pi / a) - np.pi / a


def nearest_valley(k, a):
    """+1 where k is closer to the projected K, -1 where closer to K'."""
    kw = _wrap(k, a)
    dK = np.abs(_wrap(kw - valley_momentum(a, +1), a))
    dKp = np.abs(_wrap(kw - valley_momentum(a, -1), a))
    return np.where(dK <= dKp, 1, -1)


@dataclass(frozen=True)
class RibbonSpec:
    interface: str
    width: int
    edge_termination: str = "zigzag"
    k_samples: int = DEFAULT_K_SAMPLES

    @property
    def n_sites(self) -> int:
        return 4 * self.width


@dataclass(frozen=True)
class Ribbon:
    spec: RibbonSpec
    lattice: LatticeSpec
    onsite: np.ndarray  # per orbital
    chain: np.ndarray  # chain index per orbital
    sublattice: np.ndarray  # 0 = A, 1 = B
    x: np.ndarray  # positions (nm) within the reference cell
    y: np.ndarray

    @property
    def wall_y(self) -> float:
        """y coordinate of the wall (midpoint of the cut vertical bonds)."""
        w = self.spec.width
        h = np.sqrt(3.0) / 2.0 * self.lattice.a
        return (w - 1) * h + self.lattice.bond_length / 2.0

    def hamiltonian(self, k: float) -> np.ndarray:
        """Bloch Hamiltonian in the atomic gauge exp(i k x); real for real k."""
        t, a = self.lattice.t, self.lattice.a
        n = self.spec.n_sites
        H = np.diag(self.onsite).astype(complex)
        zz = -2.0 * t * np.cos(k * a / 2.0)
        for c in range(2 * self.spec.width):
            iB, iA = 2 * c, 2 * c + 1
            H[iA, iB] = H[iB, iA] = zz
            if c + 1 < 2 * self.spec.width:
                H[iA, iB + 2] = H[iB + 2, iA] = -t
        assert H.shape == (n, n)
        return H

    def dH_dk(self, k: float) -> np.ndarray:
        t, a = self.lattice.t, self.lattice.a
        D = np.zeros((self.spec.n_sites,) * 2)
        for c in range(2 * self.spec.width):
            D[2 * c + 1, 2 * c] = D[2 * c, 2 * c + 1] = t * a * np.sin(k * a / 2.0)
        return D

    def window_mask(self, window: int) -> np.ndarray:
        w = self.spec.width
        return (self.chain >= w - window) & (self.chain < w + window)


def build_ribbon(spec: LatticeSpec, interface: str = "I12", width: int = DEFAULT_WIDTH) -> Ribbon:
    if interface not in INTERFACES:
        raise InvalidParameterError(f"interface must be one of {INTERFACES}, got {interface!r}")
    if int(width) != width or width < 8:
        raise TooNarrowError(
            f"width {width} < 8: outer-edge states would hybridise with the interface"
        )
    width = int(width)
    upper = spec.delta if interface == "I12" else -spec.delta
    chains = np.repeat(np.arange(2 * width), 2)
    sub = np.tile([1, 0], 2 * width)
    mass = np.where(chains >= width, upper, -upper)
    onsite = np.where(sub == 0, mass, -mass).astype(float)

    a, a0 = spec.a, spec.bond_length
    h = np.sqrt(3.0) / 2.0 * a
    row = np.where(sub == 0, chains, chains - 1)
    x = row * a / 2.0
    y = row * h + np.where(sub == 1, a0, 0.0)
    return Ribbon(RibbonSpec(interface, width), spec, onsite, chains, sub, x, y)


@dataclass(frozen=True)
class RibbonBandStructure:
    ribbon: Ribbon
    k: np.ndarray
    energies: np.ndarray  # (nk, n_sites), ascending per k
    vectors: np.ndarray  # (nk, n_sites, n_sites), columns are eigenvectors
    residual: float

    def localization(self, window: int = DEFAULT_WINDOW) -> np.ndarray:
        mask = self.ribbon.window_mask(window)
        return (np.abs(self.vectors[:, mask, :]) ** 2).sum(axis=1)


def ribbon_bands(ribbon: Ribbon, k_samples: int = DEFAULT_K_SAMPLES) -> RibbonBandStructure:
    if k_samples < 64:
        raise InvalidParameterError("k_samples must be >= 64")
    a = ribbon.lattice.a
    ks = -np.pi / a + 2.0 * np.pi / a * np.arange(k_samples) / k_samples
    Hs = np.array([ribbon.hamiltonian(k) for k in ks])
    w, v = np.linalg.eigh(Hs)
    res = np.abs(Hs @ v - v * w[:, None, :]).max()
    return RibbonBandStructure(ribbon, ks, w, v, float(res))


@dataclass
class EdgeBranch:
    interface: str
    k_values: np.ndarray
    energies: np.ndarray
    localization: np.ndarray
    valley_label: np.ndarray  # +1 (K) or -1 (K') per point
    band_index: np.ndarray
    ribbon: Ribbon = field(repr=False)
    window: int = DEFAULT_WINDOW

    @property
    def valley(self) -> int:
        vals, counts = np.unique(self.valley_label, return_counts=True)
        return int(vals[np.argmax(counts)])

    def energy_step(self) -> float:
        return float(np.median(np.abs(np.diff(self.energies))))


def _edge_state_at(ribbon: Ribbon, k: float, window: int, ref_energy=None):
    """Most localized in-gap state at momentum k (closest to ref_energy if given)."""
    w, v = np.linalg.eigh(ribbon.hamiltonian(k))
    loc = (np.abs(v[ribbon.window_mask(window), :]) ** 2).sum(axis=0)
    gap = abs(ribbon.lattice.delta)
    cand = np.flatnonzero(np.abs(w) < gap)
    if cand.size == 0:
        return None
    if ref_energy is None:
        j = cand[np.argmax(loc[cand])]
    else:
        j = cand[np.argmin(np.abs(w[cand] - ref_energy) - 1e-3 * loc[cand])]
    return w[j], v[:, j], loc[j]


def extract_edge_states(
    bands: RibbonBandStructure,
    localization_threshold: float = DEFAULT_THRESHOLD,
    interface_window: int = DEFAULT_WINDOW,
) -> list:
    """Group in-gap, interface-localized eigenstates into k-connected branches.

    An empty list is the structured "no edge state" result.
    """
    if not 0 < localization_threshold < 1:
        raise InvalidParameterError("localization_threshold must lie in (0, 1)")
    rib = bands.ribbon
    gap = abs(rib.lattice.delta)
    loc = bands.localization(interface_window)
    nk = len(bands.k)
    picks = []
    for i in range(nk):
        ok = (np.abs(bands.energies[i]) < gap) & (loc[i] > localization_threshold)
        picks.append(list(np.flatnonzero(ok)))

    branches, open_runs = [], []
    for i in range(nk):
        new_runs = []
        used = set()
        for run in open_runs:
            last_i, last_j = run[-1]
            e_last = bands.energies[last_i, last_j]
            free = [j for j in picks[i] if j not in used]
            if not free:
                branches.append(run)
                continue
            j = min(free, key=lambda jj: abs(bands.energies[i, jj] - e_last))
            used.add(j)
            run.append((i, j))
            new_runs.append(run)
        for j in picks[i]:
            if j not in used:
                new_runs.append([(i, j)])
        open_runs = new_runs
    branches.extend(open_runs)

    out = []
    for run in branches:
        ii = np.array([p[0] for p in run])
        jj = np.array([p[1] for p in run])
        ks = bands.k[ii]
        out.append(
            EdgeBranch(
                interface=rib.spec.interface,
                k_values=ks,
                energies=bands.energies[ii, jj],
                localization=loc[ii, jj],
                valley_label=nearest_valley(ks, rib.lattice.a),
                band_index=jj,
                ribbon=rib,
                window=interface_window,
            )
        )
    out.sort(key=lambda b: b.k_values[0])
    return out


def branch_for_valley(branches, valley: int):
    for b in branches:
        if b.valley == valley:
            return b
    raise OutOfRangeError(f"no edge branch found in valley {valley:+d}")


def group_velocity(branch: EdgeBranch, at_valley: int, h: float | None = None) -> float:
    """Signed dE/dk (energy * nm) of the branch at the projected valley momentum."""
    rib = branch.ribbon
    a = rib.lattice.a
    kv = valley_momentum(a, at_valley)
    ks = _wrap(branch.k_values, a)
    kv = float(_wrap(kv, a))
    if len(ks) < 2 or not (ks.min() <= kv <= ks.max()):
        raise OutOfRangeError(
            f"branch spans k in [{ks.min():.4g}, {ks.max():.4g}] /nm, valley momentum {kv:.4g} not covered"
        )
    if h is None:
        h = 1e-4 * 2.0 * np.pi / a
    e0 = np.interp(kv, ks, branch.energies)
    plus = _edge_state_at(rib, kv + h, branch.window, e0)
    minus = _edge_state_at(rib, kv - h, branch.window, e0)
    if plus is None or minus is None:
        raise OutOfRangeError("edge state leaves the gap at the valley momentum")
    return float((plus[0] - minus[0]) / (2.0 * h))


def find_carrier(ribbon: Ribbon, valley: int, energy: float = 0.0, window: int = DEFAULT_WINDOW):
    """Momentum k0 and eigenvector of the edge state with E(k0) = energy in a valley.

    Searches the valley's half of the zone; returns (k0, vector, group velocity).
    """
    a = ribbon.lattice.a
    gap = abs(ribbon.lattice.delta)
    if abs(energy) >= gap:
        raise OutOfRangeError(f"carrier energy {energy} is outside the bulk gap +-{gap}")
    kv = valley_momentum(a, valley)
    grid = kv + np.linspace(-np.pi / (3 * a), np.pi / (3 * a), 241)

    def edge_e(k):
        st = _edge_state_at(ribbon, k, window)
        return np.nan if st is None else st[0] - energy

    vals = np.array([edge_e(k) for k in grid])
    roots = []
    for i in range(len(grid) - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] <= 0:
            roots.append(brentq(edge_e, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-14))
    if not roots:
        raise OutOfRangeError(f"no edge state at energy {energy} in valley {valley:+d}")
    k0 = min(roots, key=lambda r: abs(r - kv))
    e, vec, _ = _edge_state_at(ribbon, k0, window, energy)
    vel = float(np.real(vec.conj() @ ribbon.dH_dk(k0) @ vec))
    return k0, vec, vel
