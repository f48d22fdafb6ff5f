"""Two-photon Fock evolution through linear mode networks and HOM delay scans.

A two-photon state is stored as a symmetric tensor A over modes with
|psi> = sum_ij A_ij a_i^dag a_j^dag |0>, so <psi|psi> = 2 sum |A_ij|^2.
Occupation amplitudes are <1_i 1_j|psi> = 2 A_ij (i != j) and
<2_i|psi> = sqrt(2) A_ii.  A network U sends a_i^dag -> sum_k U_ki a_k^dag,
hence A -> U A U^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidCircuitError, InvalidOverlapError, InvalidParameterError

C_MM_PER_PS = 0.299792458
CIRCUIT_MODES = ("a", "b", "c", "d", "e", "f", "g")
CONVENTIONS = ("real-rotation", "symmetric")


@dataclass(frozen=True)
class ModeUnitary:
    modes: tuple
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (len(self.modes), len(self.modes)):
            raise InvalidCircuitError(f"matrix shape {m.shape} does not match {len(self.modes)} modes")
        if len(set(self.modes)) != len(self.modes):
            raise InvalidCircuitError("mode labels must be unique")
        err = unitarity_error(m)
        if err > 1e-10:
            raise InvalidCircuitError(f"matrix is not unitary (|U^dag U - I| = {err:.2e})")
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "matrix", m)

    def index(self, mode) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise InvalidCircuitError(f"unknown mode {mode!r}; known {self.modes}") from None

    def element(self, out, inp) -> complex:
        return complex(self.matrix[self.index(out), self.index(inp)])


def unitarity_error(m) -> float:
    m = np.asarray(m)
    return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[1]), 2))


def bs_unitary(R: float, convention: str = "real-rotation", modes=("c", "d")) -> ModeUnitary:
    """Lossless two-port splitter with reflectivity R (columns: inputs, rows: outputs)."""
    if not (0.0 <= R <= 1.0) or not np.isfinite(R):
        raise InvalidParameterError(f"reflectivity must lie in [0, 1], got {R}")
    tt, rr = np.sqrt(1.0 - R), np.sqrt(R)
    if convention == "real-rotation":
        m = np.array([[tt, rr], [-rr, tt]], dtype=complex)
    elif convention == "symmetric":
        m = np.array([[tt, 1j * rr], [1j * rr, tt]], dtype=complex)
    else:
        raise InvalidParameterError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return ModeUnitary(tuple(modes), m)


@dataclass(frozen=True)
class Placement:
    """An isometry from ``inputs`` to ``outputs``; in place when the two coincide."""

    matrix: np.ndarray  # (len(outputs), len(inputs))
    inputs: tuple
    outputs: tuple


def place(bs, inputs, outputs=None) -> Placement:
    m = bs.matrix if isinstance(bs, ModeUnitary) else np.asarray(bs, dtype=complex)
    inputs = tuple(inputs)
    outputs = inputs if outputs is None else tuple(outputs)
    if m.shape != (len(outputs), len(inputs)):
        raise InvalidCircuitError(f"block of shape {m.shape} cannot map {inputs} -> {outputs}")
    if unitarity_error(m) > 1e-10:
        raise InvalidCircuitError("placement block does not preserve norm on its inputs")
    return Placement(m, inputs, outputs)


def _complete(cols, n):
    """Extend orthonormal columns to a basis with unit vectors in index order."""
    basis = [c for c in cols.T]
    for e in np.eye(n):
        if len(basis) == n:
            break
        v = e.astype(complex)
        for _ in range(2):
            for b in basis:
                v = v - (b.conj() @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
    return np.array(basis[len(cols.T):]).T


def _embed(p: Placement, modes: tuple) -> np.ndarray:
    n = len(modes)
    try:
        idx_in = [modes.index(m) for m in p.inputs]
        idx_out = [modes.index(m) for m in p.outputs]
    except ValueError as exc:
        raise InvalidCircuitError(f"placement uses a mode outside {modes}: {exc}") from None
    union = list(dict.fromkeys(idx_in + idx_out))
    u = len(union)
    pos = {g: i for i, g in enumerate(union)}
    cols = np.zeros((u, len(idx_in)), dtype=complex)
    for c in range(len(idx_in)):
        for r, g in enumerate(idx_out):
            cols[pos[g], c] = p.matrix[r, c]
    local = np.zeros((u, u), dtype=complex)
    for c, g in enumerate(idx_in):
        local[:, pos[g]] = cols[:, c]
    rest = [g for g in union if g not in idx_in]
    if rest:
        extra = _complete(cols, u)
        for c, g in enumerate(rest):
            local[:, pos[g]] = extra[:, c]
    full = np.eye(n, dtype=complex)
    full[np.ix_(union, union)] = local
    return full


def network_unitary(circuit, modes=CIRCUIT_MODES) -> ModeUnitary:
    """Compose placements in order (first element acts first).

    Each entry is a Placement, or a tuple (bs, inputs) / (bs, inputs, outputs).
    Columns of routed placements that are not inputs are completed to a
    unitary deterministically; they never carry photons in the circuits here.
    """
    modes = tuple(modes)
    U = np.eye(len(modes), dtype=complex)
    for entry in circuit:
        p = entry if isinstance(entry, Placement) else place(*entry)
        U = _embed(p, modes) @ U
    return ModeUnitary(modes, U)


def hsbs2_block(bs: ModeUnitary | None = None, leak: float = 0.0) -> np.ndarray:
    """Column map d -> (e, f, g): weak leak into e, the rest split by ``bs``."""
    if not (0.0 <= leak < 1.0):
        raise InvalidParameterError(f"leak must lie in [0, 1), got {leak}")
    bs = bs or bs_unitary(0.5)
    col = bs.matrix[:, 0] * np.sqrt(1.0 - leak)
    return np.array([[np.sqrt(leak)], [col[0]], [col[1]]], dtype=complex)


def single_circuit(bs: ModeUnitary | None = None) -> ModeUnitary:
    """HSBS1 alone: (a, b) -> (c, d)."""
    bs = bs or bs_unitary(0.5)
    return network_unitary([(bs, ("a", "b"), ("c", "d"))])


def cascade_circuit(bs1: ModeUnitary | None = None, bs2: ModeUnitary | None = None, leak: float = 0.0) -> ModeUnitary:
    """HSBS1 on (a, b) -> (c, d), then output d feeds HSBS2 -> (e, f, g)."""
    bs1 = bs1 or bs_unitary(0.5)
    return network_unitary([
        (bs1, ("a", "b"), ("c", "d")),
        (hsbs2_block(bs2, leak), ("d",), ("e", "f", "g")),
    ])


@dataclass(frozen=True)
class TwoPhotonState:
    modes: tuple
    amplitudes: np.ndarray  # symmetric (n, n)
    overlap_chi: complex = 1.0
    delay_tau: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.amplitudes, dtype=complex)
        if A.shape != (len(self.modes), len(self.modes)):
            raise InvalidParameterError("amplitude tensor does not match the mode list")
        if np.abs(A - A.T).max() > 1e-12:
            raise InvalidParameterError("amplitude tensor must be symmetric")
        if abs(self.overlap_chi) > 1.0 + 1e-12:
            raise InvalidOverlapError(f"|chi| = {abs(self.overlap_chi)} exceeds 1")
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "amplitudes", A)

    @classmethod
    def pair(cls, modes, p, q, chi: complex = 1.0, tau: float = 0.0) -> "TwoPhotonState":
        """|1_p 1_q> for p != q, |2_p> for p == q."""
        modes = tuple(modes)
        if p not in modes or q not in modes:
            raise InvalidCircuitError(f"unknown mode in ({p!r}, {q!r})")
        i, j = modes.index(p), modes.index(q)
        A = np.zeros((len(modes), len(modes)), dtype=complex)
        if i == j:
            A[i, i] = 1.0 / np.sqrt(2.0)
        else:
            A[i, j] = A[j, i] = 0.5
        return cls(modes, A, chi, tau)

    @property
    def norm(self) -> float:
        return float(np.sqrt(2.0 * np.sum(np.abs(self.amplitudes) ** 2)))

    def amplitude(self, p, q) -> complex:
        """<1_p 1_q|psi> (p != q) or <2_p|psi> (p == q)."""
        i, j = self.modes.index(p), self.modes.index(q)
        if i == j:
            return complex(np.sqrt(2.0) * self.amplitudes[i, i])
        return complex(2.0 * self.amplitudes[i, j])

    def occupations(self) -> dict:
        """Map from sorted mode pair to probability."""
        out = {}
        n = len(self.modes)
        for i in range(n):
            for j in range(i, n):
                pr = abs(self.amplitude(self.modes[i], self.modes[j])) ** 2
                if pr > 0:
                    out[(self.modes[i], self.modes[j])] = pr
        return out

    def mean_photon_number(self) -> float:
        occ = self.occupations()
        return float(sum(2.0 * pr for pr in occ.values()))


def evolve_fock(U: ModeUnitary, state: TwoPhotonState) -> TwoPhotonState:
    if tuple(U.modes) != tuple(state.modes):
        raise InvalidCircuitError(f"network modes {U.modes} differ from state modes {state.modes}")
    M = U.matrix
    A = M @ state.amplitudes @ M.T
    return replace(state, amplitudes=0.5 * (A + A.T))


def _distinguishable_rate(U: ModeUnitary, state: TwoPhotonState, p, q) -> float:
    """Photons with orthogonal internal labels: incoherent over input occupations."""
    M = U.matrix
    ip, iq = U.index(p), U.index(q)
    total = 0.0
    for (m1, m2), w in state.occupations().items():
        i, j = U.index(m1), U.index(m2)
        P1, P2 = np.abs(M[:, i]) ** 2, np.abs(M[:, j]) ** 2
        if ip == iq:
            total += w * P1[ip] * P2[ip]
        else:
            total += w * (P1[ip] * P2[iq] + P1[iq] * P2[ip])
    return float(total)


def coincidence_rate(network, pair, chi: complex = 1.0, state: TwoPhotonState | None = None,
                     inputs=("a", "b")) -> float:
    """P = |chi|^2 P_indist + (1 - |chi|^2) P_dist for detectors on ``pair``.

    ``network`` is a ModeUnitary; the input defaults to |1_a 1_b>.
    """
    p, q = pair
    if p == q:
        raise InvalidParameterError("coincidence needs two distinct detector modes")
    if not np.isfinite(abs(chi)) or abs(chi) > 1.0 + 1e-12:
        raise InvalidOverlapError(f"|chi| = {abs(chi)} exceeds 1")
    U = network
    for m in (p, q):
        U.index(m)
    if state is None:
        state = TwoPhotonState.pair(U.modes, inputs[0], inputs[1])
    out = evolve_fock(U, state)
    p_ind = abs(out.amplitude(p, q)) ** 2
    p_dist = _distinguishable_rate(U, state, p, q)
    w = min(abs(chi) ** 2, 1.0)
    return float(w * p_ind + (1.0 - w) * p_dist)


@dataclass(frozen=True)
class Source:
    sigma: float  # spectral standard deviation of |phi(omega)|^2, 1/ps
    v0: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 <= self.v0 <= 1.0):
            raise InvalidParameterError(f"V0 must lie in [0, 1], got {self.v0}")

    def chi(self, tau):
        return np.sqrt(self.v0) * np.exp(-0.5 * self.sigma**2 * np.asarray(tau, dtype=float) ** 2)

    @property
    def tau_c(self) -> float:
        """1/e half-width of |chi|^2 in delay, ps."""
        return 1.0 / self.sigma

    @classmethod
    def from_length(cls, length_mm: float, v0: float = 1.0) -> "Source":
        if not length_mm > 0:
            raise InvalidParameterError("coherence length must be positive")
        return cls(C_MM_PER_PS / length_mm, v0)


@dataclass
class HomScan:
    delays: np.ndarray  # ps
    rates: np.ndarray
    pair: tuple = ("c", "d")
    counts: np.ndarray | None = None
    errors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def delays_mm(self) -> np.ndarray:
        return C_MM_PER_PS * np.asarray(self.delays)


def hom_scan(network: ModeUnitary, pair, source: Source, delays, inputs=("a", "b")) -> HomScan:
    delays = np.asarray(delays, dtype=float)
    if delays.ndim != 1 or not np.all(np.isfinite(delays)):
        raise InvalidParameterError("delays must be a finite 1-D list")
    state = TwoPhotonState.pair(network.modes, *inputs)
    rates = np.array([coincidence_rate(network, pair, c, state=state) for c in source.chi(delays)])
    return HomScan(delays, np.clip(rates, 0.0, 1.0), tuple(pair),
                   meta={"sigma": source.sigma, "v0": source.v0, "inputs": list(inputs)})


def frequency_grid_rates(network: ModeUnitary, pair, source: Source, delays, inputs=("a", "b"),
                         n_omega: int = 201, span: float = 8.0) -> np.ndarray:
    """Rates from an explicit joint spectral amplitude on a frequency grid.

    Photon 1 carries phi(w1), photon 2 phi(w2) exp(i w2 tau); the
    indistinguishable fraction V0 of the pairs is integrated over (w1, w2) and
    the rest propagates as distinguishable photons.
    """
    U = network
    s = source.sigma
    w = np.linspace(-span * s, span * s, n_omega)
    dw = w[1] - w[0]
    phi = (2.0 * np.pi * s**2) ** -0.25 * np.exp(-(w**2) / (4.0 * s**2))
    i, j = U.index(inputs[0]), U.index(inputs[1])
    ip, iq = U.index(pair[0]), U.index(pair[1])
    M = U.matrix
    state = TwoPhotonState.pair(U.modes, *inputs)
    p_dist = _distinguishable_rate(U, state, *pair)
    out = []
    for tau in np.asarray(delays, dtype=float):
        f2 = phi * np.exp(1j * w * tau)
        # first-quantized amplitude psi(x1 w1, x2 w2), symmetrized over photons
        J = np.outer(phi, f2)
        amp = M[ip, i] * M[iq, j] * J + M[iq, i] * M[ip, j] * J.T
        p_grid = float(np.sum(np.abs(amp) ** 2) * dw * dw)
        out.append(source.v0 * p_grid + (1.0 - source.v0) * p_dist)
    return np.array(out)


def sample_counts(scan: HomScan, pair_rate: float, integration_s: float, seed) -> HomScan:
    """Poisson counts with mean rate * pair_rate * integration_s; errors are sqrt(counts)."""
    if not (pair_rate > 0 and integration_s > 0):
        raise InvalidParameterError("pair_rate and integration_s must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean = np.asarray(scan.rates, dtype=float) * pair_rate * integration_s
    counts = rng.poisson(mean)
    meta = dict(scan.meta, pair_rate=pair_rate, integration_s=integration_s)
    return HomScan(scan.delays.copy(), scan.rates.copy(), scan.pair, counts, np.sqrt(counts), meta)


def dip_visibility(network: ModeUnitary, pair, chi_min: complex = 1.0, inputs=("a", "b")) -> float:
    """(C_base - C(chi_min)) / C_base with C_base the distinguishable rate."""
    base = coincidence_rate(network, pair, 0.0, inputs=inputs)
    if base <= 0:
        return 0.0
    return float((base - coincidence_rate(network, pair, chi_min, inputs=inputs)) / base)


def classical_visibility(R: float, n_phase: int = 64) -> float:
    """Intensity-correlation dip for two equal classical fields with random relative phase."""
    U = bs_unitary(R).matrix
    phases = 2.0 * np.pi * np.arange(n_phase) / n_phase
    E = np.stack([np.ones(n_phase), np.exp(1j * phases)])  # inputs (a, b)
    out = U @ E
    Ic, Id = np.abs(out[0]) ** 2, np.abs(out[1]) ** 2
    corr = np.mean(Ic * Id)
    base = np.mean(Ic) * np.mean(Id)
    return float(1.0 - corr / base) if base > 0 else 0.0
