"""Gapped honeycomb tight-binding model: geometry, Bloch Hamiltonian, bulk bands.

Conventions used throughout the package
---------------------------------------
* A sites sit on the Bravais lattice, B = A + delta_1 with
  delta_1 = (0, a0), delta_2 = (-sqrt(3) a0/2, -a0/2), delta_3 = (sqrt(3) a0/2, -a0/2)
  and a0 = a / sqrt(3) the bond length.
* Primitive vectors a1 = delta_1 - delta_2 = (a/2, sqrt(3) a/2) and
  a2 = delta_1 - delta_3 = (-a/2, sqrt(3) a/2).  Zigzag chains run along x.
* K = (4 pi / 3a, 0), K' = -K.  tau_z = +1 labels K.
* Energies are dimensionless (t = 1 by default); THz only at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, InvalidPathError

SQRT3 = np.sqrt(3.0)
C_NM_THZ = 299792.458  # speed of light in nm * THz

# s1/s2 hole side lengths of the two crystals; metadata only, no (t, delta) map is known
HOLE_SIDES_NM = {"VPC1": 87.0, "VPC2": 127.0}


@dataclass(frozen=True)
class LatticeSpec:
    a: float
    t: float
    delta: float
    nn_vectors: np.ndarray = field(repr=False, compare=False)
    sublattice_offsets: np.ndarray = field(repr=False, compare=False)

    @property
    def bond_length(self) -> float:
        return self.a / SQRT3

    @property
    def primitive_vectors(self) -> np.ndarray:
        d = self.nn_vectors
        return np.array([d[0] - d[1], d[0] - d[2]])

    @property
    def reciprocal_vectors(self) -> np.ndarray:
        return 2.0 * np.pi * np.linalg.inv(self.primitive_vectors).T

    @property
    def K(self) -> np.ndarray:
        return np.array([4.0 * np.pi / (3.0 * self.a), 0.0])

    def valley_point(self, valley: int) -> np.ndarray:
        _check_valley(valley)
        return valley * self.K

    def with_delta(self, delta: float) -> "LatticeSpec":
        return build_lattice_spec(self.a, self.t, delta)


def build_lattice_spec(a_nm: float, t: float, delta: float) -> LatticeSpec:
    if not (np.isfinite(a_nm) and a_nm > 0):
        raise InvalidParameterError(f"lattice constant must be positive, got {a_nm}")
    if not (np.isfinite(t) and t > 0):
        raise InvalidParameterError(f"hopping t must be positive, got {t}")
    if not np.isfinite(delta):
        raise InvalidParameterError(f"delta must be finite, got {delta}")
    a0 = a_nm / SQRT3
    nn = np.array(
        [
            [0.0, a0],
            [-SQRT3 * a0 / 2.0, -a0 / 2.0],
            [SQRT3 * a0 / 2.0, -a0 / 2.0],
        ]
    )
    offsets = np.array([[0.0, 0.0], nn[0]])
    return LatticeSpec(float(a_nm), float(t), float(delta), nn, offsets)


def default_preset(sign: int = +1) -> LatticeSpec:
    """a = 470 nm, t = 1, delta = +-0.1 t."""
    return build_lattice_spec(470.0, 1.0, 0.1 * (1 if sign >= 0 else -1))


def _check_valley(valley):
    if valley not in (1, -1):
        raise InvalidParameterError(f"valley index tau_z must be +1 or -1, got {valley}")


def offdiagonal(spec: LatticeSpec, k) -> np.ndarray:
    """f(k) = -t sum_j exp(i k.(delta_j - delta_1)), periodic in k."""
    k = np.asarray(k, dtype=float)
    bonds = spec.nn_vectors - spec.nn_vectors[0]
    return -spec.t * np.exp(1j * (k @ bonds.T)).sum(axis=-1)


def bloch_hamiltonian(spec: LatticeSpec, k) -> np.ndarray:
    """2x2 Bloch Hamiltonian [[delta, f], [f*, -delta]]; broadcasts over leading k axes."""
    f = offdiagonal(spec, k)
    H = np.zeros(np.shape(f) + (2, 2), dtype=complex)
    H[..., 0, 0] = spec.delta
    H[..., 1, 1] = -spec.delta
    H[..., 0, 1] = f
    H[..., 1, 0] = np.conj(f)
    return H


def bloch_energies(spec: LatticeSpec, k) -> np.ndarray:
    """Closed-form (E-, E+) with trailing axis of length 2."""
    e = np.sqrt(spec.delta**2 + np.abs(offdiagonal(spec, k)) ** 2)
    return np.stack([-e, e], axis=-1)


@dataclass(frozen=True)
class BlochState:
    k: np.ndarray
    energies: np.ndarray
    eigenvectors: np.ndarray  # columns are eigenvectors, ascending energy


def fix_gauge(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate each column so its first non-negligible component is real positive."""
    vecs = np.array(vecs, dtype=complex)
    idx = np.argmax(np.abs(vecs) > tol, axis=-2)[..., None, :]
    lead = np.take_along_axis(vecs, idx, axis=-2)
    return vecs * (np.abs(lead) / lead)


def diagonalize_bloch(H, k=None) -> BlochState:
    H = np.asarray(H, dtype=complex)
    w, v = np.linalg.eigh(H)
    v = fix_gauge(v)
    return BlochState(
        k=np.zeros(2) if k is None else np.asarray(k, dtype=float),
        energies=w,
        eigenvectors=v,
    )


def high_symmetry_points(spec: LatticeSpec) -> dict:
    b1, _ = spec.reciprocal_vectors
    K = spec.K
    return {
        "G": np.zeros(2),
        "K": K,
        "M": b1 / 2.0,
        # the BZ corner adjacent to K, equivalent to -K
        "K'": -K + b1,
    }


_LABEL_ALIASES = {"G": "G", "Γ": "G", "Gamma": "G", "K": "K", "M": "M", "K'": "K'", "Kp": "K'", "K′": "K'"}

DEFAULT_PATH = ("G", "K", "M", "K'", "G")


@dataclass(frozen=True)
class BandStructure:
    kpath: list  # [(label, k, n_samples_of_following_segment)]
    samples: list  # BlochState per sample
    segment: np.ndarray
    k_index: np.ndarray

    @property
    def k(self) -> np.ndarray:
        return np.array([s.k for s in self.samples])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energies for s in self.samples])

    def direct_gap(self) -> np.ndarray:
        e = self.energies
        return e[:, 1] - e[:, 0]


def band_path(spec: LatticeSpec, labels=DEFAULT_PATH, n_per_segment: int = 32) -> BandStructure:
    """Sample the bulk bands along straight segments between high-symmetry points.

    Each segment contributes ``n_per_segment`` points including both of its
    endpoints, so corner points are sampled exactly.
    """
    if int(n_per_segment) != n_per_segment or n_per_segment < 2:
        raise InvalidParameterError("n_per_segment must be an integer >= 2")
    if len(labels) < 2:
        raise InvalidPathError("a path needs at least two labels")
    pts = high_symmetry_points(spec)
    try:
        canon = [_LABEL_ALIASES[lab] for lab in labels]
    except KeyError as exc:
        raise InvalidPathError(f"unknown high-symmetry label {exc.args[0]!r}") from None

    samples, seg_ids, k_ids = [], [], []
    kpath = []
    for s, (l0, l1) in enumerate(zip(canon[:-1], canon[1:])):
        k0, k1 = pts[l0], pts[l1]
        kpath.append((l0, k0, n_per_segment))
        for i, frac in enumerate(np.linspace(0.0, 1.0, n_per_segment)):
            k = k0 + frac * (k1 - k0)
            # exact endpoints avoid round-off at the Dirac points
            if i == 0:
                k = k0.copy()
            elif i == n_per_segment - 1:
                k = k1.copy()
            samples.append(diagonalize_bloch(bloch_hamiltonian(spec, k), k))
            seg_ids.append(s)
            k_ids.append(i)
    kpath.append((canon[-1], pts[canon[-1]], 0))
    return BandStructure(kpath, samples, np.array(seg_ids), np.array(k_ids))


def dirac_hamiltonian(spec: LatticeSpec, valley: int, q) -> np.ndarray:
    """H = -(sqrt(3)/2) a t (q_x tau_z sigma_x + q_y sigma_y) + delta sigma_z.

    Valid only for |q| a << 1; this is not enforced.
    """
    _check_valley(valley)
    q = np.asarray(q, dtype=float)
    v = SQRT3 / 2.0 * spec.a * spec.t
    hx = -v * valley * q[..., 0]
    hy = -v * q[..., 1]
    H = np.zeros(q.shape[:-1] + (2, 2), dtype=complex)
    H[..., 0, 0] = spec.delta
    H[..., 1, 1] = -spec.delta
    H[..., 0, 1] = hx - 1j * hy
    H[..., 1, 0] = hx + 1j * hy
    return H


@dataclass(frozen=True)
class GapCalibration:
    """Mapping of a wavelength band gap onto the model, all energies in THz.

    Convention: the energy zero sits at f_mid = c / lambda_mid with
    lambda_mid = (lambda_lo + lambda_hi) / 2; the K-point gap 2|delta|
    equals c/lambda_lo - c/lambda_hi; t = |delta| / delta_over_t.
    """

    t: float
    delta: float
    f_mid_thz: float
    width_thz: float
    delta_over_t: float

    convention = "E=0 at c/lambda_mid, lambda_mid=(lo+hi)/2; 2|delta| = c/lo - c/hi; t = |delta|/(delta/t)"

    def __iter__(self):
        yield self.t
        yield self.delta

    def to_spec(self, a_nm: float = 470.0) -> LatticeSpec:
        return build_lattice_spec(a_nm, self.t, self.delta)


def calibrate_to_gap(gap_lo_nm: float, gap_hi_nm: float, delta_over_t: float = 0.1) -> GapCalibration:
    if not (0 < gap_lo_nm < gap_hi_nm):
        raise InvalidParameterError(
            f"need 0 < gap_lo_nm < gap_hi_nm, got ({gap_lo_nm}, {gap_hi_nm})"
        )
    if not (0 < delta_over_t < 3):
        raise InvalidParameterError("delta_over_t must lie in (0, 3)")
    width = C_NM_THZ / gap_lo_nm - C_NM_THZ / gap_hi_nm
    f_mid = C_NM_THZ / (0.5 * (gap_lo_nm + gap_hi_nm))
    delta = width / 2.0
    return GapCalibration(delta / delta_over_t, delta, f_mid, width, delta_over_t)
