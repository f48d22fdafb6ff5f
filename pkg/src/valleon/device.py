"""Finite honeycomb devices with mass domains: straight, Z, Omega walls and the HSBS.

Site labels are integer triples (p, j, s): A(p, j) sits at (p a/2, j h) with
h = sqrt(3) a / 2 and p = j (mod 2); B(p, j) = A(p, j) + (0, a0).  Every wall
vertex sits on a translate of the hexagon centre J = (a/2, a0/2), so walls along
0, 60 and 120 deg cut only one bond family each (clean zigzag interfaces).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InvalidGeometryError, InvalidParameterError
from .lattice import LatticeSpec, build_lattice_spec

GEOMETRIES = ("straight", "z", "omega", "hsbs")

ABSORBER_CELLS = 8
DEFAULT_GAMMA = 0.5
DEFAULT_HALF_WIDTH = 10  # cells either side of a wall

# Transport preset.  At |delta| = 0.1 the wall modes decay over ~10 cells and
# the sharp 120 deg corners backscatter several percent; |delta| = 0.3 with a
# 12-cell envelope keeps Z and Omega within 1.5% of the straight wall.
TRANSPORT_DELTA = 0.3
TRANSPORT_EXTENT = 60
TRANSPORT_HALF_WIDTH = 13


def _unit(deg):
    r = np.deg2rad(deg)
    return np.array([np.cos(r), np.sin(r)])


@dataclass(frozen=True)
class Arm:
    """Straight wall segment leaving ``origin`` along ``heading`` (deg) for ``length`` nm."""

    name: str
    origin: np.ndarray
    heading: float
    length: float

    @property
    def direction(self) -> np.ndarray:
        return _unit(self.heading)

    def local(self, pos):
        """(distance along the arm, signed distance to its left) for positions (N, 2)."""
        d = pos - self.origin
        u = self.direction
        return d @ u, u[0] * d[:, 1] - u[1] * d[:, 0]


@dataclass
class Port:
    name: str
    arm: Arm
    sites: np.ndarray
    gamma: np.ndarray  # absorber rate per port site (t units)


@dataclass
class DeviceGraph:
    spec: LatticeSpec
    geometry_tag: str
    coords: np.ndarray  # (N, 3) ints (p, j, s)
    positions: np.ndarray  # (N, 2) nm
    domain: np.ndarray  # +1 VPC1, -1 VPC2
    onsite: np.ndarray
    hopping: sp.csr_matrix  # symmetric, amplitude -t
    ports: dict
    arms: dict
    junction: np.ndarray
    extent: int
    lead_length: int
    half_width: int
    gamma_peak: float
    bends: int = 0  # heading changes along the wall (polyline devices)
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    @property
    def sublattice(self) -> np.ndarray:
        return self.coords[:, 2]

    @property
    def mass_mask(self) -> np.ndarray:
        return self.onsite

    def hamiltonian(self) -> sp.csr_matrix:
        return (self.hopping + sp.diags(self.onsite)).tocsr()

    def absorber(self, gamma_peak: float | None = None) -> np.ndarray:
        scale = 1.0 if gamma_peak is None else gamma_peak / self.gamma_peak
        g = np.zeros(self.n_sites)
        for port in self.ports.values():
            g[port.sites] += scale * port.gamma
        return g

    def index_of(self, p, j, s):
        return self._index.get((int(p), int(j), int(s)))

    def bonds(self) -> np.ndarray:
        coo = sp.triu(self.hopping, k=1).tocoo()
        return np.stack([coo.row, coo.col], axis=1)

    def interface_bonds(self) -> np.ndarray:
        b = self.bonds()
        return b[self.domain[b[:, 0]] != self.domain[b[:, 1]]]

    def mirror_permutation(self) -> np.ndarray:
        """Site map of the reflection y -> a0 - y through the junction axis (A <-> B)."""
        perm = np.empty(self.n_sites, dtype=int)
        for i, (p, j, s) in enumerate(self.coords):
            img = self.index_of(p, -j, 1 - s)
            if img is None:
                raise InvalidGeometryError("device is not mirror symmetric")
            perm[i] = img
        return perm

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry_tag,
            "a_nm": self.spec.a,
            "t": self.spec.t,
            "delta": self.spec.delta,
            "sites": [
                {"x": float(x), "y": float(y), "sublattice": "AB"[s], "onsite": float(e)}
                for (x, y), s, e in zip(self.positions, self.sublattice, self.onsite)
            ],
            "bonds": self.bonds().tolist(),
            "ports": {
                name: {"sites": port.sites.tolist(), "gamma": port.gamma.tolist()}
                for name, port in self.ports.items()
            },
        }


def transport_preset(sign: int = +1) -> LatticeSpec:
    return build_lattice_spec(470.0, 1.0, TRANSPORT_DELTA * (1 if sign >= 0 else -1))


def preset_device(geometry_tag: str = "hsbs", sign: int = +1, **kw) -> "DeviceGraph":
    """Device on the transport preset with its matching extent and wall half-width."""
    kw.setdefault("extent", TRANSPORT_EXTENT)
    kw.setdefault("half_width", TRANSPORT_HALF_WIDTH)
    return build_device(transport_preset(sign), geometry_tag, **kw)


def site_position(spec: LatticeSpec, p, j, s):
    a, a0 = spec.a, spec.bond_length
    h = np.sqrt(3.0) / 2.0 * a
    p, j, s = np.asarray(p), np.asarray(j), np.asarray(s)
    return np.stack([p * a / 2.0, j * h + s * a0], axis=-1)


def lattice_coords(spec: LatticeSpec, pos, tol=1e-6):
    """Inverse of site_position; None entries where pos is not a lattice site."""
    a, a0 = spec.a, spec.bond_length
    h = np.sqrt(3.0) / 2.0 * a
    pos = np.atleast_2d(pos)
    out = []
    for x, y in pos:
        hit = None
        for s in (0, 1):
            j = int(np.rint((y - s * a0) / h))
            p = int(np.rint(2.0 * x / a))
            if abs(y - s * a0 - j * h) < tol * a and abs(x - p * a / 2.0) < tol * a and (p - j) % 2 == 0:
                hit = (p, j, s)
                break
        out.append(hit)
    return out


def rotate_about(points, centre, deg):
    c, s = np.cos(np.deg2rad(deg)), np.sin(np.deg2rad(deg))
    R = np.array([[c, -s], [s, c]])
    return (np.asarray(points) - centre) @ R.T + centre


def _candidate_sites(spec, lo, hi):
    a, a0 = spec.a, spec.bond_length
    h = np.sqrt(3.0) / 2.0 * a
    j = np.arange(int(np.floor((lo[1] - a0) / h)) - 1, int(np.ceil(hi[1] / h)) + 2)
    p = np.arange(int(np.floor(2 * lo[0] / a)) - 1, int(np.ceil(2 * hi[0] / a)) + 2)
    P, Jg = np.meshgrid(p, j, indexing="ij")
    keep = (P - Jg) % 2 == 0
    P, Jg = P[keep], Jg[keep]
    coords = np.concatenate(
        [np.stack([P, Jg, np.zeros_like(P)], 1), np.stack([P, Jg, np.ones_like(P)], 1)]
    )
    return coords


def _segment_distance(pos, start, end):
    d = end - start
    L2 = d @ d
    s = np.clip(((pos - start) @ d) / L2, 0.0, 1.0)
    return np.linalg.norm(pos - (start + s[:, None] * d), axis=1)


def _neighbor_table(coords):
    """Bonds A(p,j)-B(p,j), A(p,j)-B(p-1,j-1), A(p,j)-B(p+1,j-1)."""
    index = {tuple(c): i for i, c in enumerate(map(tuple, coords))}
    rows, cols = [], []
    for i, (p, j, s) in enumerate(coords):
        if s != 0:
            continue
        for q in ((p, j, 1), (p - 1, j - 1, 1), (p + 1, j - 1, 1)):
            k = index.get(q)
            if k is not None:
                rows.append(i)
                cols.append(k)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def _prune(coords):
    """Drop sites with fewer than two neighbours, then keep the largest component."""
    while True:
        r, c = _neighbor_table(coords)
        n = len(coords)
        deg = np.bincount(np.concatenate([r, c]), minlength=n)
        keep = deg >= 2
        if keep.all():
            break
        coords = coords[keep]
    adj = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp > 1:
        big = np.argmax(np.bincount(labels))
        coords = coords[labels == big]
    return coords


def _polyline(spec, headings_and_cells, start):
    pts = [np.asarray(start, dtype=float)]
    for heading, cells in headings_and_cells:
        pts.append(pts[-1] + cells * spec.a * _unit(heading))
    return np.array(pts)


def build_device(
    spec: LatticeSpec,
    geometry_tag: str = "hsbs",
    extent: int = 30,
    lead_length: int = 12,
    half_width: int = DEFAULT_HALF_WIDTH,
    gamma_peak: float = DEFAULT_GAMMA,
) -> DeviceGraph:
    """Build a finite device; walls follow the zigzag directions (0, +-60, 180 deg)."""
    if geometry_tag not in GEOMETRIES:
        raise InvalidParameterError(f"geometry must be one of {GEOMETRIES}, got {geometry_tag!r}")
    if extent < 24:
        raise InvalidGeometryError(f"extent {extent} < 24 cells per arm")
    if lead_length < 10:
        raise InvalidGeometryError(f"lead_length {lead_length} < 10 cells")
    if lead_length < ABSORBER_CELLS + 2 or lead_length > extent - 8:
        raise InvalidGeometryError("lead too short for the absorber ramp or too long for the arm")
    if half_width < 4:
        raise InvalidGeometryError("half_width must be >= 4 cells")
    if spec.delta == 0.0:
        raise InvalidParameterError("a device needs a gapped lattice (delta != 0)")

    a, a0 = spec.a, spec.bond_length
    J = np.array([a / 2.0, a0 / 2.0])
    L = extent * a
    W = half_width * a

    if geometry_tag == "hsbs":
        arms = {
            "a": Arm("a", J, 180.0, L),
            "b": Arm("b", J, 0.0, L),
            "c": Arm("c", J, 60.0, L),
            "d": Arm("d", J, -60.0, L),
        }
        segments = [(J, J + arm.length * arm.direction) for arm in arms.values()]
        port_names = ("a", "b", "c", "d")
        bends = 0
    else:
        mid = max(8, extent // 3)
        body = {
            "straight": [],
            "z": [(60.0, mid), (0.0, mid)],
            "omega": [(60.0, mid), (0.0, mid), (-60.0, mid)],
        }[geometry_tag]
        inner = _polyline(spec, body, J)
        arms = {
            "in": Arm("in", inner[0], 180.0, L),
            "out": Arm("out", inner[-1], 0.0, L),
        }
        verts = np.vstack([inner[0] - L * _unit(0.0), inner, inner[-1] + L * _unit(0.0)])
        segments = list(zip(verts[:-1], verts[1:]))
        port_names = ("in", "out")
        heads = [0.0] + [h for h, _ in body] + [0.0]
        bends = sum(not np.isclose(h0, h1) for h0, h1 in zip(heads, heads[1:]))

    allpts = np.array([p for seg in segments for p in seg])
    lo = allpts.min(0) - W - a
    hi = allpts.max(0) + W + a
    coords = _candidate_sites(spec, lo, hi)
    pos = site_position(spec, coords[:, 0], coords[:, 1], coords[:, 2])
    dist = np.min([_segment_distance(pos, s0, s1) for s0, s1 in segments], axis=0)
    coords = coords[dist <= W]
    coords = _prune(coords)
    # deterministic ordering
    order = np.lexsort((coords[:, 2], coords[:, 0], coords[:, 1]))
    coords = coords[order]
    pos = site_position(spec, coords[:, 0], coords[:, 1], coords[:, 2])

    if geometry_tag == "hsbs":
        domain = _hsbs_domains(pos, J)
    else:
        domain = _polyline_domains(pos, verts)

    sub = coords[:, 2]
    mass = domain * spec.delta
    onsite = np.where(sub == 0, mass, -mass).astype(float)
    r, c = _neighbor_table(coords)
    n = len(coords)
    hop = sp.coo_matrix((np.full(len(r), -spec.t), (r, c)), shape=(n, n))
    hop = (hop + hop.T).tocsr()

    ports = {}
    for name in port_names:
        arm = arms[name]
        s_along, s_perp = arm.local(pos)
        in_lead = (s_along > arm.length - lead_length * a) & (np.abs(s_perp) <= W + a)
        sites = np.flatnonzero(in_lead)
        ramp_start = arm.length - ABSORBER_CELLS * a
        g = gamma_peak * np.clip((s_along[sites] - ramp_start) / (ABSORBER_CELLS * a), 0.0, 1.0)
        ports[name] = Port(name, arm, sites, g)

    dev = DeviceGraph(
        spec=spec,
        geometry_tag=geometry_tag,
        coords=coords,
        positions=pos,
        domain=domain,
        onsite=onsite,
        hopping=hop,
        ports=ports,
        arms=arms,
        junction=J,
        extent=extent,
        lead_length=lead_length,
        half_width=half_width,
        gamma_peak=gamma_peak,
        bends=bends,
    )
    dev._index = {tuple(cc): i for i, cc in enumerate(map(tuple, coords))}
    _check_ports_disjoint(dev)
    return dev


def _check_ports_disjoint(dev):
    seen = np.zeros(dev.n_sites, dtype=int)
    for port in dev.ports.values():
        if port.sites.size == 0:
            raise InvalidGeometryError(f"port {port.name} holds no sites")
        seen[port.sites] += 1
    if seen.max() > 1:
        raise InvalidGeometryError("port regions overlap; increase extent")


def _hsbs_domains(pos, J):
    """Four sectors around J: a-c VPC2, c-b VPC1, b-d VPC2, d-a VPC1.

    With this choice wall a is I21 and wall b is I12, so the K-valley modes
    of both horizontal arms run towards the junction.
    """
    x, y = pos[:, 0] - J[0], pos[:, 1] - J[1]
    upper = y > 0
    right_of_c = x > y / np.sqrt(3.0)
    right_of_d = x > -y / np.sqrt(3.0)
    dom = np.where(upper, np.where(right_of_c, 1, -1), np.where(right_of_d, -1, 1))
    return dom.astype(int)


def _polyline_domains(pos, verts):
    """VPC2 above the (x-monotonic) wall, VPC1 below: horizontal runs are I21."""
    y_wall = np.interp(pos[:, 0], verts[:, 0], verts[:, 1])
    return np.where(pos[:, 1] > y_wall, -1, 1).astype(int)
