import numpy as np
import pytest

from valleon.errors import InvalidParameterError, OutOfRangeError, TooNarrowError
from valleon.lattice import build_lattice_spec, default_preset
from valleon.ribbon import (
    EDGE_DELTA,
    S0,
    branch_for_valley,
    build_ribbon,
    edge_preset,
    extract_edge_states,
    find_carrier,
    group_velocity,
    ribbon_bands,
    valley_momentum,
    _edge_state_at,
)


@pytest.fixture(scope="module")
def edge():
    return edge_preset(+1)


@pytest.fixture(scope="module")
def branches(edge):
    out = {}
    for iface in ("I12", "I21"):
        out[iface] = extract_edge_states(ribbon_bands(build_ribbon(edge, iface, 20), 128))
    return out


def test_size_and_hermiticity(edge):
    rib = build_ribbon(edge, "I12", 20)
    for k in np.linspace(-np.pi / edge.a, np.pi / edge.a, 17):
        H = rib.hamiltonian(k)
        assert H.shape == (80, 80)
        assert np.abs(H - H.conj().T).max() < 1e-14
    assert rib.spec.n_sites == 2 * 2 * 20


def test_mass_layout(edge):
    rib = build_ribbon(edge, "I12", 10)
    upper = rib.chain >= 10
    a_sites = rib.sublattice == 0
    assert np.all(rib.onsite[upper & a_sites] == EDGE_DELTA)
    assert np.all(rib.onsite[~upper & a_sites] == -EDGE_DELTA)
    i21 = build_ribbon(edge, "I21", 10)
    assert np.array_equal(i21.onsite, -rib.onsite)


def test_too_narrow(edge):
    with pytest.raises(TooNarrowError):
        build_ribbon(edge, "I12", 7)
    with pytest.raises(InvalidParameterError):
        build_ribbon(edge, "I33", 10)


def test_i21_equals_i12_with_flipped_mass(edge):
    a = ribbon_bands(build_ribbon(edge, "I21", 20), 64).energies
    b = ribbon_bands(build_ribbon(edge.with_delta(-edge.delta), "I12", 20), 64).energies
    assert np.abs(a - b).max() < 1e-12


def test_time_reversal_symmetry(edge):
    rib = build_ribbon(edge, "I12", 20)
    for k in np.linspace(0.1, 3.0, 9) / edge.a:
        assert np.allclose(np.linalg.eigvalsh(rib.hamiltonian(k)), np.linalg.eigvalsh(rib.hamiltonian(-k)), atol=1e-12)


def test_bands_sorted_with_small_residual(edge):
    rb = ribbon_bands(build_ribbon(edge, "I12", 20), 128)
    assert rb.residual < 1e-9
    assert np.all(np.diff(rb.energies, axis=1) >= 0)
    with pytest.raises(InvalidParameterError):
        ribbon_bands(rb.ribbon, 63)


def test_mid_gap_state_at_default_mass():
    rb = ribbon_bands(build_ribbon(default_preset(), "I12", 20), 128)
    assert np.abs(rb.energies).min() < 0.02


@pytest.mark.parametrize("delta", [0.1, EDGE_DELTA])
def test_bulk_states_respect_gap(delta):
    rb = ribbon_bands(build_ribbon(build_lattice_spec(470, 1, delta), "I12", 20), 128)
    loc = rb.localization(4)
    assert np.all(np.abs(rb.energies[loc < 0.3]) >= delta * 0.95)


def _width_shift(spec, iface, w):
    """Largest |E_w - E_2w| over the interface-branch points of a width-w ribbon."""
    r, r2 = build_ribbon(spec, iface, w), build_ribbon(spec, iface, 2 * w)
    out = []
    for b in extract_edge_states(ribbon_bands(r, 128)):
        for k, E in zip(b.k_values, b.energies):
            out.append((abs(_edge_state_at(r2, k, 4, E)[0] - E), abs(E)))
    return np.array(out)


@pytest.mark.xfail(strict=True, reason="points within 8% of the gap edge mix with the outer zigzag "
                                       "bands at |E| ~ delta; worst shift 1.8e-6 at width 20; see notes")
@pytest.mark.parametrize("iface", ["I12", "I21"])
def test_width_convergence(edge, iface):
    assert _width_shift(edge, iface, 20)[:, 0].max() < 1e-6


@pytest.mark.parametrize("iface", ["I12", "I21"])
def test_width_convergence_decays_exponentially(edge, iface):
    d20 = _width_shift(edge, iface, 20)
    d30 = _width_shift(edge, iface, 30)
    assert d30[:, 0].max() < 1e-6
    assert d30[:, 0].max() < 1e-2 * d20[:, 0].max()
    deep = d20[:, 1] < 0.75 * EDGE_DELTA
    assert d20[deep, 0].max() < 1e-6


@pytest.mark.xfail(strict=True, reason="at delta/t = 0.1 the wall mode extends ~10 cells; window 4 holds ~55%")
def test_width_convergence_default_mass():
    s = default_preset()
    rb20 = ribbon_bands(build_ribbon(s, "I12", 20), 128)
    rb40 = ribbon_bands(build_ribbon(s, "I12", 40), 128)
    b20 = extract_edge_states(rb20)
    b40 = extract_edge_states(rb40)
    assert b20 and b40
    e20 = np.concatenate([b.energies for b in b20])
    e40 = np.concatenate([b.energies for b in b40])
    assert np.abs(np.sort(e20) - np.sort(e40)).max() < 1e-6


@pytest.mark.xfail(strict=True, reason="no interface state reaches the 0.6 threshold in window 4 at delta/t = 0.1")
@pytest.mark.parametrize("iface", ["I12", "I21"])
def test_branch_exists_at_default_mass(iface):
    rb = ribbon_bands(build_ribbon(default_preset(), iface, 20), 128)
    assert len(extract_edge_states(rb, 0.6, 4)) >= 1


def test_branches_per_interface(branches):
    for iface, brs in branches.items():
        # one branch per valley; the two together form the single wall curve
        assert sorted(b.valley for b in brs) == [-1, 1]
        for b in brs:
            assert np.all(b.localization > 0.6)
            assert np.all(np.abs(b.energies) < EDGE_DELTA)


def test_over_strict_threshold_is_empty():
    rb = ribbon_bands(build_ribbon(default_preset(), "I12", 20), 128)
    assert extract_edge_states(rb, 0.99, 4) == []


def test_threshold_monotone(edge):
    rb = ribbon_bands(build_ribbon(edge, "I12", 20), 128)
    counts = [sum(len(b.k_values) for b in extract_edge_states(rb, th)) for th in (0.3, 0.6, 0.9, 0.99)]
    assert counts == sorted(counts, reverse=True)
    with pytest.raises(InvalidParameterError):
        extract_edge_states(rb, 1.0)


def test_branch_continuity(branches):
    for brs in branches.values():
        for b in brs:
            assert np.abs(np.diff(b.energies)).max() < 5 * b.energy_step()


def test_localization_grows_with_window(edge):
    rb = ribbon_bands(build_ribbon(edge, "I12", 20), 128)
    l2, l4, l8 = (rb.localization(w) for w in (2, 4, 8))
    assert np.all(l2 <= l4 + 1e-12) and np.all(l4 <= l8 + 1e-12)


def test_gap_traversal(branches):
    d = EDGE_DELTA
    for brs in branches.values():
        e = np.sort(np.concatenate([b.energies for b in brs]))
        res = max(b.energy_step() for b in brs)
        # from the lower bulk edge to the upper one, no hole wider than 3 energy steps
        assert np.diff(np.r_[-d, e, d]).max() <= 3 * res


def test_velocity_sign_table(branches):
    v = {(i, val): group_velocity(branch_for_valley(branches[i], val), val)
         for i in ("I12", "I21") for val in (1, -1)}
    assert np.sign(v["I12", 1]) == -S0
    assert np.sign(v["I21", 1]) == +S0
    for i in ("I12", "I21"):
        assert np.sign(v[i, 1]) == -np.sign(v[i, -1])
    for val in (1, -1):
        assert np.sign(v["I12", val]) == -np.sign(v["I21", val])


def test_velocity_flips_with_mass(edge):
    flip = edge.with_delta(-edge.delta)
    b0 = branch_for_valley(extract_edge_states(ribbon_bands(build_ribbon(edge, "I12"), 128)), 1)
    b1 = branch_for_valley(extract_edge_states(ribbon_bands(build_ribbon(flip, "I12"), 128)), 1)
    assert np.sign(group_velocity(b0, 1)) == -np.sign(group_velocity(b1, 1))


def test_velocity_out_of_range(branches):
    b = branch_for_valley(branches["I12"], 1)
    with pytest.raises(OutOfRangeError):
        group_velocity(b, -1)


def test_carrier_matches_branch(edge):
    rib = build_ribbon(edge, "I12", 20)
    for valley in (1, -1):
        k0, vec, vel = find_carrier(rib, valley, 0.0)
        assert abs(k0 - valley_momentum(edge.a, valley)) < np.pi / (3 * edge.a)
        E = vec.conj() @ rib.hamiltonian(k0) @ vec
        assert abs(E) < 1e-10
        assert np.sign(vel) == -valley * S0
    with pytest.raises(OutOfRangeError):
        find_carrier(rib, 1, 2 * EDGE_DELTA)
