import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valleon.errors import DegenerateBandError, InvalidParameterError
from valleon.lattice import build_lattice_spec
from valleon.topology import (
    BERRY_SIGN,
    berry_curvature_map,
    phase_vortex_chirality,
    phase_winding,
    valley_chern,
    valley_moment_sign,
    valley_report,
    valley_weights,
)


@pytest.fixture(scope="module")
def field200(spec):
    return berry_curvature_map(spec, "lower", 200)


@pytest.fixture(scope="module")
def field200_neg(spec):
    return berry_curvature_map(spec.with_delta(-spec.delta), "lower", 200)


def test_total_chern_is_zero(field200):
    assert field200.chern_total == 0
    assert abs(field200.omega.sum()) < 1e-9


def test_mass_flip_negates_curvature(field200, field200_neg):
    assert np.abs(field200.omega + field200_neg.omega).max() < 1e-10


def test_peak_within_one_plaquette_of_corner(field200):
    i = np.argmax(np.abs(field200.omega))
    d = field200.corner_distance().ravel()[i]
    assert d <= field200.plaquette_width


def test_two_largest_near_corners(field200):
    order = np.argsort(np.abs(field200.omega).ravel())[::-1][:2]
    bound = 2 * np.pi / (field200.n_grid * field200.spec.a) * 3
    assert np.all(field200.corner_distance().ravel()[order] <= bound)


def test_pinned_sign_convention(spec):
    # BERRY_SIGN is chosen so that the lower band of a positive-mass lattice
    # carries positive curvature around K
    assert BERRY_SIGN == -1
    f = berry_curvature_map(spec, "lower", 48)
    assert valley_chern(f, +1) > 0 > valley_chern(f, -1)


@pytest.mark.xfail(strict=True, reason="lattice half-zone value is 0.4604 at delta/t = 0.1; see notes")
def test_valley_chern_half_quantized(field200):
    assert abs(valley_chern(field200, +1) - 0.5) <= 0.02
    assert abs(valley_chern(field200, -1) + 0.5) <= 0.02
    assert abs(valley_chern(field200, +1) - valley_chern(field200, -1) - 1.0) <= 0.04


def test_valley_chern_measured_value(field200):
    # what the lattice actually gives; the continuum value 1/2 is approached only as delta/t -> 0
    cK, cKp = valley_chern(field200, +1), valley_chern(field200, -1)
    assert cK == pytest.approx(0.46036, abs=2e-4)
    assert cKp == pytest.approx(-cK, abs=1e-12)
    assert np.sign(cK) == 1


def test_valley_chern_mass_antisymmetry(field200, field200_neg):
    assert abs(valley_chern(field200, 1) + valley_chern(field200_neg, 1)) < 0.01


def test_small_mass_approaches_half():
    f = berry_curvature_map(build_lattice_spec(470, 1, 0.01), "lower", 200)
    assert abs(valley_chern(f, 1) - 0.5) < 0.01


def test_grid_convergence(spec):
    errs = [abs(valley_chern(berry_curvature_map(spec, "lower", n), 1) - 0.5) for n in (50, 100, 200)]
    for a, b in zip(errs, errs[1:]):
        assert b <= a * 1.1


def test_antisymmetry_in_k(field200):
    om = field200.omega
    # the plaquette at -k has indices (N - 1 - i, N - 1 - j)
    assert np.abs(om + om[::-1, ::-1]).max() < 5e-3 * np.abs(om).max()


def test_partition_weights_sum_to_one(field200):
    w = valley_weights(field200, 1) + valley_weights(field200, -1)
    assert np.allclose(w, 1.0)
    ties = valley_weights(field200, 1) == 0.5
    assert ties.any()


def test_degenerate_band_error():
    with pytest.raises(DegenerateBandError) as exc:
        berry_curvature_map(build_lattice_spec(470, 1, 0.0), "lower", 30)
    assert exc.value.k is not None


def test_grid_too_small(spec):
    with pytest.raises(InvalidParameterError):
        berry_curvature_map(spec, "lower", 23)
    with pytest.raises(InvalidParameterError):
        berry_curvature_map(spec, "middle", 30)


@settings(max_examples=15, deadline=None)
@given(delta=st.floats(0.02, 2.5), sign=st.sampled_from([1, -1]), n=st.integers(24, 40))
def test_property_integrality(delta, sign, n):
    f = berry_curvature_map(build_lattice_spec(470, 1, sign * delta), "lower", n)
    total = f.omega.sum() / (2 * np.pi)
    assert abs(total - round(total)) < 1e-8
    assert f.chern_total == 0


def test_chirality_reference_cases():
    p, m = build_lattice_spec(470, 1, 0.1), build_lattice_spec(470, 1, -0.1)
    # VPC1 (delta > 0): CW at K', ACW at K; the opposite for VPC2
    assert phase_vortex_chirality(p, +1) == "ACW"
    assert phase_vortex_chirality(p, -1) == "CW"
    assert phase_vortex_chirality(m, +1) == "CW"
    assert phase_vortex_chirality(m, -1) == "ACW"


@pytest.mark.parametrize("valley", [1, -1])
@pytest.mark.parametrize("sign", [1, -1])
def test_winding_is_two_pi(valley, sign):
    s = build_lattice_spec(470, 1, 0.1 * sign)
    assert abs(abs(phase_winding(s, valley)) - 2 * np.pi) < 1e-9


def test_chirality_locking():
    def ch(v, sg):
        return phase_vortex_chirality(build_lattice_spec(470, 1, 0.1 * sg), v)

    for v in (1, -1):
        for sg in (1, -1):
            assert ch(v, sg) == ch(-v, -sg)
            assert ch(v, sg) != ch(-v, sg)


def test_moment_signs():
    p, m = build_lattice_spec(470, 1, 0.1), build_lattice_spec(470, 1, -0.1)
    assert valley_moment_sign(p, +1) == +1
    assert valley_moment_sign(p, -1) == -1
    assert valley_moment_sign(m, +1) == -1
    assert valley_moment_sign(m, -1) == +1
    with pytest.raises(DegenerateBandError):
        valley_moment_sign(build_lattice_spec(470, 1, 0.0), 1)


def test_moment_chern_consistency():
    for sg in (1, -1):
        s = build_lattice_spec(470, 1, 0.1 * sg)
        f = berry_curvature_map(s, "lower", 48)
        for v in (1, -1):
            assert np.sign(valley_chern(f, v)) == v * sg
            assert valley_moment_sign(s, v) == v * sg


def test_valley_report(spec):
    rep = valley_report(spec, 48)
    d = rep.to_dict()
    assert set(d) == {"c_K", "c_Kprime", "c_v", "moment_sign_K", "moment_sign_Kprime",
                      "chirality_K", "chirality_Kprime", "n_grid", "delta", "t"}
    assert rep.c_v == rep.c_K - rep.c_Kprime
    assert rep.chern_total == 0
