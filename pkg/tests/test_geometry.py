import math

import numpy as np
import pytest

from qkrf.geometry import (
    KahlerConeError,
    ModelError,
    PotentialField,
    build_discrete_model,
    build_p1_model,
    canonical_measure,
    diff_matrix,
    discrete_model_from_json,
    discrete_model_to_json,
    gauss_legendre_01,
    integrate,
    ma_density,
)


def test_gauss_legendre_exactness():
    """m nodes integrate monomials up to degree 2m-1 exactly."""
    x, w = gauss_legendre_01(8)
    for p in range(16):
        assert np.dot(w, x**p) == pytest.approx(1.0 / (p + 1), abs=1e-14)


def test_diff_matrix_on_polynomials():
    x, _ = gauss_legendre_01(12)
    d = diff_matrix(x)
    assert np.allclose(d @ x**3, 3.0 * x**2, atol=1e-10)
    assert np.allclose(d @ np.ones_like(x), 0.0, atol=1e-10)


def test_model_counts_and_volume(p1):
    assert list(p1.levels) == [1, 2, 3]
    assert [p1.nk(k) for k in p1.levels] == [3, 5, 7]
    assert p1.node_count == 96 * 24
    assert np.sum(p1.mu0_weights) == pytest.approx(p1.volume, abs=1e-12)
    assert np.sum(p1.radial_mu0_weights) == pytest.approx(2.0, abs=1e-12)
    assert np.sum(p1.radial_weights) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ModelError):
        p1.require_level(4)


def test_model_guards():
    with pytest.raises(ModelError):
        build_p1_model(0)
    with pytest.raises(ModelError):
        build_p1_model(2, radial_nodes=8, angular_nodes=16)


def test_section_gram_matches_beta_integrals(p1):
    """Reference-basis norms against mu0/V are Beta integrals."""
    for k in (1, 2):
        diag = p1.radial_section_sq(k) @ (p1.radial_mu0_weights / p1.volume)
        m = np.arange(2 * k + 1)
        expected = np.array(
            [
                math.factorial(i) * math.factorial(2 * k - i)
                / math.factorial(2 * k + 1)
                for i in m
            ]
        )
        assert np.allclose(diag, expected, atol=1e-13)


def test_radialize_round_trip(p1):
    profile = np.sin(p1.u)
    values = p1.tile_radial(profile)
    assert np.allclose(p1.radialize(values), profile, atol=1e-12)
    values = values.copy()
    values[1] += 0.01
    with pytest.raises(ModelError):
        p1.radialize(values)


def test_potential_field_shift_and_radial_flag(p1):
    phi = PotentialField(p1, None, 0.1 * p1.u)
    assert phi.is_radial
    moved = phi.shifted(2.0)
    assert np.allclose(moved.require_profile(), phi.require_profile() + 2.0)
    dense = PotentialField(p1, np.sin(p1.grid.nodes[:, 1]))
    assert not dense.is_radial
    with pytest.raises(ModelError):
        dense.require_profile()


def test_canonical_measure_is_shift_invariant_probability(p1, bump):
    w = canonical_measure(bump)
    assert np.all(w > 0.0)
    assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
    w_shift = canonical_measure(bump.shifted(500.0))
    assert np.allclose(w, w_shift, atol=1e-12)


def test_ma_density_round_metric(p1):
    zero = p1.zero_potential()
    density = ma_density(zero)
    assert np.allclose(density, p1.mu0_density, atol=1e-12)
    assert integrate(density, p1.node_weights) == pytest.approx(p1.volume, abs=1e-10)


def test_ma_density_integrates_to_volume(p1, bump):
    assert integrate(ma_density(bump), p1.node_weights) == pytest.approx(
        p1.volume, abs=1e-10
    )


def test_kahler_cone_guard(p1):
    steep = PotentialField(p1, None, 5.0 * p1.u * (1.0 - p1.u))
    with pytest.raises(KahlerConeError):
        ma_density(steep)


def test_interpolate_radial_reproduces_nodes(p1):
    profile = np.cos(2.0 * p1.u)
    assert np.allclose(p1.interpolate_radial(profile, p1.u), profile, atol=1e-12)
    mid = p1.interpolate_radial(p1.u**3, np.array([0.5]))
    assert mid[0] == pytest.approx(0.125, abs=1e-10)


def test_discrete_model_json_round_trip(discrete):
    doc = discrete_model_to_json(discrete)
    back = discrete_model_from_json(doc)
    assert back.levels == discrete.levels
    assert np.allclose(back.node_weights, discrete.node_weights)
    for k in discrete.levels:
        assert np.allclose(back.sections(k), discrete.sections(k))


def test_discrete_model_validation():
    good = np.eye(3, dtype=complex)
    with pytest.raises(ModelError):
        build_discrete_model({1: good}, np.array([0.5, 0.4, 0.4]))
    rank_deficient = np.ones((2, 3), dtype=complex)
    with pytest.raises(ModelError):
        build_discrete_model({1: rank_deficient}, np.full(3, 1.0 / 3.0))
    with pytest.raises(ModelError):
        build_discrete_model({}, np.full(3, 1.0 / 3.0))
