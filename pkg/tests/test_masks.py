import numpy as np
import pytest

from phasecdp.masks import (
    MaskDistribution,
    binary,
    check_admissibility,
    ensemble_from_json_dict,
    normalize_distribution,
    octanary,
    sample_ensemble,
    ternary,
    uniform,
)


def test_octanary_moments_strict():
    # direct atom-weighted moments of the eight-point law
    rep = check_admissibility(octanary())
    assert abs(rep.mean) < 1e-12
    assert abs(rep.square_mean) < 1e-12
    assert abs(rep.second_abs_moment - 2.0) < 1e-12
    assert abs(rep.fourth_abs_moment - 8.0) < 1e-12
    assert rep.strict and rep.relaxed and rep.symmetric


def test_ternary_moments_relaxed_only():
    rep = check_admissibility(ternary())
    assert abs(rep.mean) < 1e-12
    assert abs(rep.square_mean - 0.5) < 1e-12  # nonzero: fails the strict class
    assert abs(rep.second_abs_moment - 0.5) < 1e-12
    assert abs(rep.fourth_abs_moment - 0.5) < 1e-12
    assert rep.relaxed and not rep.strict


def test_binary_fails_admissibility():
    rep = check_admissibility(binary())
    assert abs(rep.mean - 0.5) < 1e-12
    assert not rep.relaxed and not rep.strict


def test_uniform_is_plain():
    rep = check_admissibility(uniform())
    assert rep.second_abs_moment == 1.0
    assert not rep.relaxed
    ens = sample_ensemble(uniform(), n=6, L=1, seed=0)
    np.testing.assert_array_equal(ens.patterns, np.ones((1, 6)))


def test_normalize_octanary():
    norm = normalize_distribution(octanary())
    rep = check_admissibility(norm)
    assert abs(rep.second_abs_moment - 1.0) < 1e-12
    assert abs(rep.fourth_abs_moment - 2.0) < 1e-12
    assert norm.normalized
    # scaling by 1/sqrt(2) everywhere
    raw_vals = sorted(abs(v) for v in octanary().values())
    new_vals = sorted(abs(v) for v in norm.values())
    np.testing.assert_allclose(new_vals, np.array(raw_vals) / np.sqrt(2.0))


def test_normalize_noop_when_normalized():
    norm = normalize_distribution(uniform())
    np.testing.assert_array_equal(norm.values(), uniform().values())


def test_normalize_rejects_degenerate():
    dead = MaskDistribution("custom", ((0.0 + 0j, 1.0),), bound=0.0)
    with pytest.raises(ValueError):
        normalize_distribution(dead)


@pytest.mark.parametrize("dist", [octanary(), octanary(normalized=True), ternary(), binary()])
def test_normalization_preserves_admissibility_class(dist):
    before = check_admissibility(dist)
    after = check_admissibility(normalize_distribution(dist))
    assert before.strict == after.strict
    assert before.relaxed == after.relaxed


def test_sample_ensemble_support_and_bound():
    dist = octanary()
    ens = sample_ensemble(dist, n=8, L=2, seed=4)
    atoms = dist.values()
    for value in ens.patterns.ravel():
        assert np.abs(atoms - value).min() < 1e-12
    assert np.all(np.abs(ens.patterns) <= dist.bound + 1e-12)


def test_sample_ensemble_plain_pattern():
    ens = sample_ensemble(binary(), n=10, L=4, include_plain=True, seed=1)
    np.testing.assert_array_equal(ens.patterns[0], np.ones(10))
    rest = ens.patterns[1:].ravel()
    assert set(np.round(rest.real).astype(int)) <= {0, 1}
    assert np.abs(rest.imag).max() == 0


def test_sample_ensemble_reproducible():
    a = sample_ensemble(ternary(), 12, 3, seed=7)
    b = sample_ensemble(ternary(), 12, 3, seed=7)
    np.testing.assert_array_equal(a.patterns, b.patterns)


def test_sample_ensemble_validation():
    with pytest.raises(ValueError):
        sample_ensemble(octanary(), n=4, L=0)
    with pytest.raises(ValueError):
        MaskDistribution("custom", (), bound=1.0)
    with pytest.raises(ValueError):
        MaskDistribution("custom", ((1.0 + 0j, 0.5),), bound=1.0)  # probs != 1
    with pytest.raises(ValueError):
        MaskDistribution("custom", ((2.0 + 0j, 1.0),), bound=1.0)  # exceeds bound


def test_ensemble_bound_includes_plain():
    ens = sample_ensemble(ternary(), 4, 2, include_plain=True, seed=0)
    assert ens.bound == 1.0
    oct_ens = sample_ensemble(octanary(), 4, 2, seed=0)
    assert oct_ens.bound == pytest.approx(np.sqrt(6.0))


def test_ensemble_json_roundtrip_explicit_and_seeded():
    ens = sample_ensemble(octanary(normalized=True), 6, 3, seed=11)
    explicit = ensemble_from_json_dict(ens.to_json_dict(explicit_patterns=True))
    np.testing.assert_allclose(explicit.patterns, ens.patterns)
    reseeded = ensemble_from_json_dict(ens.to_json_dict(explicit_patterns=False))
    np.testing.assert_allclose(reseeded.patterns, ens.patterns)
