import math

import numpy as np
import pytest

from phasecdp.analysis import (
    phase_aligned_distance,
    rel_error_lifted,
    rel_mse_db,
    rel_mse_lifted,
    snr_db,
    trial_metrics,
)
from phasecdp.masks import sample_ensemble, uniform
from phasecdp.measurement import LiftedOperator, forward_cdp
from phasecdp.signals import generate_gaussian


def lifted(x):
    return np.outer(x, np.conj(x))


def test_rel_error_examples():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert rel_error_lifted(lifted(x), x) == 0.0
    assert rel_error_lifted(np.zeros((4, 4)), x) == pytest.approx(1.0)
    xu = x / np.linalg.norm(x)
    assert rel_error_lifted(2.0 * lifted(xu), xu) == pytest.approx(1.0)


def test_rel_error_zero_reference():
    with pytest.raises(ValueError):
        rel_error_lifted(np.eye(3), np.zeros(3))


def test_rel_error_phase_invariant():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    X_hat = lifted(x) + 0.1 * np.eye(5)
    for theta in (0.3, 1.1, -2.0):
        assert rel_error_lifted(X_hat, np.exp(1j * theta) * x) == pytest.approx(
            rel_error_lifted(X_hat, x)
        )


def test_rel_mse_examples():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    X = lifted(x)
    assert rel_mse_lifted(X, x) == 0.0
    # Hermitian perturbation orthogonal to X, scaled so ||E|| = 0.1*||X + E||;
    # then rel MSE = ||E||^2 / ||X + E||^2 = 1e-2 exactly
    E = np.zeros((4, 4), dtype=complex)
    E[1, 2] = E[2, 1] = 1.0
    E -= X * np.vdot(X, E).real / np.linalg.norm(X) ** 2
    E *= np.linalg.norm(X) * np.sqrt(0.01 / 0.99) / np.linalg.norm(E)
    assert rel_mse_lifted(X + E, x) == pytest.approx(1e-2, rel=1e-9)
    # flipped sign: ||-X - X||^2 / ||X||^2 = 4
    assert rel_mse_lifted(-X, x) == pytest.approx(4.0)


def test_rel_mse_zero_estimate():
    with pytest.raises(ValueError):
        rel_mse_lifted(np.zeros((3, 3)), np.ones(3))


def test_rel_mse_db_monotone():
    values = [1e-4, 1e-3, 0.5, 2.0]
    dbs = [rel_mse_db(v) for v in values]
    assert dbs == sorted(dbs)
    assert rel_mse_db(0.01) == pytest.approx(-20.0)


def test_phase_aligned_distance_examples():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    for phi in (0.0, 0.7, np.pi):
        assert phase_aligned_distance(np.exp(1j * phi) * x, x) < 1e-12
    assert phase_aligned_distance(-x, x) < 1e-12
    e0 = np.array([1.0, 0.0])
    e1 = np.array([0.0, 1.0])
    assert phase_aligned_distance(e0, e1) == pytest.approx(np.sqrt(2.0))


def test_phase_aligned_distance_invariance():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    base = phase_aligned_distance(y, x)
    for theta in (0.2, 2.3, -1.0):
        assert phase_aligned_distance(np.exp(1j * theta) * y, x) == pytest.approx(base)


def test_snr_db_examples():
    x = generate_gaussian(8, seed=5)
    ens = sample_ensemble(uniform(), 8, 2, seed=6)
    op = LiftedOperator(ens)
    clean = forward_cdp(x, ens)
    assert snr_db(clean, x, op) == math.inf
    signal = clean.values
    noise = np.ones_like(signal)
    noise *= np.linalg.norm(signal) / np.linalg.norm(noise)
    assert snr_db(signal + noise, x, op) == pytest.approx(0.0, abs=1e-9)
    assert snr_db(signal + noise / 10.0, x, op) == pytest.approx(20.0, abs=1e-9)


def test_trial_metrics_bundle():
    x = generate_gaussian(8, seed=7)
    ens = sample_ensemble(uniform(), 8, 1, seed=8)
    op = LiftedOperator(ens)
    y = forward_cdp(x, ens)
    m = trial_metrics(lifted(x.entries), x, y, op)
    assert m.rel_err_X < 1e-12
    assert m.rel_mse_X < 1e-12
    assert m.phase_err_x < 1e-6
    assert m.snr_db == math.inf
