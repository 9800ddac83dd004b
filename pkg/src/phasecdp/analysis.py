"""Recovery metrics: lifted-domain errors, phase-invariant distances, SNR.

All matrix norms are Frobenius. SNR is reported in dB as 20*log10 of the
ratio of Euclidean norms (an amplitude ratio); relative MSE in dB is
10*log10 of the squared-norm ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measurement import MeasurementSet
from .signals import SignalVector


@dataclass(frozen=True)
class TrialMetrics:
    rel_err_X: float
    rel_mse_X: float
    rel_mse_db: float
    phase_err_x: float
    snr_db: float


def _entries(x) -> np.ndarray:
    if isinstance(x, SignalVector):
        return x.entries
    return np.asarray(x, dtype=np.complex128)


def rel_error_lifted(X_hat: np.ndarray, x) -> float:
    """||X_hat - x x*||_F / ||x x*||_F; the noiseless success metric."""
    xe = _entries(x)
    if np.linalg.norm(xe) == 0:
        raise ValueError("reference signal must be nonzero")
    target = np.outer(xe, xe.conj())
    return float(np.linalg.norm(X_hat - target) / np.linalg.norm(target))


def rel_mse_lifted(X_hat: np.ndarray, x) -> float:
    """||X_hat - x x*||_F^2 / ||X_hat||_F^2; the noisy-recovery metric."""
    denom = np.linalg.norm(X_hat) ** 2
    if denom == 0:
        raise ValueError("relative MSE is undefined for X_hat = 0")
    xe = _entries(x)
    target = np.outer(xe, xe.conj())
    return float(np.linalg.norm(X_hat - target) ** 2 / denom)


def rel_mse_db(rel_mse: float) -> float:
    if rel_mse == 0.0:
        return -math.inf
    return 10.0 * math.log10(rel_mse)


def phase_aligned_distance(x_hat, x) -> float:
    """min over phases phi of ||x_hat - e^{i phi} x||_2, in closed form.

    The optimum aligns the global phase at phi = arg(<x, x_hat>); the value
    is sqrt(||x_hat||^2 + ||x||^2 - 2|<x, x_hat>|).
    """
    a = _entries(x_hat)
    b = _entries(x)
    inner = np.vdot(b, a)  # <x, x_hat>
    phase = np.exp(1j * np.angle(inner)) if inner != 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


def snr_db(b_noisy, x, op) -> float:
    """20*log10(||A(xx*)|| / ||b - A(xx*)||); +inf for noiseless data.

    Deviations below 1e-12 of the signal energy count as noiseless (they are
    indistinguishable from round-off between evaluation paths).
    """
    xe = _entries(x)
    clean = op.apply(np.outer(xe, xe.conj()))
    bvals = b_noisy.values if isinstance(b_noisy, MeasurementSet) else np.asarray(b_noisy)
    noise = np.linalg.norm(bvals - clean)
    signal = np.linalg.norm(clean)
    if noise <= 1e-12 * signal:
        return math.inf
    return float(20.0 * np.log10(signal / noise))


def trial_metrics(X_hat: np.ndarray, x, b=None, op=None) -> TrialMetrics:
    """Bundle of per-trial metrics; SNR requires the data and operator."""
    rel_err = rel_error_lifted(X_hat, x)
    mse = rel_mse_lifted(X_hat, x) if np.linalg.norm(X_hat) > 0 else math.inf
    from .solver import extract_rank1

    x_hat, _ = extract_rank1(X_hat)
    snr = math.inf
    if b is not None and op is not None:
        snr = snr_db(b, x, op)
    return TrialMetrics(
        rel_err_X=rel_err,
        rel_mse_X=mse,
        rel_mse_db=rel_mse_db(mse) if math.isfinite(mse) else math.inf,
        phase_err_x=phase_aligned_distance(x_hat, x),
        snr_db=snr,
    )
