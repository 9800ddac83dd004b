"""Random test-signal generators.

Two models are provided: band-limited signals built from a narrow block of
random Fourier coefficients, and dense i.i.d. complex Gaussian signals.
Indexing is 0-based everywhere; the band of the low-pass model occupies the
M = n/8 frequencies j in {-floor(M/2), ..., ceil(M/2)-1} (mod n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOWPASS = "lowpass"
GAUSSIAN = "gaussian"
CUSTOM = "custom"


@dataclass(frozen=True)
class SignalVector:
    """A complex length-n signal together with its generating model and seed."""

    entries: np.ndarray
    model: str = CUSTOM
    seed: int | None = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 1 or entries.size < 2:
            raise ValueError("signal must be a 1-D vector of length >= 2")
        if not np.all(np.isfinite(entries)):
            raise ValueError("signal entries must be finite")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def lowpass_band(n: int) -> np.ndarray:
    """Frequency indices (mod n) of the M = n/8 coefficient low-pass band."""
    m = n // 8
    return np.arange(-(m // 2), m - (m // 2)) % n


def generate_lowpass(n: int, seed: int) -> SignalVector:
    """Sample a random band-limited signal of length ``n``.

    The signal is x[t] = sum_j (X_j + i Y_j) exp(2*pi*i*j*t/n) over the
    M = n/8 band frequencies, with X_j, Y_j independent standard normal.
    Per-entry expected power is 2M.
    """
    if n < 8 or n % 8 != 0:
        raise ValueError(f"n must be a positive multiple of 8, got {n}")
    m = n // 8
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    spectrum = np.zeros(n, dtype=np.complex128)
    spectrum[lowpass_band(n)] = coeffs
    # x = sum_j c_j e^{2 pi i j t / n} is the unnormalized inverse DFT
    entries = np.fft.ifft(spectrum) * n
    return SignalVector(entries, model=LOWPASS, seed=seed)


def generate_gaussian(n: int, seed: int) -> SignalVector:
    """Sample x[t] = X + iY with X, Y i.i.d. standard normal (power 2 per entry)."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    entries = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return SignalVector(entries, model=GAUSSIAN, seed=seed)


def normalize(x: SignalVector) -> SignalVector:
    """Rescale to unit Euclidean norm; raises on the zero vector."""
    nrm = x.norm()
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero signal")
    return SignalVector(x.entries / nrm, model=x.model, seed=x.seed)
