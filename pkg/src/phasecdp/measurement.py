"""Intensity measurements of masked signals and the lifted linear map.

A measurement indexed by (ell, k) is the squared magnitude of the k-th
unnormalized DFT coefficient (kernel exp(-2*pi*i*k*t/n)) of the signal
multiplied pointwise by the conjugate of mask pattern ell. Lifting the
unknown vector to a Hermitian matrix X turns these quadratic measurements
into a linear map; both the map and its adjoint are evaluated with FFTs
rather than by materializing the nL rank-one frame matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .masks import MaskEnsemble
from .signals import SignalVector

HERMITIAN_RTOL = 1e-9
ADJOINT_CHUNK = 8192  # masks per block when assembling the adjoint
PRODUCT_CACHE_ELEMENTS = 4_000_000  # cache mask outer products up to this L*n*n


@dataclass(frozen=True)
class NoiseInfo:
    kind: str
    scale: float = 0.0
    target_snr_db: float = float("inf")
    realized_snr_db: float = float("inf")
    seed: int | None = None


@dataclass(frozen=True)
class MeasurementSet:
    """Nonnegative intensities with (ell, k) indexing."""

    values: np.ndarray
    ensemble: MaskEnsemble | None = None
    noise: NoiseInfo | None = None
    operator: "GaussianOperator | None" = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be a (L, n) array")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("intensities must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        """Write rows (ell, k, value) behind a commented JSON header line."""
        header = {
            "n": int(self.values.shape[1]),
            "L": int(self.values.shape[0]),
            "noise": None if self.noise is None else {
                "kind": self.noise.kind,
                "scale": self.noise.scale,
                "target_snr_db": self.noise.target_snr_db,
                "realized_snr_db": self.noise.realized_snr_db,
                "seed": self.noise.seed,
            },
            "seed": None if self.ensemble is None else self.ensemble.seed,
        }
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("ell,k,value\n")
            for ell in range(self.values.shape[0]):
                for k in range(self.values.shape[1]):
                    fh.write(f"{ell},{k},{self.values[ell, k]:.17g}\n")


def read_measurement_csv(path) -> tuple[np.ndarray, dict]:
    """Inverse of :meth:`MeasurementSet.to_csv`; returns (values, header)."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[1:].strip())
        colnames = fh.readline().strip()
        if colnames != "ell,k,value":
            raise ValueError(f"{path}: unexpected columns {colnames!r}")
        values = np.zeros((header["L"], header["n"]))
        for line in fh:
            ell, k, value = line.strip().split(",")
            values[int(ell), int(k)] = float(value)
    return values, header


def _check_hermitian(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("X must be a square matrix")
    scale = np.linalg.norm(X)
    if np.linalg.norm(X - X.conj().T) > HERMITIAN_RTOL * max(scale, 1e-300):
        raise ValueError("input matrix is not Hermitian within tolerance")
    return X


class LiftedOperator:
    """Linear map from Hermitian n x n matrices to the nL real intensities.

    ``apply`` evaluates all (ell, k) entries of the map at once; ``adjoint``
    assembles the Hermitian matrix weighted by a real coefficient per
    measurement. The pair satisfies <apply(X), w> = <X, adjoint(w)>_F.
    """

    def __init__(self, ensemble: MaskEnsemble):
        self.ensemble = ensemble
        self.n = ensemble.n
        self.L = ensemble.L
        # circulant gather index: entry (s, t) selects offset (s - t) mod n
        idx = np.arange(self.n)
        self._circ_idx = (idx[:, None] - idx[None, :]) % self.n
        self._twiddle = np.exp(2j * np.pi * np.outer(idx, idx) / self.n)
        d = ensemble.patterns
        if self.L * self.n * self.n <= PRODUCT_CACHE_ELEMENTS:
            # products conj(d_l[s]) d_l[t], the fixed part of D* X D sandwiches
            self._prod = d.conj()[:, :, None] * d[:, None, :]
            self._prod_conj = self._prod.conj()
        else:
            self._prod = None
            self._prod_conj = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.L * self.n, self.n * self.n)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Intensities of the lifted matrix, shape (L, n), real."""
        X = _check_hermitian(X)
        d = self.ensemble.patterns
        out = np.empty((self.L, self.n))
        for start in range(0, self.L, ADJOINT_CHUNK):
            stop = min(start + ADJOINT_CHUNK, self.L)
            if self._prod is not None:
                sandwiched = self._prod[start:stop] * X[None, :, :]
            else:
                block = d[start:stop]
                sandwiched = block.conj()[:, :, None] * X[None, :, :] * block[:, None, :]
            spectra = np.fft.fft(sandwiched, axis=1)
            out[start:stop] = np.einsum("lkt,kt->lk", spectra, self._twiddle).real
        return out

    def adjoint(self, weights: np.ndarray) -> np.ndarray:
        """Hermitian matrix sum of the frames weighted by real ``weights``."""
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.L, self.n):
            w = w.reshape(self.L, self.n)
        d = self.ensemble.patterns
        out = np.zeros((self.n, self.n), dtype=np.complex128)
        for start in range(0, self.L, ADJOINT_CHUNK):
            stop = min(start + ADJOINT_CHUNK, self.L)
            # per mask: diag(d) Circ(c) diag(conj(d)), c the inverse DFT of w
            c = self.n * np.fft.ifft(w[start:stop], axis=1)
            circ = c[:, self._circ_idx]
            if self._prod_conj is not None:
                out += np.einsum("lst,lst->st", self._prod_conj[start:stop], circ)
            else:
                block = d[start:stop]
                out += np.einsum("ls,lst,lt->st", block, circ, block.conj())
        return 0.5 * (out + out.conj().T)

    def dense_frames(self) -> np.ndarray:
        """Stack of the nL rank-one Hermitian frame matrices, shape (L, n, n, n).

        Built directly from the DFT-row definition (no FFTs); intended as the
        independent slow path for oracle tests at small n.
        """
        n, L = self.n, self.L
        t = np.arange(n)
        frames = np.empty((L, n, n, n), dtype=np.complex128)
        for k in range(n):
            f_k = np.exp(2j * np.pi * k * t / n)
            for ell in range(L):
                g = self.ensemble.patterns[ell] * f_k
                frames[ell, k] = np.outer(g, g.conj())
        return frames


class GaussianOperator:
    """Dense baseline map from Hermitian matrices to |<a_m, x>|^2-type entries."""

    def __init__(self, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.complex128)
        if vectors.ndim != 2:
            raise ValueError("vectors must be (m, n)")
        self.vectors = vectors
        self.m, self.n = vectors.shape

    @classmethod
    def sample(cls, n: int, m: int, seed: int | None = 0) -> "GaussianOperator":
        rng = np.random.default_rng(seed)
        vectors = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        return cls(vectors)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = _check_hermitian(X)
        prod = self.vectors.conj() @ X  # (m, n)
        vals = np.einsum("ms,ms->m", prod, self.vectors)
        return np.ascontiguousarray(vals.real).reshape(1, self.m)

    def adjoint(self, weights: np.ndarray) -> np.ndarray:
        w = np.asarray(weights, dtype=np.float64).ravel()
        out = (self.vectors * w[:, None]).T @ self.vectors.conj()
        return 0.5 * (out + out.conj().T)


def forward_cdp(x: SignalVector, ensemble: MaskEnsemble) -> MeasurementSet:
    """Noiseless intensities |DFT_k(conj(d_ell) * x)|^2 for every pattern."""
    if x.n != ensemble.n:
        raise ValueError(f"signal length {x.n} != pattern length {ensemble.n}")
    modulated = ensemble.patterns.conj() * x.entries[None, :]
    values = np.abs(np.fft.fft(modulated, axis=1)) ** 2
    return MeasurementSet(values, ensemble=ensemble)


def forward_gaussian(x: SignalVector, m: int, seed: int | None = 0) -> MeasurementSet:
    """Intensities against m i.i.d. complex Gaussian sampling vectors.

    Entries of the vectors are X + iY with X, Y standard normal. The sampled
    dense operator rides along on the returned set for solver use.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    op = GaussianOperator.sample(x.n, m, seed)
    values = op.apply(np.outer(x.entries, x.entries.conj()))
    return MeasurementSet(values, ensemble=None, operator=op)


def _realized_snr_db(noisy: np.ndarray, clean: np.ndarray) -> float:
    noise_norm = np.linalg.norm(noisy - clean)
    if noise_norm == 0.0:
        return float("inf")
    return 20.0 * np.log10(np.linalg.norm(clean) / noise_norm)


def add_poisson_noise(
    y: MeasurementSet,
    target_snr_db: float,
    seed: int | None = 0,
    tol_db: float = 0.5,
    max_attempts: int = 60,
) -> MeasurementSet:
    """Replace intensities by scaled Poisson draws hitting a target SNR.

    Each value mu is replaced by Poisson(s * mu) / s. The scale s starts at
    the moment-matched estimate s = snr^2 * sum(mu) / ||mu||^2 (from
    E||noise||^2 = sum(mu)/s) and is then corrected multiplicatively, with a
    bisection fallback, until the realized SNR ||mu|| / ||b - mu|| is within
    ``tol_db`` of the target. Raises if the target is unreachable (mu = 0).
    """
    if y.noise is not None:
        raise ValueError("measurements already carry noise")
    mu = y.values
    total = mu.sum()
    if total <= 0.0:
        raise ValueError("cannot target an SNR: all noiseless intensities are zero")
    snr_lin = 10.0 ** (target_snr_db / 20.0)
    scale = snr_lin**2 * total / float(np.linalg.norm(mu) ** 2)
    rng = np.random.default_rng(seed)
    lo, hi = 0.0, float("inf")  # bracket in s: SNR grows with s
    for _ in range(max_attempts):
        noisy = rng.poisson(scale * mu) / scale
        realized = _realized_snr_db(noisy, mu)
        if abs(realized - target_snr_db) <= tol_db:
            info = NoiseInfo(
                kind="poisson",
                scale=scale,
                target_snr_db=float(target_snr_db),
                realized_snr_db=float(realized),
                seed=seed,
            )
            return MeasurementSet(noisy, ensemble=y.ensemble, noise=info, operator=y.operator)
        if realized < target_snr_db:
            lo = max(lo, scale)
        else:
            hi = min(hi, scale)
        # realized SNR scales like sqrt(s): 10 dB per decade of s
        proposal = scale * 10.0 ** ((target_snr_db - min(realized, target_snr_db + 40)) / 10.0)
        if lo < proposal < hi:
            scale = proposal
        elif np.isfinite(hi):
            scale = np.sqrt(lo * hi) if lo > 0 else hi / 2.0
        else:
            scale = lo * 2.0
    raise RuntimeError(
        f"could not hit target SNR {target_snr_db} dB within {tol_db} dB "
        f"after {max_attempts} attempts"
    )
