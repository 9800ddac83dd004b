"""Numerical verifiers for the recovery theory behind the lifted relaxation.

Everything here is constructive and testable at desk scale:

* tangent-space projectors at a rank-one point of the PSD manifold,
* exact-enumeration and Monte Carlo checks of the two mask-average
  expectation identities (the executable form of their proofs),
* concentration of the adjoint applied to the all-ones weight vector,
* the deterministic L1-vs-trace bound for PSD inputs,
* the 2n x 2n quadratic-form matrix whose restricted spectrum witnesses
  robust injectivity on the tangent space,
* the batched "golfing" construction of an approximate dual certificate,
  with a validator for its two sufficient conditions.

Mask distributions are expected to be normalized (E|d|^2 = 1) wherever an
identity or certificate target assumes it; signals are unit-normalized.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .masks import MaskDistribution, MaskEnsemble
from .measurement import LiftedOperator
from .signals import SignalVector

EXACT_ENUM_LIMIT = 1_000_000
MC_CHUNK = 4096

EXACT = "exact"
MONTE_CARLO = "mc"


def _entries(x) -> np.ndarray:
    if isinstance(x, SignalVector):
        return x.entries
    return np.asarray(x, dtype=np.complex128)


def _unit_entries(x) -> np.ndarray:
    """Entries rescaled to unit norm; the theory targets assume ||x|| = 1."""
    e = _entries(x)
    norm = np.linalg.norm(e)
    if norm == 0.0:
        raise ValueError("base vector must be nonzero")
    return e / norm


def default_threshold(n: int, beta: float) -> float:
    """Magnitude cutoff sqrt(2*beta*log n) used by the truncated estimators."""
    return math.sqrt(2.0 * beta * math.log(n))


# ---------------------------------------------------------------------------
# tangent space at a rank-one point


@dataclass(frozen=True)
class TangentSpace:
    """Span of {x y* + y x*}; the tangent to the rank-one Hermitian manifold."""

    x: np.ndarray

    def __post_init__(self):
        x = _entries(self.x)
        if abs(np.linalg.norm(x) - 1.0) > 1e-10:
            raise ValueError("tangent-space base point must be unit-normed")
        object.__setattr__(self, "x", x)

    def project_complement(self, Y: np.ndarray) -> np.ndarray:
        """(I - xx*) Y (I - xx*), the projection onto the orthocomplement."""
        x = self.x
        Yx = Y @ x
        xYx = x.conj() @ Yx
        # expand (I - xx*) Y (I - xx*) without forming the projector
        out = Y - np.outer(Yx, x.conj()) - np.outer(x, x.conj() @ Y) + xYx * np.outer(x, x.conj())
        return out

    def project(self, Y: np.ndarray) -> np.ndarray:
        return Y - self.project_complement(Y)

    def complement_basis(self) -> np.ndarray:
        """Orthonormal basis of the vectors orthogonal to x, shape (n, n-1)."""
        n = self.x.size
        stacked = np.column_stack([self.x, np.eye(n, dtype=np.complex128)])
        q, _ = np.linalg.qr(stacked)
        return q[:, 1:n]


def project_T(x, Y: np.ndarray) -> np.ndarray:
    """Tangent-space part of Y at the unit vector x."""
    return TangentSpace(_entries(x)).project(Y)


def project_Tperp(x, Y: np.ndarray) -> np.ndarray:
    """Orthocomplement part of Y at the unit vector x."""
    return TangentSpace(_entries(x)).project_complement(Y)


# ---------------------------------------------------------------------------
# expectation identities


@dataclass(frozen=True)
class ExpectationReport:
    deviation: float
    mode: str
    samples: int
    target_norm: float
    stderr: float | None = None


def _enumerate_masks(dist: MaskDistribution, n: int) -> tuple[np.ndarray, np.ndarray]:
    values = dist.values()
    probs = dist.probabilities()
    count = len(values) ** n
    if count > EXACT_ENUM_LIMIT:
        raise ValueError(
            f"exact enumeration needs {count} joint outcomes (> {EXACT_ENUM_LIMIT}); "
            "use Monte Carlo mode"
        )
    idx = np.array(list(itertools.product(range(len(values)), repeat=n)), dtype=np.intp)
    masks = values[idx]
    weights = probs[idx].prod(axis=1)
    return masks, weights


def _sample_masks(dist: MaskDistribution, n: int, samples: int, rng) -> np.ndarray:
    values = dist.values()
    probs = dist.probabilities()
    idx = rng.choice(len(values), size=(samples, n), p=probs)
    return values[idx]


def _covariance_terms(masks: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-mask matrices (1/n) sum_k |f_k* D* x|^2 (D f_k)(D f_k)*."""
    n = x.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    c = np.fft.fft(masks.conj() * x[None, :], axis=1)
    w = np.abs(c) ** 2
    circ = np.fft.ifft(w, axis=1)[:, idx]  # (1/n) sum_k w_k omega^{k(s-t)}
    return masks[:, :, None] * masks.conj()[:, None, :] * circ


def _pseudo_covariance_terms(masks: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-mask matrices (1/n) sum_k (f_k* D* x)^2 (D f_k)(D f_k)^T."""
    n = x.size
    idx = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    c = np.fft.fft(masks.conj() * x[None, :], axis=1)
    hank = np.fft.ifft(c * c, axis=1)[:, idx]  # (1/n) sum_k c_k^2 omega^{k(s+t)}
    return masks[:, :, None] * masks[:, None, :] * hank


def _weighted_mean(term_fn, masks, weights, x):
    total = np.zeros((x.size, x.size), dtype=np.complex128)
    for start in range(0, masks.shape[0], MC_CHUNK):
        block = term_fn(masks[start : start + MC_CHUNK], x)
        total += np.tensordot(weights[start : start + MC_CHUNK], block, axes=1)
    return total


def _mc_mean_and_stderr(term_fn, masks, x):
    count = masks.shape[0]
    total = np.zeros((x.size, x.size), dtype=np.complex128)
    total_sq = np.zeros((x.size, x.size))
    for start in range(0, count, MC_CHUNK):
        block = term_fn(masks[start : start + MC_CHUNK], x)
        total += block.sum(axis=0)
        total_sq += (np.abs(block) ** 2).sum(axis=0)
    mean = total / count
    var = np.maximum(total_sq / count - np.abs(mean) ** 2, 0.0)
    stderr = float(np.sqrt(var.sum() / count))
    return mean, stderr


def _expectation_check(term_fn, target, dist, n, x, mode, samples, seed):
    x = _entries(x)
    if x.size != n:
        raise ValueError("signal length does not match n")
    if mode == EXACT:
        masks, weights = _enumerate_masks(dist, n)
        mean = _weighted_mean(term_fn, masks, weights, x)
        stderr = None
        count = masks.shape[0]
    elif mode == MONTE_CARLO:
        rng = np.random.default_rng(seed)
        masks = _sample_masks(dist, n, samples, rng)
        mean, stderr = _mc_mean_and_stderr(term_fn, masks, x)
        count = samples
    else:
        raise ValueError(f"unknown mode {mode!r}")
    deviation = float(np.linalg.norm(mean - target, 2))
    return ExpectationReport(
        deviation=deviation,
        mode=mode,
        samples=count,
        target_norm=float(np.linalg.norm(target, 2)),
        stderr=stderr,
    )


def verify_expectation_lemma1(
    dist: MaskDistribution,
    n: int,
    x,
    mode: str = EXACT,
    samples: int = 100_000,
    seed: int | None = 0,
) -> ExpectationReport:
    """Deviation of the mask-averaged covariance sum from xx* + ||x||^2 I.

    The average of (1/n) sum_k |f_k* D* x|^2 (D f_k)(D f_k)* over mask draws
    should equal xx* + ||x||^2 I when the entry law is normalized and
    strictly admissible; ``exact`` mode enumerates every joint mask outcome.
    """
    xe = _entries(x)
    target = np.outer(xe, xe.conj()) + (np.linalg.norm(xe) ** 2) * np.eye(n)
    return _expectation_check(_covariance_terms, target, dist, n, xe, mode, samples, seed)


def verify_expectation_lemma2(
    dist: MaskDistribution,
    n: int,
    x,
    mode: str = EXACT,
    samples: int = 100_000,
    seed: int | None = 0,
) -> ExpectationReport:
    """Deviation of the mask-averaged pseudo-covariance sum from 2 x x^T."""
    xe = _entries(x)
    target = 2.0 * np.outer(xe, xe)
    return _expectation_check(
        _pseudo_covariance_terms, target, dist, n, xe, mode, samples, seed
    )


# ---------------------------------------------------------------------------
# adjoint-of-ones concentration


@dataclass(frozen=True)
class ConcentrationRow:
    L: int
    trials: int
    max_deviation: float
    mean_deviation: float


def verify_A1_concentration(
    dist: MaskDistribution,
    n: int,
    L_list: list[int],
    trials: int = 100,
    seed: int | None = 0,
) -> list[ConcentrationRow]:
    """Spectral deviation of (1/nL) adjoint(ones) from the identity, per L.

    The adjoint of the all-ones weight vector is diagonal with entries
    (sum_l |d_l[t]|^2), so the deviation is computed directly from the mask
    magnitudes instead of assembling matrices.
    """
    if dist.second_abs_moment() <= 0:
        raise ValueError("distribution must have positive power")
    values = dist.values()
    probs = dist.probabilities()
    rows = []
    rng = np.random.default_rng(seed)
    for L in L_list:
        devs = np.empty(trials)
        for t in range(trials):
            idx = rng.choice(len(values), size=(L, n), p=probs)
            diag = (np.abs(values[idx]) ** 2).mean(axis=0)
            devs[t] = np.abs(diag - 1.0).max()
        rows.append(
            ConcentrationRow(
                L=int(L),
                trials=trials,
                max_deviation=float(devs.max()),
                mean_deviation=float(devs.mean()),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# deterministic L1 bound


def check_l1_bound(op: LiftedOperator, X: np.ndarray, tol: float = 1e-9):
    """(lhs, rhs, ok) for the PSD bound mean|A(X)| <= M^2 tr(X)."""
    X = np.asarray(X, dtype=np.complex128)
    w = np.linalg.eigvalsh(0.5 * (X + X.conj().T))
    if w.min() < -1e-8 * max(np.linalg.norm(X), 1e-300):
        raise ValueError("input must be positive semidefinite")
    applied = op.apply(X)
    lhs = float(np.abs(applied).sum() / applied.size)
    bound = op.ensemble.bound
    rhs = float(bound * bound * np.trace(X).real)
    return lhs, rhs, bool(lhs <= rhs + tol)


# ---------------------------------------------------------------------------
# robust injectivity witness


@dataclass(frozen=True)
class InjectivityReport:
    eigenvalues: np.ndarray
    restricted_min: float
    matrix: np.ndarray


def injectivity_spectrum(
    x, ensemble: MaskEnsemble, truncation: float | None = None
) -> InjectivityReport:
    """Spectrum of the averaged 2n x 2n quadratic-form matrix for tangent directions.

    For stacked vectors [y; conj(y)] the matrix reproduces the normalized
    energy (1/nL)||A(x y* + y x*)||^2 whenever x* y is real. The reported
    ``restricted_min`` is the smallest eigenvalue on the orthocomplement of
    the null direction [x; -conj(x)]; bounded away from zero it witnesses
    injectivity of the lifted map restricted to the tangent space.
    """
    xe = _unit_entries(x)
    n = xe.size
    d = ensemble.patterns
    L = ensemble.L
    t = np.arange(n)
    fourier_cols = np.exp(2j * np.pi * np.outer(t, t) / n)  # column k is f_k
    c = np.fft.fft(d.conj() * xe[None, :], axis=1)
    top_left = np.zeros((n, n), dtype=np.complex128)
    top_right = np.zeros((n, n), dtype=np.complex128)
    for ell in range(L):
        g = (d[ell][:, None] * fourier_cols) * c[ell][None, :]
        if truncation is not None:
            g = g[:, np.abs(c[ell]) <= truncation]
        top_left += g @ g.conj().T
        top_right += g @ g.T
    top_left /= n * L
    top_right /= n * L
    W = np.block([[top_left, top_right], [top_right.conj(), top_left.conj()]])
    W = 0.5 * (W + W.conj().T)
    eigenvalues = np.linalg.eigvalsh(W)
    null_dir = np.concatenate([xe, -xe.conj()])
    stacked = np.column_stack([null_dir, np.eye(2 * n, dtype=np.complex128)])
    q, _ = np.linalg.qr(stacked)
    basis = q[:, 1 : 2 * n]
    restricted = basis.conj().T @ W @ basis
    restricted_min = float(np.linalg.eigvalsh(restricted).min())
    return InjectivityReport(eigenvalues=eigenvalues, restricted_min=restricted_min, matrix=W)


# ---------------------------------------------------------------------------
# certificate construction (batched golfing iteration)


def build_Y_tilde(v, ensemble_or_op, beta: float = 3.0):
    """Truncated range estimate of vv* + I from one measurement batch.

    Returns (Y_tilde, weights) with weights[l, k] = |f_k* D_l* v|^2 clipped
    to zero above the threshold; Y_tilde = adjoint(weights) / (n L). Weights
    are nonnegative and bounded by the squared threshold.
    """
    ve = _unit_entries(v)
    op = (
        ensemble_or_op
        if isinstance(ensemble_or_op, LiftedOperator)
        else LiftedOperator(ensemble_or_op)
    )
    n, L = op.n, op.L
    threshold = default_threshold(n, beta)
    c = np.fft.fft(op.ensemble.patterns.conj() * ve[None, :], axis=1)
    weights = (np.abs(c) ** 2) * (np.abs(c) <= threshold)
    return op.adjoint(weights) / (n * L), weights


@dataclass
class CertificateReport:
    Z: np.ndarray
    x: np.ndarray
    weights: list[np.ndarray]
    batch_sizes: list[int]
    residual_frobs: list[float]  # ||X^(b)||_F for b = 0..B
    z_tangent_frob: float
    tperp_plus_identity_max_eig: float
    beta: float
    delta: float

    @property
    def lambda_len(self) -> int:
        return sum(w.size for w in self.weights)

    @property
    def num_batches(self) -> int:
        return len(self.batch_sizes)


@dataclass(frozen=True)
class CertificateValidation:
    cond1: bool
    cond1_margin: float
    cond2: bool
    cond2_bound: float
    z_tangent_frob: float
    decay_bound_paper: float
    decay_ok_paper: bool
    decay_bound_relaxed: float
    decay_ok_relaxed: bool
    tangent_identity_gap: float


def build_golfing_certificate(
    x, batches: list[MaskEnsemble], beta: float = 3.0, delta: float = 0.1
) -> CertificateReport:
    """Construct an approximate dual certificate from independent mask batches.

    Batch 0 seeds the tangent residual X^(0) = (2/nL_0) P_T(adjoint_0(ones)).
    Each later batch b approximates the current residual by
    Y^(b) = w1*Ytilde(u1) + w2*Ytilde(u2) - (w1+w2)/(n L_b) * adjoint_b(ones)
    where X^(b-1) = w1 u1 u1* + w2 u2 u2* is its (rank <= 2)
    eigendecomposition, then contracts X^(b) = X^(b-1) - P_T(Y^(b)).
    The certificate is Z = sum_b Y^(b) - (2/nL_0) adjoint_0(ones); its
    tangent part equals -X^(B) identically.
    """
    if len(batches) < 2:
        raise ValueError("need at least two independent batches")
    xe = _unit_entries(x)
    ts = TangentSpace(xe)
    n = xe.size
    ops = [LiftedOperator(b) for b in batches]
    L0 = ops[0].L
    ones0 = np.ones((L0, n))
    adj0 = ops[0].adjoint(ones0)
    X_cur = (2.0 / (n * L0)) * ts.project(adj0)
    residual_frobs = [float(np.linalg.norm(X_cur))]
    weights: list[np.ndarray] = [(-2.0 / (n * L0)) * ones0]
    Z = (-2.0 / (n * L0)) * adj0
    for op in ops[1:]:
        Lb = op.L
        w_eig, U = np.linalg.eigh(0.5 * (X_cur + X_cur.conj().T))
        order = np.argsort(np.abs(w_eig))[-2:]
        w1, w2 = float(w_eig[order[0]]), float(w_eig[order[1]])
        u1, u2 = U[:, order[0]], U[:, order[1]]
        y1, wt1 = build_Y_tilde(u1, op, beta)
        y2, wt2 = build_Y_tilde(u2, op, beta)
        ones_b = np.ones((Lb, n))
        correction = op.adjoint(ones_b) / (n * Lb)
        Yb = w1 * y1 + w2 * y2 - (w1 + w2) * correction
        weights.append((w1 * wt1 + w2 * wt2 - (w1 + w2) * ones_b) / (n * Lb))
        X_cur = X_cur - ts.project(Yb)
        residual_frobs.append(float(np.linalg.norm(X_cur)))
        Z = Z + Yb
    z_tangent = ts.project(Z)
    basis = ts.complement_basis()
    restricted = basis.conj().T @ Z @ basis
    shifted_max = float(
        np.linalg.eigvalsh(restricted + np.eye(n - 1)).max()
    )
    return CertificateReport(
        Z=Z,
        x=xe,
        weights=weights,
        batch_sizes=[op.L for op in ops],
        residual_frobs=residual_frobs,
        z_tangent_frob=float(np.linalg.norm(z_tangent)),
        tperp_plus_identity_max_eig=shifted_max,
        beta=beta,
        delta=delta,
    )


def validate_certificate(
    report: CertificateReport,
    delta: float | None = None,
    M: float | None = None,
    n: int | None = None,
    L: int | None = None,
    eig_tol: float = 1e-8,
) -> CertificateValidation:
    """Check the two sufficient certificate conditions plus decay proxies.

    cond1 requires the orthocomplement part of Z to sit below -I (max
    eigenvalue of the restricted Z + I at most ``eig_tol``); cond2 compares
    the tangent norm against (1-delta)/(2 M^2 sqrt(nL)), which shrinks with
    the measurement count and is reported rather than expected to hold at
    desk scale. The geometric decay proxies bound ||Z_T||_F by 4*rate^B.
    """
    delta = report.delta if delta is None else delta
    n = report.x.size if n is None else n
    L = sum(report.batch_sizes) if L is None else L
    if M is None:
        raise ValueError("the mask magnitude bound M is required")
    B = report.num_batches - 1
    cond1_max = report.tperp_plus_identity_max_eig
    cond2_bound = (1.0 - delta) / (2.0 * M * M * math.sqrt(n * L))
    zt = report.z_tangent_frob
    decay_paper = 4.0 / 5.0**B
    decay_relaxed = 4.0 * 0.5**B
    return CertificateValidation(
        cond1=bool(cond1_max <= eig_tol),
        cond1_margin=float(-cond1_max),
        cond2=bool(zt <= cond2_bound),
        cond2_bound=float(cond2_bound),
        z_tangent_frob=float(zt),
        decay_bound_paper=float(decay_paper),
        decay_ok_paper=bool(zt <= decay_paper),
        decay_bound_relaxed=float(decay_relaxed),
        decay_ok_relaxed=bool(zt <= decay_relaxed),
        tangent_identity_gap=float(abs(zt - report.residual_frobs[-1])),
    )
