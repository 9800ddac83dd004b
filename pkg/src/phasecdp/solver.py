"""Trace-regularized recovery over the positive semidefinite cone.

The solver minimizes  loss(A(X)) + lam * tr(X)  subject to X >= 0 by an
accelerated proximal gradient method: gradient steps on the smooth loss,
followed by the proximal map of lam*tr + PSD indicator (eigenvalue
soft-threshold-and-clamp), with momentum restarted whenever the objective
would increase so that the recorded objective is non-increasing. Iterations
stop when the relative objective change drops below ``rel_obj_tol`` or
``max_iters`` is reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measurement import MeasurementSet
from .signals import SignalVector

SQUARED_L2 = "squared_l2"
POISSON = "poisson"

STEP_FIXED = "fixed"
STEP_BACKTRACKING = "backtracking"

X0_ZERO = "zero"
X0_SCALED_ADJOINT = "scaled_adjoint"


class SolverDivergedError(RuntimeError):
    """Objective became non-finite during iteration."""


@dataclass
class SolverConfig:
    lam: float = 1e-3
    loss: str = SQUARED_L2
    max_iters: int = 50000
    rel_obj_tol: float = 1e-10
    step_rule: str = STEP_FIXED
    x0: str = X0_ZERO

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_obj_tol <= 0:
            raise ValueError("rel_obj_tol must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.loss not in (SQUARED_L2, POISSON):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.step_rule not in (STEP_FIXED, STEP_BACKTRACKING):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.x0 not in (X0_ZERO, X0_SCALED_ADJOINT):
            raise ValueError(f"unknown initializer {self.x0!r}")


@dataclass
class SolverReport:
    X_hat: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    converged: bool
    final_rel_change: float

    def to_json_dict(self, trace_stride: int = 1) -> dict:
        trace = self.objective_trace[::max(trace_stride, 1)]
        return {
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "final_rel_change": float(self.final_rel_change),
            "objective_trace": [float(v) for v in trace],
            "final_objective": float(self.objective_trace[-1]),
        }


def prox_psd_trace(X: np.ndarray, t: float) -> np.ndarray:
    """Proximal map of t*(trace + PSD indicator): shift eigenvalues down by t, clamp at 0.

    At t = 0 this is the Frobenius-nearest PSD projection.
    """
    if t < 0:
        raise ValueError("prox parameter must be nonnegative")
    w, U = np.linalg.eigh(0.5 * (X + X.conj().T))
    w = np.maximum(w - t, 0.0)
    keep = w > 0
    if not np.any(keep):
        return np.zeros_like(X)
    Uk = U[:, keep]
    return (Uk * w[keep]) @ Uk.conj().T


def operator_norm_estimate(op, seed: int = 0, iters: int = 40) -> float:
    """Power-method estimate of the largest eigenvalue of X -> adjoint(apply(X))."""
    rng = np.random.default_rng(seed)
    n = op.n
    V = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    V = V + V.conj().T
    V /= np.linalg.norm(V)
    est = 1.0
    for _ in range(iters):
        W = op.adjoint(op.apply(V))
        est = np.linalg.norm(W)
        if est == 0.0:
            return 1.0
        V = W / est
    return float(est)


class _SquaredLoss:
    def __init__(self, b: np.ndarray):
        self.b = b

    def value(self, v: np.ndarray) -> float:
        return 0.5 * float(np.linalg.norm(v - self.b) ** 2)

    def grad(self, v: np.ndarray) -> np.ndarray:
        return v - self.b


class _PoissonLoss:
    def __init__(self, b: np.ndarray):
        self.b = b
        self.floor = 1e-12 * max(float(b.max()), 1.0)

    def value(self, v: np.ndarray) -> float:
        vc = np.maximum(v, self.floor)
        return float(np.sum(v - self.b * np.log(vc)))

    def grad(self, v: np.ndarray) -> np.ndarray:
        vc = np.maximum(v, self.floor)
        return 1.0 - self.b / vc


def _as_values(b) -> np.ndarray:
    if isinstance(b, MeasurementSet):
        return b.values
    return np.asarray(b, dtype=np.float64)


def _initial_matrix(op, bvals: np.ndarray, how: str) -> np.ndarray:
    if how == X0_ZERO:
        return np.zeros((op.n, op.n), dtype=np.complex128)
    return op.adjoint(bvals) / bvals.size


def _accelerated_solve(op, bvals: np.ndarray, cfg: SolverConfig, loss) -> SolverReport:
    lam = cfg.lam
    backtracking = cfg.step_rule == STEP_BACKTRACKING

    def objective(X, applied=None):
        v = op.apply(X) if applied is None else applied
        return loss.value(v) + lam * float(np.trace(X).real)

    if backtracking:
        step = 1.0 / operator_norm_estimate(op)
    else:
        step = 0.95 / operator_norm_estimate(op)

    X = _initial_matrix(op, bvals, cfg.x0)
    vX = op.apply(X)
    F = objective(X, vX)
    if not np.isfinite(F):
        raise SolverDivergedError("objective not finite at the initial point")

    def prox_step(Y, vY, s):
        """One proximal gradient step from Y; backtracks s if enabled.

        ``vY`` is the cached value of apply(Y); since the map is linear it is
        combined from previous iterates instead of recomputed.
        """
        fY = loss.value(vY)
        G = op.adjoint(loss.grad(vY))
        while True:
            Xn = prox_psd_trace(Y - s * G, s * lam)
            vn = op.apply(Xn)
            fn = loss.value(vn)
            if not backtracking:
                return Xn, vn, fn + lam * float(np.trace(Xn).real), s
            diff = Xn - Y
            quad = fY + np.vdot(G, diff).real + np.linalg.norm(diff) ** 2 / (2 * s)
            if fn <= quad + 1e-12 * max(abs(quad), 1.0) or s < 1e-18:
                return Xn, vn, fn + lam * float(np.trace(Xn).real), s
            s *= 0.5

    Xprev, vXprev = X, vX
    Y, vY = X, vX
    t_mom = 1.0
    trace = [F]
    converged = False
    rel_change = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        Xn, vXn, Fn, step = prox_step(Y, vY, step)
        if Fn > F:
            # momentum overshoot: restart from the last accepted iterate
            t_mom = 1.0
            Xn, vXn, Fn, step = prox_step(X, vX, step)
            while Fn > F and step > 1e-18:
                step *= 0.5
                Xn, vXn, Fn, step = prox_step(X, vX, step)
            if Fn > F:
                Xn, vXn, Fn = X, vX, F  # no descent left at machine precision
        if not np.isfinite(Fn):
            raise SolverDivergedError(f"objective diverged at iteration {it}")
        rel_change = abs(F - Fn) / max(abs(F), 1e-300)
        Xprev, vXprev = X, vX
        X, vX, F = Xn, vXn, Fn
        trace.append(F)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        gamma = (t_mom - 1.0) / t_next
        Y = X + gamma * (X - Xprev)
        vY = vX + gamma * (vX - vXprev)
        t_mom = t_next
        if rel_change <= cfg.rel_obj_tol:
            converged = True
            break

    return SolverReport(
        X_hat=X,
        iterations=it,
        objective_trace=np.asarray(trace),
        converged=converged,
        final_rel_change=float(rel_change),
    )


def solve_trace_ls(op, b, cfg: SolverConfig | None = None) -> SolverReport:
    """Minimize 0.5*||b - A(X)||^2 + lam*tr(X) over X >= 0."""
    cfg = cfg or SolverConfig()
    if cfg.loss != SQUARED_L2:
        raise ValueError("solve_trace_ls requires the squared-L2 loss")
    bvals = _as_values(b)
    return _accelerated_solve(op, bvals, cfg, _SquaredLoss(bvals))


def solve_poisson(op, b, cfg: SolverConfig | None = None) -> SolverReport:
    """Minimize sum(mu - y*log(mu)) + lam*tr(X) over X >= 0, mu = A(X).

    The log argument is floored at 1e-12*max(y, 1) to keep the objective
    finite near the boundary of the cone; the gradient uses the same floor.
    """
    cfg = cfg or SolverConfig(
        loss=POISSON, step_rule=STEP_BACKTRACKING, x0=X0_SCALED_ADJOINT
    )
    if cfg.loss != POISSON:
        raise ValueError("solve_poisson requires the Poisson loss")
    bvals = _as_values(b)
    if np.all(bvals == 0) and cfg.lam == 0.0:
        raise ValueError("all-zero data with lam = 0 is ill-posed")
    return _accelerated_solve(op, bvals, cfg, _PoissonLoss(bvals))


def extract_rank1(X: np.ndarray) -> tuple[SignalVector, float]:
    """Best rank-one factor sqrt(w_max)*u_max of a PSD matrix, with relative residual."""
    X = np.asarray(X, dtype=np.complex128)
    total = np.linalg.norm(X)
    n = X.shape[0]
    if total == 0.0:
        return SignalVector(np.zeros(n, dtype=np.complex128)), 0.0
    w, U = np.linalg.eigh(0.5 * (X + X.conj().T))
    top = max(float(w[-1]), 0.0)
    x_hat = np.sqrt(top) * U[:, -1]
    residual = float(np.linalg.norm(X - np.outer(x_hat, x_hat.conj())) / total)
    return SignalVector(x_hat), residual
