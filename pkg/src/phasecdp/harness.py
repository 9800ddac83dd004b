"""Experiment orchestration: phase transitions, noise sweeps, persistence.

Every sampled object in an experiment is a pure function of the spec and its
master seed: trial seeds derive from (master_seed, grid index, trial index)
and per-trial substreams (signal, masks, noise) derive from the trial seed.
Trials may run on a bounded thread pool (PHASECDP_WORKERS); results are
sorted by (grid index, trial index) before writing so outputs do not depend
on scheduling.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import masks, signals, theory
from .analysis import rel_error_lifted, rel_mse_db, rel_mse_lifted
from .measurement import LiftedOperator, add_poisson_noise, forward_cdp, forward_gaussian
from .solver import SolverConfig, solve_poisson, solve_trace_ls

PHASE_TRANSITION = "phase_transition"
NOISE_SWEEP = "noise_sweep"
SINGLE_SOLVE = "single_solve"

SUCCESS_THRESHOLD = 1e-5  # rel_err below this counts as exact recovery

SIGNAL_MODELS = ("gaussian", "lowpass")
MEASUREMENT_MODELS = ("octanary", "ternary", "binary", "uniform", "gaussian")

WORKERS_ENV = "PHASECDP_WORKERS"


def derive_seed(master_seed: int, *key: int) -> int:
    """Deterministic 63-bit stream seed from a master seed and index path."""
    seq = np.random.SeedSequence([int(master_seed)] + [int(k) for k in key])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class ExperimentSpec:
    kind: str
    n: int | None = None  # desk-scale defaults: 64, or 32 for noise sweeps
    trials: int = 20
    master_seed: int = 0
    signal_model: str = "gaussian"
    measurement_model: str = "octanary"
    L_list: list[int] | None = None
    snr_list: list[float] | None = None
    L: int = 8  # patterns per trial for noise sweeps and single solves
    solver: dict = field(default_factory=dict)
    noise_snr_db: float | None = None  # single-solve only
    out: str | None = None

    def __post_init__(self):
        if self.kind not in (PHASE_TRANSITION, NOISE_SWEEP, SINGLE_SOLVE):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.n is None:
            self.n = 32 if self.kind == NOISE_SWEEP else 64
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.signal_model not in SIGNAL_MODELS:
            raise ValueError(f"unknown signal model {self.signal_model!r}")
        if self.measurement_model not in MEASUREMENT_MODELS:
            raise ValueError(f"unknown measurement model {self.measurement_model!r}")
        if self.kind == PHASE_TRANSITION:
            if not self.L_list:
                raise ValueError("phase transition requires a non-empty L_list")
            if sorted(self.L_list) != list(self.L_list):
                raise ValueError("L_list must be sorted")
        if self.kind == NOISE_SWEEP:
            if not self.snr_list:
                raise ValueError("noise sweep requires a non-empty snr_list")
            if sorted(self.snr_list) != list(self.snr_list):
                raise ValueError("snr_list must be sorted")
            if self.measurement_model == "gaussian":
                raise ValueError("noise sweep uses coded patterns, not gaussian vectors")

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class TrialRow:
    grid_index: int
    trial: int
    seed: int
    param: float
    rel_err: float
    rel_mse_db: float
    iterations: int
    ms: float


@dataclass
class ExperimentRecord:
    spec: ExperimentSpec
    rows: list[TrialRow]
    aggregates: list[dict]
    summary: dict

    def write(self, out_prefix: str | None = None) -> dict:
        """Write per-trial CSV, aggregate CSV, and JSON summary; returns paths."""
        prefix = out_prefix or self.spec.out
        if prefix is None:
            raise ValueError("no output path configured")
        paths = {
            "trials": f"{prefix}.csv",
            "aggregate": f"{prefix}_aggregate.csv",
            "summary": f"{prefix}_summary.json",
        }
        with open(paths["trials"], "w") as fh:
            fh.write("trial,seed,param,rel_err,rel_mse_db,iters,ms\n")
            for r in self.rows:
                fh.write(
                    f"{r.trial},{r.seed},{r.param:.17g},{r.rel_err:.17g},"
                    f"{r.rel_mse_db:.17g},{r.iterations},{r.ms:.3f}\n"
                )
        with open(paths["aggregate"], "w") as fh:
            fh.write("param,trials,successes,success_rate,mean_rel_mse_db\n")
            for a in self.aggregates:
                fh.write(
                    f"{a['param']:.17g},{a['trials']},{a['successes']},"
                    f"{a['success_rate']:.17g},{a['mean_rel_mse_db']:.17g}\n"
                )
        with open(paths["summary"], "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def _make_signal(model: str, n: int, seed: int) -> signals.SignalVector:
    if model == "lowpass":
        return signals.generate_lowpass(n, seed)
    return signals.generate_gaussian(n, seed)


def _make_cdp_ensemble(model: str, n: int, L: int, seed: int) -> masks.MaskEnsemble:
    if model == "octanary":
        return masks.sample_ensemble(masks.octanary(), n, L, include_plain=False, seed=seed)
    if model == "ternary":
        return masks.sample_ensemble(masks.ternary(), n, L, include_plain=True, seed=seed)
    if model == "binary":
        return masks.sample_ensemble(masks.binary(), n, L, include_plain=True, seed=seed)
    if model == "uniform":
        return masks.sample_ensemble(masks.uniform(), n, L, include_plain=False, seed=seed)
    raise ValueError(f"not a coded-pattern model: {model!r}")


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(count, 1)


def _run_grid(jobs, worker_count):
    if worker_count == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        return list(pool.map(lambda job: job(), jobs))


def _solver_config(defaults: dict, overrides: dict) -> SolverConfig:
    merged = dict(defaults)
    merged.update(overrides)
    return SolverConfig(**merged)


def run_phase_transition(spec: ExperimentSpec) -> ExperimentRecord:
    """Noiseless recovery success rates over the pattern-count grid."""
    if spec.kind != PHASE_TRANSITION:
        raise ValueError("spec.kind must be phase_transition")

    def one_trial(gi: int, ti: int) -> TrialRow:
        L = spec.L_list[gi]
        seed = derive_seed(spec.master_seed, gi, ti)
        x = _make_signal(spec.signal_model, spec.n, derive_seed(seed, 0))
        if spec.measurement_model == "gaussian":
            y = forward_gaussian(x, spec.n * L, derive_seed(seed, 1))
            op = y.operator
        else:
            ens = _make_cdp_ensemble(spec.measurement_model, spec.n, L, derive_seed(seed, 1))
            y = forward_cdp(x, ens)
            op = LiftedOperator(ens)
        cfg = _solver_config({"lam": 1e-3}, spec.solver)
        start = time.perf_counter()
        report = solve_trace_ls(op, y, cfg)
        elapsed_ms = (time.perf_counter() - start) * 1e3
        rel = rel_error_lifted(report.X_hat, x)
        mse_db = (
            rel_mse_db(rel_mse_lifted(report.X_hat, x))
            if np.linalg.norm(report.X_hat) > 0
            else math.inf
        )
        return TrialRow(gi, ti, seed, float(L), rel, mse_db, report.iterations, elapsed_ms)

    jobs = [
        (lambda gi=gi, ti=ti: one_trial(gi, ti))
        for gi in range(len(spec.L_list))
        for ti in range(spec.trials)
    ]
    rows = sorted(_run_grid(jobs, _worker_count()), key=lambda r: (r.grid_index, r.trial))
    aggregates = _aggregate(rows)
    summary = {
        "kind": spec.kind,
        "n": spec.n,
        "signal_model": spec.signal_model,
        "measurement_model": spec.measurement_model,
        "trials": spec.trials,
        "master_seed": spec.master_seed,
        "success_threshold": SUCCESS_THRESHOLD,
        "grid": list(map(float, spec.L_list)),
        "success_rates": [a["success_rate"] for a in aggregates],
    }
    return ExperimentRecord(spec, rows, aggregates, summary)


def run_noise_sweep(spec: ExperimentSpec) -> ExperimentRecord:
    """Poisson-noise recovery quality over an SNR grid, with a line fit."""
    if spec.kind != NOISE_SWEEP:
        raise ValueError("spec.kind must be noise_sweep")

    def one_trial(gi: int, ti: int) -> TrialRow:
        target_snr = float(spec.snr_list[gi])
        seed = derive_seed(spec.master_seed, gi, ti)
        x = _make_signal(spec.signal_model, spec.n, derive_seed(seed, 0))
        ens = _make_cdp_ensemble(spec.measurement_model, spec.n, spec.L, derive_seed(seed, 1))
        clean = forward_cdp(x, ens)
        noisy = add_poisson_noise(clean, target_snr, seed=derive_seed(seed, 2))
        op = LiftedOperator(ens)
        snr_lin = 10.0 ** (target_snr / 20.0)
        cfg = _solver_config(
            {
                "lam": 1.0 / snr_lin,
                "loss": "poisson",
                "step_rule": "backtracking",
                "x0": "scaled_adjoint",
            },
            spec.solver,
        )
        start = time.perf_counter()
        report = solve_poisson(op, noisy, cfg)
        elapsed_ms = (time.perf_counter() - start) * 1e3
        rel = rel_error_lifted(report.X_hat, x)
        mse_db = rel_mse_db(rel_mse_lifted(report.X_hat, x))
        return TrialRow(gi, ti, seed, target_snr, rel, mse_db, report.iterations, elapsed_ms)

    jobs = [
        (lambda gi=gi, ti=ti: one_trial(gi, ti))
        for gi in range(len(spec.snr_list))
        for ti in range(spec.trials)
    ]
    rows = sorted(_run_grid(jobs, _worker_count()), key=lambda r: (r.grid_index, r.trial))
    aggregates = _aggregate(rows)
    if len(set(spec.snr_list)) >= 2:
        slope, intercept, r2 = fit_line_db([(r.param, r.rel_mse_db) for r in rows])
        fit = {"slope": slope, "intercept": intercept, "r2": r2}
    else:
        fit = None  # a line fit needs at least two distinct SNR levels
    summary = {
        "kind": spec.kind,
        "n": spec.n,
        "L": spec.L,
        "signal_model": spec.signal_model,
        "measurement_model": spec.measurement_model,
        "trials": spec.trials,
        "master_seed": spec.master_seed,
        "grid": list(map(float, spec.snr_list)),
        "mean_rel_mse_db": [a["mean_rel_mse_db"] for a in aggregates],
        "fit": fit,
    }
    return ExperimentRecord(spec, rows, aggregates, summary)


def _aggregate(rows: list[TrialRow]) -> list[dict]:
    out = []
    for gi in sorted({r.grid_index for r in rows}):
        block = [r for r in rows if r.grid_index == gi]
        successes = sum(1 for r in block if r.rel_err < SUCCESS_THRESHOLD)
        finite = [r.rel_mse_db for r in block if math.isfinite(r.rel_mse_db)]
        out.append(
            {
                "param": block[0].param,
                "trials": len(block),
                "successes": successes,
                "success_rate": successes / len(block),
                "mean_rel_mse_db": float(np.mean(finite)) if finite else math.inf,
            }
        )
    return out


def fit_line_db(points: list[tuple[float, float]]) -> tuple[float, float, float]:
    """Ordinary least squares fit y = slope*x + intercept, with r^2."""
    if len(points) < 2:
        raise ValueError("need at least two points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("fit points must be finite")
    if np.ptp(x) == 0.0:
        raise ValueError("fit requires at least two distinct x values")
    xm, ym = x.mean(), y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    intercept = float(ym - slope * xm)
    residuals = y - (slope * x + intercept)
    ss_res = float((residuals**2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return slope, intercept, r2


THEORY_LEMMAS = (
    "expectation1",
    "expectation2",
    "adjoint-ones",
    "l1-bound",
    "injectivity",
    "certificate",
)


def _unit_signal(n: int, seed: int) -> np.ndarray:
    x = signals.generate_gaussian(n, seed).entries
    return x / np.linalg.norm(x)


def run_verify_theory(
    lemma: str,
    n: int = 16,
    mode: str = "exact",
    samples: int = 100_000,
    trials: int = 50,
    L: int = 64,
    L_list: list[int] | None = None,
    beta: float = 3.0,
    batches: int = 7,
    batch_size: int = 2048,
    seed: int = 0,
    tol: float | None = None,
) -> dict:
    """Run one theory verifier and return its JSON-ready report.

    Pass/fail is judged against ``tol`` (or a lemma-specific default); the
    report always carries the measured deviations so tolerances can be
    re-examined offline.
    """
    if lemma not in THEORY_LEMMAS:
        raise ValueError(f"unknown lemma {lemma!r}; choose from {THEORY_LEMMAS}")
    dist = masks.octanary(normalized=True)
    report: dict = {"lemma": lemma, "n": n, "seed": seed, "distribution": "octanary-normalized"}

    if lemma in ("expectation1", "expectation2"):
        verify = (
            theory.verify_expectation_lemma1
            if lemma == "expectation1"
            else theory.verify_expectation_lemma2
        )
        x = _unit_signal(n, derive_seed(seed, 0))
        res = verify(dist, n, x, mode=mode, samples=samples, seed=derive_seed(seed, 1))
        tol = tol if tol is not None else (1e-12 if mode == theory.EXACT else 0.1)
        report.update(
            mode=res.mode,
            samples=res.samples,
            deviation=res.deviation,
            stderr=res.stderr,
            tol=tol,
            passed=bool(res.deviation < tol),
        )
        return report

    if lemma == "adjoint-ones":
        L_values = L_list or [16, 64, 256, 1024]
        rows = theory.verify_A1_concentration(dist, n, L_values, trials=trials, seed=seed)
        tol = tol if tol is not None else 0.2
        largest = rows[-1]
        report.update(
            trials=trials,
            tol=tol,
            table=[
                {
                    "L": r.L,
                    "max_deviation": r.max_deviation,
                    "mean_deviation": r.mean_deviation,
                }
                for r in rows
            ],
            passed=bool(largest.mean_deviation < tol),
        )
        return report

    if lemma == "l1-bound":
        rng = np.random.default_rng(seed)
        models = [
            ("octanary", masks.octanary()),
            ("octanary-normalized", dist),
            ("ternary", masks.ternary()),
            ("binary", masks.binary()),
            ("uniform", masks.uniform()),
        ]
        violations = 0
        worst_margin = math.inf
        for t in range(trials):
            _, d = models[t % len(models)]
            ens = masks.sample_ensemble(d, n, 1 + t % 4, seed=derive_seed(seed, t))
            op = LiftedOperator(ens)
            rank = 1 + t % n
            G = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
            lhs, rhs, ok = theory.check_l1_bound(op, G @ G.conj().T)
            violations += 0 if ok else 1
            worst_margin = min(worst_margin, rhs - lhs)
        report.update(
            trials=trials,
            violations=violations,
            worst_margin=worst_margin,
            passed=bool(violations == 0),
        )
        return report

    if lemma == "injectivity":
        tol = tol if tol is not None else 0.25
        mins = []
        for t in range(trials):
            x = _unit_signal(n, derive_seed(seed, t, 0))
            ens = masks.sample_ensemble(dist, n, L, seed=derive_seed(seed, t, 1))
            res = theory.injectivity_spectrum(
                x, ens, truncation=theory.default_threshold(n, beta)
            )
            mins.append(res.restricted_min)
        frac = float(np.mean([m >= tol for m in mins]))
        report.update(
            trials=trials,
            L=L,
            beta=beta,
            tol=tol,
            restricted_min=mins,
            fraction_above_tol=frac,
            passed=bool(frac >= 0.9),
        )
        return report

    # certificate
    runs = []
    for t in range(trials):
        x = _unit_signal(n, derive_seed(seed, t, 0))
        batch_list = [
            masks.sample_ensemble(dist, n, batch_size, seed=derive_seed(seed, t, 1 + b))
            for b in range(batches)
        ]
        cert = theory.build_golfing_certificate(x, batch_list, beta=beta)
        val = theory.validate_certificate(cert, M=dist.bound)
        ratios = [
            cert.residual_frobs[i + 1] / cert.residual_frobs[i]
            for i in range(len(cert.residual_frobs) - 1)
        ]
        runs.append(
            {
                "contraction_ok": bool(max(ratios) <= 0.5),
                "max_contraction_ratio": float(max(ratios)),
                "cond1": val.cond1,
                "cond1_margin": val.cond1_margin,
                "cond2": val.cond2,
                "cond2_bound": val.cond2_bound,
                "z_tangent_frob": val.z_tangent_frob,
                "decay_ok_relaxed": val.decay_ok_relaxed,
                "tangent_identity_gap": val.tangent_identity_gap,
            }
        )
    frac_good = float(np.mean([r["contraction_ok"] and r["cond1"] for r in runs]))
    identity_ok = all(r["tangent_identity_gap"] <= 1e-8 for r in runs)
    report.update(
        trials=trials,
        beta=beta,
        batches=batches,
        batch_size=batch_size,
        runs=runs,
        fraction_good=frac_good,
        tangent_identity_all=identity_ok,
        passed=bool(frac_good >= 0.8 and identity_ok),
    )
    return report


def run_single_solve(spec: ExperimentSpec) -> dict:
    """One end-to-end trial; returns a JSON-ready result dict."""
    if spec.kind != SINGLE_SOLVE:
        raise ValueError("spec.kind must be single_solve")
    seed = derive_seed(spec.master_seed, 0, 0)
    x = _make_signal(spec.signal_model, spec.n, derive_seed(seed, 0))
    if spec.measurement_model == "gaussian":
        y = forward_gaussian(x, spec.n * spec.L, derive_seed(seed, 1))
        op = y.operator
    else:
        ens = _make_cdp_ensemble(spec.measurement_model, spec.n, spec.L, derive_seed(seed, 1))
        y = forward_cdp(x, ens)
        op = LiftedOperator(ens)
    if spec.noise_snr_db is not None:
        y = add_poisson_noise(y, spec.noise_snr_db, seed=derive_seed(seed, 2))
        snr_lin = 10.0 ** (spec.noise_snr_db / 20.0)
        cfg = _solver_config(
            {
                "lam": 1.0 / snr_lin,
                "loss": "poisson",
                "step_rule": "backtracking",
                "x0": "scaled_adjoint",
            },
            spec.solver,
        )
        report = solve_poisson(op, y, cfg)
    else:
        cfg = _solver_config({"lam": 1e-3}, spec.solver)
        report = solve_trace_ls(op, y, cfg)
    rel = rel_error_lifted(report.X_hat, x)
    result = {
        "kind": spec.kind,
        "n": spec.n,
        "L": spec.L,
        "signal_model": spec.signal_model,
        "measurement_model": spec.measurement_model,
        "master_seed": spec.master_seed,
        "seed": seed,
        "noise_snr_db": spec.noise_snr_db,
        "rel_err": rel,
        "success": bool(rel < SUCCESS_THRESHOLD),
        "solver": report.to_json_dict(trace_stride=max(1, report.iterations // 200)),
    }
    if np.linalg.norm(report.X_hat) > 0:
        result["rel_mse_db"] = rel_mse_db(rel_mse_lifted(report.X_hat, x))
    return result
