"""End-to-end acceptance suite.

Each test pins one criterion at its stated tolerance and prints a PASS/FAIL
line (run with ``pytest -s`` to see them). The statistical criteria use the
frozen master seed below; experiment scale is chosen so the whole module
finishes in roughly ten minutes on a laptop-class machine.
"""

import numpy as np
import pytest

import phasecdp.solver as solver_mod
from phasecdp.harness import (
    ExperimentSpec,
    run_noise_sweep,
    run_phase_transition,
    run_verify_theory,
)
from phasecdp.masks import octanary, sample_ensemble, uniform
from phasecdp.measurement import LiftedOperator, forward_cdp
from phasecdp.signals import generate_gaussian
from phasecdp.solver import SolverConfig, prox_psd_trace, solve_trace_ls
from phasecdp.theory import (
    injectivity_spectrum,
    verify_expectation_lemma1,
    verify_expectation_lemma2,
)

MASTER_SEED = 20260808


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")


def random_hermitian(n, rng):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return m + m.conj().T


def test_criterion_1_noiseless_recovery_rates():
    spec = ExperimentSpec(
        kind="phase_transition",
        n=64,
        trials=20,
        master_seed=MASTER_SEED,
        signal_model="gaussian",
        measurement_model="octanary",
        L_list=[6, 8],
        solver={"max_iters": 12000},
    )
    record = run_phase_transition(spec)
    rate6, rate8 = (a["success_rate"] for a in record.aggregates)
    max_ms = max(r.ms for r in record.rows)
    ok = rate8 >= 0.9 and rate6 >= 0.7 and max_ms < 60_000
    report(
        "criterion 1 (noiseless recovery, n=64)",
        ok,
        f"success L=8: {rate8:.2f} (>=0.90), L=6: {rate6:.2f} (>=0.70), "
        f"slowest trial {max_ms/1e3:.1f} s (< 60 s)",
    )
    assert rate8 >= 0.9
    assert rate6 >= 0.7
    assert max_ms < 60_000


@pytest.mark.parametrize("model", ["octanary", "ternary"])
def test_criterion_2_phase_transition_shape(model):
    spec = ExperimentSpec(
        kind="phase_transition",
        n=32,
        trials=20,
        master_seed=MASTER_SEED,
        signal_model="gaussian",
        measurement_model=model,
        L_list=[2, 4, 6, 8, 10],
        solver={"max_iters": 6000},
    )
    record = run_phase_transition(spec)
    rates = [a["success_rate"] for a in record.aggregates]
    drops = [max(rates[i] - rates[i + 1], 0.0) for i in range(len(rates) - 1)]
    inversions = [d for d in drops if d > 1e-12]
    ok = len(inversions) <= 1 and all(d <= 0.05 + 1e-12 for d in inversions)
    report(
        f"criterion 2 (transition shape, {model})",
        ok,
        f"success rates over L=2,4,6,8,10: {rates} (non-decreasing, <=1 inversion of <=0.05)",
    )
    assert ok


def test_criterion_3_poisson_noise_slope():
    spec = ExperimentSpec(
        kind="noise_sweep",
        n=32,
        trials=10,
        master_seed=MASTER_SEED,
        signal_model="gaussian",
        measurement_model="octanary",
        snr_list=[10.0, 20.0, 30.0, 40.0, 50.0],
        L=8,
    )
    record = run_noise_sweep(spec)
    slope = record.summary["fit"]["slope"]
    ok = -1.3 <= slope <= -0.7
    report(
        "criterion 3 (noise slope)",
        ok,
        f"rel-MSE(dB) vs SNR(dB) slope {slope:.3f} in [-1.3, -0.7], "
        f"r2 {record.summary['fit']['r2']:.3f}",
    )
    assert ok


def test_criterion_4_expectation_identities():
    dist = octanary(normalized=True)
    rng = np.random.default_rng(MASTER_SEED)
    x2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    exact1 = verify_expectation_lemma1(dist, 2, x2, mode="exact").deviation
    exact2 = verify_expectation_lemma2(dist, 2, x2, mode="exact").deviation
    x16 = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    x16 /= np.linalg.norm(x16)
    mc1 = verify_expectation_lemma1(
        dist, 16, x16, mode="mc", samples=100_000, seed=MASTER_SEED + 1
    ).deviation
    mc2 = verify_expectation_lemma2(
        dist, 16, x16, mode="mc", samples=100_000, seed=MASTER_SEED + 2
    ).deviation
    ok = exact1 < 1e-12 and exact2 < 1e-12 and mc1 < 0.1 and mc2 < 0.1
    report(
        "criterion 4 (expectation identities)",
        ok,
        f"exact n=2: {exact1:.2e}, {exact2:.2e} (<1e-12); "
        f"MC n=16 1e5 samples: {mc1:.3f}, {mc2:.3f} (<0.1)",
    )
    assert exact1 < 1e-12 and exact2 < 1e-12
    assert mc1 < 0.1 and mc2 < 0.1


def test_criterion_5_l1_bound():
    fuzz = run_verify_theory("l1-bound", n=8, trials=1000, seed=MASTER_SEED)
    ens = sample_ensemble(uniform(), 8, 1, seed=0)
    rng = np.random.default_rng(MASTER_SEED)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    v /= np.linalg.norm(v)
    from phasecdp.theory import check_l1_bound

    lhs, rhs, _ = check_l1_bound(LiftedOperator(ens), np.outer(v, v.conj()))
    equality_gap = abs(lhs - rhs)
    ok = fuzz["violations"] == 0 and equality_gap < 1e-10
    report(
        "criterion 5 (L1-vs-trace bound)",
        ok,
        f"violations 0/{fuzz['trials']} across mask models, "
        f"equality case gap {equality_gap:.2e} (<1e-10)",
    )
    assert fuzz["violations"] == 0
    assert equality_gap < 1e-10


def test_criterion_6_operator_correctness():
    rng = np.random.default_rng(MASTER_SEED)
    worst_pairing = 0.0
    worst_path = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 9))
        L = int(rng.integers(1, 4))
        ens = sample_ensemble(octanary(), n, L, seed=trial)
        op = LiftedOperator(ens)
        X = random_hermitian(n, rng)
        w = rng.standard_normal((L, n))
        applied = op.apply(X)
        lhs = float(np.vdot(w, applied))
        rhs = float(np.vdot(op.adjoint(w), X).real)
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst_pairing = max(worst_pairing, abs(lhs - rhs) / scale)
        # dense rank-one enumeration path
        t = np.arange(n)
        dense = np.empty((L, n))
        for ell in range(L):
            for k in range(n):
                g = ens.patterns[ell] * np.exp(2j * np.pi * k * t / n)
                dense[ell, k] = np.real(np.vdot(np.outer(g, g.conj()), X))
        denom = max(np.abs(dense).max(), 1.0)
        worst_path = max(worst_path, np.abs(applied - dense).max() / denom)
    ok = worst_pairing < 1e-10 and worst_path < 1e-10
    report(
        "criterion 6 (operator correctness)",
        ok,
        f"adjoint pairing worst {worst_pairing:.2e}, FFT-vs-dense worst {worst_path:.2e} (<1e-10)",
    )
    assert worst_pairing < 1e-10
    assert worst_path < 1e-10


def test_criterion_7_prox_correctness(monkeypatch):
    rng = np.random.default_rng(MASTER_SEED)
    worst = 0.0
    for _ in range(100):
        X = random_hermitian(8, rng)
        t = float(rng.uniform(0, 3))
        w, U = np.linalg.eigh(X)
        oracle = U @ np.diag(np.maximum(w - t, 0.0)) @ U.conj().T
        gap = np.abs(prox_psd_trace(X, t) - oracle).max()
        worst = max(worst, gap / max(np.abs(oracle).max(), 1.0))
    seen = []
    original = solver_mod.prox_psd_trace

    def recording(Xv, tv):
        out = original(Xv, tv)
        seen.append(float(np.linalg.eigvalsh(out).min()))
        return out

    monkeypatch.setattr(solver_mod, "prox_psd_trace", recording)
    x = generate_gaussian(16, seed=MASTER_SEED)
    ens = sample_ensemble(octanary(), 16, 6, seed=MASTER_SEED + 1)
    solve_trace_ls(LiftedOperator(ens), forward_cdp(x, ens), SolverConfig(max_iters=2000))
    min_eig = min(seen)
    ok = worst < 1e-12 and min_eig >= -1e-9
    report(
        "criterion 7 (prox correctness)",
        ok,
        f"oracle gap worst {worst:.2e} (<1e-12) over 100 random 8x8; "
        f"min iterate eigenvalue {min_eig:.2e} (>=-1e-9) over {len(seen)} prox steps",
    )
    assert worst < 1e-12
    assert min_eig >= -1e-9


def test_criterion_8_poisson_gradient():
    rng = np.random.default_rng(MASTER_SEED)
    n = 4
    ens = sample_ensemble(octanary(), n, 3, seed=MASTER_SEED)
    op = LiftedOperator(ens)
    y = forward_cdp(generate_gaussian(n, MASTER_SEED + 1), ens).values
    X = random_hermitian(n, rng)
    X = X + (abs(np.linalg.eigvalsh(X).min()) + 1.0) * np.eye(n)

    def objective(M):
        mu = op.apply(M)
        return float(np.sum(mu - y * np.log(mu)))

    grad = op.adjoint(1.0 - y / op.apply(X))
    eps = 1e-6
    worst = 0.0
    for _ in range(10):
        H = random_hermitian(n, rng)
        H /= np.linalg.norm(H)
        fd = (objective(X + eps * H) - objective(X - eps * H)) / (2 * eps)
        an = float(np.vdot(grad, H).real)
        worst = max(worst, abs(fd - an) / max(abs(an), 1.0))
    ok = worst < 1e-5
    report(
        "criterion 8 (Poisson gradient)",
        ok,
        f"central-difference relative gap worst {worst:.2e} (<1e-5)",
    )
    assert worst < 1e-5


def test_criterion_9_certificate_machinery():
    result = run_verify_theory(
        "certificate",
        n=16,
        trials=20,
        beta=3.0,
        batches=7,  # B = 6 contraction steps
        batch_size=2048,
        seed=MASTER_SEED,
    )
    runs = result["runs"]
    frac_good = result["fraction_good"]
    identity_ok = result["tangent_identity_all"]
    worst_gap = max(r["tangent_identity_gap"] for r in runs)
    cond2_holds = sum(1 for r in runs if r["cond2"])
    zt = float(np.median([r["z_tangent_frob"] for r in runs]))
    bound = runs[0]["cond2_bound"]
    ok = frac_good >= 0.8 and identity_ok
    report(
        "criterion 9 (certificate machinery)",
        ok,
        f"contraction<=0.5 and Z_Tperp below -I in {frac_good:.2f} of 20 runs (>=0.80); "
        f"tangent identity gap worst {worst_gap:.2e} (<=1e-8); "
        f"strict tangent bound {bound:.2e} vs median ||Z_T||_F {zt:.2e} "
        f"(reported only, holds in {cond2_holds}/20 runs)",
    )
    assert frac_good >= 0.8
    assert identity_ok


def test_criterion_10_injectivity_quadratic_form():
    rng = np.random.default_rng(MASTER_SEED)
    n = 2
    dist = octanary(normalized=True)
    worst_identity = 0.0
    worst_null = 0.0
    for trial in range(100):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x /= np.linalg.norm(x)
        ens = sample_ensemble(dist, n, int(rng.integers(1, 5)), seed=trial)
        op = LiftedOperator(ens)
        rep = injectivity_spectrum(x, ens)
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = y - 1j * np.imag(np.vdot(x, y)) * x
        stacked = np.concatenate([y, y.conj()])
        quad = float(np.real(stacked.conj() @ rep.matrix @ stacked))
        direction = np.outer(x, y.conj()) + np.outer(y, x.conj())
        target = float(np.linalg.norm(op.apply(direction)) ** 2 / (n * ens.L))
        worst_identity = max(worst_identity, abs(quad - target) / max(abs(target), 1.0))
        null = np.concatenate([x, -x.conj()])
        worst_null = max(worst_null, abs(complex(null.conj() @ rep.matrix @ null)))
    ok = worst_identity < 1e-10 and worst_null < 1e-10
    report(
        "criterion 10 (injectivity witness)",
        ok,
        f"quadratic-form identity worst {worst_identity:.2e}, "
        f"null-direction worst {worst_null:.2e} (<1e-10)",
    )
    assert worst_identity < 1e-10
    assert worst_null < 1e-10
