"""Acceptance criteria 1-10. Run with ``pytest -m acceptance -s`` to see the
PASS/FAIL summary lines."""

import time

import numpy as np
import pytest

from rmcert.boundary import boundary_curves, certify_point, random_schmidt_rank_states, region_check, s4_min
from rmcert.config import ExperimentConfig
from rmcert.correlation import (
    batch_direct_moments,
    certify_from_tracenorm,
    correlation_matrices,
    cross_correlation,
    direct_moments,
    trace_norm,
)
from rmcert.pipeline import run_pipeline
from rmcert.qudit import DensityMatrix, apply_local, fidelity, max_entangled_state, product_state
from rmcert.randmeas import MomentEstimate, Observable, correlators, estimate_moments, moments_from_averages
from rmcert.sampling import SeededStream, dephased_state, fit_phimax, haar_unitaries, random_phase_unitary
from rmcert.tomography import TomoData, chi_square, mub_bases, predict_probs, reconstruct, setting_weights
from rmcert.witness import dft_certify, dft_correlator

pytestmark = pytest.mark.acceptance


def verdict(n, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s / limit {limit:.0f}s) {detail}")
    return ok


def test_1_variance_arithmetic():
    t0 = time.perf_counter()
    est = moments_from_averages(0.0309, 0.0027, 0.000062, 800, 5)
    var2, var4 = est.sigma_s2**2, est.sigma_s4**2
    ok = (
        abs(est.s2 - 1.11) <= 0.005
        and abs(est.s4 - 0.456) <= 0.005
        and abs(var2 - 0.0028) <= 0.0002
        and abs(var4 - 0.0020) <= 0.0002
    )
    detail = f"S2={est.s2:.4f} S4={est.s4:.4f} var2={var2:.5f} var4={var4:.5f}"
    assert verdict(1, ok, time.perf_counter() - t0, 1, detail)


def test_2_dft_table():
    t0 = time.perf_counter()
    values = [1.83184, 1.15041, 1.25493, 1.32341, 1.15997, 1.17687, 1.25993]
    got = [dft_certify(c, 5) for c in values]
    ok = got == [5, 1, 2, 2, 1, 1, 2]
    assert verdict(2, ok, time.perf_counter() - t0, 1, f"certified={got}")


def test_3_trace_norm_exactness():
    t0 = time.perf_counter()
    tn_mes = trace_norm(cross_correlation(max_entangled_state(5)))
    g = np.random.default_rng(3)
    a, b = (g.standard_normal(5) + 1j * g.standard_normal(5) for _ in range(2))
    tn_prod = trace_norm(cross_correlation(product_state(a, b)))
    r_mes, r_prod = certify_from_tracenorm(tn_mes, 5), certify_from_tracenorm(tn_prod, 5)
    ok = abs(tn_mes - 4.8) < 1e-9 and abs(tn_prod - 0.8) < 1e-9 and r_mes == 5 and r_prod == 1
    detail = f"MES |X|={tn_mes:.12f} -> {r_mes}, product |X|={tn_prod:.12f} -> {r_prod}"
    assert verdict(3, ok, time.perf_counter() - t0, 1, detail)


def test_4_criterion_soundness():
    t0 = time.perf_counter()
    n, batch = 10_000, 2000
    worst = {}
    violations = 0
    for d in (2, 3, 5):
        for r in range(1, d + 1):
            rng = SeededStream(4, d * 10 + r).generator()
            excess = -np.inf
            for _ in range(n // batch):
                rhos = random_schmidt_rank_states(d, r, batch, rng)
                sv = np.linalg.svd(correlation_matrices(rhos, d).real, compute_uv=False)
                over = sv.sum(-1) - (r - 1 / d)
                violations += int(np.sum(over > 1e-9))
                excess = max(excess, float(over.max()))
            worst[(d, r)] = excess
    detail = f"violations={violations} max(|X|-bound)={max(worst.values()):.2e}"
    assert verdict(4, violations == 0, time.perf_counter() - t0, 300, detail)


def test_5_boundary_soundness_and_mes():
    t0 = time.perf_counter()
    counts = {(d, r): region_check(r, d, 10_000, SeededStream(5, d * 10 + r)) for d in (2, 3) for r in range(1, d + 1)}
    mp = direct_moments(cross_correlation(max_entangled_state(5)))
    on5 = abs(mp.s4 - s4_min(mp.s2, 5, 5)) < 1e-6
    below4 = mp.s4 < s4_min(mp.s2, 4, 5)
    exact = MomentEstimate(mp.s2, mp.s4, 0.0, 0.0, 1)
    r = certify_point(exact, 5, boundary_curves(5)).certified_r
    ok = sum(counts.values()) == 0 and on5 and below4 and r == 5
    detail = f"violations={sum(counts.values())} MES(5) on r=5 curve={on5} below r=4={below4} certified={r}"
    assert verdict(5, ok, time.perf_counter() - t0, 600, detail)


def _random_pure(d, rng):
    psi = rng.standard_normal(d * d) + 1j * rng.standard_normal(d * d)
    return DensityMatrix.from_vector(psi, d, d)


def test_6_estimator_consistency():
    t0 = time.perf_counter()
    n_states, n_settings, n_batches, bs = 20, 100_000, 100, 800
    lines, ok = [], True
    for d in (2, 5):
        rng = SeededStream(6, d).generator()
        obs = Observable.default(d)
        dz2 = dz4 = var2 = var4 = 0.0
        ratio2, ratio4 = [], []
        for _ in range(n_states):
            rho = _random_pure(d, rng)
            mp = direct_moments(cross_correlation(rho))
            xs = np.concatenate(
                [correlators(rho, haar_unitaries(d, 10_000, rng), haar_unitaries(d, 10_000, rng), obs) for _ in range(n_settings // 10_000)]
            )
            est = estimate_moments(xs, d)
            dz2 += est.s2 - mp.s2
            dz4 += est.s4 - mp.s4
            var2 += est.sigma_s2**2
            var4 += est.sigma_s4**2
            batches = [estimate_moments(b, d) for b in xs[: n_batches * bs].reshape(n_batches, bs)]
            b2 = np.array([b.s2 for b in batches])
            b4 = np.array([b.s4 for b in batches])
            ratio2.append(b2.var(ddof=1) / np.mean([b.sigma_s2**2 for b in batches]))
            ratio4.append(b4.var(ddof=1) / np.mean([b.sigma_s4**2 for b in batches]))
        z2, z4 = dz2 / np.sqrt(var2), dz4 / np.sqrt(var4)
        q2, q4 = np.mean(ratio2), np.mean(ratio4)
        ok &= abs(z2) < 3 and abs(z4) < 3 and abs(q2 - 1) < 0.15 and abs(q4 - 1) < 0.15
        lines.append(f"d={d}: z(S2)={z2:+.2f} z(S4)={z4:+.2f} var ratio S2={q2:.3f} S4={q4:.3f}")
    assert verdict(6, ok, time.perf_counter() - t0, 900, "; ".join(lines))


def test_7_phase_noise():
    t0 = time.perf_counter()
    d, n = 5, 100_000
    mes = max_entangled_state(d)
    cfg = ExperimentConfig(d=d, n_unitaries=n, n_batches=1, grid_size=64)
    off = run_pipeline(cfg.replace(seed=70)).estimate
    on = run_pipeline(cfg.replace(seed=71, phase_noise=(0.0, 2 * np.pi))).estimate
    z2 = (on.s2 - off.s2) / np.hypot(on.sigma_s2, off.sigma_s2)
    z4 = (on.s4 - off.s4) / np.hypot(on.sigma_s4, off.sigma_s4)
    values = []
    for t in range(6):
        s = SeededStream(0, t)
        noisy = apply_local(mes, random_phase_unitary(d, s.child(0)), random_phase_unitary(d, s.child(1)))
        values.append(dft_correlator(noisy))
    below = sum(v < 1.4 for v in values)
    ok = abs(z2) < 3 and abs(z4) < 3 and below >= 5
    detail = f"z(S2)={z2:+.2f} z(S4)={z4:+.2f} DFT={[round(v, 4) for v in values]} below 1.4: {below}/6"
    assert verdict(7, ok, time.perf_counter() - t0, 600, detail)


def test_8_finite_sampling_undercertification():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(d=5, state="dephased", phimax=0.53, n_unitaries=800, n_batches=200, grid_size=512, seed=8)
    counts = {int(k): v for k, v in run_pipeline(cfg).report["batch_certified"].items()}
    majority = sum(v for k, v in counts.items() if k >= 3) > 100
    some_below5 = sum(v for k, v in counts.items() if k < 5) > 0
    ok = majority and some_below5
    assert verdict(8, ok, time.perf_counter() - t0, 1200, f"certified r counts over 200 runs: {dict(sorted(counts.items()))}")


def test_9_tomography():
    t0 = time.perf_counter()
    d = 3
    mubs = mub_bases(d)
    rng = SeededStream(9).generator()
    targets = []
    for _ in range(2):
        g = rng.standard_normal((d * d, d * d)) + 1j * rng.standard_normal((d * d, d * d))
        m = g @ g.conj().T
        targets.append(DensityMatrix(m / np.trace(m).real, d, d))
    targets.append(max_entangled_state(d))
    fids = []
    for rho in targets:
        res = reconstruct(TomoData.exact(rho, mubs), mubs, n_starts=4, seed=1)
        fids.append(fidelity(res.rho, rho))
    data = TomoData.exact(targets[0], mubs, total=5000)
    w = setting_weights(data.totals)
    gap = max(
        abs(chi_square(data.probs, predict_probs(sig, mubs), w) - chi_square(data.probs, predict_probs(sig, mubs)))
        for sig in targets[1:]
    )
    ok = min(fids) >= 0.999 and gap <= 1e-12
    detail = f"fidelities={[round(f, 6) for f in fids]} weighted-unweighted gap={gap:.1e}"
    assert verdict(9, ok, time.perf_counter() - t0, 600, detail)


def test_10_dephasing_fit():
    t0 = time.perf_counter()
    d = 5
    rng = SeededStream(10).generator()
    ua, ub = haar_unitaries(d, 800, rng), haar_unitaries(d, 800, rng)
    stream = SeededStream(10, 1)
    target = estimate_moments(correlators(dephased_state(d, 0.53, 20000, stream), ua, ub, Observable.default(d)), d)
    grid = np.round(np.arange(0.40, 0.70 + 1e-9, 0.01), 2)
    fit = fit_phimax(target, (ua, ub), grid, d, stream)
    i = 7
    cand = estimate_moments(correlators(dephased_state(d, grid[i], 20000, stream), ua, ub, Observable.default(d)), d)
    metric_ok = abs(fit.distances[i] - np.sqrt((cand.s2 - target.s2) ** 2 + (cand.s4 - target.s4) ** 2)) < 1e-15
    ok = fit.phimax == 0.53 and fit.distance < 1e-12 and metric_ok
    detail = f"phimax={fit.phimax} distance={fit.distance:.1e} metric matches hypot={metric_ok}"
    assert verdict(10, ok, time.perf_counter() - t0, 600, detail)
