"""End-to-end acceptance checks, one test per criterion.

Each test records its measured values; the run summary prints one
PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from msr.em import log_likelihood, m_step
from msr.experiments import ExperimentConfig, draw_ground_truth, run_noise_sweep
from msr.invariants import (
    UNIFORM,
    empirical_moments,
    feature_distance,
    population_moments,
    population_moments_uniform,
)
from msr.model import ObservationSet, cyclic_shift, generate_observations
from msr.objective import ObjectivePoint, Weights, finite_diff_check
from msr.solver import (
    CASE_NONUNIFORM_NO_T,
    CASE_NONUNIFORM_T,
    CASE_UNIFORM_T,
    SolverConfig,
    min_window_length,
    multi_trial,
)
from oracles import distance_loop, log_likelihood_loop, m_step_loop, m_tilde_scan, moments_loop

criterion = pytest.mark.criterion


def _one_inversion_at_most(values):
    return sum(b < a for a, b in zip(values, values[1:])) <= 1


@criterion("1 joint-shift invariance")
def test_criterion_1_joint_shift_invariance(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    combos = [(d, m) for d in (5, 9, 15) for m in (3, d)]
    worst = 0.0
    for i in range(100):
        d, m = combos[i % len(combos)]
        x, p = rng.standard_normal(d), rng.dirichlet(np.ones(d))
        r = int(rng.integers(0, d))
        a = population_moments(x, p, m)
        b = population_moments(cyclic_shift(x, r), cyclic_shift(p, r), m)
        worst = max(worst, *(float(np.max(np.abs(u - v))) for u, v in ((a.mu, b.mu), (a.c, b.c), (a.t, b.t))))
    elapsed = time.perf_counter() - t0
    note(f"max entry diff {worst:.1e}, {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 10


@criterion("2 estimator consistency and debiasing")
def test_criterion_2_estimator_consistency(note):
    t0 = time.perf_counter()
    d, m, sigma = 10, 6, 0.3
    rng = np.random.default_rng(202)
    x, p = rng.standard_normal(d), rng.dirichlet(np.ones(d))
    pop = population_moments(x, p, m)
    errs = {}
    for K in (10**4, 10**6):
        est = empirical_moments(generate_observations(x, p, m, sigma, K, seed=K))
        errs[K] = (np.linalg.norm(est.c - pop.c) / np.linalg.norm(pop.c),
                   np.linalg.norm(est.t - pop.t) / np.linalg.norm(pop.t))
    ratio_c = errs[10**6][0] / errs[10**4][0]
    ratio_t = errs[10**6][1] / errs[10**4][1]
    elapsed = time.perf_counter() - t0
    note(f"C ratio {ratio_c:.3f}, T ratio {ratio_t:.3f}, {elapsed:.1f}s")
    assert 0.03 <= ratio_c <= 0.3
    assert 0.03 <= ratio_t <= 0.3
    assert elapsed < 120


@criterion("3 gradient correctness")
def test_criterion_3_gradient_correctness(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = {}
    for lt in (0.0, 1.0):
        w = Weights(lambda_t=lt)
        for mode in ("non-uniform", UNIFORM):
            errs = []
            for _ in range(20):
                d = int(rng.integers(3, 10))
                m = int(rng.integers(1, d + 1))
                xt, pt = rng.standard_normal(d), rng.dirichlet(np.ones(d))
                x, p = rng.standard_normal(d), rng.dirichlet(np.ones(d))
                if mode == UNIFORM:
                    target = population_moments_uniform(xt, m)
                    errs.append(finite_diff_check(ObjectivePoint(x), target, w))
                else:
                    target = population_moments(xt, pt, m)
                    errs.append(finite_diff_check(ObjectivePoint(x, p), target, w, m))
            worst[(mode, lt)] = max(errs)
    elapsed = time.perf_counter() - t0
    note("max err " + ", ".join(f"{k[0]}/lambda_t={k[1]:g}: {v:.1e}" for k, v in worst.items()))
    assert max(worst.values()) <= 1e-6
    assert elapsed < 30


@criterion("4 minimal window length table")
def test_criterion_4_m_tilde_table(note):
    got = tuple(min_window_length(45, c) for c in (CASE_NONUNIFORM_T, CASE_NONUNIFORM_NO_T, CASE_UNIFORM_T))
    scan = tuple(m_tilde_scan(45, c) for c in (CASE_NONUNIFORM_T, CASE_NONUNIFORM_NO_T, CASE_UNIFORM_T))
    note(f"d=45 -> {got}, independent scan {scan}")
    assert got == (7, 12, 8)
    assert got == scan


@criterion("5 clean-data recovery above threshold")
def test_criterion_5_recovery_above_threshold(note):
    t0 = time.perf_counter()
    d = m = 9
    x, p = draw_ground_truth(CASE_UNIFORM_T, d, np.random.default_rng(505))
    target = population_moments_uniform(x, m)
    batch = multi_trial(target, m, SolverConfig(mode=UNIFORM, seed=505), 50, 1e-3, x_true=x, p_true=p)
    ok = [t["final_objective"] for t in batch.per_trial if t["mse_x"] <= 1e-3]
    f_bar_ok = float(np.median(ok)) if ok else np.inf
    elapsed = time.perf_counter() - t0
    note(f"p_rec {batch.p_rec:.2f}, median objective of successes {f_bar_ok:.1e}, {elapsed:.1f}s")
    assert batch.p_rec >= 0.5
    assert f_bar_ok <= 1e-10
    assert elapsed < 120


@criterion("6 non-identifiability below threshold")
def test_criterion_6_nonidentifiability(note):
    t0 = time.perf_counter()
    d, m = 15, 3
    assert m < min_window_length(d, CASE_NONUNIFORM_T) == 4
    x, p = draw_ground_truth(CASE_NONUNIFORM_T, d, np.random.default_rng(606))
    target = population_moments(x, p, m)
    batch = multi_trial(target, m, SolverConfig(seed=606), 50, 1e-3, x_true=x, p_true=p)
    wrong = [t for t in batch.per_trial if t["final_objective"] <= 1e-10 and t["mse_x"] > 1e-3]
    elapsed = time.perf_counter() - t0
    note(f"{len(wrong)}/50 trials at objective <= 1e-10 with mse_x > 1e-3, p_rec {batch.p_rec:.2f}, {elapsed:.1f}s")
    assert len(wrong) >= 1
    assert elapsed < 120


@criterion("7 EM sanity and comparison")
def test_criterion_7_em_comparison(note):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(d=15, m=8, K=10**4, sigmas=(0.05, 0.1, 0.5, 1.0), n_trials=10, em_restarts=3,
                           master_seed=707)
    rows = run_noise_sweep(cfg)
    traces = [tr for r in rows if r.method == "em" for tr in r.extra["ll_traces"]]
    worst_drop = min(float(np.min(np.diff(tr))) if len(tr) > 1 else 0.0 for tr in traces)
    mse = {meth: [r.mse for r in rows if r.method == meth] for meth in ("moments", "em")}

    rng = np.random.default_rng(7070)
    x, p = rng.standard_normal(15), rng.dirichlet(np.ones(15))
    times = {}
    for K in (10**4, 10**5):
        obs = generate_observations(x, p, 8, 0.5, K, seed=K)
        empirical_moments(obs)
        runs = []
        for _ in range(5):
            s = time.perf_counter()
            empirical_moments(obs)
            runs.append(time.perf_counter() - s)
        times[K] = float(np.median(runs))
    ratio = times[10**5] / times[10**4]
    elapsed = time.perf_counter() - t0
    note(f"{len(traces)} EM runs, worst step {worst_drop:.1e}; mse moments "
         + "/".join(f"{v:.1e}" for v in mse["moments"]) + ", em " + "/".join(f"{v:.1e}" for v in mse["em"])
         + f"; time ratio {ratio:.1f}; {elapsed:.0f}s")
    assert len(traces) == 12
    assert worst_drop >= -1e-9
    assert _one_inversion_at_most(mse["moments"])
    assert _one_inversion_at_most(mse["em"])
    assert 5 <= ratio <= 20
    assert elapsed < 300


def _close(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return bool(np.all(np.abs(a - b) <= 1e-12 * np.maximum(1.0, np.abs(b))))


@criterion("8 brute-force oracle equivalence")
def test_criterion_8_oracle_equivalence(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    checks = dict(population_moments=0, feature_distance=0, m_step=0, log_likelihood=0)
    failures = []
    for _ in range(25):
        d = int(rng.integers(1, 6))
        m = int(rng.integers(1, d + 1))
        K = int(rng.integers(1, 11))
        x, p = rng.standard_normal(d), rng.dirichlet(np.ones(d))
        f = population_moments(x, p, m)
        ref = moments_loop(x, p, m)
        if not all(_close(u, v) for u, v in zip((f.mu, f.c, f.t), ref)):
            failures.append("population_moments")
        g = population_moments(rng.standard_normal(d), rng.dirichlet(np.ones(d)), m)
        w = tuple(rng.uniform(0, 2, 3))
        if not _close(feature_distance(f, g, w), distance_loop((f.mu, f.c, f.t), (g.mu, g.c, g.t), w)):
            failures.append("feature_distance")
        Y = rng.standard_normal((K, m))
        obs = ObservationSet(Y, d, m, float(rng.uniform(0.2, 2.0)))
        resp = rng.dirichlet(np.ones(d), size=K)
        prev = rng.standard_normal(d)
        if not all(_close(u, v) for u, v in zip(m_step(resp, obs, d, prev), m_step_loop(resp, Y, d, prev))):
            failures.append("m_step")
        if not _close(log_likelihood(x, p, obs), log_likelihood_loop(x, p, Y, obs.sigma)):
            failures.append("log_likelihood")
        for k in checks:
            checks[k] += 1
    elapsed = time.perf_counter() - t0
    note(f"{sum(checks.values())} comparisons, {len(failures)} mismatches, {elapsed:.2f}s")
    assert not failures, failures
    assert elapsed < 10
