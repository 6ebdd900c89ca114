"""Desk-scale experiment drivers: (d, m) phase-transition grids on clean
features, and noise sweeps comparing the moments pipeline against EM.

Seeding: every grid cell draws from ``SeedSequence([master_seed, case_id, d, m])``,
whose first spawned child generates the ground truth and whose second seeds
the solver trials. Noise sweeps draw the ground truth from
``SeedSequence([master_seed, 0])`` and the observations at the i-th noise
level from ``SeedSequence([master_seed, 1, i])``.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .em import EmConfig, em_fit
from .invariants import NON_UNIFORM, UNIFORM, empirical_moments, population_moments, population_moments_uniform
from .model import align_and_mse, generate_observations, uniform_pmf
from .objective import ObjectivePoint, Weights
from .solver import (
    CASE_NONUNIFORM_NO_T,
    CASE_NONUNIFORM_T,
    CASE_UNIFORM_T,
    SolverConfig,
    min_window_length,
    multi_trial,
    random_init,
)

log = logging.getLogger(__name__)

CASE_DISCRETE_T = "discrete+T"
CASES = (CASE_UNIFORM_T, CASE_NONUNIFORM_NO_T, CASE_NONUNIFORM_T, CASE_DISCRETE_T)
DISCRETE_ALPHABET = np.arange(4.0)

GRID_COLUMNS = ("d", "m", "case", "p_rec", "f_bar", "m_tilde", "min_m_prec1")
SWEEP_COLUMNS = ("sigma", "method", "mse", "mse_normalized", "wall_time", "K", "d", "m")


@dataclass(frozen=True)
class ExperimentConfig:
    d_list: tuple[int, ...] = (6, 9, 12, 15)
    m_list: tuple[int, ...] | None = None  # None: every m in 2..d
    case: str = CASE_NONUNIFORM_T
    n_trials: int = 50
    th: float = 1e-3
    K: int = 10**5
    sigma: float = 0.0
    weights: Weights = field(default_factory=Weights)
    master_seed: int = 0
    max_iters: int = 5000
    grad_tol: float = 1e-8
    # noise sweep
    d: int = 45
    m: int = 25
    sigmas: tuple[float, ...] = (0.01, 0.1, 0.5, 1.0)
    em_restarts: int = 3
    em_max_iters: int = 500

    def __post_init__(self):
        if not self.th > 0:
            raise ValueError("th must be > 0")
        if self.case not in CASES:
            raise ValueError(f"invalid case {self.case!r}; choose from {', '.join(CASES)}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")

    def m_values(self, d: int) -> list[int]:
        if self.m_list is None:
            return list(range(2, d + 1))
        return [m for m in self.m_list if 1 <= m <= d]


def case_mode(case: str) -> str:
    return UNIFORM if case == CASE_UNIFORM_T else NON_UNIFORM


def case_threshold_key(case: str) -> str:
    """The identifiability-count case that applies to an experiment case."""
    return CASE_NONUNIFORM_T if case == CASE_DISCRETE_T else case


def case_weights(case: str, weights: Weights) -> Weights:
    if case == CASE_NONUNIFORM_NO_T:
        return replace(weights, lambda_t=0.0)
    return weights


def draw_ground_truth(case: str, d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if case == CASE_DISCRETE_T:
        x = rng.choice(DISCRETE_ALPHABET, size=d)
    else:
        x = rng.standard_normal(d)
    if case == CASE_UNIFORM_T:
        return x, uniform_pmf(d).copy()
    e = rng.standard_exponential(d)
    return x, e / e.sum()


@dataclass
class GridCell:
    d: int
    m: int
    case: str
    p_rec: float
    f_bar: float
    m_tilde: int
    m_tilde_flag: bool
    trials_meta: dict


def run_cell(config: ExperimentConfig, d: int, m: int) -> GridCell:
    case = config.case
    truth_seq, solve_seq = np.random.SeedSequence([config.master_seed, CASES.index(case), d, m]).spawn(2)
    x, p = draw_ground_truth(case, d, np.random.default_rng(truth_seq))
    mode = case_mode(case)
    if mode == UNIFORM:
        target = population_moments_uniform(x, m)
    else:
        target = population_moments(x, p, m)
    cfg = SolverConfig(max_iters=config.max_iters, grad_tol=config.grad_tol,
                       seed=int(solve_seq.generate_state(1)[0]),
                       weights=case_weights(case, config.weights), mode=mode)
    batch = multi_trial(target, m, cfg, config.n_trials, config.th, x_true=x, p_true=p)
    m_tilde = min_window_length(d, case_threshold_key(case))
    finals = np.array([t["final_objective"] for t in batch.per_trial])
    mses = np.array([t["mse_x"] for t in batch.per_trial])
    meta = dict(
        n_trials=batch.n_trials,
        global_but_wrong=int(np.sum((finals <= 1e-10) & (mses > config.th))),
        local_trapped=int(np.sum(finals > 1e-10)),
        statuses={s: sum(t["status"] == s for t in batch.per_trial) for s in {t["status"] for t in batch.per_trial}},
    )
    if case == CASE_DISCRETE_T:
        meta["rounded_exact"] = sum(_rounds_to_truth(x, p, t["x_hat"], t["p_hat"]) for t in batch.per_trial)
    return GridCell(d, m, case, batch.p_rec, batch.f_bar, m_tilde, m >= m_tilde, meta)


def _rounds_to_truth(x, p, x_hat, p_hat) -> bool:
    if x_hat is None:
        return False
    r = align_and_mse(x, p, x_hat, p_hat).best_shift
    aligned = np.roll(x_hat, -r)
    rounded = DISCRETE_ALPHABET[np.argmin(np.abs(aligned[:, None] - DISCRETE_ALPHABET[None, :]), axis=1)]
    return bool(np.array_equal(rounded, x))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MSR_THREADS", "1")))
    except ValueError:
        return 1


def run_phase_grid(config: ExperimentConfig, workers: int | None = None) -> list[GridCell]:
    """One grid cell per (d, m), sorted by (d, m) whatever the worker count."""
    jobs = [(d, m) for d in sorted(config.d_list) for m in config.m_values(d)]
    workers = _workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, [config] * len(jobs), *zip(*jobs)))
    else:
        cells = []
        for d, m in jobs:
            cells.append(run_cell(config, d, m))
            log.info("cell d=%d m=%d p_rec=%.2f f_bar=%.2e", d, m, cells[-1].p_rec, cells[-1].f_bar)
    return cells


def min_m_full_recovery(cells: list[GridCell]) -> dict[int, int | None]:
    """Per d, the smallest m with p_rec == 1 (None when no cell reaches it)."""
    out: dict[int, int | None] = {}
    for c in cells:
        out.setdefault(c.d, None)
        if c.p_rec == 1.0 and (out[c.d] is None or c.m < out[c.d]):
            out[c.d] = c.m
    return out


def write_grid_csv(path, cells: list[GridCell]) -> None:
    best = min_m_full_recovery(cells)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_COLUMNS)
        for c in cells:
            mm = best[c.d]
            w.writerow([c.d, c.m, c.case, repr(c.p_rec), repr(c.f_bar), c.m_tilde, "" if mm is None else mm])


def grid_summary(config: ExperimentConfig, cells: list[GridCell]) -> dict:
    best = min_m_full_recovery(cells)
    return dict(
        schema=1,
        case=config.case,
        n_trials=config.n_trials,
        th=config.th,
        master_seed=config.master_seed,
        per_d={str(d): dict(m_tilde=min_window_length(d, case_threshold_key(config.case)), min_m_prec1=best[d])
               for d in sorted(best)},
        cells=[dict(d=c.d, m=c.m, p_rec=c.p_rec, f_bar=c.f_bar, m_tilde=c.m_tilde,
                    m_tilde_flag=c.m_tilde_flag, trials_meta=c.trials_meta) for c in cells],
    )


@dataclass
class SweepRow:
    sigma: float
    method: str
    mse: float
    mse_normalized: float
    wall_time: float
    K: int
    d: int
    m: int
    # diagnostics kept out of the CSV; EM rows carry every restart's trace
    extra: dict = field(default_factory=dict, compare=False)


def _moments_pipeline(obs, d, m, cfg: SolverConfig, n_trials: int, th: float, x, p):
    t0 = time.perf_counter()
    target = empirical_moments(obs)
    batch = multi_trial(target, m, cfg, n_trials, th, x_true=x, p_true=p)
    wall = time.perf_counter() - t0
    best = min(batch.per_trial, key=lambda t: t["final_objective"])
    return best, wall


def _em_pipeline(obs, d, config: ExperimentConfig, seed_seq):
    t0 = time.perf_counter()
    reps = [em_fit(obs, d, EmConfig(max_iters=config.em_max_iters), random_init(d, NON_UNIFORM, child))
            for child in seed_seq.spawn(config.em_restarts)]
    wall = time.perf_counter() - t0
    best = max(reps, key=lambda r: r.log_likelihood_trace[-1])
    return best, wall, [r.log_likelihood_trace for r in reps]


def run_noise_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Moments pipeline vs EM on identical data at each noise level.

    The moments estimate is the lowest-objective of ``n_trials`` random
    starts; the EM estimate is the highest-likelihood of ``em_restarts``
    random starts. Wall time covers feature estimation plus all solver
    runs, or all EM runs, and excludes data generation.
    """
    d, m = config.d, config.m
    if not config.sigmas:
        raise ValueError("noise sweep needs at least one sigma")
    x, p = draw_ground_truth(CASE_NONUNIFORM_T, d, np.random.default_rng(np.random.SeedSequence([config.master_seed, 0])))
    norm = float(x @ x)
    rows: list[SweepRow] = []
    for i, sigma in enumerate(config.sigmas):
        obs_seq, solve_seq, em_seq = np.random.SeedSequence([config.master_seed, 1, i]).spawn(3)
        obs = generate_observations(x, p, m, sigma, config.K, seed=int(obs_seq.generate_state(1)[0]))
        cfg = SolverConfig(max_iters=config.max_iters, grad_tol=config.grad_tol,
                           seed=int(solve_seq.generate_state(1)[0]), weights=config.weights)
        if i == 0:
            _warm_up(obs, d, m, cfg, config)
        best, wall = _moments_pipeline(obs, d, m, cfg, config.n_trials, config.th, x, p)
        rows.append(SweepRow(sigma, "moments", best["mse_x"], best["mse_x"] / norm, wall, config.K, d, m))
        if sigma > 0:
            em, wall, traces = _em_pipeline(obs, d, config, em_seq)
            mse = align_and_mse(x, p, em.x_hat, em.p_hat).mse_x
            rows.append(SweepRow(sigma, "em", mse, mse / norm, wall, config.K, d, m, extra=dict(ll_traces=traces)))
        log.info("sigma=%g done", sigma)
    return rows


def _warm_up(obs, d, m, cfg: SolverConfig, config: ExperimentConfig) -> None:
    from .model import ObservationSet

    small = ObservationSet(obs.segments[: min(obs.K, 256)], d, m, max(obs.sigma, 1e-3))
    target = empirical_moments(small)
    multi_trial(target, m, replace(cfg, max_iters=5), 1, config.th, x_true=np.zeros(d))
    em_fit(small, d, EmConfig(max_iters=2), random_init(d, NON_UNIFORM, 0))


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r.sigma), r.method, repr(r.mse), repr(r.mse_normalized), repr(r.wall_time), r.K, r.d, r.m])
