"""Local minimization of the moment-matching objective.

Projected limited-memory quasi-Newton: x is free, p lives on the probability
simplex. Search directions come from the two-loop recursion applied to the
gradient with its p-block projected onto the sum-zero subspace, so that
directions and stored steps stay tangent to the simplex's affine hull. Each
trial point is mapped back with :func:`project_simplex` and accepted under
an Armijo test on the actual displacement.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .invariants import UNIFORM, NON_UNIFORM, InvariantFeatures, UniformInvariantFeatures
from .model import align_and_mse, uniform_pmf
from .objective import ObjectivePoint, Weights, value_and_grad, value_and_grad_uniform

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-12
CURV_TOL = 1e-12

CASE_NONUNIFORM_T = "non-uniform+T"
CASE_NONUNIFORM_NO_T = "non-uniform-no-T"
CASE_UNIFORM_T = "uniform+T"


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{p : p >= 0, sum(p) = 1}`` (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    p = np.maximum(v - tau, 0.0)
    # absorb the last ulp of rounding so the sum is 1 to working precision
    p /= p.sum()
    return p


def random_init(d: int, mode: str = NON_UNIFORM, seed=None) -> ObjectivePoint:
    """Standard-normal x; p from normalized i.i.d. exponentials (flat Dirichlet).

    Draw order: x first, then the exponentials. In uniform mode p is None.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(d)
    if mode == UNIFORM:
        return ObjectivePoint(x, None)
    e = rng.standard_exponential(d)
    return ObjectivePoint(x, e / e.sum())


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-8
    memory: int = 10
    seed: int | None = 0
    weights: Weights = field(default_factory=Weights)
    mode: str = NON_UNIFORM
    armijo_slope: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.memory < 0:
            raise ValueError("memory must be >= 0")
        if self.mode not in (UNIFORM, NON_UNIFORM):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class SolveReport:
    x_hat: np.ndarray
    p_hat: np.ndarray
    final_objective: float
    iterations: int
    converged: bool
    trace: list[float]
    status: str = "converged"
    projected_grad_norm: float = float("nan")


class _Problem:
    """Packs (x, p) into one vector and hides the uniform/non-uniform split."""

    def __init__(self, target, m: int, w: Weights, mode: str, d: int):
        self.target, self.m, self.w, self.mode, self.d = target, m, w, mode, d
        if mode == UNIFORM and target.kind != UNIFORM:
            raise ValueError("uniform mode needs uniform features")
        if mode == NON_UNIFORM and target.kind == UNIFORM:
            raise ValueError("non-uniform mode needs non-uniform features")

    def value_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        if self.mode == UNIFORM:
            return value_and_grad_uniform(z, self.target, self.w)
        f, gx, gp = value_and_grad(z[: self.d], z[self.d :], self.target, self.w, self.m)
        return f, np.concatenate([gx, gp])

    def project(self, z: np.ndarray) -> np.ndarray:
        if self.mode == UNIFORM:
            return z
        z = z.copy()
        z[self.d :] = project_simplex(z[self.d :])
        return z

    def free_mask(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Coordinates allowed to move: all of x, and every p entry except those
        sitting at zero whose reduced gradient pushes them further down."""
        free = np.ones(z.size, dtype=bool)
        if self.mode == UNIFORM:
            return free
        p, gp = z[self.d :], g[self.d :]
        at_zero = p <= ACTIVE_TOL
        inner = ~at_zero
        lam = gp[inner].mean() if inner.any() else gp.min()
        free[self.d :] = ~(at_zero & (gp > lam))
        return free

    def tangent(self, v: np.ndarray, free: np.ndarray) -> np.ndarray:
        """Restrict ``v`` (one vector or rows of a matrix) to the free
        coordinates of the current simplex face."""
        v = np.where(free, v, 0.0)
        if self.mode == NON_UNIFORM:
            fp = np.flatnonzero(free[self.d :]) + self.d
            v[..., fp] -= v[..., fp].mean(axis=-1, keepdims=True)
        return v

    def pg_norm(self, z: np.ndarray, g: np.ndarray) -> float:
        """Norm of ``z - P(z - g)``, the projected-gradient stationarity measure."""
        if self.mode == UNIFORM:
            return float(np.linalg.norm(g))
        gp = z[self.d :] - project_simplex(z[self.d :] - g[self.d :])
        return float(np.sqrt(g[: self.d] @ g[: self.d] + gp @ gp))


def _restrict(pairs, prob: _Problem, free: np.ndarray) -> list:
    """Curvature pairs projected onto the current face. Pairs whose projected
    curvature is not positive (cosine of s, y at most CURV_TOL) are skipped."""
    S = prob.tangent(np.array([s for s, _ in pairs]), free)
    Y = prob.tangent(np.array([y for _, y in pairs]), free)
    sy = np.einsum("ij,ij->i", S, Y)
    ok = sy > CURV_TOL * np.linalg.norm(S, axis=1) * np.linalg.norm(Y, axis=1)
    return [(S[i], Y[i], 1.0 / sy[i]) for i in np.flatnonzero(ok)]


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def solve_msr(target, m: int, config: SolverConfig, init: ObjectivePoint) -> SolveReport:
    """Minimize the moment mismatch from ``init``.

    Stops when the projected-gradient norm drops to ``config.grad_tol``
    (status ``converged``), at ``max_iters`` (``max_iters``), when neither the
    quasi-Newton nor the projected-gradient direction admits an Armijo step
    (``stalled``), or if the objective at the start is not finite
    (``non_finite``).
    """
    x0 = np.asarray(init.x, dtype=float)
    d = x0.size
    prob = _Problem(target, m, config.weights, config.mode, d)
    if config.mode == UNIFORM:
        z = x0.copy()
    else:
        z = np.concatenate([x0, project_simplex(init.p)])

    def report(z, f, it, status, pgn, trace):
        p_hat = uniform_pmf(d).copy() if config.mode == UNIFORM else z[d:].copy()
        return SolveReport(z[:d].copy(), p_hat, float(f), it, status == "converged", trace, status, pgn)

    f, g = prob.value_grad(z)
    trace = [float(f)]
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        log.warning("non-finite objective at the initial point")
        return report(z, f, 0, "non_finite", float("nan"), trace)

    pairs: deque = deque(maxlen=max(config.memory, 1))
    it = 0
    pgn = prob.pg_norm(z, g)
    status = "max_iters"
    while True:
        if pgn <= config.grad_tol:
            status = "converged"
            break
        if it >= config.max_iters:
            break
        it += 1
        free = prob.free_mask(z, g)
        gt = prob.tangent(g, free)
        step = None
        if pairs and config.memory > 0:
            direction = _two_loop(gt, _restrict(pairs, prob, free))
            direction = prob.tangent(direction, free)
            if gt @ direction < 0:
                step = _armijo(prob, z, f, g, direction, 1.0, config)
        if step is None:
            # projected-gradient arc; always admits an Armijo step unless stationary
            pairs.clear()
            full = prob.tangent(g, np.ones_like(free))
            alpha = 1.0 / max(float(np.linalg.norm(full)), 1.0)
            step = _armijo(prob, z, f, g, -full, alpha, config)
        if step is None:
            status = "stalled"
            break
        z_new, f_new, g_new = step
        s_vec = z_new - z
        y_vec = g_new - g
        if config.memory > 0:
            pairs.append((s_vec, y_vec))
        z, f, g = z_new, f_new, g_new
        trace.append(float(f))
        pgn = prob.pg_norm(z, g)

    return report(z, f, it, status, pgn, trace)


def _armijo(prob: _Problem, z, f, g, direction, alpha, config: SolverConfig):
    for _ in range(config.max_backtracks):
        z_new = prob.project(z + alpha * direction)
        disp = z_new - z
        slope = float(g @ disp)
        if slope < 0:
            f_new, g_new = prob.value_grad(z_new)
            if np.isfinite(f_new) and f_new <= f + config.armijo_slope * slope:
                return z_new, f_new, g_new
        elif not np.any(disp):
            return None
        alpha *= config.backtrack
    return None


@dataclass
class TrialBatchReport:
    n_trials: int
    p_rec: float
    f_bar: float
    th: float
    per_trial: list[dict]


def multi_trial(target, m: int, config: SolverConfig, n_trials: int, th: float,
                x_true=None, p_true=None, inits=None) -> TrialBatchReport:
    """Solve from ``n_trials`` random starts and score against the ground truth.

    Trial ``i`` starts from ``random_init`` seeded by the i-th child of
    ``SeedSequence(config.seed)``. ``inits`` overrides the starting points.
    A trial whose solve raises is kept and counted as a failure.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if x_true is None:
        raise ValueError("multi_trial needs the ground truth x for scoring")
    d = np.asarray(x_true).size
    children = np.random.SeedSequence(config.seed).spawn(n_trials)
    reports: list[SolveReport | None] = []
    for i in range(n_trials):
        init = inits[i] if inits is not None else random_init(d, config.mode, children[i])
        try:
            reports.append(solve_msr(target, m, config, init))
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d aborted: %s", i, exc)
            reports.append(None)
    return score_trials(reports, th, x_true, p_true)


def score_trials(reports: list[SolveReport | None], th: float, x_true, p_true=None) -> TrialBatchReport:
    """Align every trial to the ground truth; ``None`` marks an aborted trial."""
    x_true = np.asarray(x_true, dtype=float)
    p_true = uniform_pmf(x_true.size) if p_true is None else np.asarray(p_true, dtype=float)
    per_trial = []
    for rep in reports:
        if rep is None:
            per_trial.append(dict(final_objective=math.inf, mse_x=math.inf, mse_p=math.inf,
                                  status="aborted", iterations=0, x_hat=None, p_hat=None))
            continue
        al = align_and_mse(x_true, p_true, rep.x_hat, rep.p_hat)
        per_trial.append(dict(final_objective=rep.final_objective, mse_x=al.mse_x, mse_p=al.mse_p,
                              status=rep.status, iterations=rep.iterations,
                              x_hat=rep.x_hat, p_hat=rep.p_hat))
    n = len(per_trial)
    hits = sum(t["mse_x"] <= th for t in per_trial)
    f_bar = float(np.median([t["final_objective"] for t in per_trial]))
    return TrialBatchReport(n, hits / n, f_bar, th, per_trial)


def _count(m: int, case: str) -> tuple[int, int]:
    """(6 x features, 6 x unknowns) for window length m; integer so no rounding."""
    if case == CASE_NONUNIFORM_T:
        return m**3 + 6 * m**2 + 11 * m + 6, 12
    if case == CASE_NONUNIFORM_NO_T:
        return 3 * m**2 + 9 * m + 6, 12
    if case == CASE_UNIFORM_T:
        return 3 * m**2 + 9 * m + 6, 6
    raise ValueError(f"unknown case {case!r}")


def min_window_length(d: int, case: str) -> int:
    """Smallest m whose independent-feature count reaches the unknown count.

    Unknowns are 2d for the non-uniform cases (x and p) and d for uniform.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    m = 1
    while True:
        lhs, per_d = _count(m, case)
        if lhs >= per_d * d:
            return m
        m += 1
