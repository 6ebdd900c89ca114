"""Expectation-maximization for the mixture-over-shifts likelihood.

Each window y_k is modelled as ``M_s x + N(0, sigma^2 I)`` with ``s ~ p``;
EM alternates soft shift assignment with weighted re-estimation of x and p.
The noise level is held fixed at its known value.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import ObservationSet, mask_matrix, window_index
from .objective import ObjectivePoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    ll_tol: float = 1e-6
    seed: int | None = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.ll_tol > 0:
            raise ValueError("ll_tol must be > 0")


@dataclass
class EmReport:
    x_hat: np.ndarray
    p_hat: np.ndarray
    log_likelihood_trace: list[float]
    iterations: int
    wall_time: float
    converged: bool = False


def _check_sigma(obs: ObservationSet) -> None:
    if not obs.sigma > 0:
        raise ValueError("EM needs sigma > 0; the likelihood is degenerate at sigma = 0 (see hard_em)")


def _log_joint(x, p, obs: ObservationSet) -> np.ndarray:
    """``log p[s] + log N(y_k; M_s x, sigma^2 I)`` as a K x d array."""
    Y = obs.segments
    X = mask_matrix(np.asarray(x, dtype=float), obs.m)  # (d, m)
    sq = (Y * Y).sum(axis=1)[:, None] - 2.0 * Y @ X.T + (X * X).sum(axis=1)[None, :]
    np.maximum(sq, 0.0, out=sq)
    s2 = obs.sigma**2
    with np.errstate(divide="ignore"):
        logp = np.log(np.asarray(p, dtype=float))
    const = -0.5 * obs.m * np.log(2.0 * np.pi * s2)
    return logp[None, :] - sq / (2.0 * s2) + const


def e_step(x, p, obs: ObservationSet) -> np.ndarray:
    """Posterior shift responsibilities, K x d, rows summing to one."""
    _check_sigma(obs)
    lj = _log_joint(x, p, obs)
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def log_likelihood(x, p, obs: ObservationSet) -> float:
    _check_sigma(obs)
    return float(logsumexp(_log_joint(x, p, obs), axis=1).sum())


def m_step(w: np.ndarray, obs: ObservationSet, d: int, x_prev=None) -> tuple[np.ndarray, np.ndarray]:
    """Weighted re-estimation of (x, p) from responsibilities ``w``.

    ``x[j]`` is the responsibility-weighted mean of every window entry that
    reads coordinate j. Coordinates no window covers keep ``x_prev`` (zero
    if not given).
    """
    w = np.asarray(w, dtype=float)
    K = obs.K
    p = w.sum(axis=0) / K
    p /= p.sum()
    idx = window_index(d, obs.m).ravel()
    num = np.bincount(idx, weights=(w.T @ obs.segments).ravel(), minlength=d)
    den = np.bincount(idx, weights=np.repeat(w.sum(axis=0), obs.m), minlength=d)
    x = np.zeros(d) if x_prev is None else np.array(x_prev, dtype=float)
    covered = den > 0
    x[covered] = num[covered] / den[covered]
    return x, p


def hard_em(obs: ObservationSet, d: int, init: ObjectivePoint, max_iters: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Classification EM for sigma = 0: assign each window to its nearest mask.

    Provided for completeness only.
    """
    x, p = np.array(init.x, dtype=float), np.array(init.p, dtype=float)
    for _ in range(max_iters):
        X = mask_matrix(x, obs.m)
        sq = ((obs.segments[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        sq[:, p <= 0] = np.inf
        w = np.zeros((obs.K, d))
        w[np.arange(obs.K), np.argmin(sq, axis=1)] = 1.0
        x_new, p_new = m_step(w, obs, d, x)
        if np.array_equal(x_new, x) and np.array_equal(p_new, p):
            break
        x, p = x_new, p_new
    return x, p


def em_fit(obs: ObservationSet, d: int, config: EmConfig, init: ObjectivePoint | None = None) -> EmReport:
    """Run EM from ``init`` (a random point drawn with ``config.seed`` if None).

    Stops once the log-likelihood gains less than ``config.ll_tol`` in one
    iteration, or after ``config.max_iters`` iterations.
    """
    _check_sigma(obs)
    if obs.d != d:
        raise ValueError(f"observations were generated with d={obs.d}, got d={d}")
    if init is None:
        from .solver import random_init

        init = random_init(d, seed=config.seed)
    t0 = time.perf_counter()
    x, p = np.array(init.x, dtype=float), np.array(init.p, dtype=float)
    trace: list[float] = []
    converged = False
    it = 0
    while True:
        lj = _log_joint(x, p, obs)
        lse = logsumexp(lj, axis=1, keepdims=True)
        trace.append(float(lse.sum()))
        if len(trace) > 1 and trace[-1] - trace[-2] < config.ll_tol:
            converged = True
            break
        if it >= config.max_iters:
            break
        x, p = m_step(np.exp(lj - lse), obs, d, x)
        it += 1
    wall = time.perf_counter() - t0
    log.debug("EM stopped after %d iterations, log-likelihood %.6g", it, trace[-1])
    return EmReport(x, p, trace, it, wall, converged)
