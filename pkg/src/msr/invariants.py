"""Shift-invariant moment features.

Population features of a pair (x, p), seen through windows of length m::

    mu[n]          = sum_s x[n+s] p[s]
    c[n1, n2]      = sum_s x[n1+s] x[n2+s] p[s]
    t[n1, n2, n3]  = sum_s x[n1+s] x[n2+s] x[n3+s] p[s]

(all indices mod d), their reduced forms for a uniform pmf, and one-pass
noise-debiased estimators computed from observed windows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .model import ObservationSet, as_pmf, as_signal, mask_matrix

NON_UNIFORM = "non-uniform"
UNIFORM = "uniform"


@dataclass(frozen=True)
class InvariantFeatures:
    """First/second/third-order window moments: (m,), (m, m), (m, m, m)."""

    mu: np.ndarray
    c: np.ndarray
    t: np.ndarray
    sigma_used: float = 0.0
    d: int | None = None
    kind: str = NON_UNIFORM

    @property
    def m(self) -> int:
        return self.mu.size

    def __post_init__(self):
        m = np.asarray(self.mu).size
        if np.shape(self.c) != (m, m) or np.shape(self.t) != (m, m, m):
            raise ValueError(
                f"inconsistent feature shapes mu{np.shape(self.mu)} c{np.shape(self.c)} t{np.shape(self.t)}"
            )


@dataclass(frozen=True)
class UniformInvariantFeatures:
    """Features under a uniform pmf: scalar mean, autocorrelation (d,),
    triple correlation (d, d).

    ``m`` records the window length the features were estimated from. Only
    the lags a window of that length can see are meaningful; see
    :func:`uniform_observed`. With ``m == d`` every entry is observed.
    """

    mu: float
    c: np.ndarray
    t: np.ndarray
    d: int
    m: int
    sigma_used: float = 0.0
    kind: str = UNIFORM

    def __post_init__(self):
        if np.shape(self.c) != (self.d,) or np.shape(self.t) != (self.d, self.d):
            raise ValueError("uniform features must have c of shape (d,) and t of shape (d, d)")
        if not 1 <= self.m <= self.d:
            raise ValueError(f"m={self.m} must satisfy 1 <= m <= d={self.d}")


def population_moments(x, p, m: int) -> InvariantFeatures:
    x = as_signal(x)
    d = x.size
    p = as_pmf(p, d)
    if not 1 <= m <= d:
        raise ValueError(f"window length m={m} must satisfy 1 <= m <= d={d}")
    X = mask_matrix(x, m)
    W = p[:, None] * X
    mu = p @ X
    c = W.T @ X
    t = np.einsum("si,sj,sk->ijk", W, X, X)
    return InvariantFeatures(mu, c, t, 0.0, d)


def population_moments_uniform(x, m: int | None = None) -> UniformInvariantFeatures:
    """Uniform-pmf features of ``x``. ``m`` only tags which lags are observed."""
    x = as_signal(x)
    d = x.size
    Y = mask_matrix(x, d)  # Y[j, a] = x[j + a]
    mu = float(x.mean())
    c = Y.T @ x / d
    t = np.einsum("ja,jb,j->ab", Y, Y, x) / d
    return UniformInvariantFeatures(mu, c, t, d, d if m is None else m)


@lru_cache(maxsize=64)
def _lag_index(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat lag indices of every window entry of c (m, m) and t (m, m, m).

    c[i, j] has lag (i - j) mod d; t[i, j, k] has lags ((i - k), (j - k)) mod d,
    flattened as a * d + b.
    """
    n = np.arange(m)
    c_lag = (n[:, None] - n[None, :]) % d
    a = (n[:, None, None] - n[None, None, :]) % d
    b = (n[None, :, None] - n[None, None, :]) % d
    t_lag = a * d + b
    c_lag.setflags(write=False)
    t_lag.setflags(write=False)
    return c_lag, t_lag


def uniform_observed(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of the autocorrelation lags and triple-correlation lag pairs
    visible through a window of length m."""
    c_lag, t_lag = _lag_index(d, m)
    c_mask = np.bincount(c_lag.ravel(), minlength=d) > 0
    t_mask = (np.bincount(t_lag.ravel(), minlength=d * d) > 0).reshape(d, d)
    return c_mask, t_mask


def to_uniform(features: InvariantFeatures, d: int) -> UniformInvariantFeatures:
    """Collapse window features onto uniform-pmf features by averaging every
    entry that shares the same cyclic lag pattern. Unobserved lags are zero."""
    m = features.m
    if not 1 <= m <= d:
        raise ValueError(f"window length m={m} exceeds d={d}")
    c_lag, t_lag = _lag_index(d, m)
    c_cnt = np.bincount(c_lag.ravel(), minlength=d)
    t_cnt = np.bincount(t_lag.ravel(), minlength=d * d)
    c_sum = np.bincount(c_lag.ravel(), weights=np.ravel(features.c), minlength=d)
    t_sum = np.bincount(t_lag.ravel(), weights=np.ravel(features.t), minlength=d * d)
    c = np.divide(c_sum, c_cnt, out=np.zeros(d), where=c_cnt > 0)
    t = np.divide(t_sum, t_cnt, out=np.zeros(d * d), where=t_cnt > 0).reshape(d, d)
    return UniformInvariantFeatures(float(np.mean(features.mu)), c, t, d, m, features.sigma_used)


@lru_cache(maxsize=64)
def simplex_indices(m: int, order: int) -> tuple[np.ndarray, ...]:
    """Index arrays of the sorted tuples n1 <= ... <= n_order over range(m)."""
    idx = np.array(list(combinations_with_replacement(range(m), order)), dtype=np.intp)
    return tuple(idx[:, i] for i in range(order))


def _mirror2(vals: np.ndarray, m: int) -> np.ndarray:
    i, j = simplex_indices(m, 2)
    out = np.empty((m, m))
    out[i, j] = vals
    out[j, i] = vals
    return out


def _mirror3(vals: np.ndarray, m: int) -> np.ndarray:
    i, j, k = simplex_indices(m, 3)
    out = np.empty((m, m, m))
    for a, b, c in ((i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)):
        out[a, b, c] = vals
    return out


class MomentAccumulator:
    """Streaming sums of y, y y^T and y (x) y (x) y over window rows.

    Second and third moments are kept on the index simplex only and
    mirrored on output, so the results are exactly symmetric.
    """

    def __init__(self, m: int):
        self.m = m
        self.count = 0
        self.s1 = np.zeros(m)
        self.s2 = np.zeros(len(simplex_indices(m, 2)[0]))
        self.s3 = np.zeros(len(simplex_indices(m, 3)[0]))

    def add(self, rows: np.ndarray) -> "MomentAccumulator":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.m:
            raise ValueError(f"rows must have shape (n, {self.m})")
        i2, j2 = simplex_indices(self.m, 2)
        i3, j3, k3 = simplex_indices(self.m, 3)
        pair = rows[:, i2] * rows[:, j2]
        self.s1 += rows.sum(axis=0)
        self.s2 += pair.sum(axis=0)
        # y_i y_j y_k for i <= j <= k: reuse the (i, j) pair products
        pair_pos = _pair_position(self.m)
        self.s3 += np.einsum("nq,nq->q", pair[:, pair_pos[i3, j3]], rows[:, k3])
        self.count += rows.shape[0]
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.m != self.m:
            raise ValueError("cannot merge accumulators of different width")
        self.s1 += other.s1
        self.s2 += other.s2
        self.s3 += other.s3
        self.count += other.count
        return self

    def features(self, sigma: float = 0.0, d: int | None = None) -> InvariantFeatures:
        """Normalize by the row count and subtract the Gaussian noise bias."""
        if self.count == 0:
            raise ValueError("no observations")
        m, K = self.m, self.count
        mu = self.s1 / K
        c = _mirror2(self.s2 / K, m)
        t = _mirror3(self.s3 / K, m)
        if sigma > 0:
            s2 = sigma**2
            n = np.arange(m)
            c[n, n] -= s2
            # sigma^2 (mu[n1] d(n2,n3) + mu[n2] d(n1,n3) + mu[n3] d(n1,n2))
            t[:, n, n] -= s2 * mu[:, None]
            t[n, :, n] -= s2 * mu[None, :]
            t[n, n, :] -= s2 * mu[None, :]
        return InvariantFeatures(mu, c, t, float(sigma), d)


@lru_cache(maxsize=64)
def _pair_position(m: int) -> np.ndarray:
    i, j = simplex_indices(m, 2)
    pos = np.full((m, m), -1, dtype=np.intp)
    pos[i, j] = np.arange(i.size)
    return pos


def empirical_moments(obs: ObservationSet, chunk: int = 4096) -> InvariantFeatures:
    """Debiased moment estimates from one pass over ``obs.segments``.

    Rows are consumed in order, ``chunk`` at a time. ``obs.sigma`` is taken
    as the known noise level.
    """
    seg = obs.segments
    if seg.shape[0] == 0:
        raise ValueError("no observations")
    acc = MomentAccumulator(obs.m)
    for start in range(0, seg.shape[0], chunk):
        acc.add(seg[start : start + chunk])
    return acc.features(obs.sigma, obs.d)


def empirical_moments_uniform(obs: ObservationSet, chunk: int = 4096) -> UniformInvariantFeatures:
    return to_uniform(empirical_moments(obs, chunk), obs.d)


def feature_distance(a, b, weights) -> float:
    """Weighted squared distance between two feature sets of the same kind.

    ``weights`` is ``(lambda_t, lambda_c, lambda_mu)`` or a :class:`Weights`.
    Norms run over the full arrays. For uniform features only the lags
    observed at the smaller of the two window lengths contribute.
    """
    lt, lc, lm = _weights_tuple(weights)
    if a.kind != b.kind:
        raise ValueError(f"feature kinds differ: {a.kind} vs {b.kind}")
    if a.kind == UNIFORM:
        if a.d != b.d:
            raise ValueError(f"signal lengths differ: {a.d} vs {b.d}")
        c_mask, t_mask = uniform_observed(a.d, min(a.m, b.m))
        dt = np.where(t_mask, a.t - b.t, 0.0)
        dc = np.where(c_mask, a.c - b.c, 0.0)
        dmu = np.atleast_1d(a.mu - b.mu)
    else:
        if a.m != b.m:
            raise ValueError(f"window lengths differ: {a.m} vs {b.m}")
        dt, dc, dmu = a.t - b.t, a.c - b.c, a.mu - b.mu
    return float(lt * np.sum(dt * dt) + lc * np.sum(dc * dc) + lm * np.sum(dmu * dmu))


def _weights_tuple(weights) -> tuple[float, float, float]:
    if hasattr(weights, "lambda_t"):
        return weights.lambda_t, weights.lambda_c, weights.lambda_mu
    lt, lc, lm = weights
    return float(lt), float(lc), float(lm)
