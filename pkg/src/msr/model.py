"""Signal and shift-pmf helpers, the cyclic masking operator, observation
synthesis, and evaluation modulo the joint cyclic-shift ambiguity.

Signals and pmfs are plain 1-D float arrays. ``as_signal`` and ``as_pmf``
validate and return read-only copies; everything downstream accepts
anything array-like and runs it through these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PMF_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_signal(x) -> np.ndarray:
    """Validate a signal: non-empty, 1-D, finite."""
    x = np.array(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"signal must be a non-empty 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal has non-finite entries")
    return _frozen(x)


def as_pmf(p, d: int | None = None) -> np.ndarray:
    """Validate a shift pmf: nonnegative entries summing to one."""
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"pmf must be a non-empty 1-D vector, got shape {p.shape}")
    if d is not None and p.size != d:
        raise ValueError(f"pmf has length {p.size}, expected {d}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("pmf entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > PMF_TOL:
        raise ValueError(f"pmf sums to {p.sum()!r}, not 1")
    return _frozen(p)


def uniform_pmf(d: int) -> np.ndarray:
    return _frozen(np.full(d, 1.0 / d))


def cyclic_mask(x, s: int, m: int) -> np.ndarray:
    """Return the length-``m`` window of ``x`` starting at ``s``, wrapping mod d."""
    x = as_signal(x)
    d = x.size
    if not 1 <= m <= d:
        raise ValueError(f"window length m={m} must satisfy 1 <= m <= d={d}")
    if not 0 <= s < d:
        raise ValueError(f"shift s={s} out of range [0, {d})")
    return x[(np.arange(m) + s) % d]


def cyclic_shift(x, r: int) -> np.ndarray:
    """``out[n] = x[(n + r) mod d]``; any integer ``r`` is accepted."""
    x = np.asarray(x, dtype=float)
    return np.roll(x, -int(r))


def mask_matrix(x: np.ndarray, m: int) -> np.ndarray:
    """All d windows stacked as rows: ``X[s, n] = x[(n + s) mod d]``."""
    return x[window_index(x.size, m)]


def window_index(d: int, m: int) -> np.ndarray:
    """``idx[s, n] = (n + s) mod d``, the signal coordinate each window entry reads."""
    return (np.arange(d)[:, None] + np.arange(m)[None, :]) % d


@dataclass(frozen=True)
class ObservationSet:
    """K noisy windows of length m, one per row.

    ``true_shifts`` is kept for diagnostics only; no estimator reads it.
    """

    segments: np.ndarray
    d: int
    m: int
    sigma: float
    seed: int | None = None
    true_shifts: np.ndarray | None = None

    def __post_init__(self):
        seg = np.array(self.segments, dtype=float)
        if seg.ndim != 2 or seg.shape[0] < 1:
            raise ValueError("no observations")
        if seg.shape[1] != self.m:
            raise ValueError(f"segments have width {seg.shape[1]}, expected m={self.m}")
        if not 1 <= self.m <= self.d:
            raise ValueError(f"m={self.m} must satisfy 1 <= m <= d={self.d}")
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        object.__setattr__(self, "segments", _frozen(seg))

    @property
    def K(self) -> int:
        return self.segments.shape[0]


def generate_observations(x, p, m: int, sigma: float, K: int, seed: int | None = None) -> ObservationSet:
    """Draw K windows ``y_k = M_{s_k} x + eps_k`` with ``s_k ~ p`` i.i.d.

    Draw order from a single ``default_rng(seed)``: all K shifts first,
    then the K x m noise matrix. The noise draw is skipped when sigma == 0.
    """
    x = as_signal(x)
    d = x.size
    p = as_pmf(p, d)
    if not 1 <= m <= d:
        raise ValueError(f"window length m={m} must satisfy 1 <= m <= d={d}")
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    shifts = rng.choice(d, size=K, p=p)
    segments = x[(shifts[:, None] + np.arange(m)[None, :]) % d]
    if sigma > 0:
        segments = segments + sigma * rng.standard_normal((K, m))
    return ObservationSet(segments, d, m, float(sigma), seed, _frozen(shifts))


@dataclass(frozen=True)
class AlignmentResult:
    best_shift: int
    mse_x: float
    mse_p: float
    mse_x_normalized: float


def align_and_mse(x_ref, p_ref, x_est, p_est) -> AlignmentResult:
    """Best joint cyclic shift of ``(x_est, p_est)`` onto the reference.

    Scans every r, forming ``x_est[(n + r) mod d]`` and ``p_est[(s + r) mod d]``,
    and keeps the r with smallest ``||x_ref - x'||^2`` (first one on ties).
    MSE is the raw squared norm; ``mse_x_normalized`` divides by ``||x_ref||^2``.
    """
    x_ref, x_est = np.asarray(x_ref, float), np.asarray(x_est, float)
    p_ref, p_est = np.asarray(p_ref, float), np.asarray(p_est, float)
    d = x_ref.size
    if not (x_est.size == p_ref.size == p_est.size == d):
        raise ValueError("align_and_mse needs four vectors of equal length")
    idx = (np.arange(d)[:, None] + np.arange(d)[None, :]) % d  # idx[r, n]
    res_x = np.sum((x_ref[None, :] - x_est[idx]) ** 2, axis=1)
    r = int(np.argmin(res_x))
    mse_p = float(np.sum((p_ref - p_est[idx[r]]) ** 2))
    mse_x = float(res_x[r])
    norm = float(x_ref @ x_ref)
    if norm > 0:
        normalized = mse_x / norm
    else:
        normalized = 0.0 if mse_x == 0 else float("inf")
    return AlignmentResult(r, mse_x, mse_p, normalized)
