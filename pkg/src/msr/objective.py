"""Weighted moment-matching least-squares objectives and their gradients.

The non-uniform objective is a function of (x, p); the uniform objective of
x alone. Gradients are derived by hand. ``g_p`` is the plain partial
derivative; the simplex constraint is the solver's business.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .invariants import (
    UNIFORM,
    InvariantFeatures,
    UniformInvariantFeatures,
    population_moments,
    population_moments_uniform,
    uniform_observed,
    feature_distance,
)
from .model import mask_matrix, window_index


@dataclass(frozen=True)
class Weights:
    lambda_t: float = 1.0
    lambda_c: float = 1.0
    lambda_mu: float = 1.0

    def __post_init__(self):
        vals = (self.lambda_t, self.lambda_c, self.lambda_mu)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"weights must be finite and nonnegative, got {vals}")
        if all(v == 0 for v in vals):
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class ObjectivePoint:
    x: np.ndarray
    p: np.ndarray | None = None


def _sym3(r: np.ndarray) -> np.ndarray:
    return (
        r
        + r.transpose(0, 2, 1)
        + r.transpose(1, 0, 2)
        + r.transpose(1, 2, 0)
        + r.transpose(2, 0, 1)
        + r.transpose(2, 1, 0)
    ) / 6.0


def _check_point(x: np.ndarray, p: np.ndarray, target: InvariantFeatures, m: int) -> None:
    if target.kind == UNIFORM:
        raise ValueError("non-uniform objective given uniform target features")
    if x.ndim != 1 or p is None or p.shape != x.shape:
        raise ValueError("x and p must be 1-D vectors of equal length")
    if target.m != m or m > x.size:
        raise ValueError(f"target has window length {target.m}, expected m={m} <= d={x.size}")
    if target.d is not None and target.d != x.size:
        raise ValueError(f"target built for d={target.d}, point has d={x.size}")


def value_and_grad(x, p, target: InvariantFeatures, w: Weights, m: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and its partial gradients in x and p.

    With ``X[s, a] = x[(a + s) mod d]`` the features are multilinear in the
    rows of X, so the chain rule goes through X and is scattered back onto x.
    p is not validated here so the solver can probe arbitrary points.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_point(x, p, target, m)
    d = x.size
    X = mask_matrix(x, m)
    W = p[:, None] * X

    r_mu = p @ X - target.mu
    f = w.lambda_mu * float(r_mu @ r_mu)
    gX = 2.0 * w.lambda_mu * np.outer(p, r_mu)
    gp = 2.0 * w.lambda_mu * (X @ r_mu)

    if w.lambda_c:
        r_c = W.T @ X - target.c
        f += w.lambda_c * float(np.sum(r_c * r_c))
        XR = X @ (r_c + r_c.T)  # (s, a)
        gX += 2.0 * w.lambda_c * p[:, None] * XR
        gp += w.lambda_c * np.sum(XR * X, axis=1)

    if w.lambda_t:
        XX = (X[:, :, None] * X[:, None, :]).reshape(d, m * m)
        r_t = (W.T @ XX).reshape(m, m, m) - target.t
        f += w.lambda_t * float(np.sum(r_t * r_t))
        # Q[s, a] = sum_jk sym(r_t)[a, j, k] X[s, j] X[s, k]
        Q = XX @ _sym3(r_t).reshape(m, m * m).T
        gX += 6.0 * w.lambda_t * p[:, None] * Q
        gp += 2.0 * w.lambda_t * np.sum(Q * X, axis=1)

    gx = np.bincount(window_index(d, m).ravel(), weights=gX.ravel(), minlength=d)
    return f, gx, gp


def loss(point: ObjectivePoint, target: InvariantFeatures, w: Weights, m: int) -> float:
    """Weighted squared mismatch between the point's window moments and ``target``."""
    return feature_distance(population_moments(point.x, point.p, m), target, w)


def grad(point: ObjectivePoint, target: InvariantFeatures, w: Weights, m: int) -> tuple[np.ndarray, np.ndarray]:
    _, gx, gp = value_and_grad(point.x, point.p, target, w, m)
    return gx, gp


def value_and_grad_uniform(x, target: UniformInvariantFeatures, w: Weights) -> tuple[float, np.ndarray]:
    """Uniform-pmf loss and gradient, restricted to the lags ``target`` observes."""
    x = np.asarray(x, dtype=float)
    if target.kind != UNIFORM:
        raise ValueError("uniform objective given non-uniform target features")
    d = x.size
    if x.ndim != 1 or d != target.d:
        raise ValueError(f"x has length {x.size}, target built for d={target.d}")
    c_mask, t_mask = uniform_observed(d, target.m)
    Y = mask_matrix(x, d)  # Y[j, a] = x[j + a]

    r_mu = x.mean() - target.mu
    f = w.lambda_mu * r_mu * r_mu
    gx = np.full(d, 2.0 * w.lambda_mu * r_mu / d)
    gY = np.zeros((d, d))

    if w.lambda_c:
        r_c = np.where(c_mask, Y.T @ x / d - target.c, 0.0)
        f += w.lambda_c * float(r_c @ r_c)
        gY += (2.0 * w.lambda_c / d) * np.outer(x, r_c)
        gx += (2.0 * w.lambda_c / d) * (Y @ r_c)

    if w.lambda_t:
        r_t = np.where(t_mask, np.einsum("ja,jb,j->ab", Y, Y, x) / d - target.t, 0.0)
        f += w.lambda_t * float(np.sum(r_t * r_t))
        YR = Y @ (r_t + r_t.T)  # (j, a)
        gY += (2.0 * w.lambda_t / d) * x[:, None] * YR
        gx += (2.0 * w.lambda_t / d) * 0.5 * np.sum(YR * Y, axis=1)

    gx += np.bincount(window_index(d, d).ravel(), weights=gY.ravel(), minlength=d)
    return float(f), gx


def loss_uniform(x, target: UniformInvariantFeatures, w: Weights) -> float:
    return feature_distance(population_moments_uniform(x, target.m), target, w)


def grad_uniform(x, target: UniformInvariantFeatures, w: Weights) -> np.ndarray:
    return value_and_grad_uniform(x, target, w)[1]


def finite_diff_check(point: ObjectivePoint, target, w: Weights, m: int | None = None, step: float = 1e-5,
                      grad_fn=None) -> float:
    """Max over coordinates of ``|analytic - central difference| / max(1, |analytic|)``.

    Uniform targets ignore ``point.p`` and ``m``. ``grad_fn`` overrides the
    analytic gradient (returns one concatenated vector) for fault injection.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point.x, dtype=float)
    if target.kind == UNIFORM:
        z0 = x.copy()

        def f(z):
            return value_and_grad_uniform(z, target, w)[0]

        g = value_and_grad_uniform(z0, target, w)[1] if grad_fn is None else grad_fn(point)
    else:
        d = x.size
        z0 = np.concatenate([x, np.asarray(point.p, dtype=float)])

        def f(z):
            return value_and_grad(z[:d], z[d:], target, w, m)[0]

        if grad_fn is None:
            _, gx, gp = value_and_grad(x, point.p, target, w, m)
            g = np.concatenate([gx, gp])
        else:
            g = grad_fn(point)
    g = np.asarray(g, dtype=float)
    fd = np.empty_like(z0)
    for i in range(z0.size):
        zp, zm = z0.copy(), z0.copy()
        zp[i] += step
        zm[i] -= step
        fd[i] = (f(zp) - f(zm)) / (2.0 * step)
    return float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g))))
