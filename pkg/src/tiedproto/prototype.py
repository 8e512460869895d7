"""Prototype extraction: masked average pooling and fixed-variance EM.

The EM variant fits a mixture of isotropic Gaussians with one shared, fixed
standard deviation; only the component means (reprojected onto the sphere by
default) and the mixture weights are learned. All density arithmetic runs in
log space so small sigmas do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import MIN_NORM, UNIT_ATOL, FeatureGrid, GridMask, PrototypeSet
from .errors import (
    ConfigInvalid,
    DegenerateComponent,
    DimensionMismatch,
    EmptyMask,
    TooFewPoints,
    ValidationError,
    ZeroVector,
)

RESP_FLOOR = 1e-12


@dataclass(frozen=True)
class EmConfig:
    """Settings for the fixed-variance EM fit."""

    sigma_f: float
    k: int = 5
    max_iters: int = 10
    tol: float = 1e-6
    seed: int = 0
    project_means: bool = True

    def __post_init__(self):
        if self.sigma_f <= 0:
            raise ConfigInvalid("sigma_f must be positive")
        if self.k < 1:
            raise ConfigInvalid("k must be >= 1")
        if self.max_iters < 1:
            raise ConfigInvalid("max_iters must be >= 1")
        if self.tol <= 0:
            raise ConfigInvalid("tol must be positive")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ConfigInvalid("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class EmFit:
    """Fit result plus the log-likelihood trace used by convergence checks."""

    prototypes: PrototypeSet
    log_likelihoods: tuple
    iterations: int
    converged: bool


def map_pool(features: FeatureGrid, mask: GridMask, class_id: int | None = None) -> np.ndarray:
    """Masked average pooling: mean feature over the mask, unit-normalized.

    Args:
        features: feature grid at the same resolution as the mask.
        mask: label grid; pixels with label ``class_id`` (or any non-zero
            label when ``class_id`` is None) are pooled.

    Returns:
        One unit vector of length ``features.dims``.
    """
    if (mask.height, mask.width) != (features.height, features.width):
        raise DimensionMismatch(
            f"mask {mask.height}x{mask.width} != features "
            f"{features.height}x{features.width}; resample first"
        )
    if class_id is None:
        selected = mask.labels > 0
    else:
        selected = mask.labels == class_id
    if not selected.any():
        raise EmptyMask("mask selects no pixels")
    pooled = features.data[selected].mean(axis=0)
    norm = float(np.linalg.norm(pooled))
    if norm < MIN_NORM:
        raise ZeroVector("pooled mean vanished; features cancel out")
    return pooled / norm


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValidationError(f"expected (N, dims) points, got shape {pts.shape}")
    norms = np.linalg.norm(pts, axis=1)
    if not np.all(np.abs(norms - 1.0) <= UNIT_ATOL):
        raise ValidationError("points must be unit-norm within 1e-6")
    return pts


def _sq_dists(points: np.ndarray, means: np.ndarray) -> np.ndarray:
    diffs = points[:, None, :] - means[None, :, :]
    return np.einsum("nmd,nmd->nm", diffs, diffs)


def _log_resp(points: np.ndarray, means: np.ndarray, weights: np.ndarray, sigma: float):
    """Unnormalized per-component log densities and row-wise normalizer."""
    logits = np.log(weights)[None, :] - _sq_dists(points, means) / (2.0 * sigma**2)
    return logits, logsumexp(logits, axis=1)


def _log_likelihood(points, means, weights, sigma) -> float:
    _, row_lse = _log_resp(points, means, weights, sigma)
    const = -0.5 * points.shape[1] * math.log(2.0 * math.pi * sigma**2)
    return float(np.sum(row_lse) + points.shape[0] * const)


def em_responsibilities(points, protos: PrototypeSet, sigma_f: float) -> np.ndarray:
    """Posterior component memberships, one row per point (rows sum to 1)."""
    pts = _check_points(points)
    if protos.dims != pts.shape[1]:
        raise DimensionMismatch(
            f"prototype dims {protos.dims} != point dims {pts.shape[1]}"
        )
    if sigma_f <= 0:
        raise ValidationError("sigma_f must be positive")
    logits, row_lse = _log_resp(pts, protos.vectors, protos.weights, sigma_f)
    return np.exp(logits - row_lse[:, None])


def _farthest_point_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy farthest-point chain anchored at the extreme point along a
    seeded random direction (permutation-invariant for distinct data)."""
    direction = rng.standard_normal(points.shape[1])
    while np.linalg.norm(direction) < MIN_NORM:
        direction = rng.standard_normal(points.shape[1])
    chosen = [int(np.argmax(points @ direction))]
    min_d = np.linalg.norm(points - points[chosen[0]], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        np.minimum(min_d, np.linalg.norm(points - points[nxt], axis=1), out=min_d)
    return points[chosen].copy()


def _restart_components(dead: np.ndarray, means, weights, gamma, points) -> None:
    """Reseed dead components from the points worst-explained by the mixture."""
    order = np.argsort(gamma.max(axis=1))
    cursor = 0
    n = points.shape[0]
    for m in np.flatnonzero(dead):
        if cursor >= len(order):
            raise DegenerateComponent("no points left to restart a dead component")
        means[m] = points[order[cursor]]
        weights[m] = max(weights[m], 1.0 / n)
        cursor += 1
    weights /= weights.sum()


def em_fit_detailed(points, cfg: EmConfig) -> EmFit:
    """Run EM and return the prototypes together with the likelihood trace.

    The E-step responsibilities and the log-likelihood use the shared
    ``cfg.sigma_f``. The M-step sets each mean to the responsibility-weighted
    average (projected back onto the sphere when ``cfg.project_means``) and
    each weight to the mean responsibility. A component whose responsibility
    mass falls below 1e-12 is reseeded from the point with the lowest maximum
    responsibility. Deterministic for a fixed config.
    """
    pts = _check_points(points)
    n = pts.shape[0]
    if n < cfg.k:
        raise TooFewPoints(f"{n} points cannot support k={cfg.k} components")
    rng = np.random.default_rng(cfg.seed)
    means = _farthest_point_init(pts, cfg.k, rng)
    weights = np.full(cfg.k, 1.0 / cfg.k)

    trace = [_log_likelihood(pts, means, weights, cfg.sigma_f)]
    converged = False
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1
        logits, row_lse = _log_resp(pts, means, weights, cfg.sigma_f)
        gamma = np.exp(logits - row_lse[:, None])
        counts = gamma.sum(axis=0)
        dead = counts < RESP_FLOOR
        if dead.any():
            weights = weights.copy()
            _restart_components(dead, means, weights, gamma, pts)
            logits, row_lse = _log_resp(pts, means, weights, cfg.sigma_f)
            gamma = np.exp(logits - row_lse[:, None])
            counts = gamma.sum(axis=0)
            if np.any(counts < RESP_FLOOR):
                raise DegenerateComponent("component stayed empty after restart")
        means = (gamma.T @ pts) / counts[:, None]
        if cfg.project_means:
            norms = np.linalg.norm(means, axis=1, keepdims=True)
            if np.any(norms < MIN_NORM):
                raise DegenerateComponent("component mean vanished under projection")
            means = means / norms
        weights = counts / n
        ll = _log_likelihood(pts, means, weights, cfg.sigma_f)
        trace.append(ll)
        prev = trace[-2]
        if abs(ll - prev) <= cfg.tol * max(1.0, abs(prev)):
            converged = True
            break

    if cfg.project_means:
        vectors = means
    else:
        # the public result is always spherical; only the trace is free-space
        norms = np.linalg.norm(means, axis=1, keepdims=True)
        if np.any(norms < MIN_NORM):
            raise DegenerateComponent("component mean vanished under projection")
        vectors = means / norms
    protos = PrototypeSet(vectors, weights / weights.sum())
    return EmFit(protos, tuple(trace), iterations, converged)


def em_fit(points, cfg: EmConfig) -> PrototypeSet:
    """Extract ``cfg.k`` prototypes with mixture weights from unit points."""
    return em_fit_detailed(points, cfg).prototypes
