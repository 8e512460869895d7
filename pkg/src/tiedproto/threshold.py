"""Ideal thresholds, ideal class priors, and prior estimators.

The ideal distance threshold (IDT) is the midpoint of the |F|-th and
(|F|+1)-th smallest feature-prototype distances, so strict thresholding
predicts exactly the true foreground count. The ideal class prior (ICP) is
the foreground prior that places the binary posterior's 0.5 boundary at that
distance; ``boundary_distance`` is its inverse. AvgEst/LinEst estimate the
ICP from training episodes, OCP computes it from test labels. Sweeps trace
cross-entropy and Dice over a grid of thresholds (or priors) to expose the
gap between the CE-minimizing and the Dice-maximizing operating points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import ClassPriors, GridMask, ScalarMap, TpmParams
from .errors import (
    CountOutOfRange,
    DimensionMismatch,
    EmptyRecords,
    NoBoundary,
    ValidationError,
)
from .metrics import cross_entropy, dice
from .posterior import predict_mask, sp_posterior_from_distances


@dataclass(frozen=True)
class EpisodeRecord:
    """Per-training-episode inputs for prior estimation."""

    support_fg_count: int
    slice_loc: float
    icp: float

    def __post_init__(self):
        if self.support_fg_count < 0:
            raise ValidationError("support_fg_count must be non-negative")
        if not 0.0 <= self.slice_loc <= 1.0:
            raise ValidationError("slice_loc must lie in [0, 1]")
        if not 0.0 < self.icp < 1.0:
            raise ValidationError("icp must lie in (0, 1)")


@dataclass(frozen=True)
class LinEstModel:
    """Linear ICP estimator on (support foreground count, slice location)."""

    intercept: float
    coef_fg_count: float
    coef_slice_loc: float
    clamp_eps: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValidationError("clamp_eps must lie in (0, 0.5)")


@dataclass(frozen=True)
class IdtResult:
    """Ideal distance threshold plus tie diagnostics."""

    threshold: float
    tie: bool
    predicted_count: int

    def __float__(self) -> float:
        return self.threshold


@dataclass(frozen=True)
class SweepResult:
    """CE and Dice curves over a grid, with the distinguished operating points.

    ``kind`` is "distance" when the grid holds distance thresholds and
    "prior" when it holds foreground priors; ``ideal`` is expressed in the
    same units as the grid and is grid-independent.
    """

    kind: str
    grid: np.ndarray
    ce: np.ndarray
    dice: np.ndarray
    argmin_ce: float
    argmax_dice: float
    ideal: float
    ideal_ce: float
    ideal_dice: float
    tie: bool


def ideal_distance_threshold(distances: ScalarMap, fg_count: int) -> IdtResult:
    """Midpoint of the fg_count-th and (fg_count+1)-th smallest distances.

    Boundary rules: ``fg_count == 0`` halves the smallest distance;
    ``fg_count == N`` adds half the gap between the two largest distinct
    values above the maximum (scaling by 1.0001 when all values are equal).
    The tie flag reports whether strict thresholding misses the requested
    count, which happens when the two order statistics coincide.
    """
    flat = distances.values.ravel()
    n = flat.size
    if fg_count < 0 or fg_count > n:
        raise CountOutOfRange(f"fg_count={fg_count} outside [0, {n}]")
    d = np.sort(flat)
    if fg_count == 0:
        threshold = d[0] / 2.0
    elif fg_count == n:
        distinct = np.unique(d)
        if distinct.size >= 2:
            threshold = d[-1] + (distinct[-1] - distinct[-2]) / 2.0
        else:
            threshold = d[-1] * 1.0001
    else:
        threshold = (d[fg_count - 1] + d[fg_count]) / 2.0
    predicted = int(np.count_nonzero(flat < threshold))
    return IdtResult(float(threshold), predicted != fg_count, predicted)


def icp_from_idt(t_d: float, params: TpmParams) -> float:
    """Foreground prior that puts the posterior 0.5 boundary at distance t_d.

    Evaluates 1 - sig(-t_d^2*(1/sigma_f^2 - 1/sigma_b^2)
    - 2*d*ln(sigma_f/sigma_b)) with the fixed 0.5-steepness sigmoid.
    """
    if t_d < 0:
        raise ValidationError("t_d must be non-negative")
    return float(expit(0.5 * t_d**2 * params.delta + params.dim * params.log_sigma_ratio))


def boundary_distance(params: TpmParams, priors: ClassPriors) -> float:
    """Chord distance where the binary tied posterior crosses 0.5."""
    if priors.k != 1:
        raise ValidationError("boundary_distance needs binary priors")
    p_f, p_b = priors.p_f, priors.background
    if p_f <= 0.0 or p_f >= 1.0:
        raise ValidationError("binary priors must lie strictly inside (0, 1)")
    sq = (2.0 * math.log(p_f / p_b) - 2.0 * params.dim * params.log_sigma_ratio) / params.delta
    if sq < 0:
        raise NoBoundary(
            "foreground posterior stays below 0.5 everywhere for these priors"
        )
    return math.sqrt(sq)


def avg_est(records) -> float:
    """Mean ICP over the records."""
    records = list(records)
    if not records:
        raise EmptyRecords("no records to average")
    return float(np.mean([r.icp for r in records]))


def lin_est_fit(records) -> LinEstModel:
    """Least-squares fit of icp ~ 1 + support_fg_count + slice_loc.

    Solved through the normal equations with a 1e-9 ridge jitter on the
    diagonal. Fewer than 3 records fall back to an intercept-only model at
    the record mean.
    """
    records = list(records)
    if not records:
        raise EmptyRecords("no records to fit")
    if len(records) < 3:
        return LinEstModel(avg_est(records), 0.0, 0.0)
    x = np.array(
        [[1.0, float(r.support_fg_count), float(r.slice_loc)] for r in records]
    )
    y = np.array([r.icp for r in records])
    gram = x.T @ x + 1e-9 * np.eye(3)
    beta = np.linalg.solve(gram, x.T @ y)
    return LinEstModel(float(beta[0]), float(beta[1]), float(beta[2]))


def lin_est_predict(model: LinEstModel, support_fg_count: int, slice_loc: float) -> float:
    """Clamped linear prediction of the ICP."""
    if not 0.0 <= slice_loc <= 1.0:
        raise ValidationError("slice_loc must lie in [0, 1]")
    raw = (
        model.intercept
        + model.coef_fg_count * float(support_fg_count)
        + model.coef_slice_loc * float(slice_loc)
    )
    return float(np.clip(raw, model.clamp_eps, 1.0 - model.clamp_eps))


def ocp_prior(distances: ScalarMap, true_mask: GridMask, params: TpmParams) -> float:
    """Oracle ICP computed from the true foreground count of the query."""
    _check_same_dims(distances, true_mask)
    idt = ideal_distance_threshold(distances, true_mask.fg_count())
    return icp_from_idt(idt.threshold, params)


def _check_same_dims(distances: ScalarMap, mask: GridMask) -> None:
    if (distances.height, distances.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"distance map {distances.height}x{distances.width} != "
            f"mask {mask.height}x{mask.width}"
        )


def _binary_truth(mask: GridMask) -> GridMask:
    labels = (mask.labels > 0).astype(np.int64)
    return GridMask(mask.height, mask.width, labels, 1)


def _eval_prior(distances, truth, params, p_f):
    prob = sp_posterior_from_distances(distances, params, ClassPriors.binary(p_f))
    pred = predict_mask(prob)
    return cross_entropy(prob, truth), dice(pred, truth, 1)


def threshold_sweep(
    distances: ScalarMap, true_mask: GridMask, params: TpmParams, grid
) -> SweepResult:
    """Trace CE and Dice while moving the decision boundary along ``grid``.

    Each candidate distance threshold is converted to its ICP, the binary
    posterior is evaluated on the distance map, and mean binary CE plus the
    Dice of the thresholded mask are recorded. The ideal threshold comes
    from the true foreground count and does not depend on the grid.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 1:
        raise ValidationError("sweep grid must be a non-empty 1-D array")
    _check_same_dims(distances, true_mask)
    truth = _binary_truth(true_mask)

    ce_curve = np.empty(grid.size)
    dice_curve = np.empty(grid.size)
    for i, t in enumerate(grid):
        ce_curve[i], dice_curve[i] = _eval_prior(
            distances, truth, params, icp_from_idt(float(t), params)
        )
    idt = ideal_distance_threshold(distances, truth.fg_count())
    ideal_ce, ideal_dice = _eval_prior(
        distances, truth, params, icp_from_idt(idt.threshold, params)
    )
    return SweepResult(
        kind="distance",
        grid=grid,
        ce=ce_curve,
        dice=dice_curve,
        argmin_ce=float(grid[int(np.argmin(ce_curve))]),
        argmax_dice=float(grid[int(np.argmax(dice_curve))]),
        ideal=idt.threshold,
        ideal_ce=ideal_ce,
        ideal_dice=ideal_dice,
        tie=idt.tie,
    )


def prior_sweep(
    distances: ScalarMap, true_mask: GridMask, params: TpmParams, prior_grid
) -> SweepResult:
    """Same mechanics as ``threshold_sweep``, driven by foreground priors.

    Each prior corresponds to the boundary distance it induces (the inverse
    of ``icp_from_idt``), so this is the threshold sweep reparameterized;
    priors whose boundary does not exist simply yield all-background masks.
    The ideal point is the ICP of the ideal distance threshold.
    """
    grid = np.asarray(prior_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 1:
        raise ValidationError("sweep grid must be a non-empty 1-D array")
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ValidationError("prior grid values must lie strictly inside (0, 1)")
    _check_same_dims(distances, true_mask)
    truth = _binary_truth(true_mask)

    ce_curve = np.empty(grid.size)
    dice_curve = np.empty(grid.size)
    for i, p in enumerate(grid):
        ce_curve[i], dice_curve[i] = _eval_prior(distances, truth, params, float(p))
    idt = ideal_distance_threshold(distances, truth.fg_count())
    ideal_prior = icp_from_idt(idt.threshold, params)
    ideal_ce, ideal_dice = _eval_prior(distances, truth, params, ideal_prior)
    return SweepResult(
        kind="prior",
        grid=grid,
        ce=ce_curve,
        dice=dice_curve,
        argmin_ce=float(grid[int(np.argmin(ce_curve))]),
        argmax_dice=float(grid[int(np.argmax(dice_curve))]),
        ideal=ideal_prior,
        ideal_ce=ideal_ce,
        ideal_dice=ideal_dice,
        tie=idt.tie,
    )
