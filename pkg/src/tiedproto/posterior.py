"""Class-probability formulas for tied foreground/background densities.

The binary posterior compares two isotropic Gaussians that share their center
(the prototype) but differ in spread; the multi-prototype variant replaces
each density with a shared-weight mixture, and the multi-class variant sums
per-class foreground densities against per-prototype background densities.
The score-side parameterization (scaled negative cosine plus a sigmoid
threshold) is an exact reparameterization of the binary posterior on the
unit sphere; ``tied_to_adnet`` computes that parameter mapping.

Densities only ever appear as ratios, so the (2*pi)^(-d/2) factor is dropped
and everything is evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .core import (
    ClassPriors,
    FeatureGrid,
    GridMask,
    PrototypeSet,
    ScalarMap,
    TpmParams,
    cosine_map,
    distance_map,
    sq_distance_stack,
)
from .errors import DegeneratePriors, DimensionMismatch, ValidationError


@dataclass(frozen=True)
class AdnetParams:
    """Score-side parameters: scale, score threshold, sigmoid steepness."""

    alpha: float = 20.0
    t_s: float = 0.0
    kappa: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.kappa <= 0:
            raise ValidationError("kappa must be positive")


def _binary_priors(priors: ClassPriors) -> tuple[float, float]:
    if priors.k != 1:
        raise ValidationError("binary posterior needs exactly one foreground prior")
    p_f, p_b = priors.p_f, priors.background
    if p_f <= 0.0 or p_f >= 1.0 or p_b <= 0.0 or p_b >= 1.0:
        raise DegeneratePriors("binary priors must lie strictly inside (0, 1)")
    return p_f, p_b


def anomaly_score_map(features: FeatureGrid, proto, alpha: float = 20.0) -> ScalarMap:
    """Scaled negative cosine similarity to the prototype, in [-alpha, alpha]."""
    cos = cosine_map(features, proto)
    return ScalarMap.from_array(-alpha * cos.values)


def adnet_posterior(score: ScalarMap, params: AdnetParams) -> ScalarMap:
    """Foreground probability 1 - sig(S - T_S) with steepness kappa."""
    vals = expit(-params.kappa * (score.values - params.t_s))
    return ScalarMap.from_array(vals)


def tied_to_adnet(params: TpmParams, priors: ClassPriors) -> AdnetParams:
    """Map tied-density parameters to the equivalent score-side parameters.

    At the default steepness 0.5 this is exactly
    ``alpha = 2*(1/sigma_f^2 - 1/sigma_b^2)`` and
    ``t_s = 2*ln(p_f/p_b) - 2*d*ln(sigma_f/sigma_b) - alpha``;
    for other steepness values both quantities scale by ``0.5/kappa`` so the
    posterior identity still holds.
    """
    p_f, p_b = _binary_priors(priors)
    alpha = params.delta / params.kappa
    t_s = (math.log(p_f / p_b) - params.dim * params.log_sigma_ratio) / params.kappa - alpha
    return AdnetParams(alpha=alpha, t_s=t_s, kappa=params.kappa)


def _sp_logit(sq_dist, params: TpmParams, p_f: float, p_b: float):
    """Log odds of background over foreground at a squared chord distance."""
    return (
        0.5 * sq_dist * params.delta
        + params.dim * params.log_sigma_ratio
        + math.log(p_b / p_f)
    )


def sp_posterior_from_distances(
    distances: ScalarMap, params: TpmParams, priors: ClassPriors
) -> ScalarMap:
    """Binary tied posterior evaluated directly on a chord-distance map."""
    p_f, p_b = _binary_priors(priors)
    logit = _sp_logit(distances.values**2, params, p_f, p_b)
    return ScalarMap.from_array(expit(-logit))


def tpm_sp_posterior(
    features: FeatureGrid, proto, params: TpmParams, priors: ClassPriors
) -> ScalarMap:
    """Binary tied posterior for a single prototype."""
    dists = distance_map(features, PrototypeSet.single(proto))
    return sp_posterior_from_distances(dists, params, priors)


def _log_mixture(sq_dists: np.ndarray, weights: np.ndarray, sigma: float, dim: float):
    """ln sum_m w_m phi(p_m, sigma) up to the shared (2*pi)^(-d/2) factor."""
    logits = np.log(weights)[None, None, :] - sq_dists / (2.0 * sigma**2)
    return logsumexp(logits, axis=-1) - dim * math.log(sigma)


def tpm_mp_posterior(
    features: FeatureGrid, protos: PrototypeSet, params: TpmParams, priors: ClassPriors
) -> ScalarMap:
    """Binary posterior from tied mixtures sharing prototypes and weights."""
    p_f, p_b = _binary_priors(priors)
    sq = sq_distance_stack(features, protos.vectors)
    log_fg = math.log(p_f) + _log_mixture(sq, protos.weights, params.sigma_f, params.dim)
    log_bg = math.log(p_b) + _log_mixture(sq, protos.weights, params.sigma_b, params.dim)
    return ScalarMap.from_array(expit(log_fg - log_bg))


def tpm_mc_posterior(
    features: FeatureGrid, protos, params: TpmParams, priors: ClassPriors
) -> list[ScalarMap]:
    """Multi-class tied posterior.

    Args:
        protos: (k, dims) array, one unit prototype per foreground class.
        priors: k foreground priors plus a background prior. A zero background
            prior reduces the foreground maps to a normalized softmax over
            scaled squared distances; zero foreground priors zero out their
            maps.

    Returns:
        k+1 probability maps, background first, summing to 1 pointwise.
    """
    vectors = np.asarray(protos, dtype=np.float64)
    if vectors.ndim != 2:
        raise DimensionMismatch(f"expected (k, dims) prototypes, got {vectors.shape}")
    if priors.k != vectors.shape[0]:
        raise DimensionMismatch(
            f"{priors.k} foreground priors for {vectors.shape[0]} prototypes"
        )
    fg = np.asarray(priors.foreground, dtype=np.float64)
    if not np.any(fg > 0.0):
        raise DegeneratePriors("all foreground priors are zero")

    sq = sq_distance_stack(features, vectors)
    with np.errstate(divide="ignore"):
        log_fg_priors = np.log(fg)
        log_bg_prior = math.log(priors.background) if priors.background > 0 else -math.inf
    fg_logits = (
        log_fg_priors[None, None, :]
        - params.dim * math.log(params.sigma_f)
        - sq / (2.0 * params.sigma_f**2)
    )
    bg_logits = (
        log_bg_prior
        - params.dim * math.log(params.sigma_b)
        - sq / (2.0 * params.sigma_b**2)
    )
    denom = logsumexp(np.concatenate([fg_logits, bg_logits], axis=-1), axis=-1)
    fg_maps = np.exp(fg_logits - denom[:, :, None])
    bg_map = 1.0 - fg_maps.sum(axis=-1)
    maps = [ScalarMap.from_array(np.clip(bg_map, 0.0, 1.0))]
    maps.extend(ScalarMap.from_array(fg_maps[:, :, i]) for i in range(vectors.shape[0]))
    return maps


def predict_mask(prob_maps) -> GridMask:
    """Turn probability maps into labels.

    A single map is thresholded at 0.5 (label 1 where p >= 0.5). A sequence
    of k+1 maps (background first) is reduced by argmax, ties going to the
    lowest class index.
    """
    if isinstance(prob_maps, ScalarMap):
        vals = prob_maps.values
        _check_probability(vals)
        labels = (vals >= 0.5).astype(np.int64)
        return GridMask(prob_maps.height, prob_maps.width, labels, 1)
    maps = list(prob_maps)
    if len(maps) < 2:
        raise ValidationError("multi-class prediction needs at least two maps")
    shape = (maps[0].height, maps[0].width)
    for m in maps:
        if (m.height, m.width) != shape:
            raise DimensionMismatch("probability maps must share dimensions")
        _check_probability(m.values)
    stacked = np.stack([m.values for m in maps], axis=0)
    labels = np.argmax(stacked, axis=0).astype(np.int64)
    return GridMask(shape[0], shape[1], labels, len(maps) - 1)


def _check_probability(values: np.ndarray) -> None:
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValidationError("expected a probability map with values in [0, 1]")
