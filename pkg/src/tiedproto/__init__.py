"""Tied-prototype feature-space segmentation toolkit."""

import os as _os

# TPM_THREADS caps the numeric backends' internal parallelism; it must be
# applied before numpy initializes its BLAS thread pools.
if "TPM_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["TPM_THREADS"])

from . import errors
from .core import (
    DEFAULT_SIGMA_B,
    DEFAULT_SIGMA_F,
    ClassPriors,
    FeatureGrid,
    GridMask,
    PrototypeSet,
    ScalarMap,
    TpmParams,
    bilinear_upsample,
    cosine_map,
    distance_map,
    downsample_mask,
    normalize_to_sphere,
    unit_vector,
    upsample_features,
)
from .evalsynth import (
    EpisodeReport,
    Scene,
    SceneConfig,
    build_records,
    gen_scene,
    run_episode,
)
from .metrics import cross_entropy, dice
from .posterior import (
    AdnetParams,
    adnet_posterior,
    anomaly_score_map,
    predict_mask,
    sp_posterior_from_distances,
    tied_to_adnet,
    tpm_mc_posterior,
    tpm_mp_posterior,
    tpm_sp_posterior,
)
from .prototype import EmConfig, EmFit, em_fit, em_fit_detailed, em_responsibilities, map_pool
from .threshold import (
    EpisodeRecord,
    IdtResult,
    LinEstModel,
    SweepResult,
    avg_est,
    boundary_distance,
    icp_from_idt,
    ideal_distance_threshold,
    lin_est_fit,
    lin_est_predict,
    ocp_prior,
    prior_sweep,
    threshold_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AdnetParams",
    "ClassPriors",
    "DEFAULT_SIGMA_B",
    "DEFAULT_SIGMA_F",
    "EmConfig",
    "EmFit",
    "EpisodeRecord",
    "EpisodeReport",
    "FeatureGrid",
    "GridMask",
    "IdtResult",
    "LinEstModel",
    "PrototypeSet",
    "ScalarMap",
    "Scene",
    "SceneConfig",
    "SweepResult",
    "TpmParams",
    "adnet_posterior",
    "anomaly_score_map",
    "avg_est",
    "bilinear_upsample",
    "boundary_distance",
    "build_records",
    "cosine_map",
    "cross_entropy",
    "dice",
    "distance_map",
    "downsample_mask",
    "em_fit",
    "em_fit_detailed",
    "em_responsibilities",
    "errors",
    "gen_scene",
    "icp_from_idt",
    "ideal_distance_threshold",
    "lin_est_fit",
    "lin_est_predict",
    "map_pool",
    "normalize_to_sphere",
    "ocp_prior",
    "predict_mask",
    "prior_sweep",
    "run_episode",
    "sp_posterior_from_distances",
    "threshold_sweep",
    "tied_to_adnet",
    "tpm_mc_posterior",
    "tpm_mp_posterior",
    "tpm_sp_posterior",
    "unit_vector",
    "upsample_features",
]
