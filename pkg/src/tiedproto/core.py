"""Grid domain types and spherical geometry primitives.

Feature vectors live on the unit sphere, so the distance between two of them
is a chord length bounded by 2 and relates to cosine similarity through
``d^2 = 2 - 2*cos``. Grids are stored row-major as float64 arrays and are
frozen after construction; every operation here is a pure function of its
inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidTarget,
    ValidationError,
    ZeroVector,
)

UNIT_ATOL = 1e-6
MIN_NORM = 1e-12

# Defaults for the model dispersion pair. 1/sigma_f^2 - 1/sigma_b^2 == 10.0
# exactly in float64 (sigma_f = 1/sqrt(11)), so the derived scale factor is
# exactly 20 in the single-prototype mapping.
DEFAULT_SIGMA_F = 0.30151134457776363
DEFAULT_SIGMA_B = 1.0


def _frozen_array(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FeatureGrid:
    """H x W grid of unit-norm feature vectors of length ``dims``."""

    height: int
    width: int
    dims: int
    data: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.dims < 1:
            raise ValidationError("grid dimensions must be positive")
        data = np.array(self.data, dtype=np.float64)
        expected = (self.height, self.width, self.dims)
        if data.shape != expected:
            raise ValidationError(f"feature data shape {data.shape} != {expected}")
        norms = np.linalg.norm(data, axis=-1)
        if not np.all(np.abs(norms - 1.0) <= UNIT_ATOL):
            raise ValidationError("feature vectors must be unit-norm within 1e-6")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> "FeatureGrid":
        """Build a grid from an (H, W, dims) array of unit vectors."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError(f"expected (H, W, dims) array, got shape {arr.shape}")
        h, w, d = arr.shape
        return cls(h, w, d, arr)

    @property
    def vectors(self) -> np.ndarray:
        """(H*W, dims) row-major view of the grid."""
        return self.data.reshape(-1, self.dims)


@dataclass(frozen=True)
class GridMask:
    """H x W integer label grid: 0 is background, 1..num_classes foreground."""

    height: int
    width: int
    labels: np.ndarray
    num_classes: int = 1

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("mask dimensions must be positive")
        if self.num_classes < 1:
            raise ValidationError("declared class count must be >= 1")
        labels = np.array(self.labels, dtype=np.int64)
        if labels.shape != (self.height, self.width):
            raise ValidationError(
                f"label shape {labels.shape} != {(self.height, self.width)}"
            )
        if labels.min(initial=0) < 0:
            raise ValidationError("labels must be non-negative")
        if labels.max(initial=0) > self.num_classes:
            raise ValidationError("labels exceed the declared class count")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_array(cls, arr, num_classes: int | None = None) -> "GridMask":
        arr = np.asarray(arr, dtype=np.int64)
        if arr.ndim != 2:
            raise ValidationError(f"expected (H, W) label array, got shape {arr.shape}")
        if num_classes is None:
            num_classes = max(1, int(arr.max(initial=0)))
        return cls(arr.shape[0], arr.shape[1], arr, num_classes)

    def foreground(self) -> np.ndarray:
        """Boolean map of all non-background pixels."""
        return self.labels > 0

    def fg_count(self, class_id: int | None = None) -> int:
        """Number of foreground pixels, optionally restricted to one class."""
        if class_id is None:
            return int(np.count_nonzero(self.labels > 0))
        return int(np.count_nonzero(self.labels == class_id))


@dataclass(frozen=True)
class ScalarMap:
    """H x W grid of finite floats (distances, scores, or probabilities)."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("map dimensions must be positive")
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width):
            raise ValidationError(
                f"value shape {values.shape} != {(self.height, self.width)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("map values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, arr) -> "ScalarMap":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"expected (H, W) array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr)


@dataclass(frozen=True)
class TpmParams:
    """Tied-model dispersion parameters.

    ``sigma_f``/``sigma_b`` are the foreground/background standard deviations
    (foreground strictly tighter), ``dim`` the effective dimension of the
    density model (a free parameter, not the feature length), and ``kappa``
    the sigmoid steepness used on the score side.
    """

    sigma_f: float = DEFAULT_SIGMA_F
    sigma_b: float = DEFAULT_SIGMA_B
    dim: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        if self.sigma_f <= 0 or self.sigma_b <= 0:
            raise ValidationError("standard deviations must be positive")
        if not self.sigma_f < self.sigma_b:
            raise ValidationError("sigma_f must be strictly less than sigma_b")
        if self.dim <= 0:
            raise ValidationError("effective dimension must be positive")
        if self.kappa <= 0:
            raise ValidationError("kappa must be positive")

    @property
    def delta(self) -> float:
        """Precision gap 1/sigma_f^2 - 1/sigma_b^2 (> 0)."""
        return 1.0 / self.sigma_f**2 - 1.0 / self.sigma_b**2

    @property
    def alpha(self) -> float:
        """Score scale 2*delta derived at the default 0.5 steepness."""
        return 2.0 * self.delta

    @property
    def log_sigma_ratio(self) -> float:
        """ln(sigma_f / sigma_b) (< 0)."""
        return math.log(self.sigma_f / self.sigma_b)


@dataclass(frozen=True)
class ClassPriors:
    """Prior probabilities for k foreground classes plus background."""

    foreground: tuple
    background: float

    def __post_init__(self):
        fg = tuple(float(p) for p in np.atleast_1d(np.asarray(self.foreground, dtype=np.float64)))
        if len(fg) < 1:
            raise ValidationError("at least one foreground prior is required")
        total = math.fsum(fg) + float(self.background)
        entries = fg + (float(self.background),)
        if any(p < 0.0 or p > 1.0 for p in entries):
            raise ValidationError("priors must lie in [0, 1]")
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"priors must sum to 1 (got {total!r})")
        object.__setattr__(self, "foreground", fg)
        object.__setattr__(self, "background", float(self.background))

    @classmethod
    def binary(cls, p_f: float) -> "ClassPriors":
        """Single foreground class with prior ``p_f``; background gets the rest."""
        return cls((float(p_f),), 1.0 - float(p_f))

    @property
    def k(self) -> int:
        return len(self.foreground)

    @property
    def p_f(self) -> float:
        """Foreground prior in the binary (k=1) setting."""
        if self.k != 1:
            raise ValidationError("p_f is only defined for a single foreground class")
        return self.foreground[0]


@dataclass(frozen=True)
class PrototypeSet:
    """M unit prototypes with positive mixture weights summing to 1."""

    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        weights = np.array(self.weights, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValidationError("prototype vectors must form an (M, dims) array")
        if weights.shape != (vectors.shape[0],):
            raise ValidationError("need exactly one weight per prototype")
        norms = np.linalg.norm(vectors, axis=1)
        if not np.all(np.abs(norms - 1.0) <= UNIT_ATOL):
            raise ValidationError("prototypes must be unit-norm within 1e-6")
        if np.any(weights <= 0):
            raise ValidationError("mixture weights must be positive")
        if abs(math.fsum(weights.tolist()) - 1.0) > 1e-9:
            raise ValidationError("mixture weights must sum to 1")
        vectors.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def single(cls, vector) -> "PrototypeSet":
        v = np.asarray(vector, dtype=np.float64).reshape(1, -1)
        return cls(v, np.ones(1))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dims(self) -> int:
        return self.vectors.shape[1]


def unit_vector(v) -> np.ndarray:
    """Project one vector onto the unit sphere."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm < MIN_NORM:
        raise ZeroVector("cannot normalize a (near-)zero vector")
    return v / norm


def normalize_to_sphere(raw) -> FeatureGrid:
    """Scale every vector of an (H, W, dims) array to unit length."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"expected (H, W, dims) array, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    if np.any(norms < MIN_NORM):
        raise ZeroVector("input contains a vector with norm below 1e-12")
    return FeatureGrid.from_array(arr / norms)


def distance_map(features: FeatureGrid, protos: PrototypeSet) -> ScalarMap:
    """Per-pixel minimum Euclidean (chord) distance to any prototype."""
    if protos.dims != features.dims:
        raise DimensionMismatch(
            f"prototype dims {protos.dims} != feature dims {features.dims}"
        )
    diffs = features.data[:, :, None, :] - protos.vectors[None, None, :, :]
    dists = np.linalg.norm(diffs, axis=-1).min(axis=-1)
    return ScalarMap.from_array(dists)


def sq_distance_stack(features: FeatureGrid, vectors: np.ndarray) -> np.ndarray:
    """Squared distances from every pixel to each of M vectors, as (H, W, M)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != features.dims:
        raise DimensionMismatch(
            f"expected (M, {features.dims}) vectors, got shape {vectors.shape}"
        )
    diffs = features.data[:, :, None, :] - vectors[None, None, :, :]
    return np.einsum("hwmd,hwmd->hwm", diffs, diffs)


def cosine_map(features: FeatureGrid, proto) -> ScalarMap:
    """Per-pixel cosine similarity (plain dot product on the sphere)."""
    proto = np.asarray(proto, dtype=np.float64)
    if proto.shape != (features.dims,):
        raise DimensionMismatch(
            f"prototype shape {proto.shape} != ({features.dims},)"
        )
    if abs(float(np.linalg.norm(proto)) - 1.0) > UNIT_ATOL:
        raise ValidationError("prototype must be unit-norm within 1e-6")
    return ScalarMap.from_array(features.data @ proto)


def _axis_coords(target: int, source: int):
    """Half-pixel-center sample positions of a target axis in source space."""
    scale = source / target
    x = (np.arange(target, dtype=np.float64) + 0.5) * scale - 0.5
    np.clip(x, 0.0, source - 1.0, out=x)
    i0 = np.floor(x).astype(np.int64)
    np.minimum(i0, source - 1, out=i0)
    i1 = np.minimum(i0 + 1, source - 1)
    return i0, i1, x - i0


def _nearest_coords(target: int, source: int) -> np.ndarray:
    """Nearest-neighbor sample indices; ties round toward the higher index."""
    scale = source / target
    x = (np.arange(target, dtype=np.float64) + 0.5) * scale - 0.5
    idx = np.floor(x + 0.5).astype(np.int64)
    return np.clip(idx, 0, source - 1)


def _bilinear_2d(values: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    y0, y1, ty = _axis_coords(target_h, values.shape[0])
    x0, x1, tx = _axis_coords(target_w, values.shape[1])
    # fused v0 + t*(v1 - v0) keeps constants and endpoints exact
    rows = values[y0] + ty.reshape(-1, *([1] * (values.ndim - 1))) * (
        values[y1] - values[y0]
    )
    cols0 = rows[:, x0]
    cols1 = rows[:, x1]
    tcol = tx.reshape(1, -1, *([1] * (values.ndim - 2)))
    return cols0 + tcol * (cols1 - cols0)


def bilinear_upsample(src: ScalarMap, target_h: int, target_w: int) -> ScalarMap:
    """Upsample a scalar map with half-pixel-center bilinear interpolation."""
    if target_h < src.height or target_w < src.width:
        raise InvalidTarget("target size must be >= source size")
    if target_h == src.height and target_w == src.width:
        return ScalarMap.from_array(src.values)
    return ScalarMap.from_array(_bilinear_2d(src.values, target_h, target_w))


def downsample_mask(mask: GridMask, target_h: int, target_w: int) -> GridMask:
    """Downsample a label mask by nearest-neighbor sampling."""
    if target_h > mask.height or target_w > mask.width or target_h < 1 or target_w < 1:
        raise InvalidTarget("target size must be in [1, source size]")
    ys = _nearest_coords(target_h, mask.height)
    xs = _nearest_coords(target_w, mask.width)
    return GridMask(target_h, target_w, mask.labels[np.ix_(ys, xs)], mask.num_classes)


def upsample_features(features: FeatureGrid, target_h: int, target_w: int) -> FeatureGrid:
    """Upsample a feature grid channel-wise, then reproject onto the sphere."""
    if target_h < features.height or target_w < features.width:
        raise InvalidTarget("target size must be >= source size")
    if target_h == features.height and target_w == features.width:
        return FeatureGrid.from_array(features.data)
    interp = _bilinear_2d(features.data, target_h, target_w)
    return normalize_to_sphere(interp)
