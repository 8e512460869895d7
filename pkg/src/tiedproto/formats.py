"""Binary grid file formats and report emission.

Both formats are little-endian regardless of host byte order. Feature grids
("TPFG") store a version, the grid shape, and a float32 payload, row-major
and vector-contiguous; masks ("TPMK") store the shape, the declared class
count, and a uint8 label payload. Reports are JSON objects with sorted keys
and 10-significant-digit floats, or CSV tables/curves ready for plotting.
"""

from __future__ import annotations

import csv
import json
import struct

import numpy as np

from .core import FeatureGrid, GridMask
from .errors import (
    BadMagic,
    BadVersion,
    FormatError,
    NormViolation,
    TruncatedPayload,
    ValidationError,
)

FEATURE_MAGIC = b"TPFG"
MASK_MAGIC = b"TPMK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIII")

READ_NORM_ATOL = 1e-5
# own-file float32 quantization keeps norms within ~1e-7 of 1; only sloppier
# (foreign) payloads get reprojected, so write->read->write is byte-stable
_RENORM_ATOL = 5e-7


def write_feature_grid(grid: FeatureGrid, path) -> None:
    """Serialize a feature grid (float32 little-endian payload)."""
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, grid.height, grid.width, grid.dims))
        fh.write(payload)


def read_feature_grid(path) -> FeatureGrid:
    """Parse and validate a feature grid file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, h, w, dims = _read_header(blob, FEATURE_MAGIC)
    expected = h * w * dims * 4
    payload = blob[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayload(
            f"payload holds {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(h, w, dims)
    norms = np.linalg.norm(data, axis=-1)
    deviation = float(np.abs(norms - 1.0).max())
    if deviation > READ_NORM_ATOL:
        raise NormViolation(
            f"vector norms deviate from 1 by up to {deviation:.3g} (limit 1e-5)"
        )
    if deviation > _RENORM_ATOL:
        data = data / norms[:, :, None]
    return FeatureGrid(h, w, dims, data)


def write_mask(mask: GridMask, path) -> None:
    """Serialize a label mask (uint8 payload)."""
    if mask.num_classes > 255 or mask.labels.max(initial=0) > 255:
        raise ValidationError("mask labels must fit in uint8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MASK_MAGIC, FORMAT_VERSION, mask.height, mask.width, mask.num_classes))
        fh.write(np.ascontiguousarray(mask.labels, dtype=np.uint8).tobytes())


def read_mask(path) -> GridMask:
    """Parse and validate a mask file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, h, w, k = _read_header(blob, MASK_MAGIC)
    expected = h * w
    payload = blob[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayload(
            f"payload holds {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after payload")
    labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64).reshape(h, w)
    if labels.max(initial=0) > k:
        raise FormatError("labels exceed the declared class count")
    return GridMask(h, w, labels, max(1, k))


def _read_header(blob: bytes, expected_magic: bytes):
    if len(blob) < _HEADER.size:
        raise TruncatedPayload("file shorter than the fixed header")
    magic, version, a, b, c = _HEADER.unpack_from(blob)
    if magic != expected_magic:
        raise BadMagic(f"expected magic {expected_magic!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise BadVersion(f"unsupported format version {version}")
    return magic, version, a, b, c


def _quantize(obj):
    """Round floats to 10 significant digits, recursively."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.10g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _quantize(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [_quantize(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_quantize(v) for v in obj]
    return obj


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def emit_report(report, format: str, path) -> None:
    """Write a report as JSON (a mapping) or CSV (a sequence of row mappings).

    JSON output has sorted keys and floats rounded to 10 significant digits.
    CSV output writes a header row (taken from the first row's keys) followed
    by one row per entry; an empty sequence yields a header-only file when
    fieldnames are known, otherwise an empty file.
    """
    if format == "json":
        if not isinstance(report, dict):
            raise ValidationError("JSON reports must be mappings")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_quantize(report), fh, sort_keys=True, indent=2)
            fh.write("\n")
    elif format == "csv":
        rows = list(report)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            if not rows:
                return
            fieldnames = list(rows[0].keys())
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([_format_cell(row[name]) for name in fieldnames])
    else:
        raise ValidationError(f"unknown report format {format!r}")


def write_curve_csv(path, xs, ys, x_name: str, y_name: str) -> None:
    """Two-column CSV of a sweep curve, header included."""
    rows = [{x_name: float(x), y_name: float(y)} for x, y in zip(xs, ys)]
    if not rows:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerow([x_name, y_name])
        return
    emit_report(rows, "csv", path)


def write_records(records, path) -> None:
    """Persist episode records as a JSON list."""
    payload = [
        {
            "support_fg_count": r.support_fg_count,
            "slice_loc": r.slice_loc,
            "icp": r.icp,
        }
        for r in records
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_quantize({"records": payload}), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_records(path):
    """Load episode records written by ``write_records``."""
    from .threshold import EpisodeRecord

    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        rows = payload["records"]
        return [
            EpisodeRecord(int(r["support_fg_count"]), float(r["slice_loc"]), float(r["icp"]))
            for r in rows
        ]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed records file: {exc}") from exc


def write_model(model, path) -> None:
    """Persist a fitted linear prior estimator."""
    emit_report(
        {
            "intercept": model.intercept,
            "coef_fg_count": model.coef_fg_count,
            "coef_slice_loc": model.coef_slice_loc,
            "clamp_eps": model.clamp_eps,
        },
        "json",
        path,
    )


def read_model(path):
    """Load a linear prior estimator written by ``write_model``."""
    from .threshold import LinEstModel

    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        return LinEstModel(
            float(payload["intercept"]),
            float(payload["coef_fg_count"]),
            float(payload["coef_slice_loc"]),
            float(payload.get("clamp_eps", 1e-4)),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed model file: {exc}") from exc
