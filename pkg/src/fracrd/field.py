"""Depth grid container, Neumann boundary handling, stencils and metrics.

All arrays are stored row-major with shape ``(height, width)`` and hold
depths in millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "DEFAULT_THRESHOLDS",
    "DepthField",
    "Metrics",
    "pad_neumann",
    "directional_differences",
    "compute_metrics",
]

DEFAULT_THRESHOLDS = (1.02, 1.05, 1.10)


class DepthField:
    """Immutable 2D depth map with an optional validity mask.

    ``data`` is copied to a read-only float64 array. Non-finite values are
    rejected, as are grids smaller than 2x2.
    """

    __slots__ = ("_data", "_mask")

    def __init__(self, data, valid_mask=None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"depth data must be 2-dimensional, got shape {arr.shape}")
        h, w = arr.shape
        if h < 2 or w < 2:
            raise ValueError(f"depth field must be at least 2x2, got {w}x{h}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("depth data contains non-finite values")
        arr.setflags(write=False)
        self._data = arr

        if valid_mask is None:
            self._mask = None
        else:
            mask = np.array(valid_mask, dtype=bool, copy=True)
            if mask.shape != arr.shape:
                raise ValueError(
                    f"valid_mask shape {mask.shape} does not match data shape {arr.shape}"
                )
            mask.setflags(write=False)
            self._mask = mask

    @classmethod
    def from_flat(cls, width: int, height: int, values, valid_mask=None) -> "DepthField":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ValueError(
                f"expected {width * height} values for a {width}x{height} field, got {values.size}"
            )
        mask = None if valid_mask is None else np.asarray(valid_mask, bool).reshape(height, width)
        return cls(values.reshape(height, width), mask)

    @classmethod
    def constant(cls, width: int, height: int, value: float) -> "DepthField":
        return cls(np.full((height, width), float(value)))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def valid_mask(self) -> np.ndarray | None:
        return self._mask

    @property
    def mask(self) -> np.ndarray:
        """The validity mask, all-true when none was given."""
        if self._mask is None:
            return np.ones(self._data.shape, dtype=bool)
        return self._mask

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    def like(self, data) -> "DepthField":
        """New field with ``data`` and this field's mask."""
        return DepthField(data, self._mask)

    def flat(self) -> np.ndarray:
        return self._data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, DepthField):
            return NotImplemented
        if self.shape != other.shape or not np.array_equal(self._data, other._data):
            return False
        return np.array_equal(self.mask, other.mask)

    __hash__ = None

    def __repr__(self):
        lo, hi = float(self._data.min()), float(self._data.max())
        return f"DepthField({self.width}x{self.height}, range=[{lo:g}, {hi:g}] mm)"


def _check_same_shape(*fields: DepthField) -> None:
    shapes = {f.shape for f in fields}
    if len(shapes) != 1:
        raise ValueError(f"field shapes differ: {sorted(shapes)}")


def pad_neumann(field: DepthField, margin: int) -> DepthField:
    """Pad by edge replication, the discrete zero-flux boundary."""
    if int(margin) != margin or margin < 1:
        raise ValueError(f"margin must be a positive integer, got {margin!r}")
    margin = int(margin)
    mask = None if field.valid_mask is None else np.pad(field.valid_mask, margin, mode="edge")
    return DepthField(np.pad(field.data, margin, mode="edge"), mask)


def _differences(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    p = np.pad(u, 1, mode="edge")
    c = p[1:-1, 1:-1]
    north = p[:-2, 1:-1] - c
    south = p[2:, 1:-1] - c
    east = p[1:-1, 2:] - c
    west = p[1:-1, :-2] - c
    return north, south, east, west


def directional_differences(field: DepthField):
    """Neighbour-minus-centre differences toward north, south, east, west.

    North is the previous row. Differences across the outer boundary are
    zero because neighbours are taken from the replicated border.
    """
    return tuple(field.like(d) for d in _differences(field.data))


@dataclass(frozen=True)
class Metrics:
    """Error statistics in millimeters; ``rho`` maps threshold -> percent."""

    mae: float
    rmse: float
    rho: dict[float, float] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        row = {"mae": self.mae, "rmse": self.rmse}
        for th, pct in self.rho.items():
            row[f"rho_{threshold_label(th)}"] = pct
        return row


def threshold_label(th: float) -> str:
    """Column label for a ratio threshold, e.g. 1.1 -> '1.10'."""
    two = f"{th:.2f}"
    return two if float(two) == th else repr(float(th))


def compute_metrics(
    pred: DepthField,
    gt: DepthField,
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
) -> Metrics:
    """MAE, RMSE and the symmetric-ratio accuracy ``rho`` for each threshold.

    Pixels masked out in either field are ignored. ``gt`` must be strictly
    positive on every counted pixel.
    """
    _check_same_shape(pred, gt)
    valid = pred.mask & gt.mask
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid pixels to evaluate")
    p = pred.data[valid]
    g = gt.data[valid]
    if np.any(g <= 0):
        raise ValueError("ground truth must be strictly positive on valid pixels")

    err = p - g
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(p / g, g / p)
    # non-positive predictions never satisfy a ratio bound
    ratio = np.where(p > 0, ratio, np.inf)
    rho = {float(th): 100.0 * float(np.count_nonzero(ratio <= th)) / n for th in thresholds}
    return Metrics(mae=mae, rmse=rmse, rho=rho)
