"""Continuous convolution by repeated integration and sparse Dirac kernels.

Convolution commutes with differentiation, so ``u * K`` equals the
``order``-fold repeated integral of ``u`` convolved with the ``order``-th
derivative of ``K``. For box (order 1) and piecewise-linear (order 2)
kernels that derivative is a handful of weighted impulses, and the
convolution reduces to sampling the integral field at a few offsets.

Discretely, integration is a cumulative sum with zero extension (the
summed-area-table convention) and differentiation is the backward
difference, its exact inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import DepthField

__all__ = [
    "DiracKernel",
    "PatchCoefficients",
    "repeated_integral",
    "dirac_convolve",
    "continuous_convolve",
    "is_compact",
    "kernel_to_impulses",
    "box_kernel",
    "tent_kernel",
    "patch_coefficients",
    "approx_patch_integral",
]

ORDERS = (0, 1, 2)


@dataclass(frozen=True)
class DiracKernel:
    """Weighted impulses ``(dx, dy, w)``; offsets in pixels, may be fractional."""

    impulses: tuple[tuple[float, float, float], ...]
    order: int = 0

    def __post_init__(self):
        imps = tuple((float(dx), float(dy), float(w)) for dx, dy, w in self.impulses)
        if not imps:
            raise ValueError("a Dirac kernel needs at least one impulse")
        if not all(math.isfinite(v) for imp in imps for v in imp):
            raise ValueError("impulse offsets and weights must be finite")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order}")
        object.__setattr__(self, "impulses", imps)

    @property
    def reach(self) -> int:
        """Largest integer distance any sample can fall from its pixel."""
        return max(int(math.ceil(max(abs(dx), abs(dy)))) for dx, dy, _ in self.impulses)

    @property
    def weight_sum(self) -> float:
        return sum(w for _, _, w in self.impulses)


def _check_order(order: int) -> int:
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order}")
    return order


def _integrate(a: np.ndarray, order: int) -> np.ndarray:
    # the last two axes are (y, x); any leading axes index independent blocks
    for _ in range(order):
        a = np.cumsum(np.cumsum(a, axis=-1), axis=-2)
    return a


def repeated_integral(u: DepthField, order: int) -> DepthField:
    """Apply ``order`` rounds of cumulative summation along x then y."""
    _check_order(order)
    return u.like(_integrate(u.data, order))


def _sample_all(a: np.ndarray, impulses, reach: int) -> np.ndarray:
    """sum_i w_i * a(p + offset_i) for every pixel, bilinear, zero outside."""
    h, w = a.shape
    m = reach + 1
    padded = np.pad(a, m)
    out = np.zeros_like(a)
    for dx, dy, wt in impulses:
        x0, y0 = math.floor(dx), math.floor(dy)
        fx, fy = dx - x0, dy - y0
        for ox, oy, c in (
            (x0, y0, (1 - fx) * (1 - fy)),
            (x0 + 1, y0, fx * (1 - fy)),
            (x0, y0 + 1, (1 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ):
            if c == 0.0:
                continue
            out += (wt * c) * padded[m + oy:m + oy + h, m + ox:m + ox + w]
    return out


def dirac_convolve(integral_field: DepthField, kernel: DiracKernel) -> DepthField:
    """Sample the integral field at every impulse offset and sum with weights."""
    return integral_field.like(
        _sample_all(integral_field.data, kernel.impulses, kernel.reach)
    )


def _stencil(impulses, reach: int) -> np.ndarray:
    """Integer-offset weights equivalent to bilinear sampling of the impulses."""
    size = 2 * reach + 2
    st = np.zeros((size, size))
    for dx, dy, wt in impulses:
        x0, y0 = math.floor(dx), math.floor(dy)
        fx, fy = dx - x0, dy - y0
        for ox, oy, c in (
            (x0, y0, (1 - fx) * (1 - fy)),
            (x0 + 1, y0, fx * (1 - fy)),
            (x0, y0 + 1, (1 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ):
            if c != 0.0:
                st[oy + reach, ox + reach] += wt * c
    return st


def is_compact(kernel: DiracKernel) -> bool:
    """True if the impulses are the ``order``-th derivative of a finite kernel.

    Undoing the per-axis differences must leave nothing beyond the stencil;
    equivalently every row and column has vanishing moments below ``order``.
    """
    n = kernel.order
    if n == 0:
        return True
    st = _stencil(kernel.impulses, kernel.reach)
    tol = 1e-12 * float(np.abs(st).sum())
    for axis in (0, 1):
        acc = np.pad(st, [(0, n) if ax == axis else (0, 0) for ax in (0, 1)])
        for _ in range(n):
            acc = np.cumsum(acc, axis=axis)
        tail = acc[-n:, :] if axis == 0 else acc[:, -n:]
        if np.max(np.abs(tail)) > tol:
            return False
    return True


# block sizes balancing rounding growth (steeper for order 2) against overhead
DEFAULT_TILE = {1: 16, 2: 4}


def continuous_convolve(u: DepthField, kernel: DiracKernel, tile: int | None = None) -> DepthField:
    """Convolve ``u`` (zero-extended) with the kernel whose ``order``-th derivative is ``kernel``.

    The repeated integral of a large grid grows quickly, so its rounding
    error swamps the small differences the impulses take. When the kernel is
    compact the integral is instead taken separately over each ``tile`` x
    ``tile`` block plus a margin: the two integrals differ by terms of
    degree below ``order`` per axis, which the impulses annihilate. Within a
    block the rounded mean is also split off and integrated on the exact
    indicator of real pixels, so only the residual accumulates rounding.
    """
    a = u.data
    if kernel.order == 0:
        return u.like(_sample_all(a, kernel.impulses, kernel.reach))
    h, w = a.shape
    m = kernel.reach + 1
    tile = DEFAULT_TILE[kernel.order] if tile is None else int(tile)
    if tile < 1:
        raise ValueError(f"tile must be positive, got {tile}")
    bh, bw = (tile, tile) if is_compact(kernel) else (h, w)
    nty, ntx = -(-h // bh), -(-w // bw)
    data = np.zeros((nty * bh + 2 * m, ntx * bw + 2 * m))
    data[m:m + h, m:m + w] = a
    inside = np.zeros_like(data)
    inside[m:m + h, m:m + w] = 1.0
    win = (bh + 2 * m, bw + 2 * m)
    blocks = np.lib.stride_tricks.sliding_window_view(data, win)[::bh, ::bw]
    masks = np.lib.stride_tricks.sliding_window_view(inside, win)[::bh, ::bw]
    count = masks.sum(axis=(2, 3), keepdims=True)
    shift = np.round(blocks.sum(axis=(2, 3), keepdims=True) / np.maximum(count, 1.0))
    resid = _integrate(blocks - shift * masks, kernel.order)
    ones = _integrate(masks, kernel.order)
    out = np.zeros((nty, ntx, bh, bw))
    for dy, dx, c in _stencil_entries(kernel):
        sl = (..., slice(m + dy, m + dy + bh), slice(m + dx, m + dx + bw))
        out += c * resid[sl] + (c * shift) * ones[sl]
    out = out.transpose(0, 2, 1, 3).reshape(nty * bh, ntx * bw)[:h, :w]
    return u.like(np.ascontiguousarray(out))


def _stencil_entries(kernel: DiracKernel):
    st = _stencil(kernel.impulses, kernel.reach)
    r = kernel.reach
    return [(j - r, i - r, st[j, i]) for j, i in zip(*np.nonzero(st))]


def kernel_to_impulses(
    kernel: np.ndarray,
    order: int,
    center: tuple[int, int] | None = None,
    tol: float = 0.0,
) -> DiracKernel:
    """Impulses equivalent to dense ``kernel`` under ``order`` integrations.

    ``kernel[j, i]`` weights the input at ``p - (i - cx, j - cy)``, the
    usual convolution orientation. The per-axis ``order``-th backward
    difference of the kernel gives the impulse weights; an entry at kernel
    offset ``q`` becomes an impulse sampled at ``p - q``.
    """
    _check_order(order)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2:
        raise ValueError("kernel must be 2-dimensional")
    cy, cx = center if center is not None else (k.shape[0] // 2, k.shape[1] // 2)
    d = np.pad(k, ((0, order), (0, order)))
    for _ in range(order):
        d = np.diff(d, axis=0, prepend=0.0)
        d = np.diff(d, axis=1, prepend=0.0)
    impulses = []
    for j, i in zip(*np.nonzero(np.abs(d) > tol)):
        impulses.append((-(i - cx), -(j - cy), d[j, i]))
    return DiracKernel(tuple(impulses), order)


def box_kernel(radius: int = 1, normalize: bool = False) -> DiracKernel:
    """Four summed-area-table corners of a (2r+1)^2 box sum (or mean)."""
    r = int(radius)
    if r < 0:
        raise ValueError("radius must be non-negative")
    hi, lo = r, -(r + 1)
    c = 1.0 / (2 * r + 1) ** 2 if normalize else 1.0
    return DiracKernel(((hi, hi, c), (hi, lo, -c), (lo, hi, -c), (lo, lo, c)), order=1)


def tent_kernel() -> DiracKernel:
    """Normalised 3x3 tent ([1,2,1] outer [1,2,1] / 16) as order-2 impulses."""
    axis = ((1, 1.0), (-1, -2.0), (-3, 1.0))
    imps = tuple((ox, oy, wx * wy / 16.0) for ox, wx in axis for oy, wy in axis)
    return DiracKernel(imps, order=2)


@dataclass(frozen=True)
class PatchCoefficients:
    """Linear form ``a * u(x0, y0) + b`` of a patch integral."""

    a: float
    b: float
    m: int
    n: int
    dz: float = 1.0


def patch_coefficients(
    u: DepthField, x0: int, y0: int, m: int, n: int, dz: float = 1.0
) -> PatchCoefficients:
    """Split the Riemann sum over the (m+1)x(n+1) patch at (x0, y0).

    ``a`` counts the cells; ``b`` collects each cell's offset from the
    anchor value, so the anchor's own offset is zero.
    """
    if m < 0 or n < 0:
        raise ValueError("patch extents must be non-negative")
    if dz <= 0:
        raise ValueError("cell area dz must be positive")
    if x0 < 0 or y0 < 0 or x0 + m >= u.width or y0 + n >= u.height:
        raise ValueError(
            f"patch x[{x0},{x0 + m}] y[{y0},{y0 + n}] exceeds the {u.width}x{u.height} field"
        )
    patch = u.data[y0:y0 + n + 1, x0:x0 + m + 1]
    offsets = patch - patch[0, 0]
    return PatchCoefficients(
        a=(m + 1) * (n + 1) * dz,
        b=float(np.sum(offsets)) * dz,
        m=m,
        n=n,
        dz=dz,
    )


def approx_patch_integral(coeffs: PatchCoefficients, u00: float) -> float:
    return coeffs.a * u00 + coeffs.b
