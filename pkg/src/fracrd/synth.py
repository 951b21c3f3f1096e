"""Synthetic depth scenes, ToF-style degradation and the benchmark grid.

Randomness comes from numpy's PCG64 bit generator, initialised through
``SeedSequence(seed, spawn_key=(stream,))`` so scene geometry (stream 0)
and sensor noise (stream 1) draw independent streams from one 64-bit
seed. Uniform doubles are drawn with ``Generator.random`` (53-bit
mantissa from one 64-bit output) and Gaussian variates use the Box-Muller
transform on pairs of those uniforms, so every stream is reproducible from
the seed alone regardless of numpy's own normal sampler.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .field import DEFAULT_THRESHOLDS, DepthField, compute_metrics
from .pipeline import RestorationConfig, run_restoration

__all__ = [
    "SceneSpec",
    "DegradationSpec",
    "make_rng",
    "standard_normal",
    "generate_scene",
    "degrade",
    "run_benchmark",
]

SCENE_KINDS = ("plane", "step", "slope", "spheres", "stairs")
_U64 = 2**64


SCENE_STREAM, NOISE_STREAM = 0, 1


def make_rng(seed: int, stream: int = SCENE_STREAM) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Box-Muller normals from the generator's uniform doubles."""
    n = int(np.prod(shape))
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n].reshape(shape)


@dataclass(frozen=True)
class SceneSpec:
    """Scene family and extent. Planes sit at ``depth_min``."""

    kind: str = "plane"
    width: int = 128
    height: int = 128
    depth_min: float = 1000.0
    depth_max: float = 2000.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; expected one of {SCENE_KINDS}")
        if self.width < 2 or self.height < 2:
            raise ValueError(f"scene must be at least 2x2, got {self.width}x{self.height}")
        if not self.depth_min > 0:
            raise ValueError(f"depth_min must be positive, got {self.depth_min}")
        if self.depth_max < self.depth_min:
            raise ValueError("depth_max must not be below depth_min")
        if self.kind != "plane" and self.depth_max == self.depth_min:
            raise ValueError(f"{self.kind!r} scenes need depth_max > depth_min")
        make_rng(self.seed)


@dataclass(frozen=True)
class DegradationSpec:
    """Blur (scattering proxy), bias, and noise scaled by 1/sqrt(attenuation)."""

    noise_sigma: float = 10.0
    attenuation: float = 1.0
    blur_sigma: float = 0.0
    bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("noise_sigma and blur_sigma must be non-negative")
        if not 0.0 < self.attenuation <= 1.0:
            raise ValueError(f"attenuation must lie in (0, 1], got {self.attenuation}")
        make_rng(self.seed)

    @property
    def effective_sigma(self) -> float:
        return self.noise_sigma / np.sqrt(self.attenuation)


def _grid(spec: SceneSpec):
    y, x = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    return x, y


def generate_scene(spec: SceneSpec) -> DepthField:
    """Ground-truth depth for ``spec``; a pure function of the spec."""
    rng = make_rng(spec.seed)
    lo, hi = float(spec.depth_min), float(spec.depth_max)
    h, w = spec.height, spec.width
    x, y = _grid(spec)

    if spec.kind == "plane":
        d = np.full((h, w), lo)
    elif spec.kind == "step":
        theta = rng.uniform(0, 2 * np.pi)
        nx, ny = np.cos(theta), np.sin(theta)
        proj = (x - (w - 1) / 2) * nx + (y - (h - 1) / 2) * ny
        # boundary through the central region so both sides are populated
        cut = rng.uniform(-0.25, 0.25) * min(w, h)
        near = proj < cut
        if near.all() or not near.any():
            near = x < w // 2
        d = np.where(near, lo, hi)
    elif spec.kind == "slope":
        theta = rng.uniform(0, 2 * np.pi)
        proj = x * np.cos(theta) + y * np.sin(theta)
        t = (proj - proj.min()) / (proj.max() - proj.min())
        d = lo + (hi - lo) * t
    elif spec.kind == "spheres":
        d = np.full((h, w), hi)
        for _ in range(int(rng.integers(2, 6))):
            cx, cy = rng.uniform(0, w), rng.uniform(0, h)
            rad = rng.uniform(0.1, 0.3) * min(w, h)
            height = rng.uniform(0.3, 1.0) * (hi - lo)
            r2 = ((x - cx) ** 2 + (y - cy) ** 2) / rad**2
            bump = hi - height * np.sqrt(np.clip(1.0 - r2, 0.0, None))
            d = np.minimum(d, bump)
    else:  # stairs
        levels = int(rng.integers(3, 7))
        vertical = bool(rng.integers(0, 2))
        coord, size = (y, h) if vertical else (x, w)
        idx = np.minimum((coord * levels / size).astype(int), levels - 1)
        d = lo + (hi - lo) * idx / (levels - 1)

    return DepthField(np.clip(d, lo, hi))


def degrade(gt: DepthField, spec: DegradationSpec) -> DepthField:
    """Blur, bias, then additive Gaussian noise; a pure function of its inputs."""
    a = gt.data
    if spec.blur_sigma > 0:
        ref = a[0, 0]
        a = ref + ndimage.gaussian_filter(a - ref, spec.blur_sigma, mode="nearest")
    if spec.bias != 0:
        a = a + spec.bias
    if spec.noise_sigma > 0:
        a = a + spec.effective_sigma * standard_normal(make_rng(spec.seed, NOISE_STREAM), a.shape)
    return gt.like(a)


def _prefixed(prefix: str, d: dict) -> dict:
    return {f"{prefix}{k}": v for k, v in d.items()}


def run_benchmark(
    scenes: Sequence[SceneSpec],
    degradations: Sequence[DegradationSpec],
    configs: Sequence[RestorationConfig],
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
) -> list[dict]:
    """Metrics for every scene x degradation x config cell, one flat row each.

    Raw-vs-gt metrics are prefixed ``raw_``; restored-vs-gt metrics are
    unprefixed.
    """
    if not scenes or not degradations or not configs:
        raise ValueError("scenes, degradations and configs must all be non-empty")
    thresholds = tuple(thresholds)
    rows = []
    for scene, deg in itertools.product(scenes, degradations):
        gt = generate_scene(scene)
        raw = degrade(gt, deg)
        raw_metrics = compute_metrics(raw, gt, thresholds)
        for cfg in configs:
            restored, trace = run_restoration(raw, cfg, thresholds=thresholds)
            m = compute_metrics(restored, gt, thresholds)
            row = _prefixed("scene_", asdict(scene))
            row.update(_prefixed("deg_", asdict(deg)))
            row.update(
                alpha=cfg.alpha_label,
                iterations=cfg.iterations,
                iterations_run=len(trace),
                lam=cfg.lam,
                tau=cfg.tau,
                conductance=cfg.conductance.variant,
                kappa="auto" if cfg.conductance.auto_kappa else cfg.conductance.kappa,
                init=cfg.init_builder.kind,
            )
            row.update(_prefixed("raw_", raw_metrics.as_row()))
            row.update(m.as_row())
            rows.append(row)
    return rows
