"""Restoration loop: initial state, order schedule and fractional refinement."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .contconv import DiracKernel, continuous_convolve
from .diffusion import ConductanceSpec, diffusion_term, reaction_term
from .field import (
    DEFAULT_THRESHOLDS,
    DepthField,
    Metrics,
    _check_same_shape,
    compute_metrics,
    pad_neumann,
)
from .fractional import FractionalState, InstabilityError, _check_alpha, fractional_step, stable_tau

__all__ = [
    "InitBuilder",
    "AdaptiveAlpha",
    "RestorationConfig",
    "IterationRecord",
    "RestorationTrace",
    "build_initial_state",
    "alpha_for_iteration",
    "run_restoration",
]

log = logging.getLogger(__name__)

INIT_KINDS = ("identity", "median", "gaussian", "bilateral")
NAN_POLICIES = ("error", "clamp_and_stop")
TAU_POLICIES = ("fixed", "stable")


@dataclass(frozen=True)
class InitBuilder:
    """Classical stand-in for a learned initial-state builder.

    ``radius`` is used by ``median``; ``sigma`` by ``gaussian`` and as the
    spatial sigma of ``bilateral``; ``sigma_r`` is the bilateral range sigma
    in millimeters.
    """

    kind: str = "identity"
    radius: int = 1
    sigma: float = 1.0
    sigma_r: float = 30.0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown init builder {self.kind!r}; expected one of {INIT_KINDS}")
        if self.kind == "median" and (int(self.radius) != self.radius or self.radius < 1):
            raise ValueError(f"median radius must be a positive integer, got {self.radius}")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError(f"gaussian sigma must be non-negative, got {self.sigma}")
        if self.kind == "bilateral" and (self.sigma <= 0 or self.sigma_r <= 0):
            raise ValueError("bilateral sigmas must be positive")


@dataclass(frozen=True)
class AdaptiveAlpha:
    """Order rule ``clip(base * (1 + gain * tanh(prev_update / scale)), lo, hi)``.

    ``scale`` is ``range_fraction`` times the dynamic range of ``u0``.
    """

    base: float = 0.5
    gain: float = 0.5
    range_fraction: float = 0.01
    lo: float = 0.05
    hi: float = 1.0


AlphaSchedule = Union[float, Sequence[float], AdaptiveAlpha]


@dataclass(frozen=True)
class RestorationConfig:
    iterations: int = 6
    alpha_schedule: AlphaSchedule = 0.5
    lam: float = 0.01
    tau: float = 0.25
    conductance: ConductanceSpec = field(default_factory=ConductanceSpec)
    init_builder: InitBuilder = field(default_factory=InitBuilder)
    smoothing_kernel: DiracKernel | None = None
    history_window: int | None = None
    nan_policy: str = "error"
    # "stable" caps tau at the explicit L1 limit for each iteration's alpha
    tau_policy: str = "fixed"

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be a positive integer, got {self.iterations}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.history_window is not None and self.history_window < 1:
            raise ValueError(f"history_window must be positive, got {self.history_window}")
        if self.nan_policy not in NAN_POLICIES:
            raise ValueError(f"nan_policy must be one of {NAN_POLICIES}, got {self.nan_policy!r}")
        if self.tau_policy not in TAU_POLICIES:
            raise ValueError(f"tau_policy must be one of {TAU_POLICIES}, got {self.tau_policy!r}")
        sched = self.alpha_schedule
        if isinstance(sched, AdaptiveAlpha):
            _check_alpha(sched.base)
        elif isinstance(sched, (int, float)):
            _check_alpha(sched)
        else:
            sched = tuple(float(a) for a in sched)
            for a in sched:
                _check_alpha(a)
            if len(sched) < self.iterations:
                raise ValueError(
                    f"alpha schedule has {len(sched)} entries for {self.iterations} iterations"
                )
            object.__setattr__(self, "alpha_schedule", sched)

    def with_alpha(self, schedule: AlphaSchedule) -> "RestorationConfig":
        return replace(self, alpha_schedule=schedule)

    @property
    def alpha_label(self) -> str:
        sched = self.alpha_schedule
        if isinstance(sched, AdaptiveAlpha):
            return "adaptive"
        if isinstance(sched, tuple):
            return ";".join(f"{a:g}" for a in sched)
        return f"{sched:g}"


@dataclass(frozen=True)
class IterationRecord:
    alpha: float
    max_update: float
    mean: float
    metrics: Metrics | None = None


@dataclass
class RestorationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _bilateral(a: np.ndarray, sigma_s: float, sigma_r: float) -> np.ndarray:
    r = max(1, int(math.ceil(2.0 * sigma_s)))
    h, w = a.shape
    p = np.pad(a, r, mode="edge")
    # accumulate offsets from the centre so flat regions come back bit-exact
    num = np.zeros_like(a)
    den = np.zeros_like(a)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            nb = p[r + dy:r + dy + h, r + dx:r + dx + w]
            wt = np.exp(-(dx * dx + dy * dy) / (2 * sigma_s**2) - (nb - a) ** 2 / (2 * sigma_r**2))
            num += wt * (nb - a)
            den += wt
    return a + num / den


def smooth_neumann(f: DepthField, kernel: DiracKernel) -> DepthField:
    """Continuous convolution with edge-replicated margins, cropped back.

    The integral fields are zero-extended, which is only exact away from
    the border; padding by the kernel reach keeps every original pixel
    interior.
    """
    m = kernel.reach + 1
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            out = continuous_convolve(pad_neumann(f, m), kernel).data[m:-m, m:-m]
    except ValueError as exc:
        raise InstabilityError("smoothing overflowed") from exc
    return f.like(out)


def build_initial_state(raw: DepthField, builder: InitBuilder) -> DepthField:
    """Filter the raw depth into ``u0``; every filter replicates edges."""
    if builder.kind == "identity":
        return raw
    a = raw.data
    if builder.kind == "median":
        out = ndimage.median_filter(a, size=2 * int(builder.radius) + 1, mode="nearest")
    elif builder.kind == "gaussian":
        if builder.sigma == 0:
            return raw
        ref = a[0, 0]
        out = ref + ndimage.gaussian_filter(a - ref, builder.sigma, mode="nearest")
    else:
        out = _bilateral(a, builder.sigma, builder.sigma_r)
    return raw.like(out)


def alpha_for_iteration(
    config: RestorationConfig,
    iteration: int,
    prev_update_norm: float = 0.0,
    dynamic_range: float = 0.0,
) -> float:
    """Fractional order for ``iteration`` (0-based).

    ``dynamic_range`` (max - min of ``u0``) sets the adaptive rule's scale;
    when it is zero the rule returns its base order.
    """
    if not 0 <= iteration < config.iterations:
        raise ValueError(f"iteration {iteration} outside [0, {config.iterations})")
    sched = config.alpha_schedule
    if isinstance(sched, AdaptiveAlpha):
        scale = dynamic_range * sched.range_fraction
        boost = math.tanh(prev_update_norm / scale) if scale > 0 else 0.0
        return min(max(sched.base * (1.0 + sched.gain * boost), sched.lo), sched.hi)
    if isinstance(sched, tuple):
        return sched[iteration]
    return float(sched)


def run_restoration(
    raw: DepthField,
    config: RestorationConfig,
    gt: DepthField | None = None,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> tuple[DepthField, RestorationTrace]:
    """Refine ``raw`` for ``config.iterations`` explicit L1 steps.

    Returns the final field and a per-iteration trace. With
    ``nan_policy="clamp_and_stop"`` a non-finite update ends the run and
    the last finite state is returned; otherwise :class:`InstabilityError`
    is raised naming the failing iteration.
    """
    if gt is not None:
        _check_same_shape(raw, gt)
    u0 = build_initial_state(raw, config.init_builder)
    drange = float(u0.data.max() - u0.data.min())
    history: tuple[DepthField, ...] = ()
    trace = RestorationTrace()
    u = u0
    prev_update = 0.0

    for it in range(config.iterations):
        alpha = alpha_for_iteration(config, it, prev_update, drange)
        tau = config.tau
        if config.tau_policy == "stable":
            tau = min(tau, stable_tau(alpha))
        state = FractionalState.create(alpha, tau, history, config.history_window)
        try:
            div = diffusion_term(u, config.conductance)
            if config.smoothing_kernel is not None:
                div = smooth_neumann(div, config.smoothing_kernel)
            react = reaction_term(u0, u, config.lam)
            u_next = fractional_step(u, div, react, state)
            with np.errstate(over="ignore", invalid="ignore"):
                diff = u_next.data - u.data
            if not np.all(np.isfinite(diff)):
                raise InstabilityError("update overflowed")
        except InstabilityError as exc:
            if config.nan_policy == "error":
                raise InstabilityError(
                    f"non-finite depth at iteration {it} (alpha={alpha:g})", iteration=it
                ) from exc
            log.warning("non-finite depth at iteration %d; returning last finite state", it)
            trace.stopped_early = True
            break
        history = state.push(u.like(diff)).diff_history
        prev_update = float(np.max(np.abs(diff)))
        u = u_next
        metrics = compute_metrics(u, gt, thresholds) if gt is not None else None
        trace.records.append(IterationRecord(alpha, prev_update, float(u.data.mean()), metrics))

    return u, trace
