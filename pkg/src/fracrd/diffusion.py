"""Perona-Malik diffusion and reaction terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import DepthField, _check_same_shape, _differences
from .fractional import InstabilityError

__all__ = [
    "DEFAULT_KAPPA",
    "MAD_SCALE",
    "ConductanceSpec",
    "conductance",
    "diffusion_term",
    "reaction_term",
    "estimate_kappa",
]

DEFAULT_KAPPA = 30.0  # mm
MAD_SCALE = 1.4826

VARIANTS = ("exponential", "rational", "constant")
_ALIASES = {"exp": "exponential", "const": "constant"}


@dataclass(frozen=True)
class ConductanceSpec:
    """Classical diffusivity ``g`` and its contrast parameter ``kappa`` (mm)."""

    variant: str = "rational"
    kappa: float = DEFAULT_KAPPA
    auto_kappa: bool = False

    def __post_init__(self):
        variant = _ALIASES.get(self.variant, self.variant)
        if variant not in VARIANTS:
            raise ValueError(f"unknown conductance variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "variant", variant)
        if not self.auto_kappa and not (self.kappa > 0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be a positive finite number, got {self.kappa}")


def _g(s: np.ndarray, variant: str, kappa: float) -> np.ndarray:
    if variant == "constant":
        return np.ones_like(s)
    r = (s / kappa) ** 2
    if variant == "exponential":
        return np.exp(-r)
    return 1.0 / (1.0 + r)


def conductance(s, spec: ConductanceSpec):
    """Evaluate ``g(s)`` for a scalar or array of non-negative magnitudes."""
    arr = np.asarray(s, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("conductance is defined for non-negative magnitudes only")
    out = _g(arr, spec.variant, spec.kappa)
    return float(out) if out.ndim == 0 else out


def _resolve_kappa(u: DepthField, spec: ConductanceSpec) -> float:
    if not spec.auto_kappa:
        return spec.kappa
    try:
        return estimate_kappa(u)
    except ValueError:
        # flat field: g only ever sees zero differences, any kappa works
        return spec.kappa if spec.kappa > 0 else DEFAULT_KAPPA


def diffusion_term(u: DepthField, spec: ConductanceSpec) -> DepthField:
    """4-neighbour divergence ``sum_d g(|D_d u|) * D_d u`` with Neumann edges."""
    kappa = _resolve_kappa(u, spec)
    out = np.zeros(u.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        for d in _differences(u.data):
            out += _g(np.abs(d), spec.variant, kappa) * d
    if not np.all(np.isfinite(out)):
        raise InstabilityError("diffusion term overflowed")
    return u.like(out)


def reaction_term(u0: DepthField, u_n: DepthField, lam: float) -> DepthField:
    """Fidelity pull ``lam * (u0 - u_n)``."""
    _check_same_shape(u0, u_n)
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return u_n.like(lam * (u0.data - u_n.data))


def estimate_kappa(u: DepthField) -> float:
    """Robust contrast scale: 1.4826 x median of the nonzero |differences|."""
    mags = np.concatenate([np.abs(d).ravel() for d in _differences(u.data)])
    mags = mags[mags != 0]
    if mags.size == 0:
        raise ValueError("field has no nonzero differences; kappa is undefined")
    return MAD_SCALE * float(np.median(mags))
