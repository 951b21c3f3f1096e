"""Caputo L1 machinery: Gamma, L1 weights, memory sum and the refinement step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import DepthField, _check_same_shape

__all__ = [
    "InstabilityError",
    "gamma",
    "caputo_weights",
    "FractionalState",
    "memory_correction",
    "fractional_step",
    "stability_limit",
    "stable_tau",
]


class InstabilityError(FloatingPointError):
    """Raised when an update produces NaN or infinite depths."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


# Stirling series terms B_2k / (2k (2k-1)) for k = 1..7
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
_SHIFT_TO = 12.0  # series truncation error < 1e-16 beyond this argument


def gamma(x: float) -> float:
    """Gamma function for ``x > 0``.

    Positive integers return the exact factorial. Otherwise the argument is
    raised past 12 with the recurrence ``G(x) = G(x + 1) / x`` and the log
    is evaluated with Stirling's series.
    """
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"gamma is only defined here for finite x > 0, got {x}")
    if x == int(x) and x <= 171:
        return float(math.factorial(int(x) - 1))
    z = x
    denom = 1.0
    while z < _SHIFT_TO:
        denom *= z
        z += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    series = 0.0
    for c in reversed(_STIRLING):
        series = series * inv2 + c
    lg = (z - 0.5) * math.log(z) - z + 0.5 * math.log(2.0 * math.pi) + series * inv
    return math.exp(lg) / denom


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"fractional order alpha must lie in (0, 1], got {alpha}")
    return alpha


def caputo_weights(alpha: float, n: int) -> np.ndarray:
    """L1 weights ``a_k = (k+1)**(1-alpha) - k**(1-alpha)`` for k = 0..n."""
    alpha = _check_alpha(alpha)
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    k = np.arange(n + 1, dtype=np.float64)
    e = 1.0 - alpha
    if e == 0.0:
        w = np.zeros(n + 1)
        w[0] = 1.0
        return w
    w = (k + 1.0) ** e - k ** e
    w[0] = 1.0
    return w


def stability_limit(alpha: float, terms: int = 4096) -> float:
    """Largest coefficient ``m`` for which ``d_n = -m u_n - memory`` stays bounded.

    The worst mode alternates in sign, giving ``m* = 2 * sum_k (-1)**k a_k``.
    The alternating series converges slowly, so its partial sums are
    averaged repeatedly (Euler-type acceleration). Equals 2 at ``alpha = 1``.
    """
    alpha = _check_alpha(alpha)
    if alpha == 1.0:
        return 2.0
    a = caputo_weights(alpha, terms - 1)
    partial = np.cumsum(a * np.where(np.arange(terms) % 2 == 0, 1.0, -1.0))
    tail = partial[-64:]
    for _ in range(32):
        tail = 0.5 * (tail[1:] + tail[:-1])
    return 2.0 * float(tail[-1])


def stable_tau(alpha: float, g_max: float = 1.0) -> float:
    """Largest step scale keeping the 4-neighbour explicit L1 update bounded.

    The 5-point operator's most negative eigenvalue is ``-8 * g_max``, so the
    update coefficient is ``tau * S * 8 * g_max``. At ``alpha = 1`` this is
    the classical 1/4 for ``g_max = 1``.
    """
    s = gamma(2.0 - alpha)
    return stability_limit(alpha) / (8.0 * g_max * s)


@dataclass(frozen=True)
class FractionalState:
    """Order, L1 weights and the stored history of state differences.

    ``diff_history[k]`` holds ``u_{k+1} - u_k``. The state is immutable;
    :meth:`push` returns an extended copy. With ``window`` set, only the
    ``window`` most recent differences are kept, which drops memory terms
    with lag k > window.
    """

    alpha: float
    weights: np.ndarray
    s_factor: float
    diff_history: tuple[DepthField, ...] = ()
    tau: float = 0.25
    window: int | None = None

    @classmethod
    def create(
        cls,
        alpha: float,
        tau: float = 0.25,
        history: tuple[DepthField, ...] = (),
        window: int | None = None,
    ) -> "FractionalState":
        alpha = _check_alpha(alpha)
        tau = float(tau)
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {tau}")
        if window is not None and window < 1:
            raise ValueError(f"history window must be positive, got {window}")
        history = tuple(history)
        if window is not None:
            history = history[len(history) - window:] if len(history) > window else history
        if history:
            _check_same_shape(*history)
        weights = caputo_weights(alpha, len(history))
        s = gamma(2.0 - alpha) / weights[0] ** alpha
        return cls(alpha, weights, s, history, tau, window)

    def push(self, diff: DepthField) -> "FractionalState":
        """State extended by one difference field (weights grown to match)."""
        return FractionalState.create(
            self.alpha, self.tau, self.diff_history + (diff,), self.window
        )

    def with_alpha(self, alpha: float) -> "FractionalState":
        return FractionalState.create(alpha, self.tau, self.diff_history, self.window)


def memory_correction(state: FractionalState, like: DepthField | None = None) -> DepthField:
    """Weighted sum ``sum_{k=1..n} a_k * diff_history[n-k]``.

    An empty history gives the zero field shaped like ``like``.
    """
    hist = state.diff_history
    n = len(hist)
    if n == 0:
        if like is None:
            raise ValueError("empty history: pass `like` to fix the output shape")
        return like.like(np.zeros(like.shape))
    if len(state.weights) < n + 1:
        raise ValueError(
            f"{len(state.weights)} weights cannot cover a history of length {n}"
        )
    acc = np.zeros(hist[0].shape)
    for k in range(1, n + 1):
        a = state.weights[k]
        if a != 0.0:
            acc += a * hist[n - k].data
    return hist[0].like(acc)


def fractional_step(
    u_n: DepthField,
    div_term: DepthField,
    react_term: DepthField,
    state: FractionalState,
) -> DepthField:
    """One explicit L1 update.

    ``u_n + tau * S * (div_term + react_term) - memory``. Raises
    :class:`InstabilityError` if the result is not finite.
    """
    _check_same_shape(u_n, div_term, react_term, *state.diff_history)
    mem = memory_correction(state, like=u_n)
    with np.errstate(all="ignore"):
        out = u_n.data + (state.tau * state.s_factor) * (div_term.data + react_term.data)
        out = out - mem.data
    if not np.all(np.isfinite(out)):
        raise InstabilityError("fractional step produced non-finite depths")
    return u_n.like(out)
