"""Width/depth trade-off at a fixed hidden parameter budget ``(d*d + d) * L``."""
from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["WidthPlan", "exact_width", "width_for_depth", "activation_ratio"]


@dataclass(frozen=True)
class WidthPlan:
    N_w: int
    L: int
    d: int
    d_exact: float
    actual_params: int
    rho_actual: float  # L*d / actual_params
    rho_budget: float  # L*d / N_w


def _check(N_w, L):
    if L < 1:
        raise ValueError("depth must be >= 1")
    if N_w < 2 * L:
        raise ValueError(f"budget {N_w} is too small for depth {L} (need >= {2 * L})")


def exact_width(N_w: float, L: int) -> float:
    """Positive root of d^2 + d - N_w/L = 0."""
    _check(N_w, L)
    return (-1.0 + math.sqrt(1.0 + 4.0 * N_w / L)) / 2.0


def width_for_depth(N_w: int, L: int) -> WidthPlan:
    d_star = exact_width(N_w, L)
    d = max(1, int(math.floor(d_star + 0.5)))
    actual = (d * d + d) * L
    return WidthPlan(N_w=N_w, L=L, d=d, d_exact=d_star, actual_params=actual,
                     rho_actual=L * d / actual, rho_budget=L * d / N_w)


def activation_ratio(N_w: float, L: int) -> float:
    """Activations per parameter, L * d* / N_w, using the exact real width."""
    _check(N_w, L)
    return (-L + math.sqrt(L * L + 4.0 * L * N_w)) / (2.0 * N_w)
