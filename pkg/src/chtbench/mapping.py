"""Difference divisions and ranks, the theta transform and the (y, z) pair mapping.

A pair of evaluated solutions maps to a point ``(y, z)``: ``y`` is the objective
difference and ``z`` the difference of theta values, where theta sends every feasible
solution to ``-g_max`` so the four feasibility classes of a pair land in disjoint
``z`` bands. Each axis is cut into signed rank intervals; the composite rank
``chi + lambda`` and the line ``z = -e * y`` decide the comparison.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from chtbench.problem import Evaluated


@dataclass(frozen=True)
class Division:
    """Thresholds ``0 < q_1 < ... < q_alpha < bound`` cutting ``[-bound, bound]`` into rank intervals."""

    thresholds: tuple[float, ...]
    bound: float

    def __post_init__(self):
        qs = tuple(float(q) for q in self.thresholds)
        object.__setattr__(self, "thresholds", qs)
        if not self.bound > 0:
            raise ValueError("division bound must be positive")
        prev = 0.0
        for q in qs:
            if not prev < q:
                raise ValueError(f"thresholds must be strictly increasing and positive: {qs}")
            prev = q
        if qs and not qs[-1] < self.bound:
            raise ValueError(f"largest threshold {qs[-1]} must stay below bound {self.bound}")

    @property
    def alpha(self) -> int:
        return len(self.thresholds)


def rank_of(d: Division, value: float) -> int:
    """Signed difference rank of ``value``.

    Positive side intervals are ``(0, q_1], (q_1, q_2], ..., (q_alpha, b]``; the negative
    side mirrors them. Values beyond ``b`` saturate at ``+-(alpha + 1)``.
    """
    if value == 0:
        return 0
    if value > 0:
        return bisect.bisect_left(d.thresholds, value) + 1
    return -(bisect.bisect_left(d.thresholds, -value) + 1)


def ranks(d: Division, values: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rank_of`."""
    values = np.asarray(values, dtype=float)
    mag = np.searchsorted(np.asarray(d.thresholds, dtype=float), np.abs(values), side="left") + 1
    return (np.sign(values) * mag).astype(np.int64)


@dataclass(frozen=True)
class QpcContext:
    """Scales and parameters of the quantitative pairwise comparison.

    ``f_range`` and ``g_max`` are the (possibly estimated) objective range and maximum
    violation. ``etas`` (length alpha) cut both axes; the violation axis gets one more
    threshold at ``xi * g_max``, so beta = alpha + 1 always holds.
    """

    f_range: float
    g_max: float
    xi: float = 1.0
    etas: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        if not self.f_range > 0 or not self.g_max > 0:
            raise ValueError("f_range and g_max must be positive")
        if not 0 < self.xi <= 1:
            raise ValueError(f"xi must lie in (0, 1], got {self.xi}")
        prev = 0.0
        for eta in self.etas:
            if not prev < eta < 1:
                raise ValueError(f"etas must be strictly increasing inside (0, 1): {self.etas}")
            prev = eta

    @property
    def alpha(self) -> int:
        return len(self.etas)

    @property
    def beta(self) -> int:
        return self.alpha + 1

    def y_division(self) -> Division:
        return Division(tuple(eta * self.f_range for eta in self.etas), self.f_range)

    def z_division(self) -> Division:
        q = tuple(eta * self.xi * self.g_max for eta in self.etas) + (self.xi * self.g_max,)
        return Division(q, 2.0 * self.g_max)

    def scaled(self, c: float) -> "QpcContext":
        return QpcContext(c * self.f_range, c * self.g_max, self.xi, self.etas)


def theta(e: Evaluated, g_max: float) -> float:
    return -g_max if e.viol == 0 else e.viol


def diff_pair(e1: Evaluated, e2: Evaluated, ctx: QpcContext) -> tuple[float, float]:
    return e1.f - e2.f, theta(e1, ctx.g_max) - theta(e2, ctx.g_max)


def composite_rank(chi: int, lam: int) -> int:
    return chi + lam


def general_line_slope(alpha: int, beta: int, f_range: float, g_max: float,
                       q_alpha_y: float | None = None, q_beta_z: float | None = None) -> float:
    """Slope magnitude ``e`` of the equivalence line for any (alpha, beta) configuration."""
    if alpha > beta:
        return 2.0 * g_max / q_alpha_y
    if alpha == beta:
        return 2.0 * g_max / f_range
    return q_beta_z / f_range


def line_slope(ctx: QpcContext) -> float:
    """``e = q_beta^z / f_range = xi * g_max / f_range`` (beta = alpha + 1)."""
    return ctx.xi * ctx.g_max / ctx.f_range


def relaxed_line_slope(ctx: QpcContext) -> float:
    """Slope of the line induced by setting values ``ctx.f_range``, ``ctx.g_max``.

    Same expression as :func:`line_slope`; the distinction is which scales the caller
    passes in (true ones for the equivalence line, estimates for its relaxed twin).
    """
    return ctx.xi * ctx.g_max / ctx.f_range
