"""Constraint-handling techniques.

Two interfaces are used by the optimizer:

* comparators expose ``compare(e1, e2) -> CompareOutcome`` (``e1`` relative to ``e2``);
* evaluators expose ``fitness(e) -> float`` where larger is better.

Stochastic ranking is a whole-population procedure and lives in :func:`stochastic_rank`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from chtbench.mapping import QpcContext, composite_rank, diff_pair, line_slope, rank_of, ranks, theta
from chtbench.problem import Evaluated

XI_FLOOR = 1e-8


class ConfigError(ValueError):
    pass


class DomainError(ValueError):
    pass


class CompareOutcome(enum.Enum):
    BETTER = "better"
    WORSE = "worse"
    EQUIVALENT = "equivalent"
    NO_PREFERENCE = "no_preference"

    def swapped(self) -> "CompareOutcome":
        if self is CompareOutcome.BETTER:
            return CompareOutcome.WORSE
        if self is CompareOutcome.WORSE:
            return CompareOutcome.BETTER
        return self


def _by_smaller(a: float, b: float) -> CompareOutcome:
    if a < b:
        return CompareOutcome.BETTER
    if a > b:
        return CompareOutcome.WORSE
    return CompareOutcome.NO_PREFERENCE


# -- penalty ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltyParams:
    coefficients: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(r) for r in self.coefficients))
        if any(r < 0 for r in self.coefficients):
            raise ConfigError("penalty coefficients must be nonnegative")

    @classmethod
    def shared(cls, r: float, n_constraints: int) -> "PenaltyParams":
        return cls((r,) * n_constraints)


def penalty_fitness(e: Evaluated, params: PenaltyParams, per_constraint_viol: Sequence[float]) -> float:
    if len(params.coefficients) != len(per_constraint_viol):
        raise ConfigError(f"{len(params.coefficients)} penalty coefficients for "
                          f"{len(per_constraint_viol)} constraints")
    return -(e.f + sum(r * v for r, v in zip(params.coefficients, per_constraint_viol)))


class PenaltyEvaluator:
    def __init__(self, params: PenaltyParams):
        self.params = params

    def fitness(self, e: Evaluated) -> float:
        return penalty_fitness(e, self.params, e.violations)


# -- feasibility rules and epsilon level -----------------------------------------------

def feasibility_rules_compare(e1: Evaluated, e2: Evaluated) -> CompareOutcome:
    feas1, feas2 = e1.viol == 0, e2.viol == 0
    if feas1 and feas2:
        return _by_smaller(e1.f, e2.f)
    if feas1:
        return CompareOutcome.BETTER
    if feas2:
        return CompareOutcome.WORSE
    return _by_smaller(e1.viol, e2.viol)


def eps_level_compare(e1: Evaluated, e2: Evaluated, eps: float) -> CompareOutcome:
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    in1, in2 = e1.viol <= eps, e2.viol <= eps
    if in1 and in2:
        return _by_smaller(e1.f, e2.f)
    if in1:
        return CompareOutcome.BETTER
    if in2:
        return CompareOutcome.WORSE
    if e1.viol == e2.viol:
        return _by_smaller(e1.f, e2.f)
    return _by_smaller(e1.viol, e2.viol)


class FeasibilityRules:
    def compare(self, e1: Evaluated, e2: Evaluated) -> CompareOutcome:
        return feasibility_rules_compare(e1, e2)


class EpsilonLevel:
    def __init__(self, eps: float = 0.0):
        if eps < 0:
            raise ConfigError("eps must be nonnegative")
        self.eps = eps

    def compare(self, e1: Evaluated, e2: Evaluated) -> CompareOutcome:
        return eps_level_compare(e1, e2, self.eps)


# -- stochastic ranking ----------------------------------------------------------------

def stochastic_rank(pop: Sequence[Evaluated], sweeps: int, pf: float,
                    rng: np.random.Generator) -> list[Evaluated]:
    """Bubble-sort-like stochastic ranking; best first.

    Each adjacent comparison draws ``u``; when ``u < pf`` or both are feasible the pair
    is ordered by objective, otherwise by violation.
    """
    if not 0 <= pf <= 1:
        raise ConfigError("pf must lie in [0, 1]")
    if sweeps < 1:
        raise ConfigError("sweeps must be positive")
    out = list(pop)
    for _ in range(sweeps):
        for s in range(len(out) - 1):
            a, b = out[s], out[s + 1]
            u = rng.random()
            if u < pf or (a.viol == 0 and b.viol == 0):
                swap = a.f > b.f
            else:
                swap = a.viol > b.viol
            if swap:
                out[s], out[s + 1] = b, a
    return out


# -- quantitative pairwise comparison --------------------------------------------------

def qualitative_outcome(y: float, z: float, ctx: QpcContext) -> CompareOutcome:
    """Rank-based criterion on a mapped point ``(y, z)``."""
    phi = composite_rank(rank_of(ctx.y_division(), y), rank_of(ctx.z_division(), z))
    if phi > 0:
        return CompareOutcome.WORSE
    if phi < 0:
        return CompareOutcome.BETTER
    line = -line_slope(ctx) * y
    if z < line:
        return CompareOutcome.BETTER
    if z > line:
        return CompareOutcome.WORSE
    return CompareOutcome.EQUIVALENT


def qpc_qualitative_compare(e1: Evaluated, e2: Evaluated, ctx: QpcContext) -> CompareOutcome:
    y, z = diff_pair(e1, e2, ctx)
    return qualitative_outcome(y, z, ctx)


def qualitative_signs(y: np.ndarray, z: np.ndarray, ctx: QpcContext) -> np.ndarray:
    """Vectorized criterion: +1 better, -1 worse, 0 equivalent."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    phi = ranks(ctx.y_division(), y) + ranks(ctx.z_division(), z)
    on_line = np.sign(-line_slope(ctx) * y - z)
    return np.where(phi > 0, -1, np.where(phi < 0, 1, on_line)).astype(np.int64)


def qpc_pi(e: Evaluated, ctx: QpcContext) -> float:
    """``pi = -(f + sigma)``; larger is better."""
    indicator = 1.0 if e.violated_count > 0 else 0.0
    sigma = indicator * ctx.f_range + ctx.f_range / (ctx.xi * ctx.g_max) * theta(e, ctx.g_max)
    return -(e.f + sigma)


def pi_values(f: np.ndarray, viol: np.ndarray, ctx: QpcContext) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    viol = np.asarray(viol, dtype=float)
    infeasible = viol > 0
    th = np.where(infeasible, viol, -ctx.g_max)
    sigma = np.where(infeasible, 1.0, 0.0) * ctx.f_range + ctx.f_range / (ctx.xi * ctx.g_max) * th
    return -(f + sigma)


class QpcEvaluator:
    def __init__(self, ctx: QpcContext):
        self.ctx = ctx

    def fitness(self, e: Evaluated) -> float:
        return qpc_pi(e, self.ctx)


class QpcComparator:
    def __init__(self, ctx: QpcContext):
        self.ctx = ctx

    def compare(self, e1: Evaluated, e2: Evaluated) -> CompareOutcome:
        return qpc_qualitative_compare(e1, e2, self.ctx)


@dataclass(frozen=True)
class XiSchedule:
    xi_max: float = 1.0
    xi_min: float = 0.0
    p: float = 5.0
    t_max: float = 1

    def __post_init__(self):
        if not 0 < self.xi_max <= 1:
            raise ConfigError("xi_max must lie in (0, 1]")
        if not 0 <= self.xi_min <= self.xi_max:
            raise ConfigError("xi_min must lie in [0, xi_max]")
        if not self.p > 0:
            raise ConfigError("p must be positive")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")


def xi_at(schedule: XiSchedule, t: float) -> float:
    t = min(max(t, 0), schedule.t_max)
    if t == 0:
        return schedule.xi_max
    if t == schedule.t_max:
        return max(schedule.xi_min, XI_FLOOR)
    xi = schedule.xi_max - (schedule.xi_max - schedule.xi_min) * (t / schedule.t_max) ** schedule.p
    return max(xi, schedule.xi_min, XI_FLOOR)


def error_rate_mu(ctx_true: tuple[float, float], ctx_set: tuple[float, float], xi: float) -> float:
    """Fraction of the mapped rectangle lying between the exact and the relaxed line.

    ``ctx_true = (f_range, g_max)``, ``ctx_set = (f_hat, g_hat)`` with
    ``f_hat / g_hat >= f_range / g_max``.
    """
    f_true, g_true = ctx_true
    f_set, g_set = ctx_set
    if f_set * g_true < f_true * g_set * (1 - 1e-12):
        raise DomainError("setting ratio f_hat/g_hat must not be below the true ratio")
    mu = xi * f_true / (8.0 * g_true) * (g_true / f_true - g_set / f_set)
    return min(max(mu, 0.0), 1.0)


def make_policy(kind: str, ctx: QpcContext | None = None, eps: float = 0.0,
                penalty: PenaltyParams | None = None):
    """Build the selection policy for one generation."""
    if kind == "qpc":
        return QpcEvaluator(ctx)
    if kind == "qpc-pairwise":
        return QpcComparator(ctx)
    if kind == "frules":
        return FeasibilityRules()
    if kind == "eps":
        return EpsilonLevel(eps)
    if kind == "penalty":
        return PenaltyEvaluator(penalty)
    raise ConfigError(f"unknown constraint handling technique {kind!r}")

