"""Simplified differential evolution (rand/1 with bin or exp crossover) driven by any CHT.

Generations are synchronous: all trials of a generation are built from the population
at generation start, evaluated, then each one competes with its own target. For the
quantitative technique the scale estimates and xi are frozen once per generation, so
every comparison in a generation sees one ``(f_range, g_max, xi)`` triple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from chtbench.cht import (CompareOutcome, ConfigError, PenaltyParams, XiSchedule, make_policy,
                          stochastic_rank, xi_at)
from chtbench.mapping import QpcContext
from chtbench.problem import Cop, Evaluated, evaluate

SUCCESS_TOL = 1e-4
CHT_KINDS = ("qpc", "frules", "eps", "penalty", "sr")
XOVER_KINDS = ("bin", "exp")


@dataclass(frozen=True)
class DeParams:
    pop_size: int = 40
    scale_factor: float = 0.7
    crossover_rate: float = 0.9
    crossover_kind: str = "exp"
    max_fes: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 4:
            raise ConfigError("pop_size must be at least 4 for rand/1")
        if not 0 < self.scale_factor < 2:
            raise ConfigError("scale_factor must lie in (0, 2)")
        if not 0 <= self.crossover_rate <= 1:
            raise ConfigError("crossover_rate must lie in [0, 1]")
        if self.crossover_kind not in XOVER_KINDS:
            raise ConfigError(f"crossover_kind must be one of {XOVER_KINDS}")
        if self.max_fes < 1:
            raise ConfigError("max_fes must be positive")


@dataclass(frozen=True)
class ChtConfig:
    kind: str = "qpc"
    xi_max: float = 1.0
    xi_min: float = 0.0
    p: float = 5.0
    eps: float = 0.0
    penalty_r: float = 1.0
    sr_pf: float = 0.45

    def __post_init__(self):
        if self.kind not in CHT_KINDS:
            raise ConfigError(f"cht must be one of {CHT_KINDS}, got {self.kind!r}")
        if self.eps < 0 or self.penalty_r < 0:
            raise ConfigError("eps and penalty_r must be nonnegative")
        if not 0 <= self.sr_pf <= 1:
            raise ConfigError("sr_pf must lie in [0, 1]")
        XiSchedule(self.xi_max, self.xi_min, self.p, 1)


class ScaleTracker:
    """Running objective extremes and maximum violation over every evaluation of a run."""

    def __init__(self):
        self.f_min_seen = math.inf
        self.f_max_seen = -math.inf
        self.viol_max_seen = 0.0
        self.snapshot = (1.0, 1.0)

    def update(self, e: Evaluated):
        if e.f < self.f_min_seen:
            self.f_min_seen = e.f
        if e.f > self.f_max_seen:
            self.f_max_seen = e.f
        if e.viol > self.viol_max_seen:
            self.viol_max_seen = e.viol

    def freeze(self) -> tuple[float, float]:
        # degenerate scales fall back to 1
        f_range = self.f_max_seen - self.f_min_seen
        if not f_range > 0:
            f_range = 1.0
        g_max = self.viol_max_seen if self.viol_max_seen > 0 else 1.0
        self.snapshot = (f_range, g_max)
        return self.snapshot


def repair(v: np.ndarray, target: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Midpoint reflection: an out-of-box coordinate moves halfway from the target to the bound."""
    v = np.where(v < lower, (target + lower) / 2.0, v)
    return np.where(v > upper, (target + upper) / 2.0, v)


def _distinct_others(rng: np.random.Generator, n: int, target_idx: int) -> np.ndarray:
    picks = rng.choice(n - 1, size=3, replace=False)
    return picks + (picks >= target_idx)


def mutate_rand1(pop: np.ndarray, target_idx: int, F: float, rng: np.random.Generator,
                 lower: np.ndarray | None = None, upper: np.ndarray | None = None) -> np.ndarray:
    pop = np.asarray(pop, dtype=float)
    if len(pop) < 4:
        raise ConfigError("rand/1 needs at least 4 individuals")
    r1, r2, r3 = _distinct_others(rng, len(pop), target_idx)
    v = pop[r1] + F * (pop[r2] - pop[r3])
    if lower is not None and upper is not None:
        v = repair(v, pop[target_idx], lower, upper)
    return v


def _exp_mask(k: int, start: int, u: np.ndarray, CR: float) -> np.ndarray:
    # block length: 1 plus the run of leading draws below CR, capped at k
    length = 1
    while length < k and u[length] < CR:
        length += 1
    mask = np.zeros(k, dtype=bool)
    mask[(start + np.arange(length)) % k] = True
    return mask


def crossover(target: np.ndarray, mutant: np.ndarray, CR: float, kind: str,
              rng: np.random.Generator) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    mutant = np.asarray(mutant, dtype=float)
    if target.shape != mutant.shape:
        raise ValueError("target and mutant lengths differ")
    k = len(target)
    start = int(rng.integers(k))
    u = rng.random(k)
    if kind == "bin":
        mask = u < CR
        mask[start] = True
    elif kind == "exp":
        mask = _exp_mask(k, start, u, CR)
    else:
        raise ConfigError(f"unknown crossover kind {kind!r}")
    return np.where(mask, mutant, target)


def _generation_trials(pop: np.ndarray, F: float, CR: float, kind: str, rng: np.random.Generator,
                       lower: np.ndarray, upper: np.ndarray, count: int) -> np.ndarray:
    """Trials for targets ``0 .. count-1``, drawing all randomness in a few batched calls."""
    n, k = pop.shape
    picks = np.argsort(rng.random((count, n - 1)), axis=1)[:, :3]
    picks = picks + (picks >= np.arange(count)[:, None])
    v = pop[picks[:, 0]] + F * (pop[picks[:, 1]] - pop[picks[:, 2]])
    v = repair(v, pop[:count], lower, upper)
    starts = rng.integers(k, size=count)
    u = rng.random((count, k))
    if kind == "bin":
        mask = u < CR
        mask[np.arange(count), starts] = True
    else:
        below = u[:, 1:] < CR
        lengths = 1 + np.cumprod(below, axis=1).sum(axis=1)
        offs = (np.arange(k)[None, :] - starts[:, None]) % k
        mask = offs < lengths[:, None]
    return np.where(mask, v, pop[:count])


def select(incumbent: Evaluated, trial: Evaluated, policy) -> Evaluated:
    """Keep the trial when it is at least as good as the incumbent under ``policy``."""
    if hasattr(policy, "fitness"):
        return trial if policy.fitness(trial) >= policy.fitness(incumbent) else incumbent
    outcome = policy.compare(trial, incumbent)
    if outcome is CompareOutcome.BETTER or outcome is CompareOutcome.EQUIVALENT:
        return trial
    return incumbent


@dataclass(frozen=True)
class TracePoint:
    fes: int
    best_f: float | None
    best_viol: float


@dataclass
class RunResult:
    best: Evaluated
    best_feasible: Evaluated | None
    fes: int
    min_fes: int | None
    trace: list[TracePoint] = field(default_factory=list)
    population: list[Evaluated] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.best_feasible is not None

    @property
    def success(self) -> bool:
        return self.min_fes is not None


class _Book:
    """FES counter, scale tracker and best-so-far records for one run."""

    def __init__(self, cop: Cop):
        self.cop = cop
        self.fes = 0
        self.scales = ScaleTracker()
        self.best_feasible: Evaluated | None = None
        self.least_violated: Evaluated | None = None
        self.min_fes: int | None = None
        target = cop.best_known_f
        self.success_level = None if target is None else target + SUCCESS_TOL

    def evaluate(self, x) -> Evaluated:
        e = evaluate(self.cop, x)
        self.fes += 1
        self.scales.update(e)
        if self.least_violated is None or e.viol < self.least_violated.viol:
            self.least_violated = e
        if e.viol == 0:
            if self.best_feasible is None or e.f < self.best_feasible.f:
                self.best_feasible = e
            if self.min_fes is None and self.success_level is not None and e.f <= self.success_level:
                self.min_fes = self.fes
        return e

    def trace_point(self) -> TracePoint:
        bf = None if self.best_feasible is None else self.best_feasible.f
        return TracePoint(self.fes, bf, self.least_violated.viol)


def _policy_for(cht: ChtConfig, cop: Cop, scales: tuple[float, float], xi: float):
    if cht.kind == "qpc":
        return make_policy("qpc", ctx=QpcContext(scales[0], scales[1], xi))
    if cht.kind == "penalty":
        return make_policy("penalty", penalty=PenaltyParams.shared(cht.penalty_r, cop.n_constraints))
    return make_policy(cht.kind, eps=cht.eps)


def run(cop: Cop, de: DeParams, cht: ChtConfig | None = None, observer=None) -> RunResult:
    """One seeded DE run until the FES budget is spent.

    ``observer(t, population, scales, xi)`` is called after every generation, if given.
    """
    cht = cht or ChtConfig()
    np_ = de.pop_size
    if de.max_fes < np_:
        raise ConfigError(f"max_fes ({de.max_fes}) is smaller than the population ({np_})")
    rng = np.random.default_rng(de.seed)
    book = _Book(cop)
    lower, upper = cop.lower_bounds, cop.upper_bounds

    pop = [book.evaluate(x) for x in cop.sample(rng, np_)]
    trace = [book.trace_point()]
    # t counts offspring generations; a partial last generation still reaches t_max
    schedule = XiSchedule(cht.xi_max, cht.xi_min, cht.p, max((de.max_fes - np_) / np_, 1.0))
    t = 0
    while book.fes < de.max_fes:
        t += 1
        count = min(np_, de.max_fes - book.fes)
        scales = book.scales.freeze()
        xi = xi_at(schedule, t)
        xs = np.array([e.x for e in pop])
        trials_x = _generation_trials(xs, de.scale_factor, de.crossover_rate, de.crossover_kind,
                                      rng, lower, upper, count)
        trials = [book.evaluate(x) for x in trials_x]
        if cht.kind == "sr":
            merged = stochastic_rank(pop + trials, len(pop) + len(trials), cht.sr_pf, rng)
            pop = merged[:np_]
        else:
            policy = _policy_for(cht, cop, scales, xi)
            for i, trial in enumerate(trials):
                pop[i] = select(pop[i], trial, policy)
        trace.append(book.trace_point())
        if observer is not None:
            observer(t, list(pop), scales, xi)

    best = book.best_feasible if book.best_feasible is not None else book.least_violated
    return RunResult(best, book.best_feasible, book.fes, book.min_fes, trace, pop)

