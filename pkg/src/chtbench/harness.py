"""Repeated-trial runner, run statistics, verification oracles and the sorting benchmark."""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import os
import statistics
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from chtbench.cht import (CompareOutcome, QpcComparator, QpcEvaluator, error_rate_mu,
                          feasibility_rules_compare, pi_values, qualitative_signs)
from chtbench.mapping import QpcContext, line_slope, rank_of
from chtbench.optimizer import ChtConfig, DeParams, TracePoint, run
from chtbench.problem import Cop, evaluate, get_problem

RESULT_FIELDS = ["problem", "cht", "run_index", "seed", "best_f", "best_viol", "feasible", "success", "min_fes"]

DEFAULT_ETAS = ((0.25,), (0.5,), (0.75,), (0.3, 0.6))
DEFAULT_XIS = (1.0, 0.5, 0.1)


@dataclass(frozen=True)
class RunConfig:
    problem: str
    cht: ChtConfig = field(default_factory=ChtConfig)
    de: DeParams = field(default_factory=DeParams)
    runs: int = 25
    seed: int = 0


@dataclass(frozen=True)
class RunRecord:
    problem: str
    cht: str
    run_index: int
    seed: int
    best_f: float
    best_viol: float
    feasible: bool
    success: bool
    min_fes: int | None


@dataclass
class RunStats:
    records: list[RunRecord]
    fr: float
    sr: float | None
    best: float
    median: float
    worst: float
    mean: float
    std: float
    min_fes_mean: float | None
    min_fes_median: float | None

    def aggregate(self) -> dict:
        return {"fr": self.fr, "sr": self.sr, "best": self.best, "median": self.median,
                "worst": self.worst, "mean": self.mean, "std": self.std,
                "min_fes_mean": self.min_fes_mean}


def summarize(records: Sequence[RunRecord], has_target: bool = True) -> RunStats:
    """FR, SR, min-FES and the five best_f indicators.

    best_f statistics cover feasible runs only when some but not all runs are feasible,
    and every run otherwise. Values are sorted first so the result does not depend on
    run order.
    """
    if not records:
        raise ValueError("no run records")
    n = len(records)
    n_feasible = sum(r.feasible for r in records)
    fr = n_feasible / n
    sr = sum(r.success for r in records) / n if has_target else None
    pool = [r for r in records if r.feasible] if 0 < n_feasible < n else list(records)
    vals = sorted(r.best_f for r in pool)
    mean = math.fsum(vals) / len(vals)
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
    fes = sorted(r.min_fes for r in records if r.min_fes is not None)
    return RunStats(list(records), fr, sr, vals[0], statistics.median(vals), vals[-1], mean, std,
                    math.fsum(fes) / len(fes) if fes else None,
                    statistics.median(fes) if fes else None)


def _one_run(config: RunConfig, index: int, with_trace: bool = False):
    cop = get_problem(config.problem)
    seed = config.seed + index
    de = DeParams(config.de.pop_size, config.de.scale_factor, config.de.crossover_rate,
                  config.de.crossover_kind, config.de.max_fes, seed)
    result = run(cop, de, config.cht)
    record = RunRecord(cop.name, config.cht.kind, index, seed, result.best.f, result.best.viol,
                       result.feasible, result.success, result.min_fes)
    return (record, result.trace) if with_trace else record


def run_trials(config: RunConfig, n_runs: int | None = None, jobs: int = 1) -> RunStats:
    """Run seeds ``seed + 0 .. seed + n - 1``; results are folded in seed order."""
    n = config.runs if n_runs is None else n_runs
    if n < 1:
        raise ValueError("n_runs must be positive")
    cop = get_problem(config.problem)
    records = _map_runs(config, range(n), jobs)
    return summarize(records, has_target=cop.best_known_f is not None)


def _map_runs(config: RunConfig, indices: Iterable[int], jobs: int, with_trace: bool = False) -> list:
    indices = list(indices)
    if jobs <= 1 or len(indices) <= 1:
        return [_one_run(config, i, with_trace) for i in indices]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(functools.partial(_one_run, config, with_trace=with_trace), indices))


# -- output ---------------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in records:
        w.writerow([_cell(getattr(r, k)) for k in RESULT_FIELDS])
    return buf.getvalue()


def trace_csv(trace: Sequence[TracePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fes", "best_f", "best_viol"])
    for p in trace:
        w.writerow([p.fes, _cell(p.best_f), _cell(p.best_viol)])
    return buf.getvalue()


def aggregate_json(stats: RunStats) -> str:
    return json.dumps(stats.aggregate(), indent=2, sort_keys=True) + "\n"


def atomic_write(path: str | os.PathLike, text: str):
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- ordering oracles -------------------------------------------------------------------

def default_grid(etas=DEFAULT_ETAS, xis=DEFAULT_XIS) -> list[tuple[tuple[float, ...], float]]:
    return [(eta, xi) for eta in etas for xi in xis]


def _theta(viol: np.ndarray, g_max: float) -> np.ndarray:
    return np.where(viol > 0, viol, -g_max)


def _pi_signs(dpi: np.ndarray, pi1: np.ndarray, pi2: np.ndarray, rel_tol: float) -> np.ndarray:
    tol = rel_tol * (1.0 + np.abs(pi1) + np.abs(pi2))
    return np.where(dpi > tol, 1, np.where(dpi < -tol, -1, 0))


@dataclass
class SignReport:
    checked: int = 0
    mismatches: int = 0
    adjudicated: int = 0
    worst: dict | None = None
    per_problem: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.mismatches == 0


def sample_pairs(cop: Cop, n_pairs: int, rng: np.random.Generator):
    """Evaluate ``n_pairs`` independent uniform in-box pairs; returns (f1, v1, f2, v2, x1, x2)."""
    x1 = cop.sample(rng, n_pairs)
    x2 = cop.sample(rng, n_pairs)
    e1 = [evaluate(cop, x) for x in x1]
    e2 = [evaluate(cop, x) for x in x2]
    f1 = np.array([e.f for e in e1])
    v1 = np.array([e.viol for e in e1])
    f2 = np.array([e.f for e in e2])
    v2 = np.array([e.viol for e in e2])
    return f1, v1, f2, v2, x1, x2


def _exact_rank(thresholds, v: Fraction) -> int:
    if v == 0:
        return 0
    r = 1 + sum(1 for q in thresholds if q < abs(v))
    return r if v > 0 else -r


def exact_agreement(f1: float, v1: float, f2: float, v2: float, f_range: float, g_max: float,
                    xi: float, etas: Sequence[float], scale: float = 1.0) -> tuple[int, int]:
    """Criterion sign and sign of pi(x1) - pi(x2), both in exact rational arithmetic.

    Used for pairs whose float difference of pi falls inside the rounding band.
    """
    F, G, X, c = Fraction(f_range), Fraction(g_max), Fraction(xi), Fraction(scale)
    f1, v1, f2, v2 = map(Fraction, (f1, v1, f2, v2))

    def th(v, g):
        return v if v > 0 else -g

    y, z = f1 - f2, th(v1, G) - th(v2, G)
    qy = [Fraction(eta) * F for eta in etas]
    qz = [Fraction(eta) * X * G for eta in etas] + [X * G]
    phi = _exact_rank(qy, y) + _exact_rank(qz, z)
    if phi != 0:
        crit = -1 if phi > 0 else 1
    else:
        d = -(X * G / F) * y - z
        crit = (d > 0) - (d < 0)
    Fq, Gq = c * F, c * G

    def pi(f, v):
        ind = 1 if v > 0 else 0
        return -(f + ind * Fq + Fq / (X * Gq) * th(v, Gq))

    dpi = pi(f1, v1) - pi(f2, v2)
    return crit, (dpi > 0) - (dpi < 0)


def verify_sign_equivalence(problems: Sequence[Cop], n_pairs: int, grid=None, seed: int = 0,
                            scale: float = 1.0, rel_tol: float = 1e-9) -> SignReport:
    """Check that the sign of pi(x1) - pi(x2) reproduces the rank-based criterion.

    Scales are exact over each problem's sample. ``scale`` multiplies both scales for the
    quantitative side only (the ratio is kept), while the criterion keeps the exact ones.
    A pair whose |pi(x1) - pi(x2)| lies inside the band ``rel_tol * (1 + |pi1| + |pi2|)``
    cannot be told apart from the equivalence line in floating point; such pairs are
    settled by :func:`exact_agreement` and counted in ``adjudicated``.
    """
    grid = default_grid() if grid is None else grid
    report = SignReport()
    for k, cop in enumerate(problems):
        if n_pairs <= 0:
            report.per_problem[cop.name] = 0
            continue
        rng = np.random.default_rng([seed, k])
        f1, v1, f2, v2, x1, x2 = sample_pairs(cop, n_pairs, rng)
        fs = np.concatenate([f1, f2])
        f_range = float(fs.max() - fs.min())
        g_max = float(max(v1.max(), v2.max()))
        if not f_range > 0:
            f_range = 1.0
        if not g_max > 0:
            g_max = 1.0
        bad_here = 0
        for etas, xi in grid:
            ctx = QpcContext(f_range, g_max, xi, etas)
            ctx_q = ctx.scaled(scale) if scale != 1.0 else ctx
            y = f1 - f2
            z = _theta(v1, g_max) - _theta(v2, g_max)
            qual = qualitative_signs(y, z, ctx)
            p1 = pi_values(f1, v1, ctx_q)
            p2 = pi_values(f2, v2, ctx_q)
            quant = _pi_signs(p1 - p2, p1, p2, rel_tol)
            disagree = qual != quant
            in_band = disagree & (quant == 0) & (qual != 0)
            for i in np.flatnonzero(in_band):
                report.adjudicated += 1
                crit, sign = exact_agreement(f1[i], v1[i], f2[i], v2[i], f_range, g_max, xi, etas, scale)
                if crit == sign:
                    disagree[i] = False
            bad = np.flatnonzero(disagree)
            report.checked += n_pairs
            bad_here += len(bad)
            if len(bad) and report.worst is None:
                i = int(bad[np.argmax(np.abs((p1 - p2)[bad]))])
                chi, lam = rank_of(ctx.y_division(), y[i]), rank_of(ctx.z_division(), z[i])
                report.worst = {
                    "problem": cop.name, "x1": x1[i].tolist(), "x2": x2[i].tolist(),
                    "f_range": f_range, "g_max": g_max, "xi": xi, "etas": list(etas), "scale": scale,
                    "y": float(y[i]), "z": float(z[i]), "chi": chi, "lambda": lam, "phi": chi + lam,
                    "pi1": float(p1[i]), "pi2": float(p2[i]),
                    "criterion": int(qual[i]), "pi_sign": int(quant[i]),
                }
        report.mismatches += bad_here
        report.per_problem[cop.name] = bad_here
    return report


@dataclass(frozen=True)
class RelaxReport:
    n: int
    c: float
    xi: float
    empirical_rate: float
    mu: float
    bound: float
    disagreements: int
    outside_band: int

    @property
    def passed(self) -> bool:
        return self.outside_band == 0 and self.empirical_rate <= self.bound


def synthetic_pairs(n: int, f_range: float, g_max: float, rng: np.random.Generator):
    """Uniform points over the mapped rectangle, realised as (f, viol) pairs.

    The feasibility class of each pair follows from its z band: below ``-g_max`` the first
    solution is feasible, above ``g_max`` the second one is, otherwise both are infeasible.
    """
    y = rng.uniform(-f_range, f_range, n)
    z = rng.uniform(-2.0 * g_max, 2.0 * g_max, n)
    v1 = np.where(z < -g_max, 0.0, np.where(z > g_max, z - g_max, (g_max + z) / 2.0))
    v2 = np.where(z < -g_max, -g_max - z, np.where(z > g_max, 0.0, (g_max - z) / 2.0))
    # both-infeasible draws at the band edges would produce a zero violation
    ok = ((v1 > 0) | (z < -g_max)) & ((v2 > 0) | (z > g_max))
    f1, f2 = y[ok], np.zeros(int(ok.sum()))
    return f1, v1[ok], f2, v2[ok]


def verify_relaxation(n_points: int, c: float, xi: float, seed: int = 0, f_range: float = 1.0,
                      g_max: float = 1.0, rel_tol: float = 1e-9) -> RelaxReport:
    """Disagreement between pi under an inflated objective scale and the exact criterion."""
    if not c > 1:
        raise ValueError("inflation factor c must exceed 1")
    rng = np.random.default_rng(seed)
    f1, v1, f2, v2 = synthetic_pairs(n_points, f_range, g_max, rng)
    exact = QpcContext(f_range, g_max, xi)
    relaxed = QpcContext(c * f_range, g_max, xi)
    y = f1 - f2
    z = _theta(v1, g_max) - _theta(v2, g_max)
    qual = qualitative_signs(y, z, exact)
    p1, p2 = pi_values(f1, v1, relaxed), pi_values(f2, v2, relaxed)
    quant = _pi_signs(p1 - p2, p1, p2, rel_tol)
    bad = qual != quant
    e, e_hat = line_slope(exact), line_slope(relaxed)
    between = (z + e * y) * (z + e_hat * y) < 0
    n = len(y)
    mu = error_rate_mu((f_range, g_max), (c * f_range, g_max), xi)
    bound = mu + 3.0 * math.sqrt(mu * (1.0 - mu) / n)
    return RelaxReport(n, c, xi, float(bad.mean()), mu, bound, int(bad.sum()), int((bad & ~between).sum()))


# -- sorting cost ---------------------------------------------------------------------

@dataclass(frozen=True)
class SortRow:
    size: int
    eval_sort_time: float
    pairwise_sort_time: float
    eval_calls: int
    compare_calls: int
    same_order: bool


class _Counter:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, *args):
        self.calls += 1
        return self.fn(*args)


_CMP = {CompareOutcome.BETTER: -1, CompareOutcome.WORSE: 1,
        CompareOutcome.EQUIVALENT: 0, CompareOutcome.NO_PREFERENCE: 0}


def _comparator(kind: str, ctx: QpcContext):
    if kind == "qpc":
        return QpcComparator(ctx).compare
    if kind == "frules":
        return feasibility_rules_compare
    raise ValueError(f"unknown comparator {kind!r}")


def sort_benchmark(sizes: Sequence[int], repeats: int = 5, problem: str = "G24", seed: int = 0,
                   comparator: str = "qpc") -> list[SortRow]:
    """Time an evaluation-keyed sort against a comparison sort for each population size."""
    cop = get_problem(problem)
    rows = []
    for l in sizes:
        if not 2 <= l <= 100_000:
            raise ValueError("sizes must lie in [2, 100000]")
        rng = np.random.default_rng([seed, l])
        pop = [evaluate(cop, x) for x in cop.sample(rng, l)]
        fs = [e.f for e in pop]
        g_max = max(e.viol for e in pop) or 1.0
        ctx = QpcContext((max(fs) - min(fs)) or 1.0, g_max, 1.0)
        evaluator = QpcEvaluator(ctx)
        compare = _comparator(comparator, ctx)
        t_eval, t_pair = math.inf, math.inf
        for _ in range(max(1, repeats)):
            fit = _Counter(evaluator.fitness)
            t0 = time.perf_counter()
            keys = [fit(e) for e in pop]
            by_eval = sorted(range(l), key=keys.__getitem__, reverse=True)
            t_eval = min(t_eval, time.perf_counter() - t0)

            cmp = _Counter(lambda a, b: _CMP[compare(pop[a], pop[b])])
            t0 = time.perf_counter()
            by_pair = sorted(range(l), key=functools.cmp_to_key(cmp))
            t_pair = min(t_pair, time.perf_counter() - t0)
        same = [keys[i] for i in by_eval] == [keys[i] for i in by_pair]
        rows.append(SortRow(l, t_eval, t_pair, fit.calls, cmp.calls, same))
    return rows


def sortbench_csv(rows: Sequence[SortRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(asdict(rows[0]).keys()) if rows else [f.name for f in SortRow.__dataclass_fields__.values()]
    w.writerow(names)
    for r in rows:
        w.writerow([_cell(v) for v in asdict(r).values()])
    return buf.getvalue()


# -- xi sweep -------------------------------------------------------------------------

XI_SWEEP_VALUES = (1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-5)


def xi_sensitivity_sweep(problem: str, xi_values: Sequence[float] = XI_SWEEP_VALUES,
                         config: RunConfig | None = None, runs: int = 1, p: float = 5.0,
                         jobs: int = 1) -> dict[float, list[list[TracePoint]]]:
    """Per-xi convergence traces; xi is the schedule's starting value, p stays fixed."""
    base = config or RunConfig(problem)
    out = {}
    for xi in xi_values:
        if not xi > 0:
            raise ValueError("xi values must be positive")
        cht = ChtConfig("qpc", xi_max=xi, xi_min=0.0, p=p)
        cfg = RunConfig(problem, cht, base.de, runs, base.seed)
        out[xi] = [trace for _, trace in _map_runs(cfg, range(runs), jobs, with_trace=True)]
    return out


def median_trace(traces: Sequence[Sequence[TracePoint]]) -> list[TracePoint]:
    """Point-wise median across runs that share the same FES checkpoints."""
    out = []
    for points in zip(*traces):
        feas = [p.best_f for p in points if p.best_f is not None]
        out.append(TracePoint(points[0].fes, statistics.median(feas) if feas else None,
                              statistics.median(p.best_viol for p in points)))
    return out
