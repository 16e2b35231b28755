"""Constrained optimization problems, violation bookkeeping and the benchmark registry.

Objective and constraint bodies are written with plain arithmetic on ``x[j]`` so the
same function accepts a single point of shape ``(k,)`` or a batch of shape ``(k, N)``;
the batch form drives the grid oracle that certifies the best-known values.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np

DEFAULT_DELTA = 1e-4

Func = Callable[[np.ndarray], float]


class ConstraintIndexError(IndexError):
    """Raised when a constraint index is outside ``0 .. n-1``."""


class NumericError(ArithmeticError):
    """A non-finite objective or constraint value.

    ``which`` is ``"objective"`` or the zero-based constraint index.
    """

    def __init__(self, problem: str, which, value: float):
        self.problem = problem
        self.which = which
        self.value = value
        super().__init__(f"{problem}: non-finite value {value!r} from {which}")


class UnknownProblemError(KeyError):
    pass


@dataclass(frozen=True)
class Cop:
    """min f(x) s.t. g_i(x) <= 0, h_i(x) = 0 (as |h_i| - delta <= 0), l <= x <= u."""

    name: str
    dimension: int
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    objective: Func
    inequality_constraints: tuple[Func, ...] = ()
    equality_constraints: tuple[Func, ...] = ()
    delta: float = DEFAULT_DELTA
    best_known_f: float | None = None

    def __post_init__(self):
        lo = np.asarray(self.lower_bounds, dtype=float)
        hi = np.asarray(self.upper_bounds, dtype=float)
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if lo.shape != (self.dimension,) or hi.shape != (self.dimension,):
            raise ValueError("bounds must have length equal to dimension")
        if not np.all(lo < hi):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower_bounds", lo)
        object.__setattr__(self, "upper_bounds", hi)
        object.__setattr__(self, "inequality_constraints", tuple(self.inequality_constraints))
        object.__setattr__(self, "equality_constraints", tuple(self.equality_constraints))

    @property
    def n_constraints(self) -> int:
        return len(self.inequality_constraints) + len(self.equality_constraints)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` points drawn uniformly from the box, shape ``(n, k)``."""
        return self.lower_bounds + rng.random((n, self.dimension)) * (self.upper_bounds - self.lower_bounds)


@dataclass(frozen=True, slots=True)
class Evaluated:
    """A decision vector with its cached objective, total violation and violated count."""

    x: np.ndarray
    f: float
    viol: float
    violated_count: int
    violations: tuple[float, ...] = field(default=(), compare=False)

    @property
    def feasible(self) -> bool:
        return self.viol == 0.0


def constraint_violation(cop: Cop, x, i: int) -> float:
    """Clipped violation of constraint ``i`` (inequalities first, then equalities)."""
    m = len(cop.inequality_constraints)
    if not 0 <= i < cop.n_constraints:
        raise ConstraintIndexError(f"{cop.name} has {cop.n_constraints} constraints, got index {i}")
    x = np.asarray(x, dtype=float)
    if i < m:
        return max(float(cop.inequality_constraints[i](x)), 0.0)
    return max(abs(float(cop.equality_constraints[i - m](x))) - cop.delta, 0.0)


def evaluate(cop: Cop, x) -> Evaluated:
    """Evaluate ``x`` once. One call is one function evaluation (FES)."""
    x = np.array(x, dtype=float)
    f = float(cop.objective(x))
    if not math.isfinite(f):
        raise NumericError(cop.name, "objective", f)
    vs = []
    i = 0
    for g in cop.inequality_constraints:
        gv = float(g(x))
        if not math.isfinite(gv):
            raise NumericError(cop.name, i, gv)
        vs.append(gv if gv > 0.0 else 0.0)
        i += 1
    for h in cop.equality_constraints:
        hv = float(h(x))
        if not math.isfinite(hv):
            raise NumericError(cop.name, i, hv)
        hv = abs(hv) - cop.delta
        vs.append(hv if hv > 0.0 else 0.0)
        i += 1
    viol = math.fsum(vs)
    count = sum(1 for v in vs if v > 0.0)
    x.setflags(write=False)
    return Evaluated(x, f, viol, count, tuple(vs))


def is_feasible(e: Evaluated) -> bool:
    return e.viol == 0.0


# -- benchmark definitions ----------------------------------------------------------

def _g06_f(x):
    return (x[0] - 10.0) ** 3 + (x[1] - 20.0) ** 3


def _g06_g1(x):
    return -((x[0] - 5.0) ** 2) - (x[1] - 5.0) ** 2 + 100.0


def _g06_g2(x):
    return (x[0] - 6.0) ** 2 + (x[1] - 5.0) ** 2 - 82.81


def _g08_f(x):
    return -(np.sin(2 * np.pi * x[0]) ** 3) * np.sin(2 * np.pi * x[1]) / (x[0] ** 3 * (x[0] + x[1]))


def _g08_g1(x):
    return x[0] ** 2 - x[1] + 1.0


def _g08_g2(x):
    return 1.0 - x[0] + (x[1] - 4.0) ** 2


def _g11_f(x):
    return x[0] ** 2 + (x[1] - 1.0) ** 2


def _g11_h1(x):
    return x[1] - x[0] ** 2


def _g12_f(x):
    return -(100.0 - (x[0] - 5.0) ** 2 - (x[1] - 5.0) ** 2 - (x[2] - 5.0) ** 2) / 100.0


def _nearest_lattice_sq(c):
    # min over p in 1..9 of (c - p)^2, for scalar or array c
    return (c - np.clip(np.rint(c), 1.0, 9.0)) ** 2


def _g12_g1(x):
    # The 9^3 lattice minimum separates per coordinate: the minimizing (p, q, r) picks
    # the nearest integer in 1..9 for each coordinate independently.
    return _nearest_lattice_sq(x[0]) + _nearest_lattice_sq(x[1]) + _nearest_lattice_sq(x[2]) - 0.0625


def g12_lattice_scan(x) -> float:
    """Reference form of the G12 constraint: explicit scan over all 729 lattice centres."""
    x = np.asarray(x, dtype=float)
    best = math.inf
    for p in range(1, 10):
        for q in range(1, 10):
            for r in range(1, 10):
                s = (x[0] - p) ** 2 + (x[1] - q) ** 2 + (x[2] - r) ** 2 - 0.0625
                best = min(best, s)
    return best


def _g24_f(x):
    return -x[0] - x[1]


def _g24_g1(x):
    return -2.0 * x[0] ** 4 + 8.0 * x[0] ** 3 - 8.0 * x[0] ** 2 + x[1] - 2.0


def _g24_g2(x):
    return -4.0 * x[0] ** 4 + 32.0 * x[0] ** 3 - 88.0 * x[0] ** 2 + 96.0 * x[0] + x[1] - 36.0


def _ring_f(x):
    return sum(x[j] for j in range(len(x)))


def _ring_g1(x):
    return sum(x[j] ** 2 for j in range(len(x))) - 1.0


def _eqline_f(x):
    return x[0] ** 2 + x[1] ** 2


def _eqline_h1(x):
    return x[0] + x[1] - 1.0


def _load_manifest() -> dict[str, dict]:
    text = resources.files("chtbench").joinpath("problems.json").read_text()
    return {entry["name"]: entry for entry in json.loads(text)}


MANIFEST = _load_manifest()


def _meta(name: str) -> tuple[float, float | None]:
    entry = MANIFEST[name]
    return entry["delta"], entry["best_known_f"]


def _build(name, lo, hi, f, gs=(), hs=()) -> Cop:
    delta, best = _meta(name)
    if MANIFEST[name]["dim"] != len(lo):
        raise ValueError(f"manifest dimension mismatch for {name}")
    return Cop(name, len(lo), np.array(lo, float), np.array(hi, float), f, gs, hs, delta, best)


def ring(dim: int) -> Cop:
    """RING(D): min sum(x) s.t. |x|^2 <= 1 on [-2, 2]^D. Optimum -sqrt(D) at x_j = -1/sqrt(D)."""
    if dim < 1:
        raise ValueError("RING dimension must be positive")
    name = f"RING{dim}"
    if name in MANIFEST:
        delta, best = _meta(name)
    else:
        delta, best = DEFAULT_DELTA, -math.sqrt(dim)
    return Cop(name, dim, np.full(dim, -2.0), np.full(dim, 2.0), _ring_f, (_ring_g1,), (), delta, best)


def registry() -> list[Cop]:
    return [
        _build("G06", [13.0, 0.0], [100.0, 100.0], _g06_f, (_g06_g1, _g06_g2)),
        _build("G08", [1e-6, 0.0], [10.0, 10.0], _g08_f, (_g08_g1, _g08_g2)),
        _build("G11", [-1.0, -1.0], [1.0, 1.0], _g11_f, (), (_g11_h1,)),
        _build("G12", [0.0, 0.0, 0.0], [10.0, 10.0, 10.0], _g12_f, (_g12_g1,)),
        _build("G24", [0.0, 0.0], [3.0, 4.0], _g24_f, (_g24_g1, _g24_g2)),
        ring(2),
        ring(5),
        _build("EQLINE", [-5.0, -5.0], [5.0, 5.0], _eqline_f, (), (_eqline_h1,)),
    ]


_RING_RE = re.compile(r"^ring\(?(\d+)\)?$")


def get_problem(name: str) -> Cop:
    """Look up a problem case-insensitively; ``ring7`` / ``RING(7)`` build RING of any dimension."""
    key = name.strip().lower()
    m = _RING_RE.match(key)
    if m:
        return ring(int(m.group(1)))
    for cop in registry():
        if cop.name.lower() == key:
            return cop
    raise UnknownProblemError(name)


# -- grid oracle ---------------------------------------------------------------------

def _batch_violation(cop: Cop, pts: np.ndarray) -> np.ndarray:
    """Total violation for a batch ``pts`` of shape (k, N)."""
    total = np.zeros(pts.shape[1])
    for g in cop.inequality_constraints:
        total += np.maximum(g(pts), 0.0)
    for h in cop.equality_constraints:
        total += np.maximum(np.abs(h(pts)) - cop.delta, 0.0)
    return total


def _best_on_grid(cop, axes, chunk=2_000_000):
    # axes: list of 1-D coordinate arrays for a 2-D problem
    xs, ys = axes
    rows = max(1, chunk // len(ys))
    best_f, best_x = math.inf, None
    for start in range(0, len(xs), rows):
        gx, gy = np.meshgrid(xs[start:start + rows], ys, indexing="ij")
        pts = np.vstack([gx.ravel(), gy.ravel()])
        with np.errstate(all="ignore"):
            f = cop.objective(pts)
            ok = (_batch_violation(cop, pts) == 0.0) & np.isfinite(f)
        if ok.any():
            idx = np.flatnonzero(ok)
            j = idx[np.argmin(f[idx])]
            if f[j] < best_f:
                best_f, best_x = float(f[j]), pts[:, j].copy()
    return best_f, best_x


def grid_minimum(cop: Cop, step: float = 1e-4, tol: float = 1e-11, window: int = 10,
                 ) -> tuple[float, np.ndarray]:
    """Best feasible objective of a 2-D problem by exhaustive grid search plus zoom refinement.

    The box is scanned at ``step``; then a (20*window+1)^2 grid with a ten times finer
    step, spanning ``window`` old steps either side, is laid around the incumbent, repeatedly, until the step drops below ``tol``.
    Each zoom only ever keeps feasible grid points, so the value approaches the feasible
    optimum from above.
    """
    if cop.dimension != 2:
        raise ValueError("grid oracle supports 2-D problems only")
    lo, hi = cop.lower_bounds, cop.upper_bounds
    axes = [np.append(np.arange(lo[j], hi[j], step), hi[j]) for j in range(2)]
    best_f, best_x = _best_on_grid(cop, axes)
    if best_x is None:
        raise ValueError(f"no feasible grid point for {cop.name} at step {step}")
    h = step
    while h > tol:
        span = window * h
        h /= 10.0
        axes = [np.clip(np.linspace(best_x[j] - span, best_x[j] + span, 2 * window * 10 + 1), lo[j], hi[j])
                for j in range(2)]
        f, x = _best_on_grid(cop, axes)
        if x is not None and f <= best_f:
            best_f, best_x = f, x
    return best_f, best_x


def manifest_entries(cops: Sequence[Cop]) -> list[dict]:
    return [{"name": c.name, "dim": c.dimension, "delta": c.delta, "best_known_f": c.best_known_f}
            for c in cops]
