import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from chtbench.mapping import (Division, QpcContext, composite_rank, diff_pair, general_line_slope, line_slope,
                              rank_of, ranks, relaxed_line_slope, theta)
from chtbench.problem import Evaluated

X = np.zeros(1)


def ev(f, viol):
    return Evaluated(X, f, viol, int(viol > 0))


def test_rank_examples():
    d = Division((1.0,), 4.0)
    assert rank_of(d, 0.0) == 0
    assert rank_of(d, 0.5) == 1
    assert rank_of(d, -2.0) == -2
    assert rank_of(Division((), 4.0), 3.0) == 1


def test_rank_interval_ends():
    d = Division((1.0, 2.0), 4.0)
    # intervals are (0, q1], (q1, q2], (q2, b]
    assert rank_of(d, 1.0) == 1
    assert rank_of(d, 1.0000001) == 2
    assert rank_of(d, 2.0) == 2
    assert rank_of(d, 4.0) == 3
    assert rank_of(d, -1.0) == -1
    assert rank_of(d, 10.0) == 3


def test_division_validation():
    with pytest.raises(ValueError):
        Division((2.0, 1.0), 4.0)
    with pytest.raises(ValueError):
        Division((1.0,), 1.0)
    with pytest.raises(ValueError):
        Division((0.0,), 1.0)


divisions = st.lists(st.floats(1e-3, 10.0), max_size=4, unique=True).map(
    lambda qs: Division(tuple(sorted(qs)), 20.0))
values = st.floats(-30.0, 30.0, allow_nan=False)


@given(divisions, values)
def test_rank_antisymmetric(d, v):
    assert rank_of(d, -v) == -rank_of(d, v)


@given(divisions, values, values)
def test_rank_monotone(d, a, b):
    lo, hi = min(a, b), max(a, b)
    assert rank_of(d, lo) <= rank_of(d, hi)


@given(divisions, st.lists(values, min_size=1, max_size=30))
def test_vectorized_ranks_agree(d, vs):
    assert ranks(d, np.array(vs)).tolist() == [rank_of(d, v) for v in vs]


def test_theta_examples():
    assert theta(ev(0.0, 0.0), 10.0) == -10.0
    assert theta(ev(0.0, 3.0), 10.0) == 3.0
    assert theta(ev(0.0, 5.0), 5.0) == 5.0


def test_diff_pair_examples():
    ctx = QpcContext(1.0, 1.0)
    e = ev(0.2, 0.1)
    assert diff_pair(e, e, ctx) == (0.0, 0.0)
    y, z = diff_pair(ev(0.6, 0.3), ev(0.3, 0.1), ctx)
    assert y == pytest.approx(0.3) and z == pytest.approx(0.2)
    _, z = diff_pair(ev(0.0, 0.0), ev(0.0, 0.4), ctx)
    assert z == pytest.approx(-1.4)
    assert -2.0 <= z < -1.0


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0.1, 10))
def test_feasibility_classes_land_in_disjoint_bands(v1, v2, g_max):
    v1, v2 = min(v1, g_max), min(v2, g_max)
    # a violation below the spacing of floats near g_max is absorbed by the subtraction
    assume(all(v == 0 or v > 1e-12 * g_max for v in (v1, v2)))
    ctx = QpcContext(1.0, g_max)
    _, z = diff_pair(ev(0.0, v1), ev(0.0, v2), ctx)
    if v1 == 0 and v2 > 0:
        assert -2 * g_max <= z < -g_max
    elif v1 > 0 and v2 == 0:
        assert g_max < z <= 2 * g_max
    elif v1 > 0 and v2 > 0:
        assert -g_max < z < g_max
    else:
        assert z == 0


def test_composite_rank_examples():
    assert composite_rank(0, 0) == 0
    assert composite_rank(1, -1) == 0
    assert composite_rank(2, 1) == 3


def test_line_slope_examples():
    assert line_slope(QpcContext(1.0, 1.0, 1.0)) == 1.0
    assert line_slope(QpcContext(2.0, 1.0, 0.5)) == 0.25
    assert line_slope(QpcContext(1.0, 1.0, 1e-8)) == pytest.approx(1e-8)


def test_relaxed_line_slope_examples():
    ctx = QpcContext(3.0, 1.5, 0.7)
    assert relaxed_line_slope(ctx) == line_slope(ctx)
    assert relaxed_line_slope(QpcContext(6.0, 1.5, 0.7)) == pytest.approx(relaxed_line_slope(ctx) / 2)
    assert relaxed_line_slope(QpcContext(4.0, 2.0, 0.5)) == 0.25


def test_general_line_slope_branches():
    assert general_line_slope(2, 1, 1.0, 1.0, q_alpha_y=0.5) == 4.0
    assert general_line_slope(1, 1, 2.0, 1.0) == 1.0
    ctx = QpcContext(2.0, 3.0, 0.4, (0.3, 0.6))
    q_beta = ctx.z_division().thresholds[-1]
    assert general_line_slope(ctx.alpha, ctx.beta, 2.0, 3.0, q_beta_z=q_beta) == pytest.approx(line_slope(ctx))


def test_context_divisions():
    ctx = QpcContext(2.0, 4.0, 0.5, (0.25, 0.5))
    assert ctx.alpha == 2 and ctx.beta == 3
    assert ctx.y_division() == Division((0.5, 1.0), 2.0)
    assert ctx.z_division() == Division((0.5, 1.0, 2.0), 8.0)


def test_context_validation():
    for bad in [dict(f_range=0.0, g_max=1.0), dict(f_range=1.0, g_max=-1.0),
                dict(f_range=1.0, g_max=1.0, xi=0.0), dict(f_range=1.0, g_max=1.0, xi=1.5),
                dict(f_range=1.0, g_max=1.0, etas=(0.6, 0.3)), dict(f_range=1.0, g_max=1.0, etas=(1.0,))]:
        with pytest.raises(ValueError):
            QpcContext(**bad)
