import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nestlab.capacity import (exclusion_csv, exclusion_diagnostic, exclusion_sequence, largest_gap,
                              measure_exclusion_data, proportion_capacity,
                              qs_capacity_lower_bound)
from nestlab.errors import EmptyInterval, OutOfRange
from nestlab.nest import return_domains

I = (-1.0, 1.0)
SMALL = {"mobius": 21, "power": 5, "center": 11}


def intervals(lo=-1.0, hi=1.0):
    pair = st.tuples(st.floats(lo, hi), st.floats(lo, hi)).map(lambda p: (min(p), max(p)))
    return st.lists(pair, max_size=5)


def test_proportion_examples():
    assert proportion_capacity([I], I).value == 1.0
    assert proportion_capacity([], I).value == 0.0
    for eps in (0.3, 0.01, 1e-5):
        assert proportion_capacity([(-eps, eps)], I).value == pytest.approx(eps, rel=1e-12)
    with pytest.raises(EmptyInterval):
        proportion_capacity([], (1.0, 1.0))


@given(intervals())
def test_proportion_oracle(X):
    # independent measure of the union on a fine grid
    grid = np.linspace(-1, 1, 200_001)
    hit = np.zeros_like(grid, dtype=bool)
    for a, b in X:
        hit |= (grid >= a) & (grid <= b)
    val = proportion_capacity(X, I).value
    assert 0.0 <= val <= 1.0
    assert val == pytest.approx(hit.mean(), abs=2e-5 * (1 + 2 * len(X)))


@given(intervals(), st.floats(1.0, 3.0))
def test_qs_bound_dominates_proportion(X, gamma):
    q = qs_capacity_lower_bound(X, I, gamma, SMALL)
    assert proportion_capacity(X, I).value <= q.value + 1e-15 <= 1.0 + 1e-15


@given(intervals(), intervals(), st.floats(1.0, 2.0))
def test_enlarging_X_monotone(X, Y, gamma):
    assert proportion_capacity(X + Y, I).value >= proportion_capacity(X, I).value - 1e-15
    assert (qs_capacity_lower_bound(X + Y, I, gamma, SMALL).value
            >= qs_capacity_lower_bound(X, I, gamma, SMALL).value - 1e-15)


def test_gamma_one_is_mobius_only():
    X = [(-0.1, 0.1)]
    q = qs_capacity_lower_bound(X, I, 1.0)
    assert q.witness["power_s"] == 1.0
    assert q.value >= proportion_capacity(X, I).value
    with pytest.raises(ValueError):
        qs_capacity_lower_bound(X, I, 0.5)


def test_mobius_witness_off_centre():
    X = [(0.8, 0.9)]
    q = qs_capacity_lower_bound(X, (0.0, 1.0), 1.0)
    assert q.value > 0.1 * 1.5
    k = q.witness["mobius_k"]
    assert k != 1.0
    # the witness reproduces the value: h(x) = x / (x + k (1 - x))
    h = lambda x: x / (x + k * (1 - x))
    assert q.value == pytest.approx(h(0.9) - h(0.8), rel=1e-12)


def test_holder_exponent_below_one():
    gamma = 2.0
    eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    vals = np.array([qs_capacity_lower_bound([(-e, e)], I, gamma).value for e in eps])
    kappa = np.polyfit(np.log(eps), np.log(vals), 1)[0]
    assert kappa < 1
    # centred power map with s = 1/gamma gives exactly eps**(1/gamma)
    assert kappa == pytest.approx(1 / gamma, abs=0.05)
    assert np.all(vals >= eps ** (1 / gamma) * (1 - 1e-12))


def test_exclusion_examples():
    s = exclusion_sequence([0.0] * 5, 0.3)
    assert s.alpha == (0.3,) * 6
    assert exclusion_sequence([0.25], 0.5).alpha[-1] == 0.625
    eps = [2.0 ** -k for k in range(3, 40)]
    s = exclusion_sequence(eps, 0.2)
    direct = 1 - 0.8 * math.prod(1 - e for e in eps)
    assert abs(s.alpha[-1] - direct) < 1e-12
    assert abs(s.closed_form() - direct) < 1e-12
    with pytest.raises(OutOfRange):
        exclusion_sequence([1.0], 0.2)
    with pytest.raises(OutOfRange):
        exclusion_sequence([0.1], 1.0)


@given(st.lists(st.floats(0.0, 0.999), max_size=40), st.floats(0.0, 0.999))
def test_exclusion_sequence_properties(eps, a2):
    s = exclusion_sequence(eps, a2)
    assert all(b >= a for a, b in zip(s.alpha, s.alpha[1:]))
    assert s.alpha[-1] < 1 or any(e > 0.99 for e in eps) or a2 > 0.99
    prod = 1.0
    for e in eps:
        prod *= 1 - e
    assert abs(s.alpha[-1] - (1 - (1 - a2) * prod)) < 1e-12


def test_measured_exclusion(nest19):
    rows = measure_exclusion_data(nest19, gamma=2.0, budget=SMALL)
    assert [r.level for r in rows] == [2, 3, 4][:len(rows)] and len(rows) >= 2
    for r in rows:
        assert 0 < r.eps < 1
        assert 0 < r.alpha < 1
        assert r.eps_qs >= r.eps
        assert 0 <= r.unresolved < 1
    text = exclusion_csv(rows)
    assert text.splitlines()[0].startswith("level,eps,alpha,bound")
    assert len(text.splitlines()) == len(rows) + 1


def test_gap_persistence(nest19):
    # pruned domains each lie below the floor, so the enumerated cover leaves gaps
    n = 3
    doms = return_domains(nest19, n, width_floor=1e-3)
    lv = nest19.level(n)
    gap = float(largest_gap(doms, (lv.left, lv.right)) / lv.width)
    rows = measure_exclusion_data(nest19, levels=[n])
    assert rows[0].alpha < 1
    assert rows[0].gap == pytest.approx(gap)
    assert gap > 0


def test_eps_without_alpha(nest19):
    rows = measure_exclusion_data(nest19, alpha=False)
    assert all(math.isnan(r.alpha) for r in rows)
    assert all(0 < r.eps < 1 for r in rows)


def test_smoothing_affine_invariant(nest19):
    plain = measure_exclusion_data(nest19, alpha=False)
    affine = measure_exclusion_data(nest19, alpha=False, smoothing=lambda x: 3 * x + 1)
    assert [r.eps for r in affine] == pytest.approx([r.eps for r in plain], rel=1e-12)
    assert all(r.kind == "proportion-smoothed" for r in affine)
    # a genuinely nonlinear diffeomorphism moves the proportions but keeps them in (0, 1)
    bent = measure_exclusion_data(nest19, alpha=False, smoothing=lambda x: x + x ** 3 / 10)
    assert all(0 < r.eps < 1 for r in bent)
    assert [r.eps for r in bent] != pytest.approx([r.eps for r in plain], rel=1e-6)


def test_exclusion_diagnostic(nest19):
    rows = measure_exclusion_data(nest19, gamma=None)
    diag = exclusion_diagnostic(rows)
    assert [d[0] for d in diag] == [r.level for r in rows]
    # the first row seeds the recursion, so it meets its own bound exactly
    assert diag[0][1] == diag[0][2] and diag[0][3]
    assert all(b2 >= b1 for (_, _, b1, _), (_, _, b2, _) in zip(diag, diag[1:]))
    assert exclusion_diagnostic(measure_exclusion_data(nest19, alpha=False)) == []
