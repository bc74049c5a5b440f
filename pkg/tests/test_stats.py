import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import GOLDEN
from nestlab.errors import CriticalHit, NestlabError, PeriodicCritical
from nestlab.maps import Perturbed, RealQuadratic
from nestlab.nest import build_nest, detect_renormalization
from nestlab.stats import (Budget, Confidence, Verdict, ce_exponent, classify, critical_orbit,
                           recurrence_exponent, weak_regularity_deficit)

LN4 = math.log(4.0)


def test_orbit_chebyshev():
    y, c = critical_orbit(RealQuadratic(2.0), 5)
    assert c == 0.0 and list(y) == [1.0, -1.0, -1.0, -1.0, -1.0]


@pytest.mark.parametrize("N", [10**3, 10**4, 10**5])
def test_ce_chebyshev_converges(N):
    # every derivative along 1, -1, -1, ... has modulus 4
    err = abs(ce_exponent(RealQuadratic(2.0), N) - LN4)
    assert err < 1e-3 and err <= 10.0 / N


def test_ce_oracle_loop():
    fam = RealQuadratic(1.93)
    x, s, vals = 0.0, 0.0, []
    for n in range(1, 4001):
        x = fam.f(x)
        s += math.log(abs(fam.df(x)))
        vals.append(s / n)
    assert ce_exponent(fam, 4000) == pytest.approx(min(vals[1999:]), rel=1e-10)


@given(st.floats(1.51, 1.70))
def test_ce_negative_on_attracting_cycle(tau):
    assert ce_exponent(RealQuadratic(tau), 5000) < 0


def test_ce_superattracting_hits():
    with pytest.raises(CriticalHit):
        ce_exponent(RealQuadratic(GOLDEN), 1000)
    with pytest.raises(ValueError):
        ce_exponent(RealQuadratic(1.9), 10)


def test_recurrence_chebyshev():
    # |f^n(0)| = 1 for n >= 2, so every term vanishes
    assert recurrence_exponent(RealQuadratic(2.0), 10_000).value == 0.0


def test_recurrence_bounded_for_attracting_cycle():
    fam = RealQuadratic(1.6)
    small = recurrence_exponent(fam, 1_000)
    large = recurrence_exponent(fam, 100_000)
    assert large.value == small.value
    assert max(large.record_times) < 1_000
    y, _ = critical_orbit(fam, 100_000)
    tail = lambda N: np.max(-np.log(np.abs(y[N // 2:N])) / np.log(np.arange(N // 2 + 1, N + 1)))
    assert tail(100_000) < tail(1_000)


def test_recurrence_oracle_and_records():
    fam = RealQuadratic(1.87)
    r = recurrence_exponent(fam, 5000)
    y, _ = critical_orbit(fam, 5000)
    best = max(-math.log(abs(y[n - 1])) / math.log(n) for n in range(2, 5001))
    assert r.value == pytest.approx(best, rel=1e-12)
    assert list(r.record_values) == sorted(r.record_values)
    assert r.record_values[-1] == r.value


@given(st.floats(1.5, 2.0), st.integers(1000, 4000), st.integers(1, 4000))
def test_recurrence_running_max(tau, n1, extra):
    fam = RealQuadratic(tau)
    try:
        a = recurrence_exponent(fam, n1).value
        b = recurrence_exponent(fam, n1 + extra).value
    except PeriodicCritical:
        return
    assert b >= a


def test_recurrence_periodic():
    with pytest.raises(PeriodicCritical):
        recurrence_exponent(RealQuadratic(GOLDEN), 1000)


def test_deficit_chebyshev():
    assert weak_regularity_deficit(RealQuadratic(2.0), 0.1, 10_000) == 0.0


@given(st.floats(1.5, 2.0), st.lists(st.floats(1e-4, 1.0), min_size=2, max_size=8))
def test_deficit_monotone_in_delta(tau, deltas):
    fam = RealQuadratic(tau)
    deltas = np.sort(deltas)
    try:
        d = weak_regularity_deficit(fam, deltas, 2000)
    except CriticalHit:
        return
    assert np.all(np.diff(d) >= 0)
    y, _ = critical_orbit(fam, 2000)
    full = np.mean(np.abs(np.log(2 * tau * np.abs(y))))
    assert d[-1] <= full + 1e-12


def test_deficit_oracle():
    fam = RealQuadratic(1.95)
    y, _ = critical_orbit(fam, 3000)
    mask = np.abs(y) < 0.05
    expect = np.sum(np.abs(np.log(np.abs(fam.df(y[mask]))))) / 3000
    assert weak_regularity_deficit(fam, 0.05, 3000) == pytest.approx(expect, rel=1e-12)


def test_classify_fixed_point_attractor():
    r = classify(RealQuadratic(1.2))
    assert r.is_hyperbolic and r.classification is Verdict.REGULAR
    assert r.period == 1
    # Df(p) = -2 tau p = -2 (tau - 1)
    assert r.multiplier == pytest.approx(-0.4, abs=1e-12)


def test_classify_periodic_critical():
    r = classify(RealQuadratic(GOLDEN))
    assert r.classification is Verdict.PERIODIC_CRITICAL and r.period == 2
    r = classify(RealQuadratic(2.0), Budget(N=10_000))
    assert r.classification is Verdict.PERIODIC_CRITICAL
    assert r.confidence is Confidence.CLOSED_FORM
    assert r.ce_exponent == pytest.approx(LN4, abs=1e-9)


def test_classify_candidate_record():
    r = classify(RealQuadratic(1.9), Budget(N=20_000))
    assert r.classification is Verdict.NON_REGULAR_CANDIDATE
    assert r.ce_exponent > 0 and r.recurrent and r.gamma_hat > 0
    rec = r.to_record()
    assert rec["heuristic_recurrence_test"] is True
    assert set(rec["deficit"]) == {"0.1", "0.01", "0.001"}


def test_classify_perturbed():
    r = classify(Perturbed(1.2, (1.0, 0.0, -1.0), 0.01), Budget(N=5000, nest=False))
    assert r.classification is Verdict.REGULAR and r.period == 1


@pytest.mark.parametrize("tau", np.random.default_rng(5).uniform(1.5, 2.0, 12))
def test_classifiers_never_contradict(tau):
    fam = RealQuadratic(float(tau))
    r = classify(fam, Budget(N=20_000))
    if r.classification is not Verdict.REGULAR:
        return
    try:
        nest = build_nest(fam)
    except NestlabError as exc:
        assert type(exc).__name__ in ("EscapedNest", "PeriodicCritical")
        return
    assert detect_renormalization(nest)
