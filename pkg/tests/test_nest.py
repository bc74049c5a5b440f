import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from conftest import GOLDEN
from nestlab.errors import InsufficientLevels, NoReversingFixedPoint, PeriodicCritical
from nestlab.maps import Perturbed, RealQuadratic
from nestlab.nest import (NotDetected, Renormalizable, Termination, build_nest,
                          detect_renormalization, landing_domains, nest_to_jsonl,
                          return_domains, reversing_fixed_point, scaling_ratios,
                          verify_return_domain, word_from_str, word_str)
from nestlab.stats import Budget, Verdict, classify


def _fixed_point_oracle(tau):
    # tau p^2 + p + 1 - tau = 0, positive root
    return max(np.roots([tau, 1.0, 1.0 - tau]).real)


@pytest.mark.parametrize("tau,p", [(2.0, 0.5), (1.5, 1 / 3)])
def test_reversing_fixed_point_closed_form(tau, p):
    assert reversing_fixed_point(RealQuadratic(tau)) == pytest.approx(p, abs=1e-15)
    assert _fixed_point_oracle(tau) == pytest.approx(p, abs=1e-15)


@given(st.floats(1.001, 2.0))
def test_reversing_fixed_point_random(tau):
    p = reversing_fixed_point(RealQuadratic(tau))
    assert p == pytest.approx(_fixed_point_oracle(tau), abs=1e-12)
    assert RealQuadratic(tau).df(p) < 0


def test_reversing_fixed_point_perturbed():
    fam = Perturbed(1.8, (1.0, 0.0, -1.0), 0.01)
    p = reversing_fixed_point(fam)
    oracle = brentq(lambda x: fam.f(x) - x, 0.0, 1.0, xtol=1e-15)
    assert p == pytest.approx(oracle, abs=1e-13)
    assert abs(p - 0.8 / 1.8) < 0.01 and fam.df(p) < 0


@given(st.floats(0.5, 1.0))
def test_no_reversing_fixed_point(tau):
    # the fixed points are -1 and (tau - 1)/tau, with Df = 2 tau and -2(tau - 1)
    with pytest.raises(NoReversingFixedPoint):
        reversing_fixed_point(RealQuadratic(tau))


@pytest.mark.parametrize("tau", [2.0, GOLDEN])
def test_periodic_critical(tau):
    with pytest.raises(PeriodicCritical):
        build_nest(RealQuadratic(tau))


def test_deep_nest(descents):
    for dp in descents:
        n = dp.nest
        assert n.depth >= 6
        assert not detect_renormalization(n)
        lefts = [lv.left for lv in n.levels]
        rights = [lv.right for lv in n.levels]
        assert all(b > a for a, b in zip(lefts, lefts[1:]))
        assert all(b < a for a, b in zip(rights, rights[1:]))


def test_nest_structure(nest19):
    n = nest19
    assert n.level(1).right == pytest.approx(reversing_fixed_point(RealQuadratic(1.9)), abs=1e-15)
    for a, b in zip(n.levels, n.levels[1:]):
        assert a.left < b.left < 0 < b.right < a.right
    assert n.non_central_indices == [lv.index for lv in n.levels if lv.central_return is False]
    for lv in n.levels:
        if lv.central_return is not None:
            nxt = n.level(lv.index + 1)
            assert lv.central_return == bool(nxt.left < lv.critical_return < nxt.right)
    with pytest.raises(InsufficientLevels):
        n.level(n.depth + 1)


def test_central_window_single_domain(nest19):
    for i in (1, 2, 3):
        nxt = nest19.level(i + 1)
        doms = return_domains(nest19, i, window=(nxt.left, nxt.right))
        assert len(doms) == 1 and doms[0].index == 0


@pytest.mark.parametrize("i", [1, 2, 3])
def test_return_domains_contract(nest19, i):
    doms = return_domains(nest19, i, width_floor=1e-3)
    assert len(doms) > 2
    for d, e in zip(doms, doms[1:]):
        assert d.right <= e.left
    central = [d for d in doms if d.index == 0]
    assert len(central) == 1 and central[0].left < 0 < central[0].right
    assert central[0].word[0] == 2
    for d in doms:
        assert (d.index == 0) == (d.left < 0 < d.right)
        assert d.return_time == len(d.word)
        assert verify_return_domain(nest19, d, 1e-9, samples=32 if d.index else 0)
    idx = sorted(d.index for d in doms if d.index > 0)
    assert idx == list(range(1, len(idx) + 1))


def test_lateral_endpoints_on_boundary(nest19):
    # independent binary64 forward iteration of the endpoints
    q = RealQuadratic(1.9)
    lv = nest19.level(2)
    a, b = float(lv.left), float(lv.right)
    for d in return_domains(nest19, 2):
        if d.index == 0 or d.return_time > 12:
            continue
        for x in (float(d.left), float(d.right)):
            for _ in range(d.return_time):
                x = q.f(x)
            assert min(abs(x - a), abs(x - b)) < 1e-9 * (b - a) * 10 ** (d.return_time / 2)


def test_return_domains_bookkeeping(nest19):
    doms = return_domains(nest19, 2, width_floor=1e-2)
    lv = nest19.level(2)
    covered = sum(float(d.width) for d in doms) / float(lv.width)
    assert 0 < covered <= 1 + 1e-12
    assert 0 <= doms.unresolved <= 1 - covered + 1e-9


def test_landing_domains(nest19):
    i = 2
    doms = return_domains(nest19, i)
    land = landing_domains(nest19, i, max_itinerary_length=2, domains=doms)
    nxt = nest19.level(i + 1)
    empty = [c for c in land if c.itinerary == ()]
    assert len(empty) == 1
    assert float(abs(empty[0].left - nxt.left) + abs(empty[0].right - nxt.right)) < 1e-30
    by_index = {d.index: d for d in doms}
    for c in land:
        if not c.itinerary:
            continue
        host = by_index[c.itinerary[0]]
        assert host.left <= c.left < c.right <= host.right
        assert all(j != 0 for j in c.itinerary)
        assert verify_return_domain(nest19, c, 1e-9, target=(nxt.left, nxt.right))


def test_landing_consistency(nest19):
    # length-1 itineraries are exactly R_i^{-1}(I_{i+1}) inside each lateral domain
    i = 2
    doms = return_domains(nest19, i)
    land = landing_domains(nest19, i, max_itinerary_length=1, domains=doms)
    q = RealQuadratic(1.9)
    nxt = nest19.level(i + 1)
    a, b = float(nxt.left), float(nxt.right)
    for c in land:
        if len(c.itinerary) != 1:
            continue
        host = next(d for d in doms if d.index == c.itinerary[0])
        xs = np.linspace(float(host.left), float(host.right), 2001)[1:-1]
        ys = xs.copy()
        for _ in range(host.return_time):
            ys = q.f(ys)
        inside = xs[(ys > a) & (ys < b)]
        if inside.size > 2:
            assert float(c.left) <= inside.min() + 1e-9 and inside.max() - 1e-9 <= float(c.right)


def test_scaling_ratios(descents):
    for dp in descents:
        r = scaling_ratios(dp.nest)
        assert all(0 < v < 1 for _, v in r)
        assert [k for k, _ in r] == list(range(1, len(r) + 1))
    with pytest.raises(InsufficientLevels):
        scaling_ratios(build_nest(RealQuadratic(1.9), max_depth=2))


def test_renormalization_agrees_with_cycle():
    # the attracting 2-cycle exists for c in (-5/4, -3/4), i.e. 3/2 < tau < (1 + sqrt 6)/2
    rng = np.random.default_rng(11)
    for tau in rng.uniform(1.51, (1 + math.sqrt(6)) / 2 - 0.01, 6):
        fam = RealQuadratic(tau)
        verdict = classify(fam, Budget(N=20_000, nest=False))
        assert verdict.classification is Verdict.REGULAR and verdict.period == 2
        n = build_nest(fam)
        r = detect_renormalization(n)
        assert isinstance(r, Renormalizable) and r.period == 2
        assert n.termination is Termination.RENORMALIZATION


def test_cascade_threshold_semantics(nest19):
    assert nest19.level(1).central_return
    assert isinstance(detect_renormalization(nest19, 1), Renormalizable)
    assert isinstance(detect_renormalization(nest19), NotDetected)


def test_jsonl_roundtrip(nest19):
    lines = nest_to_jsonl(nest19).splitlines()
    head = json.loads(lines[0])
    assert head["depth"] == nest19.depth == len(lines) - 1
    for line, lv in zip(lines[1:], nest19.levels):
        rec = json.loads(line)
        assert float(rec["right"]) == pytest.approx(float(lv.right), rel=1e-15)
        assert rec["log_width"] == pytest.approx(math.log(float(lv.width)))


@given(st.text(alphabet="LRC", max_size=30))
def test_word_roundtrip(s):
    assert word_str(word_from_str(s)) == s
