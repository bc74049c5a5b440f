import math

import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, strategies as st

from conftest import CURVE
from nestlab.errors import InsufficientRows, MonotonicityViolation, NotInF
from nestlab.maps import RealQuadratic
from nestlab.nest import build_nest
from nestlab.params import (Address, PhaseParameter, combinatorial_signature,
                            log_parameter_scaling_ratios, param_window, parameter_scaling_ratios,
                            phase_phase_samples, phpa1_addresses, phpa2_addresses,
                            qs_distortion, windows_csv, xi_samples)
from nestlab.precision import working_bits


@pytest.fixture(scope="module")
def dp(descents):
    return descents[0]


def test_signature_reflexive():
    fam = RealQuadratic(1.9)
    assert combinatorial_signature(fam, 3) == combinatorial_signature(fam, 3)
    with pytest.raises(NotInF):
        combinatorial_signature(RealQuadratic(1.6), 2)


def test_window_membership_and_nesting(dp):
    pp = dp.pp
    ws = [pp.window(i) for i in range(1, dp.depth + 1)]
    for w in ws:
        assert w.lo < pp.lam0 < w.hi
    for a, b in zip(ws, ws[1:]):
        assert a.lo <= b.lo and b.hi <= a.hi


@pytest.mark.parametrize("i", [1, 2, 3])
def test_window_signature_equality(dp, i):
    pp = dp.pp
    J = pp.window(i)
    ref = combinatorial_signature(CURVE.at(pp.lam0), i)
    rng = np.random.default_rng(i)
    with working_bits(256):
        for u in rng.uniform(0.02, 0.98, 16):
            lam = J.lo + (J.hi - J.lo) * mpfr(u)
            assert combinatorial_signature(CURVE.at(lam), i) == ref


def test_window_is_maximal(dp):
    # just outside either end the level-1 signature differs from lam0's
    J = dp.pp.window(1)
    ref = combinatorial_signature(CURVE.at(dp.pp.lam0), 1)
    pad = J.width * mpfr("1e-3")
    for lam in (J.lo - pad, J.hi + pad):
        try:
            assert combinatorial_signature(CURVE.at(lam), 1) != ref
        except NotInF:
            pass


def test_param_window_regular_rejected():
    with pytest.raises(NotInF):
        param_window(CURVE, 1.6, 1)


def test_param_window_function(dp):
    J = param_window(CURVE, dp.pp.lam0, 2, pp=dp.pp)
    assert J == dp.pp.window(2)


def _fraction_address(pp, i):
    # R_i(0) expressed as an affine position inside I_i
    lv = pp.nest.level(i)
    y = pp.critical_return(i)
    frac = (2 * y - (lv.left + lv.right)) / (lv.right - lv.left)
    return Address(i, "u", b"", frac)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_xi_pins_lam0(dp, i):
    pp = dp.pp
    J = pp.window(i)
    lam = pp.xi(i, _fraction_address(pp, i))
    assert abs(lam - pp.lam0) <= 4 * J.width * pp.rel_tol


@pytest.mark.parametrize("i", [1, 2, 3])
def test_xi_brackets_lam0(dp, i):
    pp = dp.pp
    wt = pp.nest.first_landing_segment(i)
    a = pp.xi(i, Address(i, "L", wt))
    b = pp.xi(i, Address(i, "R", wt))
    assert min(a, b) < pp.lam0 < max(a, b)


def test_xi_tolerance_self_consistency(dp):
    pp = dp.pp
    i = 2
    J = pp.window(i)
    addr = Address(i, "L", pp.nest.first_landing_segment(i))
    tol = J.width * mpfr("1e-10")
    a = pp.xi(i, addr, tol=tol)
    b = pp.xi(i, addr, tol=2 * tol)
    assert abs(a - b) <= 2 * tol


def test_xi_table_monotone(dp):
    pp = dp.pp
    tab = xi_samples(pp, 2, phpa2_addresses(pp, 2))
    assert tab.is_monotone()
    xs, ys = tab.arrays()
    assert xs[0] == 0 and xs[-1] == 1 and np.all(np.diff(xs) > 0)
    assert tab.orientation in (1, -1)
    J = pp.window(2)
    assert all(J.lo <= v <= J.hi for v in tab.params)


def test_phpa1_addresses_in_tau_domain(dp):
    pp = dp.pp
    i = dp.nest.non_central_indices[0]
    wt = pp.nest.first_landing_segment(i)
    lo = pp.point(Address(i, "L", wt))
    hi = pp.point(Address(i, "R", wt))
    lo, hi = min(lo, hi), max(lo, hi)
    slack = (hi - lo) * mpfr(2) ** -200
    for a in phpa1_addresses(pp, i):
        x = pp.point(a)
        assert x - lo >= -slack and hi - x >= -slack


def test_phase_phase_identity_at_lam0(dp):
    pp = dp.pp
    addrs = phpa2_addresses(pp, 2)
    for x0, x1 in phase_phase_samples(pp, pp.lam0, 2, addrs):
        assert x0 == x1


def test_phase_phase_boundary_and_conjugacy(dp):
    pp = dp.pp
    i = 2
    J = pp.window(i)
    with working_bits(256):
        lam = J.lo + (J.hi - J.lo) * mpfr("0.3")
    pairs = phase_phase_samples(pp, lam, i, [Address(i, "L"), Address(i, "R")])
    other = build_nest(CURVE.at(lam), max_depth=i + 1, min_width=0.0)
    assert float(abs(pairs[0][1] - other.level(i).left)) < 1e-25
    assert float(abs(pairs[1][1] - other.level(i).right)) < 1e-25
    fam = CURVE.at(lam)
    for d_addr in phpa2_addresses(pp, i)[2:6]:
        hx = pp.point(d_addr, lam)
        hfx = pp.point(d_addr.shift(), lam)
        assert float(abs(fam.f(hx) - hfx)) < 1e-9 * float(other.level(i).width)


def test_qs_distortion_examples():
    x = np.linspace(0, 1, 33)
    assert qs_distortion(x, x).M == pytest.approx(1.0, abs=1e-12)
    assert qs_distortion(x, 3 * x - 2).M == pytest.approx(1.0, abs=1e-12)
    assert qs_distortion(x, -2 * x).M == pytest.approx(1.0, abs=1e-12)
    assert qs_distortion([0.0, 0.5, 1.0], [0.0, 0.125, 1.0]).M == pytest.approx(7.0)


@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=30),
       st.lists(st.floats(0.01, 10.0), min_size=3, max_size=30))
def test_qs_distortion_at_least_one(dx, dh):
    n = min(len(dx), len(dh))
    x = np.cumsum(dx[:n])
    h = np.cumsum(dh[:n])
    r = qs_distortion(x, h, triple_budget=200)
    assert r.M >= 1.0 and r.triples > 0


def test_qs_distortion_errors():
    with pytest.raises(InsufficientRows):
        qs_distortion([0, 1], [0, 1])
    with pytest.raises(MonotonicityViolation):
        qs_distortion([0, 1, 2, 3], [0, 2, 1, 3])


def test_parameter_scaling_ratios(descents):
    for dp in descents:
        r = parameter_scaling_ratios(dp.windows, dp.nest)
        assert all(0 < v < 1 for _, v in r)
        logs = log_parameter_scaling_ratios(dp.windows, dp.nest)
        assert [k for k, _ in logs] == [k for k, _ in r]
        for (_, v), (_, lv) in zip(r, logs):
            assert math.log(v) == pytest.approx(lv, rel=1e-9, abs=1e-12)


def test_windows_csv(dp):
    text = windows_csv(dp.pp)
    rows = text.strip().splitlines()
    assert rows[0].startswith("level,lam_lo,lam_hi")
    assert len(rows) == len(dp.pp.windows) + 1
    lo, hi = mpfr(rows[-1].split(",")[1], 512), mpfr(rows[-1].split(",")[2], 512)
    assert lo < dp.pp.lam0 < hi


def test_phase_parameter_not_in_f():
    with pytest.raises(NotInF):
        PhaseParameter(CURVE, 2.0)
