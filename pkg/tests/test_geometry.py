import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nestlab.errors import DegenerateInterval, GridTooCoarse, InsufficientLevels, NotNested
from nestlab.geometry import (annulus_modulus, circle, d_theta_boundary, nest_modulus_proxy,
                              polyline_csv)


def shoelace(z):
    return 0.5 * abs(np.sum(z.real * np.roll(z.imag, -1) - np.roll(z.real, -1) * z.imag))


def test_right_angle_is_round_disk():
    p = d_theta_boundary((-1.0, 1.0), math.pi / 2, 1024)
    assert np.max(np.abs(np.abs(p.boundary) - 1.0)) < 1e-12
    assert abs(np.max(p.boundary.imag) - 1.0) < 1e-12
    p = d_theta_boundary((0.3, 0.7), math.pi / 2, 1024)
    assert abs(p.height - 0.2) < 1e-12
    assert abs(np.max(p.boundary.imag) - 0.2) < 1e-12


@given(st.floats(-5, 5), st.floats(1e-3, 10), st.floats(0.05, math.pi / 2))
def test_lens_trace_and_symmetry(a, w, theta):
    p = d_theta_boundary((a, a + w), theta, 256)
    z = p.boundary
    real = z[np.abs(z.imag) <= 1e-12 * w]
    assert abs(real.real.min() - a) < 1e-12 * (1 + abs(a)) + 1e-12 * w
    assert abs(real.real.max() - (a + w)) < 1e-12 * (1 + abs(a + w)) + 1e-12 * w
    # the closed polyline is its own mirror image
    mirror = np.sort_complex(np.conj(z))
    assert np.allclose(np.sort_complex(z), mirror, atol=1e-12 * (1 + abs(a) + w))
    # the arc meets the real axis at angle theta
    assert p.height == pytest.approx(w / 2 * math.tan(theta / 2), rel=1e-12)


@given(st.floats(0.05, 1.5), st.floats(0.01, 0.5))
def test_lens_containment(phi, dpsi):
    psi = min(phi + dpsi, math.pi / 2)
    small = d_theta_boundary((-1.0, 1.0), phi, 512)
    big = d_theta_boundary((-1.0, 1.0), psi, 512)
    assert np.all(big.contains(small.boundary, strict=False))


@pytest.mark.parametrize("theta", [math.pi / 2, 1.0, 0.3])
def test_lens_area(theta):
    p = d_theta_boundary((-1.0, 1.0), theta, 4096)
    assert shoelace(p.boundary) == pytest.approx(p.area(), rel=5e-3)
    if theta == math.pi / 2:
        assert p.area() == pytest.approx(math.pi, rel=1e-12)


def test_lens_errors():
    with pytest.raises(DegenerateInterval):
        d_theta_boundary((1.0, 1.0), 1.0)
    with pytest.raises(ValueError):
        d_theta_boundary((0.0, 1.0), 2.0)


@pytest.mark.parametrize("R,expect", [(math.e, 1.0), (math.e ** 2, 2.0)])
def test_round_annulus_calibration(R, expect):
    e512 = annulus_modulus(circle(R, 2048), circle(1.0, 2048), 512)
    assert abs(e512.value - expect) <= 0.05 * expect
    e1024 = annulus_modulus(circle(R, 2048), circle(1.0, 2048), 1024)
    assert abs(e1024.value - expect) <= 0.02 * expect
    # refinement shrinks the error bar
    assert e1024.error < e512.error
    assert abs(e1024.value - expect) < abs(e512.value - expect)


def test_logpolar_exact_for_circles():
    for R in (1.5, math.e, 1e3):
        est = annulus_modulus(circle(R, 1024), circle(1.0, 1024), 128, "logpolar", center=0)
        assert est.value == pytest.approx(math.log(R), rel=1e-9)


def test_methods_agree_on_lens_annulus():
    outer = d_theta_boundary((-1.0, 1.0), 1.2, 2048)
    inner = d_theta_boundary((-0.2, 0.25), 0.8, 2048)
    c = annulus_modulus(outer.boundary, inner.boundary, 512, "cartesian")
    lp = annulus_modulus(outer.boundary, inner.boundary, 512, "logpolar", center=inner.midpoint)
    assert c.value == pytest.approx(lp.value, rel=5e-3)


def test_shrinking_inner_increases_modulus():
    outer = circle(2.0, 1024, 0.1j)
    vals = []
    for r in (0.8, 0.5, 0.3, 0.2):
        inner = d_theta_boundary((-r, r), 1.0, 1024).boundary
        vals.append(annulus_modulus(outer, inner, 256, "logpolar").value)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_concentric_lens_reduction():
    # both pieces round: ln of the diameter ratio
    for r in (0.5, 0.1, 1e-4):
        outer = d_theta_boundary((-1.0, 1.0), math.pi / 2, 2048)
        inner = d_theta_boundary((-r, r), math.pi / 2, 2048)
        est = annulus_modulus(outer.boundary, inner.boundary, 256, "logpolar", center=0)
        assert est.value == pytest.approx(math.log(1 / r), rel=1e-3)


def test_modulus_errors():
    with pytest.raises(NotNested):
        annulus_modulus(circle(1.0), circle(2.0))
    with pytest.raises(NotNested):
        annulus_modulus(circle(1.0), circle(0.5, center=0.8))
    with pytest.raises(GridTooCoarse):
        annulus_modulus(circle(1.0), circle(0.5), grid=8)
    with pytest.raises(GridTooCoarse):
        annulus_modulus(circle(1.0), circle(1e-3), grid=64, method="cartesian")
    with pytest.raises(ValueError):
        annulus_modulus(circle(1.0), circle(0.5), method="spectral")


def test_nest_proxy(descents):
    dp = descents[0]
    res = nest_modulus_proxy(dp.nest, math.pi / 2, math.pi / 4, grid=64)
    usable = [l for l in dp.nest.non_central_indices if l + 2 <= dp.nest.depth]
    assert [l for _, l, _ in res] == usable
    assert [k for k, _, _ in res] == [dp.nest.non_central_indices.index(l) + 1 for l in usable]
    assert all(e.value > 0 for _, _, e in res)
    with pytest.raises(ValueError):
        nest_modulus_proxy(dp.nest, math.pi / 4, math.pi / 2)
    with pytest.raises(InsufficientLevels):
        nest_modulus_proxy(dp.nest, math.pi / 2, math.pi / 4, levels=usable[:1])


def test_polyline_csv():
    text = polyline_csv(circle(1.0, 8))
    rows = text.strip().splitlines()
    assert rows[0] == "x,y" and len(rows) == 10 and rows[1] == rows[-1]
