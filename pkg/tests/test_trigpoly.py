import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chcontrol.grid import GridField
from chcontrol.trigpoly import (
    RationalizationError,
    TrigPoly,
    add,
    diff,
    drift,
    dumps,
    f_image,
    format_trigpoly,
    from_grid,
    from_json_dict,
    helmholtz,
    helmholtz_inv,
    hs_norm,
    loads,
    mul,
    parse_trigpoly,
    rationalize,
    tail_hs_norm,
    to_grid,
    to_json_dict,
)
from chcontrol.saturation import gadget

S, C = TrigPoly.sin, TrigPoly.cos
F = Fraction

rationals = st.fractions(min_value=-20, max_value=20, max_denominator=30)


@st.composite
def polys(draw, max_degree=6):
    deg = draw(st.integers(0, max_degree))
    return TrigPoly(draw(rationals), {k: (draw(rationals), draw(rationals)) for k in range(1, deg + 1)})


# -- examples ------------------------------------------------------------------


def test_add_examples():
    assert (S(1) + (-S(1))).is_zero()
    assert add(S(1), C(1)) == gadget(2, 1, 0)[0]
    p = TrigPoly(F(1, 3), {2: (F(1), F(-2))})
    assert add(TrigPoly.zero(), p) == p


def test_mul_examples():
    assert mul(S(1), C(1)) == S(2, F(1, 2))
    assert mul(S(1), S(1)) == TrigPoly.const(F(1, 2)) - C(2, F(1, 2))
    q = S(1) + C(1)
    assert q * q == TrigPoly.const(1) + S(2)


def test_diff_examples():
    assert diff(S(1)) == C(1)
    assert diff(TrigPoly.const(7)).is_zero()
    assert diff(C(2)) == S(2, -2)
    assert diff(S(3), 2) == S(3, -9)


def test_helmholtz_examples():
    assert helmholtz(S(1)) == S(1, 2)
    assert helmholtz_inv(S(2)) == S(2, F(1, 5))
    assert helmholtz_inv(TrigPoly.const(F(4, 7))) == TrigPoly.const(F(4, 7))


def test_hs_norm_examples():
    assert hs_norm(S(1), 1) == pytest.approx(1.0, abs=1e-15)
    for s in (0, 0.5, 1, 2, 3.7):
        assert hs_norm(TrigPoly.const(1), s) == pytest.approx(1.0, abs=1e-15)
    assert hs_norm(S(2), 2) == pytest.approx(5 / math.sqrt(2), rel=1e-15)


def test_hs_norm_matches_quadrature():
    # for s = 1 the squared norm is the grid mean of u^2 + u_x^2
    p = TrigPoly(0, {1: (F(1, 2), F(-1, 3)), 3: (F(2), F(1, 5))})
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    u = np.array([float(p(t)) for t in x])
    ux = np.array([float(diff(p)(t)) for t in x])
    assert hs_norm(p, 1) ** 2 == pytest.approx(np.mean(u**2 + ux**2), rel=1e-13)


def test_drift_examples():
    assert drift(S(1)) == S(2, F(-3, 5))
    assert drift(S(1) + C(1)) == C(2, F(-6, 5))
    assert drift(C(1)) == S(2, F(3, 5))
    assert drift(TrigPoly.const(9)).is_zero()


def test_drift_cos_x_by_quadrature():
    # oracle independent of the exact algebra: evaluate the defining
    # expression pointwise with spectral derivatives and compare
    n = 64
    x = np.arange(n) * 2 * np.pi / n
    k = np.fft.rfftfreq(n, 1 / n)
    phi = np.cos(x)
    d = lambda v, m=1: np.fft.irfft((1j * k) ** m * np.fft.rfft(v), n)
    inv = lambda v: np.fft.irfft(np.fft.rfft(v) / (1 + k**2), n)
    val = -phi * d(phi) - inv(2 * phi * d(phi) + d(phi) * d(phi, 2))
    assert np.allclose(val, 0.6 * np.sin(2 * x), atol=1e-13)


def test_f_image_examples():
    p = TrigPoly(F(1), {3: (F(2), F(-1))})
    assert f_image(p, []) == p
    assert f_image(TrigPoly(), [S(1)]) == S(2, F(-3, 5))
    assert f_image(TrigPoly(), gadget(2, 1, 1)) == C(3, -6)


def test_to_grid_samples():
    g = to_grid(S(1), 8)
    assert np.allclose(g.values, np.sin(2 * np.pi * np.arange(8) / 8), atol=1e-15)


def test_grid_round_trip():
    p = S(2, F(-3, 5))
    back = from_grid(to_grid(p, 16), 7)
    assert float((back - p).max_abs_coeff()) < 1e-12


def test_grid_degree_errors():
    with pytest.raises(ValueError):
        to_grid(S(9), 16)
    g = GridField(np.cos(9 * 2 * np.pi * np.arange(32) / 32))
    with pytest.raises(ValueError):
        from_grid(g, 8)
    with pytest.raises(ValueError):
        from_grid(GridField.zeros(16), 9)


# -- properties ------------------------------------------------------------------


@given(polys(), rationals)
def test_drift_quadratic(p, c):
    assert drift(p * c) == drift(p) * (c * c)


@pytest.mark.parametrize("m", range(1, 9))
def test_pure_sine_drift_on_2m(m):
    for coeff in (F(1), F(-2, 3)):
        d = drift(S(m, coeff))
        assert set(d.modes) <= {2 * m} and d.const_term == 0


@given(polys(12))
def test_helmholtz_round_trips(p):
    assert helmholtz(helmholtz_inv(p)) == p
    assert helmholtz_inv(helmholtz(p)) == p


@given(polys(4), polys(4), polys(4))
def test_ring_laws(p, q, r):
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r


@given(polys(5), polys(5))
def test_leibniz(p, q):
    assert diff(p * q) == diff(p) * q + p * diff(q)


@given(polys(6), st.floats(0, 3), st.floats(0, 3))
def test_hs_monotone_in_s(p, s1, s2):
    p = p - TrigPoly.const(p.const_term)
    lo, hi = sorted((s1, s2))
    assert hs_norm(p, lo) <= hs_norm(p, hi) * (1 + 1e-12)


@given(polys(6), st.integers(2, 5))
def test_hs_shift_by_helmholtz_inv(p, s):
    from chcontrol.trigpoly import hs_norm_squared

    assert hs_norm_squared(helmholtz_inv(p), s) == hs_norm_squared(p, s - 2)


@given(polys(7))
def test_grid_round_trip_property(p):
    back = from_grid(to_grid(p, 32), 15)
    assert float((back - p).max_abs_coeff()) < 1e-12


# -- text, JSON, rationalization -----------------------------------------------


@given(polys())
def test_format_parse_round_trip(p):
    assert parse_trigpoly(format_trigpoly(p)) == p


def test_parse_examples():
    assert parse_trigpoly("0.1*sin(2x) + 0.05*cos(x)") == S(2, F(1, 10)) + C(1, F(1, 20))
    assert parse_trigpoly("0") == TrigPoly.zero()


@given(polys())
def test_json_round_trip(p):
    assert from_json_dict(to_json_dict(p)) == p
    assert loads(dumps(p)) == p


def test_json_is_exact_strings():
    doc = to_json_dict(S(2, F(-3, 5)))
    assert doc["modes"] == [{"k": 2, "cos": "0", "sin": "-3/5"}]


@pytest.mark.parametrize(
    "doc",
    [
        {"a0": 0.5, "modes": []},
        {"a0": "0", "modes": [], "extra": 1},
        {"a0": "0", "modes": [{"k": 1, "cos": "1", "sin": "0"}, {"k": 1, "cos": "1", "sin": "0"}]},
    ],
)
def test_json_rejects_malformed(doc):
    with pytest.raises((ValueError, TypeError)):
        from_json_dict(doc)


def test_rationalize_cap_and_report():
    p, rep = rationalize({"a0": 1 / 3, "modes": {1: (math.pi, 0.0)}}, cap=1000)
    assert p.const_term == F(1, 3)
    assert p.coeff(1)[0] == F(355, 113)
    assert 0 < rep.max_coeff_error < 1e-6
    with pytest.raises(RationalizationError):
        rationalize({"a0": math.nan})
    with pytest.raises(RationalizationError):
        rationalize({"a0": math.pi}, cap=10, tol=1e-9)


def test_tail_norm():
    p = S(1) + S(3, 2)
    assert tail_hs_norm(p, 1, 0) == pytest.approx(hs_norm(S(3, 2), 0))
    assert tail_hs_norm(p, 3, 0) == 0
