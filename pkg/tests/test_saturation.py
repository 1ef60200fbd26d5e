import csv
import io
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chcontrol.saturation import (
    CertificateError,
    H0Value,
    MoveNode,
    MovePlan,
    certificates_csv,
    certify_basis,
    decompose,
    frequency_two_phis,
    gadget,
    gadget_image,
    gadget_scale,
    plan_stats,
    realize,
    stage_nodes,
)
from chcontrol.trigpoly import TrigPoly, drift, f_image

S, C = TrigPoly.sin, TrigPoly.cos
F = Fraction


def numeric_image(phis, n=128):
    """Floating evaluation of sum drift(phi) with spectral derivatives."""
    x = np.arange(n) * 2 * np.pi / n
    k = np.fft.rfftfreq(n, 1 / n)
    d = lambda v, m=1: np.fft.irfft((1j * k) ** m * np.fft.rfft(v), n)
    inv = lambda v: np.fft.irfft(np.fft.rfft(v) / (1 + k**2), n)
    out = np.zeros(n)
    for p in phis:
        v = np.array([float(p(t)) for t in x])
        out += -v * d(v) - inv(2 * v * d(v) + d(v) * d(v, 2))
    return x, out


def test_gadget_examples():
    assert gadget(2, 1, 0)[0] == C(1) + S(1)
    assert gadget(3, 0, 1)[3] == -C(3) + C(1) - S(1)
    base = gadget(2, 0, 0)
    assert all(p.degree == 1 for p in base)
    assert base[2] == C(1) + S(1) and base[3] == C(1) - S(1)
    with pytest.raises(ValueError):
        gadget(1, 1, 1)


def test_gadget_image_examples():
    assert gadget_image(2, 1, 1) == C(3, -6)
    assert gadget_image(2, 1, -1) == S(3, 6)
    assert gadget_image(4, F(1, 2), F(1, 2)) == C(5, F(-60, 13))


@pytest.mark.parametrize("m,a,b", [(2, 1, 1), (2, 1, -1), (4, F(1, 2), F(1, 2)), (5, F(-2, 3), F(7, 4))])
def test_gadget_closed_form_against_float_oracle(m, a, b):
    x, num = numeric_image(gadget(m, a, b))
    closed = gadget_image(m, a, b)
    assert np.allclose(num, [float(closed(t)) for t in x], atol=1e-12)


@given(st.integers(2, 10), st.fractions(-5, 5, max_denominator=9), st.fractions(-5, 5, max_denominator=9))
def test_gadget_closed_form_exact(m, a, b):
    assert f_image(TrigPoly(), gadget(m, a, b)) == gadget_image(m, a, b)


@given(st.integers(1, 200))
def test_gadget_scale_positive(m):
    assert gadget_scale(m) > 0
    assert gadget_scale(m) == F((m + 1) * (m * m + m + 4), m * m + 2 * m + 2)


def test_certify_basis_two():
    rows = {(r.m, r.mode): r for r in certify_basis(2) if not r.trivial}
    assert rows[2, "sin"].witnesses == (S(1),) and rows[2, "sin"].coefficient == F(-3, 5)
    assert rows[2, "cos"].witnesses == (S(1) + C(1),) and rows[2, "cos"].coefficient == F(-6, 5)


def test_certify_basis_eight():
    rows = [r for r in certify_basis(8) if not r.trivial]
    # sin and cos for each of m = 2..8
    assert {(r.m, r.mode) for r in rows} == {(m, md) for m in range(2, 9) for md in ("sin", "cos")}
    assert len(rows) == 14
    assert all(r.level == r.m - 1 for r in rows)


def test_certificates_csv():
    text = certificates_csv(certify_basis(3))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["m", "mode", "witness_phis", "leading_coefficient"]
    assert [(r["m"], r["mode"], r["leading_coefficient"]) for r in rows[:2]] == [("2", "sin", "-3/5"), ("2", "cos", "-6/5")]
    assert len(rows) == 4


def test_certificate_error_type():
    assert issubclass(CertificateError, AssertionError)


def test_decompose_frequency_two_single_phi():
    plan = decompose(S(2, F(-3, 5)))
    root = plan.root
    assert isinstance(root, MoveNode) and root.level == 1
    assert root.eta.is_zero()
    assert [p.to_trigpoly() for p in root.phis] == [S(1)]
    assert plan.residual.is_zero()
    assert plan_stats(plan)[:2] == (1, 1)


def test_decompose_empty():
    plan = decompose(TrigPoly())
    assert plan.root is None and plan.residual.is_zero()
    assert plan_stats(plan) == (0, 0, 0)


def test_decompose_two_level():
    target = S(3) + C(1)
    plan = decompose(target)
    assert plan.depth == 2
    assert plan.residual.is_zero()
    assert realize(plan.root) == target
    # phis follow the gadget(2, .) layout up to the power-of-two scale
    phis = [realize(p) for p in plan.root.phis]
    assert phis[0].degree == 1 and phis[2].degree == 2


def test_plan_stats_sin5x():
    assert plan_stats(decompose(S(5)))[0] == 4


def test_plan_stats_seed_root():
    assert plan_stats(decompose(C(1, 3))) == (0, 1, 3)


@pytest.mark.parametrize("sin_c,cos_c", [(F(1, 10), 0), (0, F(-7, 3)), (F(1, 3), F(2, 9)), (5, 5)])
def test_frequency_two_phis(sin_c, cos_c):
    phis = frequency_two_phis(sin_c, cos_c)
    assert 1 <= len(phis) <= 2
    assert f_image(TrigPoly(), [p.to_trigpoly() for p in phis]) == S(2, sin_c) + C(2, cos_c)


def test_frequency_two_scaled_split():
    phis = frequency_two_phis(F(1, 10), 0)
    assert [p.to_trigpoly() for p in phis] == [C(1, F(5, 12)), S(1, F(-1, 12))]


@st.composite
def targets(draw):
    deg = draw(st.integers(0, 5))
    r = st.fractions(-3, 3, max_denominator=12)
    return TrigPoly(draw(r), {k: (draw(r), draw(r)) for k in range(1, deg + 1)})


def _acyclic(node, seen):
    if id(node) in seen:
        return False
    seen = seen | {id(node)}
    if isinstance(node, MoveNode):
        return all(c.level < node.level and _acyclic(c, seen) for c in node.children())
    return True


@given(targets())
def test_decompose_sound(target):
    plan = decompose(target)
    assert plan.residual.is_zero()
    assert realize(plan.root) == target
    assert plan.root is None or _acyclic(plan.root, frozenset())
    assert plan.depth == max(target.degree - 1, 0)


@given(targets())
def test_plan_json_round_trip(target):
    plan = decompose(target)
    back = MovePlan.from_json_dict(json.loads(plan.dumps()))
    assert back == plan


def test_stage_nodes_sum_to_target():
    target = S(2, F(1, 10)) + C(1, F(1, 20))
    plan = decompose(target)
    stages = stage_nodes(plan)
    assert len(stages) >= 2
    assert sum((realize(s) for s in stages), TrigPoly()) == target


def test_move_node_rejects_level_inversion():
    inner = MoveNode(H0Value(), (H0Value(0, 0, 1),), 1)
    with pytest.raises(ValueError):
        MoveNode(H0Value(), (inner,), 1)


def test_h0_value():
    v = H0Value.from_trigpoly(TrigPoly(F(1), {1: (F(2), F(3))}))
    assert v.helmholtz() == H0Value(1, 4, 6)
    with pytest.raises(ValueError):
        H0Value.from_trigpoly(S(2))
    with pytest.raises(ValueError):
        H0Value(float("nan"))
    assert drift(v.to_trigpoly()) == f_image(TrigPoly(), [v.realized])
