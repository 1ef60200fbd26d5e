"""Saturation algebra for the seed space span{1, cos x, sin x}.

The induction that climbs one frequency per level uses four auxiliary
functions (the *gadget*).  Its image under :func:`~chcontrol.trigpoly.f_image`
is a pure frequency-``m+1`` polynomial, linear in the free parameters
``(alpha, beta)``, which is what makes an exact top-down planner possible.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Union

import numpy as np

from .trigpoly import TrigPoly, as_rational, drift, f_image, helmholtz

__all__ = [
    "H0Value",
    "MoveNode",
    "MovePlan",
    "CertificateError",
    "CertificateRow",
    "gadget",
    "gadget_scale",
    "gadget_image",
    "certify_basis",
    "decompose",
    "plan_stats",
    "realize",
]


class CertificateError(AssertionError):
    """An exact identity of the saturation algebra failed at frequency ``m``."""

    def __init__(self, m: int, message: str):
        super().__init__(f"certificate failure at m={m}: {message}")
        self.m = m


@dataclass(frozen=True)
class H0Value:
    """Element ``c_const + c_cos cos x + c_sin sin x`` of the seed space."""

    c_const: object = 0
    c_cos: object = 0
    c_sin: object = 0

    def __post_init__(self):
        for name in ("c_const", "c_cos", "c_sin"):
            v = getattr(self, name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")

    level = 0

    @classmethod
    def from_trigpoly(cls, p: TrigPoly) -> "H0Value":
        if p.degree > 1:
            raise ValueError(f"{p} is not in span{{1, cos x, sin x}}")
        c, s = p.coeff(1)
        return cls(p.const_term, c, s)

    def to_trigpoly(self) -> TrigPoly:
        return TrigPoly(as_rational(self.c_const), {1: (as_rational(self.c_cos), as_rational(self.c_sin))})

    @property
    def realized(self) -> TrigPoly:
        return self.to_trigpoly()

    def as_floats(self) -> "H0Value":
        return H0Value(float(self.c_const), float(self.c_cos), float(self.c_sin))

    def scaled(self, c) -> "H0Value":
        return H0Value(self.c_const * c, self.c_cos * c, self.c_sin * c)

    def helmholtz(self) -> "H0Value":
        """``(1 - d_xx)`` restricted to the seed space: multipliers (1, 2, 2)."""
        return H0Value(self.c_const, 2 * self.c_cos, 2 * self.c_sin)

    def is_zero(self) -> bool:
        return not (self.c_const or self.c_cos or self.c_sin)

    def to_grid(self, n: int) -> np.ndarray:
        x = 2 * np.pi * np.arange(n) / n
        return float(self.c_const) + float(self.c_cos) * np.cos(x) + float(self.c_sin) * np.sin(x)

    def as_tuple(self) -> tuple[float, float, float]:
        return float(self.c_const), float(self.c_cos), float(self.c_sin)


Child = Union[H0Value, "MoveNode"]


@dataclass(frozen=True)
class MoveNode:
    """One application of the image map: realizes ``eta + sum drift(phi_i)``.

    Children are either seed values or lower-level nodes; ``level`` is the
    index ``n`` of the space this node's realized vector lies in.
    """

    eta: Child
    phis: tuple
    level: int

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(self.phis))
        if self.level < 1:
            raise ValueError("MoveNode level must be >= 1")
        for child in (self.eta, *self.phis):
            if child.level >= self.level:
                raise ValueError(f"child level {child.level} is not below node level {self.level}")

    @cached_property
    def realized(self) -> TrigPoly:
        return f_image(self.eta.realized, [phi.realized for phi in self.phis])

    def children(self):
        return (self.eta, *self.phis)


def realize(node: Child | None) -> TrigPoly:
    """Bottom-up exact evaluation of a plan tree (recomputed, not cached)."""
    if node is None:
        return TrigPoly()
    if isinstance(node, H0Value):
        return node.to_trigpoly()
    return f_image(realize(node.eta), [realize(phi) for phi in node.phis])


@dataclass(frozen=True)
class MovePlan:
    root: Child | None
    target: TrigPoly
    residual: TrigPoly

    @property
    def depth(self) -> int:
        return 0 if self.root is None else self.root.level

    def to_json_dict(self) -> dict:
        from .trigpoly import to_json_dict

        return {
            "target": to_json_dict(self.target),
            "residual": to_json_dict(self.residual),
            "root": None if self.root is None else _node_to_json(self.root),
        }

    def dumps(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MovePlan":
        from .trigpoly import from_json_dict

        root = None if doc.get("root") is None else _node_from_json(doc["root"])
        return cls(root, from_json_dict(doc["target"]), from_json_dict(doc["residual"]))


def _q(v) -> str:
    v = as_rational(v)
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _node_to_json(node: Child) -> dict:
    if isinstance(node, H0Value):
        return {"h0": [_q(node.c_const), _q(node.c_cos), _q(node.c_sin)]}
    return {
        "level": node.level,
        "eta": _node_to_json(node.eta),
        "phis": [_node_to_json(p) for p in node.phis],
    }


def _node_from_json(doc: dict) -> Child:
    if "h0" in doc:
        return H0Value(*(Fraction(v) for v in doc["h0"]))
    return MoveNode(_node_from_json(doc["eta"]), tuple(_node_from_json(p) for p in doc["phis"]), int(doc["level"]))


# -- the four-function gadget -------------------------------------------------


def gadget(m: int, alpha, beta) -> list[TrigPoly]:
    """Auxiliary functions lifting frequency ``m`` to ``m + 1``."""
    if m < 2:
        raise ValueError(f"gadget needs m >= 2, got {m}")
    a, b = as_rational(alpha), as_rational(beta)
    base_p = TrigPoly.cos(1) + TrigPoly.sin(1)
    base_m = TrigPoly.cos(1) - TrigPoly.sin(1)
    return [
        base_p,
        -base_m,
        TrigPoly.cos(m, a) + TrigPoly.sin(m, b) + base_p,
        TrigPoly.cos(m, -b) + TrigPoly.sin(m, a) + base_m,
    ]


def gadget_scale(m: int) -> Fraction:
    """Common factor ``(m+1) {1 - (m-2)/(1+(m+1)^2)}`` of the closed form.

    The sine and cosine brackets coincide; the value is
    ``(m+1)(m^2+m+4)/(m^2+2m+2)``, positive for every ``m >= 1``.
    """
    return (m + 1) * (1 - Fraction(m - 2, 1 + (m + 1) ** 2))


def gadget_image(m: int, alpha, beta) -> TrigPoly:
    """Closed form of ``f_image(0, gadget(m, alpha, beta))``."""
    if m < 2:
        raise ValueError(f"gadget needs m >= 2, got {m}")
    a, b = as_rational(alpha), as_rational(beta)
    d = 1 + (m + 1) ** 2
    sin_c = (a - b) * (m + 1) * (1 - Fraction(m - 2, d))
    cos_c = -(a + b) * (m + 1) * (1 + Fraction(2 - m, d))
    return TrigPoly(0, {m + 1: (cos_c, sin_c)})


# -- certificates -------------------------------------------------------------


@dataclass(frozen=True)
class CertificateRow:
    m: int
    mode: str
    witnesses: tuple
    coefficient: Fraction
    level: int
    trivial: bool = False

    def witness_text(self) -> str:
        return "; ".join(str(w) for w in self.witnesses)


def _check_pure(m: int, image: TrigPoly, mode: str) -> Fraction:
    c, s = image.coeff(m)
    lead = c if mode == "cos" else s
    other = s if mode == "cos" else c
    if other or image.const_term or any(k != m for k in image.modes):
        raise CertificateError(m, f"image {image} is not a pure {mode}({m}x) term")
    if not lead:
        raise CertificateError(m, f"vanishing leading coefficient for {mode}({m}x)")
    return lead


def certify_basis(M: int) -> list[CertificateRow]:
    """Exact certificates that ``sin(mx), cos(mx)`` lie in level ``m - 1``.

    Frequency 1 is recorded as trivially in the seed space.  Frequency 2 uses
    the single-function witnesses ``sin x`` and ``sin x + cos x``; every
    higher frequency checks the gadget expansion against its closed form for
    ``alpha = beta = 1`` (cosine) and ``alpha = 1, beta = -1`` (sine).
    """
    if M < 1:
        raise ValueError("certify_basis needs M >= 1")
    rows = [
        CertificateRow(1, "sin", (TrigPoly.sin(1),), Fraction(1), 0, trivial=True),
        CertificateRow(1, "cos", (TrigPoly.cos(1),), Fraction(1), 0, trivial=True),
    ]
    if M >= 2:
        w_sin = TrigPoly.sin(1)
        w_cos = TrigPoly.sin(1) + TrigPoly.cos(1)
        rows.append(CertificateRow(2, "sin", (w_sin,), _check_pure(2, f_image(TrigPoly(), [w_sin]), "sin"), 1))
        rows.append(CertificateRow(2, "cos", (w_cos,), _check_pure(2, f_image(TrigPoly(), [w_cos]), "cos"), 1))
    for m in range(3, M + 1):
        for mode, (alpha, beta) in (("sin", (1, -1)), ("cos", (1, 1))):
            phis = gadget(m - 1, alpha, beta)
            expanded = f_image(TrigPoly(), phis)
            closed = gadget_image(m - 1, alpha, beta)
            if expanded != closed:
                raise CertificateError(m, f"expansion {expanded} != closed form {closed}")
            rows.append(CertificateRow(m, mode, tuple(phis), _check_pure(m, expanded, mode), m - 1))
    return rows


def certificates_csv(rows: list[CertificateRow], include_trivial: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "mode", "witness_phis", "leading_coefficient"])
    for r in rows:
        if r.trivial and not include_trivial:
            continue
        w.writerow([r.m, r.mode, r.witness_text(), _q(r.coefficient)])
    return buf.getvalue()


# -- planner ------------------------------------------------------------------


def _rational_sqrt(q: Fraction) -> Fraction | None:
    if q < 0:
        return None
    n, d = q.numerator, q.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def _gaussian_sqrt(re: Fraction, im: Fraction) -> tuple[Fraction, Fraction] | None:
    """Rational ``(p, q)`` with ``(p + iq)^2 = re + i im``, if one exists."""
    r = _rational_sqrt(re * re + im * im)
    if r is None:
        return None
    p = _rational_sqrt((r + re) / 2)
    q = _rational_sqrt((r - re) / 2)
    if p is None or q is None:
        return None
    if im < 0:
        q = -q
    return p, q


def frequency_two_phis(sin_c, cos_c) -> list[H0Value]:
    """Seed functions whose drifts sum to ``sin_c sin 2x + cos_c cos 2x``.

    ``drift(a cos x + b sin x) = 3/5 (a^2 - b^2) sin 2x - 6/5 ab cos 2x``, i.e.
    with ``z = a + ib`` the frequency-2 part is fixed by ``z^2``.  A single
    function is used when ``w = 5/3 (sin_c - i cos_c)`` is a square of a
    Gaussian rational.  Otherwise ``w = ((w/mu + mu)/2)^2 + (i(w/mu - mu)/2)^2``
    with ``mu`` a power of two near ``sqrt|w|``, so both functions have size
    ``O(sqrt|w|)`` rather than ``O(1)``.
    """
    sin_c, cos_c = as_rational(sin_c), as_rational(cos_c)
    re, im = Fraction(5, 3) * sin_c, -Fraction(5, 3) * cos_c
    if not re and not im:
        return []
    root = _gaussian_sqrt(re, im)
    if root is not None:
        return [H0Value(0, root[0], root[1])]
    mu = Fraction(2) ** round(math.log2(math.hypot(re, im)) / 2)
    re, im = re / mu, im / mu
    return [H0Value(0, (re + mu) / 2, im / 2), H0Value(0, -im / 2, (re - mu) / 2)]


def gadget_amplitude(top: tuple, m: int) -> Fraction:
    """Power-of-two factor ``lam`` applied to the gadget for a small leading mode.

    The image is quadratic, so ``lam * gadget(m, alpha, beta)`` has image
    ``lam^2 gadget_image(m, alpha, beta)``.  Choosing ``lam^2`` near the
    leading coefficient over the scale keeps ``alpha, beta`` of order one and
    every auxiliary function of order ``sqrt(|target|)`` instead of one.
    Leading modes of size at least the scale keep ``lam = 1``.
    """
    size = max(abs(top[0]), abs(top[1])) / gadget_scale(m)
    if size >= 1:
        return Fraction(1)
    return Fraction(2) ** round(math.log2(float(size)) / 2)


def _plan(target: TrigPoly) -> Child | None:
    if target.is_zero():
        return None
    M = target.degree
    if M <= 1:
        return H0Value.from_trigpoly(target)
    if M == 2:
        cos_c, sin_c = target.coeff(2)
        phis = frequency_two_phis(sin_c, cos_c)
        rest = target - f_image(TrigPoly(), [p.to_trigpoly() for p in phis])
        return MoveNode(H0Value.from_trigpoly(rest), tuple(phis), 1)
    m = M - 1
    cos_c, sin_c = target.coeff(M)
    lam = gadget_amplitude(target.coeff(M), m)
    S = gadget_scale(m) * lam * lam
    diff_ab = sin_c / S  # alpha - beta
    sum_ab = -cos_c / S  # alpha + beta
    alpha, beta = (sum_ab + diff_ab) / 2, (sum_ab - diff_ab) / 2
    g = [lam * p for p in gadget(m, alpha, beta)]
    phis = (
        H0Value.from_trigpoly(g[0]),
        H0Value.from_trigpoly(g[1]),
        _plan(g[2]),
        _plan(g[3]),
    )
    rest = target - f_image(TrigPoly(), g)
    eta = _plan(rest)
    if eta is None:
        eta = H0Value(0, 0, 0)
    return MoveNode(eta, phis, M - 1)


def decompose(target: TrigPoly) -> MovePlan:
    """Compile ``target`` into a tree of moves with seed-space leaves.

    Frequencies are peeled from the top: frequency ``m+1`` is produced by
    ``gadget(m, alpha, beta)`` with ``(alpha, beta)`` solved from the closed
    form, the whole exact image is subtracted and the remainder is planned
    recursively as the node's ``eta``.  Frequency 2 uses seed functions
    directly.  The residual is re-evaluated bottom-up and is exactly zero.
    """
    if not isinstance(target, TrigPoly):
        raise TypeError("decompose expects a TrigPoly; rationalize floating input first")
    root = _plan(target)
    return MovePlan(root, target, target - realize(root))


def _walk(node: Child | None):
    if node is None:
        return
    yield node
    if isinstance(node, MoveNode):
        for child in node.children():
            yield from _walk(child)


def plan_stats(plan: MovePlan) -> tuple[int, int, Fraction]:
    """``(depth, elementary move count, max |leaf coefficient|)``.

    Every :class:`MoveNode` is one move; a bare seed-value root counts as one
    step-1 move.
    """
    if plan.root is None:
        return 0, 0, Fraction(0)
    nodes = list(_walk(plan.root))
    moves = sum(isinstance(n, MoveNode) for n in nodes)
    if isinstance(plan.root, H0Value):
        moves = 1
    leaves = [n for n in nodes if isinstance(n, H0Value)]
    big = max((abs(as_rational(v)) for n in leaves for v in (n.c_const, n.c_cos, n.c_sin)), default=Fraction(0))
    return plan.depth, moves, big


def stage_nodes(plan: MovePlan) -> list[Child]:
    """Split the root into sequential stages: ``eta`` first, then one per ``phi``."""
    root = plan.root
    if root is None:
        return []
    if isinstance(root, H0Value):
        return [root]
    stages: list[Child] = []
    if not (isinstance(root.eta, H0Value) and root.eta.is_zero()):
        stages.append(root.eta)
    for phi in root.phis:
        stages.append(MoveNode(H0Value(0, 0, 0), (phi,), root.level))
    return stages


def helmholtz_h0(v: H0Value) -> H0Value:
    return v.helmholtz()


def check_helmholtz_h0(v: H0Value) -> bool:
    return helmholtz(v.to_trigpoly()) == v.helmholtz().to_trigpoly()
