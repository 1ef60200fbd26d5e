"""Exact real trigonometric polynomials on the circle.

A :class:`TrigPoly` stores ``a0 + sum_k a_k cos(kx) + b_k sin(kx)`` with
:class:`fractions.Fraction` coefficients, so products, derivatives and the
Helmholtz multiplier ``1 - d^2/dx^2`` are evaluated without rounding.  Floats
only enter at the grid boundary (:func:`to_grid`, :func:`from_grid`).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational as _RationalABC
from typing import Iterable, Mapping

import numpy as np

from .grid import GridField

Rational = Fraction

#: denominator cap used when turning floating coefficients into rationals
DEFAULT_DENOMINATOR_CAP = 10**6


class RationalizationError(ValueError):
    """Raised when floating coefficients cannot be turned into rationals."""

    def __init__(self, message: str, report: "RationalizationReport | None" = None):
        super().__init__(message)
        self.report = report


def as_rational(value) -> Fraction:
    """Coerce ``value`` to an exact :class:`Fraction`.

    Integers, fractions and strings such as ``"3/5"`` or ``"0.1"`` are exact.
    Floats are converted through their exact binary value.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, _RationalABC, str)):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise RationalizationError(f"non-finite coefficient {value!r}")
        return Fraction(float(value))
    if isinstance(value, np.integer):
        return Fraction(int(value))
    raise TypeError(f"cannot interpret {value!r} as a rational coefficient")


class TrigPoly:
    """Immutable trigonometric polynomial with rational coefficients.

    Parameters
    ----------
    a0:
        Constant term.
    modes:
        Mapping ``k -> (cos_coeff, sin_coeff)`` for frequencies ``k >= 1``.
        Entries whose two coefficients vanish are dropped.
    """

    __slots__ = ("_a0", "_modes", "_hash")

    def __init__(self, a0=0, modes: Mapping[int, tuple] | None = None):
        self._a0 = as_rational(a0)
        cleaned: dict[int, tuple[Fraction, Fraction]] = {}
        for k, (c, s) in (modes or {}).items():
            k = int(k)
            if k < 1:
                raise ValueError(f"mode frequency must be >= 1, got {k}")
            c, s = as_rational(c), as_rational(s)
            if c or s:
                cleaned[k] = (c, s)
        self._modes = dict(sorted(cleaned.items()))
        self._hash = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls) -> "TrigPoly":
        return cls()

    @classmethod
    def const(cls, c=1) -> "TrigPoly":
        return cls(c)

    @classmethod
    def cos(cls, k: int = 1, c=1) -> "TrigPoly":
        if k == 0:
            return cls(c)
        return cls(0, {k: (c, 0)})

    @classmethod
    def sin(cls, k: int = 1, c=1) -> "TrigPoly":
        if k == 0:
            return cls()
        return cls(0, {k: (0, c)})

    # -- accessors ----------------------------------------------------------
    @property
    def const_term(self) -> Fraction:
        return self._a0

    @property
    def modes(self) -> dict[int, tuple[Fraction, Fraction]]:
        return dict(self._modes)

    @property
    def degree(self) -> int:
        return max(self._modes) if self._modes else 0

    def coeff(self, k: int) -> tuple[Fraction, Fraction]:
        """Return ``(cos, sin)`` coefficients at frequency ``k`` (``k=0`` gives ``(a0, 0)``)."""
        if k == 0:
            return self._a0, Fraction(0)
        return self._modes.get(k, (Fraction(0), Fraction(0)))

    def is_zero(self) -> bool:
        return not self._a0 and not self._modes

    def truncate(self, max_degree: int) -> "TrigPoly":
        return TrigPoly(self._a0, {k: v for k, v in self._modes.items() if k <= max_degree})

    def mode_part(self, k: int) -> "TrigPoly":
        if k == 0:
            return TrigPoly(self._a0)
        c, s = self.coeff(k)
        return TrigPoly(0, {k: (c, s)})

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        modes = dict(self._modes)
        for k, (c, s) in other._modes.items():
            c0, s0 = modes.get(k, (0, 0))
            modes[k] = (c0 + c, s0 + s)
        return TrigPoly(self._a0 + other._a0, modes)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(-self._a0, {k: (-c, -s) for k, (c, s) in self._modes.items()})

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return mul(self, other)
        if isinstance(other, (int, Fraction, str, float, np.floating, np.integer)):
            r = as_rational(other)
            return TrigPoly(self._a0 * r, {k: (c * r, s * r) for k, (c, s) in self._modes.items()})
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1 / as_rational(other))

    def __eq__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._a0 == other._a0 and self._modes == other._modes

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._a0, tuple(self._modes.items())))
        return self._hash

    def __call__(self, x):
        """Evaluate at points ``x`` in floating point."""
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, float(self._a0))
        for k, (c, s) in self._modes.items():
            out = out + float(c) * np.cos(k * x) + float(s) * np.sin(k * x)
        return out

    def __repr__(self):
        return f"TrigPoly({self})"

    def __str__(self):
        return format_trigpoly(self)

    def max_abs_coeff(self) -> Fraction:
        vals = [abs(self._a0)] + [abs(v) for cs in self._modes.values() for v in cs]
        return max(vals)

    def to_float_dict(self) -> dict:
        return {
            "a0": float(self._a0),
            "modes": {k: (float(c), float(s)) for k, (c, s) in self._modes.items()},
        }


def _coerce(value):
    if isinstance(value, TrigPoly):
        return value
    if isinstance(value, (int, Fraction)):
        return TrigPoly(value)
    return NotImplemented


# -- operations ---------------------------------------------------------------


def add(p: TrigPoly, q: TrigPoly) -> TrigPoly:
    return p + q


def _terms(p: TrigPoly):
    """Yield ``(k, cos, sin)`` including the constant as frequency 0."""
    if p.const_term:
        yield 0, p.const_term, Fraction(0)
    for k, (c, s) in p.modes.items():
        yield k, c, s


def mul(p: TrigPoly, q: TrigPoly) -> TrigPoly:
    """Exact product through the product-to-sum identities."""
    acc: dict[int, list] = {}

    def put(k, c, s):
        # cos(-k) = cos k, sin(-k) = -sin k
        if k < 0:
            k, s = -k, -s
        slot = acc.setdefault(k, [Fraction(0), Fraction(0)])
        slot[0] += c
        if k:
            slot[1] += s

    for j, a1, b1 in _terms(p):
        for l, a2, b2 in _terms(q):
            if a1 and a2:
                h = a1 * a2 / 2
                put(j - l, h, 0)
                put(j + l, h, 0)
            if b1 and b2:
                h = b1 * b2 / 2
                put(j - l, h, 0)
                put(j + l, -h, 0)
            if a1 and b2:
                h = a1 * b2 / 2
                put(j + l, 0, h)
                put(j - l, 0, -h)
            if b1 and a2:
                h = b1 * a2 / 2
                put(j + l, 0, h)
                put(j - l, 0, h)
    a0 = acc.pop(0, [0, 0])[0]
    return TrigPoly(a0, {k: tuple(v) for k, v in acc.items()})


def diff(p: TrigPoly, order: int = 1) -> TrigPoly:
    """Termwise ``d/dx`` applied ``order`` times."""
    out = p
    for _ in range(order):
        out = TrigPoly(0, {k: (k * s, -k * c) for k, (c, s) in out.modes.items()})
    return out


def _multiplier(p: TrigPoly, fn) -> TrigPoly:
    return TrigPoly(p.const_term * fn(0), {k: (c * fn(k), s * fn(k)) for k, (c, s) in p.modes.items()})


def helmholtz(p: TrigPoly) -> TrigPoly:
    """Apply ``1 - d^2/dx^2``: mode ``k`` is scaled by ``1 + k^2``."""
    return _multiplier(p, lambda k: Fraction(1 + k * k))


def helmholtz_inv(p: TrigPoly) -> TrigPoly:
    """Apply ``(1 - d^2/dx^2)^{-1}``: mode ``k`` is scaled by ``1/(1 + k^2)``."""
    return _multiplier(p, lambda k: Fraction(1, 1 + k * k))


def hs_norm_squared(p: TrigPoly, s) -> Fraction | float:
    """Squared Sobolev norm ``a0^2 + 1/2 sum (1+k^2)^s (a_k^2 + b_k^2)``.

    Exact (a :class:`Fraction`) when ``s`` is an integer, float otherwise.
    """
    if isinstance(s, (int, np.integer)) or (isinstance(s, Fraction) and s.denominator == 1):
        s = int(s)
        total = p.const_term**2
        for k, (c, b) in p.modes.items():
            total += Fraction(1 + k * k) ** s * (c * c + b * b) / 2
        return total
    s = float(s)
    total = float(p.const_term) ** 2
    for k, (c, b) in p.modes.items():
        total += (1 + k * k) ** s * (float(c) ** 2 + float(b) ** 2) / 2
    return total


def hs_norm(p: TrigPoly, s) -> float:
    return math.sqrt(hs_norm_squared(p, s))


def drift(phi: TrigPoly) -> TrigPoly:
    """Single-function image ``-phi phi_x - (1-d_xx)^{-1}(2 phi phi_x + phi_x phi_xx)``."""
    phi_x = diff(phi)
    phi_xx = diff(phi_x)
    pp = mul(phi, phi_x)
    return -pp - helmholtz_inv(2 * pp + mul(phi_x, phi_xx))


def f_image(eta: TrigPoly, phis: Iterable[TrigPoly]) -> TrigPoly:
    """``eta + sum_i drift(phi_i)``, the generator of the saturation recursion."""
    out = eta
    for phi in phis:
        out = out + drift(phi)
    return out


# -- grid boundary ------------------------------------------------------------


def to_grid(p: TrigPoly, n: int) -> GridField:
    """Sample ``p`` at ``x_j = 2 pi j / n``."""
    if n <= 2 * p.degree:
        raise ValueError(f"grid of size {n} cannot resolve degree {p.degree} (need n > {2 * p.degree})")
    x = 2 * np.pi * np.arange(n) / n
    return GridField(p(x))


def grid_coefficients(values: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Return ``(a0, a[1..n/2], b[1..n/2])`` of the real trigonometric interpolant."""
    n = values.shape[0]
    c = np.fft.rfft(values) / n
    a = 2 * c.real
    b = -2 * c.imag
    if n % 2 == 0:
        a[-1] /= 2
        b[-1] = 0.0
    return float(c[0].real), a[1:], b[1:]


def from_grid(
    g: GridField,
    max_degree: int | None = None,
    *,
    rationalize: bool = False,
    cap: int = DEFAULT_DENOMINATOR_CAP,
    band_tol: float = 1e-9,
) -> TrigPoly:
    """Recover a trigonometric polynomial from grid samples.

    Coefficients are the exact binary values of the discrete Fourier
    coefficients unless ``rationalize`` is set, in which case each is replaced
    by its best rational approximation with denominator at most ``cap``.
    """
    n = g.n
    if max_degree is None:
        max_degree = (n - 1) // 2
    if max_degree >= n / 2:
        raise ValueError(f"max_degree {max_degree} is not below n/2 = {n / 2} on a grid of size {n}")
    a0, a, b = grid_coefficients(g.values)
    scale = max(1.0, float(np.max(np.abs(g.values))))
    tail = np.hypot(a[max_degree:], b[max_degree:])
    if tail.size and float(np.max(tail)) > band_tol * scale:
        raise ValueError(
            f"field is not band-limited to degree {max_degree}: tail coefficient {float(np.max(tail)):.3e}"
        )
    conv = (lambda v: Fraction(float(v)).limit_denominator(cap)) if rationalize else (lambda v: Fraction(float(v)))
    modes = {k: (conv(a[k - 1]), conv(b[k - 1])) for k in range(1, max_degree + 1)}
    return TrigPoly(conv(a0), modes)


@dataclass(frozen=True)
class RationalizationReport:
    cap: int
    max_coeff_error: float
    hs_error: float
    s: float


def rationalize(
    coeffs: TrigPoly | Mapping,
    cap: int = DEFAULT_DENOMINATOR_CAP,
    *,
    s: float = 2.0,
    tol: float | None = None,
) -> tuple[TrigPoly, RationalizationReport]:
    """Continued-fraction rationalization with a denominator cap.

    ``coeffs`` is either a :class:`TrigPoly` (e.g. with dyadic coefficients
    from :func:`from_grid`) or a mapping with keys ``a0`` and ``modes``
    holding floats.  Raises :class:`RationalizationError` on non-finite input
    or when the H^s reconstruction error exceeds ``tol``.
    """
    if isinstance(coeffs, TrigPoly):
        a0 = coeffs.const_term
        modes = coeffs.modes
    else:
        a0 = coeffs.get("a0", 0)
        modes = coeffs.get("modes", {})
    raw = {0: (a0, 0)}
    raw.update({int(k): v for k, v in modes.items()})
    exact: dict[int, tuple[Fraction, Fraction]] = {}
    approx: dict[int, tuple[Fraction, Fraction]] = {}
    for k, (c, b) in raw.items():
        for v in (c, b):
            if isinstance(v, float) and not math.isfinite(v):
                raise RationalizationError(f"non-finite coefficient at frequency {k}: {v!r}")
        ce, be = as_rational(c), as_rational(b)
        exact[k] = (ce, be)
        approx[k] = (ce.limit_denominator(cap), be.limit_denominator(cap))
    out = TrigPoly(approx.pop(0)[0], approx)
    ref = TrigPoly(exact.pop(0)[0], exact)
    diff_poly = ref - out
    max_err = float(diff_poly.max_abs_coeff()) if not diff_poly.is_zero() else 0.0
    report = RationalizationReport(cap=cap, max_coeff_error=max_err, hs_error=hs_norm(diff_poly, s), s=s)
    if tol is not None and report.hs_error > tol:
        raise RationalizationError(
            f"rationalization error {report.hs_error:.3e} exceeds tolerance {tol:.3e}", report
        )
    return out, report


def tail_hs_norm(p: TrigPoly, degree: int, s) -> float:
    """H^s norm of the modes of ``p`` strictly above ``degree``."""
    return hs_norm(TrigPoly(0, {k: v for k, v in p.modes.items() if k > degree}), s)


# -- text and JSON ------------------------------------------------------------


def _fmt_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_trigpoly(p: TrigPoly) -> str:
    parts = []
    if p.const_term:
        parts.append(_fmt_coeff(p.const_term))
    for k, (c, s) in p.modes.items():
        arg = "x" if k == 1 else f"{k}x"
        for coef, name in ((c, "cos"), (s, "sin")):
            if not coef:
                continue
            if coef == 1:
                parts.append(f"{name}({arg})")
            elif coef == -1:
                parts.append(f"-{name}({arg})")
            else:
                parts.append(f"{_fmt_coeff(coef)}*{name}({arg})")
    if not parts:
        return "0"
    text = " + ".join(parts)
    return text.replace("+ -", "- ")


_TERM = re.compile(
    r"""\s*(?P<sign>[+-])?\s*
        (?P<coef>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?(?:/\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\s*
        (?:\*?\s*(?P<fn>sin|cos)\s*\(\s*(?P<k>\d*)\s*\*?\s*x\s*\))?\s*""",
    re.VERBOSE,
)


def parse_trigpoly(text: str) -> TrigPoly:
    """Parse an inline expression such as ``"0.1*sin(2x) + 0.05*cos(x) - 3/5"``.

    Decimal coefficients are read exactly (``"0.1"`` is ``1/10``).
    """
    text = text.strip()
    if not text:
        raise ValueError("empty polynomial expression")
    pos, out = 0, TrigPoly()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos or (m.group("coef") is None and m.group("fn") is None):
            raise ValueError(f"cannot parse polynomial expression at: {text[pos:]!r}")
        if pos > 0 and m.group("sign") is None:
            raise ValueError(f"missing operator before: {text[pos:]!r}")
        coef = Fraction(m.group("coef")) if m.group("coef") else Fraction(1)
        if m.group("sign") == "-":
            coef = -coef
        fn = m.group("fn")
        if fn is None:
            out = out + TrigPoly(coef)
        else:
            k = int(m.group("k") or 1)
            out = out + (TrigPoly.sin(k, coef) if fn == "sin" else TrigPoly.cos(k, coef))
        pos = m.end()
    return out


def to_json_dict(p: TrigPoly) -> dict:
    return {
        "a0": _fmt_coeff(p.const_term),
        "modes": [{"k": k, "cos": _fmt_coeff(c), "sin": _fmt_coeff(s)} for k, (c, s) in p.modes.items()],
    }


def from_json_dict(doc: Mapping) -> TrigPoly:
    extra = set(doc) - {"a0", "modes"}
    if extra:
        raise ValueError(f"unknown TrigPoly keys: {sorted(extra)}")
    modes = {}
    for entry in doc.get("modes", []):
        bad = set(entry) - {"k", "cos", "sin"}
        if bad:
            raise ValueError(f"unknown mode keys: {sorted(bad)}")
        for key in ("cos", "sin"):
            if not isinstance(entry.get(key, "0"), str):
                raise ValueError("coefficients must be exact rational strings")
        k = int(entry["k"])
        if k in modes:
            raise ValueError(f"duplicate frequency {k}")
        modes[k] = (Fraction(entry.get("cos", "0")), Fraction(entry.get("sin", "0")))
    a0 = doc.get("a0", "0")
    if not isinstance(a0, str):
        raise ValueError("coefficients must be exact rational strings")
    return TrigPoly(Fraction(a0), modes)


def dumps(p: TrigPoly, **kwargs) -> str:
    return json.dumps(to_json_dict(p), **kwargs)


def loads(text: str) -> TrigPoly:
    return from_json_dict(json.loads(text))
