"""Piecewise-constant controls with values in span{1, cos x, sin x}."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

from .saturation import H0Value


def as_duration(dt) -> Fraction:
    if isinstance(dt, float):
        return Fraction(dt)
    return Fraction(dt)


@dataclass(frozen=True)
class Segment:
    dt: Fraction
    value: H0Value

    def __post_init__(self):
        object.__setattr__(self, "dt", as_duration(self.dt))
        if self.dt <= 0:
            raise ValueError(f"segment duration must be positive, got {self.dt}")
        if not isinstance(self.value, H0Value):
            raise TypeError("segment value must be an H0Value")


class ControlSchedule:
    """Ordered segments; durations are exact so totals can be matched exactly."""

    __slots__ = ("_segments",)

    def __init__(self, segments: Iterable = ()):
        segs = []
        for s in segments:
            segs.append(s if isinstance(s, Segment) else Segment(*s))
        self._segments = tuple(segs)

    @classmethod
    def zero(cls, T) -> "ControlSchedule":
        return cls([Segment(T, H0Value(0, 0, 0))])

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    def __len__(self):
        return len(self._segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self._segments)

    def __getitem__(self, i):
        return self._segments[i]

    def __add__(self, other: "ControlSchedule") -> "ControlSchedule":
        return ControlSchedule(self._segments + tuple(other))

    def __eq__(self, other):
        return isinstance(other, ControlSchedule) and self._segments == other._segments

    def __repr__(self):
        return f"ControlSchedule({len(self)} segments, T={float(self.total_duration):.6g})"

    @property
    def total_duration(self) -> Fraction:
        return sum((s.dt for s in self._segments), Fraction(0))

    def boundaries(self) -> list[Fraction]:
        out, t = [Fraction(0)], Fraction(0)
        for s in self._segments:
            t += s.dt
            out.append(t)
        return out

    def merged(self) -> "ControlSchedule":
        """Join consecutive segments carrying equal values."""
        out: list[Segment] = []
        for s in self._segments:
            if out and out[-1].value.as_tuple() == s.value.as_tuple():
                out[-1] = Segment(out[-1].dt + s.dt, out[-1].value)
            else:
                out.append(s)
        return ControlSchedule(out)

    def to_json_list(self) -> list[dict]:
        return [
            {"dt": float(s.dt), "c0": float(s.value.c_const), "ccos": float(s.value.c_cos), "csin": float(s.value.c_sin)}
            for s in self._segments
        ]

    def dumps(self, **kwargs) -> str:
        return json.dumps(self.to_json_list(), **kwargs)

    @classmethod
    def from_json_list(cls, doc) -> "ControlSchedule":
        if not isinstance(doc, list):
            raise ValueError("schedule JSON must be a list of segments")
        segs = []
        for i, item in enumerate(doc):
            if not isinstance(item, dict) or set(item) != {"dt", "c0", "ccos", "csin"}:
                raise ValueError(f"segment {i} must have exactly the keys dt, c0, ccos, csin")
            segs.append(Segment(float(item["dt"]), H0Value(float(item["c0"]), float(item["ccos"]), float(item["csin"]))))
        return cls(segs)

    @classmethod
    def loads(cls, text: str) -> "ControlSchedule":
        return cls.from_json_list(json.loads(text))
