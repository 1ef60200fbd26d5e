"""Sampled periodic fields on the uniform grid ``x_j = 2 pi j / n``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GridField:
    """Real samples of a periodic function; the array is stored read-only.

    ``n`` must be an even power of two.  The solver additionally requires
    ``n >= 16`` (checked by :class:`~chcontrol.solver.SolverConfig`).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1:
            raise ValueError("GridField values must be one-dimensional")
        n = v.shape[0]
        if n < 2 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two, got {n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("GridField values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n) / self.n

    @classmethod
    def zeros(cls, n: int) -> "GridField":
        return cls(np.zeros(n))

    @classmethod
    def constant(cls, n: int, c: float) -> "GridField":
        return cls(np.full(n, float(c)))

    def _check(self, other: "GridField"):
        if other.n != self.n:
            raise ValueError(f"grid size mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        if isinstance(other, GridField):
            self._check(other)
            return GridField(self.values + other.values)
        return GridField(self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            self._check(other)
            return GridField(self.values - other.values)
        return GridField(self.values - other)

    def __neg__(self):
        return GridField(-self.values)

    def __mul__(self, c):
        return GridField(self.values * float(c))

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"GridField(n={self.n}, max|u|={self.max_abs():.3g})"
