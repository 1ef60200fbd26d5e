"""Fourier pseudospectral integrator for the controlled Camassa-Holm equation.

The state evolves in the inverted form

    u_t = -2 kappa L dU - U U_x - L[2 U U_x + U_x U_xx] + f,   U = u + phi,

with ``L = (1 - d_xx)^-1``; ``f = L eta`` for a seed-space control ``eta``.
The stepping kernel comes from the compiled extension when it is importable
and from a numpy implementation otherwise; set ``CHCONTROL_BACKEND=python``
to force the latter.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..grid import GridField
from ..saturation import H0Value
from ..schedule import ControlSchedule, Segment
from ..trigpoly import TrigPoly, helmholtz_inv, to_grid
from . import _fallback

__all__ = [
    "BACKEND",
    "BlowUp",
    "NonFiniteError",
    "SolverConfig",
    "SolverError",
    "StepFailure",
    "Trajectory",
    "available_backends",
    "get_backend",
    "hs_norm",
    "integrate",
    "invariants",
    "resolvent",
    "rhs",
]


def _load_backends() -> dict:
    found = {"python": _fallback}
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        found["cython"] = _core
    return found


_BACKENDS = _load_backends()
_requested = os.environ.get("CHCONTROL_BACKEND", "").strip().lower()
if _requested and _requested not in _BACKENDS:
    _requested = ""
BACKEND = _requested or ("cython" if "cython" in _BACKENDS else "python")


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str | None = None):
    name = name or BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} is not available (have {available_backends()})")
    return _BACKENDS[name]


class SolverError(RuntimeError):
    pass


class BlowUp(SolverError):
    """The monitored Sobolev norm exceeded ``blowup_cap``."""

    def __init__(self, t: float, norm: float):
        super().__init__(f"H^s norm {norm:.6g} exceeded the cap at t={t:.6g}")
        self.t = t
        self.norm = norm


class StepFailure(SolverError):
    def __init__(self, t: float, dt: float):
        super().__init__(f"step size {dt:.3e} fell below dt_min at t={t:.6g}")
        self.t = t
        self.dt = dt


class NonFiniteError(SolverError):
    def __init__(self, t: float):
        super().__init__(f"non-finite state encountered at t={t:.6g}")
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    n: int = 128
    kappa: float = 0.5
    dealias: bool = True
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_max: float = 0.05
    dt_min: float = 1e-12
    blowup_cap: float = 1e3
    s_monitor: float = 2.0
    backend: str | None = None

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n!r}")
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")
        for name in ("rtol", "atol", "dt_max", "dt_min", "blowup_cap"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if self.dt_min >= self.dt_max:
            raise ValueError("dt_min must be below dt_max")
        if not self.s_monitor > 1.5:
            raise ValueError("s_monitor must exceed 3/2")
        if self.backend is not None:
            get_backend(self.backend)

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SolverConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**doc)

    @property
    def tolerance(self) -> float:
        """Nominal absolute accuracy scale used by the 10x-tolerance checks."""
        return self.atol + self.rtol


# -- norms and invariants ------------------------------------------------------


def _values(g) -> np.ndarray:
    return g.values if isinstance(g, GridField) else np.asarray(g, dtype=np.float64)


def hs_norm(g, s: float = 2.0) -> float:
    """Sobolev norm ``sqrt(sum (1+k^2)^s |c_k|^2)`` over the DFT coefficients."""
    v = _values(g)
    n = v.shape[0]
    c = np.fft.rfft(v) / n
    k = np.arange(c.shape[0], dtype=np.float64)
    w = (1.0 + k**2) ** s * np.abs(c) ** 2
    w[1:] *= 2.0
    if n % 2 == 0:
        w[-1] *= 0.5
    return float(np.sqrt(np.sum(w)))


def invariants(g) -> tuple[float, float]:
    """``(int u, int u^2 + u_x^2)`` over one period, by spectral quadrature."""
    v = _values(g)
    n = v.shape[0]
    mean = 2 * np.pi * float(np.mean(v))
    return mean, 2 * np.pi * hs_norm(v, 1.0) ** 2


# -- field coercion ------------------------------------------------------------


def _field(obj, n: int, name: str) -> np.ndarray:
    if obj is None:
        return np.zeros(n)
    if isinstance(obj, GridField):
        if obj.n != n:
            raise ValueError(f"{name} has grid size {obj.n}, expected {n}")
        return obj.values
    if isinstance(obj, H0Value):
        return obj.to_grid(n)
    if isinstance(obj, TrigPoly):
        return to_grid(obj, n).values
    arr = np.asarray(obj, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},)")
    return arr


def _forcing(eta, n: int) -> np.ndarray:
    """``f = (1 - d_xx)^-1 eta`` on the grid for a seed value or polynomial."""
    if eta is None:
        return np.zeros(n)
    if isinstance(eta, H0Value):
        return H0Value(float(eta.c_const), float(eta.c_cos) / 2, float(eta.c_sin) / 2).to_grid(n)
    if isinstance(eta, TrigPoly):
        return to_grid(helmholtz_inv(eta), n).values
    v = _values(eta)
    c = np.fft.rfft(v)
    k = np.arange(c.shape[0], dtype=np.float64)
    return np.fft.irfft(c / (1 + k**2), n)


def rhs(u, phi=None, f=None, cfg: SolverConfig | None = None) -> GridField:
    """Evaluate the right-hand side with forcing ``f`` already smoothed."""
    cfg = cfg or SolverConfig(n=_values(u).shape[0])
    v = _values(u)
    n = v.shape[0]
    out = get_backend(cfg.backend).rhs(v, _field(phi, n, "phi"), _field(f, n, "f"), cfg.kappa, cfg.dealias)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(0.0)
    return GridField(out)


# -- trajectories ----------------------------------------------------------------


@dataclass
class Trajectory:
    times: list[float]
    snapshots: list[GridField]
    hs_norms: list[float]
    means: list[float]
    energies: list[float]
    s: float = 2.0
    error_estimate: float = 0.0
    steps: int = 0
    rejected: int = 0
    backend: str = ""

    @property
    def final(self) -> GridField:
        return self.snapshots[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean", "energy", "hs_norm"])
        for row in zip(self.times, self.means, self.energies, self.hs_norms):
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()

    def snapshot_bytes(self) -> bytes:
        """Per snapshot: ``n`` as little-endian int64, then ``n`` float64 samples."""
        parts = []
        for g in self.snapshots:
            parts.append(struct.pack("<q", g.n))
            parts.append(np.asarray(g.values, dtype="<f8").tobytes())
        return b"".join(parts)

    @staticmethod
    def read_snapshots(data: bytes) -> list[np.ndarray]:
        out, pos = [], 0
        while pos < len(data):
            (n,) = struct.unpack_from("<q", data, pos)
            pos += 8
            out.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).copy())
            pos += 8 * n
        return out


def _record(traj: Trajectory, t: float, v: np.ndarray):
    traj.times.append(t)
    traj.snapshots.append(GridField(v))
    traj.hs_norms.append(hs_norm(v, traj.s))
    mean, energy = invariants(v)
    traj.means.append(mean)
    traj.energies.append(energy)


def _segments(schedule, t_end: Fraction) -> list[tuple[Fraction, H0Value | None]]:
    """Schedule segments clipped to ``t_end``; zero control past the schedule."""
    out, t = [], Fraction(0)
    for seg in schedule or ():
        if t >= t_end:
            break
        dt = min(seg.dt, t_end - t)
        out.append((dt, seg.value))
        t += dt
    if t < t_end:
        out.append((t_end - t, None))
    return out


def _run_segment(kernel, y, phi, f, dt, dt_hint, cfg: SolverConfig, t0: float):
    y, status, t_reached, dt_hint, err, steps, rej, norm = kernel.integrate_segment(
        y, phi, f, float(dt), dt_hint, cfg.rtol, cfg.atol, cfg.dt_max, cfg.dt_min,
        cfg.kappa, cfg.dealias, cfg.blowup_cap, cfg.s_monitor,
    )
    now = t0 + t_reached
    if status == _fallback.BLOWUP:
        raise BlowUp(now, norm)
    if status == _fallback.STEP_FAILURE:
        raise StepFailure(now, dt_hint)
    if status == _fallback.NONFINITE:
        raise NonFiniteError(now)
    return y, dt_hint, err, steps, rej


def integrate(
    u0,
    phi=None,
    schedule: ControlSchedule | None = None,
    t_span=None,
    cfg: SolverConfig | None = None,
    samples: int | Sequence[float] | None = None,
) -> Trajectory:
    """Integrate from ``t = 0`` through a piecewise-constant control.

    ``t_span`` is the final time (or a ``(0, T)`` pair); it defaults to the
    schedule's duration.  Each segment boundary is a hard restart of the
    stepper.  ``samples`` adds output times, either a count of uniformly
    spaced interior points or explicit times; output times are also stops.
    """
    cfg = cfg or SolverConfig()
    n = cfg.n
    v0 = _field(u0, n, "u0").copy()
    if not np.all(np.isfinite(v0)):
        raise ValueError("initial state must be finite")
    phi_v = _field(phi, n, "phi")
    if t_span is None:
        t_end = schedule.total_duration if schedule is not None else Fraction(0)
    elif isinstance(t_span, (tuple, list)):
        t0, t1 = t_span
        if t0 != 0:
            raise ValueError("integration starts at t = 0")
        t_end = Fraction(t1)
    else:
        t_end = Fraction(t_span)
    if t_end < 0:
        raise ValueError("final time must be non-negative")

    if samples is None:
        sample_times: list[Fraction] = []
    elif isinstance(samples, int):
        sample_times = [t_end * Fraction(i, samples + 1) for i in range(1, samples + 1)]
    else:
        sample_times = sorted(Fraction(float(t)) for t in samples if 0 < float(t) < t_end)

    kernel = get_backend(cfg.backend)
    traj = Trajectory([], [], [], [], [], s=cfg.s_monitor, backend=kernel.NAME)
    _record(traj, 0.0, v0)

    # split segments further at sample times
    pieces: list[tuple[Fraction, H0Value | None, bool]] = []
    t = Fraction(0)
    pending = list(sample_times)
    for dt, value in _segments(schedule, t_end):
        end = t + dt
        while pending and pending[0] <= t:
            pending.pop(0)
        while pending and pending[0] < end:
            pieces.append((pending[0] - t, value, True))
            t = pending.pop(0)
        pieces.append((end - t, value, False))
        t = end

    y, t, dt_hint = v0, Fraction(0), 0.0
    forcing_cache: dict = {}
    for dt, value, is_sample in pieces:
        if dt <= 0:
            continue
        key = None if value is None else value.as_tuple()
        if key not in forcing_cache:
            forcing_cache[key] = _forcing(value, n)
        y, dt_hint, err, steps, rej = _run_segment(kernel, y, phi_v, forcing_cache[key], dt, dt_hint, cfg, float(t))
        traj.error_estimate += err
        traj.steps += steps
        traj.rejected += rej
        t += dt
        if is_sample or t == t_end:
            _record(traj, float(t), y)
    return traj


def resolvent(u0, phi=None, eta=None, t=1.0, cfg: SolverConfig | None = None) -> GridField:
    """``R_t(u0, phi, eta)``: terminal state under constant shift and control.

    ``eta`` may be a seed value, a polynomial or a grid field; it enters as
    the forcing ``(1 - d_xx)^-1 eta``.
    """
    cfg = cfg or SolverConfig()
    t = Fraction(t)
    v0 = _field(u0, cfg.n, "u0").copy()
    if t == 0:
        return GridField(v0)
    kernel = get_backend(cfg.backend)
    y, *_ = _run_segment(kernel, v0, _field(phi, cfg.n, "phi"), _forcing(eta, cfg.n), t, 0.0, cfg, 0.0)
    return GridField(y)
