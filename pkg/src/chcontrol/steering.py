"""Synthesis of seed-space controls and the numerical probes that back it.

A level-1 move adds ``eta + sum drift(phi)`` to the state.  The shift by
``delta^-1/2 phi`` is produced physically: a short forced ramp lifts the state
by ``c q`` (``c = delta^-1/2``), the lifted state evolves freely so the
nonlinearity contributes ``drift(q)`` over a hold of length about ``delta``,
and a mirror ramp removes the lift.  Holding for ``delta - 2 t_ramp / 3``
accounts for the drift already produced while ramping.  By default each
``phi`` is split into four lifts ``+q, -q, -q, +q`` with ``q = phi / 2``: the
drifts add up to ``drift(phi)`` while the leading odd-order errors cancel.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .grid import GridField
from .saturation import H0Value, MoveNode, MovePlan, decompose, stage_nodes
from .schedule import ControlSchedule, Segment
from .solver import BlowUp, SolverConfig, SolverError, hs_norm, integrate, resolvent
from .trigpoly import (
    TrigPoly,
    drift,
    from_grid,
    helmholtz_inv,
    rationalize,
    tail_hs_norm,
    to_grid,
)

__all__ = [
    "MoveResult",
    "ProbeTable",
    "StageFailure",
    "StageRecord",
    "SteeringReport",
    "asymptotic_probe",
    "build_move",
    "concat_check",
    "elementary_move",
    "limit_target",
    "shift_check",
    "stability_probe",
    "step1_schedule",
    "synthesize_fixed_time",
    "synthesize_small_time",
]

PATTERNS = {
    "antithetic": ((1, Fraction(1, 2)), (-1, Fraction(1, 2)), (-1, Fraction(1, 2)), (1, Fraction(1, 2))),
    "plain": ((1, Fraction(1)),),
}
RAMP_FRACTION = Fraction(1, 20)
MAX_HALVINGS = 12
DEFAULT_DELTA = Fraction(1, 10)
ZERO = H0Value(0, 0, 0)


# -- reports ---------------------------------------------------------------------


@dataclass(frozen=True)
class StageRecord:
    description: str
    delta: float
    budget: float
    pre_error: float
    post_error: float
    duration: float
    trace: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "description": self.description,
            "delta": self.delta,
            "budget": self.budget,
            "pre_error": self.pre_error,
            "post_error": self.post_error,
            "duration": self.duration,
            "trace": [list(t) for t in self.trace],
        }


@dataclass
class SteeringReport:
    target: TrigPoly
    epsilon: float
    s: float
    stages: list[StageRecord] = field(default_factory=list)
    final_error: float = math.inf
    total_time: Fraction = Fraction(0)
    segments: int = 0
    loiters: int = 0

    def to_json_dict(self) -> dict:
        from .trigpoly import to_json_dict

        return {
            "target": to_json_dict(self.target),
            "epsilon": self.epsilon,
            "s": self.s,
            "final_error": self.final_error,
            "total_time": float(self.total_time),
            "total_time_exact": str(self.total_time),
            "segments": self.segments,
            "loiters": self.loiters,
            "stages": [st.to_json_dict() for st in self.stages],
        }

    def dumps(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "description", "delta", "budget", "pre_error", "post_error", "duration"])
        for i, st in enumerate(self.stages):
            w.writerow(
                [i, st.description]
                + [f"{v:.17g}" for v in (st.delta, st.budget, st.pre_error, st.post_error, st.duration)]
            )
        return buf.getvalue()


class StageFailure(RuntimeError):
    """A stage missed its error budget after every allowed halving of ``delta``."""

    def __init__(self, message: str, best_error: float, trace=(), report: SteeringReport | None = None):
        super().__init__(f"{message} (best error {best_error:.4g})")
        self.best_error = best_error
        self.trace = tuple(trace)
        self.report = report


class MoveResult(NamedTuple):
    schedule: ControlSchedule
    error: float
    delta: Fraction
    trace: tuple
    end_state: GridField


# -- exact limits and step 1 ---------------------------------------------------


def limit_target(u0: TrigPoly, phi: TrigPoly, eta0: TrigPoly) -> TrigPoly:
    """``u0 - phi phi_x + (1 - d_xx)^-1 (eta0 - 2 phi phi_x - phi_x phi_xx)``."""
    return u0 + drift(phi) + helmholtz_inv(eta0)


def step1_schedule(increment: TrigPoly | H0Value, t) -> ControlSchedule:
    """One segment of length ``t`` whose forcing adds ``increment`` as ``t -> 0``."""
    if not isinstance(increment, H0Value):
        increment = H0Value.from_trigpoly(increment)
    t = Fraction(t)
    if t <= 0:
        raise ValueError("step duration must be positive")
    return ControlSchedule([Segment(t, _floats(increment.helmholtz().scaled(1 / t)))])


def _floats(v: H0Value) -> H0Value:
    return H0Value(float(v.c_const), float(v.c_cos), float(v.c_sin))


# -- open-loop move construction ---------------------------------------------------


def _lift_rational(delta: Fraction, cap: int = 1000) -> Fraction:
    return Fraction(float(delta) ** -0.5).limit_denominator(cap)


def inner_delta(delta: Fraction) -> Fraction:
    """Time scale for lifts that are themselves steered by sub-plans.

    A lift by ``c q`` with ``c = delta^-1/2`` must land well inside the
    budget of the enclosing move, whose own error is ``O(delta)``.  The
    sub-moves act on a state of size ``delta^-1/2`` and their error grows with
    it, so they run on the finer scale ``delta^3``.
    """
    return delta**3


def _shift(q, c, delta: Fraction, pattern: str) -> ControlSchedule:
    """Move the state by ``c * q``: a forced ramp for seed values, a sub-plan otherwise."""
    if isinstance(q, H0Value):
        t_ramp = delta * RAMP_FRACTION
        return ControlSchedule([Segment(t_ramp, _floats(q.helmholtz().scaled(float(c) / t_ramp)))])
    sub = decompose(q * c)
    if sub.root is None:
        return ControlSchedule()
    return build_move(sub.root, inner_delta(delta), pattern)


def build_move(node, delta, pattern: str = "antithetic") -> ControlSchedule:
    """Open-loop schedule realizing ``node`` approximately for a given ``delta``.

    Seed values reduce to :func:`step1_schedule`.  A node whose ``eta`` is
    itself a node first executes that node; a seed-valued ``eta`` is applied
    during the first hold.
    """
    delta = Fraction(delta)
    if isinstance(node, H0Value):
        return ControlSchedule() if node.is_zero() else step1_schedule(node, delta)
    parts = ControlSchedule()
    eta = node.eta
    if isinstance(eta, MoveNode):
        parts = parts + build_move(eta, delta, pattern)
        eta = ZERO
    if not node.phis:
        return parts + build_move(eta, delta, pattern)
    t_ramp = delta * RAMP_FRACTION
    first = True
    for phi in node.phis:
        seed = isinstance(phi, H0Value)
        if seed:
            c = float(delta) ** -0.5
            hold = delta - 2 * t_ramp / 3
        else:
            c = _lift_rational(delta)
            hold = 1 / (c * c)
        for sign, weight in PATTERNS[pattern]:
            q = phi if seed else phi.realized
            hold_value = ZERO if (not first or eta.is_zero()) else _floats(eta.helmholtz().scaled(1 / hold))
            parts = parts + _shift(q.scaled(sign * weight) if seed else q * (sign * weight), c, delta, pattern)
            parts = parts + ControlSchedule([Segment(hold, hold_value)])
            parts = parts + _shift(q.scaled(-sign * weight) if seed else q * (-sign * weight), c, delta, pattern)
            first = False
    return parts


def _grid(obj, n: int) -> GridField:
    if isinstance(obj, GridField):
        return obj
    if isinstance(obj, H0Value):
        return GridField(obj.to_grid(n))
    return to_grid(obj, n)


def _end_state(state: GridField, schedule: ControlSchedule, cfg: SolverConfig) -> GridField:
    if len(schedule) == 0:
        return state
    return integrate(state, None, schedule, cfg=cfg).final


def elementary_move(
    state,
    node,
    delta=DEFAULT_DELTA,
    budget: float = 0.05,
    cfg: SolverConfig | None = None,
    *,
    s: float = 2.0,
    pattern: str = "antithetic",
    max_halvings: int = MAX_HALVINGS,
) -> MoveResult:
    """Realize ``state + node`` within ``budget`` in H^s, halving ``delta`` as needed.

    Every trial is verified by simulation; the trace records ``(delta, error)``
    per trial and a trial ending in blow-up counts as infinite error.
    """
    cfg = cfg or SolverConfig()
    state = _grid(state, cfg.n)
    target = state + _grid(node.realized, cfg.n)
    delta = Fraction(delta)
    trace = []
    best = None
    for _ in range(max_halvings + 1):
        sched = build_move(node, delta, pattern)
        try:
            end = _end_state(state, sched, cfg)
            err = hs_norm(end - target, s)
        except SolverError:
            end, err = None, math.inf
        trace.append((float(delta), err))
        if end is not None and (best is None or err < best.error):
            best = MoveResult(sched, err, delta, (), end)
        if err <= budget:
            return MoveResult(sched, err, delta, tuple(trace), end)
        delta /= 2
    raise StageFailure(
        f"move missed budget {budget:.4g} after {max_halvings} halvings",
        best.error if best else math.inf,
        trace,
    )


# -- synthesis -------------------------------------------------------------------


def _increment(u0: GridField, target: TrigPoly, eps: float, s: float, max_degree: int = 16) -> TrigPoly:
    """Rational ``target - u0`` truncated so the dropped tail is at most ``eps / 8``."""
    cap = max(1, (u0.n - 1) // 2)
    current, _ = rationalize(from_grid(u0, cap, band_tol=np.inf), s=s)
    inc = target - current
    for degree in range(0, min(inc.degree, max_degree) + 1):
        if tail_hs_norm(inc, degree, s) <= eps / 8:
            return inc.truncate(degree)
    return inc.truncate(max_degree)


def _describe(node) -> str:
    if isinstance(node, H0Value):
        return f"step1 {node.to_trigpoly()}"
    phis = ", ".join(str(p.realized) for p in node.phis)
    return f"level-{node.level} move phis=[{phis}] eta={node.eta.realized}"


def synthesize_small_time(
    u0,
    target: TrigPoly,
    eps: float,
    cfg: SolverConfig | None = None,
    *,
    s: float = 2.0,
    delta_start=DEFAULT_DELTA,
    pattern: str = "antithetic",
) -> tuple[ControlSchedule, SteeringReport]:
    """Steer ``u0`` to within ``eps`` of ``target`` by chaining verified moves.

    Stage ``i`` of ``N`` gets the budget ``0.75 eps 2^-(i+1) / (1 - 2^-N)``; the
    remaining quarter of ``eps`` covers truncation and accumulation.  The
    reported final error comes from one simulation of the whole schedule.
    """
    cfg = cfg or SolverConfig()
    if eps <= 0:
        raise ValueError("eps must be positive")
    u0 = _grid(u0, cfg.n)
    goal = to_grid(target, cfg.n)
    report = SteeringReport(target, eps, s)
    plan = decompose(_increment(u0, target, eps, s))
    stages = stage_nodes(plan)
    weights = [2.0 ** -(i + 1) for i in range(len(stages))]
    total_w = sum(weights)
    schedule = ControlSchedule()
    state = u0
    for node, w in zip(stages, weights):
        budget = 0.75 * eps * w / total_w
        pre = hs_norm(state - goal, s)
        try:
            res = elementary_move(state, node, delta_start, budget, cfg, s=s, pattern=pattern)
        except StageFailure as exc:
            report.stages.append(
                StageRecord(_describe(node), float("nan"), budget, pre, exc.best_error, 0.0, exc.trace)
            )
            exc.report = report
            raise
        schedule = schedule + res.schedule
        state = res.end_state
        report.stages.append(
            StageRecord(
                _describe(node),
                float(res.delta),
                budget,
                pre,
                hs_norm(state - goal, s),
                float(res.schedule.total_duration),
                res.trace,
            )
        )
    final = _end_state(u0, schedule, cfg)
    report.final_error = hs_norm(final - goal, s)
    report.total_time = schedule.total_duration
    report.segments = len(schedule)
    if report.final_error > eps:
        raise StageFailure(f"terminal error exceeds eps={eps:.4g}", report.final_error, report=report)
    return schedule, report


def _first_exit(state: GridField, goal: GridField, horizon: Fraction, level: float, s: float, cfg, samples: int = 64):
    """Earliest rational time in ``(0, horizon]`` where the free error reaches ``level``.

    Returns ``None`` when the error stays below ``level`` on every sample.
    The crossing is refined by bisection on the free trajectory.
    """
    traj = integrate(state, None, None, horizon, cfg, samples=samples)
    times = [Fraction(t) for t in traj.times]
    errs = [hs_norm(g - goal, s) for g in traj.snapshots]
    for i in range(1, len(times)):
        if errs[i] >= level:
            lo, hi = times[i - 1], times[i]
            base = traj.snapshots[i - 1]
            for _ in range(30):
                mid = (lo + hi) / 2
                e = hs_norm(resolvent(base, None, None, mid - times[i - 1], cfg) - goal, s)
                if e >= level:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < Fraction(1, 10**6):
                    break
            return lo
    return None


def synthesize_fixed_time(
    u0,
    target: TrigPoly,
    T,
    eps: float,
    cfg: SolverConfig | None = None,
    *,
    s: float = 2.0,
    delta_start=DEFAULT_DELTA,
    pattern: str = "antithetic",
    max_cycles: int = 200,
) -> tuple[ControlSchedule, SteeringReport]:
    """Reach the ``eps``-ball around ``target`` at exactly time ``T``.

    Steer to ``eps / 4`` in small time, then coast with zero control (loiter)
    until the free error reaches ``eps / 2``, and repeat.  The last loiter is
    cut at ``T`` so the durations sum to ``T`` exactly.  Steering is shrunk
    (smaller starting ``delta``) whenever it would not fit in the time left.

    Stage times are free, so when one steer and one loiter cannot fill ``T``
    the schedule starts with a zero-control pre-roll of the free flow from
    ``u0``.  This places the steer late and avoids re-steering against the
    high modes the free flow keeps generating near a non-stationary target.
    """
    cfg = cfg or SolverConfig()
    T = Fraction(T)
    if T <= 0 or eps <= 0:
        raise ValueError("T and eps must be positive")
    u0 = _grid(u0, cfg.n)
    goal = to_grid(target, cfg.n)
    report = SteeringReport(target, eps, s)
    schedule = ControlSchedule()
    state, t = u0, Fraction(0)
    delta_start = Fraction(delta_start)

    if hs_norm(u0 - goal, s) > eps / 4:
        dry, _ = _fit_steer(u0, target, eps / 4, T, cfg, s, delta_start, pattern)
        theta = dry.total_duration
        tau = _first_exit(_end_state(u0, dry, cfg), goal, T - theta, eps / 2, s, cfg)
        if tau is not None:
            idle = T - theta - tau / 2
            if idle > 0:
                pre = hs_norm(state - goal, s)
                schedule = schedule + ControlSchedule.zero(idle)
                state = resolvent(state, None, None, idle, cfg)
                t = idle
                report.stages.append(StageRecord("pre-roll", float(idle), math.inf, pre, hs_norm(state - goal, s), float(idle)))

    for _ in range(max_cycles):
        remaining = T - t
        if remaining <= 0:
            break
        if hs_norm(state - goal, s) > eps / 4:
            sched, sub = _fit_steer(state, target, eps / 4, remaining, cfg, s, delta_start, pattern)
            report.stages.extend(sub.stages)
            schedule = schedule + sched
            t += sched.total_duration
            state = _end_state(state, sched, cfg)
            remaining = T - t
            if remaining <= 0:
                break
        tau = _first_exit(state, goal, remaining, eps / 2, s, cfg)
        if tau is None:
            tau = remaining
        if tau < remaining and tau < Fraction(cfg.dt_max):
            raise StageFailure(
                f"loiter collapsed to {float(tau):.3g} (below dt_max)", hs_norm(state - goal, s), report=report
            )
        pre = hs_norm(state - goal, s)
        schedule = schedule + ControlSchedule.zero(tau)
        state = resolvent(state, None, None, tau, cfg)
        t += tau
        report.loiters += 1
        report.stages.append(StageRecord("loiter", float(tau), eps / 2, pre, hs_norm(state - goal, s), float(tau)))
    else:
        raise StageFailure("cycle limit reached before T", hs_norm(state - goal, s), report=report)
    final = _end_state(u0, schedule, cfg)
    report.final_error = hs_norm(final - goal, s)
    report.total_time = schedule.total_duration
    report.segments = len(schedule)
    if report.total_time != T:
        raise AssertionError("schedule duration does not match T")
    if report.final_error > eps:
        raise StageFailure(f"terminal error exceeds eps={eps:.4g}", report.final_error, report=report)
    return schedule, report


def _fit_steer(state, target, eps, window: Fraction, cfg, s, delta_start: Fraction, pattern):
    """Small-time steering whose schedule fits into ``window``."""
    delta = delta_start
    for _ in range(MAX_HALVINGS):
        sched, rep = synthesize_small_time(state, target, eps, cfg, s=s, delta_start=delta, pattern=pattern)
        if sched.total_duration <= window:
            return sched, rep
        # durations scale linearly with delta
        shrink = window / sched.total_duration
        delta = min(delta / 2, delta * shrink * Fraction(9, 10))
    raise StageFailure("steering cannot be compressed into the remaining time", math.inf)


# -- probes ----------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeTable:
    rows: tuple  # (delta, error)
    order: float
    limit: TrigPoly
    s: float

    @property
    def errors(self) -> list[float]:
        return [e for _, e in self.rows]

    def monotone(self) -> bool:
        e = self.errors
        return all(b < a for a, b in zip(e, e[1:]))

    def to_json_dict(self) -> dict:
        from .trigpoly import to_json_dict

        return {
            "s": self.s,
            "order": self.order,
            "limit": to_json_dict(self.limit),
            "rows": [{"delta": d, "error": e if math.isfinite(e) else None} for d, e in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "error"])
        for d, e in self.rows:
            w.writerow([f"{d:.17g}", f"{e:.17g}"])
        return buf.getvalue()


def fit_order(deltas: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log error`` against ``log delta`` over finite rows."""
    pts = [(math.log(d), math.log(e)) for d, e in zip(deltas, errors) if math.isfinite(e) and e > 0]
    if len(pts) < 2:
        return math.nan
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def asymptotic_probe(u0: TrigPoly, phi: TrigPoly, eta0: TrigPoly, deltas, s: float = 2.0, cfg: SolverConfig | None = None, jobs: int = 1) -> ProbeTable:
    """Errors of ``R_delta(u0, delta^-1/2 phi, delta^-1 eta0)`` against the exact limit."""
    cfg = cfg or SolverConfig()
    deltas = [float(d) for d in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    limit = limit_target(u0, phi, eta0)
    goal = to_grid(limit, cfg.n)
    phi_g, eta_g = to_grid(phi, cfg.n).values, to_grid(eta0, cfg.n).values
    u0_g = to_grid(u0, cfg.n)

    def run(d: float) -> float:
        try:
            end = resolvent(u0_g, d**-0.5 * phi_g, eta_g / d, d, cfg)
        except BlowUp:
            return math.inf
        return hs_norm(end - goal, s)

    errors = _map(run, deltas, jobs)
    return ProbeTable(tuple(zip(deltas, errors)), fit_order(deltas, errors), limit, s)


def _map(fn, items, jobs: int):
    if jobs and jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def stability_probe(u0, sizes, t, cfg: SolverConfig | None = None, *, s: float = 2.0, direction=None, jobs: int = 1) -> list[tuple[float, float]]:
    """``(|h|, |R_t(u0 + h) - R_t(u0)| / |h|)`` rows; ``h = 0`` is skipped.

    ``direction`` defaults to ``cos x + sin 2x`` normalized in H^s.
    """
    cfg = cfg or SolverConfig()
    base = _grid(u0, cfg.n)
    if direction is None:
        direction = TrigPoly.cos(1) + TrigPoly.sin(2)
    d = _grid(direction, cfg.n)
    d = d * (1 / hs_norm(d, s))
    ref = resolvent(base, None, None, t, cfg)

    def run(h: float):
        pert = resolvent(base + d * h, None, None, t, cfg)
        return abs(h), hs_norm(pert - ref, s) / abs(h)

    return _map(run, [h for h in sizes if h != 0], jobs)


def concat_check(u0, eta1, eta2, eta3, t1, t2, t3, cfg: SolverConfig | None = None) -> float:
    """Max-abs gap between one run over three segments and three nested runs."""
    cfg = cfg or SolverConfig()
    etas = [e if isinstance(e, H0Value) else H0Value.from_trigpoly(e) for e in (eta1, eta2, eta3)]
    durations = [Fraction(t) for t in (t1, t2, t3)]
    sched = ControlSchedule([Segment(dt, e) for dt, e in zip(durations, etas)])
    single = integrate(u0, None, sched, cfg=cfg).final
    nested = _grid(u0, cfg.n)
    for dt, e in zip(durations, etas):
        nested = resolvent(nested, None, e, dt, cfg)
    return float(np.max(np.abs(single.values - nested.values)))


def shift_check(u0, phi, eta, t, cfg: SolverConfig | None = None) -> float:
    """Max-abs gap in ``R_t(u0, phi, eta) = R_t(u0 + phi, 0, eta) - phi``."""
    cfg = cfg or SolverConfig()
    u0 = _grid(u0, cfg.n)
    phi = _grid(phi, cfg.n)
    lhs = resolvent(u0, phi, eta, t, cfg)
    rhs_ = resolvent(u0 + phi, None, eta, t, cfg) - phi
    return float(np.max(np.abs(lhs.values - rhs_.values)))


def check_tolerance(cfg: SolverConfig, scale: float) -> float:
    """Ten times the integrator tolerance at solution magnitude ``scale``."""
    return 10 * (cfg.atol + cfg.rtol * scale)
