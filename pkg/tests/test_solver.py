import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chcontrol.grid import GridField
from chcontrol.saturation import H0Value
from chcontrol.schedule import ControlSchedule, Segment
from chcontrol.solver import (
    BlowUp,
    SolverConfig,
    Trajectory,
    available_backends,
    hs_norm,
    integrate,
    invariants,
    resolvent,
    rhs,
)
from chcontrol.steering import check_tolerance, concat_check, shift_check
from chcontrol.trigpoly import TrigPoly, helmholtz_inv, parse_trigpoly, to_grid

S, C = TrigPoly.sin, TrigPoly.cos


def reference_rhs(u, phi, f, kappa):
    """Direct numpy transcription of the controlled equation, no dealiasing."""
    n = u.shape[0]
    k = np.fft.rfftfreq(n, 1 / n)
    d = lambda v, m=1: np.fft.irfft((1j * k) ** m * np.fft.rfft(v), n)
    inv = lambda v: np.fft.irfft(np.fft.rfft(v) / (1 + k**2), n)
    U = u + phi
    return -2 * kappa * inv(d(U)) - U * d(U) - inv(2 * U * d(U) + d(U) * d(U, 2)) + f


def test_rhs_examples():
    cfg = SolverConfig(n=32)
    assert np.all(rhs(GridField.zeros(32), cfg=cfg).values == 0)
    assert np.allclose(rhs(GridField.constant(32, 0.7), cfg=cfg).values, 0, atol=1e-15)
    f = to_grid(helmholtz_inv(S(1)), 32)
    assert np.allclose(rhs(GridField.zeros(32), None, f, cfg).values, to_grid(S(1, Fraction(1, 2)), 32).values, atol=1e-15)


@pytest.mark.parametrize("backend", available_backends())
def test_rhs_matches_reference(backend):
    n = 64
    cfg = SolverConfig(n=n, backend=backend, kappa=0.3)
    u = to_grid(parse_trigpoly("0.3*sin(x) - 0.2*cos(3x) + 0.1"), n).values
    phi = to_grid(parse_trigpoly("0.5*cos(x) + 0.25*sin(2x)"), n).values
    f = to_grid(parse_trigpoly("cos(2x)"), n).values
    assert np.allclose(rhs(u, phi, f, cfg).values, reference_rhs(u, phi, f, 0.3), atol=1e-13)


def test_zero_state_stays_zero():
    traj = integrate(GridField.zeros(64), None, ControlSchedule.zero(1), None, SolverConfig(n=64), samples=3)
    assert all(np.all(g.values == 0) for g in traj.snapshots)
    assert len(traj.times) == 5


def test_constants_are_steady():
    cfg = SolverConfig(n=32)
    end = resolvent(GridField.constant(32, 1.5), None, None, 2, cfg)
    assert np.allclose(end.values, 1.5, atol=1e-14)


def test_conservation():
    cfg = SolverConfig(n=256, rtol=1e-10, atol=1e-12)
    traj = integrate(to_grid(S(1, Fraction(1, 10)), 256), None, None, 1, cfg)
    assert abs(traj.means[-1] - traj.means[0]) < 1e-10
    assert abs(traj.energies[-1] / traj.energies[0] - 1) < 1e-8


def test_backends_agree():
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend not built")
    u0 = to_grid(parse_trigpoly("0.2*sin(x) + 0.1*cos(2x)"), 64)
    sched = ControlSchedule([Segment(Fraction(1, 4), H0Value(0.1, 0.5, -0.3)), Segment(Fraction(1, 2), H0Value())])
    ends = [integrate(u0, S(1, Fraction(1, 5)), sched, None, SolverConfig(n=64, backend=b)).final.values for b in backends]
    assert np.max(np.abs(ends[0] - ends[1])) < 1e-13


def test_blowup_is_raised():
    cfg = SolverConfig(n=32, blowup_cap=5.0)
    with pytest.raises(BlowUp) as info:
        resolvent(to_grid(S(1, 3), 32), None, None, 1, cfg)
    assert info.value.norm > 5.0


def test_shift_identity_examples():
    cfg = SolverConfig(n=64)
    d = shift_check(S(1, Fraction(1, 10)), C(1, Fraction(1, 5)), H0Value(0, 0.1, 0), 0.5, cfg)
    assert d <= check_tolerance(cfg, 1.0)


def test_concat_examples():
    cfg = SolverConfig(n=64)
    u0 = S(1, Fraction(1, 10))
    z = H0Value()
    assert concat_check(u0, z, z, z, Fraction(1, 4), Fraction(1, 4), Fraction(1, 4), cfg) <= check_tolerance(cfg, 1.0)
    v = H0Value(0, 0.3, 0)
    assert concat_check(u0, v, v, z, Fraction(1, 4), Fraction(1, 4), Fraction(1, 100), cfg) <= check_tolerance(cfg, 1.0)


@settings(max_examples=10)
@given(
    st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
    st.lists(st.integers(10, 300), min_size=3, max_size=3),
)
def test_concat_random(vals, ms):
    cfg = SolverConfig(n=32)
    etas = [H0Value(v, -v, v / 2) for v in vals]
    ts = [Fraction(m, 1000) for m in ms]
    assert concat_check(S(1, Fraction(1, 10)), *etas, *ts, cfg) <= check_tolerance(cfg, 1.0)


def test_spectral_convergence():
    # broad-spectrum data over a horizon short enough that it stays smooth;
    # by t = 0.5 this profile steepens and no grid below 256 resolves it
    p = parse_trigpoly("0.6*sin(x) + 0.4*cos(2x) - 0.3*sin(3x)")
    cfg = SolverConfig(n=256, rtol=1e-11, atol=1e-13)
    ref = resolvent(to_grid(p, 256), None, None, 0.1, cfg).values
    errs = []
    for n in (16, 32, 64, 128):
        end = resolvent(to_grid(p, n), None, None, 0.1, cfg.replace(n=n)).values
        errs.append(np.max(np.abs(end - ref[:: 256 // n])))
    # each doubling gains at least a factor 40, faster than any fixed order
    assert all(b < a / 40 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-10


def test_tolerance_refinement():
    u0 = to_grid(parse_trigpoly("0.3*sin(x) + 0.1*cos(2x)"), 64)
    loose = SolverConfig(n=64, rtol=1e-8, atol=1e-10)
    a = integrate(u0, None, None, 1, loose)
    b = integrate(u0, None, None, 1, loose.replace(rtol=5e-9, atol=5e-11))
    assert np.max(np.abs(a.final.values - b.final.values)) <= check_tolerance(loose, 1.0)


def test_sample_times():
    traj = integrate(GridField.zeros(32), None, None, 1, SolverConfig(n=32), samples=[0.25, 0.5, 2.0])
    assert traj.times == [0.0, 0.25, 0.5, 1.0]


def test_norms_and_invariants():
    assert hs_norm(to_grid(S(1), 32), 1) == pytest.approx(1.0, abs=1e-14)
    mean, energy = invariants(to_grid(S(1), 32))
    assert mean == pytest.approx(0, abs=1e-14) and energy == pytest.approx(2 * math.pi)
    mean, energy = invariants(GridField.constant(32, 3.0))
    assert mean == pytest.approx(6 * math.pi) and energy == pytest.approx(18 * math.pi)


def test_trajectory_outputs():
    traj = integrate(to_grid(S(1, Fraction(1, 10)), 32), None, None, 0.5, SolverConfig(n=32), samples=2)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,mean,energy,hs_norm" and len(lines) == 5
    back = Trajectory.read_snapshots(traj.snapshot_bytes())
    assert len(back) == 4
    assert all(np.array_equal(a, g.values) for a, g in zip(back, traj.snapshots))


def test_config_validation_and_json():
    for bad in ({"n": 12}, {"n": 48}, {"rtol": 0}, {"dt_min": 1.0}, {"s_monitor": 1.0}, {"backend": "fortran"}):
        with pytest.raises((ValueError, KeyError)):
            SolverConfig(**bad)
    cfg = SolverConfig(n=64, rtol=1e-9)
    assert SolverConfig.from_json_dict(cfg.to_json_dict()) == cfg
    with pytest.raises(ValueError):
        SolverConfig.from_json_dict({"n": 64, "colour": 1})


def test_grid_field():
    with pytest.raises(ValueError):
        GridField(np.array([1.0, np.inf, 0, 0]))
    g = GridField.constant(8, 2.0)
    with pytest.raises(ValueError):
        g.values[0] = 1
    assert (g - g).max_abs() == 0 and (g * 2).max_abs() == 4


def test_backend_selection_by_environment():
    import os
    import subprocess
    import sys

    code = (
        "from chcontrol import solver; "
        "print(solver.BACKEND, solver.integrate([0.0] * 16, t_span=0.1, cfg=solver.SolverConfig(n=16)).backend)"
    )
    env = dict(os.environ, CHCONTROL_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    assert out == ["python", "python"]
