"""Command-line entry point: ``chcontrol <command> [--config PATH] [--set K=V ...]``.

Exit codes: 0 success, 1 usage or configuration error, 2 solver blow-up,
3 certificate, steering or acceptance failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import trigpoly
from .saturation import CertificateError, certificates_csv, certify_basis, decompose
from .schedule import ControlSchedule
from .solver import BlowUp, SolverConfig, SolverError, integrate
from .steering import StageFailure, asymptotic_probe, synthesize_fixed_time, synthesize_small_time

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_FAILURE = 0, 1, 2, 3
MAX_SATURATION_M = 12


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict] = {
    "simulate": {
        "solver": {},
        "initial": "0",
        "phi": None,
        "schedule": None,
        "T": 1,
        "samples": 10,
        "snapshots": False,
    },
    "saturate": {"max_m": 8},
    "probe-limit": {
        "solver": {"rtol": 1e-10, "atol": 1e-12},
        "u0": "0",
        "phi": "0",
        "eta0": "cos(x)",
        "deltas": [0.1, 0.03, 0.01, 0.003, 0.001],
        "s": 2.0,
    },
    "steer": {
        "solver": {},
        "u0": "0",
        "target": "0.1*sin(2x)",
        "eps": 0.05,
        "T": None,
        "s": 2.0,
        "delta_start": "1/10",
        "pattern": "antithetic",
    },
    "verify": {"criteria": None},
}


# -- configuration -------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = _parse_value(raw)


def load_config(command: str, path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        cfg.update(doc)
    for item in overrides:
        apply_override(cfg, item)
    unknown = set(cfg) - set(DEFAULTS[command])
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    return cfg


def _solver(cfg: dict) -> SolverConfig:
    doc = cfg.get("solver") or {}
    if not isinstance(doc, dict):
        raise ConfigError("solver must be an object")
    try:
        return SolverConfig.from_json_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver config: {exc}") from exc


def _poly(value, name: str) -> trigpoly.TrigPoly:
    try:
        if isinstance(value, (int, float)):
            return trigpoly.TrigPoly.const(trigpoly.as_rational(str(value)))
        if isinstance(value, str):
            return trigpoly.parse_trigpoly(value)
        if isinstance(value, dict):
            return trigpoly.from_json_dict(value)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid {name}: {exc}") from exc
    raise ConfigError(f"{name} must be an inline expression or a polynomial JSON object")


def _fraction(value, name: str) -> Fraction:
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid {name}: {value!r}") from exc


def _positive_float(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not v > 0:
        raise ConfigError(f"{name} must be positive")
    return v


def _write(out: Path, name: str, text: str | bytes) -> Path:
    path = out / name
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text)
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands ------------------------------------------------------------------


def cmd_simulate(cfg: dict, out: Path, args) -> int:
    solver = _solver(cfg)
    u0 = _poly(cfg["initial"], "initial")
    phi = None if cfg["phi"] is None else _poly(cfg["phi"], "phi")
    schedule = None
    if cfg["schedule"] is not None:
        try:
            if isinstance(cfg["schedule"], list):
                schedule = ControlSchedule.from_json_list(cfg["schedule"])
            else:
                schedule = ControlSchedule.loads(Path(cfg["schedule"]).read_text())
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid schedule: {exc}") from exc
    T = _fraction(cfg["T"], "T")
    if T <= 0:
        raise ConfigError("T must be positive")
    samples = cfg["samples"]
    if not isinstance(samples, int) or samples < 0:
        raise ConfigError("samples must be a non-negative integer")
    if 2 * max(u0.degree, phi.degree if phi else 0) >= solver.n:
        raise ConfigError("initial data is not resolved by the grid")
    try:
        traj = integrate(u0, phi, schedule, T, solver, samples=samples)
    except BlowUp as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    _write(out, "trajectory.csv", traj.to_csv())
    m0, e0 = traj.means[0], traj.energies[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mean", "energy", "mean_drift", "energy_drift"])
    for t, m, e in zip(traj.times, traj.means, traj.energies):
        w.writerow([f"{v:.17g}" for v in (t, m, e, m - m0, (e - e0) / e0 if e0 else e - e0)])
    _write(out, "invariants.csv", buf.getvalue())
    if cfg["snapshots"]:
        _write(out, "snapshots.bin", traj.snapshot_bytes())
    drift = abs(traj.energies[-1] - e0) / e0 if e0 else abs(traj.energies[-1])
    print(f"simulated to T={float(T):g} in {traj.steps} steps; relative energy drift {drift:.3e}")
    return EXIT_OK


def cmd_saturate(cfg: dict, out: Path, args) -> int:
    m = cfg["max_m"]
    if not isinstance(m, int) or m < 1:
        raise ConfigError("max_m must be a positive integer")
    if m > MAX_SATURATION_M:
        raise ConfigError(f"max_m={m} exceeds the cap of {MAX_SATURATION_M}")
    try:
        rows = certify_basis(m)
    except CertificateError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    _write(out, "certificates.csv", certificates_csv(rows))
    print(f"{sum(not r.trivial for r in rows)} certificates verified exactly for m <= {m}")
    return EXIT_OK


def cmd_probe_limit(cfg: dict, out: Path, args) -> int:
    solver = _solver(cfg)
    deltas = cfg["deltas"]
    if not isinstance(deltas, list) or not deltas:
        raise ConfigError("deltas must be a non-empty list")
    try:
        table = asymptotic_probe(
            _poly(cfg["u0"], "u0"),
            _poly(cfg["phi"], "phi"),
            _poly(cfg["eta0"], "eta0"),
            [float(d) for d in deltas],
            float(cfg["s"]),
            solver,
            jobs=args.jobs,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    _write(out, "probe.json", _json(table.to_json_dict()))
    _write(out, "probe.csv", table.to_csv())
    print(f"limit {table.limit}; fitted order {table.order:.4f}")
    return EXIT_OK


def cmd_steer(cfg: dict, out: Path, args) -> int:
    solver = _solver(cfg)
    u0 = _poly(cfg["u0"], "u0")
    target = _poly(cfg["target"], "target")
    eps = _positive_float(cfg["eps"], "eps")
    delta = _fraction(cfg["delta_start"], "delta_start")
    if cfg["pattern"] not in ("antithetic", "plain"):
        raise ConfigError("pattern must be 'antithetic' or 'plain'")
    if 2 * max(u0.degree, target.degree) >= solver.n:
        raise ConfigError("data is not resolved by the grid")
    start = trigpoly.to_grid(u0, solver.n)
    kwargs = dict(s=float(cfg["s"]), delta_start=delta, pattern=cfg["pattern"])
    _write(out, "plan.json", _json(decompose(target - u0).to_json_dict()))
    try:
        if cfg["T"] is None:
            sched, report = synthesize_small_time(start, target, eps, solver, **kwargs)
        else:
            T = _fraction(cfg["T"], "T")
            if T <= 0:
                raise ConfigError("T must be positive")
            sched, report = synthesize_fixed_time(start, target, T, eps, solver, **kwargs)
    except StageFailure as exc:
        if exc.report is not None:
            _write(out, "report.json", _json(exc.report.to_json_dict()))
            _write(out, "report.csv", exc.report.to_csv())
        print(f"steering failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except BlowUp as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    _write(out, "schedule.json", json.dumps(sched.to_json_list(), indent=2) + "\n")
    _write(out, "report.json", _json(report.to_json_dict()))
    _write(out, "report.csv", report.to_csv())
    print(f"final error {report.final_error:.6g} <= {eps:g}; duration {float(report.total_time):.6g}; {len(sched)} segments")
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path, args) -> int:
    from .acceptance import CRITERIA, run_criterion

    wanted = cfg["criteria"]
    numbers = [n for n, _, _ in CRITERIA] if wanted is None else list(wanted)
    results = []
    for n in numbers:
        try:
            results.append(run_criterion(int(n), args.seed))
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "title", "passed", "detail"])
    for r in results:
        print(r.line())
        w.writerow([r.number, r.title, r.passed, r.detail])
    _write(out, "verify.csv", buf.getvalue())
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAILURE if failed else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "saturate": cmd_saturate,
    "probe-limit": cmd_probe_limit,
    "steer": cmd_steer,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chcontrol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out-dir", default=".", help="directory for all outputs")
        p.add_argument("--set", action="append", default=[], metavar="K=V", help="override a (dotted) config key")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for independent runs")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config, args.set)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
