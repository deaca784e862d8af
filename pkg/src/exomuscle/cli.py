"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import biomech, geometry, sim
from .config import RunConfig, load_config
from .errors import (
    BeltRangeError,
    ConvergenceError,
    DomainError,
    ExoMuscleError,
    NoTangentError,
    RankDeficiencyError,
    SimulationError,
    ValidationError,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

MOMENT_ARM_COLUMNS = ("kfa_deg", "la_solver_m", "la_poly_m")
POSE_COLUMNS = ("ada_deg", "aia_deg", "kfa_deg", "hfa_deg", "f_gr_n", "x_cop_m", "y_cop_m")
TORQUE_COLUMNS = POSE_COLUMNS + ("f_rgr_n", "tau_gr_nm", "tau_d_nm", "tau_c_nm", "tau_f_nm", "tau_k_nm")


def _fmt(v) -> str:
    return repr(float(v))


def _emit_csv(header, rows, out: Path | None, name: str) -> None:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(buf.getvalue(), encoding="utf-8")


def _emit_json(doc, out: Path | None, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def read_csv_columns(path: str | Path, required) -> list[dict[str, float]]:
    """Rows of a header-led CSV as floats; errors name the offending line."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ValidationError(f"{path}:1: missing columns {missing}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}")
            try:
                rows.append({h: float(v) for h, v in zip(header, raw) if h in required})
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return rows


def cmd_moment_arm(cfg: RunConfig, step_deg: float, out: Path | None) -> int:
    if not step_deg > 0:
        raise ValidationError("--step-deg must be positive")
    placement = cfg.placement()
    n = int(math.floor(geometry.KFA_MAX_DEG / step_deg + 1e-9))
    angles = step_deg * np.arange(n + 1)
    rows = []
    for a in angles:
        try:
            la = geometry.moment_arm(geometry.DEFAULT_PROFILE, placement, math.radians(a))
        except NoTangentError as exc:
            raise NoTangentError(f"at kfa = {a:g} deg: {exc}", exc.bracket) from None
        rows.append((a, la, geometry.eval_moment_arm_poly(geometry.EQ6_POLY, a)))
    _emit_csv(MOMENT_ARM_COLUMNS, rows, out, "moment_arm.csv")
    return EXIT_OK


def cmd_fit_poly(samples: Path, column: str | None, out: Path | None) -> int:
    header = _csv_header(samples)
    if column is None:
        column = next((c for c in ("la_m", "la_solver_m") if c in header), None)
        if column is None:
            raise ValidationError(f"{samples}: no la_m or la_solver_m column; pass --column")
    rows = read_csv_columns(samples, ("kfa_deg", column))
    fit = geometry.fit_moment_arm_poly([(r["kfa_deg"], r[column]) for r in rows])
    _emit_json(
        {
            "coefficients": list(fit.poly.coeffs),
            "rms_m": fit.rms,
            "residual_norm_m": fit.residual_norm,
            "samples": len(rows),
            "column": column,
        },
        out,
        "coefficients.json",
    )
    return EXIT_OK


def _csv_header(path) -> list[str]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [h.strip() for h in next(csv.reader(fh), [])]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    params = cfg.sweep()
    subject = cfg.subject()
    result = biomech.static_posture_sweep(
        subject,
        params["payload_kg"],
        params["ada_step_deg"],
        params["kfa_step_deg"],
        params["hfa_step_deg"],
    )
    out.mkdir(parents=True, exist_ok=True)
    biomech.write_sweep_csv(result, out / "sweep.csv")
    ada, kfa, hfa = result.argmax
    _emit_json(
        {
            "max_tension_n": result.max_tension,
            "argmax_ada_deg": ada,
            "argmax_kfa_deg": kfa,
            "argmax_hfa_deg": hfa,
            "payload_kg": params["payload_kg"],
            "admissible_poses": int(np.sum(result.table["admissible"])),
            "poses": int(len(result.table["admissible"])),
        },
        out,
        "sweep_summary.json",
    )
    return EXIT_OK


def cmd_estimate(cfg: RunConfig, poses: Path, out: Path | None) -> int:
    subject, device = cfg.subject(), cfg.device()
    rows = read_csv_columns(poses, POSE_COLUMNS)
    result = []
    for lineno, r in enumerate(rows, start=2):
        try:
            pose = geometry.LowerLimbPose.from_degrees(r["kfa_deg"], r["ada_deg"], r["aia_deg"], r["hfa_deg"])
            ground = biomech.GroundMeasurement(r["f_gr_n"], r["x_cop_m"], r["y_cop_m"])
            b = biomech.knee_torque(pose, subject, device, ground)
        except (DomainError, ValidationError) as exc:
            raise ValidationError(f"{poses}:{lineno}: {exc}") from None
        result.append(tuple(r[c] for c in POSE_COLUMNS) + (b.f_rgr, b.tau_gr, b.tau_d, b.tau_c, b.tau_f, b.tau_k))
    _emit_csv(TORQUE_COLUMNS, result, out, "torque.csv")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path, seed: int | None, no_noise: bool, svg: bool) -> int:
    sensors = cfg.sensors(seed)
    if no_noise:
        sensors = sensors.silent()
    setup = sim.SimSetup(placement=cfg.placement(), plant=cfg.plant())
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = sim.run_closed_loop(cfg.subject(), cfg.device(), cfg.cycle(), cfg.gains(), cfg.assist(), sensors, setup)
    except SimulationError as exc:
        if exc.trace is not None:
            sim.write_trace_csv(exc.trace, out / "trace.csv")
            sim.write_summary_json(sim.summarize(exc.trace), out / "summary.json")
        raise
    sim.write_trace_csv(trace, out / "trace.csv")
    sim.write_summary_json(sim.summarize(trace), out / "summary.json")
    if svg:
        sim.write_trace_svgs(trace, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--out", type=Path, help="output directory")

    p = argparse.ArgumentParser(prog="exomuscle", description="Knee assist device model and simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("moment-arm", parents=[common], help="solver and polynomial moment arm over 0-145 deg")
    s.add_argument("--step-deg", type=float, default=None)

    s = sub.add_parser("fit-poly", parents=[common], help="fit the degree-5 moment-arm polynomial to samples")
    s.add_argument("samples", type=Path)
    s.add_argument("--column", default=None, help="moment-arm column (default la_m or la_solver_m)")

    sub.add_parser("sweep", parents=[common], help="static posture sweep for the required tension")

    s = sub.add_parser("estimate", parents=[common], help="knee torque for measured poses")
    s.add_argument("poses", type=Path)

    s = sub.add_parser("simulate", parents=[common], help="closed-loop run of one motion cycle")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--no-noise", action="store_true")
    s.add_argument("--svg", action="store_true", help="also write SVG charts")
    return p


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.command == "moment-arm":
        step = args.step_deg if args.step_deg is not None else cfg.step_deg()
        return cmd_moment_arm(cfg, step, args.out)
    if args.command == "fit-poly":
        return cmd_fit_poly(args.samples, args.column, args.out)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.out or cfg.output_dir)
    if args.command == "estimate":
        return cmd_estimate(cfg, args.poses, args.out)
    if args.command == "simulate":
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ValidationError("--seed must be a 64-bit unsigned integer")
        return cmd_simulate(cfg, args.out or cfg.output_dir, args.seed, args.no_noise, args.svg)
    raise ValidationError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ValidationError, DomainError, RankDeficiencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoTangentError, ConvergenceError, BeltRangeError, SimulationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ExoMuscleError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
