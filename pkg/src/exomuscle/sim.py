"""Closed-loop simulation of the device during synthetic motion cycles."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from . import biomech, control
from .biomech import DeviceOnCalf, GroundMeasurement, SubjectModel, knee_torque, static_balance
from .elastic import BeltModel, tension_from_absolute_elongation
from .errors import BeltRangeError, DomainError, SimulationError, ValidationError
from .geometry import (
    DEFAULT_PROFILE,
    EQ6_POLY,
    ChainPlacement,
    GuidingProfile,
    LowerLimbPose,
    MomentArmPoly,
    default_placement,
    eval_moment_arm_poly,
    path_length,
)

CYCLE_KINDS = ("squat", "hip-sway", "lateral-shift")

TRACE_COLUMNS = (
    "t_s",
    "ada_rad",
    "aia_rad",
    "kfa_rad",
    "hfa_rad",
    "x_cop_m",
    "y_cop_m",
    "f_gr_n",
    "f_rgr_n",
    "tau_k_nm",
    "f_ref_n",
    "f_lc_n",
    "elongation_m",
    "theta_act_rad",
    "theta_ref_rad",
    "theta_ff_rad",
    "theta_fb_rad",
    "d_theta_e_rad",
    "saturated",
    "assist_torque_nm",
)


@dataclass(frozen=True)
class MotionCycle:
    """One repetition of a synthetic motion.

    ``start`` and ``end`` are (ada, kfa, hfa) in radians; the pose moves from
    start to end and back along a raised cosine. ``kind`` decides which
    joints move: all three for a squat, only HFA for a hip sway, none for a
    lateral shift, which instead swings the COP from foot to foot by
    ``shift`` times half the stance width.
    """

    kind: str = "squat"
    duration: float = 6.0
    start: tuple[float, float, float] = (math.radians(-5.0), math.radians(5.0), 0.0)
    end: tuple[float, float, float] = (math.radians(-30.0), math.radians(90.0), math.radians(90.0))
    aia: float = 0.0
    payload: float = 0.0
    payload_over_knee: bool = True
    shift: float = 1.0

    def __post_init__(self):
        if self.kind not in CYCLE_KINDS:
            raise ValidationError(f"unknown cycle kind {self.kind!r}, expected one of {CYCLE_KINDS}")
        if not self.duration > 0:
            raise ValidationError("cycle duration must be positive")
        if self.payload < 0:
            raise ValidationError("payload must be non-negative")
        if not 0.0 <= self.shift <= 1.0:
            raise ValidationError("lateral shift must be a fraction in [0, 1]")
        for q in (self.start, self.end):
            LowerLimbPose(q[1], q[0], self.aia, q[2])


def default_cycle(kind: str, payload: float = 0.0) -> MotionCycle:
    d = math.radians
    if kind == "squat":
        return MotionCycle("squat", payload=payload)
    if kind == "hip-sway":
        return MotionCycle("hip-sway", 6.0, (d(-15.0), d(40.0), d(35.0)), (d(-15.0), d(40.0), d(75.0)), payload=payload)
    if kind == "lateral-shift":
        pose = (d(-15.0), d(40.0), d(45.0))
        return MotionCycle("lateral-shift", 6.0, pose, pose, payload=payload)
    raise ValidationError(f"unknown cycle kind {kind!r}")


@dataclass(frozen=True)
class CycleTrajectory:
    t: np.ndarray
    ada: np.ndarray
    aia: np.ndarray
    kfa: np.ndarray
    hfa: np.ndarray
    f_gr: np.ndarray
    x_cop: np.ndarray
    y_cop: np.ndarray


def generate_cycle(cycle: MotionCycle, subject: SubjectModel, dt: float) -> CycleTrajectory:
    """Pose and force-plate samples over one cycle, both endpoints included.

    The COP is the static whole-body centre of mass, so it barely moves in a
    squat and travels along y in a hip sway.
    """
    if not dt > 0:
        raise ValidationError("time step must be positive")
    n = int(round(cycle.duration / dt))
    t = np.arange(n + 1) * dt
    phase = 2.0 * math.pi * t / cycle.duration
    ramp = 0.5 * (1.0 - np.cos(phase))
    start, end = np.asarray(cycle.start), np.asarray(cycle.end)
    if cycle.kind == "squat":
        moving = np.array([True, True, True])
    elif cycle.kind == "hip-sway":
        moving = np.array([False, False, True])
    else:
        moving = np.array([False, False, False])
    q = start[:, None] + np.where(moving, end - start, 0.0)[:, None] * ramp[None, :]
    ada, kfa, hfa = q
    bal = static_balance(subject, ada, kfa, hfa, cycle.payload, cycle.payload_over_knee)
    foot = subject.segment_length("foot")
    if np.any(bal.cop < 0) or np.any(bal.cop > foot):
        raise DomainError("cycle leaves the COP outside the foot")
    if cycle.kind == "lateral-shift":
        x_cop = cycle.shift * 0.5 * subject.stance_width * np.sin(phase)
        x_cop[np.abs(x_cop) < 1e-15] = 0.0
    else:
        x_cop = np.zeros_like(t)
    total = biomech.body_mass_total(subject) + cycle.payload
    f_gr = np.full_like(t, total * subject.gravity)
    return CycleTrajectory(t, ada, np.full_like(t, cycle.aia), kfa, hfa, f_gr, x_cop, bal.cop.copy())


@dataclass(frozen=True)
class ActuatorPlant:
    """Position-controlled actuator: first-order lag with a rate limit."""

    bandwidth: float = 40.0
    velocity_limit: float = 20.0
    travel_min: float = -12.0
    travel_max: float = 12.0
    pulley_radius: float = 0.0225
    theta: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0 or not self.velocity_limit > 0:
            raise ValidationError("plant bandwidth and velocity limit must be positive")
        if not self.pulley_radius > 0:
            raise ValidationError("pulley radius must be positive")
        if not self.travel_min <= self.theta <= self.travel_max:
            raise ValidationError(f"actuator angle {self.theta} outside travel")


class PathTable:
    """Tendon path length against knee angle, tabulated once and interpolated."""

    def __init__(self, profile: GuidingProfile, placement: ChainPlacement, step_deg: float = 0.1):
        self.deg, self.length = _path_samples(profile, placement, step_deg)

    def __call__(self, theta_kf: float) -> float:
        return float(np.interp(math.degrees(theta_kf), self.deg, self.length))


@lru_cache(maxsize=8)
def _path_samples(profile, placement, step_deg):
    deg = np.linspace(0.0, 145.0, int(round(145.0 / step_deg)) + 1)
    length = np.array([path_length(profile, placement, math.radians(a)) for a in deg])
    return deg, length


def plant_step(
    plant: ActuatorPlant,
    theta_ref: float,
    theta_kf: float,
    path: PathTable,
    path0: float,
    belt: BeltModel,
    dt: float,
) -> tuple[ActuatorPlant, float, float]:
    """Advance the actuator one period; returns ``(plant, tension N, belt stretch m)``.

    The belt stretch is the paid-in tendon minus the change of path length
    since the datum ``path0``. A stretch beyond the belt's range raises
    :class:`BeltRangeError`.
    """
    alpha = -math.expm1(-plant.bandwidth * dt)
    step = alpha * (theta_ref - plant.theta)
    cap = plant.velocity_limit * dt
    step = min(max(step, -cap), cap)
    theta = min(max(plant.theta + step, plant.travel_min), plant.travel_max)
    e_abs = theta * plant.pulley_radius - (path(theta_kf) - path0)
    force = tension_from_absolute_elongation(belt, e_abs)
    return replace(plant, theta=theta), force, e_abs


@dataclass(frozen=True)
class SensorSuite:
    """Additive Gaussian noise on every measured channel; all zero is noise-free."""

    imu_std: float = math.radians(0.5)
    f_gr_std: float = 5.0
    cop_std: float = 0.002
    f_lc_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.imu_std, self.f_gr_std, self.cop_std, self.f_lc_std) < 0:
            raise ValidationError("noise standard deviations must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def silent(self) -> "SensorSuite":
        return replace(self, imu_std=0.0, f_gr_std=0.0, cop_std=0.0, f_lc_std=0.0)


@dataclass
class SimTrace:
    columns: dict[str, np.ndarray]
    dt: float
    error: str | None = None

    def __len__(self):
        return len(self.columns["t_s"])

    def __getitem__(self, key):
        return self.columns[key]


@dataclass(frozen=True)
class SimSetup:
    """Everything a run needs besides the cycle and configs under test."""

    profile: GuidingProfile = DEFAULT_PROFILE
    placement: ChainPlacement = field(default_factory=default_placement)
    poly: MomentArmPoly = EQ6_POLY
    plant: ActuatorPlant = field(default_factory=ActuatorPlant)


def _clip(v, lo, hi):
    return min(max(v, lo), hi)


def run_closed_loop(
    subject: SubjectModel,
    device: DeviceOnCalf,
    cycle: MotionCycle,
    gains: control.ControllerGains,
    assist: control.AssistConfig,
    sensors: SensorSuite,
    setup: SimSetup | None = None,
) -> SimTrace:
    """Simulate one cycle at the controller period ``gains.dt``.

    Each step senses pose and ground reaction, estimates the knee torque,
    forms the tension reference, runs the controller and advances the
    plant. On a numerical failure a :class:`SimulationError` carries the
    trace recorded so far.
    """
    setup = setup or SimSetup()
    belt = assist.belt
    dt = gains.dt
    traj = generate_cycle(cycle, subject, dt)
    path = PathTable(setup.profile, setup.placement)
    path0 = path(traj.kfa[0])
    plant = replace(setup.plant, pulley_radius=assist.pulley_radius)
    state = control.ControllerState()
    rng = np.random.default_rng(sensors.seed)

    n = len(traj.t)
    cols = {name: np.zeros(n) for name in TRACE_COLUMNS}
    f_true = 0.0
    e_abs = 0.0
    lim = LowerLimbPose.RANGES_DEG

    def noisy(std, size=None):
        if std > 0:
            return rng.normal(0.0, std, size)
        return np.zeros(size) if size else 0.0

    error = None
    done = 0
    for k in range(n):
        try:
            imu = noisy(sensors.imu_std, 3)
            ada = _clip(traj.ada[k] + imu[0], *np.radians(lim["theta_ad"]))
            aia = traj.aia[k] + imu[1]
            kfa = _clip(traj.kfa[k] + imu[2], *np.radians(lim["theta_kf"]))
            pose = LowerLimbPose(kfa, ada, aia, traj.hfa[k])
            half = subject.stance_width / 2 + biomech.FOOT_HALF_WIDTH
            ground = GroundMeasurement(
                max(traj.f_gr[k] + noisy(sensors.f_gr_std), 0.0),
                _clip(traj.x_cop[k] + noisy(sensors.cop_std), -half, half),
                traj.y_cop[k] + noisy(sensors.cop_std),
            )
            est = knee_torque(pose, subject, device, ground)
            f_ref = control.tension_reference(est.tau_k, assist, math.degrees(kfa), setup.poly)
            f_lc = _clip(f_true + noisy(sensors.f_lc_std), 0.0, belt.f_max)
            theta_ff = control.feedforward(f_ref, assist)
            theta_fb, state = control.feedback_step(state, f_ref, f_lc, gains, assist)
            theta_ref, saturated = control.actuator_reference(theta_ff, theta_fb, assist)

            row = (
                traj.t[k], traj.ada[k], traj.aia[k], traj.kfa[k], traj.hfa[k],
                traj.x_cop[k], traj.y_cop[k], traj.f_gr[k], est.f_rgr, est.tau_k,
                f_ref, f_lc, e_abs, plant.theta, theta_ref, theta_ff, theta_fb,
                state.error, float(saturated),
                f_lc * eval_moment_arm_poly(setup.poly, math.degrees(traj.kfa[k])),
            )
            for name, v in zip(TRACE_COLUMNS, row):
                cols[name][k] = v
            done = k + 1
            if k + 1 < n:
                plant, f_true, e_abs = plant_step(plant, theta_ref, traj.kfa[k + 1], path, path0, belt, dt)
        except (BeltRangeError, DomainError) as exc:
            error = f"step {k} (t = {traj.t[k]:.3f} s): {exc}"
            break
    trace = SimTrace({name: v[:done].copy() for name, v in cols.items()}, dt, error)
    if error is not None:
        raise SimulationError(error, trace=trace)
    return trace


def tracking_rms(trace: SimTrace, settle: float = 0.5) -> float:
    keep = trace["t_s"] >= settle
    err = trace["f_ref_n"][keep] - trace["f_lc_n"][keep]
    return float(np.sqrt(np.mean(err**2))) if err.size else 0.0


def summarize(trace: SimTrace, settle: float = 0.5) -> dict:
    peak_ref = float(np.max(trace["f_ref_n"])) if len(trace) else 0.0
    rms = tracking_rms(trace, settle)
    return {
        "samples": len(trace),
        "dt_s": trace.dt,
        "peak_assist_torque_nm": float(np.max(trace["assist_torque_nm"])) if len(trace) else 0.0,
        "peak_f_ref_n": peak_ref,
        "max_tension_n": float(np.max(trace["f_lc_n"])) if len(trace) else 0.0,
        "rms_tracking_error_n": rms,
        "rms_tracking_error_rel": rms / peak_ref if peak_ref > 0 else 0.0,
        "saturated_steps": int(np.sum(trace["saturated"])) if len(trace) else 0,
        "error": trace.error,
    }


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        data = [trace[c] for c in TRACE_COLUMNS]
        for i in range(len(trace)):
            w.writerow([repr(float(col[i])) for col in data])


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ValidationError(f"{path}: not a simulation trace")
    arr = np.array(rows[1:], dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return {c: arr[:, j] for j, c in enumerate(TRACE_COLUMNS)}


def write_summary_json(summary: Mapping, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def svg_chart(x, series: Mapping[str, np.ndarray], title: str = "", width: int = 640, height: int = 240) -> str:
    """Standalone SVG with one polyline per series on a shared axis."""
    palette = ("#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e")
    pad = 40
    x = np.asarray(x, dtype=float)
    ys = np.concatenate([np.asarray(v, dtype=float) for v in series.values()]) if series else np.zeros(1)
    x0, x1 = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="#999"/>',
        f'<text x="{pad}" y="{pad - 12}" font-size="12" font-family="sans-serif">{title}</text>',
        f'<text x="4" y="{pad + 4}" font-size="10" font-family="sans-serif">{y1:.4g}</text>',
        f'<text x="4" y="{height - pad}" font-size="10" font-family="sans-serif">{y0:.4g}</text>',
    ]
    for i, (name, y) in enumerate(series.items()):
        colour = palette[i % len(palette)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, np.asarray(y, dtype=float)))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad - 120}" y="{pad + 14 + 12 * i}" font-size="10" '
            f'font-family="sans-serif" fill="{colour}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trace_svgs(trace: SimTrace, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    t = trace["t_s"]
    charts = {
        "tension.svg": ("tension (N)", {"f_ref_n": trace["f_ref_n"], "f_lc_n": trace["f_lc_n"]}),
        "knee_torque.svg": ("estimated knee torque (N m)", {"tau_k_nm": trace["tau_k_nm"]}),
        "cop.svg": ("centre of pressure (m)", {"x_cop_m": trace["x_cop_m"], "y_cop_m": trace["y_cop_m"]}),
        "angles.svg": (
            "joint angles (rad)",
            {"ada_rad": trace["ada_rad"], "kfa_rad": trace["kfa_rad"], "hfa_rad": trace["hfa_rad"]},
        ),
    }
    written = []
    for name, (title, series) in charts.items():
        p = out_dir / name
        p.write_text(svg_chart(t, series, title), encoding="utf-8")
        written.append(p)
    return written


__all__ = [
    "ActuatorPlant",
    "CycleTrajectory",
    "MotionCycle",
    "PathTable",
    "SensorSuite",
    "SimSetup",
    "SimTrace",
    "TRACE_COLUMNS",
    "default_cycle",
    "generate_cycle",
    "plant_step",
    "run_closed_loop",
    "summarize",
    "tracking_rms",
]
