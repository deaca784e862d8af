"""Link-segment body model, ground reaction split and knee torque estimation.

Sagittal coordinates are anterior-positive with the origin under the ankle
joint, which sits above the heel (flat foot). Ankle dorsiflexion is negative,
so a squat has ``theta_ad < 0`` and the knee lies ``l_c sin(-theta_ad)``
in front of the ankle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
import yaml

from .errors import DomainError, ValidationError
from .geometry import EQ6_POLY, LowerLimbPose, MomentArmPoly, eval_moment_arm_poly

GRAVITY = 9.81
REQUIRED_SEGMENTS = ("foot", "calf", "thigh", "trunk", "upper_limb")
# lateral slack on the COP beyond the ankle line, about half a foot width
FOOT_HALF_WIDTH = 0.05
SWEEP_COLUMNS = ("ada_deg", "kfa_deg", "hfa_deg", "knee_torque_nm", "tension_n", "admissible")


@dataclass(frozen=True)
class Segment:
    mass: float
    length: float
    com: float
    bilateral: bool = True

    def __post_init__(self):
        for name in ("mass", "length", "com"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"segment {name} fraction must be in (0, 1), got {v}")


@dataclass(frozen=True)
class AnthropometricTable:
    segments: Mapping[str, Segment]
    shoulder: float = 0.6865
    grip: float = 0.9716

    def __post_init__(self):
        missing = [s for s in REQUIRED_SEGMENTS if s not in self.segments]
        if missing:
            raise ValidationError(f"anthropometric table lacks segments {missing}")
        for name in ("shoulder", "grip"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"{name} fraction must be in (0, 1], got {v}")
        total = sum(s.mass * (2 if s.bilateral else 1) for s in self.segments.values())
        if total > 1.0 + 1e-9:
            raise ValidationError(f"segment mass fractions sum to {total:.6f} > 1")


def load_anthropometry(path: str | Path | None = None) -> AnthropometricTable:
    if path is None:
        text = resources.files("exomuscle").joinpath("data/anthropometry.yaml").read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text) or {}
    raw = doc.get("segments")
    if not isinstance(raw, dict):
        raise ValidationError("anthropometric table needs a 'segments' mapping")
    try:
        segments = {
            name: Segment(float(v["mass"]), float(v["length"]), float(v["com"]), bool(v.get("bilateral", True)))
            for name, v in raw.items()
        }
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed segment entry: {exc}") from None
    extra = {k: float(doc[k]) for k in ("shoulder", "grip") if k in doc}
    return AnthropometricTable(segments, **extra)


@lru_cache(maxsize=1)
def default_table() -> AnthropometricTable:
    return load_anthropometry()


@dataclass(frozen=True)
class SubjectModel:
    height: float
    mass: float
    table: AnthropometricTable = field(default_factory=default_table)
    stance_width: float = 0.30
    gravity: float = GRAVITY

    def __post_init__(self):
        if not (self.height > 0 and self.mass > 0):
            raise ValidationError(f"height and mass must be positive, got {self.height}, {self.mass}")
        if not self.stance_width > 0:
            raise ValidationError("stance width must be positive")
        if not self.gravity > 0:
            raise ValidationError("gravity must be positive")

    def segment_mass(self, name: str) -> float:
        return self.table.segments[name].mass * self.mass

    def segment_length(self, name: str) -> float:
        return self.table.segments[name].length * self.height

    def com_offset(self, name: str) -> float:
        seg = self.table.segments[name]
        return seg.com * seg.length * self.height

    def segment_weight(self, name: str) -> float:
        return self.segment_mass(name) * self.gravity

    @property
    def weight(self) -> float:
        return self.mass * self.gravity


def scale_segments(
    height: float,
    mass: float,
    table: AnthropometricTable | None = None,
    stance_width: float = 0.30,
    gravity: float = GRAVITY,
) -> SubjectModel:
    """Scale segment fractions to a subject of given stature (m) and mass (kg)."""
    return SubjectModel(height, mass, table or default_table(), stance_width, gravity)


@dataclass(frozen=True)
class DeviceOnCalf:
    """Calf module of the device: weight force (N) and COM distance below the knee (m)."""

    weight: float = 0.85 * GRAVITY
    l_dcom: float = 0.12

    def __post_init__(self):
        if self.weight < 0 or self.l_dcom < 0:
            raise ValidationError("device weight and COM distance must be non-negative")


NO_DEVICE = DeviceOnCalf(0.0, 0.0)


@dataclass(frozen=True)
class GroundMeasurement:
    f_gr: float
    x_cop: float
    y_cop: float

    def __post_init__(self):
        if not self.f_gr >= 0:
            raise ValidationError(f"ground reaction must be non-negative, got {self.f_gr}")


class KneeTorqueBreakdown(NamedTuple):
    tau_gr: float
    tau_d: float
    tau_c: float
    tau_f: float
    tau_k: float
    g_c: float
    g_f: float
    l_ccom: float
    l_c: float
    y_fcom: float
    f_rgr: float


def right_foot_grf(f_gr: float, x_cop: float, l_fs: float) -> float:
    """Share of the vertical ground reaction carried by the right foot."""
    if not l_fs > 0:
        raise ValidationError(f"stance width must be positive, got {l_fs}")
    # same affine split, arranged so the symmetric and one-foot cases are exact
    share = f_gr * (0.5 + x_cop / l_fs)
    return min(max(share, 0.0), f_gr)


def foot_com_anterior(subject: SubjectModel) -> float:
    # flat foot with the ankle over the heel: the COM sits a fixed distance forward
    return subject.com_offset("foot")


def knee_torque(
    pose: LowerLimbPose,
    subject: SubjectModel,
    device: DeviceOnCalf,
    ground: GroundMeasurement,
) -> KneeTorqueBreakdown:
    """Knee extension torque from ground reaction and the weights below the knee.

    Positive values ask for extension support. The ankle enters through
    ``sin(-theta_ad)``, the forward lean of the shank.
    """
    if abs(ground.x_cop) > subject.stance_width / 2 + FOOT_HALF_WIDTH:
        raise DomainError(f"x_cop {ground.x_cop:.4f} m lies outside the stance")
    lean = math.sin(-pose.theta_ad)
    cos_ai = math.cos(pose.theta_ai)
    g_c = subject.segment_weight("calf")
    g_f = subject.segment_weight("foot")
    l_c = subject.segment_length("calf")
    l_ccom = subject.com_offset("calf")
    y_fcom = foot_com_anterior(subject)
    f_rgr = right_foot_grf(ground.f_gr, ground.x_cop, subject.stance_width)

    tau_d = -device.weight * cos_ai * device.l_dcom * lean
    tau_c = -g_c * cos_ai * l_ccom * lean
    tau_f = -g_f * cos_ai * (l_c * lean - y_fcom)
    tau_gr = f_rgr * cos_ai * (l_c * lean - ground.y_cop)
    tau_k = tau_gr - (tau_d + tau_c + tau_f)
    return KneeTorqueBreakdown(tau_gr, tau_d, tau_c, tau_f, tau_k, g_c, g_f, l_ccom, l_c, y_fcom, f_rgr)


# --------------------------------------------------------------------------
# planar static body model


class StaticBalance(NamedTuple):
    knee_torque: np.ndarray  # per knee, extension positive (N m)
    cop: np.ndarray  # anterior COP = whole-body COM (m)
    knee: np.ndarray  # anterior knee position (m)


def static_balance(
    subject: SubjectModel,
    ada,
    kfa,
    hfa,
    payload: float = 0.0,
    payload_over_knee: bool = False,
) -> StaticBalance:
    """Gravity-only knee torque and COP of a symmetric two-legged stance.

    Angles in radians, broadcastable. Arms hang vertically from the shoulder
    and hold the payload at the grip, unless ``payload_over_knee`` puts it
    straight above the knee.
    """
    if payload < 0:
        raise ValidationError(f"payload must be non-negative, got {payload}")
    ada, kfa, hfa = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (ada, kfa, hfa)))
    s = subject
    lean = -ada
    thigh_dir = np.sin(lean - kfa)
    trunk_dir = np.sin(lean - kfa + hfa)

    l_c, l_t, l_tr = s.segment_length("calf"), s.segment_length("thigh"), s.segment_length("trunk")
    knee = l_c * np.sin(lean)
    calf = knee - s.com_offset("calf") * np.sin(lean)
    hip = knee + l_t * thigh_dir
    thigh = knee + (l_t - s.com_offset("thigh")) * thigh_dir
    trunk = hip + s.com_offset("trunk") * trunk_dir
    shoulder = hip + s.table.shoulder * l_tr * trunk_dir
    held = knee if payload_over_knee else shoulder

    m_f, m_c, m_t = s.segment_mass("foot"), s.segment_mass("calf"), s.segment_mass("thigh")
    m_tr, m_ul = s.segment_mass("trunk"), s.segment_mass("upper_limb")
    g = s.gravity
    # each knee carries its own thigh and half of everything above the hips
    tau = g * (m_t * (knee - thigh) + 0.5 * (m_tr * (knee - trunk) + 2 * m_ul * (knee - shoulder) + payload * (knee - held)))
    moment = (
        2 * m_f * foot_com_anterior(s)
        + 2 * m_c * calf
        + 2 * m_t * thigh
        + m_tr * trunk
        + 2 * m_ul * shoulder
        + payload * held
    )
    total = 2 * (m_f + m_c + m_t + m_ul) + m_tr + payload
    return StaticBalance(tau, moment / total, knee)


def body_mass_total(subject: SubjectModel) -> float:
    t = subject.table.segments
    return subject.mass * sum(seg.mass * (2 if seg.bilateral else 1) for seg in t.values())


# --------------------------------------------------------------------------
# posture sweep

JOINT_RANGES_DEG = {
    "ada": (-40.0, 0.0),
    "kfa": (0.0, 145.0),
    "hfa": (-15.0, 125.0),
}


class SweepResult(NamedTuple):
    max_tension: float
    argmax: tuple[float, float, float]  # ada, kfa, hfa in degrees
    table: dict[str, np.ndarray]


def _grid(lo, hi, step):
    if not step > 0:
        raise ValidationError(f"grid step must be positive, got {step}")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def static_posture_sweep(
    subject: SubjectModel,
    payload: float,
    ada_step: float = 5.0,
    kfa_step: float = 5.0,
    hfa_step: float = 5.0,
    poly: MomentArmPoly = EQ6_POLY,
    ranges: Mapping[str, tuple[float, float]] | None = None,
) -> SweepResult:
    """Largest tendon tension needed to hold any admissible static posture.

    A posture is admissible when its COP lies between heel (0) and toe
    (foot length). Ties go to the smaller KFA, then the smaller HFA.
    """
    if payload < 0:
        raise ValidationError(f"payload must be non-negative, got {payload}")
    ranges = {**JOINT_RANGES_DEG, **(ranges or {})}
    for key, (lo, hi) in ranges.items():
        full = JOINT_RANGES_DEG[key]
        if lo > hi or lo < full[0] - 1e-9 or hi > full[1] + 1e-9:
            raise DomainError(f"{key} grid [{lo}, {hi}] leaves the joint range {full}")
    axes = [
        _grid(*ranges["ada"], ada_step),
        _grid(*ranges["kfa"], kfa_step),
        _grid(*ranges["hfa"], hfa_step),
    ]
    if any(len(a) == 0 for a in axes):
        raise ValidationError("empty sweep grid")
    ada, kfa, hfa = (g.ravel() for g in np.meshgrid(*axes, indexing="ij"))
    bal = static_balance(subject, np.radians(ada), np.radians(kfa), np.radians(hfa), payload)
    tension = bal.knee_torque / eval_moment_arm_poly(poly, kfa)
    foot = subject.segment_length("foot")
    admissible = (bal.cop >= 0.0) & (bal.cop <= foot)
    if not admissible.any():
        raise ValidationError("no admissible posture in the sweep grid")
    idx = np.flatnonzero(admissible)
    best = tension[idx].max()
    ties = idx[tension[idx] == best]
    pick = ties[np.lexsort((ada[ties], hfa[ties], kfa[ties]))[0]]
    table = {
        "ada_deg": ada,
        "kfa_deg": kfa,
        "hfa_deg": hfa,
        "knee_torque_nm": bal.knee_torque,
        "tension_n": tension,
        "admissible": admissible,
    }
    return SweepResult(float(best), (float(ada[pick]), float(kfa[pick]), float(hfa[pick])), table)


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    t = result.table
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for i in range(len(t["ada_deg"])):
            w.writerow(
                [
                    repr(float(t["ada_deg"][i])),
                    repr(float(t["kfa_deg"][i])),
                    repr(float(t["hfa_deg"][i])),
                    repr(float(t["knee_torque_nm"][i])),
                    repr(float(t["tension_n"][i])),
                    int(bool(t["admissible"][i])),
                ]
            )


def read_sweep_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SWEEP_COLUMNS:
        raise ValidationError(f"{path}: unexpected sweep header {rows[:1]}")
    body = rows[1:]
    out = {}
    for j, col in enumerate(SWEEP_COLUMNS):
        vals = [r[j] for r in body]
        out[col] = np.array([v == "1" for v in vals]) if col == "admissible" else np.array(vals, dtype=float)
    return out
