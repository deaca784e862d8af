"""Guiding profile of the semi-rigid chain, tendon tangency and moment arm.

Two frames are used. The *profile frame* is the one the piecewise
ellipse/circle route is written in; the chain start A sits at x = x_max
and the chain end C at x = x_min. The *knee frame* is attached to the calf
with its origin on the knee axis; the profile is placed in it by the chain
offsets (c1, c2), and the Bowden housing end D on the thigh rotates about
the origin with the knee flexion angle.

All lengths are metres and all angles radians, except for
:class:`MomentArmPoly`, whose argument is in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import yaml
from scipy.integrate import quad
from scipy.optimize import brentq, minimize

from .errors import ConvergenceError, DomainError, NoTangentError, RankDeficiencyError, ValidationError

# brackets are pulled this far inside the profile domain to stay off the
# square-root singularities at the branch edges
BRACKET_SHRINK = 1e-9
# slack allowed on domain checks to absorb round-off from frame shifts
_DOMAIN_EPS = 1e-12
KFA_MAX_DEG = 145.0


@dataclass(frozen=True)
class GuidingProfile:
    """Piecewise ellipse/circle route of the chain groove (profile frame)."""

    x_e: float = 0.125
    y_e: float = -0.015
    a: float = 0.125
    b: float = 0.165
    x_c: float = 0.107
    y_c: float = -0.076
    radius: float = 0.09
    x_b: float = -0.034
    x_min: float = -0.171
    x_max: float = 0.0
    continuity_tol: float = 1.5e-3

    def __post_init__(self):
        for name in ("a", "b", "radius"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"profile {name} must be positive")
        if not self.x_min <= self.x_b <= self.x_max:
            raise ValidationError("profile requires x_min <= x_b <= x_max")
        tol = 1e-12
        if max(abs(self.x_b + self.x_e), abs(self.x_max + self.x_e)) > self.a + tol:
            raise ValidationError("ellipse branch is not real on [x_b, x_max]")
        if max(abs(self.x_min + self.x_c), abs(self.x_b + self.x_c)) > self.radius + tol:
            raise ValidationError("circle branch is not real on [x_min, x_b]")
        gap = abs(_ellipse_height(self, self.x_b) - _circle_height(self, self.x_b))
        if gap > self.continuity_tol:
            raise ValidationError(
                f"branches disagree by {gap * 1e3:.3f} mm at x_b "
                f"(tolerance {self.continuity_tol * 1e3:.3f} mm)"
            )


@dataclass(frozen=True)
class ChainPlacement:
    """Offsets of the chain start (c1, c2) and thigh anchor (c3, c4) from the knee axis.

    c1/c3 are y offsets and c2/c4 are x offsets; (c4, c3) is the anchor
    position at zero flexion.
    """

    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValidationError("chain placement offsets must be finite")

    def as_tuple(self):
        return (self.c1, self.c2, self.c3, self.c4)


@dataclass(frozen=True)
class LowerLimbPose:
    """Joint angles in radians.

    ``theta_ad`` follows the clinical sign used for the posture ranges:
    negative values tilt the shank forward over a flat foot.
    """

    theta_kf: float
    theta_ad: float = 0.0
    theta_ai: float = 0.0
    theta_hf: float = 0.0

    RANGES_DEG = {
        "theta_kf": (0.0, 145.0),
        "theta_ad": (-40.0, 0.0),
        "theta_hf": (-15.0, 125.0),
    }

    def __post_init__(self):
        for name, (lo, hi) in self.RANGES_DEG.items():
            value = math.degrees(getattr(self, name))
            if not (lo - 1e-9 <= value <= hi + 1e-9):
                raise DomainError(f"{name} = {value:.4g} deg outside [{lo:g}, {hi:g}] deg")
        if not math.isfinite(self.theta_ai):
            raise DomainError("theta_ai must be finite")

    @classmethod
    def from_degrees(cls, kf, ad=0.0, ai=0.0, hf=0.0):
        return cls(math.radians(kf), math.radians(ad), math.radians(ai), math.radians(hf))


@dataclass(frozen=True)
class MomentArmPoly:
    """Degree-5 moment arm polynomial in knee flexion *degrees*, highest power first."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != 6:
            raise ValidationError("moment arm polynomial needs exactly six coefficients")
        object.__setattr__(self, "coeffs", coeffs)
        grid = np.linspace(0.0, KFA_MAX_DEG, 291)
        if np.any(_horner(coeffs, grid) <= 0.0):
            raise ValidationError("moment arm polynomial must be positive on [0, 145] deg")


class PolyFit(NamedTuple):
    poly: MomentArmPoly
    rms: float
    residual_norm: float


class Calibration(NamedTuple):
    placement: ChainPlacement
    rms: float
    iterations: int


# --------------------------------------------------------------------------
# profile branches


def _ellipse_radicand(p, x):
    return 1.0 - ((x + p.x_e) / p.a) ** 2


def _circle_radicand(p, x):
    return p.radius**2 - (x + p.x_c) ** 2


def _ellipse_height(p, x):
    return p.b * np.sqrt(np.maximum(_ellipse_radicand(p, x), 0.0)) - p.y_e


def _circle_height(p, x):
    return np.sqrt(np.maximum(_circle_radicand(p, x), 0.0)) - p.y_c


def _ellipse_slope(p, x):
    return -p.b * (x + p.x_e) / (p.a**2 * np.sqrt(_ellipse_radicand(p, x)))


def _circle_slope(p, x):
    return -(x + p.x_c) / np.sqrt(_circle_radicand(p, x))


def _as_output(arr, scalar):
    return float(arr) if scalar else arr


def _clip_domain(profile, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < profile.x_min - _DOMAIN_EPS) or np.any(x > profile.x_max + _DOMAIN_EPS):
        bad = x[(x < profile.x_min - _DOMAIN_EPS) | (x > profile.x_max + _DOMAIN_EPS)]
        raise DomainError(
            f"x = {bad.flat[0]:.6g} outside profile domain [{profile.x_min}, {profile.x_max}]"
        )
    return np.clip(x, profile.x_min, profile.x_max)


def profile_height(profile: GuidingProfile, x):
    """Height of the guiding route at abscissa ``x`` (profile frame).

    x_b itself belongs to the ellipse branch. Accepts scalars or arrays.
    """
    scalar = np.ndim(x) == 0
    x = _clip_domain(profile, x)
    ell = x >= profile.x_b
    rad = np.where(ell, _ellipse_radicand(profile, x), _circle_radicand(profile, x))
    if np.any(rad < -1e-12):
        raise DomainError("negative radicand in profile evaluation")
    h = np.where(ell, _ellipse_height(profile, x), _circle_height(profile, x))
    return _as_output(h, scalar)


def profile_slope(profile: GuidingProfile, x, branch: str | None = None):
    """Analytic dy/dx of the route.

    With ``branch=None`` the branch is chosen by the same rule as
    :func:`profile_height`. Passing ``"ellipse"`` or ``"circle"`` forces that
    branch and raises if ``x`` is outside its interval.
    """
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if branch is None:
        x = _clip_domain(profile, x)
        ell = x >= profile.x_b
    elif branch == "ellipse":
        if np.any(x < profile.x_b) or np.any(x > profile.x_max + _DOMAIN_EPS):
            raise DomainError(f"x outside ellipse interval [{profile.x_b}, {profile.x_max}]")
        ell = np.ones(x.shape, dtype=bool)
    elif branch == "circle":
        if np.any(x >= profile.x_b) or np.any(x < profile.x_min - _DOMAIN_EPS):
            raise DomainError(f"x outside circle interval [{profile.x_min}, {profile.x_b})")
        ell = np.zeros(x.shape, dtype=bool)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    rad = np.where(ell, _ellipse_radicand(profile, x), _circle_radicand(profile, x))
    if np.any(rad <= 0.0):
        raise DomainError("profile slope is singular at a branch edge")
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(ell, _ellipse_slope(profile, x), _circle_slope(profile, x))
    return _as_output(s, scalar)


def knee_frame_profile(profile: GuidingProfile, placement: ChainPlacement, x):
    """Route height in the knee frame: f(x - c2) - c1."""
    scalar = np.ndim(x) == 0
    h = profile_height(profile, np.asarray(x, dtype=float) - placement.c2) - placement.c1
    return _as_output(h, scalar)


def knee_frame_slope(profile: GuidingProfile, placement: ChainPlacement, x):
    scalar = np.ndim(x) == 0
    s = profile_slope(profile, np.asarray(x, dtype=float) - placement.c2)
    return _as_output(s, scalar)


def _height_scalar(p, x):
    # hot-path twin of profile_height for a single in-domain abscissa
    if x >= p.x_b:
        return p.b * math.sqrt(max(1.0 - ((x + p.x_e) / p.a) ** 2, 0.0)) - p.y_e
    return math.sqrt(max(p.radius**2 - (x + p.x_c) ** 2, 0.0)) - p.y_c


def _slope_scalar(p, x):
    if x >= p.x_b:
        u = x + p.x_e
        rad = 1.0 - (u / p.a) ** 2
        if rad <= 0.0:
            raise DomainError("profile slope is singular at a branch edge")
        return -p.b * u / (p.a**2 * math.sqrt(rad))
    u = x + p.x_c
    rad = p.radius**2 - u**2
    if rad <= 0.0:
        raise DomainError("profile slope is singular at a branch edge")
    return -u / math.sqrt(rad)


def knee_frame_domain(profile: GuidingProfile, placement: ChainPlacement):
    """(chain end C, chain start A) abscissae in the knee frame."""
    return profile.x_min + placement.c2, profile.x_max + placement.c2


# --------------------------------------------------------------------------
# tendon line


def thigh_anchor(placement: ChainPlacement, theta_kf: float) -> np.ndarray:
    """Position of the Bowden housing end D in the knee frame."""
    c, s = math.cos(theta_kf), math.sin(theta_kf)
    return np.array([c * placement.c4 - s * placement.c3, s * placement.c4 + c * placement.c3])


def _tangency_fn(profile, placement, d):
    dx, dy = float(d[0]), float(d[1])
    c1, c2 = placement.c1, placement.c2

    def g(x):
        # tangency condition multiplied through by (x - dx)
        u = x - c2
        return _slope_scalar(profile, u) * (x - dx) - (_height_scalar(profile, u) - c1 - dy)

    return g


def tangency_residual(profile, placement, theta_kf, x_e):
    """|f_k'(x_E) - (f_k(x_E) - y_D)/(x_E - x_D)| for a candidate tangent abscissa."""
    d = thigh_anchor(placement, theta_kf)
    fk = knee_frame_profile(profile, placement, x_e)
    return abs(knee_frame_slope(profile, placement, x_e) - (fk - d[1]) / (x_e - d[0]))


def _bracket(profile, placement, d, margin_c, margin_a=None):
    x_c, x_a = knee_frame_domain(profile, placement)
    if margin_a is None:
        margin_a = margin_c
    lo = x_c + margin_c
    hi = min(x_a - margin_a, d[0] - BRACKET_SHRINK)
    return lo, hi


def tangent_point(profile: GuidingProfile, placement: ChainPlacement, theta_kf: float):
    """Point E where the tendon from D touches the route, as ``(x, y)``.

    The tendon leaves the groove towards increasing x, so E is sought on the
    low-x side of D. Raises :class:`NoTangentError` when the tangency
    condition does not change sign inside the domain.
    """
    d = thigh_anchor(placement, theta_kf)
    lo, hi = _bracket(profile, placement, d, BRACKET_SHRINK)
    if not lo < hi:
        raise NoTangentError(
            f"empty bracket at theta_kf={math.degrees(theta_kf):.3f} deg: anchor x "
            f"{d[0]:.6g} is left of the chain end",
            bracket=(lo, hi),
        )
    g = _tangency_fn(profile, placement, d)
    g_lo, g_hi = g(lo), g(hi)
    if g_lo * g_hi > 0:
        raise NoTangentError(
            f"no tangent at theta_kf={math.degrees(theta_kf):.3f} deg: residual keeps sign "
            f"on [{lo:.9g}, {hi:.9g}]",
            bracket=(lo, hi),
        )
    x = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return x, knee_frame_profile(profile, placement, x)


def line_distance(d, e) -> float:
    """Distance from the knee origin O to the line through D and E, ||DE x DO|| / ||DE||."""
    de = np.array([e[0] - d[0], e[1] - d[1], 0.0])
    do = np.array([-d[0], -d[1], 0.0])
    return float(np.linalg.norm(np.cross(de, do)) / np.linalg.norm(de))


def moment_arm(profile: GuidingProfile, placement: ChainPlacement, theta_kf: float) -> float:
    d = thigh_anchor(placement, theta_kf)
    e = tangent_point(profile, placement, theta_kf)
    return line_distance(d, e)


# --------------------------------------------------------------------------
# polynomial representation


def _horner(coeffs, t):
    acc = np.zeros_like(np.asarray(t, dtype=float))
    for c in coeffs:
        acc = acc * t + c
    return acc


def eval_moment_arm_poly(poly: MomentArmPoly, theta_kf_deg):
    """Moment arm (m) at a knee flexion given in degrees."""
    scalar = np.ndim(theta_kf_deg) == 0
    t = np.asarray(theta_kf_deg, dtype=float)
    if np.any(t < -1e-9) or np.any(t > KFA_MAX_DEG + 1e-9):
        raise DomainError("moment arm polynomial is defined on [0, 145] deg")
    return _as_output(_horner(poly.coeffs, t), scalar)


# published fit of the solver curve (metres, degrees)
EQ6_POLY = MomentArmPoly((-2.271e-12, 1.096e-9, -2.462e-7, 2.87e-5, -1.012e-3, 0.074))
DEFAULT_PROFILE = GuidingProfile()


def fit_moment_arm_poly(samples: Sequence[tuple]) -> PolyFit:
    """Degree-5 least-squares fit to ``(theta_deg, arm_m)`` pairs."""
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValidationError("samples must be (theta_deg, arm_m) pairs")
    theta, arm = data[:, 0], data[:, 1]
    if len(np.unique(theta)) < 6:
        raise RankDeficiencyError("need at least 6 distinct knee angles for a degree-5 fit")
    # scaled abscissa keeps the Vandermonde matrix well conditioned
    scale = max(float(np.max(np.abs(theta))), 1.0)
    vander = np.vander(theta / scale, 6)
    sol, _, rank, _ = np.linalg.lstsq(vander, arm, rcond=None)
    if rank < 6:
        raise RankDeficiencyError(f"design matrix rank {rank} < 6")
    coeffs = sol / scale ** np.arange(5, -1, -1)
    resid = arm - vander @ sol
    norm = float(np.linalg.norm(resid))
    return PolyFit(MomentArmPoly(tuple(coeffs)), norm / math.sqrt(len(arm)), norm)


# --------------------------------------------------------------------------
# calibration of the unpublished chain placement


def _clamped_tangent(profile, placement, theta, margin_c, margin_a):
    """Tangent abscissa, held at a margin when the true one lies beyond it.

    Keeps the calibration objective defined (and continuous) while the
    optimizer visits infeasible placements. Returns None when the anchor
    sits left of the chain or below the route.
    """
    d = thigh_anchor(placement, theta)
    lo, hi = _bracket(profile, placement, d, margin_c, margin_a)
    if not lo < hi:
        return None
    g = _tangency_fn(profile, placement, d)
    g_lo, g_hi = g(lo), g(hi)
    if g_lo < 0.0 < g_hi:
        return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    if g_lo >= 0.0:
        return lo
    if hi == knee_frame_domain(profile, placement)[1] - margin_a:
        return hi
    return None


class _CalibrationProblem:
    # parameters are optimized in centimetres and deviations in millimetres
    # so SLSQP sees O(1) quantities

    def __init__(self, profile, target, angles_deg, margin_c, margin_a):
        self.profile = profile
        self.angles = np.radians(angles_deg)
        self.goal = eval_moment_arm_poly(target, angles_deg)
        self.margin_c = margin_c
        self.margin_a = margin_a

    def deviations(self, z):
        placement = ChainPlacement(*(np.asarray(z) / 100.0))
        out = np.empty(len(self.angles))
        for i, theta in enumerate(self.angles):
            x = _clamped_tangent(self.profile, placement, theta, self.margin_c, self.margin_a)
            if x is None:
                out[i] = 0.05
                continue
            e = (x, knee_frame_profile(self.profile, placement, x))
            out[i] = line_distance(thigh_anchor(placement, theta), e) - self.goal[i]
        return out

    def objective(self, z):
        r = self.deviations(z) * 1e3
        return 0.5 * float(np.dot(r, r)) / len(r)

    def constraints(self, z):
        # tangency residual must change sign inside the margin-shrunk bracket
        placement = ChainPlacement(*(np.asarray(z) / 100.0))
        out = np.empty(3 * len(self.angles))
        for i, theta in enumerate(self.angles):
            d = thigh_anchor(placement, theta)
            lo, hi = _bracket(self.profile, placement, d, self.margin_c, self.margin_a)
            g = _tangency_fn(self.profile, placement, d)
            # an empty bracket is already infeasible through hi - lo; keep g in its domain
            out[3 * i : 3 * i + 3] = (-g(lo) * 1e3, g(max(hi, lo)) * 1e3, (hi - lo) * 1e3)
        return out


DEFAULT_INITIAL_PLACEMENT = (0.07, 0.072, -0.29, 0.073)


def calibrate_placement(
    profile: GuidingProfile,
    target: MomentArmPoly,
    initial: ChainPlacement | Sequence[float] = DEFAULT_INITIAL_PLACEMENT,
    step_deg: float = 1.0,
    margin_c: float = 1e-6,
    margin_a: float = 1e-7,
    max_iter: int = 200,
    rms_tol: float = 5e-3,
) -> Calibration:
    """Find c1..c4 whose solver moment arm best matches ``target``.

    Least squares over ``step_deg`` samples of [0, 145] deg, subject to the
    tangent point existing at every sample. E is kept ``margin_a`` away from
    the chain start, where the ellipse slope is vertical, and ``margin_c``
    away from the smooth chain end. Raises :class:`ConvergenceError`
    carrying the best iterate when the budget runs out, a constraint is
    left violated, or the RMS deviation exceeds ``rms_tol``.
    """
    if isinstance(initial, ChainPlacement):
        initial = initial.as_tuple()
    angles = np.arange(0.0, KFA_MAX_DEG + 1e-9, step_deg)
    if np.any(eval_moment_arm_poly(target, angles) <= 0):
        raise ValidationError("target moment arm must be positive")
    prob = _CalibrationProblem(profile, target, angles, margin_c, margin_a)
    sol = minimize(
        prob.objective,
        np.asarray(initial, dtype=float) * 100.0,
        method="SLSQP",
        constraints={"type": "ineq", "fun": prob.constraints},
        options={"maxiter": max_iter, "ftol": 1e-12},
    )
    best = ChainPlacement(*(float(v) / 100.0 for v in sol.x))
    rms = float(np.sqrt(np.mean(prob.deviations(sol.x) ** 2)))
    feasible = bool(np.all(prob.constraints(sol.x) >= -1e-9))
    # exit mode 8 is SLSQP stalling on objective noise next to the optimum
    stalled = sol.status == 8 and sol.nit > 0
    if not (sol.success or stalled) or not feasible or rms > rms_tol:
        raise ConvergenceError(
            f"placement calibration failed: rms {rms * 1e3:.3f} mm, feasible={feasible}, "
            f"{sol.message}",
            best=best,
            rms=rms,
        )
    return Calibration(best, rms, int(sol.nit))


def solver_curve(profile, placement, angles_deg) -> np.ndarray:
    return np.array([moment_arm(profile, placement, math.radians(a)) for a in angles_deg])


# --------------------------------------------------------------------------
# arc lengths


def _speed(profile, placement):
    c2 = placement.c2

    def ds(x):
        return math.sqrt(1.0 + _slope_scalar(profile, x - c2) ** 2)

    return ds


def arc_length(profile: GuidingProfile, placement: ChainPlacement, x0: float, x1: float) -> float:
    """Arc length of the knee-frame route between two abscissae."""
    lo, hi = sorted((float(x0), float(x1)))
    x_c, x_a = knee_frame_domain(profile, placement)
    if lo < x_c - _DOMAIN_EPS or hi > x_a + _DOMAIN_EPS:
        raise DomainError("arc limits outside the chain domain")
    lo, hi = max(lo, x_c), min(hi, x_a)
    if hi <= lo:
        return 0.0
    ds = _speed(profile, placement)
    x_b = profile.x_b + placement.c2
    pieces = [(lo, min(hi, x_b)), (max(lo, x_b), hi)]
    total = 0.0
    for a, b in pieces:
        if b > a:
            val, _ = quad(ds, a, b, epsabs=1e-11, epsrel=1e-11, limit=200)
            total += val
    return total


def total_arc_length(profile: GuidingProfile) -> float:
    ident = ChainPlacement(0.0, 0.0, 0.0, 0.0)
    return arc_length(profile, ident, profile.x_min, profile.x_max)


def path_length(profile: GuidingProfile, placement: ChainPlacement, theta_kf: float) -> float:
    """Tendon length from D to the chain end C: ||D - E|| plus the wrapped arc E..C."""
    d = thigh_anchor(placement, theta_kf)
    e = tangent_point(profile, placement, theta_kf)
    x_c = knee_frame_domain(profile, placement)[0]
    return math.hypot(e[0] - d[0], e[1] - d[1]) + arc_length(profile, placement, x_c, e[0])


def rigid_arc_length(profile: GuidingProfile, placement: ChainPlacement, x_e: float) -> float:
    """Arc from the chain start A to abscissa ``x_e``, the locked part of the chain."""
    x_a = knee_frame_domain(profile, placement)[1]
    return arc_length(profile, placement, x_e, x_a)


def engaged_arc(profile, placement, theta_kf, element_length=0.017):
    """``(rigid arc m, engaged element count)`` at a knee angle."""
    if not element_length > 0:
        raise ValidationError("element_length must be positive")
    x_e, _ = tangent_point(profile, placement, theta_kf)
    arc = rigid_arc_length(profile, placement, x_e)
    return arc, int(math.floor(arc / element_length + 1e-12))


# --------------------------------------------------------------------------
# placement files

_PLACEMENT_KEYS = ("c1_m", "c2_m", "c3_m", "c4_m")


def load_placement(path: str | Path | None = None) -> ChainPlacement:
    """Read c1..c4 from a placement file; the shipped calibration when ``path`` is None."""
    if path is None:
        text = resources.files("exomuscle").joinpath("data/placement.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read placement file {path}: {exc}") from None
    doc = yaml.safe_load(text) or {}
    missing = [k for k in _PLACEMENT_KEYS if k not in doc]
    if missing:
        raise ValidationError(f"placement file lacks {missing}")
    try:
        return ChainPlacement(*(float(doc[k]) for k in _PLACEMENT_KEYS))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad placement value: {exc}") from None


def default_placement() -> ChainPlacement:
    return load_placement()
