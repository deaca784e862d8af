"""Tension reference, model-inversion feedforward and PI feedback on belt stretch."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .elastic import DEFAULT_BELT, BeltModel, elongation_of_force
from .errors import ValidationError
from .geometry import EQ6_POLY, MomentArmPoly, eval_moment_arm_poly


@dataclass(frozen=True)
class AssistConfig:
    """Assist level ``percentage`` in [0, 1], output pulley radius (m) and belt."""

    percentage: float = 0.15
    pulley_radius: float = 0.0225
    belt: BeltModel = DEFAULT_BELT
    travel_min: float = -12.0
    travel_max: float = 12.0
    efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.percentage <= 1.0:
            raise ValidationError(f"assist percentage must be in [0, 1], got {self.percentage}")
        if not self.pulley_radius > 0:
            raise ValidationError("pulley radius must be positive")
        if not self.travel_min < self.travel_max:
            raise ValidationError("actuator travel limits are inverted")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValidationError("efficiency must be in (0, 1]")

    @property
    def stretch_to_angle(self) -> float:
        return self.belt.l0 / self.pulley_radius


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 10.0
    ki: float = 200.0
    dt: float = 1e-3
    integral_clamp: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("controller period must be positive")
        if self.kp < 0 or self.ki < 0:
            raise ValidationError("gains must be non-negative")
        if not self.integral_clamp > 0:
            raise ValidationError("integrator clamp must be positive")


@dataclass(frozen=True)
class ControllerState:
    integral: float = 0.0
    error: float = 0.0


def tension_reference(
    tau_k: float,
    cfg: AssistConfig,
    theta_kf_deg: float,
    poly: MomentArmPoly = EQ6_POLY,
) -> float:
    """Tendon tension for assisting ``percentage`` of the knee torque.

    The tendon only pulls, so demands below zero become zero; demands above
    the belt limit are capped there.
    """
    arm = eval_moment_arm_poly(poly, theta_kf_deg)
    f = tau_k * cfg.percentage / (arm * cfg.efficiency)
    return min(max(f, 0.0), cfg.belt.f_max)


def feedforward(f_ref: float, cfg: AssistConfig) -> float:
    return elongation_of_force(cfg.belt, f_ref) * cfg.belt.l0 / cfg.pulley_radius


def stretch_error(f_ref: float, f_lc: float, cfg: AssistConfig) -> float:
    y_ref = elongation_of_force(cfg.belt, f_ref)
    y_lc = elongation_of_force(cfg.belt, f_lc)
    return (y_ref - y_lc) * cfg.belt.l0 / cfg.pulley_radius


def feedback_step(
    state: ControllerState,
    f_ref: float,
    f_lc: float,
    gains: ControllerGains,
    cfg: AssistConfig,
) -> tuple[float, ControllerState]:
    """One PI update on the pulley-angle equivalent of the stretch error.

    Forward-Euler integration; the accumulator is clamped, which is the
    anti-windup.
    """
    err = stretch_error(f_ref, f_lc, cfg)
    clamp = gains.integral_clamp
    integral = min(max(state.integral + err * gains.dt, -clamp), clamp)
    theta_fb = gains.kp * err + gains.ki * integral
    return theta_fb, replace(state, integral=integral, error=err)


def actuator_reference(theta_ff: float, theta_fb: float, cfg: AssistConfig) -> tuple[float, bool]:
    """Sum of both branches, held inside the actuator travel; flag set when held."""
    theta = theta_ff + theta_fb
    if theta > cfg.travel_max:
        return cfg.travel_max, True
    if theta < cfg.travel_min:
        return cfg.travel_min, True
    return theta, False
