"""Run configuration: nested YAML with unit-suffixed keys."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import biomech, control, geometry, sim
from .elastic import BeltModel, load_belt_catalog
from .errors import ValidationError

DEFAULTS: dict[str, Any] = {
    "geometry": {"placement_file": None, "step_deg": 1.0},
    "belt": {"catalog_file": None, "name": "type-1"},
    "subject": {
        "anthropometry_file": None,
        "height_m": 1.89,
        "mass_kg": 100.0,
        "stance_width_m": 0.30,
        "gravity_m_s2": 9.81,
    },
    "device": {"weight_n": 0.85 * 9.81, "com_distance_m": 0.12},
    "controller": {"kp": 10.0, "ki_per_s": 200.0, "dt_s": 1e-3, "integral_clamp_rad": 0.5},
    "assist": {"percentage": 0.15, "pulley_radius_m": 0.0225, "efficiency": 1.0},
    "plant": {
        "bandwidth_rad_s": 40.0,
        "velocity_limit_rad_s": 20.0,
        "travel_min_rad": -12.0,
        "travel_max_rad": 12.0,
    },
    "cycle": {
        "kind": "squat",
        "duration_s": 6.0,
        "start_deg": [-5.0, 5.0, 0.0],
        "end_deg": [-30.0, 90.0, 90.0],
        "aia_deg": 0.0,
        "payload_kg": 0.0,
        "payload_over_knee": True,
        "shift_fraction": 1.0,
    },
    "sensors": {"imu_std_deg": 0.5, "f_gr_std_n": 5.0, "cop_std_m": 0.002, "f_lc_std_n": 1.0},
    "sweep": {"payload_kg": 20.0, "ada_step_deg": 5.0, "kfa_step_deg": 5.0, "hfa_step_deg": 5.0},
    "output_dir": "out",
    "seed": 0,
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{where}{key}"
        if key not in base:
            raise ValidationError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"config key {name!r} must be a section")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def _number(section: dict, key: str, where: str) -> float:
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}.{key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{where}.{key} must be finite")
    return float(value)


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path

    def _path(self, value):
        if value is None:
            return None
        p = Path(value)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.exists():
            raise ValidationError(f"referenced file {p} does not exist")
        return p

    @property
    def seed(self) -> int:
        seed = self.raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        return seed

    @property
    def output_dir(self) -> Path:
        p = Path(self.raw["output_dir"])
        return p if p.is_absolute() else Path.cwd() / p

    def placement(self) -> geometry.ChainPlacement:
        return geometry.load_placement(self._path(self.raw["geometry"]["placement_file"]))

    def step_deg(self) -> float:
        return _number(self.raw["geometry"], "step_deg", "geometry")

    def belt(self) -> BeltModel:
        sec = self.raw["belt"]
        catalog = load_belt_catalog(self._path(sec["catalog_file"]))
        if sec["name"] not in catalog:
            raise ValidationError(f"belt {sec['name']!r} not in catalog ({sorted(catalog)})")
        return catalog[sec["name"]]

    def subject(self) -> biomech.SubjectModel:
        sec = self.raw["subject"]
        table_path = self._path(sec["anthropometry_file"])
        table = biomech.load_anthropometry(table_path) if table_path else None
        return biomech.scale_segments(
            _number(sec, "height_m", "subject"),
            _number(sec, "mass_kg", "subject"),
            table,
            _number(sec, "stance_width_m", "subject"),
            _number(sec, "gravity_m_s2", "subject"),
        )

    def device(self) -> biomech.DeviceOnCalf:
        sec = self.raw["device"]
        return biomech.DeviceOnCalf(_number(sec, "weight_n", "device"), _number(sec, "com_distance_m", "device"))

    def gains(self) -> control.ControllerGains:
        sec = self.raw["controller"]
        return control.ControllerGains(
            _number(sec, "kp", "controller"),
            _number(sec, "ki_per_s", "controller"),
            _number(sec, "dt_s", "controller"),
            _number(sec, "integral_clamp_rad", "controller"),
        )

    def plant(self) -> sim.ActuatorPlant:
        sec = self.raw["plant"]
        return sim.ActuatorPlant(
            _number(sec, "bandwidth_rad_s", "plant"),
            _number(sec, "velocity_limit_rad_s", "plant"),
            _number(sec, "travel_min_rad", "plant"),
            _number(sec, "travel_max_rad", "plant"),
            _number(self.raw["assist"], "pulley_radius_m", "assist"),
        )

    def assist(self) -> control.AssistConfig:
        sec = self.raw["assist"]
        plant = self.raw["plant"]
        return control.AssistConfig(
            _number(sec, "percentage", "assist"),
            _number(sec, "pulley_radius_m", "assist"),
            self.belt(),
            _number(plant, "travel_min_rad", "plant"),
            _number(plant, "travel_max_rad", "plant"),
            _number(sec, "efficiency", "assist"),
        )

    def cycle(self) -> sim.MotionCycle:
        sec = self.raw["cycle"]
        for key in ("start_deg", "end_deg"):
            v = sec[key]
            if not isinstance(v, list) or len(v) != 3:
                raise ValidationError(f"cycle.{key} must be [ada, kfa, hfa]")
        return sim.MotionCycle(
            kind=str(sec["kind"]),
            duration=_number(sec, "duration_s", "cycle"),
            start=tuple(math.radians(float(a)) for a in sec["start_deg"]),
            end=tuple(math.radians(float(a)) for a in sec["end_deg"]),
            aia=math.radians(_number(sec, "aia_deg", "cycle")),
            payload=_number(sec, "payload_kg", "cycle"),
            payload_over_knee=bool(sec["payload_over_knee"]),
            shift=_number(sec, "shift_fraction", "cycle"),
        )

    def sensors(self, seed: int | None = None) -> sim.SensorSuite:
        sec = self.raw["sensors"]
        return sim.SensorSuite(
            math.radians(_number(sec, "imu_std_deg", "sensors")),
            _number(sec, "f_gr_std_n", "sensors"),
            _number(sec, "cop_std_m", "sensors"),
            _number(sec, "f_lc_std_n", "sensors"),
            self.seed if seed is None else seed,
        )

    def sweep(self) -> dict[str, float]:
        sec = self.raw["sweep"]
        return {k: _number(sec, k, "sweep") for k in sec}


def load_config(path: str | Path | None = None) -> RunConfig:
    """Merge a YAML file over the defaults; no path gives the defaults."""
    if path is None:
        return RunConfig(copy.deepcopy(DEFAULTS), Path.cwd())
    p = Path(path)
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {p}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {p} is not valid YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValidationError(f"config {p} must be a mapping")
    return RunConfig(_merge(DEFAULTS, doc), p.resolve().parent)


def default_config_text() -> str:
    return resources.files("exomuscle").joinpath("data/default_config.yaml").read_text()
