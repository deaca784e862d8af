"""Series elastic belt: tension to relative elongation and back."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import brentq

from .errors import BeltRangeError, ValidationError

# Type-1 rubber belt fit, highest power first, constant term zero
TYPE1_COEFFS = (2.803e-12, -2.291e-9, 5.882e-7, -3.83e-5, 3.674e-3, 0.0)

_ROOT_TOL = 1e-13


@dataclass(frozen=True)
class BeltModel:
    """Elongation model of one belt.

    ``coeffs`` map tension (N) to relative elongation Y (fraction of ``l0``).
    When ``table`` is given as (F, Y) pairs it replaces the polynomial and is
    interpolated linearly.
    """

    name: str = "type-1"
    coeffs: tuple[float, ...] = TYPE1_COEFFS
    l0: float = 0.055
    y_max: float = 2.0
    f_max: float = 330.0
    table: tuple[tuple[float, float], ...] | None = None
    _f: np.ndarray = field(init=False, repr=False, compare=False)
    _y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.l0 > 0:
            raise ValidationError(f"{self.name}: l0 must be positive, got {self.l0}")
        if not self.f_max > 0 or not self.y_max > 0:
            raise ValidationError(f"{self.name}: f_max and y_max must be positive")
        if self.table is not None:
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
                raise ValidationError(f"{self.name}: table needs at least two (F, Y) rows")
            if tab[0, 0] != 0.0 or tab[0, 1] != 0.0:
                raise ValidationError(f"{self.name}: table must start at (0, 0)")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValidationError(f"{self.name}: table forces must be strictly increasing")
            if tab[-1, 0] < self.f_max:
                raise ValidationError(f"{self.name}: table ends below f_max")
            object.__setattr__(self, "table", tuple(map(tuple, tab.tolist())))
            object.__setattr__(self, "_f", tab[:, 0])
            object.__setattr__(self, "_y", tab[:, 1])
        else:
            if len(self.coeffs) != 6:
                raise ValidationError(f"{self.name}: need six coefficients")
            if self.coeffs[-1] != 0.0:
                raise ValidationError(f"{self.name}: constant term must be zero")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        grid = np.arange(0.0, np.floor(self.f_max) + 1.0)
        if grid[-1] != self.f_max:
            grid = np.append(grid, self.f_max)
        y = self._forward(grid)
        if np.any(np.diff(y) <= 0):
            bad = grid[1:][np.diff(y) <= 0][0]
            raise ValidationError(f"{self.name}: elongation not increasing near {bad:g} N")
        if y[-1] > self.y_max + 0.05:
            raise ValidationError(
                f"{self.name}: Y(f_max) = {y[-1]:.4f} exceeds y_max + 0.05"
            )

    def _forward(self, force):
        if self.table is not None:
            return np.interp(force, self._f, self._y)
        out = np.zeros_like(np.asarray(force, dtype=float))
        for c in self.coeffs:
            out = out * force + c
        return out

    @property
    def y_limit(self) -> float:
        """Largest invertible elongation, Y(f_max)."""
        return float(self._forward(self.f_max))


DEFAULT_BELT = BeltModel()


def elongation_of_force(belt: BeltModel, force):
    f = np.asarray(force, dtype=float)
    if np.any(f < 0) or np.any(f > belt.f_max) or np.any(~np.isfinite(f)):
        raise BeltRangeError(f"{belt.name}: tension outside [0, {belt.f_max:g}] N: {force}")
    y = belt._forward(f)
    return float(y) if y.ndim == 0 else y


def force_of_elongation(belt: BeltModel, y: float) -> float:
    """Tension that produces relative elongation ``y`` (bracketed root solve)."""
    y = float(y)
    y_top = belt.y_limit
    if not 0.0 <= y <= y_top:
        raise BeltRangeError(f"{belt.name}: elongation {y:.6g} outside [0, {y_top:.6g}]")
    if y == 0.0:
        return 0.0
    if y == y_top:
        return belt.f_max
    return brentq(
        lambda f: float(belt._forward(f)) - y, 0.0, belt.f_max, xtol=_ROOT_TOL, rtol=1e-15, maxiter=200
    )


def tension_from_absolute_elongation(belt: BeltModel, e_abs: float) -> float:
    """Belt tension for an absolute stretch in metres; a slack belt carries nothing."""
    if e_abs <= 0.0:
        return 0.0
    return force_of_elongation(belt, e_abs / belt.l0)


def _belt_from_entry(entry: dict) -> BeltModel:
    try:
        name = str(entry["name"])
    except KeyError:
        raise ValidationError("belt entry without a name") from None
    known = {"name", "coefficients", "table_n", "l0_m", "y_max", "f_max_n"}
    extra = set(entry) - known
    if extra:
        raise ValidationError(f"{name}: unknown keys {sorted(extra)}")
    kwargs = {"name": name}
    if "coefficients" in entry:
        kwargs["coeffs"] = tuple(float(c) for c in entry["coefficients"])
    if "table_n" in entry:
        kwargs["table"] = tuple((float(f), float(y)) for f, y in entry["table_n"])
    for key, attr in (("l0_m", "l0"), ("y_max", "y_max"), ("f_max_n", "f_max")):
        if key in entry:
            kwargs[attr] = float(entry[key])
    return BeltModel(**kwargs)


def load_belt_catalog(path: str | Path | None = None) -> dict[str, BeltModel]:
    """Read a belt catalog; the packaged one is used when ``path`` is None."""
    if path is None:
        text = resources.files("exomuscle").joinpath("data/belts.yaml").read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text) or {}
    entries = doc.get("belts")
    if not isinstance(entries, list) or not entries:
        raise ValidationError("belt catalog must hold a non-empty 'belts' list")
    catalog = {}
    for entry in entries:
        belt = _belt_from_entry(entry)
        if belt.name in catalog:
            raise ValidationError(f"duplicate belt name {belt.name!r}")
        catalog[belt.name] = belt
    return catalog


def envelope_torque(belt: BeltModel, y: float, arm: float) -> float:
    return force_of_elongation(belt, y) * arm


__all__ = [
    "BeltModel",
    "DEFAULT_BELT",
    "TYPE1_COEFFS",
    "elongation_of_force",
    "force_of_elongation",
    "tension_from_absolute_elongation",
    "load_belt_catalog",
    "envelope_torque",
]
