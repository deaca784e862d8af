import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exomuscle import elastic as el
from exomuscle.errors import BeltRangeError, ValidationError

# coefficients re-typed from the published fit, lowest power first
RAW = {1: 3.674e-3, 2: -3.83e-5, 3: 5.882e-7, 4: -2.291e-9, 5: 2.803e-12}


def y_oracle(f):
    return sum(c * f**k for k, c in RAW.items())


BELT = el.DEFAULT_BELT


def test_zero_force_zero_elongation():
    assert el.elongation_of_force(BELT, 0.0) == 0.0


@pytest.mark.parametrize("f", [100.0, 200.0, 323.9, 330.0])
def test_forward_matches_oracle(f):
    assert el.elongation_of_force(BELT, f) == pytest.approx(y_oracle(f), abs=1e-12)


def test_forward_known_value():
    assert abs(el.elongation_of_force(BELT, 100.0) - 0.37153) <= 1e-5


def test_forward_range():
    for f in (-1e-9, 330.001):
        with pytest.raises(BeltRangeError):
            el.elongation_of_force(BELT, f)


def test_inverse_endpoints():
    assert el.force_of_elongation(BELT, 0.0) == 0.0
    assert el.force_of_elongation(BELT, BELT.y_limit) == BELT.f_max
    with pytest.raises(BeltRangeError):
        el.force_of_elongation(BELT, BELT.y_limit + 1e-6)
    with pytest.raises(BeltRangeError):
        el.force_of_elongation(BELT, -1e-9)


def test_inverse_of_200():
    assert el.force_of_elongation(BELT, el.elongation_of_force(BELT, 200.0)) == pytest.approx(200.0, abs=1e-6)


@given(st.floats(0.0, 330.0))
def test_round_trip(f):
    y = el.elongation_of_force(BELT, f)
    assert abs(el.force_of_elongation(BELT, y) - f) < 1e-6
    assert abs(el.elongation_of_force(BELT, el.force_of_elongation(BELT, y)) - y) < 1e-9


def test_strictly_increasing_on_newton_grid():
    y = el.elongation_of_force(BELT, np.arange(0.0, 331.0))
    assert np.all(np.diff(y) > 0)


def test_slack_and_stretch():
    assert el.tension_from_absolute_elongation(BELT, -0.01) == 0.0
    assert el.tension_from_absolute_elongation(BELT, 0.0) == 0.0
    e = 0.37153 * BELT.l0
    assert el.tension_from_absolute_elongation(BELT, e) == pytest.approx(100.0, abs=1e-3)


def test_belt_validation():
    with pytest.raises(ValidationError):
        el.BeltModel(l0=0.0)
    with pytest.raises(ValidationError):
        el.BeltModel(coeffs=(0, 0, 0, 0, 1e-3, 0.1))
    with pytest.raises(ValidationError):
        # turns over well before f_max
        el.BeltModel(coeffs=(0, 0, 0, -1e-7, 1e-2, 0.0))
    with pytest.raises(ValidationError):
        el.BeltModel(f_max=400.0)  # Y(400) is far past the 200 % limit


def test_table_belt_interpolates():
    belt = el.BeltModel(name="type-3", table=((0, 0), (100, 0.5), (200, 1.2), (350, 2.0)), f_max=330.0)
    assert el.elongation_of_force(belt, 50.0) == pytest.approx(0.25)
    assert el.force_of_elongation(belt, 0.85) == pytest.approx(150.0, abs=1e-9)
    with pytest.raises(ValidationError):
        el.BeltModel(table=((0, 0), (100, 0.5), (90, 0.6), (350, 2.0)))
    with pytest.raises(ValidationError):
        el.BeltModel(table=((0, 0), (100, 0.5), (200, 0.5), (350, 2.0)))


def test_catalog(tmp_path):
    cat = el.load_belt_catalog()
    assert cat["type-1"] == BELT
    p = tmp_path / "belts.yaml"
    p.write_text(
        "belts:\n"
        "  - name: soft\n"
        "    table_n: [[0, 0], [330, 1.9]]\n"
        "    l0_m: 0.08\n"
    )
    soft = el.load_belt_catalog(p)["soft"]
    assert soft.l0 == 0.08
    p.write_text("belts:\n  - name: x\n    colour: red\n")
    with pytest.raises(ValidationError):
        el.load_belt_catalog(p)
    p.write_text("belts:\n  - name: a\n  - name: a\n")
    with pytest.raises(ValidationError):
        el.load_belt_catalog(p)
