import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exomuscle import geometry as g
from exomuscle.errors import ConvergenceError, DomainError, NoTangentError, RankDeficiencyError, ValidationError

ANGLES_DEG = np.arange(0.0, 146.0)


def naive_poly(coeffs, t):
    # power sum, lowest order first; deliberately not Horner
    return sum(c * t**k for k, c in enumerate(reversed(coeffs)))


# --- profile ------------------------------------------------------------------


@pytest.mark.parametrize(
    "x, y, tol",
    [(0.0, 0.015, 1e-12), (-0.034, 0.128, 1.5e-3), (-0.171, 0.139, 5e-4)],
)
def test_profile_anchor_points(profile, x, y, tol):
    assert abs(g.profile_height(profile, x) - y) <= tol


def test_profile_outside_domain_raises(profile):
    for x in (0.001, -0.172):
        with pytest.raises(DomainError):
            g.profile_height(profile, x)


def test_junction_belongs_to_ellipse(profile):
    p = profile
    ell = p.b * math.sqrt(1 - ((p.x_b + p.x_e) / p.a) ** 2) - p.y_e
    assert g.profile_height(p, p.x_b) == pytest.approx(ell, abs=1e-15)
    assert abs(g.profile_height(p, p.x_b) - g.profile_height(p, p.x_b - 1e-12)) < 1.5e-3


def test_circle_apex_slope_is_zero(profile):
    assert g.profile_slope(profile, -0.107) == pytest.approx(0.0, abs=1e-15)


def test_ellipse_branch_rejects_circle_abscissa(profile):
    with pytest.raises(DomainError):
        g.profile_slope(profile, -0.125, branch="ellipse")


def test_singular_slope_at_chain_start(profile):
    with pytest.raises(DomainError):
        g.profile_slope(profile, 0.0)


@pytest.mark.parametrize("x", [-0.05, -0.01, -0.1, -0.16])
def test_slope_matches_central_difference(profile, x):
    h = 1e-6
    fd = (g.profile_height(profile, x + h) - g.profile_height(profile, x - h)) / (2 * h)
    assert abs(g.profile_slope(profile, x) - fd) < 1e-6


def test_profile_validation():
    with pytest.raises(ValidationError):
        g.GuidingProfile(radius=-1.0)
    with pytest.raises(ValidationError):
        g.GuidingProfile(y_c=-0.09)  # branches 14 mm apart at x_b


# --- knee frame and anchor ----------------------------------------------------


def test_knee_frame_identity_and_shift(profile):
    assert g.knee_frame_profile(profile, g.ChainPlacement(0, 0, 0, 0), 0.0) == pytest.approx(0.015)
    assert g.knee_frame_profile(profile, g.ChainPlacement(0.1, 0, 0, 0), 0.0) == pytest.approx(-0.085)
    pl = g.ChainPlacement(0.05, -0.02, 0, 0)
    assert g.knee_frame_profile(profile, pl, -0.054) == pytest.approx(g.profile_height(profile, -0.034) - 0.05)


def test_thigh_anchor_rotations():
    pl = g.ChainPlacement(0.0, 0.0, -0.29, 0.07)
    np.testing.assert_allclose(g.thigh_anchor(pl, 0.0), (0.07, -0.29), atol=1e-15)
    np.testing.assert_allclose(g.thigh_anchor(pl, math.pi / 2), (0.29, 0.07), atol=1e-15)
    np.testing.assert_allclose(g.thigh_anchor(pl, math.pi), (-0.07, 0.29), atol=1e-15)


# --- tangency -----------------------------------------------------------------


def supporting_line_point(profile, placement, theta, n=100_000):
    """Sampled profile point whose chord from D has every sample on or below it."""
    lo, hi = g.knee_frame_domain(profile, placement)
    xs = np.linspace(lo, hi, n)
    ys = g.knee_frame_profile(profile, placement, xs)
    d = g.thigh_anchor(placement, theta)
    u = np.stack([xs - d[0], ys - d[1]], axis=1)
    assert np.all(u[:, 0] < 0)
    # chords point left from D; the steepest one upwards has all others below it
    i = int(np.argmax(np.arctan2(u[:, 1], -u[:, 0])))
    cross = u[i, 0] * u[:, 1] - u[i, 1] * u[:, 0]
    assert np.all(cross >= -1e-15)
    return (xs[i], ys[i]), (hi - lo) / (n - 1)


@pytest.mark.parametrize("deg", [60.0, 145.0])
def test_tangent_point_matches_supporting_line(profile, placement, deg):
    theta = math.radians(deg)
    (xo, yo), h = supporting_line_point(profile, placement, theta)
    xe, ye = g.tangent_point(profile, placement, theta)
    assert abs(xe - xo) <= 2 * h
    assert abs(ye - yo) <= 2 * h


def test_anchor_below_profile_has_no_tangent(profile):
    pl = g.ChainPlacement(0.0, 0.0, 0.0, -0.08)  # D = (-0.08, 0), under the route
    with pytest.raises(NoTangentError) as err:
        g.tangent_point(profile, pl, 0.0)
    lo, hi = err.value.bracket
    assert lo < hi


def test_tangency_residual_over_sweep(profile, placement):
    worst = 0.0
    for a in ANGLES_DEG:
        theta = math.radians(a)
        xe, _ = g.tangent_point(profile, placement, theta)
        lo, hi = g.knee_frame_domain(profile, placement)
        assert lo <= xe <= hi
        worst = max(worst, g.tangency_residual(profile, placement, theta, xe))
    assert worst < 1e-9


# --- moment arm ---------------------------------------------------------------


def test_moment_arm_vertical_line():
    assert g.line_distance((0.1, 0.1), (0.1, -0.1)) == pytest.approx(0.1, abs=1e-15)


coord = st.floats(-0.5, 0.5, allow_nan=False)


@settings(max_examples=1000)
@given(coord, coord, coord, coord)
def test_line_distance_matches_cross_formula(xd, yd, xe, ye):
    norm = math.hypot(xe - xd, ye - yd)
    if norm < 1e-3:
        return
    expect = abs(xd * ye - xe * yd) / norm
    assert abs(g.line_distance((xd, yd), (xe, ye)) - expect) <= 1e-12


@pytest.mark.parametrize("deg", [0.0, 30.0, 90.0, 145.0])
def test_moment_arm_positive_and_consistent(profile, placement, deg):
    theta = math.radians(deg)
    d = g.thigh_anchor(placement, theta)
    xe, ye = g.tangent_point(profile, placement, theta)
    expect = abs(d[0] * ye - xe * d[1]) / math.hypot(xe - d[0], ye - d[1])
    la = g.moment_arm(profile, placement, theta)
    assert la > 0
    assert abs(la - expect) <= 1e-12


def test_calibrated_moment_arm_at_full_extension(profile, placement):
    assert abs(g.moment_arm(profile, placement, 0.0) - 0.074) <= 0.005


def test_solver_curve_dip(profile, placement):
    curve = g.solver_curve(profile, placement, ANGLES_DEG)
    assert 20.0 <= ANGLES_DEG[np.argmin(curve)] <= 40.0


# --- polynomial ---------------------------------------------------------------


def test_poly_values():
    assert g.eval_moment_arm_poly(g.EQ6_POLY, 0.0) == 0.074
    assert abs(g.eval_moment_arm_poly(g.EQ6_POLY, 30.0) - 0.06366) <= 1e-5
    assert abs(g.eval_moment_arm_poly(g.EQ6_POLY, 145.0) - 0.11898) <= 1e-4


def test_poly_domain():
    for t in (-1.0, 146.0):
        with pytest.raises(DomainError):
            g.eval_moment_arm_poly(g.EQ6_POLY, t)


def test_poly_must_be_positive():
    with pytest.raises(ValidationError):
        g.MomentArmPoly((0, 0, 0, 0, -1e-3, 0.074))


@given(st.floats(0.0, 145.0))
def test_poly_matches_naive_power_sum(t):
    assert abs(g.eval_moment_arm_poly(g.EQ6_POLY, t) - naive_poly(g.EQ6_POLY.coeffs, t)) <= 1e-12


def test_fit_round_trip_eq6():
    t = np.linspace(0.0, 145.0, 30)
    fit = g.fit_moment_arm_poly(list(zip(t, g.eval_moment_arm_poly(g.EQ6_POLY, t))))
    np.testing.assert_allclose(fit.poly.coeffs, g.EQ6_POLY.coeffs, rtol=1e-9)


def test_fit_constant():
    fit = g.fit_moment_arm_poly([(t, 0.074) for t in (0, 20, 50, 80, 110, 145)])
    np.testing.assert_allclose(fit.poly.coeffs, (0, 0, 0, 0, 0, 0.074), atol=1e-15)


def test_fit_needs_six_angles():
    with pytest.raises(RankDeficiencyError):
        g.fit_moment_arm_poly([(t, 0.07) for t in (0, 20, 50, 80, 110)])
    with pytest.raises(RankDeficiencyError):
        g.fit_moment_arm_poly([(t, 0.07) for t in (0, 20, 50, 80, 110, 110, 20)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=6, max_size=6))
def test_fit_round_trip_any_quintic(scaled):
    # coefficients scaled so every power contributes a comparable amount on [0, 145]
    coeffs = tuple(s / 145.0 ** (5 - k) for k, s in enumerate(scaled))
    coeffs = coeffs[:5] + (coeffs[5] + 10.0,)  # keep it positive
    t = np.linspace(0.0, 145.0, 40)
    y = naive_poly(coeffs, t)
    fit = g.fit_moment_arm_poly(list(zip(t, y)))
    np.testing.assert_allclose(g.eval_moment_arm_poly(fit.poly, t), y, rtol=1e-9)


def test_fit_of_solver_curve(profile, placement):
    curve = g.solver_curve(profile, placement, ANGLES_DEG)
    assert g.fit_moment_arm_poly(list(zip(ANGLES_DEG, curve))).rms < 1e-3


# --- calibration --------------------------------------------------------------


def test_calibration_synthetic_round_trip(profile, placement):
    known = g.solver_curve(profile, placement, ANGLES_DEG)
    target = g.fit_moment_arm_poly(list(zip(ANGLES_DEG, known))).poly
    cal = g.calibrate_placement(profile, target)
    got = g.solver_curve(profile, cal.placement, ANGLES_DEG)
    assert np.sqrt(np.mean((got - known) ** 2)) < 1e-4


def test_calibration_against_published_fit(profile):
    cal = g.calibrate_placement(profile, g.EQ6_POLY)
    curve = g.solver_curve(profile, cal.placement, ANGLES_DEG)
    rms = np.sqrt(np.mean((curve - g.eval_moment_arm_poly(g.EQ6_POLY, ANGLES_DEG)) ** 2))
    assert rms < 5e-3
    assert cal.rms == pytest.approx(rms, rel=1e-9)


def test_calibration_unreachable_target(profile):
    with pytest.raises(ConvergenceError) as err:
        g.calibrate_placement(profile, g.MomentArmPoly((0, 0, 0, 0, 0, 0.2)), step_deg=5.0, max_iter=50)
    assert isinstance(err.value.best, g.ChainPlacement)
    assert err.value.rms > 5e-3


def test_shipped_placement_file_round_trip(tmp_path, placement):
    p = tmp_path / "pl.yaml"
    p.write_text("c1_m: %r\nc2_m: %r\nc3_m: %r\nc4_m: %r\n" % placement.as_tuple())
    assert g.load_placement(p) == placement
    p.write_text("c1_m: 0.1\n")
    with pytest.raises(ValidationError):
        g.load_placement(p)


# --- arcs and path ------------------------------------------------------------


def test_circle_branch_arc_closed_form(profile):
    p = profile
    ident = g.ChainPlacement(0, 0, 0, 0)
    angle = math.asin((p.x_b + p.x_c) / p.radius) - math.asin((p.x_min + p.x_c) / p.radius)
    assert abs(g.arc_length(p, ident, p.x_min, p.x_b) - p.radius * angle) < 1e-6


def test_path_length_splits_into_line_and_arc(profile, placement):
    theta = math.radians(145.0)
    d = g.thigh_anchor(placement, theta)
    xe, ye = g.tangent_point(profile, placement, theta)
    x_c = g.knee_frame_domain(profile, placement)[0]
    line = math.hypot(xe - d[0], ye - d[1])
    # at full flexion E sits next to the chain end, so the arc remainder vanishes
    assert g.arc_length(profile, placement, x_c, xe) < 2e-6
    assert g.path_length(profile, placement, theta) == pytest.approx(line, abs=2e-6)
    assert g.arc_length(profile, placement, x_c, x_c) == 0.0


def test_path_shortens_at_rate_of_moment_arm(profile, placement):
    # virtual work: tendon length changes at minus the moment arm
    for deg in (10.0, 45.0, 90.0, 130.0):
        h = 1e-5
        th = math.radians(deg)
        dl = (g.path_length(profile, placement, th + h) - g.path_length(profile, placement, th - h)) / (2 * h)
        assert dl == pytest.approx(-g.moment_arm(profile, placement, th), abs=1e-7)


def test_path_monotone_over_sweep(profile, placement):
    lengths = np.array([g.path_length(profile, placement, math.radians(a)) for a in ANGLES_DEG])
    assert np.all(np.diff(lengths) < 0)


def test_engaged_arc(profile, placement):
    counts = [g.engaged_arc(profile, placement, math.radians(a))[1] for a in ANGLES_DEG]
    assert counts[0] == 0
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    arc, n = g.engaged_arc(profile, placement, math.radians(145.0))
    assert n == math.floor(g.total_arc_length(profile) / 0.017)
    with pytest.raises(ValidationError):
        g.engaged_arc(profile, placement, 0.0, element_length=0.0)


def test_engaged_arc_nothing_at_chain_start(profile, placement):
    assert g.rigid_arc_length(profile, placement, g.knee_frame_domain(profile, placement)[1]) == 0.0
