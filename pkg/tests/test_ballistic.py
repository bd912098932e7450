import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballhoop.hybrid import HybridState, Mode, reset_s2_to_s3
from ballhoop.model import PlantParams, wrap_angle
from ballhoop.trajopt.ballistic import (
    NoTakeoffError, ballistic_landing_map, find_takeoff, find_thetadot_des, liftoff_rate,
    post_impact_psi_dot, takeoff_state,
)


def test_drop_from_above_the_inner_hoop(plant):
    land = ballistic_landing_map(HybridState.free(psi=np.pi, r=plant.r_outer), plant)
    assert land.state.x[2] == pytest.approx(np.pi, abs=1e-12)
    exact = np.sqrt(2 * (plant.r_outer - plant.r_inner) / plant.g)
    assert land.flight_time == pytest.approx(exact, abs=1e-11)
    assert land.flight_time == pytest.approx(0.08637, abs=2e-5)
    assert abs(land.state.x[4] - plant.r_inner) < 1e-12


def test_outward_launch_misses(plant):
    s = HybridState.free(psi=0.3, psi_dot=1.0, r=0.06, r_dot=1.0)
    assert ballistic_landing_map(s, plant) is None


@settings(max_examples=40, deadline=None)
@given(psi=st.floats(-np.pi, np.pi), psi_dot=st.floats(-15, 15), r_dot=st.floats(-2, 0))
def test_landing_lies_on_contact_circle(psi, psi_dot, r_dot):
    p = PlantParams()
    s = HybridState.free(psi=psi, psi_dot=psi_dot, r=p.r_outer, r_dot=r_dot)
    land = ballistic_landing_map(s, p)
    if land is None:
        return
    assert abs(land.state.x[4] - p.r_inner) < 1e-11
    assert land.state.x[5] < 0  # arriving, not leaving


def test_hoop_rate_cancels_landing_spin(plant):
    """The hoop rate at lift-off can be chosen so the ball lands without rolling."""
    psi, psi_dot = -2.3, liftoff_rate(-2.3, plant)
    td = find_thetadot_des(psi, psi_dot, plant)
    assert abs(post_impact_psi_dot(td, psi, psi_dot, plant)) < 1e-6


def test_landing_rate_is_affine_in_hoop_rate(plant):
    psi, psi_dot = -2.3, liftoff_rate(-2.3, plant)
    tds = np.linspace(-50, 50, 7)
    v = np.array([post_impact_psi_dot(td, psi, psi_dot, plant) for td in tds])
    fit = np.polyval(np.polyfit(tds, v, 1), tds)
    assert np.max(np.abs(v - fit)) < 1e-8


def test_bracket_independence(plant):
    psi, psi_dot = -2.3, liftoff_rate(-2.3, plant)
    a = find_thetadot_des(psi, psi_dot, plant, bracket=(-100, 100))
    b = find_thetadot_des(psi, psi_dot, plant, bracket=(-400, 400))
    assert a == pytest.approx(b, abs=1e-6)


def test_liftoff_rate_is_on_the_guard(plant):
    for psi, direction in ((-2.0, -1.0), (-2.5, -1.0), (2.2, 1.0)):
        w = liftoff_rate(psi, plant, direction=direction)
        assert abs(-plant.g * np.cos(psi) - plant.r_outer * w**2) < 1e-9


def test_takeoff_search(plant):
    to = find_takeoff(plant)
    assert abs(to.landing_error) < 1e-6
    assert abs(to.psi_dot_after) < 1e-6
    # frozen regression values for the default plant
    assert to.psi == pytest.approx(-2.30772, abs=1e-4)
    assert to.psi_dot == pytest.approx(-8.65040, abs=1e-4)
    assert to.theta_dot == pytest.approx(-2.66896, abs=1e-4)
    assert to.landing.flight_time == pytest.approx(0.12739, abs=1e-4)
    # composition: lift-off reset, arc, landing reset
    land = ballistic_landing_map(takeoff_state(to.psi, to.psi_dot, to.theta_dot, plant), plant)
    after = reset_s2_to_s3(land.state, plant, check=False)
    assert abs(wrap_angle(after.x[2] - np.pi)) <= 0.3
    assert after.mode is Mode.S3


def test_zero_window_is_infeasible(plant):
    with pytest.raises(NoTakeoffError):
        find_takeoff(plant, window=0.0)
