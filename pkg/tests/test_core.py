import json
import math

import pytest
from hypothesis import given, strategies as st

from emrs.core import (
    DomainError,
    ChassisModule,
    RoverGeometry,
    WheelParams,
    breadboard_scale,
    default_modules,
    max_wheel_angular_speed,
    normalize_angle,
    rover_from_json,
    rover_to_json,
)
from oracles import scale_oracle


def test_wheel_defaults():
    w = WheelParams()
    assert w.diameter == 0.612
    assert w.radius == pytest.approx(0.306, abs=1e-12)
    assert w.tile_width == 0.216
    assert w.stiffness_min == 2500.0
    assert w.stiffness_max == 6000.0
    assert w.max_ground_speed == pytest.approx(3.0 / 3.6, abs=1e-12)
    assert w.max_torque == 80.0
    assert w.mass == 7.0


def test_wheel_validation():
    with pytest.raises(DomainError):
        WheelParams(diameter=-0.1)
    with pytest.raises(DomainError):
        WheelParams(stiffness_min=7000.0, stiffness_max=6000.0)
    with pytest.raises(DomainError):
        WheelParams(max_torque=0.0)


def test_default_modules_layout():
    mods = default_modules()
    names = {m.name for m in mods}
    assert names == {"central", "lateral_left", "lateral_right", "top"}
    central = next(m for m in mods if m.name == "central")
    assert central.size == (1.8, 0.231, 0.65)
    left = next(m for m in mods if m.name == "lateral_left")
    right = next(m for m in mods if m.name == "lateral_right")
    assert left.size == right.size == (1.4, 0.634, 0.4)
    assert left.position[1] == -right.position[1]
    top = next(m for m in mods if m.name == "top")
    assert top.size == (1.8, 1.5, 0.4)
    # lateral modules flank the central one without overlap
    assert abs(left.position[1]) >= (central.size[1] + left.size[1]) / 2 - 1e-12
    # top deck sits above the central box
    assert top.position[2] - top.size[2] / 2 >= central.size[2] - 1e-12


def test_module_payload():
    m = ChassisModule("central", (1.8, 0.231, 0.65), (0.0, 0.0, 0.325))
    loaded = m.with_payload(200.0, (0.1, 0.0, 0.2))
    assert loaded.payload_mass == 200.0
    assert m.payload_mass == 0.0
    with pytest.raises(DomainError):
        m.with_payload(10.0, (5.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        m.with_payload(-1.0, (0.0, 0.0, 0.0))


def test_geometry_defaults():
    g = RoverGeometry()
    assert g.wheelbase == pytest.approx(1.775, abs=1e-12)
    assert g.track == pytest.approx(1.284, abs=1e-12)
    assert g.steering_lever == 0.2
    assert g.actuator_diameter == 0.150
    assert g.ground_clearance == 0.3
    assert g.structure_mass == 60.0
    assert g.total_mass == pytest.approx(60.0 + 4 * 7.0, abs=1e-12)
    xs = sorted({p[0] for p in g.wheel_positions})
    ys = sorted({p[1] for p in g.wheel_positions})
    assert xs == [-0.8875, 0.8875]
    assert ys == [-0.642, 0.642]


def test_geometry_wheel_order():
    # front-left, front-right, rear-left, rear-right
    g = RoverGeometry()
    fl, fr, rl, rr = g.wheel_positions
    assert fl[0] > 0 and fl[1] > 0
    assert fr[0] > 0 and fr[1] < 0
    assert rl[0] < 0 and rl[1] > 0
    assert rr[0] < 0 and rr[1] < 0


def test_geometry_validation():
    skewed = ((0.9, 0.642), (0.8875, -0.642), (-0.8875, 0.642), (-0.8875, -0.642))
    with pytest.raises(DomainError):
        RoverGeometry(wheel_positions=skewed)
    with pytest.raises(DomainError):
        RoverGeometry(steering_lever=0.05)
    with pytest.raises(DomainError):
        RoverGeometry(ground_clearance=0.0)


def test_with_module_payload_mass():
    g = RoverGeometry()
    central = g.module("central").with_payload(200.0, (0.0, 0.0, 0.2))
    loaded = g.with_module(central)
    assert loaded.payload_mass == 200.0
    assert loaded.total_mass == pytest.approx(288.0, abs=1e-12)
    assert g.payload_mass == 0.0
    with pytest.raises(KeyError):
        g.module("nonexistent")


# Frozen from the 50-digit oracle: (1/6) ** (1/3).
SCALE_1_TO_6 = 0.5503212081491045


def test_scale_factor_value():
    assert scale_oracle(1.0, 1.0 / 6.0) == pytest.approx(SCALE_1_TO_6, abs=1e-15)
    assert breadboard_scale(1.0) == pytest.approx(SCALE_1_TO_6, abs=1e-12)


def test_scale_applied_to_overall_length():
    g = RoverGeometry()
    full_length = g.wheelbase + 2 * g.wheel.radius
    got = breadboard_scale(full_length)
    assert got == pytest.approx(scale_oracle(full_length, 1.0 / 6.0), abs=1e-12)
    assert breadboard_scale(2.366) == pytest.approx(1.302, abs=2e-3)


def test_scale_identity_and_errors():
    assert breadboard_scale(1.23, ratio=1.0) == pytest.approx(1.23, abs=1e-12)
    with pytest.raises(DomainError):
        breadboard_scale(1.0, ratio=0.0)
    with pytest.raises(DomainError):
        breadboard_scale(1.0, ratio=1.5)
    with pytest.raises(DomainError):
        breadboard_scale(-1.0)


@given(st.floats(min_value=1e-6, max_value=1.0), st.floats(min_value=1e-3, max_value=100.0))
def test_scale_monotone_and_linear(ratio, length):
    f = breadboard_scale(length, ratio=ratio)
    assert 0.0 < f <= length * 1.0000001
    assert breadboard_scale(2.0 * length, ratio=ratio) == pytest.approx(2.0 * f, rel=1e-12)


def test_max_wheel_speed():
    w = WheelParams()
    expect = (3.0 / 3.6) / 0.306
    assert expect == pytest.approx(2.7233115468409586, abs=1e-12)
    assert max_wheel_angular_speed(w) == pytest.approx(2.723, abs=1e-3)
    assert max_wheel_angular_speed(w) == pytest.approx(expect, abs=1e-12)


@given(st.floats(min_value=-50.0, max_value=50.0, allow_nan=False))
def test_normalize_angle_range(a):
    n = normalize_angle(a)
    assert -math.pi < n <= math.pi
    assert math.sin(n) == pytest.approx(math.sin(a), abs=1e-9)
    assert math.cos(n) == pytest.approx(math.cos(a), abs=1e-9)


def test_normalize_angle_branch_cut():
    assert normalize_angle(math.pi) == pytest.approx(math.pi, abs=1e-15)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi, abs=1e-15)
    assert normalize_angle(0.0) == 0.0


def test_rover_json_roundtrip():
    g = RoverGeometry()
    g = g.with_module(g.module("central").with_payload(200.0, (0.0, 0.0, 0.2)))
    text = rover_to_json(g)
    doc = json.loads(text)
    assert doc["schema"] == "emrs-rover/1"
    back = rover_from_json(text)
    assert back == g
    # serialization is deterministic
    assert rover_to_json(back) == text


def test_rover_json_rejects_bad_input():
    with pytest.raises(DomainError):
        rover_from_json('{"schema": "other/9"}')
    with pytest.raises(DomainError):
        rover_from_json("not json at all")
    g = RoverGeometry()
    doc = json.loads(rover_to_json(g))
    del doc["modules"][0]["name"]
    with pytest.raises(DomainError):
        rover_from_json(json.dumps(doc))
    doc = json.loads(rover_to_json(g))
    doc["wheel"]["diameter"] = -1.0
    with pytest.raises(DomainError):
        rover_from_json(json.dumps(doc))
