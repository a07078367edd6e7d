"""End-to-end acceptance battery.

One test per top-level requirement, each announcing a PASS line with the
measured figure so a transcript of this file doubles as the commissioning
report. Tolerances are stated inline next to each assertion.
"""

import math
import random
import re
import time
from dataclasses import replace

import pytest

from emrs.cli import main as cli_main
from emrs.core import BodyTwist, LocomotionMode, Pose2D, RoverGeometry
from emrs.kinematics import (
    ackermann_icr,
    forward_twist,
    integrate_pose,
    inverse_kinematics,
    validate_twist,
)
from emrs.sim import (
    Scenario,
    bundled_scenario_names,
    load_scenario,
    log_to_text,
    obstacle_traversal_check,
    run_scenario,
)
from emrs.suspension import (
    active_cog_shift,
    compute_cog,
    default_suspension,
    stability_margin,
    stow_envelope,
)

GEOM = RoverGeometry()

# reference dimensions the envelope model must reproduce within 5%
STOWED_REF = (1.879, 1.5, 0.7)
DEPLOYED_REF = (2.366, 1.525, 1.0)


@pytest.fixture
def announce(capsys):
    def emit(name, detail):
        with capsys.disabled():
            print(f"PASS {name}: {detail}")
    return emit


@pytest.fixture(scope="module")
def battery():
    """Every bundled scenario run once at the default telemetry rate."""
    out = {}
    for name in bundled_scenario_names():
        out[name] = run_scenario(load_scenario(name))
    return out


def sample_admissible(mode, rng, count=120):
    """Admissible twists per mode, speeds well under the wheel rating."""
    twists = []
    while len(twists) < count:
        if mode is LocomotionMode.CRAB:
            tw = BodyTwist(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.0)
        elif mode is LocomotionMode.POINT_TURN:
            tw = BodyTwist(0.0, 0.0, rng.uniform(-0.7, 0.7))
        else:
            tw = BodyTwist(rng.uniform(-0.5, 0.5), 0.0, rng.uniform(-0.3, 0.3))
        try:
            validate_twist(tw, mode)
        except Exception:
            continue
        twists.append(tw)
    return twists


def test_kinematics_roundtrip(announce):
    rng = random.Random(20240817)
    t0 = time.perf_counter()
    worst = 0.0
    total = 0
    for mode in LocomotionMode:
        for tw in sample_admissible(mode, rng):
            sp = inverse_kinematics(tw, mode, GEOM)
            back = forward_twist(sp, mode, GEOM)
            err = max(
                abs(back.vx - tw.vx), abs(back.vy - tw.vy),
                abs(back.omega - tw.omega),
            )
            worst = max(worst, err)
            assert err < 1e-9
            total += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    announce(
        "kinematics roundtrip",
        f"{total} twists across {len(LocomotionMode)} modes, "
        f"worst error {worst:.2e}, {elapsed:.2f} s",
    )


def test_ackermann_icr_property(announce):
    rng = random.Random(7)
    worst = 0.0
    for _ in range(50):
        tw = BodyTwist(rng.uniform(-0.5, 0.5), 0.0, rng.uniform(0.05, 0.4) * rng.choice((-1, 1)))
        icr = ackermann_icr(tw)
        sp = inverse_kinematics(tw, LocomotionMode.ACKERMANN, GEOM)
        for (px, py), steer in zip(GEOM.wheel_positions, sp.steer_angles):
            # the axle line is normal to the rolling direction, so the
            # ICR offset from it is the projection onto the rolling axis
            d = abs(
                (icr.x - px) * math.cos(steer) + (icr.y - py) * math.sin(steer)
            )
            worst = max(worst, d)
            assert d < 1e-6
    announce("ackermann ICR", f"50 commands, worst axle-line miss {worst:.2e} m")


def test_point_turn_geometry(announce):
    tw = BodyTwist(0.0, 0.0, 0.2)
    sp = inverse_kinematics(tw, LocomotionMode.POINT_TURN, GEOM)
    # tangent-angle oracle for the front-left wheel at (0.8875, 0.642):
    # the rolling direction is perpendicular to the radius, folded into
    # the +-90 deg steering range
    oracle = math.degrees(math.atan2(0.8875, -0.642)) - 180.0
    fl = math.degrees(sp.steer_angles[0])
    assert fl == pytest.approx(oracle, abs=0.01)

    back = forward_twist(sp, LocomotionMode.POINT_TURN, GEOM)
    pose = Pose2D()
    dt = 0.01
    steps = round(2.0 * math.pi / tw.omega / dt)
    for _ in range(steps):
        pose = integrate_pose(pose, back, dt)
    net = math.hypot(pose.x, pose.y)
    assert net < 1e-6
    announce(
        "point-turn geometry",
        f"front-left steer {fl:.4f} deg (oracle {oracle:.4f}), "
        f"net translation per revolution {net:.2e} m",
    )


def test_slope_ascent(announce, battery):
    t0 = time.perf_counter()
    _, metrics = run_scenario(load_scenario("slope25"))
    high_mu_wall = time.perf_counter() - t0
    assert high_mu_wall < 10.0
    records, _ = battery["slope25"]
    assert metrics["net_displacement"] >= 5.0
    assert metrics["min_margin"] > 0.0
    slipped = sum(w.slip for r in records for w in r.wheels)
    assert slipped == 0

    t0 = time.perf_counter()
    _, low_mu = run_scenario(load_scenario("slope25_lowmu"))
    low_mu_wall = time.perf_counter() - t0
    assert low_mu_wall < 10.0
    assert low_mu["net_displacement"] < 0.1
    announce(
        "slope 25 deg",
        f"mu 0.6 ascends {metrics['net_displacement']:.2f} m with 0 slip flags, "
        f"margin {metrics['min_margin']:.3f}; mu 0.4 nets "
        f"{low_mu['net_displacement']:.3f} m; runtimes {high_mu_wall:.1f}/"
        f"{low_mu_wall:.1f} s",
    )


def test_obstacle_step(announce, battery):
    ok, factor = obstacle_traversal_check(0.30)
    assert ok
    records, metrics = battery["step30"]
    assert metrics["terminal"] is None
    # the body center must end past the step with every wheel across
    assert metrics["final_pose"][0] > 2.0 + GEOM.wheelbase / 2.0
    assert not any("contact_loss" in e for r in records for e in r.events)

    tall_ok, tall_factor = obstacle_traversal_check(0.45)
    assert not tall_ok
    assert tall_factor
    announce(
        "obstacle step",
        f"0.30 m passes ({factor}), crossed to x={metrics['final_pose'][0]:.2f} m "
        f"without contact loss; 0.45 m fails on {tall_factor!r}",
    )


def test_excavation_drawbar(announce, battery):
    _, metrics = battery["excavation_drawbar"]
    scenario = load_scenario("excavation_drawbar")
    oracle = scenario.friction * scenario.geometry().total_mass * scenario.gravity
    err = abs(metrics["max_drawbar"] - oracle) / oracle
    assert err <= 0.02
    announce(
        "excavation drawbar",
        f"max pull {metrics['max_drawbar']:.1f} N vs mu*m*g {oracle:.1f} N "
        f"({100 * err:.2f}% off, limit 2%)",
    )


def test_isru_payload_cog_shift(announce):
    geom = GEOM.with_module(GEOM.module("central").with_payload(200.0, (0.0, 0.0, 0.2)))
    cog = compute_cog(geom)
    height = cog[2] + geom.ground_clearance
    contacts = list(geom.wheel_positions)
    slope = math.radians(25.0)
    downhill = -math.pi / 2  # lateral slope, downhill toward -y
    base = stability_margin((cog[0], cog[1], height), contacts, slope, downhill)
    shift = (0.0, 0.10)  # uphill
    active_cog_shift(geom, default_suspension(geom), height, shift)
    shifted = stability_margin(
        (cog[0] + shift[0], cog[1] + shift[1], height), contacts, slope, downhill,
    )
    assert shifted > base
    announce(
        "ISRU cog shift",
        f"200 kg on 25 deg lateral slope: margin {base:.3f} -> {shifted:.3f} m "
        f"after 0.10 m uphill shift",
    )


def test_wheel_walking_escape(announce, battery):
    walk = load_scenario("wheelwalk_escape")
    driving_only = replace(
        walk,
        name="drive_only",
        duration=30.0,
        script=tuple(
            (t, cmd) for t, cmd in walk.script
            if t < 30.0 and cmd.kind.value in ("set_mode", "twist")
        ),
    )
    _, driving = run_scenario(driving_only)
    assert driving["net_displacement"] < 0.05
    _, walking = battery["wheelwalk_escape"]
    assert walking["net_displacement"] > 0.5
    announce(
        "wheel-walking safeguard",
        f"mu 0.2 slope: driving nets {driving['net_displacement']:.3f} m in 30 s, "
        f"wheel-walking nets {walking['net_displacement']:.3f} m",
    )


def test_scaling_table(announce, capsys):
    assert cli_main(["scale"]) == 0
    out = capsys.readouterr().out
    factor = float(re.search(r"length factor (\d+\.\d+)", out).group(1))
    assert factor == pytest.approx(0.550, abs=0.001)
    for ref, stowed in ((STOWED_REF, True), (DEPLOYED_REF, False)):
        model = stow_envelope(GEOM, stowed)
        for got, want in zip(model, ref):
            assert abs(got - want) / want <= 0.05
    # the printed table carries the same envelope rows
    assert "envelope stowed" in out and "envelope deployed" in out
    announce(
        "scaling law",
        f"factor {factor:.3f}; envelope within 5% of "
        f"{STOWED_REF} stowed / {DEPLOYED_REF} deployed",
    )


def test_determinism(announce, battery):
    for name in bundled_scenario_names():
        records, _ = battery[name]
        again, _ = run_scenario(load_scenario(name))
        assert log_to_text(records) == log_to_text(again), name
    announce(
        "determinism",
        f"{len(bundled_scenario_names())} scenarios byte-identical on rerun",
    )


def test_torque_ceiling(announce, battery):
    worst = 0.0
    for name, (records, metrics) in battery.items():
        assert metrics["max_torque"] <= 80.0 + 1e-9, name
        for rec in records:
            for w in rec.wheels:
                worst = max(worst, abs(w.torque))
                assert abs(w.torque) <= 80.0 + 1e-9, name
    announce(
        "torque ceiling",
        f"max |torque| across all bundled logs {worst:.2f} N*m (limit 80)",
    )
