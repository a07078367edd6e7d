"""Inverse kinematics, steering wrap, and least-squares odometry.

Each wheel at body position p_i sees the planar velocity
v_i = (vx, vy) + omega x p_i. Steering points along v_i, folded into the
mechanical +-90 deg range by flipping 180 deg and negating the drive speed.
Forward odometry refits the body twist to the measured wheel velocity
vectors; skid mode fits the longitudinal components only (the lateral ones
are slip by construction) and applies the slip factor chi to omega.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    BodyTwist,
    LocomotionMode,
    Pose2D,
    RoverGeometry,
    max_wheel_angular_speed,
    normalize_angle,
)

HALF_PI = 0.5 * math.pi
ADMISSIBLE_TOL = 1e-9


class InadmissibleTwist(ValueError):
    """Twist violates the constraint set of the requested mode."""


class SpeedLimitExceeded(ValueError):
    """A wheel drive speed would exceed the rated maximum; command rejected whole."""


class DegenerateFit(ArithmeticError):
    """Wheel layout leaves the twist fit singular."""


@dataclass(frozen=True)
class WheelSetpoints:
    """Per-wheel steering angles (rad, +-pi/2) and drive speeds (rad/s), FL FR RL RR."""

    steer_angles: tuple[float, float, float, float]
    drive_speeds: tuple[float, float, float, float]


@dataclass(frozen=True)
class Icr:
    """Instantaneous center of rotation in the body frame."""

    x: float = 0.0
    y: float = 0.0
    at_infinity: bool = False

    def __post_init__(self):
        if self.at_infinity and (self.x != 0.0 or self.y != 0.0):
            raise ValueError("ICR at infinity carries no coordinates")


def validate_twist(twist: BodyTwist, mode: LocomotionMode) -> None:
    """Raise InadmissibleTwist unless the twist satisfies the mode constraints."""
    if mode is LocomotionMode.SKID or mode is LocomotionMode.ACKERMANN:
        if abs(twist.vy) > ADMISSIBLE_TOL:
            raise InadmissibleTwist(f"{mode.value} requires vy = 0, got {twist.vy}")
    elif mode is LocomotionMode.CRAB:
        if abs(twist.omega) > ADMISSIBLE_TOL:
            raise InadmissibleTwist(f"crab requires omega = 0, got {twist.omega}")
    elif mode is LocomotionMode.POINT_TURN:
        if abs(twist.vx) > ADMISSIBLE_TOL or abs(twist.vy) > ADMISSIBLE_TOL:
            raise InadmissibleTwist("point turn requires vx = vy = 0")


def wrap_steering(direction: float, speed: float) -> tuple[float, float]:
    """Fold a velocity direction into the +-90 deg steering range.

    Angles strictly beyond +-90 deg flip by 180 deg with the drive speed
    negated; the wheel's ground velocity is unchanged. Exactly +-90 deg is
    reachable and kept; exactly 180 deg folds to 0 with negated speed.
    """
    d = normalize_angle(direction)
    if d > HALF_PI:
        return d - math.pi, -speed
    if d < -HALF_PI:
        return d + math.pi, -speed
    return d, speed


def inverse_kinematics(
    twist: BodyTwist, mode: LocomotionMode, geom: RoverGeometry
) -> WheelSetpoints:
    """Per-wheel steering and drive setpoints realizing a body twist.

    Raises InadmissibleTwist for mode violations and SpeedLimitExceeded if
    any wheel would spin faster than the rated maximum (the whole command is
    rejected; nothing is rescaled). The zero twist maps to steer 0 on every
    wheel so mode entry poses are a caller concern.
    """
    validate_twist(twist, mode)
    r = geom.wheel.radius
    limit = max_wheel_angular_speed(geom.wheel)
    angles = []
    speeds = []
    if mode is LocomotionMode.SKID:
        half_track = 0.5 * geom.track
        for _, y in geom.wheel_positions:
            side = half_track if y > 0.0 else -half_track
            v = twist.vx - twist.omega * side
            angles.append(0.0)
            speeds.append(v / r)
    else:
        for x, y in geom.wheel_positions:
            vx = twist.vx - twist.omega * y
            vy = twist.vy + twist.omega * x
            mag = math.hypot(vx, vy)
            if mag < 1e-12:
                angles.append(0.0)
                speeds.append(0.0)
                continue
            angle, speed = wrap_steering(math.atan2(vy, vx), mag / r)
            angles.append(angle)
            speeds.append(speed)
    for i, s in enumerate(speeds):
        if abs(s) > limit + 1e-12:
            raise SpeedLimitExceeded(
                f"wheel {i} needs {abs(s):.4f} rad/s, limit {limit:.4f}"
            )
    return WheelSetpoints(tuple(angles), tuple(speeds))


def ackermann_icr(twist: BodyTwist) -> Icr:
    """ICR of an Ackermann twist; on the lateral body axis, or at infinity when omega = 0."""
    validate_twist(twist, LocomotionMode.ACKERMANN)
    if twist.omega == 0.0:
        return Icr(at_infinity=True)
    return Icr(0.0, twist.vx / twist.omega)


def wheel_ground_velocity(setpoint_angle: float, drive_speed: float, radius: float) -> tuple[float, float]:
    """Planar velocity vector a wheel imposes on the ground contact."""
    v = drive_speed * radius
    return (v * math.cos(setpoint_angle), v * math.sin(setpoint_angle))


def solve_twist(
    points: list[tuple[float, float]], velocities: list[tuple[float, float]]
) -> BodyTwist:
    """Least-squares body twist from wheel velocity vectors.

    Normal equations solved with fixed-order Gaussian elimination; raises
    DegenerateFit when the wheel layout is rank-deficient. All wheels
    stationary is not degenerate and yields the zero twist.
    """
    # rows per wheel: [1 0 -y | ux], [0 1 x | uy]
    a11 = float(len(points)); a13 = 0.0; a23 = 0.0; a33 = 0.0
    b1 = b2 = b3 = 0.0
    for (x, y), (ux, uy) in zip(points, velocities):
        a13 += -y
        a23 += x
        a33 += x * x + y * y
        b1 += ux
        b2 += uy
        b3 += x * uy - y * ux
    # symmetric 3x3: [[n,0,a13],[0,n,a23],[a13,a23,a33]]
    return _solve3(a11, a13, a23, a33, b1, b2, b3, scale=a33)


def _solve3(n, a13, a23, a33, b1, b2, b3, scale):
    det = n * n * a33 - n * a13 * a13 - n * a23 * a23
    if abs(det) <= 1e-12 * max(1.0, scale * n * n):
        raise DegenerateFit("wheel layout gives a singular twist fit")
    # eliminate: vx = (b1 - a13*w)/n ; vy = (b2 - a23*w)/n
    # (a33 - (a13^2 + a23^2)/n) w = b3 - (a13 b1 + a23 b2)/n
    denom = a33 - (a13 * a13 + a23 * a23) / n
    w = (b3 - (a13 * b1 + a23 * b2) / n) / denom
    vx = (b1 - a13 * w) / n
    vy = (b2 - a23 * w) / n
    return BodyTwist(vx, vy, w)


def solve_twist_longitudinal(
    points: list[tuple[float, float]], long_speeds: list[float]
) -> BodyTwist:
    """Skid fit: vx and omega from longitudinal wheel speeds only."""
    n = float(len(points))
    syy = 0.0; sy = 0.0; su = 0.0; syu = 0.0
    for (_, y), u in zip(points, long_speeds):
        sy += -y
        syy += y * y
        su += u
        syu += -y * u
    det = n * syy - sy * sy
    if abs(det) <= 1e-12 * max(1.0, syy * n):
        raise DegenerateFit("skid fit needs laterally separated wheels")
    w = (n * syu - sy * su) / det
    vx = (su - sy * w) / n
    return BodyTwist(vx, 0.0, w)


def forward_twist(
    measured: WheelSetpoints,
    mode: LocomotionMode,
    geom: RoverGeometry,
    chi: float = 1.0,
) -> BodyTwist:
    """Body twist reconstructed from measured wheel speeds and angles.

    In skid mode only longitudinal components are trusted and the fitted
    omega is scaled by the slip factor chi (1.0 = ideal ground).
    """
    r = geom.wheel.radius
    pts = list(geom.wheel_positions)
    if mode is LocomotionMode.SKID:
        longs = [s * r for s in measured.drive_speeds]
        t = solve_twist_longitudinal(pts, longs)
        return BodyTwist(t.vx, 0.0, chi * t.omega)
    vels = [
        wheel_ground_velocity(a, s, r)
        for a, s in zip(measured.steer_angles, measured.drive_speeds)
    ]
    return solve_twist(pts, vels)


def integrate_pose(pose: Pose2D, twist: BodyTwist, dt: float) -> Pose2D:
    """First-order pose update: body twist applied over dt in the world frame."""
    c = math.cos(pose.heading)
    s = math.sin(pose.heading)
    return Pose2D(
        pose.x + dt * (twist.vx * c - twist.vy * s),
        pose.y + dt * (twist.vx * s + twist.vy * c),
        normalize_angle(pose.heading + dt * twist.omega),
    )
