"""Wheel-level control: PI drive loop, steering trajectories, fault monitors.

The drive loop is a PI velocity controller with conditional anti-windup
against a first-order motor plant (J, b). The steering loop is PD plus
reference feedforward tracking a trapezoidal velocity profile; a detent
brake engages whenever the axis and its reference are at rest, holding the
angle against external torque up to the brake rating. Monitors report
faults; they never raise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class GoalOutOfRange(ValueError):
    """Steering goal outside the mechanical +-90 deg range."""


@dataclass(frozen=True)
class PiGains:
    kp: float = 40.0
    ki: float = 80.0


@dataclass(frozen=True)
class MotorModel:
    inertia: float = 0.35      # kg m^2 at the wheel axle
    damping: float = 0.5       # N m s/rad
    max_torque: float = 80.0   # hard clamp, inviolable


@dataclass(frozen=True)
class MotorState:
    speed: float = 0.0
    angle: float = 0.0
    torque: float = 0.0
    integrator: float = 0.0


def step_wheel_controller(
    state: MotorState,
    setpoint: float,
    dt: float,
    model: MotorModel = MotorModel(),
    gains: PiGains = PiGains(),
    load_torque: float = 0.0,
    feedforward: float = 0.0,
) -> tuple[float, MotorState]:
    """One PI step plus plant integration; returns (torque, new state).

    ``feedforward`` is added ahead of the clamp so a known disturbance
    (gravity share on a slope) can be cancelled without waiting for the
    integrator. The integrator freezes while the torque clamp is saturated
    in the direction of the error, so the integral never winds beyond what
    the clamp can realize.
    """
    err = setpoint - state.speed
    integ = state.integrator + err * dt
    raw = feedforward + gains.kp * err + gains.ki * integ
    tau = max(-model.max_torque, min(model.max_torque, raw))
    if tau != raw and (raw - tau) * err > 0.0:
        integ = state.integrator
        raw = feedforward + gains.kp * err + gains.ki * integ
        tau = max(-model.max_torque, min(model.max_torque, raw))
    speed = state.speed + dt * (tau - model.damping * state.speed - load_torque) / model.inertia
    angle = state.angle + dt * speed
    return tau, MotorState(speed, angle, tau, integ)


# ---------------------------------------------------------------------------
# Steering trajectories

@dataclass(frozen=True)
class SteeringTrajectory:
    """Trapezoidal (or triangular) velocity profile between two angles.

    ``sample(t)`` evaluates angle/rate/accel analytically; ``knots`` gives a
    piecewise-linear angle sampling of the same profile for inspection and
    serialization.
    """

    start: float
    goal: float
    rate_limit: float
    accel_limit: float
    t_accel: float
    t_cruise: float
    peak_rate: float
    duration: float

    def sample(self, t: float) -> tuple[float, float, float]:
        d = self.goal - self.start
        if d == 0.0 or t >= self.duration:
            return self.goal, 0.0, 0.0
        if t <= 0.0:
            return self.start, 0.0, 0.0
        sign = 1.0 if d > 0.0 else -1.0
        a = self.accel_limit
        ta, tc = self.t_accel, self.t_cruise
        if t < ta:
            ang = 0.5 * a * t * t
            return self.start + sign * ang, sign * a * t, sign * a
        if t < ta + tc:
            ang = 0.5 * a * ta * ta + self.peak_rate * (t - ta)
            return self.start + sign * ang, sign * self.peak_rate, 0.0
        tb = self.duration - t  # time remaining in decel phase
        ang = abs(d) - 0.5 * a * tb * tb
        return self.start + sign * ang, sign * a * tb, -sign * a

    def knots(self, dt: float = 0.01) -> list[tuple[float, float]]:
        if self.duration == 0.0:
            return [(0.0, self.goal)]
        out = []
        n = int(self.duration / dt)
        for k in range(n + 1):
            t = k * dt
            out.append((t, self.sample(t)[0]))
        if out[-1][0] < self.duration:
            out.append((self.duration, self.goal))
        return out


def plan_steering_trajectory(
    current: float,
    goal: float,
    rate_limit: float = 0.5,
    accel_limit: float = 1.0,
) -> SteeringTrajectory:
    """Plan a rate/accel-limited slew from ``current`` to ``goal``.

    Raises GoalOutOfRange when the goal leaves the +-90 deg mechanical
    range. A zero-length move yields a zero-duration trajectory.
    """
    if abs(goal) > 0.5 * math.pi + 1e-12:
        raise GoalOutOfRange(f"steering goal {goal:.4f} rad beyond +-pi/2")
    if rate_limit <= 0.0 or accel_limit <= 0.0:
        raise ValueError("rate and accel limits must be positive")
    d = abs(goal - current)
    if d == 0.0:
        return SteeringTrajectory(current, goal, rate_limit, accel_limit, 0.0, 0.0, 0.0, 0.0)
    if d >= rate_limit * rate_limit / accel_limit:
        t_accel = rate_limit / accel_limit
        t_cruise = (d - rate_limit * rate_limit / accel_limit) / rate_limit
        peak = rate_limit
    else:
        peak = math.sqrt(d * accel_limit)
        t_accel = peak / accel_limit
        t_cruise = 0.0
    return SteeringTrajectory(
        current, goal, rate_limit, accel_limit, t_accel, t_cruise, peak, 2.0 * t_accel + t_cruise
    )


# ---------------------------------------------------------------------------
# Steering axis: PD + feedforward + detent brake

@dataclass(frozen=True)
class PdGains:
    kp: float = 60.0
    kd: float = 8.0


@dataclass(frozen=True)
class SteeringModel:
    inertia: float = 0.1        # kg m^2 about the steering axis
    damping: float = 1.0        # N m s/rad
    max_torque: float = 60.0
    brake_torque: float = 100.0  # detent rating
    rest_rate: float = 0.01       # rad/s below which the axis counts as at rest
    capture_error: float = 0.002  # rad inside which the brake may engage


@dataclass(frozen=True)
class SteeringState:
    angle: float = 0.0
    rate: float = 0.0
    torque: float = 0.0
    brake_engaged: bool = True


def step_steering_controller(
    state: SteeringState,
    ref_angle: float,
    ref_rate: float,
    ref_accel: float,
    dt: float,
    model: SteeringModel = SteeringModel(),
    gains: PdGains = PdGains(),
    disturbance: float = 0.0,
) -> tuple[float, SteeringState]:
    """One PD + feedforward step against the steering plant.

    While the reference is stationary and the axis at rest, the detent
    brake holds the angle rigidly against disturbances up to its rating
    (overload releases it and the PD takes over).
    """
    err = ref_angle - state.angle
    moving_ref = ref_rate != 0.0 or ref_accel != 0.0 or abs(err) > model.capture_error
    if state.brake_engaged and not moving_ref:
        if abs(disturbance) <= model.brake_torque:
            return 0.0, SteeringState(state.angle, 0.0, 0.0, True)
        # brake overloaded, fall through to the active loop
    tau = (
        gains.kp * err
        + gains.kd * (ref_rate - state.rate)
        + model.inertia * ref_accel
        + model.damping * ref_rate
    )
    tau = max(-model.max_torque, min(model.max_torque, tau))
    rate = state.rate + dt * (tau + disturbance - model.damping * state.rate) / model.inertia
    angle = state.angle + dt * rate
    engage = (
        not moving_ref
        and abs(rate) < model.rest_rate
        and abs(ref_angle - angle) <= model.capture_error
    )
    if engage:
        rate = 0.0
    return tau, SteeringState(angle, rate, tau, engage)


# ---------------------------------------------------------------------------
# Fault monitoring

class FaultFlag(Enum):
    OVERSPEED = "overspeed"
    OVERTORQUE = "overtorque"
    STALL = "stall"
    STEERING_LIMIT = "steering_limit"
    TRACKING_ERROR = "tracking_error"


@dataclass(frozen=True)
class FaultSet:
    entries: frozenset = frozenset()  # of (FaultFlag, wheel_index)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def union(self, other: "FaultSet") -> "FaultSet":
        return FaultSet(self.entries | other.entries)

    def labels(self) -> list[str]:
        return sorted(f"{flag.value}:{wheel}" for flag, wheel in self.entries)

    def has(self, flag: "FaultFlag", wheel: int) -> bool:
        return (flag, wheel) in self.entries

    @staticmethod
    def single(flag: FaultFlag, wheel: int) -> "FaultSet":
        return FaultSet(frozenset({(flag, wheel)}))


EMPTY_FAULTS = FaultSet()


@dataclass(frozen=True)
class FaultLimits:
    speed_limit: float                 # rated wheel speed, rad/s
    max_torque: float = 80.0
    overspeed_ratio: float = 1.05
    stall_torque_ratio: float = 0.9
    stall_speed: float = 0.01
    steering_range: float = 0.5 * math.pi
    steering_margin: float = math.radians(0.5)
    tracking_tol: float = math.radians(5.0)


@dataclass(frozen=True)
class WheelHealth:
    """Per-wheel measurements a monitor tick consumes."""

    speed: float
    torque: float
    clamp_active: bool
    steer_angle: float
    steer_ref: float


class FaultMonitor:
    """Windowed fault detection with latching.

    Overspeed and steering-limit trip instantly; overtorque, stall, and
    tracking error must persist for ``window`` consecutive ticks. Latched
    faults stay set until ``reset`` (operator acknowledgment).
    """

    def __init__(self, limits: FaultLimits, window: int = 20):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.limits = limits
        self.window = window
        self.reset()

    def reset(self) -> None:
        self._latched: set = set()
        self._over = [0, 0, 0, 0]
        self._stall = [0, 0, 0, 0]
        self._track = [0, 0, 0, 0]

    def update(self, wheels: list[WheelHealth]) -> FaultSet:
        lim = self.limits
        for i, w in enumerate(wheels):
            if abs(w.speed) > lim.overspeed_ratio * lim.speed_limit:
                self._latched.add((FaultFlag.OVERSPEED, i))
            if abs(w.steer_angle) > lim.steering_range + lim.steering_margin:
                self._latched.add((FaultFlag.STEERING_LIMIT, i))
            self._over[i] = self._over[i] + 1 if w.clamp_active else 0
            if self._over[i] > self.window:
                self._latched.add((FaultFlag.OVERTORQUE, i))
            stalled = abs(w.torque) > lim.stall_torque_ratio * lim.max_torque and abs(w.speed) < lim.stall_speed
            self._stall[i] = self._stall[i] + 1 if stalled else 0
            if self._stall[i] >= self.window:
                self._latched.add((FaultFlag.STALL, i))
            off = abs(w.steer_angle - w.steer_ref) > lim.tracking_tol
            self._track[i] = self._track[i] + 1 if off else 0
            if self._track[i] >= self.window:
                self._latched.add((FaultFlag.TRACKING_ERROR, i))
        return FaultSet(frozenset(self._latched))
