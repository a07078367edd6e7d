"""Locomotion state machine, command handling, and the wheel-walking gait.

The manager is the single writer of locomotion state. Commands arrive one at
a time through ``handle_command`` (rejection is a return value, never an
exception); ``step_manager`` advances the state by one tick and emits
per-wheel setpoints plus a list of event strings.

Mode changes stop the rover first: drive references ramp to zero, and only
once every wheel is below the stop tolerance do the steering references
start slewing to the target mode's entry pose. An emergency stop is a
maximum-deceleration ramp to Idle, not an instant zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .core import BodyTwist, DomainError, LocomotionMode, RoverGeometry
from .control import EMPTY_FAULTS, FaultSet
from .kinematics import (
    InadmissibleTwist,
    SpeedLimitExceeded,
    inverse_kinematics,
)
from .suspension import (
    DegenerateSupport,
    ShiftUnreachable,
    SuspensionUnit,
    active_cog_shift,
    compute_cog,
    default_suspension,
    stability_margin,
)

Vec4 = tuple[float, float, float, float]
ZERO4: Vec4 = (0.0, 0.0, 0.0, 0.0)

HALF_PI = 0.5 * math.pi


class StateKind(Enum):
    STOWED = "Stowed"
    DEPLOYING = "Deploying"
    IDLE = "Idle"
    DRIVING = "Driving"
    MODE_TRANSITION = "ModeTransition"
    WHEEL_WALKING = "WheelWalking"
    STOWING = "Stowing"
    FAULT = "Fault"


class CommandKind(Enum):
    TWIST = "twist"
    SET_MODE = "set_mode"
    DEPLOY = "deploy"
    STOW = "stow"
    WHEEL_WALK_START = "wheel_walk_start"
    WHEEL_WALK_STOP = "wheel_walk_stop"
    ESTOP = "estop"


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    twist: BodyTwist | None = None
    mode: LocomotionMode | None = None

    def __post_init__(self):
        if self.kind is CommandKind.TWIST:
            if self.twist is None:
                raise DomainError("twist command carries a twist")
            for v in (self.twist.vx, self.twist.vy, self.twist.omega):
                if not math.isfinite(v):
                    raise DomainError("twist components must be finite")
        if self.kind is CommandKind.SET_MODE and self.mode is None:
            raise DomainError("set_mode command carries a mode")


def twist_command(twist: BodyTwist) -> Command:
    return Command(CommandKind.TWIST, twist=twist)


def set_mode_command(mode: LocomotionMode) -> Command:
    return Command(CommandKind.SET_MODE, mode=mode)


DEPLOY = Command(CommandKind.DEPLOY)
STOW = Command(CommandKind.STOW)
WHEEL_WALK_START = Command(CommandKind.WHEEL_WALK_START)
WHEEL_WALK_STOP = Command(CommandKind.WHEEL_WALK_STOP)
ESTOP = Command(CommandKind.ESTOP)

_BARE_COMMANDS = ("deploy", "stow", "wheel_walk_start", "wheel_walk_stop", "estop")


def command_to_dict(cmd: Command) -> dict:
    if cmd.kind is CommandKind.TWIST:
        return {
            "type": "twist",
            "vx": cmd.twist.vx,
            "vy": cmd.twist.vy,
            "omega": cmd.twist.omega,
        }
    if cmd.kind is CommandKind.SET_MODE:
        return {"type": "set_mode", "mode": cmd.mode.value}
    return {"type": cmd.kind.value}


def command_from_dict(data) -> Command:
    """Parse one command object; unknown extra fields are ignored."""
    if not isinstance(data, dict):
        raise DomainError("command must be a JSON object")
    kind = data.get("type")
    if kind == "twist":
        missing = [k for k in ("vx", "vy", "omega") if k not in data]
        if missing:
            raise DomainError(f"twist command missing {', '.join(missing)}")
        try:
            twist = BodyTwist(
                float(data["vx"]), float(data["vy"]), float(data["omega"])
            )
        except (TypeError, ValueError):
            raise DomainError("twist components must be numbers") from None
        return Command(CommandKind.TWIST, twist=twist)
    if kind == "set_mode":
        if "mode" not in data:
            raise DomainError("set_mode command missing mode")
        try:
            mode = LocomotionMode(data["mode"])
        except ValueError:
            raise DomainError(f"unknown mode {data['mode']!r}") from None
        return Command(CommandKind.SET_MODE, mode=mode)
    if kind in _BARE_COMMANDS:
        return Command(CommandKind(kind))
    raise DomainError(f"unknown command type {kind!r}")


@dataclass(frozen=True)
class GaitParams:
    """Open-loop wheel-walking cycle, one wheel unloaded per phase.

    Fractions split each phase into shift (lean away from the next lifted
    wheel), lift (unload it), swing (advance its rim), and lower (reload);
    they must sum below 1 with the remainder being the lower window. The
    body drags forward at stride/4 per phase throughout.
    """

    stride: float = 0.2
    phase_time: float = 2.5
    shift_fraction: float = 0.20
    lift_fraction: float = 0.15
    swing_fraction: float = 0.45
    unload_fraction: float = 0.9
    cog_shift: float = 0.05

    def __post_init__(self):
        if self.stride < 0.0 or self.phase_time <= 0.0:
            raise DomainError("gait stride must be >= 0 and phase time positive")
        used = self.shift_fraction + self.lift_fraction + self.swing_fraction
        if min(self.shift_fraction, self.lift_fraction, self.swing_fraction) <= 0.0 or used >= 1.0:
            raise DomainError("gait fractions must be positive and sum below 1")
        if not (0.0 < self.unload_fraction <= 1.0):
            raise DomainError("unload fraction must be in (0, 1]")

    @property
    def drag_speed(self) -> float:
        """Body speed sustained by the loaded wheels, m/s."""
        return self.stride / (4.0 * self.phase_time)


LIFT_ORDER = (0, 1, 2, 3)  # FL, FR, RL, RR


@dataclass(frozen=True)
class ManagerConfig:
    tick: float = 0.01
    drive_accel: float = 3.0        # rad/s^2, normal setpoint ramp
    transition_decel: float = 5.0   # rad/s^2, mode-change stop ramp
    estop_decel: float = 25.0       # rad/s^2, emergency ramp
    steer_rate: float = 0.5         # rad/s reference slew
    susp_rate: float = 1.0          # rad/s active-offset slew
    drive_stop_tol: float = 0.01    # rad/s, interlock threshold
    fold_angle: float = HALF_PI
    gravity: float = 9.81
    contact_stiffness: float = 4000.0  # wheel radial spring, N/m
    gait: GaitParams = field(default_factory=GaitParams)


@dataclass(frozen=True)
class ManagerSetpoints:
    steer_angles: Vec4
    drive_speeds: Vec4
    suspension_offsets: Vec4
    # known disturbance torque per wheel, handed to the drive loops so slow
    # gait creep does not wait on integrator windup to hold a slope
    drive_feedforward: Vec4 = ZERO4


@dataclass(frozen=True)
class SimFeedback:
    """Plant measurements the manager may consult; all optional in spirit.

    ``cog`` is body-frame; ``cog_height`` is measured normal to the contact
    plane. Slope and azimuth describe the terrain under the rover.
    """

    drive_speeds: Vec4 = ZERO4
    normal_forces: Vec4 | None = None
    slope: float = 0.0
    downhill_azimuth: float = 0.0
    cog: tuple[float, float, float] | None = None
    cog_height: float | None = None


@dataclass(frozen=True)
class ManagerState:
    kind: StateKind = StateKind.STOWED
    mode: LocomotionMode | None = None
    target_mode: LocomotionMode | None = None
    walk_phase: int = 0
    faults: FaultSet = EMPTY_FAULTS
    twist: BodyTwist = field(default_factory=BodyTwist)
    steer_refs: Vec4 = ZERO4
    steer_targets: Vec4 = ZERO4
    drive_refs: Vec4 = ZERO4
    drive_targets: Vec4 = ZERO4
    drive_ramp: float = 3.0
    susp_offsets: Vec4 = ZERO4
    susp_targets: Vec4 = ZERO4
    stage: int = 0
    phase_t: float = 0.0
    stop_requested: bool = False

    @property
    def label(self) -> str:
        k = self.kind
        if k is StateKind.DRIVING:
            return f"Driving({self.mode.value})"
        if k is StateKind.MODE_TRANSITION:
            src = self.mode.value if self.mode is not None else "idle"
            return f"ModeTransition({src}->{self.target_mode.value})"
        if k is StateKind.WHEEL_WALKING:
            return f"WheelWalking({self.walk_phase})"
        if k is StateKind.FAULT:
            return f"Fault({','.join(self.faults.labels())})"
        return k.value

    @property
    def setpoints(self) -> ManagerSetpoints:
        return ManagerSetpoints(self.steer_refs, self.drive_refs, self.susp_offsets)


def fold_pattern(config: ManagerConfig, geom: RoverGeometry) -> Vec4:
    """Stow steering angles: each wheel folds toward the body centerline."""
    return tuple(
        math.copysign(config.fold_angle, y) for _, y in geom.wheel_positions
    )


def point_turn_entry_angles(geom: RoverGeometry) -> Vec4:
    """Steering pose for rotation in place (tangent to the footprint circle)."""
    probe = inverse_kinematics(BodyTwist(0.0, 0.0, 0.1), LocomotionMode.POINT_TURN, geom)
    return probe.steer_angles


def mode_entry_angles(mode: LocomotionMode, geom: RoverGeometry) -> Vec4:
    if mode is LocomotionMode.POINT_TURN:
        return point_turn_entry_angles(geom)
    return ZERO4


def initial_state(
    geom: RoverGeometry,
    config: ManagerConfig = ManagerConfig(),
    stowed: bool = True,
) -> ManagerState:
    unit = default_suspension(geom)
    if stowed:
        fold = fold_pattern(config, geom)
        lowered = (-unit.active_range,) * 4
        return ManagerState(
            kind=StateKind.STOWED,
            steer_refs=fold,
            steer_targets=fold,
            susp_offsets=lowered,
            susp_targets=lowered,
            drive_ramp=config.drive_accel,
        )
    return ManagerState(kind=StateKind.IDLE, drive_ramp=config.drive_accel)


# ---------------------------------------------------------------------------
# Command intake

def handle_command(
    state: ManagerState,
    cmd: Command,
    geom: RoverGeometry,
    config: ManagerConfig = ManagerConfig(),
) -> tuple[ManagerState, bool, str]:
    """Apply one command; returns (state, accepted, reason).

    Rejections never raise: the reason string goes back to the operator in
    the command ack.
    """
    k = state.kind
    if cmd.kind is CommandKind.ESTOP:
        if k is StateKind.STOWED:
            return state, True, "stowed"
        if k is StateKind.FAULT:
            cleared = replace(
                state,
                kind=StateKind.IDLE,
                mode=None,
                target_mode=None,
                faults=EMPTY_FAULTS,
                twist=BodyTwist(),
                drive_targets=ZERO4,
                drive_ramp=config.estop_decel,
                steer_targets=state.steer_refs,
                stop_requested=False,
            )
            return cleared, True, "fault reset"
        stopped = replace(
            state,
            kind=StateKind.IDLE,
            mode=None,
            target_mode=None,
            twist=BodyTwist(),
            drive_targets=ZERO4,
            drive_ramp=config.estop_decel,
            steer_targets=state.steer_refs,
            susp_targets=ZERO4,
            stop_requested=False,
        )
        return stopped, True, "emergency stop"

    if k is StateKind.FAULT:
        return state, False, "fault latched; estop to reset"

    if cmd.kind is CommandKind.DEPLOY:
        if k is not StateKind.STOWED:
            return state, False, f"deploy only from Stowed (state {state.label})"
        return (
            replace(state, kind=StateKind.DEPLOYING, stage=0, phase_t=0.0,
                    susp_targets=ZERO4),
            True,
            "deploying",
        )

    if cmd.kind is CommandKind.STOW:
        if k is not StateKind.IDLE:
            return state, False, f"stow only from Idle (state {state.label})"
        return (
            replace(state, kind=StateKind.STOWING, stage=0, phase_t=0.0,
                    steer_targets=fold_pattern(config, geom)),
            True,
            "stowing",
        )

    if cmd.kind is CommandKind.SET_MODE:
        if k is StateKind.DRIVING and cmd.mode is state.mode:
            return state, True, "already in mode"
        if k not in (StateKind.DRIVING, StateKind.IDLE):
            return state, False, f"mode change only from Driving or Idle (state {state.label})"
        return (
            replace(
                state,
                kind=StateKind.MODE_TRANSITION,
                target_mode=cmd.mode,
                twist=BodyTwist(),
                drive_targets=ZERO4,
                drive_ramp=config.transition_decel,
                steer_targets=state.steer_refs,
                stage=0,
            ),
            True,
            f"transition to {cmd.mode.value}",
        )

    if cmd.kind is CommandKind.TWIST:
        if k is not StateKind.DRIVING:
            if k is StateKind.STOWED:
                return state, False, "not deployed"
            return state, False, f"twist only while Driving (state {state.label})"
        try:
            inverse_kinematics(cmd.twist, state.mode, geom)
        except (InadmissibleTwist, SpeedLimitExceeded) as e:
            return state, False, str(e)
        return replace(state, twist=cmd.twist), True, "twist accepted"

    if cmd.kind is CommandKind.WHEEL_WALK_START:
        if k not in (StateKind.IDLE, StateKind.DRIVING):
            return state, False, f"wheel walk only from Idle or Driving (state {state.label})"
        return (
            replace(
                state,
                kind=StateKind.WHEEL_WALKING,
                mode=None,
                twist=BodyTwist(),
                walk_phase=0,
                stage=0,
                phase_t=0.0,
                stop_requested=False,
                drive_targets=ZERO4,
                drive_ramp=config.transition_decel,
                steer_targets=state.steer_refs,
            ),
            True,
            "wheel walk start",
        )

    if cmd.kind is CommandKind.WHEEL_WALK_STOP:
        if k is not StateKind.WHEEL_WALKING:
            return state, False, "not wheel walking"
        if state.stage == 0:
            return (
                replace(state, kind=StateKind.IDLE, drive_targets=ZERO4,
                        susp_targets=ZERO4, stop_requested=False),
                True,
                "wheel walk stopped",
            )
        return replace(state, stop_requested=True), True, "stopping after phase"

    return state, False, f"unknown command {cmd.kind}"


# ---------------------------------------------------------------------------
# Tick

def _slew(values: Vec4, targets: Vec4, rate: float, dt: float) -> Vec4:
    step = rate * dt
    out = []
    for v, t in zip(values, targets):
        d = t - v
        if d > step:
            v += step
        elif d < -step:
            v -= step
        else:
            v = t
        out.append(v)
    return tuple(out)


def _all_stopped(state: ManagerState, feedback: SimFeedback | None, tol: float) -> bool:
    if any(abs(v) > tol for v in state.drive_refs):
        return False
    if feedback is not None and any(abs(v) > tol for v in feedback.drive_speeds):
        return False
    return True


# Diagonal partner of each wheel.  Retracting one corner of a body held on
# four corner springs mostly re-levels the chassis; only the saddle pattern
# (lifted and diagonal retract, the adjacent pair extends) moves load, and it
# moves it off both retracted corners equally.
_DIAG = (3, 2, 1, 0)


def _gait_shift(gait: GaitParams, geom: RoverGeometry, lifted: int) -> tuple[float, float]:
    wx, wy = geom.wheel_positions[lifted]
    norm = math.hypot(wx, wy)
    return (-gait.cog_shift * wx / norm, -gait.cog_shift * wy / norm)


def _predicted_normals(
    geom: RoverGeometry,
    config: ManagerConfig,
    feedback: SimFeedback | None,
    shift: tuple[float, float],
) -> Vec4:
    """Quasi-static wheel loads with the body leaned by ``shift``.

    Linear share model: the projected centre of gravity (terrain slope plus
    the commanded lean) sets the moment each axle pair must react.
    """
    slope = feedback.slope if feedback is not None else 0.0
    azimuth = feedback.downhill_azimuth if feedback is not None else 0.0
    if feedback is not None and feedback.cog is not None:
        cx, cy, _ = feedback.cog
    else:
        cx, cy, _ = compute_cog(geom)
    height = _cog_height(geom, feedback)
    lean = height * math.tan(slope)
    px = cx + lean * math.cos(azimuth) + shift[0]
    py = cy + lean * math.sin(azimuth) + shift[1]
    weight = geom.total_mass * config.gravity * math.cos(slope)
    sx = sum(x * x for x, _ in geom.wheel_positions)
    sy = sum(y * y for _, y in geom.wheel_positions)
    return tuple(
        weight * (0.25 + px * x / sx + py * y / sy)
        for x, y in geom.wheel_positions
    )


def _gait_targets(
    state: ManagerState,
    geom: RoverGeometry,
    config: ManagerConfig,
    unit: SuspensionUnit,
    feedback: SimFeedback | None,
) -> tuple[Vec4, Vec4, Vec4, Vec4]:
    """Steer, drive, suspension, feedforward targets for the gait instant."""
    gait = config.gait
    lifted = LIFT_ORDER[state.walk_phase % 4]
    u = state.phase_t / gait.phase_time  # 0..1 within the phase
    t_shift = gait.shift_fraction
    t_lift = t_shift + gait.lift_fraction
    t_swing = t_lift + gait.swing_fraction

    r = geom.wheel.radius
    drag = gait.drag_speed / r
    drive = [drag] * 4
    if t_lift <= u < t_swing and gait.swing_fraction > 0.0:
        swing_time = gait.swing_fraction * gait.phase_time
        drive[lifted] = drag + gait.stride / swing_time / r

    # lean away from the lifted wheel, ramped in during the shift window
    ramp = min(1.0, u / t_shift) if t_shift > 0.0 else 1.0
    if u >= t_swing:
        ramp = max(0.0, (1.0 - u) / (1.0 - t_swing))
    base_shift = _gait_shift(gait, geom, lifted)
    shift = (base_shift[0] * ramp, base_shift[1] * ramp)
    height = _cog_height(geom, feedback)
    try:
        susp = list(active_cog_shift(geom, unit, height, shift))
    except ShiftUnreachable:
        susp = [0.0, 0.0, 0.0, 0.0]

    # unload profile for the lifted wheel
    if u < t_shift:
        unload = 0.0
    elif u < t_lift:
        unload = (u - t_shift) / gait.lift_fraction
    elif u < t_swing:
        unload = 1.0
    else:
        unload = max(0.0, 1.0 - (u - t_swing) / (1.0 - t_swing))

    # Saddle amplitude sized against the lifted wheel's predicted share so a
    # lightly loaded uphill wheel is not shoved past zero.
    share = _predicted_normals(geom, config, feedback, shift)[lifted]
    drop = gait.unload_fraction * unload * max(0.0, share)
    k_contact = config.contact_stiffness
    k_eff = unit.vertical_rate * k_contact / (unit.vertical_rate + k_contact)
    s_vert = drop / k_eff
    angle = math.asin(min(1.0, s_vert / unit.link_length))
    for i in range(4):
        if i == lifted or i == _DIAG[lifted]:
            susp[i] -= angle
        else:
            susp[i] += angle
    susp = [max(-unit.active_range, min(unit.active_range, s)) for s in susp]

    # Gravity feedforward: creep speed sits below the drive loop's
    # disturbance-rejection knee, so the slope pull is cancelled outright.
    # Each wheel's share follows its predicted normal force with the saddle
    # transfer applied, which is also how the ground divides the load.
    slope = feedback.slope if feedback is not None else 0.0
    azimuth = feedback.downhill_azimuth if feedback is not None else 0.0
    pull = -geom.total_mass * config.gravity * math.sin(slope) * math.cos(azimuth)
    base = _predicted_normals(geom, config, feedback, shift)
    pressed = [
        max(0.0, base[i] - drop if i in (lifted, _DIAG[lifted]) else base[i] + drop)
        for i in range(4)
    ]
    total = sum(pressed)
    if total > 1e-9:
        ff = tuple(pull * r * p / total for p in pressed)
    else:
        ff = ZERO4
    return ZERO4, tuple(drive), tuple(susp), ff


def _cog_height(geom: RoverGeometry, feedback: SimFeedback | None) -> float:
    if feedback is not None and feedback.cog_height is not None:
        return feedback.cog_height
    return compute_cog(geom)[2] + geom.ground_clearance


def _gait_margin_probe(
    state: ManagerState,
    geom: RoverGeometry,
    config: ManagerConfig,
    feedback: SimFeedback | None,
) -> float:
    """Predicted stability margin for the upcoming phase.

    Predicts each wheel's load at full saddle depth, keeps the wheels that
    stay pressed as the support polygon, and measures the leaned, projected
    centre of gravity against it.
    """
    gait = config.gait
    lifted = LIFT_ORDER[state.walk_phase % 4]
    shift = _gait_shift(gait, geom, lifted)
    loads = _predicted_normals(geom, config, feedback, shift)
    drop = gait.unload_fraction * max(0.0, loads[lifted])
    saddle = tuple(
        -drop if i in (lifted, _DIAG[lifted]) else drop
        for i in range(4)
    )
    contacts = [
        p for i, p in enumerate(geom.wheel_positions)
        if loads[i] + saddle[i] > 1e-9
    ]
    if feedback is not None and feedback.cog is not None:
        cx, cy, _ = feedback.cog
    else:
        cx, cy, _ = compute_cog(geom)
    height = _cog_height(geom, feedback)
    px = cx + shift[0]
    py = cy + shift[1]
    slope = feedback.slope if feedback is not None else 0.0
    azimuth = feedback.downhill_azimuth if feedback is not None else 0.0
    try:
        return stability_margin((px, py, height), contacts, slope, azimuth)
    except (DomainError, DegenerateSupport):
        return -1.0


def step_manager(
    state: ManagerState,
    dt: float,
    geom: RoverGeometry,
    config: ManagerConfig = ManagerConfig(),
    faults: FaultSet = EMPTY_FAULTS,
    feedback: SimFeedback | None = None,
    suspension: SuspensionUnit | None = None,
) -> tuple[ManagerState, ManagerSetpoints, list[str]]:
    """Advance the state machine one tick; returns (state, setpoints, events)."""
    if dt <= 0.0:
        raise DomainError("tick must be positive")
    events: list[str] = []
    unit = suspension if suspension is not None else default_suspension(geom)
    feedforward = ZERO4

    if faults and state.kind is not StateKind.FAULT:
        state = replace(
            state,
            kind=StateKind.FAULT,
            faults=faults,
            mode=None,
            target_mode=None,
            twist=BodyTwist(),
            drive_refs=ZERO4,
            drive_targets=ZERO4,
            steer_targets=state.steer_refs,
            susp_targets=state.susp_offsets,
            stop_requested=False,
        )
        events.append(f"state:{state.label}")
        return state, state.setpoints, events

    k = state.kind

    if k is StateKind.DRIVING:
        if state.twist == BodyTwist():
            state = replace(state, drive_targets=ZERO4, steer_targets=state.steer_refs)
        else:
            sp = inverse_kinematics(state.twist, state.mode, geom)
            state = replace(
                state, drive_targets=sp.drive_speeds, steer_targets=sp.steer_angles
            )

    elif k is StateKind.MODE_TRANSITION:
        if state.stage == 0 and _all_stopped(state, feedback, config.drive_stop_tol):
            state = replace(
                state,
                stage=1,
                steer_targets=mode_entry_angles(state.target_mode, geom),
            )
        elif state.stage == 1 and state.steer_refs == state.steer_targets:
            state = replace(
                state,
                kind=StateKind.DRIVING,
                mode=state.target_mode,
                target_mode=None,
                drive_ramp=config.drive_accel,
                stage=0,
            )
            events.append(f"state:{state.label}")

    elif k is StateKind.DEPLOYING:
        if state.stage == 0 and state.susp_offsets == state.susp_targets:
            state = replace(state, stage=1, steer_targets=ZERO4)
        elif state.stage == 1 and state.steer_refs == state.steer_targets:
            state = replace(state, kind=StateKind.IDLE, stage=0)
            events.append("deployed")
            events.append(f"state:{state.label}")

    elif k is StateKind.STOWING:
        if state.stage == 0 and state.steer_refs == state.steer_targets:
            state = replace(state, stage=1, susp_targets=(-unit.active_range,) * 4)
        elif state.stage == 1 and state.susp_offsets == state.susp_targets:
            state = replace(state, kind=StateKind.STOWED, stage=0)
            events.append("stowed")
            events.append(f"state:{state.label}")

    elif k is StateKind.WHEEL_WALKING:
        if state.stage == 0:
            stopped = _all_stopped(state, feedback, config.drive_stop_tol)
            centered = state.steer_refs == ZERO4
            state = replace(state, steer_targets=ZERO4 if stopped else state.steer_refs)
            if stopped and centered:
                margin = _gait_margin_probe(state, geom, config, feedback)
                if margin <= 0.0:
                    events.append("gait_abort")
                    state = replace(
                        state, kind=StateKind.IDLE, drive_targets=ZERO4,
                        susp_targets=ZERO4, stage=0,
                    )
                    events.append(f"state:{state.label}")
                else:
                    state = replace(
                        state, stage=1, phase_t=0.0, drive_ramp=config.drive_accel
                    )
                    events.append(f"gait_phase:{state.walk_phase}")
        if state.kind is StateKind.WHEEL_WALKING and state.stage == 1:
            phase_t = state.phase_t + dt
            if phase_t >= config.gait.phase_time:
                phase_t -= config.gait.phase_time
                if state.stop_requested:
                    state = replace(
                        state,
                        kind=StateKind.IDLE,
                        drive_targets=ZERO4,
                        susp_targets=ZERO4,
                        stage=0,
                        phase_t=0.0,
                        stop_requested=False,
                    )
                    events.append(f"state:{state.label}")
                else:
                    state = replace(
                        state, walk_phase=(state.walk_phase + 1) % 4, phase_t=phase_t
                    )
                    margin = _gait_margin_probe(state, geom, config, feedback)
                    if margin <= 0.0:
                        events.append("gait_abort")
                        state = replace(
                            state, kind=StateKind.IDLE, drive_targets=ZERO4,
                            susp_targets=ZERO4, stage=0, phase_t=0.0,
                        )
                        events.append(f"state:{state.label}")
                    else:
                        events.append(f"gait_phase:{state.walk_phase}")
            else:
                state = replace(state, phase_t=phase_t)
        if state.kind is StateKind.WHEEL_WALKING and state.stage == 1:
            steer_t, drive_t, susp_t, feedforward = _gait_targets(
                state, geom, config, unit, feedback
            )
            state = replace(
                state, steer_targets=steer_t, drive_targets=drive_t, susp_targets=susp_t
            )

    # reference slewing; mode-transition stage 0 keeps steering frozen by
    # construction (targets == refs)
    new_drive = _slew(state.drive_refs, state.drive_targets, state.drive_ramp, dt)
    new_steer = _slew(state.steer_refs, state.steer_targets, config.steer_rate, dt)
    new_susp = _slew(state.susp_offsets, state.susp_targets, config.susp_rate, dt)
    state = replace(state, drive_refs=new_drive, steer_refs=new_steer, susp_offsets=new_susp)

    setpoints = ManagerSetpoints(
        state.steer_refs, state.drive_refs, state.susp_offsets, feedforward
    )
    return state, setpoints, events
