"""Quasi-static terrain simulation, scenarios, and telemetry records.

The plant model favours reproducibility over dynamic fidelity: terrain is a
height field sampled under the four wheels, normal forces come from a linear
corner-spring balance, and the body moves with the twist that best explains
the rims that are not slipping. Inertia of the body is neglected; wheel and
steering actuators run their full closed-loop models. Every quantity is
computed in a fixed order from scenario data only, so two runs of the same
scenario produce byte-identical logs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

from .control import (
    FaultLimits,
    FaultMonitor,
    MotorModel,
    MotorState,
    SteeringModel,
    SteeringState,
    WheelHealth,
    step_steering_controller,
    step_wheel_controller,
)
from .core import (
    DomainError,
    LocomotionMode,
    Pose2D,
    RoverGeometry,
    max_wheel_angular_speed,
)
from .kinematics import (
    DegenerateFit,
    integrate_pose,
    solve_twist,
    solve_twist_longitudinal,
    wheel_ground_velocity,
)
from .manager import (
    Command,
    ManagerConfig,
    SimFeedback,
    StateKind,
    command_from_dict,
    command_to_dict,
    handle_command,
    initial_state,
    step_manager,
)
from .core import BodyTwist
from .suspension import (
    DegenerateSupport,
    compute_cog,
    default_suspension,
    passive_deflection_from_load,
    stability_margin,
)

SCENARIO_SCHEMA = "emrs-scenario/1"
METRICS_SCHEMA = "emrs-metrics/1"

# Rim speed below which a loaded wheel counts as planted during the gait,
# and the static grip ratio its grousers then develop. A crawling wheel digs
# in rather than shears the soil, which is what makes wheel-walking escape
# slopes that defeat rolling.
PLANTED_RIM_SPEED = 0.06
ANCHOR_GRIP = 0.6

# Rim velocity a wheel may deviate from the fitted body motion before it is
# flagged as slipping and dropped from the fit, m/s.
SLIP_RESIDUAL = 0.02

# Speed under which the parking detent captures a wheel whose setpoint is
# zero, rad/s. Roughly 3 rpm at the axle; worst-case backdriving torque
# (grip limit times wheel radius) stays well under the drive clamp, so the
# hold is unconditional.
REST_DETENT_SPEED = 0.3


# ---------------------------------------------------------------------------
# Terrain

class Terrain:
    """Height field; subclasses implement height(x, y) in world metres."""

    kind = "terrain"

    def height(self, x: float, y: float) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FlatTerrain(Terrain):
    kind = "flat"
    level: float = 0.0

    def height(self, x: float, y: float) -> float:
        return self.level

    def to_dict(self) -> dict:
        return {"type": "flat", "level": self.level}


@dataclass(frozen=True)
class PlaneTerrain(Terrain):
    """Uniform slope; height rises along the azimuth direction.

    ``slope`` is the inclination in radians, ``azimuth`` the world-frame
    direction of ascent.
    """

    kind = "plane"
    slope: float = 0.0
    azimuth: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.slope < 0.5 * math.pi:
            raise DomainError("plane slope must be in [0, pi/2)")

    def height(self, x: float, y: float) -> float:
        g = math.tan(self.slope)
        return g * (x * math.cos(self.azimuth) + y * math.sin(self.azimuth))

    def to_dict(self) -> dict:
        return {
            "type": "plane",
            "slope_deg": math.degrees(self.slope),
            "azimuth_deg": math.degrees(self.azimuth),
        }


@dataclass(frozen=True)
class StepTerrain(Terrain):
    """Vertical step across the x axis, modelled as a short steep ramp."""

    kind = "step"
    rise: float = 0.3
    position: float = 2.0
    run: float = 0.02

    def __post_init__(self):
        if self.rise < 0.0 or self.run <= 0.0:
            raise DomainError("step rise must be >= 0 and run positive")

    def height(self, x: float, y: float) -> float:
        if x <= self.position:
            return 0.0
        if x >= self.position + self.run:
            return self.rise
        return self.rise * (x - self.position) / self.run

    def to_dict(self) -> dict:
        return {
            "type": "step",
            "rise": self.rise,
            "position": self.position,
            "run": self.run,
        }


@dataclass(frozen=True)
class CompositeTerrain(Terrain):
    kind = "composite"
    parts: tuple = ()

    def height(self, x: float, y: float) -> float:
        return sum(p.height(x, y) for p in self.parts)

    def to_dict(self) -> dict:
        return {"type": "composite", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class HeightmapTerrain(Terrain):
    """Row-major grid sampled bilinearly; flat continuation past the edges."""

    kind = "heightmap"
    origin: tuple = (0.0, 0.0)
    resolution: float = 1.0
    rows: int = 2
    cols: int = 2
    data: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise DomainError("heightmap resolution must be positive")
        if self.rows < 2 or self.cols < 2:
            raise DomainError("heightmap needs at least 2x2 samples")
        if len(self.data) != self.rows * self.cols:
            raise DomainError(
                f"heightmap data length {len(self.data)} != rows*cols "
                f"{self.rows * self.cols}"
            )

    def height(self, x: float, y: float) -> float:
        u = (x - self.origin[0]) / self.resolution
        v = (y - self.origin[1]) / self.resolution
        u = min(max(u, 0.0), self.cols - 1.0)
        v = min(max(v, 0.0), self.rows - 1.0)
        c0 = min(int(u), self.cols - 2)
        r0 = min(int(v), self.rows - 2)
        fu = u - c0
        fv = v - r0
        z00 = self.data[r0 * self.cols + c0]
        z01 = self.data[r0 * self.cols + c0 + 1]
        z10 = self.data[(r0 + 1) * self.cols + c0]
        z11 = self.data[(r0 + 1) * self.cols + c0 + 1]
        top = z00 * (1.0 - fu) + z01 * fu
        bot = z10 * (1.0 - fu) + z11 * fu
        return top * (1.0 - fv) + bot * fv

    def to_dict(self) -> dict:
        return {
            "type": "heightmap",
            "origin": list(self.origin),
            "resolution": self.resolution,
            "rows": self.rows,
            "cols": self.cols,
            "data": list(self.data),
        }


def terrain_from_dict(data) -> Terrain:
    if not isinstance(data, dict):
        raise DomainError("terrain must be a JSON object")
    kind = data.get("type")
    try:
        if kind == "flat":
            return FlatTerrain(level=float(data.get("level", 0.0)))
        if kind == "plane":
            return PlaneTerrain(
                slope=math.radians(float(data.get("slope_deg", 0.0))),
                azimuth=math.radians(float(data.get("azimuth_deg", 0.0))),
            )
        if kind == "step":
            return StepTerrain(
                rise=float(data["rise"]),
                position=float(data.get("position", 0.0)),
                run=float(data.get("run", 0.02)),
            )
        if kind == "composite":
            return CompositeTerrain(
                parts=tuple(terrain_from_dict(p) for p in data.get("parts", []))
            )
        if kind == "heightmap":
            return HeightmapTerrain(
                origin=tuple(float(v) for v in data.get("origin", (0.0, 0.0))),
                resolution=float(data.get("resolution", 1.0)),
                rows=int(data["rows"]),
                cols=int(data["cols"]),
                data=tuple(float(v) for v in data["data"]),
            )
    except KeyError as e:
        raise DomainError(f"terrain {kind!r} missing field {e}") from None
    except (TypeError, ValueError):
        raise DomainError(f"terrain {kind!r} has non-numeric fields") from None
    raise DomainError(f"unknown terrain type {kind!r}")


# ---------------------------------------------------------------------------
# Scenario

@dataclass(frozen=True)
class DragProfile:
    """External longitudinal resistance pulling along -x of the body."""

    force: float = 0.0
    ramp_rate: float = 0.0
    start: float = 0.0

    def __post_init__(self):
        if self.force < 0.0 or self.ramp_rate < 0.0:
            raise DomainError("drag force and ramp rate must be >= 0")

    def value(self, t: float) -> float:
        return self.force + self.ramp_rate * max(0.0, t - self.start)


@dataclass(frozen=True)
class Scenario:
    name: str
    terrain: Terrain = field(default_factory=FlatTerrain)
    gravity: float = 9.81
    friction: float = 0.8
    chi: float = 1.0
    wheel_stiffness: float = 4000.0
    payloads: tuple = ()  # (module name, mass, (cog x, cog y, cog z))
    drag: DragProfile = field(default_factory=DragProfile)
    duration: float = 10.0
    seed: int = 0  # reserved; the dynamics are fully deterministic
    start_stowed: bool = False
    script: tuple = ()  # (time, Command), non-decreasing times

    def __post_init__(self):
        if self.duration <= 0.0:
            raise DomainError("scenario duration must be positive")
        if self.gravity <= 0.0:
            raise DomainError("gravity must be positive")
        if self.friction < 0.0:
            raise DomainError("friction must be >= 0")
        if not 0.0 < self.chi <= 1.0:
            raise DomainError("slip factor chi must be in (0, 1]")
        if self.wheel_stiffness <= 0.0:
            raise DomainError("wheel stiffness must be positive")
        times = [t for t, _ in self.script]
        if any(b < a for a, b in zip(times, times[1:])):
            raise DomainError("script times must be non-decreasing")
        if any(t < 0.0 for t in times):
            raise DomainError("script times must be >= 0")

    def geometry(self) -> RoverGeometry:
        geom = RoverGeometry()
        for name, mass, cog in self.payloads:
            geom = geom.with_module(geom.module(name).with_payload(mass, cog))
        return geom


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "name": sc.name,
        "terrain": sc.terrain.to_dict(),
        "gravity": sc.gravity,
        "friction": sc.friction,
        "chi": sc.chi,
        "wheel_stiffness": sc.wheel_stiffness,
        "payloads": {
            name: {"mass": mass, "cog": list(cog)}
            for name, mass, cog in sc.payloads
        },
        "drag": {
            "force": sc.drag.force,
            "ramp_rate": sc.drag.ramp_rate,
            "start": sc.drag.start,
        },
        "duration": sc.duration,
        "seed": sc.seed,
        "start_stowed": sc.start_stowed,
        "script": [
            {"t": t, "command": command_to_dict(cmd)} for t, cmd in sc.script
        ],
    }


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise DomainError("scenario must be a JSON object")
    if data.get("schema") != SCENARIO_SCHEMA:
        raise DomainError(f"unsupported scenario schema {data.get('schema')!r}")
    for req in ("name", "terrain", "duration"):
        if req not in data:
            raise DomainError(f"scenario missing field {req!r}")
    payloads = []
    raw_payloads = data.get("payloads", {})
    if not isinstance(raw_payloads, dict):
        raise DomainError("payloads must map module name to mass and cog")
    for name, spec in sorted(raw_payloads.items()):
        if not isinstance(spec, dict) or "mass" not in spec:
            raise DomainError(f"payload {name!r} needs a mass")
        cog = tuple(float(v) for v in spec.get("cog", (0.0, 0.0, 0.0)))
        payloads.append((name, float(spec["mass"]), cog))
    raw_drag = data.get("drag", {})
    drag = DragProfile(
        force=float(raw_drag.get("force", 0.0)),
        ramp_rate=float(raw_drag.get("ramp_rate", 0.0)),
        start=float(raw_drag.get("start", 0.0)),
    )
    script = []
    for entry in data.get("script", []):
        if not isinstance(entry, dict) or "t" not in entry or "command" not in entry:
            raise DomainError("script entries need t and command")
        script.append((float(entry["t"]), command_from_dict(entry["command"])))
    try:
        return Scenario(
            name=str(data["name"]),
            terrain=terrain_from_dict(data["terrain"]),
            gravity=float(data.get("gravity", 9.81)),
            friction=float(data.get("friction", 0.8)),
            chi=float(data.get("chi", 1.0)),
            wheel_stiffness=float(data.get("wheel_stiffness", 4000.0)),
            payloads=tuple(payloads),
            drag=drag,
            duration=float(data["duration"]),
            seed=int(data.get("seed", 0)),
            start_stowed=bool(data.get("start_stowed", False)),
            script=tuple(script),
        )
    except (TypeError, ValueError):
        raise DomainError("scenario has non-numeric fields") from None


def scenario_to_json(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2, sort_keys=False) + "\n"


def scenario_from_json(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DomainError(f"scenario is not valid JSON: {e}") from None
    return scenario_from_dict(data)


def bundled_scenario_names() -> list[str]:
    root = resources.files("emrs").joinpath("scenarios")
    return sorted(
        p.name[: -len(".json")]
        for p in root.iterdir()
        if p.name.endswith(".json")
    )


def load_scenario(name: str) -> Scenario:
    """Load a bundled scenario by name or any scenario by file path."""
    if name.endswith(".json"):
        try:
            with open(name, encoding="utf-8") as f:
                return scenario_from_json(f.read())
        except OSError as e:
            raise DomainError(f"cannot read scenario {name!r}: {e}") from None
    ref = resources.files("emrs").joinpath("scenarios", name + ".json")
    try:
        return scenario_from_json(ref.read_text(encoding="utf-8"))
    except FileNotFoundError:
        known = ", ".join(bundled_scenario_names())
        raise DomainError(f"no bundled scenario {name!r} (have: {known})") from None


# ---------------------------------------------------------------------------
# Telemetry records

@dataclass(frozen=True)
class WheelTelemetry:
    steer: float
    speed: float
    torque: float
    normal: float
    slip: bool
    deflection: float
    offset: float


@dataclass(frozen=True)
class TelemetryRecord:
    """One sim frame.

    ``pose`` is ground truth, ``odometry`` the rover's own dead reckoning.
    ``pitch``/``roll`` follow the terrain under the body plus suspension
    lean: pitch positive nose-up, roll positive left-side-up. ``mode`` is
    the manager state label.
    """

    tick: int
    time: float
    pose: tuple
    pitch: float
    roll: float
    wheels: tuple
    mode: str
    faults: tuple
    margin: float
    odometry: tuple
    events: tuple


def record_to_dict(rec: TelemetryRecord) -> dict:
    return {
        "type": "state",
        "tick": rec.tick,
        "time": rec.time,
        "pose": list(rec.pose),
        "pitch": rec.pitch,
        "roll": rec.roll,
        "wheels": [
            {
                "steer": w.steer,
                "speed": w.speed,
                "torque": w.torque,
                "normal": w.normal,
                "slip": w.slip,
                "deflection": w.deflection,
                "offset": w.offset,
            }
            for w in rec.wheels
        ],
        "mode": rec.mode,
        "faults": list(rec.faults),
        "margin": rec.margin,
        "odometry": list(rec.odometry),
        "events": list(rec.events),
    }


def record_to_json(rec: TelemetryRecord) -> str:
    return json.dumps(record_to_dict(rec), separators=(",", ":"))


def record_from_dict(data) -> TelemetryRecord:
    if not isinstance(data, dict) or data.get("type") != "state":
        raise DomainError("record must be a state object")
    try:
        wheels = tuple(
            WheelTelemetry(
                steer=float(w["steer"]),
                speed=float(w["speed"]),
                torque=float(w["torque"]),
                normal=float(w["normal"]),
                slip=bool(w["slip"]),
                deflection=float(w["deflection"]),
                offset=float(w["offset"]),
            )
            for w in data["wheels"]
        )
        return TelemetryRecord(
            tick=int(data["tick"]),
            time=float(data["time"]),
            pose=tuple(float(v) for v in data["pose"]),
            pitch=float(data["pitch"]),
            roll=float(data["roll"]),
            wheels=wheels,
            mode=str(data["mode"]),
            faults=tuple(str(f) for f in data["faults"]),
            margin=float(data["margin"]),
            odometry=tuple(float(v) for v in data["odometry"]),
            events=tuple(str(e) for e in data.get("events", [])),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DomainError(f"malformed record: {e}") from None


def record_from_json(line: str) -> TelemetryRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise DomainError(f"record is not valid JSON: {e}") from None
    return record_from_dict(data)


# ---------------------------------------------------------------------------
# World

def _solve_pose(active, re, pts, weight, px, py):
    """Spring-plane coefficients (dz, alpha, beta) over the active wheels.

    Compression of wheel i is dz + alpha*x + beta*y + re[i]; the balance
    matches total normal load and both moments about the projected CoG.
    """
    n = float(len(active))
    sx = sum(pts[i][0] for i in active)
    sy = sum(pts[i][1] for i in active)
    sxx = sum(pts[i][0] ** 2 for i in active)
    syy = sum(pts[i][1] ** 2 for i in active)
    sxy = sum(pts[i][0] * pts[i][1] for i in active)
    t0 = sum(re[i] for i in active)
    t1 = sum(re[i] * pts[i][0] for i in active)
    t2 = sum(re[i] * pts[i][1] for i in active)
    m = (
        (n, sx, sy),
        (sx, sxx, sxy),
        (sy, sxy, syy),
    )
    rhs = (weight - t0, weight * px - t1, weight * py - t2)
    det = (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )
    if abs(det) < 1e-12:
        return None
    def rep(col):
        cols = [list(row) for row in m]
        for r in range(3):
            cols[r][col] = rhs[r]
        return (
            cols[0][0] * (cols[1][1] * cols[2][2] - cols[1][2] * cols[2][1])
            - cols[0][1] * (cols[1][0] * cols[2][2] - cols[1][2] * cols[2][0])
            + cols[0][2] * (cols[1][0] * cols[2][1] - cols[1][1] * cols[2][0])
        )
    return (rep(0) / det, rep(1) / det, rep(2) / det)


class World:
    """Mutable stepping container for one scenario run."""

    def __init__(self, scenario: Scenario, config: ManagerConfig | None = None):
        self.scenario = scenario
        self.geom = scenario.geometry()
        if config is None:
            config = ManagerConfig(
                gravity=scenario.gravity,
                contact_stiffness=scenario.wheel_stiffness,
            )
        self.config = config
        self.unit = default_suspension(self.geom)
        self.state = initial_state(self.geom, config, stowed=scenario.start_stowed)
        self.motors = [MotorState() for _ in range(4)]
        self.steerings = [
            SteeringState(angle=a) for a in self.state.steer_refs
        ]
        self.motor_model = MotorModel()
        self.steer_model = SteeringModel()
        self.monitor = FaultMonitor(
            FaultLimits(speed_limit=max_wheel_angular_speed(self.geom.wheel))
        )
        self.faults = self.monitor.update([
            WheelHealth(0.0, 0.0, False, a, a) for a in self.state.steer_refs
        ])
        self.pose = Pose2D()
        self.odometry = Pose2D()
        self.tick = 0
        self.time = 0.0
        self.prev_steer_refs = self.state.steer_refs
        self.traction = [0.0, 0.0, 0.0, 0.0]
        self.normals = [0.0, 0.0, 0.0, 0.0]
        self.measured_speeds = (0.0, 0.0, 0.0, 0.0)
        self.terminal: str | None = None
        self.script_idx = 0
        self.pending: list[Command] = []
        # metric accumulators
        self.distance = 0.0
        self.energy = 0.0
        self.slip_ticks = 0
        self.wheel_ticks = 0
        self.min_margin = math.inf
        self.max_torque = 0.0
        self.max_drawbar = 0.0

    def apply_command(self, cmd: Command) -> tuple[bool, str]:
        """Live command path used by the telemetry server."""
        self.state, accepted, reason = handle_command(
            self.state, cmd, self.geom, self.config
        )
        return accepted, reason

    def _due_commands(self):
        due = []
        script = self.scenario.script
        while (
            self.script_idx < len(script)
            and script[self.script_idx][0] <= self.time + 1e-12
        ):
            due.append(script[self.script_idx][1])
            self.script_idx += 1
        return due


def _contact_state(world: World):
    """Heights, plane fit, and body-frame slope under the current pose."""
    geom = world.geom
    pose = world.pose
    ch = math.cos(pose.heading)
    sh = math.sin(pose.heading)
    pts = geom.wheel_positions
    heights = []
    for x, y in pts:
        wx = pose.x + x * ch - y * sh
        wy = pose.y + x * sh + y * ch
        heights.append(world.scenario.terrain.height(wx, wy))
    sxx = sum(x * x for x, _ in pts)
    syy = sum(y * y for _, y in pts)
    mean = sum(heights) / 4.0
    b = sum(h * x for h, (x, _) in zip(heights, pts)) / sxx
    c = sum(h * y for h, (_, y) in zip(heights, pts)) / syy
    residuals = [
        h - (mean + b * x + c * y) for h, (x, y) in zip(heights, pts)
    ]
    slope = math.atan(math.hypot(b, c))
    azimuth = math.atan2(-c, -b) if (b or c) else 0.0
    return residuals, b, c, slope, azimuth


def _normal_forces(world: World, residuals, slope, azimuth):
    """Per-wheel normal force and spring-plane pose; clamps lift-offs.

    Returns (normals, plane, lean, contact_loss).
    """
    geom = world.geom
    unit = world.unit
    pts = geom.wheel_positions
    k_s = unit.vertical_rate
    k_c = world.scenario.wheel_stiffness
    k = k_s * k_c / (k_s + k_c)
    ext = [unit.link_length * math.sin(o) for o in world.state.susp_offsets]
    re = [r + e for r, e in zip(residuals, ext)]

    cgx, cgy, cgz = compute_cog(geom, world.state.susp_offsets)
    h_cg = cgz + geom.ground_clearance
    sxx = sum(x * x for x, _ in pts)
    syy = sum(y * y for _, y in pts)
    # plane component of the commanded offsets tilts the body, which leans
    # the CoG; the saddle component redistributes load through the springs
    be = sum(e * x for e, (x, _) in zip(ext, pts)) / sxx
    ce = sum(e * y for e, (_, y) in zip(ext, pts)) / syy
    lean = (-be * h_cg, -ce * h_cg)
    drop = h_cg * math.tan(slope)
    px = cgx + drop * math.cos(azimuth) + lean[0]
    py = cgy + drop * math.sin(azimuth) + lean[1]
    weight = geom.total_mass * world.scenario.gravity * math.cos(slope)

    active = [0, 1, 2, 3]
    plane = None
    for _ in range(3):
        plane = _solve_pose(active, re, pts, weight / k, px, py)
        if plane is None:
            break
        dz, al, be_ = plane
        comp = [dz + al * x + be_ * y + re[i] for i, (x, y) in enumerate(pts)]
        worst = min(active, key=lambda i: comp[i])
        if comp[worst] >= -1e-12 or len(active) <= 3:
            break
        active.remove(worst)
    if plane is None:
        # fewer than three balanced contacts: statics are indeterminate and
        # the margin check below will terminate the run
        share = weight / max(1, len(active))
        normals = [share if i in active else 0.0 for i in range(4)]
        return normals, (0.0, 0.0, 0.0), lean, False
    dz, al, be_ = plane
    normals = []
    contact_loss = False
    for i, (x, y) in enumerate(pts):
        comp = dz + al * x + be_ * y + re[i]
        if i in active and comp > 0.0:
            normals.append(k * comp)
        else:
            normals.append(0.0)
            # a commanded retraction hangs the wheel on purpose, so only the
            # gap beyond travel plus that retraction means lost terrain
            allowance = unit.vertical_travel + max(0.0, -ext[i])
            if -comp > allowance + 1e-9:
                contact_loss = True
    return normals, plane, lean, contact_loss


def _ground_loads(world: World, slope, azimuth):
    """Grip caps, aggregate stall verdict, and drive load torques.

    Runs on the pre-step wheel speeds so the loads act on the same tick they
    were computed for. Lagging them a tick turns sliding friction into a
    relay with transport delay, which pumps a chatter cycle at zero speed.
    """
    geom = world.geom
    sc = world.scenario
    r = geom.wheel.radius
    state = world.state
    angles = [s.angle for s in world.steerings]
    speeds = [m.speed for m in world.motors]
    normals = world.normals

    w_total = geom.total_mass * sc.gravity
    grav = w_total * math.sin(slope)
    dx = grav * math.cos(azimuth) - sc.drag.value(world.time)
    dy = grav * math.sin(azimuth)
    demand = math.hypot(dx, dy)

    gait = state.kind is StateKind.WHEEL_WALKING
    caps = []
    for i in range(4):
        if normals[i] <= 1e-9:
            caps.append(0.0)
            continue
        grip = sc.friction
        if gait and abs(speeds[i]) * r < PLANTED_RIM_SPEED:
            grip = max(sc.friction, ANCHOR_GRIP)
        caps.append(min(grip * normals[i], world.motor_model.max_torque / r))

    loaded = [i for i in range(4) if normals[i] > 1e-9]
    stalled = demand > sum(caps) + 1e-12
    loads = [0.0, 0.0, 0.0, 0.0]
    if stalled:
        for i in loaded:
            if abs(speeds[i]) * r > PLANTED_RIM_SPEED:
                # sliding: kinetic grip opposes the spin
                loads[i] = math.copysign(caps[i] * r, speeds[i])
            elif abs(state.drive_refs[i]) > 1e-12:
                # commanded from rest on an overloaded footing: the contact
                # shears at breakaway in the commanded direction
                loads[i] = math.copysign(caps[i] * r, state.drive_refs[i])
    elif demand > 1e-12 and loaded:
        ux = -dx / demand
        uy = -dy / demand
        if gait:
            # Creeping wheels grip statically, so each carries its normal
            # force's share of the demand, which is also how the gait
            # feedforward states it. The clip uses the anchored grip for
            # every wheel: a cap that tracked the rim through the planted
            # threshold would jump with the wheel's own speed, and that
            # discontinuity is a relay the drive loop chatters against.
            grip_s = max(sc.friction, ANCHOR_GRIP)
            total_n = sum(normals[i] for i in loaded)
            for i in loaded:
                cap_i = min(grip_s * normals[i], world.motor_model.max_torque / r)
                share = min(demand * normals[i] / total_n, cap_i)
                f_long = share * (
                    ux * math.cos(angles[i]) + uy * math.sin(angles[i])
                )
                loads[i] = f_long * r
        else:
            # Torque distribution on a rigid body is statically
            # indeterminate; identical speed loops equalise it, so the
            # demand splits evenly. A wheel whose grip cannot carry its
            # share transmits its cap and the rest goes undelivered.
            even = demand / len(loaded)
            for i in loaded:
                share = min(even, caps[i])
                f_long = share * (
                    ux * math.cos(angles[i]) + uy * math.sin(angles[i])
                )
                loads[i] = f_long * r
    return loads, stalled, loaded


def _body_motion(world: World, stalled, loaded):
    """Body twist, slip flags, drawbar pull from the post-step wheel state."""
    geom = world.geom
    sc = world.scenario
    r = geom.wheel.radius
    pts = list(geom.wheel_positions)
    state = world.state
    angles = [s.angle for s in world.steerings]
    speeds = [m.speed for m in world.motors]
    normals = world.normals

    # drawbar pull the wheels can sustain this tick, capped by grip
    pull = sum(
        min(abs(world.motors[i].torque) / r, sc.friction * normals[i])
        for i in loaded
    )

    slip = [False, False, False, False]
    if stalled:
        # aggregate stall: the body holds still and every loaded wheel shears
        for i in loaded:
            slip[i] = True
        return BodyTwist(), slip, pull

    if state.kind is StateKind.DRIVING and state.mode is LocomotionMode.SKID:
        longs = [speeds[i] * r for i in loaded]
        t = solve_twist_longitudinal([pts[i] for i in loaded], longs)
        twist = BodyTwist(t.vx, 0.0, sc.chi * t.omega)
        # longitudinal residuals still mark inconsistent wheels
        for i in loaded:
            fit = t.vx - t.omega * pts[i][1]
            if abs(speeds[i] * r - fit) > SLIP_RESIDUAL:
                slip[i] = True
        return twist, slip, pull

    vels = [wheel_ground_velocity(angles[i], speeds[i], r) for i in range(4)]
    subset = list(loaded)
    twist = BodyTwist()
    while len(subset) >= 3:
        try:
            twist = solve_twist(
                [pts[i] for i in subset], [vels[i] for i in subset]
            )
        except DegenerateFit:
            twist = BodyTwist()
            break
        res = {}
        for i in subset:
            fx = twist.vx - twist.omega * pts[i][1]
            fy = twist.vy + twist.omega * pts[i][0]
            res[i] = math.hypot(vels[i][0] - fx, vels[i][1] - fy)
        worst = max(res, key=lambda i: res[i])
        if res[worst] <= SLIP_RESIDUAL or len(subset) == 3:
            break
        subset.remove(worst)
        slip[worst] = True
    if not subset:
        twist = BodyTwist()
    return twist, slip, pull


def _odometry_twist(world: World):
    geom = world.geom
    r = geom.wheel.radius
    state = world.state
    pts = list(geom.wheel_positions)
    angles = [s.angle for s in world.steerings]
    speeds = [m.speed for m in world.motors]
    if state.kind is StateKind.DRIVING and state.mode is LocomotionMode.SKID:
        t = solve_twist_longitudinal(pts, [v * r for v in speeds])
        return BodyTwist(t.vx, 0.0, world.scenario.chi * t.omega)
    vels = [
        wheel_ground_velocity(a, s, r) for a, s in zip(angles, speeds)
    ]
    try:
        return solve_twist(pts, vels)
    except DegenerateFit:
        return BodyTwist()


def step_sim(world: World) -> TelemetryRecord:
    """Advance one tick; the returned record reflects the post-step state."""
    if world.terminal is not None:
        raise DomainError(f"run already terminated: {world.terminal}")
    dt = world.config.tick
    events: list[str] = []

    # 1. commands due this tick (scripted first, then live submissions)
    for cmd in world._due_commands() + world.pending:
        world.state, ok, reason = handle_command(
            world.state, cmd, world.geom, world.config
        )
        verdict = "accepted" if ok else f"rejected:{reason}"
        events.append(f"cmd:{cmd.kind.value}:{verdict}")
    world.pending.clear()

    # 2. terrain contact under the current pose
    residuals, b, c, slope, azimuth = _contact_state(world)
    world.normals, plane, lean, contact_loss = _normal_forces(
        world, residuals, slope, azimuth
    )

    # 3. manager tick with plant feedback
    cog = compute_cog(world.geom, world.state.susp_offsets)
    feedback = SimFeedback(
        drive_speeds=world.measured_speeds,
        normal_forces=tuple(world.normals),
        slope=slope,
        downhill_azimuth=azimuth,
        cog=cog,
        cog_height=cog[2] + world.geom.ground_clearance,
    )
    world.state, setpoints, mgr_events = step_manager(
        world.state, dt, world.geom, world.config,
        faults=world.faults, feedback=feedback, suspension=world.unit,
    )
    events.extend(mgr_events)

    # 4. ground reaction for this tick, from the pre-step wheel state
    loads, stalled, loaded = _ground_loads(world, slope, azimuth)
    world.traction = loads

    # 5. actuator loops
    torques = []
    for i in range(4):
        ref = setpoints.steer_angles[i]
        ref_rate = (ref - world.prev_steer_refs[i]) / dt
        _, world.steerings[i] = step_steering_controller(
            world.steerings[i], ref, ref_rate, 0.0, dt, world.steer_model
        )
        if (
            abs(setpoints.drive_speeds[i]) <= 1e-12
            and abs(world.motors[i].speed) < REST_DETENT_SPEED
        ):
            # Parking detent: with a zero setpoint a near-resting wheel is
            # held mechanically and its speed loop is grounded, so a resting
            # rover neither backdrives its motors nor chatters on friction.
            tau = 0.0
            world.motors[i] = MotorState(speed=0.0, angle=world.motors[i].angle)
        else:
            tau, world.motors[i] = step_wheel_controller(
                world.motors[i], setpoints.drive_speeds[i], dt,
                world.motor_model, load_torque=loads[i],
                feedforward=setpoints.drive_feedforward[i],
            )
        torques.append(tau)
        world.energy += abs(tau * world.motors[i].speed) * dt
        world.max_torque = max(world.max_torque, abs(tau))
    world.prev_steer_refs = setpoints.steer_angles
    world.measured_speeds = tuple(m.speed for m in world.motors)

    # 6. slip flags and body motion from the post-step wheel speeds
    twist, slip, pull = _body_motion(world, stalled, loaded)
    world.max_drawbar = max(world.max_drawbar, pull)
    world.pose = integrate_pose(world.pose, twist, dt)
    world.odometry = integrate_pose(world.odometry, _odometry_twist(world), dt)
    world.distance += math.hypot(twist.vx, twist.vy) * dt
    world.slip_ticks += sum(1 for s in slip if s)
    world.wheel_ticks += 4

    # 7. health monitoring feeds the next manager tick
    healths = [
        WheelHealth(
            speed=world.motors[i].speed,
            torque=torques[i],
            clamp_active=abs(torques[i]) >= world.motor_model.max_torque - 1e-9,
            steer_angle=world.steerings[i].angle,
            steer_ref=setpoints.steer_angles[i],
        )
        for i in range(4)
    ]
    world.faults = world.monitor.update(healths)

    # 8. stability margin and terminal events
    contacts = [
        p for p, n in zip(world.geom.wheel_positions, world.normals) if n > 1e-9
    ]
    try:
        margin = stability_margin(
            (cog[0] + lean[0], cog[1] + lean[1], cog[2] + world.geom.ground_clearance),
            contacts, slope, azimuth,
        )
    except (DomainError, DegenerateSupport):
        margin = -1.0
    world.min_margin = min(world.min_margin, margin)
    if margin < 0.0:
        world.terminal = "tip_over"
        events.append("tip_over")
    if contact_loss and world.terminal is None:
        world.terminal = "contact_loss"
        events.append("contact_loss")

    world.tick += 1
    world.time = world.tick * dt

    wheels = tuple(
        WheelTelemetry(
            steer=world.steerings[i].angle,
            speed=world.motors[i].speed,
            torque=torques[i],
            normal=world.normals[i],
            slip=slip[i],
            deflection=passive_deflection_from_load(world.unit, world.normals[i])[0],
            offset=world.state.susp_offsets[i],
        )
        for i in range(4)
    )
    pose = world.pose
    odo = world.odometry
    return TelemetryRecord(
        tick=world.tick,
        time=world.time,
        pose=(pose.x, pose.y, pose.heading),
        pitch=math.atan(b - plane[1]),
        roll=math.atan(c - plane[2]),
        wheels=wheels,
        mode=world.state.label,
        faults=tuple(world.faults.labels()),
        margin=margin,
        odometry=(odo.x, odo.y, odo.heading),
        events=tuple(events),
    )


class RecordDecimator:
    """Thins a tick stream to the telemetry rate without losing events.

    Events from skipped ticks ride along into the next emitted record, so a
    command verdict or state change can never fall between samples.
    """

    def __init__(self, telemetry_rate: float, tick: float):
        if not 1.0 <= telemetry_rate <= 100.0:
            raise DomainError("telemetry rate must be within [1, 100] Hz")
        self.every = max(1, round(1.0 / (telemetry_rate * tick)))
        self._k = 0
        self._carried: list[str] = []

    def push(self, rec: TelemetryRecord, force: bool = False):
        """Returns the record to emit for this tick, or None to skip it."""
        k = self._k
        self._k += 1
        if k % self.every == 0 or force:
            if self._carried:
                rec = replace(rec, events=tuple(self._carried) + rec.events)
                self._carried.clear()
            return rec
        self._carried.extend(rec.events)
        return None


def run_scenario(
    scenario: Scenario,
    telemetry_rate: float = 10.0,
    config: ManagerConfig | None = None,
) -> tuple[list[TelemetryRecord], dict]:
    """Run to the scenario duration or a terminal event.

    Returns the telemetry log (decimated to ``telemetry_rate``) and the
    metrics summary. Events from skipped ticks carry over into the next
    emitted record, so decimation never loses a transition. Terminal events
    land in the metrics, not exceptions.
    """
    world = World(scenario, config=config)
    decimator = RecordDecimator(telemetry_rate, world.config.tick)
    ticks = round(scenario.duration / world.config.tick)
    records = []
    for _ in range(ticks):
        rec = step_sim(world)
        out = decimator.push(rec, force=world.terminal is not None)
        if out is not None:
            records.append(out)
        if world.terminal is not None:
            break
    return records, world_metrics(world)


def world_metrics(world: World) -> dict:
    """Summary metrics for however far ``world`` has been stepped."""
    start = Pose2D()
    net = math.hypot(world.pose.x - start.x, world.pose.y - start.y)
    drift = math.hypot(
        world.pose.x - world.odometry.x, world.pose.y - world.odometry.y
    )
    return {
        "schema": METRICS_SCHEMA,
        "scenario": world.scenario.name,
        "ticks": world.tick,
        "sim_time": world.time,
        "distance": world.distance,
        "net_displacement": net,
        "mean_slip_ratio": (
            world.slip_ticks / world.wheel_ticks if world.wheel_ticks else 0.0
        ),
        "min_margin": world.min_margin if world.min_margin != math.inf else None,
        "max_torque": world.max_torque,
        "max_drawbar": world.max_drawbar,
        "energy": world.energy,
        "odometry_drift": drift,
        "terminal": world.terminal,
        "final_state": world.state.label,
        "final_pose": [world.pose.x, world.pose.y, world.pose.heading],
        "final_odometry": [
            world.odometry.x, world.odometry.y, world.odometry.heading,
        ],
    }


def log_to_text(records) -> str:
    return "".join(record_to_json(r) + "\n" for r in records)


def metrics_to_json(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"

_CSV_FIELDS = (
    "scenario", "ticks", "sim_time", "distance", "net_displacement",
    "mean_slip_ratio", "min_margin", "max_torque", "max_drawbar", "energy",
    "odometry_drift", "terminal", "final_state",
)


def metrics_to_csv(metrics: dict) -> str:
    def cell(v):
        if v is None:
            return ""
        return str(v)
    header = ",".join(_CSV_FIELDS)
    row = ",".join(cell(metrics.get(f)) for f in _CSV_FIELDS)
    return header + "\n" + row + "\n"


# ---------------------------------------------------------------------------
# Obstacle gate

def obstacle_traversal_check(
    height: float,
    geom: RoverGeometry | None = None,
    friction: float = 0.8,
) -> tuple[bool, str]:
    """Can a vertical step of ``height`` be climbed quasi-statically?

    Geometry first: the rim plus available suspension travel must reach the
    edge. Then grip: the contact angle at the edge must satisfy
    tan(alpha/2) <= friction or the wheel shears off instead of rolling up.
    Returns (ok, limiting factor).
    """
    if height < 0.0:
        raise DomainError("step height must be >= 0")
    if geom is None:
        geom = RoverGeometry()
    unit = default_suspension(geom)
    r = geom.wheel.radius
    travel = unit.vertical_travel
    if height > r + travel:
        return False, "geometry"
    h_eff = max(0.0, height - travel)
    alpha = math.acos(max(-1.0, min(1.0, (r - h_eff) / r)))
    if math.tan(0.5 * alpha) > friction:
        return False, "traction"
    return True, "ok"
