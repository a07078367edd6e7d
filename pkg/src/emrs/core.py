"""Core vehicle model: frames, wheel and chassis constants, scaling law.

Conventions used across the package:

- body frame: x forward, y left, z up, origin at the center of the chassis
  underside (belly deck), yaw counterclockwise-positive
- wheel indices: 0 = front-left, 1 = front-right, 2 = rear-left, 3 = rear-right
- headings normalized to (-pi, pi]
- all quantities SI unless a name says otherwise
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

ROVER_SCHEMA = "emrs-rover/1"


class DomainError(ValueError):
    """Raised when a physical quantity is outside its valid domain."""


class LocomotionMode(Enum):
    SKID = "skid"
    ACKERMANN = "ackermann"
    CRAB = "crab"
    POINT_TURN = "point_turn"


def normalize_angle(angle: float) -> float:
    """Fold an angle into (-pi, pi]."""
    a = math.remainder(angle, math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


@dataclass(frozen=True)
class BodyTwist:
    """Planar body velocity: vx, vy in m/s, omega in rad/s (CCW+)."""

    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def normalized(self) -> "Pose2D":
        return Pose2D(self.x, self.y, normalize_angle(self.heading))


@dataclass(frozen=True)
class WheelParams:
    """Flexible metallic wheel constants.

    Radial stiffness is a range; the contact model picks a working value
    inside it (see ``Scenario.wheel_stiffness``).
    """

    diameter: float = 0.612
    tile_width: float = 0.216
    stiffness_min: float = 2500.0
    stiffness_max: float = 6000.0
    max_ground_speed: float = 3000.0 / 3600.0  # 3 km/h in m/s
    max_torque: float = 80.0
    mass: float = 7.0

    def __post_init__(self):
        for name in ("diameter", "tile_width", "max_ground_speed", "max_torque", "mass"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"wheel {name} must be positive")
        if not (0.0 < self.stiffness_min <= self.stiffness_max):
            raise DomainError("wheel stiffness range must satisfy 0 < min <= max")

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter


@dataclass(frozen=True)
class ChassisModule:
    """One box of the modular chassis.

    ``size`` is (length, width, height); ``position`` locates the box center
    in the body frame; ``payload_cog`` is expressed in the module frame
    (origin at the box center) and must lie inside the box.
    """

    name: str
    size: tuple[float, float, float]
    position: tuple[float, float, float]
    payload_mass: float = 0.0
    payload_cog: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if any(s <= 0.0 for s in self.size):
            raise DomainError(f"module {self.name}: size must be positive")
        if self.payload_mass < 0.0:
            raise DomainError(f"module {self.name}: payload mass must be >= 0")
        for c, s in zip(self.payload_cog, self.size):
            if abs(c) > 0.5 * s + 1e-12:
                raise DomainError(f"module {self.name}: payload cog outside box")

    def with_payload(self, mass: float, cog=(0.0, 0.0, 0.0)) -> "ChassisModule":
        return replace(self, payload_mass=mass, payload_cog=tuple(cog))


# Default module boxes. The central module sits on the belly deck; lateral
# modules flank it; the top deck starts above the central box plus the
# payload interface frame.
TOP_INTERFACE_HEIGHT = 0.05


def default_modules() -> tuple[ChassisModule, ...]:
    central = ChassisModule("central", (1.8, 0.231, 0.65), (0.0, 0.0, 0.325))
    lat_y = 0.5 * 0.231 + 0.5 * 0.634
    left = ChassisModule("lateral_left", (1.4, 0.634, 0.4), (0.0, lat_y, 0.2))
    right = ChassisModule("lateral_right", (1.4, 0.634, 0.4), (0.0, -lat_y, 0.2))
    top = ChassisModule("top", (1.8, 1.5, 0.4), (0.0, 0.0, 0.65 + TOP_INTERFACE_HEIGHT + 0.2))
    return (central, left, right, top)


@dataclass(frozen=True)
class RoverGeometry:
    """Wheel layout plus chassis boxes.

    ``wheel_positions`` are the wheel-center planar coordinates in the body
    frame, ordered FL, FR, RL, RR. The steering axis is offset from the wheel
    mid-plane by ``steering_lever`` (on-side steering); the lever must clear
    half the tile width plus the actuator radius.
    """

    wheel_positions: tuple[tuple[float, float], ...] = (
        (0.8875, 0.642),
        (0.8875, -0.642),
        (-0.8875, 0.642),
        (-0.8875, -0.642),
    )
    steering_lever: float = 0.2
    actuator_diameter: float = 0.150
    ground_clearance: float = 0.3
    structure_mass: float = 60.0
    wheel: WheelParams = field(default_factory=WheelParams)
    modules: tuple[ChassisModule, ...] = field(default_factory=default_modules)

    def __post_init__(self):
        if len(self.wheel_positions) != 4:
            raise DomainError("exactly four wheels expected")
        xs = sorted({round(x, 12) for x, _ in self.wheel_positions})
        ys = sorted({round(y, 12) for _, y in self.wheel_positions})
        if len(xs) != 2 or len(ys) != 2 or xs[0] != -xs[1] or ys[0] != -ys[1]:
            raise DomainError("wheel positions must form a rectangle symmetric about both axes")
        if self.steering_lever < 0.5 * self.wheel.tile_width + 0.5 * self.actuator_diameter:
            raise DomainError("steering lever too short for tile plus actuator")
        if self.ground_clearance <= 0.0 or self.structure_mass <= 0.0:
            raise DomainError("clearance and structure mass must be positive")

    @property
    def wheelbase(self) -> float:
        xs = [x for x, _ in self.wheel_positions]
        return max(xs) - min(xs)

    @property
    def track(self) -> float:
        ys = [y for _, y in self.wheel_positions]
        return max(ys) - min(ys)

    def module(self, name: str) -> ChassisModule:
        for m in self.modules:
            if m.name == name:
                return m
        raise KeyError(name)

    def with_module(self, module: ChassisModule) -> "RoverGeometry":
        mods = tuple(module if m.name == module.name else m for m in self.modules)
        if module.name not in [m.name for m in mods]:
            raise KeyError(module.name)
        return replace(self, modules=mods)

    @property
    def payload_mass(self) -> float:
        return sum(m.payload_mass for m in self.modules)

    @property
    def total_mass(self) -> float:
        return self.structure_mass + 4.0 * self.wheel.mass + self.payload_mass


def breadboard_scale(length: float, ratio: float = 1.0 / 6.0) -> float:
    """Scale a full-size dimension to its analog-test size.

    The test article preserves ground pressure when linear dimensions shrink
    by the cube root of the environment ratio (default 1/6). ``ratio`` must
    lie in (0, 1]; lengths must be non-negative.
    """
    if not (0.0 < ratio <= 1.0):
        raise DomainError("ratio must be in (0, 1]")
    if length < 0.0:
        raise DomainError("length must be >= 0")
    return length * ratio ** (1.0 / 3.0)


def max_wheel_angular_speed(wheel: WheelParams) -> float:
    """Drive speed ceiling in rad/s from the ground-speed rating."""
    return wheel.max_ground_speed / wheel.radius


# ---------------------------------------------------------------------------
# JSON config (schema "emrs-rover/1")

def rover_to_json(geom: RoverGeometry) -> str:
    doc = {
        "schema": ROVER_SCHEMA,
        "wheel_positions": [list(p) for p in geom.wheel_positions],
        "steering_lever": geom.steering_lever,
        "actuator_diameter": geom.actuator_diameter,
        "ground_clearance": geom.ground_clearance,
        "structure_mass": geom.structure_mass,
        "wheel": {
            "diameter": geom.wheel.diameter,
            "tile_width": geom.wheel.tile_width,
            "stiffness_min": geom.wheel.stiffness_min,
            "stiffness_max": geom.wheel.stiffness_max,
            "max_ground_speed": geom.wheel.max_ground_speed,
            "max_torque": geom.wheel.max_torque,
            "mass": geom.wheel.mass,
        },
        "modules": [
            {
                "name": m.name,
                "size": list(m.size),
                "position": list(m.position),
                "payload_mass": m.payload_mass,
                "payload_cog": list(m.payload_cog),
            }
            for m in geom.modules
        ],
    }
    return json.dumps(doc, separators=(",", ":"))


def rover_from_json(text: str) -> RoverGeometry:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DomainError(f"invalid rover config JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("schema") != ROVER_SCHEMA:
        raise DomainError(f"rover config must declare schema {ROVER_SCHEMA!r}")
    base = RoverGeometry()
    try:
        wheel_doc = doc.get("wheel", {})
        wheel = WheelParams(**{k: float(v) for k, v in wheel_doc.items()})
        modules = tuple(
            ChassisModule(
                name=m["name"],
                size=tuple(float(v) for v in m["size"]),
                position=tuple(float(v) for v in m["position"]),
                payload_mass=float(m.get("payload_mass", 0.0)),
                payload_cog=tuple(float(v) for v in m.get("payload_cog", (0.0, 0.0, 0.0))),
            )
            for m in doc["modules"]
        ) if "modules" in doc else base.modules
        return RoverGeometry(
            wheel_positions=tuple(
                (float(x), float(y)) for x, y in doc.get("wheel_positions", base.wheel_positions)
            ),
            steering_lever=float(doc.get("steering_lever", base.steering_lever)),
            actuator_diameter=float(doc.get("actuator_diameter", base.actuator_diameter)),
            ground_clearance=float(doc.get("ground_clearance", base.ground_clearance)),
            structure_mass=float(doc.get("structure_mass", base.structure_mass)),
            wheel=wheel,
            modules=modules,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DomainError):
            raise
        raise DomainError(f"malformed rover config: {e}") from e
