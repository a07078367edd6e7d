"""In-series active/passive suspension and static stability.

Each wheel hangs on a parallelogram arm (link length L) so the hub never
rotates as the arm swings. A rotational spring takes the passive deflection;
an actuator in series adds a commanded offset, so the output arm angle is
exactly passive + active. The passive deflection under a normal load F
solves k*theta = max(0, F*L*cos(theta) - preload) self-consistently.

Stability works on the support polygon of the current contacts: the margin
is the signed minimum distance from the gravity-projected center of gravity
to the polygon edges (positive inside).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import DomainError, RoverGeometry, TOP_INTERFACE_HEIGHT


class ShiftUnreachable(ValueError):
    """Requested CoG shift exceeds the suspension actuators' authority."""


class DegenerateSupport(ArithmeticError):
    """Fewer than three distinct contacts: no support polygon exists."""


@dataclass(frozen=True)
class SuspensionUnit:
    """One parallelogram suspension corner.

    ``spring_rate`` is rotational (N m/rad) about the arm pivot;
    ``travel_limit`` bounds the passive deflection, ``active_range`` the
    actuator offset. Angles are positive when the wheel swings down
    (suspension extends).
    """

    link_length: float = 0.4
    spring_rate: float = 277.0
    preload: float = 0.0
    travel_limit: float = 0.35
    active_range: float = 0.5

    def __post_init__(self):
        if min(self.link_length, self.spring_rate, self.travel_limit, self.active_range) <= 0.0:
            raise DomainError("suspension parameters must be positive")
        if self.preload < 0.0:
            raise DomainError("preload must be >= 0")

    @property
    def vertical_travel(self) -> float:
        """Usable vertical wheel travel from the passive range."""
        return self.link_length * math.sin(self.travel_limit)

    @property
    def vertical_rate(self) -> float:
        """Small-angle equivalent vertical stiffness at the wheel, N/m."""
        return self.spring_rate / (self.link_length * self.link_length)


def default_suspension(geometry: RoverGeometry, sizing_gravity: float = 1.62) -> SuspensionUnit:
    """Spring sized so the empty rover deflects 10% of travel under self-weight.

    Sizing uses the sprung (structure) mass in the gravity the vehicle is
    designed for; the default is the 1/6-g environment the scaling law
    targets.
    """
    unit = SuspensionUnit()
    quarter_load = geometry.structure_mass * sizing_gravity / 4.0
    theta = 0.1 * unit.travel_limit
    k = quarter_load * unit.link_length * math.cos(theta) / theta
    return SuspensionUnit(
        link_length=unit.link_length,
        spring_rate=k,
        preload=0.0,
        travel_limit=unit.travel_limit,
        active_range=unit.active_range,
    )


def passive_deflection_from_load(unit: SuspensionUnit, force: float) -> tuple[float, bool]:
    """Self-consistent passive arm deflection under a normal load.

    Returns (deflection rad, limited) where ``limited`` reports a hard stop
    at the travel limit. Load must be >= 0 (a hanging wheel rests at zero
    deflection).
    """
    if force < 0.0:
        raise DomainError("normal load must be >= 0")
    k, L, pre = unit.spring_rate, unit.link_length, unit.preload

    def g(theta: float) -> float:
        return k * theta - max(0.0, force * L * math.cos(theta) - pre)

    if g(0.0) >= 0.0:
        return 0.0, False
    hi = unit.travel_limit
    if g(hi) < 0.0:
        return hi, True
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def hub_rotation(unit: SuspensionUnit, arm_angle: float) -> float:
    """Hub orientation change across travel; identically zero for a parallelogram."""
    if abs(arm_angle) > unit.travel_limit + unit.active_range + 1e-9:
        raise DomainError("arm angle beyond mechanical range")
    return 0.0


# ---------------------------------------------------------------------------
# Center of gravity

def compute_cog(
    geometry: RoverGeometry,
    arm_angles: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0),
    link_length: float = 0.4,
) -> tuple[float, float, float]:
    """Body-frame CoG of structure, payloads, and wheels.

    Structure mass splits evenly across the chassis modules at their
    centroids; payloads sit at their module-frame offsets; wheel masses
    follow the suspension (``arm_angles`` are deviations from the nominal
    stance, positive down).
    """
    mx = my = mz = total = 0.0
    share = geometry.structure_mass / len(geometry.modules)
    for m in geometry.modules:
        total += share
        mx += share * m.position[0]
        my += share * m.position[1]
        mz += share * m.position[2]
        if m.payload_mass > 0.0:
            total += m.payload_mass
            mx += m.payload_mass * (m.position[0] + m.payload_cog[0])
            my += m.payload_mass * (m.position[1] + m.payload_cog[1])
            mz += m.payload_mass * (m.position[2] + m.payload_cog[2])
    wheel_z0 = geometry.wheel.radius - geometry.ground_clearance
    wm = geometry.wheel.mass
    for (x, y), arm in zip(geometry.wheel_positions, arm_angles):
        total += wm
        mx += wm * x
        my += wm * y
        mz += wm * (wheel_z0 - link_length * math.sin(arm))
    return (mx / total, my / total, mz / total)


# ---------------------------------------------------------------------------
# Support polygon and margin

def support_polygon(contacts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Convex hull (CCW) of contact points; DegenerateSupport below 3 distinct points."""
    pts = sorted(set((float(x), float(y)) for x, y in contacts))
    if len(pts) < 3:
        raise DegenerateSupport("need at least three distinct contacts")

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2:
                (x1, y1), (x2, y2) = out[-2], out[-1]
                if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0.0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(list(reversed(pts)))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateSupport("contacts are collinear")
    return hull


@dataclass(frozen=True)
class StabilityReport:
    margin: float
    projected_cog: tuple[float, float]
    polygon: tuple[tuple[float, float], ...]


def stability_report(
    cog: tuple[float, float, float],
    contacts: list[tuple[float, float]],
    slope: float = 0.0,
    downhill_azimuth: float = 0.0,
) -> StabilityReport:
    """Gravity-projected CoG against the support polygon.

    ``cog`` is (x, y, height) with the height measured normal to the contact
    plane; ``downhill_azimuth`` is the in-plane bearing of downhill. The
    margin is the signed minimum distance to the polygon edges, negative
    once the projection leaves the polygon (tip-over).
    """
    hull = support_polygon(contacts)
    cx, cy, h = cog
    if h < 0.0:
        raise DomainError("cog height must be >= 0")
    shift = h * math.tan(slope)
    px = cx + shift * math.cos(downhill_azimuth)
    py = cy + shift * math.sin(downhill_azimuth)
    margin = math.inf
    n = len(hull)
    for i in range(n):
        x1, y1 = hull[i]
        x2, y2 = hull[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        elen = math.hypot(ex, ey)
        d = (ex * (py - y1) - ey * (px - x1)) / elen
        margin = min(margin, d)
    return StabilityReport(margin, (px, py), tuple(hull))


def stability_margin(
    cog: tuple[float, float, float],
    contacts: list[tuple[float, float]],
    slope: float = 0.0,
    downhill_azimuth: float = 0.0,
) -> float:
    return stability_report(cog, contacts, slope, downhill_azimuth).margin


def active_cog_shift(
    geometry: RoverGeometry,
    unit: SuspensionUnit,
    cog_height: float,
    shift: tuple[float, float],
) -> tuple[float, float, float, float]:
    """Suspension offsets that translate the projected CoG by ``shift``.

    Leaning the body re-points the CoG height vector: a lean of shift/height
    radians moves the projection by ``shift``. Wheel extensions follow the
    lean plane (mean zero, so ride height is preserved). Raises
    ShiftUnreachable when an actuator would exceed its range.
    """
    if cog_height <= 0.0:
        raise DomainError("cog height must be positive")
    lx = shift[0] / cog_height
    ly = shift[1] / cog_height
    offsets = []
    for x, y in geometry.wheel_positions:
        e = -lx * x - ly * y  # vertical wheel extension, m
        s = e / unit.link_length
        if abs(s) > 1.0:
            raise ShiftUnreachable("lean exceeds arm geometry")
        a = math.asin(s)
        if abs(a) > unit.active_range + 1e-12:
            raise ShiftUnreachable(
                f"wheel offset {a:.3f} rad beyond actuator range {unit.active_range:.3f}"
            )
        offsets.append(a)
    return tuple(offsets)


def steering_bending_torque(traction_force: float, lever: float = 0.2) -> float:
    """Bending torque on the steering column from rim traction on the on-side lever."""
    if lever < 0.0:
        raise DomainError("lever must be >= 0")
    return traction_force * lever


# ---------------------------------------------------------------------------
# Transport envelope

def stow_envelope(geometry: RoverGeometry, stowed: bool) -> tuple[float, float, float]:
    """Overall (length, width, height) box in the given configuration.

    Stowed: wheels folded 90 deg about their on-side steering axes (centers
    tuck inboard by the lever), suspension fully lowered (belly on the
    deck). Height covers the chassis stack (clearance + central module +
    payload interface); payload volumes above the interface ride on top and
    are excluded. Deployed: wheels rolling, nominal clearance.
    """
    r = geometry.wheel.radius
    half_tile = 0.5 * geometry.wheel.tile_width
    lever = geometry.steering_lever
    x_ext = 0.0
    y_ext = 0.0
    for x, y in geometry.wheel_positions:
        if stowed:
            cx = x - math.copysign(lever, x)
            cy = y - math.copysign(lever, y)
            x_ext = max(x_ext, abs(cx) + half_tile)
            y_ext = max(y_ext, abs(cy) + r)
        else:
            x_ext = max(x_ext, abs(x) + r)
            y_ext = max(y_ext, abs(y) + half_tile)
    for m in geometry.modules:
        x_ext = max(x_ext, abs(m.position[0]) + 0.5 * m.size[0])
        y_ext = max(y_ext, abs(m.position[1]) + 0.5 * m.size[1])
    central = geometry.module("central")
    height = central.size[2] + TOP_INTERFACE_HEIGHT
    if not stowed:
        height += geometry.ground_clearance
    return (2.0 * x_ext, 2.0 * y_ext, height)
