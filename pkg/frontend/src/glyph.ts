// Pure geometry behind the top-down rover glyph. Body frame: +x forward,
// +y left, angles counter-clockwise. Wheel telemetry arrives ordered FL,
// FR, RL, RR, matching WHEEL_OFFSETS.

export interface Point {
  x: number;
  y: number;
}

export const BODY_LENGTH = 1.775;
export const BODY_WIDTH = 1.284;
export const WHEEL_DIAMETER = 0.612;
export const WHEEL_WIDTH = 0.24;

export const WHEEL_OFFSETS: Point[] = [
  { x: BODY_LENGTH / 2, y: BODY_WIDTH / 2 },
  { x: BODY_LENGTH / 2, y: -BODY_WIDTH / 2 },
  { x: -BODY_LENGTH / 2, y: BODY_WIDTH / 2 },
  { x: -BODY_LENGTH / 2, y: -BODY_WIDTH / 2 },
];

export const WHEEL_NAMES = ["FL", "FR", "RL", "RR"];

/** Corners of a wheel footprint turned to its steer angle, CCW order. */
export function wheelCorners(center: Point, steer: number, length = WHEEL_DIAMETER, width = WHEEL_WIDTH): Point[] {
  const c = Math.cos(steer);
  const s = Math.sin(steer);
  const hl = length / 2;
  const hw = width / 2;
  const local: Point[] = [
    { x: hl, y: hw },
    { x: -hl, y: hw },
    { x: -hl, y: -hw },
    { x: hl, y: -hw },
  ];
  return local.map((p) => ({
    x: center.x + p.x * c - p.y * s,
    y: center.y + p.x * s + p.y * c,
  }));
}

// Margin gauge saturates here; flat-ground static margin is around 0.6 m.
const MARGIN_FULL = 0.6;

/** Gauge fill for a stability margin, 0 when tipping, 1 at comfortable. */
export function marginFraction(margin: number): number {
  return Math.max(0, Math.min(1, margin / MARGIN_FULL));
}

/**
 * Map a body-frame point onto canvas pixels: canvas up is +x (forward),
 * canvas right is -y (right side of the rover).
 */
export function bodyToCanvas(p: Point, cx: number, cy: number, scale: number): Point {
  return { x: cx - p.y * scale, y: cy - p.x * scale };
}

/**
 * World-frame point to minimap pixels, keeping the rover centered: north
 * (+x) up, east (-y) right.
 */
export function worldToMap(p: Point, center: Point, cx: number, cy: number, scale: number): Point {
  return {
    x: cx - (p.y - center.y) * scale,
    y: cy - (p.x - center.x) * scale,
  };
}

/** Heading needle endpoint on the minimap for a yaw angle. */
export function headingNeedle(theta: number, cx: number, cy: number, len: number): Point {
  return { x: cx - Math.sin(theta) * len, y: cy - Math.cos(theta) * len };
}
