import type { DriveMode, Twist } from "./protocol.js";

// The wire carries no kinematic limits, so the console ships the same
// defaults the service is built with: 3000 m/h wheel ground speed on a
// 1.775 m x 1.284 m footprint. A wheel at the corner sees body speed plus
// yaw rate times its arm, and commands that would exceed the wheel cap get
// rejected server-side, so the stick mapping scales down before sending.
export interface LimitConfig {
  maxWheelSpeed: number;
  wheelArm: number;
}

export const DEFAULT_LIMITS: LimitConfig = {
  maxWheelSpeed: 3000 / 3600,
  wheelArm: Math.hypot(1.775 / 2, 1.284 / 2),
};

export function maxYawRate(cfg: LimitConfig = DEFAULT_LIMITS): number {
  return cfg.maxWheelSpeed / cfg.wheelArm;
}

/** Worst-case wheel ground speed for a body twist. */
export function wheelSpeedBound(t: Twist, cfg: LimitConfig = DEFAULT_LIMITS): number {
  return Math.hypot(t.vx, t.vy) + Math.abs(t.omega) * cfg.wheelArm;
}

/** Uniformly scale a twist down until every wheel stays under the cap. */
export function clampTwist(t: Twist, cfg: LimitConfig = DEFAULT_LIMITS): Twist {
  const bound = wheelSpeedBound(t, cfg);
  if (bound <= cfg.maxWheelSpeed) {
    return t;
  }
  const k = cfg.maxWheelSpeed / bound;
  return { vx: t.vx * k, vy: t.vy * k, omega: t.omega * k };
}

export interface Joystick {
  /** Lateral, -1 (left) to 1 (right). */
  x: number;
  /** Forward, -1 (back) to 1 (ahead). */
  y: number;
  /** Yaw, -1 (clockwise) to 1 (counter-clockwise). */
  turn: number;
}

const clip = (v: number) => Math.max(-1, Math.min(1, v));

/**
 * Map stick deflection to a twist the current mode can actually execute.
 * Components a mode forbids are dropped rather than sent for rejection:
 * skid and ackermann take no lateral, crab takes no yaw, point turn takes
 * nothing but yaw. The result is clamped to the wheel speed cap.
 */
export function joystickTwist(
  joy: Joystick,
  mode: DriveMode,
  cfg: LimitConfig = DEFAULT_LIMITS,
): Twist {
  const x = clip(joy.x);
  const y = clip(joy.y);
  const turn = clip(joy.turn);
  let t: Twist;
  switch (mode) {
    case "skid":
    case "ackermann":
      t = { vx: y * cfg.maxWheelSpeed, vy: 0, omega: turn * maxYawRate(cfg) };
      break;
    case "crab":
      // lateral on the stick points right; +vy in the body frame is left
      t = { vx: y * cfg.maxWheelSpeed, vy: -x * cfg.maxWheelSpeed, omega: 0 };
      break;
    case "point_turn":
      t = { vx: 0, vy: 0, omega: turn * maxYawRate(cfg) };
      break;
  }
  return clampTwist(t, cfg);
}

export const ZERO_TWIST: Twist = { vx: 0, vy: 0, omega: 0 };

export function twistsEqual(a: Twist, b: Twist): boolean {
  return a.vx === b.vx && a.vy === b.vy && a.omega === b.omega;
}

/**
 * Rate limiter for the twist stream, last writer wins. The input loop
 * submits on every poll; at most one twist per interval comes back out and
 * anything newer replaces the queued one.
 */
export class TwistLimiter {
  private lastSent = -Infinity;
  private pending: Twist | null = null;

  constructor(private intervalMs = 100) {}

  /** Queue a twist and return it immediately if the window is open. */
  submit(t: Twist, nowMs: number): Twist | null {
    this.pending = t;
    return this.take(nowMs);
  }

  /** Return the queued twist once the interval has elapsed, else null. */
  take(nowMs: number): Twist | null {
    if (this.pending === null || nowMs - this.lastSent < this.intervalMs) {
      return null;
    }
    const out = this.pending;
    this.pending = null;
    this.lastSent = nowMs;
    return out;
  }

  reset(): void {
    this.pending = null;
    this.lastSent = -Infinity;
  }
}
