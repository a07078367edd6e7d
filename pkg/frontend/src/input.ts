// Keyboard and gamepad capture. Both reduce to one Joystick sample per
// poll; keyboard keys saturate the axis, the pad reads through a deadzone.

import type { Joystick } from "./limits.js";

const held = new Set<string>();

export function watchKeyboard(target: Window): void {
  target.addEventListener("keydown", (ev) => {
    held.add((ev as KeyboardEvent).key.toLowerCase());
  });
  target.addEventListener("keyup", (ev) => {
    held.delete((ev as KeyboardEvent).key.toLowerCase());
  });
  target.addEventListener("blur", () => held.clear());
}

const DEADZONE = 0.15;

function shaped(v: number): number {
  return Math.abs(v) < DEADZONE ? 0 : v;
}

export function pollJoystick(): Joystick {
  let x = 0;
  let y = 0;
  let turn = 0;
  if (held.has("w")) y += 1;
  if (held.has("s")) y -= 1;
  if (held.has("d")) x += 1;
  if (held.has("a")) x -= 1;
  if (held.has("q")) turn += 1;
  if (held.has("e")) turn -= 1;

  const pads = typeof navigator !== "undefined" && navigator.getGamepads ? navigator.getGamepads() : [];
  const pad = pads && pads[0];
  if (pad) {
    // left stick drives, right stick x yaws; pad y axis points down
    x += shaped(pad.axes[0] ?? 0);
    y -= shaped(pad.axes[1] ?? 0);
    turn -= shaped(pad.axes[2] ?? 0);
  }
  return { x, y, turn };
}

export function estopHeld(): boolean {
  return held.has(" ") || held.has("escape");
}
