// DOM rendering. Everything drawn here comes out of the ConsoleSession;
// this module owns no rover state of its own.

import {
  BODY_LENGTH,
  BODY_WIDTH,
  WHEEL_NAMES,
  WHEEL_OFFSETS,
  bodyToCanvas,
  headingNeedle,
  marginFraction,
  wheelCorners,
  worldToMap,
} from "./glyph.js";
import type { CommandRecord } from "./store.js";
import { ConsoleSession } from "./store.js";
import { DRIVE_MODES, transitionEnds } from "./protocol.js";

const el = (id: string): HTMLElement => {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node;
};

const canvas = (id: string): HTMLCanvasElement => el(id) as HTMLCanvasElement;

const fmt = (v: number, digits = 2) => v.toFixed(digits);

function drawGlyph(session: ConsoleSession): void {
  const cv = canvas("glyph");
  const ctx = cv.getContext("2d")!;
  const cx = cv.width / 2;
  const cy = cv.height / 2;
  const scale = cv.width / 3.4;
  ctx.clearRect(0, 0, cv.width, cv.height);

  ctx.strokeStyle = "#39424e";
  ctx.lineWidth = 2;
  const body = [
    { x: BODY_LENGTH / 2, y: BODY_WIDTH / 2 - 0.18 },
    { x: BODY_LENGTH / 2, y: -BODY_WIDTH / 2 + 0.18 },
    { x: -BODY_LENGTH / 2, y: -BODY_WIDTH / 2 + 0.18 },
    { x: -BODY_LENGTH / 2, y: BODY_WIDTH / 2 - 0.18 },
  ].map((p) => bodyToCanvas(p, cx, cy, scale));
  ctx.beginPath();
  body.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
  ctx.closePath();
  ctx.stroke();
  // nose mark
  const nose = bodyToCanvas({ x: BODY_LENGTH / 2 + 0.12, y: 0 }, cx, cy, scale);
  ctx.beginPath();
  ctx.moveTo(body[0].x, body[0].y);
  ctx.lineTo(nose.x, nose.y);
  ctx.lineTo(body[1].x, body[1].y);
  ctx.stroke();

  const frame = session.frame;
  for (let i = 0; i < 4; i++) {
    const offset = WHEEL_OFFSETS[i];
    const w = frame ? frame.wheels[i] : null;
    const steer = w ? w.steer : 0;
    const corners = wheelCorners(offset, steer).map((p) => bodyToCanvas(p, cx, cy, scale));
    ctx.beginPath();
    corners.forEach((p, k) => (k === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
    ctx.closePath();
    ctx.fillStyle = w && w.slip ? "#b33636" : "#5b6672";
    ctx.fill();
    if (w && Math.abs(w.speed) > 1e-6) {
      // velocity tick along the rolling direction, scaled to the cap
      const len = (w.speed * 0.306) / (3000 / 3600);
      const tip = bodyToCanvas(
        { x: offset.x + Math.cos(steer) * len * 0.6, y: offset.y + Math.sin(steer) * len * 0.6 },
        cx,
        cy,
        scale,
      );
      const base = bodyToCanvas(offset, cx, cy, scale);
      ctx.strokeStyle = "#e8b23a";
      ctx.beginPath();
      ctx.moveTo(base.x, base.y);
      ctx.lineTo(tip.x, tip.y);
      ctx.stroke();
      ctx.strokeStyle = "#39424e";
    }
    const tag = bodyToCanvas({ x: offset.x, y: offset.y > 0 ? offset.y + 0.45 : offset.y - 0.45 }, cx, cy, scale);
    ctx.fillStyle = "#8a949e";
    ctx.font = "11px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(WHEEL_NAMES[i], tag.x, tag.y + 4);
  }
}

function drawMap(session: ConsoleSession): void {
  const cv = canvas("map");
  const ctx = cv.getContext("2d")!;
  const cx = cv.width / 2;
  const cy = cv.height / 2;
  ctx.clearRect(0, 0, cv.width, cv.height);
  const frame = session.frame;
  if (frame === null) {
    return;
  }
  const center = { x: frame.pose[0], y: frame.pose[1] };
  // fit the whole trail, never zoom past 12 px per meter
  let span = 1;
  for (const [x, y] of session.trail) {
    span = Math.max(span, Math.abs(x - center.x) * 2.2, Math.abs(y - center.y) * 2.2);
  }
  const scale = Math.min(12, cv.width / span);
  ctx.strokeStyle = "#4d7a4d";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  session.trail.forEach(([x, y], i) => {
    const p = worldToMap({ x, y }, center, cx, cy, scale);
    i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y);
  });
  ctx.stroke();
  ctx.fillStyle = "#d8dee4";
  ctx.beginPath();
  ctx.arc(cx, cy, 3, 0, Math.PI * 2);
  ctx.fill();
  const tip = headingNeedle(frame.pose[2], cx, cy, 12);
  ctx.strokeStyle = "#d8dee4";
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(tip.x, tip.y);
  ctx.stroke();
}

let toastShown: CommandRecord | null = null;
let toastTimer: ReturnType<typeof setTimeout> | null = null;

function updateToast(session: ConsoleSession): void {
  const rejection = session.lastRejection();
  if (rejection === null || rejection === toastShown) {
    return;
  }
  toastShown = rejection;
  const node = el("toast");
  node.textContent = `${rejection.command.type} refused: ${rejection.reason}`;
  node.classList.add("show");
  if (toastTimer !== null) {
    clearTimeout(toastTimer);
  }
  toastTimer = setTimeout(() => node.classList.remove("show"), 4000);
}

export function render(session: ConsoleSession): void {
  const conn = el("conn");
  conn.textContent = session.connection;
  conn.className = `badge ${session.connection}`;

  const frame = session.frame;
  const label = frame ? frame.mode : "no telemetry";
  el("state").textContent = label;
  const ends = frame ? transitionEnds(frame.mode) : null;
  el("state").className = ends !== null ? "state busy" : "state";

  if (frame) {
    el("clock").textContent = `t=${fmt(frame.time, 1)}s tick ${frame.tick}`;
    el("pose").textContent =
      `${fmt(frame.pose[0])}, ${fmt(frame.pose[1])} m @ ${fmt((frame.pose[2] * 180) / Math.PI, 1)} deg`;
    el("odom").textContent =
      `${fmt(frame.odometry[0])}, ${fmt(frame.odometry[1])} m @ ${fmt((frame.odometry[2] * 180) / Math.PI, 1)} deg`;
    el("attitude").textContent =
      `pitch ${fmt((frame.pitch * 180) / Math.PI, 1)} roll ${fmt((frame.roll * 180) / Math.PI, 1)} deg`;
    el("margin-num").textContent = `${fmt(frame.margin)} m`;
    (el("margin-fill") as HTMLElement).style.width = `${marginFraction(frame.margin) * 100}%`;
    el("margin-fill").className = `fill ${frame.margin <= 0.05 ? "low" : ""}`;
    for (let i = 0; i < 4; i++) {
      const w = frame.wheels[i];
      el(`defl-${i}`).style.height = `${Math.min(1, Math.abs(w.deflection) / 0.5) * 100}%`;
      el(`wheel-${i}`).textContent =
        `${WHEEL_NAMES[i]} ${fmt((w.steer * 180) / Math.PI, 1)}d ${fmt(w.speed, 2)}r/s ${fmt(w.torque, 0)}Nm`;
    }
  }

  const faults = el("faults");
  if (frame && frame.faults.length > 0) {
    faults.textContent = `FAULT: ${frame.faults.join(", ")}`;
    faults.classList.add("show");
  } else {
    faults.classList.remove("show");
  }

  const live = session.inputsEnabled();
  document.querySelectorAll<HTMLButtonElement>("button[data-mode]").forEach((b) => {
    b.disabled = !live;
    b.classList.toggle("active", b.dataset.mode === session.selectedMode);
    // blink the target while the manager slews between modes
    b.classList.toggle("pending", ends !== null && b.dataset.mode === ends.to);
  });
  (el("walk-start") as HTMLButtonElement).disabled = !live;
  (el("walk-stop") as HTMLButtonElement).disabled = !live;
  (el("deploy") as HTMLButtonElement).disabled = session.connection !== "open";
  (el("stow") as HTMLButtonElement).disabled = session.connection !== "open";
  (el("estop") as HTMLButtonElement).disabled = session.connection !== "open";

  const log = el("events");
  const lines = session.events.slice(-12);
  log.innerHTML = "";
  for (const ev of lines) {
    const li = document.createElement("li");
    li.textContent = `[${ev.tick}] ${ev.text}`;
    log.appendChild(li);
  }

  updateToast(session);
  drawGlyph(session);
  drawMap(session);
}

export function modeButtons(): HTMLButtonElement[] {
  return Array.from(document.querySelectorAll<HTMLButtonElement>("button[data-mode]"));
}

export { DRIVE_MODES };
