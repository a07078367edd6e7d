// Wire types for the rover telemetry service. The service speaks JSON text
// frames over WebSocket: it pushes "state" frames and answers every command
// with an "ack". Everything here validates strictly; a frame that does not
// match the contract throws rather than leaking a half-parsed object into
// the UI.

export type DriveMode = "skid" | "ackermann" | "crab" | "point_turn";

export const DRIVE_MODES: DriveMode[] = ["skid", "ackermann", "crab", "point_turn"];

export interface WheelState {
  steer: number;
  speed: number;
  torque: number;
  normal: number;
  slip: boolean;
  deflection: number;
  offset: number;
}

export interface StateFrame {
  type: "state";
  tick: number;
  time: number;
  pose: [number, number, number];
  pitch: number;
  roll: number;
  wheels: WheelState[];
  /** Manager state label, e.g. "Idle", "Driving(crab)", "Fault(tip)". */
  mode: string;
  faults: string[];
  margin: number;
  odometry: [number, number, number];
  events: string[];
}

export interface Ack {
  type: "ack";
  accepted: boolean;
  reason: string;
}

export type Inbound = StateFrame | Ack;

export interface Twist {
  vx: number;
  vy: number;
  omega: number;
}

export type Command =
  | { type: "twist"; vx: number; vy: number; omega: number }
  | { type: "set_mode"; mode: DriveMode }
  | { type: "deploy" }
  | { type: "stow" }
  | { type: "wheel_walk_start" }
  | { type: "wheel_walk_stop" }
  | { type: "estop" };

function num(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new Error(`field ${key} is not a finite number`);
  }
  return v;
}

function triple(obj: Record<string, unknown>, key: string): [number, number, number] {
  const v = obj[key];
  if (!Array.isArray(v) || v.length !== 3 || v.some((x) => typeof x !== "number")) {
    throw new Error(`field ${key} is not a 3-vector`);
  }
  return [v[0], v[1], v[2]];
}

function strings(obj: Record<string, unknown>, key: string): string[] {
  const v = obj[key];
  if (!Array.isArray(v) || v.some((x) => typeof x !== "string")) {
    throw new Error(`field ${key} is not a string list`);
  }
  return v as string[];
}

function parseWheel(raw: unknown): WheelState {
  if (typeof raw !== "object" || raw === null) {
    throw new Error("wheel entry is not an object");
  }
  const w = raw as Record<string, unknown>;
  if (typeof w.slip !== "boolean") {
    throw new Error("wheel slip flag is not a boolean");
  }
  return {
    steer: num(w, "steer"),
    speed: num(w, "speed"),
    torque: num(w, "torque"),
    normal: num(w, "normal"),
    slip: w.slip,
    deflection: num(w, "deflection"),
    offset: num(w, "offset"),
  };
}

/** Parse one text frame from the service. Throws on anything malformed. */
export function parseInbound(text: string): Inbound {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new Error("frame is not valid JSON");
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error("frame is not a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  if (obj.type === "ack") {
    if (typeof obj.accepted !== "boolean" || typeof obj.reason !== "string") {
      throw new Error("malformed ack");
    }
    return { type: "ack", accepted: obj.accepted, reason: obj.reason };
  }
  if (obj.type !== "state") {
    throw new Error(`unknown frame type ${String(obj.type)}`);
  }
  const wheelsRaw = obj.wheels;
  if (!Array.isArray(wheelsRaw) || wheelsRaw.length !== 4) {
    throw new Error("state frame needs exactly four wheels");
  }
  if (typeof obj.mode !== "string") {
    throw new Error("state frame mode is not a string");
  }
  return {
    type: "state",
    tick: num(obj, "tick"),
    time: num(obj, "time"),
    pose: triple(obj, "pose"),
    pitch: num(obj, "pitch"),
    roll: num(obj, "roll"),
    wheels: wheelsRaw.map(parseWheel),
    mode: obj.mode,
    faults: strings(obj, "faults"),
    margin: num(obj, "margin"),
    odometry: triple(obj, "odometry"),
    events: strings(obj, "events"),
  };
}

export function encodeCommand(cmd: Command): string {
  return JSON.stringify(cmd);
}

/** Drive mode out of a "Driving(crab)" style label, or null. */
export function drivingMode(label: string): DriveMode | null {
  const m = /^Driving\((\w+)\)$/.exec(label);
  if (m && (DRIVE_MODES as string[]).includes(m[1])) {
    return m[1] as DriveMode;
  }
  return null;
}

/** Source and target of a "ModeTransition(a->b)" label, or null. */
export function transitionEnds(label: string): { from: string; to: string } | null {
  const m = /^ModeTransition\((\w+)->(\w+)\)$/.exec(label);
  return m ? { from: m[1], to: m[2] } : null;
}
