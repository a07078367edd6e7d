import { describe, expect, it } from "vitest";
import type { StateFrame } from "../src/protocol.js";
import { ConsoleSession } from "../src/store.js";

function frame(over: Partial<StateFrame> = {}): StateFrame {
  const wheel = {
    steer: 0,
    speed: 0,
    torque: 0,
    normal: 215,
    slip: false,
    deflection: 0.29,
    offset: 0,
  };
  return {
    type: "state",
    tick: 1,
    time: 0.01,
    pose: [0, 0, 0],
    pitch: 0,
    roll: 0,
    wheels: [wheel, wheel, wheel, wheel],
    mode: "Idle",
    faults: [],
    margin: 0.64,
    odometry: [0, 0, 0],
    events: [],
    ...over,
  };
}

describe("ConsoleSession", () => {
  it("renders nothing it has not received", () => {
    const s = new ConsoleSession();
    expect(s.frame).toBeNull();
    expect(s.trail).toEqual([]);
    expect(s.events).toEqual([]);
    expect(s.history).toEqual([]);
  });

  it("enables drive input only when open, fed, and healthy", () => {
    const s = new ConsoleSession();
    expect(s.inputsEnabled()).toBe(false);
    s.onOpen();
    expect(s.inputsEnabled()).toBe(false);
    s.onFrame(frame({ mode: "Idle" }));
    expect(s.inputsEnabled()).toBe(true);
    s.onFrame(frame({ mode: "Driving(crab)" }));
    expect(s.inputsEnabled()).toBe(true);
    s.onFrame(frame({ mode: "ModeTransition(crab->point_turn)" }));
    expect(s.inputsEnabled()).toBe(true);
    s.onFrame(frame({ mode: "Stowed" }));
    expect(s.inputsEnabled()).toBe(false);
    s.onFrame(frame({ mode: "Fault(tip)", faults: ["tip"] }));
    expect(s.inputsEnabled()).toBe(false);
    s.onFrame(frame({ mode: "Idle" }));
    s.onClose();
    expect(s.inputsEnabled()).toBe(false);
  });

  it("caps the pose trail at 600 points", () => {
    const s = new ConsoleSession();
    for (let i = 0; i < 650; i++) {
      s.onFrame(frame({ tick: i, pose: [i, 0, 0] }));
    }
    expect(s.trail).toHaveLength(600);
    expect(s.trail[0][0]).toBe(50);
    expect(s.trail[599][0]).toBe(649);
  });

  it("pairs acks with sent commands in order", () => {
    const s = new ConsoleSession();
    s.onOpen();
    s.onFrame(frame({ tick: 7 }));
    s.sent({ type: "estop" });
    s.sent({ type: "set_mode", mode: "crab" });
    s.onAck({ type: "ack", accepted: true, reason: "emergency stop" });
    s.onAck({ type: "ack", accepted: false, reason: "requires Driving" });
    expect(s.history).toHaveLength(2);
    expect(s.history[0].command.type).toBe("estop");
    expect(s.history[0].accepted).toBe(true);
    expect(s.history[0].tick).toBe(7);
    expect(s.history[1].command.type).toBe("set_mode");
    expect(s.history[1].accepted).toBe(false);
    expect(s.lastRejection()?.reason).toBe("requires Driving");
  });

  it("drops unanswered commands when the socket dies", () => {
    const s = new ConsoleSession();
    s.onOpen();
    s.sent({ type: "deploy" });
    s.onClose();
    s.onAck({ type: "ack", accepted: true, reason: "stray" });
    expect(s.history).toHaveLength(0);
  });

  it("ignores an ack with nothing outstanding", () => {
    const s = new ConsoleSession();
    s.onAck({ type: "ack", accepted: true, reason: "ok" });
    expect(s.history).toHaveLength(0);
  });

  it("bounds command history", () => {
    const s = new ConsoleSession();
    for (let i = 0; i < 60; i++) {
      s.sent({ type: "twist", vx: i, vy: 0, omega: 0 });
      s.onAck({ type: "ack", accepted: true, reason: "" });
    }
    expect(s.history).toHaveLength(50);
    const first = s.history[0].command;
    expect(first.type === "twist" && first.vx).toBe(10);
  });

  it("accumulates frame events with tick stamps, bounded", () => {
    const s = new ConsoleSession();
    s.onFrame(frame({ tick: 3, events: ["deployed"] }));
    for (let i = 0; i < 120; i++) {
      s.onFrame(frame({ tick: 10 + i, events: [`e${i}`] }));
    }
    expect(s.events).toHaveLength(100);
    expect(s.events[99]).toEqual({ tick: 129, text: "e119" });
  });

  it("holds the input sample next to the socket state", () => {
    const s = new ConsoleSession();
    expect(s.joystick).toEqual({ x: 0, y: 0, turn: 0 });
    s.joystick = { x: 0.5, y: -1, turn: 0.25 };
    expect(s.joystick.turn).toBe(0.25);
  });

  it("counts frames it could not parse", () => {
    const s = new ConsoleSession();
    s.onBadFrame();
    s.onBadFrame();
    expect(s.badFrames).toBe(2);
  });
});
