import type { Joystick } from "./limits.js";
import type { Ack, Command, DriveMode, StateFrame } from "./protocol.js";

// Everything the view renders lives here, and every rover-side value comes
// from a received frame. The console never predicts pose, wheel angles, or
// state; between frames it shows the last one it got.

export type Connection = "connecting" | "open" | "closed";

export interface CommandRecord {
  command: Command;
  accepted: boolean;
  reason: string;
  /** Frame tick current when the ack arrived, -1 before the first frame. */
  tick: number;
}

export interface EventRecord {
  tick: number;
  text: string;
}

const TRAIL_CAP = 600;
const HISTORY_CAP = 50;
const EVENT_CAP = 100;

export class ConsoleSession {
  connection: Connection = "connecting";
  frame: StateFrame | null = null;
  trail: [number, number][] = [];
  history: CommandRecord[] = [];
  events: EventRecord[] = [];
  selectedMode: DriveMode = "skid";
  /** Last input sample; socket and input events meet in this one store. */
  joystick: Joystick = { x: 0, y: 0, turn: 0 };
  badFrames = 0;
  /** Commands sent and not yet acked, oldest first. */
  private awaiting: Command[] = [];

  onOpen(): void {
    this.connection = "open";
  }

  onClose(): void {
    this.connection = "closed";
    // acks for these will never arrive on a dead socket
    this.awaiting = [];
  }

  onFrame(frame: StateFrame): void {
    this.frame = frame;
    this.trail.push([frame.pose[0], frame.pose[1]]);
    if (this.trail.length > TRAIL_CAP) {
      this.trail.splice(0, this.trail.length - TRAIL_CAP);
    }
    for (const text of frame.events) {
      this.events.push({ tick: frame.tick, text });
      if (this.events.length > EVENT_CAP) {
        this.events.shift();
      }
    }
  }

  /** Pair an ack with the oldest unanswered command. */
  onAck(ack: Ack): void {
    const command = this.awaiting.shift();
    if (command === undefined) {
      return;
    }
    this.history.push({
      command,
      accepted: ack.accepted,
      reason: ack.reason,
      tick: this.frame ? this.frame.tick : -1,
    });
    if (this.history.length > HISTORY_CAP) {
      this.history.shift();
    }
  }

  onBadFrame(): void {
    this.badFrames += 1;
  }

  sent(command: Command): void {
    this.awaiting.push(command);
  }

  /** Latest refused command, for the rejection toast. */
  lastRejection(): CommandRecord | null {
    for (let i = this.history.length - 1; i >= 0; i--) {
      if (!this.history[i].accepted) {
        return this.history[i];
      }
    }
    return null;
  }

  /**
   * Drive input is live only with a connection, at least one frame, and a
   * rover that is neither stowed nor faulted.
   */
  inputsEnabled(): boolean {
    if (this.connection !== "open" || this.frame === null) {
      return false;
    }
    const label = this.frame.mode;
    return !label.startsWith("Stowed") && !label.startsWith("Fault");
  }
}
