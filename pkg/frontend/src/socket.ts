// Thin reconnecting wrapper over a WebSocket. The constructor takes the
// socket factory so tests and the Node harness can hand in `ws` instead of
// the browser class.

export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  addEventListener(type: "open" | "close" | "message" | "error", fn: (ev: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;
export type Scheduler = (fn: () => void, ms: number) => unknown;

const OPEN = 1;
const BACKOFF_MIN_MS = 500;
const BACKOFF_MAX_MS = 5000;

export class ConsoleSocket {
  onopen: () => void = () => {};
  onclose: () => void = () => {};
  ontext: (text: string) => void = () => {};

  private sock: SocketLike | null = null;
  private backoffMs = BACKOFF_MIN_MS;
  private stopped = false;

  constructor(
    private url: string,
    private factory: SocketFactory,
    private schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
  ) {}

  connect(): void {
    this.stopped = false;
    this.dial();
  }

  /** Stop for good; no reconnect after this. */
  stop(): void {
    this.stopped = true;
    if (this.sock !== null) {
      this.sock.close();
      this.sock = null;
    }
  }

  get open(): boolean {
    return this.sock !== null && this.sock.readyState === OPEN;
  }

  /** Queue nothing: either the socket is open and takes it, or it is lost. */
  send(text: string): boolean {
    if (!this.open) {
      return false;
    }
    this.sock!.send(text);
    return true;
  }

  private dial(): void {
    let sock: SocketLike;
    try {
      sock = this.factory(this.url);
    } catch {
      this.retry();
      return;
    }
    this.sock = sock;
    sock.addEventListener("open", () => {
      if (this.sock !== sock) {
        return;
      }
      this.backoffMs = BACKOFF_MIN_MS;
      this.onopen();
    });
    sock.addEventListener("message", (ev: { data: unknown }) => {
      if (this.sock !== sock) {
        return;
      }
      const data = ev.data;
      this.ontext(typeof data === "string" ? data : String(data));
    });
    sock.addEventListener("close", () => {
      if (this.sock !== sock) {
        return;
      }
      this.sock = null;
      this.onclose();
      this.retry();
    });
    // close fires after error; retry is driven off close alone
    sock.addEventListener("error", () => {});
  }

  private retry(): void {
    if (this.stopped) {
      return;
    }
    const wait = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
    this.schedule(() => {
      if (!this.stopped) {
        this.dial();
      }
    }, wait);
  }
}
