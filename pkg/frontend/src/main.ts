// Browser entry point: owns the socket, the session, the input loop, and
// the render loop. Serve the repo root statically and open index.html;
// point elsewhere with ?ws=ws://host:port.

import { TwistLimiter, ZERO_TWIST, joystickTwist, twistsEqual } from "./limits.js";
import { estopHeld, pollJoystick, watchKeyboard } from "./input.js";
import type { Command, DriveMode } from "./protocol.js";
import { encodeCommand, parseInbound } from "./protocol.js";
import { ConsoleSocket } from "./socket.js";
import { ConsoleSession } from "./store.js";
import { modeButtons, render } from "./view.js";

const params = new URLSearchParams(window.location.search);
const url = params.get("ws") ?? `ws://${window.location.hostname || "localhost"}:7475`;

const session = new ConsoleSession();
const socket = new ConsoleSocket(url, (u) => new WebSocket(u));
const limiter = new TwistLimiter(100);

function send(cmd: Command): void {
  if (socket.send(encodeCommand(cmd))) {
    session.sent(cmd);
  }
}

socket.onopen = () => {
  session.onOpen();
  render(session);
};
socket.onclose = () => {
  session.onClose();
  limiter.reset();
  render(session);
};
socket.ontext = (text) => {
  let msg;
  try {
    msg = parseInbound(text);
  } catch {
    session.onBadFrame();
    return;
  }
  if (msg.type === "state") {
    session.onFrame(msg);
  } else {
    session.onAck(msg);
  }
  render(session);
};

for (const button of modeButtons()) {
  button.addEventListener("click", () => {
    const mode = button.dataset.mode as DriveMode;
    session.selectedMode = mode;
    send({ type: "set_mode", mode });
    render(session);
  });
}
document.getElementById("deploy")!.addEventListener("click", () => send({ type: "deploy" }));
document.getElementById("stow")!.addEventListener("click", () => send({ type: "stow" }));
document.getElementById("walk-start")!.addEventListener("click", () => send({ type: "wheel_walk_start" }));
document.getElementById("walk-stop")!.addEventListener("click", () => send({ type: "wheel_walk_stop" }));
document.getElementById("estop")!.addEventListener("click", () => send({ type: "estop" }));

watchKeyboard(window);

let lastTwistSent = ZERO_TWIST;
setInterval(() => {
  if (estopHeld()) {
    send({ type: "estop" });
    return;
  }
  session.joystick = pollJoystick();
  if (!session.inputsEnabled()) {
    return;
  }
  const twist = joystickTwist(session.joystick, session.selectedMode);
  // keep streaming while moving, but do not spam standing zeros
  if (twistsEqual(twist, ZERO_TWIST) && twistsEqual(lastTwistSent, ZERO_TWIST)) {
    return;
  }
  const due = limiter.submit(twist, performance.now());
  if (due !== null) {
    send({ type: "twist", ...due });
    lastTwistSent = due;
  }
}, 50);

setInterval(() => render(session), 250);

socket.connect();
render(session);
