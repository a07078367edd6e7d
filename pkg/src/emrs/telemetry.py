"""Teleop socket service and the wire codec it speaks.

One process, one selector loop, two listening sockets carrying the same
newline-less JSON messages: plain TCP with newline framing on one port, and
a hand-rolled RFC 6455 WebSocket endpoint on the other so a browser console
can join without a gateway. The simulation owns the clock; the service only
pumps sockets between ticks, so a stalled client can never stall the rover.

Inbound messages are commands; each gets exactly one ack, delivered to its
sender in arrival order. Outbound traffic is the shared telemetry broadcast
plus those acks. Clients that stop reading are dropped once their outbound
backlog passes a frame limit.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import socket
import selectors
from collections import deque

from .core import DomainError
from .manager import Command, CommandKind, command_from_dict, command_to_dict
from .sim import TelemetryRecord, record_to_json

DEFAULT_PORT = 7474
DEFAULT_WS_PORT = 7475
PORT_ENV = "EMRS_PORT"
WS_PORT_ENV = "EMRS_WS_PORT"

# Outbound backlog (telemetry frames) after which a client is considered
# dead weight and dropped. Acks and control frames do not count.
MAX_PENDING_FRAMES = 1000

# One inbound message (TCP line or WS frame) past this size is hostile.
MAX_MESSAGE_BYTES = 64 * 1024

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class DecodeError(Exception):
    """A wire message that does not decode to a command or record."""


# ---------------------------------------------------------------------------
# Wire codec

def encode_command(cmd: Command) -> str:
    return json.dumps(command_to_dict(cmd), separators=(",", ":"))


def decode_command(data) -> Command:
    """Command from a parsed JSON object; unknown fields are ignored."""
    try:
        return command_from_dict(data)
    except DomainError as e:
        raise DecodeError(str(e)) from None


def encode_record(rec: TelemetryRecord) -> str:
    return record_to_json(rec)


def encode_ack(accepted: bool, reason: str) -> str:
    return json.dumps(
        {"type": "ack", "accepted": accepted, "reason": reason},
        separators=(",", ":"),
    )


def resolve_ports(port: int | None = None, ws_port: int | None = None) -> tuple[int, int]:
    """Effective (tcp, websocket) ports: explicit value, else env, else default."""
    def pick(value, env, fallback):
        if value is not None:
            return value
        raw = os.environ.get(env)
        if raw is None:
            return fallback
        try:
            parsed = int(raw)
        except ValueError:
            raise DomainError(f"{env} must be an integer, got {raw!r}") from None
        if not 0 <= parsed <= 65535:
            raise DomainError(f"{env} out of range: {parsed}")
        return parsed

    return pick(port, PORT_ENV, DEFAULT_PORT), pick(ws_port, WS_PORT_ENV, DEFAULT_WS_PORT)


# ---------------------------------------------------------------------------
# WebSocket framing

def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _ws_frame(payload: bytes, opcode: int = 0x1) -> bytes:
    head = bytearray([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head.append(n)
    elif n < 1 << 16:
        head.append(126)
        head += n.to_bytes(2, "big")
    else:
        head.append(127)
        head += n.to_bytes(8, "big")
    return bytes(head) + payload


class _WsProtocolError(Exception):
    pass


def _ws_parse(buf: bytearray):
    """Pop one complete frame from ``buf``; returns (opcode, fin, payload) or None."""
    if len(buf) < 2:
        return None
    b0, b1 = buf[0], buf[1]
    fin = bool(b0 & 0x80)
    if b0 & 0x70:
        raise _WsProtocolError("reserved bits set")
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    if not masked:
        raise _WsProtocolError("client frames must be masked")
    n = b1 & 0x7F
    offset = 2
    if n == 126:
        if len(buf) < 4:
            return None
        n = int.from_bytes(buf[2:4], "big")
        offset = 4
    elif n == 127:
        if len(buf) < 10:
            return None
        n = int.from_bytes(buf[2:10], "big")
        offset = 10
    if n > MAX_MESSAGE_BYTES:
        raise _WsProtocolError("frame too large")
    total = offset + 4 + n
    if len(buf) < total:
        return None
    mask = buf[offset:offset + 4]
    payload = bytes(b ^ mask[i % 4] for i, b in enumerate(buf[offset + 4:total]))
    del buf[:total]
    return opcode, fin, payload


# ---------------------------------------------------------------------------
# Server

class _Client:
    __slots__ = (
        "sock", "kind", "inbuf", "outbuf", "pending_frames",
        "handshaken", "fragments", "closing",
    )

    def __init__(self, sock, kind):
        self.sock = sock
        self.kind = kind  # "tcp" | "ws"
        self.inbuf = bytearray()
        self.outbuf: deque = deque()  # (bytes, counts_as_frame)
        self.pending_frames = 0
        self.handshaken = kind != "ws"
        self.fragments: list[bytes] = []
        self.closing = False


# Queue entry verdicts that bypass the manager.
_PARSE = "parse"
_SUPERSEDED = "superseded"


class TelemetryServer:
    """Socket front end for one live world.

    Drive it from the simulation loop: ``pump()`` between ticks to move
    bytes, ``drain(world)`` at the tick boundary to apply queued commands
    and send their acks, ``broadcast(record)`` whenever the decimator emits
    a frame.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int | None = None,
        ws_port: int | None = None,
        max_pending: int = MAX_PENDING_FRAMES,
    ):
        self.host = host
        self.port, self.ws_port = resolve_ports(port, ws_port)
        self.max_pending = max_pending
        self._sel = selectors.DefaultSelector()
        self._listeners: list[socket.socket] = []
        self._clients: dict[socket.socket, _Client] = {}
        # (client, command | None, verdict) in arrival order; verdict is a
        # bypass string for entries that never reach the manager
        self._queue: list[tuple[_Client, Command | None, str | None]] = []

    # -- lifecycle

    def open(self) -> None:
        """Bind and listen on both ports. Port 0 picks a free one."""
        self.port = self._listen(self.port, "tcp")
        self.ws_port = self._listen(self.ws_port, "ws")

    def _listen(self, port: int, kind: str) -> int:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, port))
        sock.listen(16)
        sock.setblocking(False)
        self._sel.register(sock, selectors.EVENT_READ, ("listen", kind))
        self._listeners.append(sock)
        return sock.getsockname()[1]

    def close(self) -> None:
        for sock in list(self._clients):
            self._drop(sock)
        for sock in self._listeners:
            self._sel.unregister(sock)
            sock.close()
        self._listeners.clear()
        self._sel.close()

    @property
    def client_count(self) -> int:
        return len(self._clients)

    # -- IO pump

    def pump(self, timeout: float = 0.0) -> None:
        """One select pass: accept, read, write. Never blocks past timeout."""
        for key, events in self._sel.select(timeout):
            tag = key.data
            if tag[0] == "listen":
                self._accept(key.fileobj, tag[1])
                continue
            sock = key.fileobj
            client = self._clients.get(sock)
            if client is None:
                continue
            if events & selectors.EVENT_READ:
                self._read(client)
            if sock in self._clients and events & selectors.EVENT_WRITE:
                self._write(client)

    def _accept(self, listener, kind):
        try:
            sock, _ = listener.accept()
        except OSError:
            return
        sock.setblocking(False)
        client = _Client(sock, kind)
        self._clients[sock] = client
        self._sel.register(sock, selectors.EVENT_READ, ("client",))

    def _interest(self, client: _Client) -> None:
        events = selectors.EVENT_READ
        if client.outbuf:
            events |= selectors.EVENT_WRITE
        try:
            self._sel.modify(client.sock, events, ("client",))
        except (KeyError, ValueError):
            pass

    def _drop(self, sock) -> None:
        client = self._clients.pop(sock, None)
        if client is None:
            return
        try:
            self._sel.unregister(sock)
        except (KeyError, ValueError):
            pass
        try:
            sock.close()
        except OSError:
            pass
        # unprocessed commands from a gone client keep their queue slots but
        # their acks will go nowhere; the manager still sees the commands
        # in order, which matches a client that dropped right after sending

    # -- reading

    def _read(self, client: _Client) -> None:
        try:
            data = client.sock.recv(65536)
        except (BlockingIOError, InterruptedError):
            return
        except OSError:
            self._drop(client.sock)
            return
        if not data:
            self._drop(client.sock)
            return
        if client.closing:
            return
        client.inbuf += data
        try:
            if client.kind == "tcp":
                self._read_lines(client)
            else:
                self._read_ws(client)
        except _WsProtocolError:
            self._drop(client.sock)

    def _read_lines(self, client: _Client) -> None:
        while True:
            idx = client.inbuf.find(b"\n")
            if idx < 0:
                if len(client.inbuf) > MAX_MESSAGE_BYTES:
                    self._drop(client.sock)
                return
            line = bytes(client.inbuf[:idx]).strip()
            del client.inbuf[:idx + 1]
            if line:
                self._submit(client, line)

    def _read_ws(self, client: _Client) -> None:
        if not client.handshaken:
            end = client.inbuf.find(b"\r\n\r\n")
            if end < 0:
                if len(client.inbuf) > MAX_MESSAGE_BYTES:
                    raise _WsProtocolError("oversized handshake")
                return
            request = bytes(client.inbuf[:end]).decode("latin-1")
            del client.inbuf[:end + 4]
            self._handshake(client, request)
            if not client.handshaken:
                return
        while True:
            frame = _ws_parse(client.inbuf)
            if frame is None:
                return
            opcode, fin, payload = frame
            if opcode in (0x1, 0x0):
                if opcode == 0x1 and client.fragments:
                    raise _WsProtocolError("interleaved text frames")
                if opcode == 0x0 and not client.fragments:
                    raise _WsProtocolError("continuation without start")
                client.fragments.append(payload)
                if fin:
                    message = b"".join(client.fragments)
                    client.fragments.clear()
                    self._submit(client, message)
            elif opcode == 0x9:
                self._send(client, _ws_frame(payload, opcode=0xA))
            elif opcode == 0xA:
                pass
            elif opcode == 0x8:
                # closing must be set before the echo so the write path
                # drops the connection the moment the echo flushes
                client.closing = True
                self._send(client, _ws_frame(payload[:2], opcode=0x8))
                return
            else:
                raise _WsProtocolError(f"unsupported opcode {opcode}")

    def _handshake(self, client: _Client, request: str) -> None:
        lines = request.split("\r\n")
        headers = {}
        for line in lines[1:]:
            name, sep, value = line.partition(":")
            if sep:
                headers[name.strip().lower()] = value.strip()
        key = headers.get("sec-websocket-key")
        if (
            not lines or not lines[0].startswith("GET")
            or "websocket" not in headers.get("upgrade", "").lower()
            or key is None
        ):
            client.closing = True
            self._send(client, b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {_ws_accept_key(key)}\r\n"
            "\r\n"
        )
        self._send(client, response.encode("ascii"))
        client.handshaken = True

    def _submit(self, client: _Client, raw: bytes) -> None:
        """One inbound message becomes exactly one queue entry, in order."""
        try:
            data = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._queue.append((client, None, _PARSE))
            return
        try:
            cmd = decode_command(data)
        except DecodeError as e:
            self._queue.append((client, None, str(e)))
            return
        if cmd.kind is CommandKind.TWIST:
            # joystick streams: a newer twist makes every queued one stale;
            # the stale entries keep their slots so ack order still holds
            self._queue = [
                (c, None, _SUPERSEDED)
                if q is not None and q.kind is CommandKind.TWIST
                else (c, q, v)
                for c, q, v in self._queue
            ]
        self._queue.append((client, cmd, None))

    # -- command application

    def drain(self, world) -> int:
        """Apply queued commands in arrival order; ack each to its sender."""
        applied = 0
        for client, cmd, verdict in self._queue:
            if cmd is not None:
                accepted, reason = world.apply_command(cmd)
                applied += 1
            elif verdict == _PARSE:
                accepted, reason = False, "parse"
            elif verdict == _SUPERSEDED:
                accepted, reason = True, "superseded"
            else:
                accepted, reason = False, verdict
            if client.sock in self._clients and not client.closing:
                self._send_text(client, encode_ack(accepted, reason))
        self._queue.clear()
        return applied

    def reject_pending(self, reason: str) -> int:
        """Ack every queued command as refused without touching a world.

        Read-only sessions (as-fast-as-possible serve, log replay) still owe
        each inbound message its ack. Parse failures keep their own reason.
        """
        rejected = 0
        for client, cmd, verdict in self._queue:
            text = encode_ack(False, "parse" if verdict == _PARSE else reason)
            if client.sock in self._clients and not client.closing:
                self._send_text(client, text)
            rejected += 1
        self._queue.clear()
        return rejected

    # -- writing

    def broadcast(self, record: TelemetryRecord) -> None:
        line = encode_record(record)
        for client in list(self._clients.values()):
            if not client.handshaken or client.closing:
                continue
            if client.pending_frames >= self.max_pending:
                self._drop(client.sock)
                continue
            client.pending_frames += 1
            self._send_text(client, line, counts_as_frame=True)

    def _send_text(self, client: _Client, text: str, counts_as_frame: bool = False) -> None:
        if client.kind == "tcp":
            payload = text.encode("utf-8") + b"\n"
        else:
            payload = _ws_frame(text.encode("utf-8"))
        self._send(client, payload, counts_as_frame)

    def _send(self, client: _Client, payload: bytes, counts_as_frame: bool = False) -> None:
        client.outbuf.append((payload, counts_as_frame))
        self._write(client)

    def _write(self, client: _Client) -> None:
        while client.outbuf:
            chunk, is_frame = client.outbuf[0]
            try:
                sent = client.sock.send(chunk)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                self._drop(client.sock)
                return
            if sent < len(chunk):
                client.outbuf[0] = (chunk[sent:], is_frame)
                break
            client.outbuf.popleft()
            if is_frame:
                client.pending_frames -= 1
        if client.closing and not client.outbuf:
            self._drop(client.sock)
            return
        if client.sock in self._clients:
            self._interest(client)
