"""Client side of the external-policy adapter protocol.

The engine talks newline-delimited JSON to a policy process, either over the
stdin/stdout of a child process or over a local TCP socket. See
``protocol.md`` at the repository root for the exact records.
"""
from __future__ import annotations

import json
import logging
import queue
import shlex
import socket
import subprocess
import threading
import time
from typing import IO, Iterable, Optional, Sequence

from .core import Action

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 1000

_EOF = object()


class AdapterError(RuntimeError):
    """The adapter died, timed out, or failed the handshake."""


class HandshakeError(AdapterError):
    pass


class AdapterTimeout(AdapterError):
    pass


class LineChannel:
    """Line-oriented JSON transport with a per-read deadline.

    A daemon thread drains the read side into a queue so that reads can time
    out without blocking on the underlying pipe or socket.
    """

    def __init__(self, reader: IO[bytes], writer: IO[bytes]) -> None:
        self._writer = writer
        self._lines: "queue.Queue[object]" = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(reader,), daemon=True)
        self._thread.start()

    def _pump(self, reader: IO[bytes]) -> None:
        try:
            for raw in reader:
                self._lines.put(raw)
        except (OSError, ValueError):
            pass
        finally:
            self._lines.put(_EOF)

    def send(self, records: Iterable[dict]) -> None:
        payload = b"".join(json.dumps(r, separators=(",", ":")).encode() + b"\n" for r in records)
        try:
            self._writer.write(payload)
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise AdapterError(f"adapter closed its input: {exc}") from exc

    def recv_line(self, deadline: float) -> bytes:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise AdapterTimeout("adapter reply timed out")
        try:
            item = self._lines.get(timeout=remaining)
        except queue.Empty:
            raise AdapterTimeout("adapter reply timed out") from None
        if item is _EOF:
            self._lines.put(_EOF)
            raise AdapterError("adapter closed its output")
        return item  # type: ignore[return-value]


class ExternalPolicy:
    """A connected, handshaken external policy.

    Use :meth:`spawn` for a child process or :meth:`connect` for a socket.
    """

    def __init__(
        self,
        channel: LineChannel,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        closer=None,
    ) -> None:
        self.channel = channel
        self.timeout_ms = timeout_ms
        self._closer = closer
        self.ready = False

    @classmethod
    def spawn(cls, command, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> "ExternalPolicy":
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise AdapterError(f"cannot start adapter {argv!r}: {exc}") from exc
        policy = cls(LineChannel(proc.stdout, proc.stdin), timeout_ms, closer=lambda: _stop_process(proc))
        policy.process = proc
        return policy

    @classmethod
    def connect(cls, host: str, port: int, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> "ExternalPolicy":
        sock = socket.create_connection((host, port), timeout=timeout_ms / 1000)
        sock.settimeout(None)
        reader, writer = sock.makefile("rb"), sock.makefile("wb")

        def closer():
            # shutdown first: it wakes the pump thread blocked in a read
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            for fh in (writer, reader):
                fh.close()
            sock.close()

        return cls(LineChannel(reader, writer), timeout_ms, closer=closer)

    def handshake(self, fov_w: int, fov_h: int, map_w: int, map_h: int) -> None:
        self.channel.send(
            [
                {
                    "type": "hello",
                    "protocol_version": PROTOCOL_VERSION,
                    "fov_w": fov_w,
                    "fov_h": fov_h,
                    "map_w": map_w,
                    "map_h": map_h,
                }
            ]
        )
        raw = self.channel.recv_line(time.monotonic() + self.timeout_ms / 1000)
        try:
            reply = json.loads(raw)
        except ValueError as exc:
            raise HandshakeError(f"unparseable handshake reply: {raw!r}") from exc
        if not isinstance(reply, dict) or reply.get("type") != "hello":
            raise HandshakeError(f"unexpected handshake reply: {reply!r}")
        if reply.get("protocol_version") != PROTOCOL_VERSION:
            raise HandshakeError(
                f"adapter speaks protocol {reply.get('protocol_version')!r}, engine speaks {PROTOCOL_VERSION}"
            )
        self.ready = True

    def step(self, observations: Sequence[dict]) -> dict[int, Action]:
        """Send one request per observation and collect one reply per request.

        Unparseable replies, unknown agent ids and invalid actions are logged
        and the affected agents Stay. Fewer replies than requests within the
        timeout raises :class:`AdapterTimeout`.
        """
        if not self.ready:
            raise AdapterError("handshake has not completed")
        wanted = [int(o["agent_id"]) for o in observations]
        actions = {aid: Action.STAY for aid in wanted}
        if not observations:
            return actions
        self.channel.send(observations)
        deadline = time.monotonic() + self.timeout_ms / 1000
        answered: set[int] = set()
        for _ in wanted:
            raw = self.channel.recv_line(deadline)
            try:
                reply = json.loads(raw)
                aid = int(reply["agent_id"])
                action = Action(reply["action"])
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("malformed adapter reply %r (%s); affected agent stays", raw, exc)
                continue
            if aid not in actions or aid in answered:
                log.warning("adapter replied for unexpected agent %d; ignored", aid)
                continue
            answered.add(aid)
            actions[aid] = action
        for aid in wanted:
            if aid not in answered:
                log.warning("no valid adapter reply for agent %d; it stays", aid)
        return actions

    def close(self) -> None:
        if self._closer is not None:
            self._closer()
            self._closer = None

    def __enter__(self) -> "ExternalPolicy":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _stop_process(proc: subprocess.Popen) -> None:
    # close stdin so a well-behaved adapter exits; kill it otherwise. stdout is
    # closed last because the pump thread may still be blocked reading it.
    try:
        if proc.stdin is not None:
            proc.stdin.close()
    except OSError:
        pass
    try:
        proc.wait(timeout=1)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()
    if proc.stdout is not None:
        proc.stdout.close()


def external_policy_step(conn: ExternalPolicy, observations: Sequence[dict]) -> dict[int, Action]:
    return conn.step(observations)


def serve_stdio(decide, stdin: Optional[IO[str]] = None, stdout: Optional[IO[str]] = None) -> None:
    """Run a policy over stdin/stdout; a small helper for writing adapters.

    ``decide(obs) -> str`` maps an observation record to one of ``U D L R S``.
    """
    import sys

    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        if msg.get("type") == "hello":
            reply = {"type": "hello", "protocol_version": PROTOCOL_VERSION}
        else:
            reply = {"agent_id": msg["agent_id"], "action": decide(msg)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
