"""TCP endpoint and blocking party client."""

from __future__ import annotations

import asyncio
import itertools
import socket
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .frames import FrameError, frame_length
from .protocol import EnvironmentCore, PartyClient, PartyOutcome


class TransportError(Exception):
    pass


@dataclass(frozen=True)
class ListenConfig:
    host: str = "127.0.0.1"
    port: int = 0

    @classmethod
    def parse(cls, spec: str) -> ListenConfig:
        host, _, port = spec.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"expected host:port, got {spec!r}")
        return cls(host, int(port))


async def _read_frame(reader: asyncio.StreamReader) -> bytes:
    prefix = await reader.readexactly(4)
    length = frame_length(prefix)
    return prefix + await reader.readexactly(length)


class RunningEndpoint:
    """A listening environment; frames from all connections run through one worker thread."""

    def __init__(self, core: EnvironmentCore, config: ListenConfig):
        self.core = core
        self._config = config
        self._loop = asyncio.new_event_loop()
        self._worker = ThreadPoolExecutor(max_workers=1, thread_name_prefix="tcme-session")
        self._writers: dict[int, asyncio.StreamWriter] = {}
        self._ids = itertools.count()
        self._ready = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self.finished = asyncio.Event()
        self.address: tuple[str, int] | None = None
        self._server = None

    def start(self) -> RunningEndpoint:
        self._thread.start()
        self._ready.wait()
        return self

    def _run(self):
        asyncio.set_event_loop(self._loop)
        self._server = self._loop.run_until_complete(
            asyncio.start_server(self._handle, self._config.host, self._config.port)
        )
        self.address = self._server.sockets[0].getsockname()[:2]
        self._ready.set()
        self._loop.run_forever()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        conn = next(self._ids)
        self._writers[conn] = writer
        loop = asyncio.get_running_loop()
        try:
            while conn in self._writers:
                try:
                    data = await _read_frame(reader)
                except FrameError as exc:
                    outs = await loop.run_in_executor(self._worker, self.core.on_frame, conn, _bad_prefix(exc))
                    await self._dispatch(outs)
                    break
                outs = await loop.run_in_executor(self._worker, self.core.on_frame, conn, data)
                await self._dispatch(outs)
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        finally:
            self._writers.pop(conn, None)
            self.core.connection_lost(conn)
            writer.close()

    async def _dispatch(self, outs):
        for out in outs:
            writer = self._writers.get(out.conn)
            if writer is None:
                continue
            writer.write(out.data)
            await writer.drain()
            if out.close:
                self._writers.pop(out.conn, None)
                writer.close()
        if not len(self.core.registry):
            self.finished.set()

    def wait_idle(self, timeout: float | None = None) -> bool:
        """Block until no registered session is left waiting."""
        fut = asyncio.run_coroutine_threadsafe(asyncio.wait_for(self.finished.wait(), timeout), self._loop)
        try:
            fut.result()
            return True
        except asyncio.TimeoutError:
            return False

    def close(self):
        if self._server is not None:
            self._loop.call_soon_threadsafe(self._server.close)
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join(timeout=5)
        self._worker.shutdown(wait=False)


def _bad_prefix(exc: FrameError) -> bytes:
    # feed the core something that fails decoding the same way, so it answers ERROR
    return b"\xff\xff\xff\xff" if "exceeds" in str(exc) else b"\x00\x00\x00\x00"


def serve(config: ListenConfig, core: EnvironmentCore) -> RunningEndpoint:
    return RunningEndpoint(core, config).start()


def join(host: str, port: int, client: PartyClient, timeout: float = 30.0) -> PartyOutcome:
    """Run one party to completion over TCP."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from None
    with sock:
        try:
            for data in client.start():
                sock.sendall(data)
            while not client.done:
                prefix = _recv_exact(sock, 4)
                body = _recv_exact(sock, frame_length(prefix))
                for reply in client.on_frame(prefix + body):
                    sock.sendall(reply)
        except (OSError, FrameError) as exc:
            raise TransportError(f"connection failed: {exc}") from None
    return client.outcome


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("connection closed by environment")
        buf += chunk
    return bytes(buf)
