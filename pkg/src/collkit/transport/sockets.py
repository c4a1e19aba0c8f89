"""Socket transport: one endpoint per rank over TCP streams.

Rendezvous is a plain-text host file with one ``rank host port`` line per
rank; no rank coordinates membership. Frames are a 16-byte little-endian
header (u32 src, u32 dst, u32 tag, u32 payload_len) followed by the
payload. Each endpoint accepts connections from higher ranks and dials
lower ranks, retrying until the connect timeout elapses.
"""
from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from ..errors import PeerUnreachable, Timeout
from .base import ChannelStore, check_payload

FRAME_HEADER = struct.Struct("<IIII")
DEFAULT_CONNECT_TIMEOUT = 30.0


@dataclass(frozen=True)
class HostEntry:
    rank: int
    host: str
    port: int


def parse_host_file(path) -> list[HostEntry]:
    """Read ``rank host port`` lines; '#' starts a comment."""
    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'rank host port', got {raw!r}")
            entries.append(HostEntry(int(parts[0]), parts[1], int(parts[2])))
    entries.sort(key=lambda e: e.rank)
    if [e.rank for e in entries] != list(range(len(entries))):
        raise ValueError(f"{path}: ranks must be exactly 0..{len(entries) - 1}")
    return entries


def write_host_file(path, entries) -> None:
    with open(path, "w") as fh:
        for e in sorted(entries, key=lambda e: e.rank):
            fh.write(f"{e.rank} {e.host} {e.port}\n")


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the stream")
        buf.extend(chunk)
    return bytes(buf)


class SocketEndpoint:
    """The transport endpoint owned by one rank.

    ``recv_timeout`` (seconds) bounds how long a receive may block; ``None``
    blocks indefinitely. Construction blocks until the full mesh to all
    peers is up or ``connect_timeout`` passes.
    """

    def __init__(
        self,
        rank: int,
        hosts: list[HostEntry],
        *,
        connect_timeout: float = DEFAULT_CONNECT_TIMEOUT,
        recv_timeout: float | None = None,
        listener: socket.socket | None = None,
    ):
        self.rank = rank
        self.hosts = sorted(hosts, key=lambda e: e.rank)
        self.size = len(self.hosts)
        self.recv_timeout = recv_timeout
        self._cond = threading.Condition()
        self._store = ChannelStore()
        self._dead: set[int] = set()
        self._closing = False
        self._socks: dict[int, socket.socket] = {}
        self._out: dict[int, queue.Queue] = {}
        self._threads: list[threading.Thread] = []

        if listener is None:
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((self.hosts[rank].host, self.hosts[rank].port))
            listener.listen(self.size)
        self._listener = listener

        expected_inbound = self.size - 1 - rank
        accept_err: list[BaseException] = []

        def acceptor() -> None:
            try:
                self._listener.settimeout(connect_timeout)
                for _ in range(expected_inbound):
                    sock, _addr = self._listener.accept()
                    peer = struct.unpack("<I", _read_exact(sock, 4))[0]
                    self._register_peer(peer, sock)
            except BaseException as exc:  # noqa: BLE001 - surfaced below
                accept_err.append(exc)

        accept_thread = threading.Thread(target=acceptor, daemon=True)
        accept_thread.start()

        for peer in range(rank):
            self._register_peer(peer, self._dial(peer, connect_timeout))

        accept_thread.join(timeout=connect_timeout + 1.0)
        if accept_thread.is_alive() or accept_err:
            self.close()
            raise PeerUnreachable(
                f"rank {rank}: mesh setup failed ({accept_err or 'accept timeout'})"
            )

    def _dial(self, peer: int, timeout: float) -> socket.socket:
        entry = self.hosts[peer]
        deadline = time.monotonic() + timeout
        while True:
            try:
                sock = socket.create_connection((entry.host, entry.port), timeout=2.0)
                sock.sendall(struct.pack("<I", self.rank))
                return sock
            except OSError as exc:
                if time.monotonic() >= deadline:
                    raise PeerUnreachable(
                        f"rank {self.rank}: cannot reach rank {peer} at "
                        f"{entry.host}:{entry.port} ({exc})"
                    ) from exc
                time.sleep(0.05)

    def _register_peer(self, peer: int, sock: socket.socket) -> None:
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with self._cond:
            self._socks[peer] = sock
            self._out[peer] = queue.Queue()
        reader = threading.Thread(target=self._read_loop, args=(peer, sock), daemon=True)
        writer = threading.Thread(target=self._write_loop, args=(peer, sock), daemon=True)
        self._threads += [reader, writer]
        reader.start()
        writer.start()

    def _read_loop(self, peer: int, sock: socket.socket) -> None:
        try:
            while True:
                src, dst, tag, length = FRAME_HEADER.unpack(_read_exact(sock, 16))
                payload = _read_exact(sock, length) if length else b""
                if dst != self.rank:
                    raise ConnectionError(f"misrouted frame for rank {dst}")
                with self._cond:
                    self._store.put(src, dst, tag, payload)
                    self._cond.notify_all()
        except (ConnectionError, OSError):
            with self._cond:
                self._dead.add(peer)
                self._cond.notify_all()

    def _write_loop(self, peer: int, sock: socket.socket) -> None:
        q = self._out[peer]
        try:
            while True:
                item = q.get()
                if item is None:
                    return
                sock.sendall(item)
        except OSError:
            with self._cond:
                self._dead.add(peer)
                self._cond.notify_all()

    def send(self, dst: int, tag: int, payload: bytes) -> None:
        check_payload(self.rank, dst, tag, payload)
        with self._cond:
            if dst in self._dead or dst not in self._out:
                raise PeerUnreachable(f"rank {dst} is unreachable")
            frame = FRAME_HEADER.pack(self.rank, dst, tag, len(payload)) + payload
            self._out[dst].put(frame)

    def recv(self, src: int, tag: int) -> bytes:
        deadline = (
            time.monotonic() + self.recv_timeout if self.recv_timeout is not None else None
        )
        with self._cond:
            while True:
                data = self._store.try_pop(src, self.rank, tag)
                if data is not None:
                    return data
                if src in self._dead:
                    raise PeerUnreachable(f"rank {src} is unreachable")
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise Timeout(
                            f"recv(src={src}, tag={tag}) timed out after "
                            f"{self.recv_timeout}s"
                        )
                    self._cond.wait(remaining)

    def close(self) -> None:
        with self._cond:
            if self._closing:
                return
            self._closing = True
        for q in self._out.values():
            q.put(None)
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        try:
            self._listener.close()
        except OSError:
            pass

    def max_in_flight(self) -> int:
        with self._cond:
            return self._store.max_in_flight()


def local_listeners(count: int, host: str = "127.0.0.1"):
    """Bind ``count`` listeners on OS-assigned ports; returns (listeners,
    host entries). Lets tests and single-host runs avoid port collisions."""
    listeners = []
    entries = []
    for rank in range(count):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, 0))
        sock.listen(count)
        listeners.append(sock)
        entries.append(HostEntry(rank, host, sock.getsockname()[1]))
    return listeners, entries


def connect_local_mesh(
    count: int, *, connect_timeout: float = 10.0, recv_timeout: float | None = None
) -> list[SocketEndpoint]:
    """Construct a fully meshed set of endpoints on localhost, one per rank
    (endpoints are built concurrently because setup blocks on the mesh)."""
    listeners, entries = local_listeners(count)
    endpoints: list[SocketEndpoint | None] = [None] * count
    errors: list[BaseException] = []

    def build(rank: int) -> None:
        try:
            endpoints[rank] = SocketEndpoint(
                rank,
                entries,
                connect_timeout=connect_timeout,
                recv_timeout=recv_timeout,
                listener=listeners[rank],
            )
        except BaseException as exc:  # noqa: BLE001 - surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=build, args=(r,), daemon=True) for r in range(count)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=connect_timeout + 5.0)
    if errors or any(e is None for e in endpoints):
        for e in endpoints:
            if e is not None:
                e.close()
        raise errors[0] if errors else PeerUnreachable("mesh setup incomplete")
    return endpoints
