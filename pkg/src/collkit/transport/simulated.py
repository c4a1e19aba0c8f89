"""Simulated transport: runs real per-rank code under a virtual clock.

Rank callables execute as cooperatively stepped tasks. A rank runs until it
blocks on a receive; once every live rank is blocked, the messages posted
since the previous boundary form one synchronous step, the step is priced
with the same rules as the schedule simulator (communication charges only;
reductions performed by rank code are real numpy work and are not priced
here), the virtual clock advances by the step makespan, and the messages
become receivable. Delivery and matching follow the same exactly-once FIFO
contract as the other backends, so collective outputs are identical.

Deterministic: step grouping depends only on where ranks block, never on
thread interleaving.
"""
from __future__ import annotations

import threading

from ..costmodel import CostParams
from ..errors import IndexOutOfRange, PeerUnreachable
from ..simnet import SimConfig, StepCoster
from ..topology import Topology
from .base import ChannelStore, Communicator, MessageLog, check_payload


class VirtualTransport:
    def __init__(
        self,
        topo: Topology,
        params: CostParams | None = None,
        *,
        nic_policy: str = "balanced",
        phys_topology: str = "fully_connected",
    ):
        self.topo = topo
        self.num_ranks = topo.world_size
        config = SimConfig(
            topo=topo,
            params=params or CostParams(),
            nic_policy=nic_policy,
            phys_topology=phys_topology,
        )
        self._coster = StepCoster(config)
        self._lock = threading.Lock()
        self._coord = threading.Condition(self._lock)
        self._ranks_cv = threading.Condition(self._lock)
        self._store = ChannelStore()
        self._pending: list[tuple[int, int, int, bytes]] = []
        self._waiting: dict[int, tuple[int, int]] = {}
        self._runnable: set[int] = set()
        self._running = 0
        self._alive = 0
        self._failed = False
        self._deadlocked = False
        self.virtual_seconds = 0.0
        self.steps = 0
        self.log: MessageLog | None = None

    @property
    def counters(self):
        return self._coster.counters

    def start_logging(self) -> MessageLog:
        self.log = MessageLog()
        return self.log

    def endpoint(self, rank: int) -> "VirtualEndpoint":
        if not 0 <= rank < self.num_ranks:
            raise IndexOutOfRange(f"rank {rank} not in [0, {self.num_ranks})")
        return VirtualEndpoint(self, rank)

    def max_in_flight(self) -> int:
        with self._lock:
            return self._store.max_in_flight()

    def run(self, fns) -> list:
        """Execute one callable per rank (``fn(comm)``) to completion and
        return per-rank results. The transport is single-use."""
        if len(fns) != self.num_ranks:
            raise ValueError(f"need {self.num_ranks} rank functions, got {len(fns)}")
        results: list = [None] * self.num_ranks
        errors: list[tuple[int, BaseException]] = []

        def runner(rank: int, fn) -> None:
            comm = Communicator(self.endpoint(rank), range(self.num_ranks))
            try:
                results[rank] = fn(comm)
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                errors.append((rank, exc))
            finally:
                with self._lock:
                    self._alive -= 1
                    self._running -= 1
                    if self._running == 0:
                        self._coord.notify()

        self._alive = self._running = self.num_ranks
        threads = [
            threading.Thread(target=runner, args=(r, fn), daemon=True)
            for r, fn in enumerate(fns)
        ]
        for t in threads:
            t.start()
        self._drive()
        for t in threads:
            t.join(timeout=10.0)
        # Prefer root causes over the secondary aborts of stranded peers.
        real_errors = [e for e in errors if not isinstance(e[1], PeerUnreachable)]
        if real_errors:
            raise min(real_errors, key=lambda e: e[0])[1]
        if self._deadlocked:
            raise RuntimeError("virtual transport deadlocked: no rank can progress")
        if errors:
            raise min(errors, key=lambda e: e[0])[1]
        return results

    def _drive(self) -> None:
        with self._lock:
            while self._alive > 0:
                while self._running > 0:
                    self._coord.wait()
                if self._alive == 0:
                    break
                if self._pending:
                    step = self._pending
                    self._pending = []
                    makespan, _ = self._coster.charge_step(
                        [(s, d, len(p)) for s, d, _t, p in step]
                    )
                    self.virtual_seconds += makespan
                    self.steps += 1
                    for s, d, t, p in step:
                        self._store.put(s, d, t, p)
                woke = [
                    r
                    for r, (src, tag) in self._waiting.items()
                    if self._store.has(src, r, tag)
                ]
                if woke:
                    self._runnable.update(woke)
                    self._running += len(woke)
                    self._ranks_cv.notify_all()
                else:
                    # Every live rank waits on a message nobody can send.
                    self._deadlocked = True
                    self._failed = True
                    self._ranks_cv.notify_all()
                    while self._alive > 0:
                        self._coord.wait()
                    break

    # endpoint plumbing

    def _send(self, src: int, dst: int, tag: int, payload: bytes) -> None:
        check_payload(src, dst, tag, payload)
        if not 0 <= dst < self.num_ranks:
            raise IndexOutOfRange(f"dst {dst} not in [0, {self.num_ranks})")
        if self.log is not None:
            self.log.add(src, dst, tag, len(payload))
        with self._lock:
            self._pending.append((src, dst, tag, payload))

    def _recv(self, me: int, src: int, tag: int) -> bytes:
        with self._lock:
            while True:
                if self._failed:
                    raise PeerUnreachable("virtual transport aborted")
                data = self._store.try_pop(src, me, tag)
                if data is not None:
                    return data
                self._waiting[me] = (src, tag)
                self._running -= 1
                if self._running == 0:
                    self._coord.notify()
                while me not in self._runnable and not self._failed:
                    self._ranks_cv.wait()
                self._waiting.pop(me, None)
                if self._failed:
                    self._running += 1  # runner's finally rebalances
                    raise PeerUnreachable("virtual transport aborted")
                self._runnable.discard(me)


class VirtualEndpoint:
    def __init__(self, transport: VirtualTransport, rank: int):
        self.transport = transport
        self.rank = rank

    def send(self, dst: int, tag: int, payload: bytes) -> None:
        self.transport._send(self.rank, dst, tag, payload)

    def recv(self, src: int, tag: int) -> bytes:
        return self.transport._recv(self.rank, src, tag)


def run_ranks_virtual(
    topo: Topology,
    fn,
    params: CostParams | None = None,
    *,
    nic_policy: str = "balanced",
    phys_topology: str = "fully_connected",
) -> tuple[list, VirtualTransport]:
    """Run ``fn(comm)`` per rank under virtual time; returns (results,
    transport) so callers can read the clock and counters."""
    vt = VirtualTransport(
        topo, params, nic_policy=nic_policy, phys_topology=phys_topology
    )
    results = vt.run([fn] * topo.world_size)
    return results, vt
