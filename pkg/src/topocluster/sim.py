"""Seeded discrete-event network simulator.

One event loop owns every piece of state. Node logic runs inside event
callbacks, so nothing here is thread-safe and nothing needs to be.

Connections behave like TCP streams: FIFO per direction, optional
per-connection serialization delay (``max_in_flight_bandwidth`` bytes per
virtual second), frames in flight are lost when a connection breaks
abruptly (partition, crash) but flushed before a graceful close.

A node's pending-accept queue holds at most ``accept_queue_capacity``
handshakes; it is drained every ``accept_interval`` up to ``accept_rate``
entries at a time. Handshakes arriving at a full queue are refused and the
initiator learns it after ``connect_timeout``.
"""

from __future__ import annotations

import hashlib
import heapq
import io
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Protocol, TextIO

PENDING, OPEN, CLOSING, CLOSED = "pending", "open", "closing", "closed"

EVENT_KINDS = ("connect", "accept", "refuse", "frame_sent", "frame_delivered",
               "frame_dropped", "disconnect", "partition", "heal", "crash", "restart")


class ClosedConnection(RuntimeError):
    """Send on a connection that is closed or whose generation is stale."""


class UnknownNode(KeyError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    default_rtt: float = 0.001
    per_link_rtt: Mapping[tuple[str, str], float] = field(default_factory=dict)
    drop_rate: float = 0.0
    accept_queue_capacity: int = 128
    max_in_flight_bandwidth: Optional[float] = None
    accept_interval: float = 0.001
    accept_rate: int = 64
    connect_timeout: float = 0.25
    jitter: float = 0.0
    record_events: bool = True

    def __post_init__(self):
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")
        if self.accept_queue_capacity < 1:
            raise ValueError("accept_queue_capacity must be >= 1")
        if self.default_rtt < 0:
            raise ValueError("default_rtt must be >= 0")
        if self.max_in_flight_bandwidth is not None and self.max_in_flight_bandwidth <= 0:
            raise ValueError("max_in_flight_bandwidth must be positive")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must be in [0, 1)")
        if self.accept_interval <= 0 or self.accept_rate < 1:
            raise ValueError("accept queue must drain")


@dataclass(frozen=True, order=True)
class ConnectionId:
    src: str
    dst: str
    channel: str
    slot: int
    generation: int

    def peer_of(self, node: str) -> str:
        return self.dst if node == self.src else self.src


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    src: str = ""
    dst: str = ""
    channel: str = ""
    slot: int = -1
    size: int = 0
    detail: str = ""

    def line(self) -> str:
        return (f"{self.time:.9f}\t{self.kind}\t{self.src}\t{self.dst}\t"
                f"{self.channel}\t{self.slot}\t{self.size}\t{self.detail}")


class Trace:
    """Ordered event record with a running SHA-256 over the exported lines."""

    def __init__(self, keep_events: bool = True):
        self.keep_events = keep_events
        self.events: list[SimEvent] = []
        self.counts: Counter = Counter()
        self._hash = hashlib.sha256()
        self._last_time = -math.inf

    def record(self, event: SimEvent) -> None:
        if event.time < self._last_time:
            raise AssertionError("trace times must be non-decreasing")
        self._last_time = event.time
        self.counts[event.kind] += 1
        self._hash.update(event.line().encode("utf-8"))
        self._hash.update(b"\n")
        if self.keep_events:
            self.events.append(event)

    def hexdigest(self) -> str:
        return self._hash.hexdigest()

    def of_kind(self, *kinds: str) -> list[SimEvent]:
        return [e for e in self.events if e.kind in kinds]

    def export(self, out: TextIO) -> None:
        if not self.keep_events:
            raise ValueError("trace was recorded without events; only the hash is available")
        for e in self.events:
            out.write(e.line())
            out.write("\n")
        out.write(f"trace_hash={self.hexdigest()}\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.export(buf)
        return buf.getvalue()


class TransportHandler(Protocol):
    """Callbacks a node registers with the transport."""

    def on_connected(self, conn: ConnectionId) -> None: ...
    def on_accepted(self, conn: ConnectionId) -> None: ...
    def on_connect_failed(self, conn: ConnectionId, reason: str) -> None: ...
    def on_frame(self, conn: ConnectionId, frame: bytes, sender: str) -> None: ...
    def on_disconnected(self, conn: ConnectionId) -> None: ...


class ConnectionCache:
    """Open outbound connections of one node, keyed by (peer, channel, slot).

    Entries are replaced whole, so a reader sees either the old or the new
    generation.
    """

    def __init__(self):
        self._conns: dict[tuple[str, str, int], ConnectionId] = {}

    def lookup(self, peer: str, channel: str, slot: int) -> Optional[ConnectionId]:
        return self._conns.get((peer, channel, slot))

    def _put(self, conn: ConnectionId) -> None:
        self._conns[(conn.dst, conn.channel, conn.slot)] = conn

    def _drop(self, conn: ConnectionId) -> None:
        key = (conn.dst, conn.channel, conn.slot)
        if self._conns.get(key) == conn:
            del self._conns[key]

    def __len__(self) -> int:
        return len(self._conns)

    def items(self):
        return list(self._conns.items())


class Timer:
    __slots__ = ("time", "fn", "args", "owner", "cancelled")

    def __init__(self, time: float, fn: Callable, args: tuple, owner: Optional[str]):
        self.time, self.fn, self.args, self.owner = time, fn, args, owner
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class _Link:
    __slots__ = ("cid", "state", "busy", "last_arrival", "fail_reason")

    def __init__(self, cid: ConnectionId):
        self.cid = cid
        self.state = PENDING
        self.busy = {cid.src: 0.0, cid.dst: 0.0}
        self.last_arrival = {cid.src: 0.0, cid.dst: 0.0}
        self.fail_reason = "timeout"


class _Node:
    __slots__ = ("name", "handler", "alive", "accept_queue", "drain_pending", "cache")

    def __init__(self, name: str, handler: TransportHandler):
        self.name = name
        self.handler = handler
        self.alive = True
        self.accept_queue: deque[_Link] = deque()
        self.drain_pending = False
        self.cache = ConnectionCache()


class Simulator:
    def __init__(self, config: Optional[SimConfig] = None):
        self.config = config or SimConfig()
        self.rng = random.Random(self.config.seed)
        self.trace = Trace(keep_events=self.config.record_events)
        self.bytes_sent: Counter = Counter()
        self.bytes_received: Counter = Counter()
        self._now = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, Timer]] = []
        self._nodes: dict[str, _Node] = {}
        self._links: dict[ConnectionId, _Link] = {}
        self._generations: Counter = Counter()
        self._groups: dict[str, int] = {}
        self._collect: Optional[list[SimEvent]] = None

    # -- clock and scheduling ---------------------------------------------

    @property
    def now(self) -> float:
        return self._now

    def call_at(self, time: float, fn: Callable, *args: Any, owner: Optional[str] = None) -> Timer:
        if time < self._now:
            time = self._now
        timer = Timer(time, fn, args, owner)
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, timer))
        return timer

    def schedule(self, delay: float, fn: Callable, *args: Any, owner: Optional[str] = None) -> Timer:
        return self.call_at(self._now + max(0.0, delay), fn, *args, owner=owner)

    def every(self, interval: float, fn: Callable, *, owner: Optional[str] = None,
              phase: float = 0.0) -> Timer:
        """Run ``fn`` at ``start + phase + k * interval``; cancel the returned timer to stop."""
        if interval <= 0:
            raise ValueError("interval must be positive")
        start = self._now + phase
        handle = Timer(start, fn, (), owner)

        def tick(k: int) -> None:
            if handle.cancelled:
                return
            fn()
            self.call_at(start + (k + 1) * interval, tick, k + 1, owner=owner)

        self.call_at(start, tick, 0, owner=owner)
        return handle

    def pending_events(self) -> int:
        return sum(1 for _, _, t in self._heap if not t.cancelled)

    def advance(self, until: float) -> list[SimEvent]:
        """Process every event with time <= ``until``; return frame deliveries seen."""
        if until < self._now:
            raise ValueError("cannot advance backwards")
        delivered: list[SimEvent] = []
        outer, self._collect = self._collect, delivered
        try:
            heap = self._heap
            while heap and heap[0][0] <= until:
                time, _, timer = heapq.heappop(heap)
                if timer.cancelled:
                    continue
                self._now = time
                if timer.owner is not None:
                    node = self._nodes.get(timer.owner)
                    if node is not None and not node.alive:
                        continue
                timer.fn(*timer.args)
            self._now = until
        finally:
            self._collect = outer
            if outer is not None:
                outer.extend(delivered)
        return delivered

    def run_for(self, duration: float) -> list[SimEvent]:
        return self.advance(self._now + duration)

    def run_until(self, predicate: Callable[[], bool], timeout: float, step: float = 0.01) -> bool:
        """Advance in ``step`` increments until ``predicate()`` holds or ``timeout`` elapses."""
        deadline = self._now + timeout
        while not predicate():
            if self._now >= deadline:
                return False
            self.advance(min(deadline, self._now + step))
        return True

    # -- topology --------------------------------------------------------------

    def add_node(self, name: str, handler: TransportHandler) -> ConnectionCache:
        if name in self._nodes:
            raise ValueError(f"node {name!r} already exists")
        node = _Node(name, handler)
        self._nodes[name] = node
        return node.cache

    def set_handler(self, name: str, handler: TransportHandler) -> None:
        self._node(name).handler = handler

    def nodes(self) -> list[str]:
        return list(self._nodes)

    def is_alive(self, name: str) -> bool:
        return self._node(name).alive

    def cache(self, name: str) -> ConnectionCache:
        return self._node(name).cache

    def cache_lookup(self, node: str, peer: str, channel: str, slot: int) -> Optional[ConnectionId]:
        return self._node(node).cache.lookup(peer, channel, slot)

    def rng_for(self, name: str) -> random.Random:
        """Independent generator for one node, stable across processes."""
        return random.Random(f"{self.config.seed}/{name}")

    def rtt(self, a: str, b: str) -> float:
        links = self.config.per_link_rtt
        if links:
            v = links.get((a, b))
            if v is None:
                v = links.get((b, a))
            if v is not None:
                return v
        return self.config.default_rtt

    def _one_way(self, a: str, b: str) -> float:
        ow = self.rtt(a, b) / 2.0
        j = self.config.jitter
        if j:
            ow *= 1.0 + self.rng.uniform(-j, j)
        return ow

    def reachable(self, a: str, b: str) -> bool:
        na, nb = self._nodes.get(a), self._nodes.get(b)
        if na is None or nb is None or not na.alive or not nb.alive:
            return False
        ga, gb = self._groups.get(a), self._groups.get(b)
        return ga is None or gb is None or ga == gb

    def _node(self, name: str) -> _Node:
        try:
            return self._nodes[name]
        except KeyError:
            raise UnknownNode(name) from None

    def _record(self, kind: str, src: str = "", dst: str = "", channel: str = "", slot: int = -1,
                size: int = 0, detail: str = "") -> SimEvent:
        ev = SimEvent(self._now, kind, src, dst, channel, slot, size, detail)
        self.trace.record(ev)
        return ev

    # -- connections -----------------------------------------------------------

    def open_connection(self, src: str, dst: str, channel: str, slot: int) -> ConnectionId:
        """Start a handshake. The outcome arrives through the handlers:
        ``on_accepted`` at ``dst``, then ``on_connected`` or ``on_connect_failed`` at ``src``.
        """
        self._node(src)
        self._node(dst)
        key = (src, dst, channel, slot)
        self._generations[key] += 1
        cid = ConnectionId(src, dst, channel, slot, self._generations[key])
        link = _Link(cid)
        self._links[cid] = link
        self._record("connect", src, dst, channel, slot)
        self.schedule(self._one_way(src, dst), self._syn_arrive, link)
        self.schedule(self.config.connect_timeout, self._connect_timeout, link)
        return cid

    def _syn_arrive(self, link: _Link) -> None:
        if link.state != PENDING:
            return
        cid = link.cid
        if not self.reachable(cid.src, cid.dst):
            link.fail_reason = "unreachable"
            return
        node = self._nodes[cid.dst]
        if len(node.accept_queue) >= self.config.accept_queue_capacity:
            link.fail_reason = "refused"
            return
        node.accept_queue.append(link)
        if not node.drain_pending:
            node.drain_pending = True
            self.schedule(self.config.accept_interval, self._drain, node)

    def _drain(self, node: _Node) -> None:
        node.drain_pending = False
        for _ in range(min(self.config.accept_rate, len(node.accept_queue))):
            link = node.accept_queue.popleft()
            cid = link.cid
            if link.state != PENDING:
                continue
            if not self.reachable(cid.src, cid.dst):
                link.fail_reason = "unreachable"
                continue
            link.state = OPEN
            self._record("accept", cid.src, cid.dst, cid.channel, cid.slot)
            node.handler.on_accepted(cid)
            if link.state == OPEN:
                self.schedule(self._one_way(cid.dst, cid.src), self._established, link)
        if node.accept_queue:
            node.drain_pending = True
            self.schedule(self.config.accept_interval, self._drain, node)

    def _established(self, link: _Link) -> None:
        if link.state != OPEN:
            return
        src = self._nodes[link.cid.src]
        if not src.alive:
            return
        src.cache._put(link.cid)
        src.handler.on_connected(link.cid)

    def _connect_timeout(self, link: _Link) -> None:
        if link.state != PENDING:
            return
        link.state = CLOSED
        cid = link.cid
        self._record("refuse", cid.src, cid.dst, cid.channel, cid.slot, detail=link.fail_reason)
        del self._links[cid]
        src = self._nodes[cid.src]
        if src.alive:
            src.handler.on_connect_failed(cid, link.fail_reason)

    def is_open(self, conn: ConnectionId) -> bool:
        link = self._links.get(conn)
        return link is not None and link.state == OPEN

    def open_links(self) -> list[ConnectionId]:
        return [cid for cid, link in self._links.items() if link.state == OPEN]

    def idle_at(self, conn: ConnectionId, sender: Optional[str] = None) -> float:
        """Virtual time at which ``sender``'s direction of ``conn`` finishes serializing."""
        link = self._links.get(conn)
        if link is None:
            return self._now
        return max(self._now, link.busy[sender or conn.src])

    def send(self, conn: ConnectionId, frame: bytes, sender: Optional[str] = None) -> None:
        link = self._links.get(conn)
        sender = sender or conn.src
        if link is None or link.state in (PENDING, CLOSED):
            raise ClosedConnection(conn)
        if sender not in (conn.src, conn.dst):
            raise ValueError(f"{sender!r} is not an endpoint of {conn}")
        if link.state == CLOSING and link.fail_reason == f"closed-by:{sender}":
            raise ClosedConnection(conn)
        receiver = conn.peer_of(sender)
        size = len(frame)
        self.bytes_sent[sender] += size
        self._record("frame_sent", sender, receiver, conn.channel, conn.slot, size)
        if self.config.drop_rate and self.rng.random() < self.config.drop_rate:
            self._record("frame_dropped", sender, receiver, conn.channel, conn.slot, size, "loss")
            return
        start = max(self._now, link.busy[sender])
        bw = self.config.max_in_flight_bandwidth
        done = start + size / bw if bw else start
        link.busy[sender] = done
        arrival = max(done + self._one_way(sender, receiver), link.last_arrival[sender])
        link.last_arrival[sender] = arrival
        self.call_at(arrival, self._arrive, link, frame, sender, receiver)

    def _arrive(self, link: _Link, frame: bytes, sender: str, receiver: str) -> None:
        cid = link.cid
        node = self._nodes[receiver]
        if link.state == CLOSED or not node.alive:
            self._record("frame_dropped", sender, receiver, cid.channel, cid.slot, len(frame),
                         "disconnected")
            return
        self.bytes_received[receiver] += len(frame)
        ev = self._record("frame_delivered", sender, receiver, cid.channel, cid.slot, len(frame))
        if self._collect is not None:
            self._collect.append(ev)
        node.handler.on_frame(cid, frame, sender)

    def close(self, conn: ConnectionId, by: Optional[str] = None) -> None:
        """Graceful close: frames already sent by ``by`` are delivered, then the peer
        sees ``on_disconnected``. The closing side gets no callback."""
        link = self._links.get(conn)
        if link is None or link.state in (CLOSED, CLOSING):
            return
        by = by or conn.src
        if link.state == PENDING:
            link.state = CLOSED
            del self._links[conn]
            return
        link.state = CLOSING
        link.fail_reason = f"closed-by:{by}"
        if by == conn.src:
            self._nodes[conn.src].cache._drop(conn)
        peer = conn.peer_of(by)
        fin = max(self._now + self._one_way(by, peer), link.last_arrival[by])
        self.call_at(fin, self._fin, link, peer)

    def _fin(self, link: _Link, peer: str) -> None:
        if link.state == CLOSED:
            return
        self._finish(link, "close", notify=(peer,))

    def _abort(self, link: _Link, reason: str) -> None:
        cid = link.cid
        self._finish(link, reason, notify=(cid.src, cid.dst))

    def _finish(self, link: _Link, reason: str, notify: Iterable[str]) -> None:
        cid = link.cid
        link.state = CLOSED
        self._links.pop(cid, None)
        self._nodes[cid.src].cache._drop(cid)
        self._record("disconnect", cid.src, cid.dst, cid.channel, cid.slot, detail=reason)
        for name in notify:
            node = self._nodes[name]
            if node.alive:
                node.handler.on_disconnected(cid)

    # -- faults ------------------------------------------------------------------

    def partition(self, *groups: Iterable[str]) -> None:
        """Cut every link between nodes of different groups until ``heal()``.

        Nodes listed in no group keep full connectivity.
        """
        assignment: dict[str, int] = {}
        for i, group in enumerate(groups):
            for name in group:
                self._node(name)
                if name in assignment:
                    raise ValueError(f"node {name!r} appears in more than one group")
                assignment[name] = i
        self._groups = assignment
        detail = "|".join(",".join(sorted(g)) for g in (
            [n for n, i in assignment.items() if i == k] for k in range(len(groups))))
        self._record("partition", detail=detail)
        for link in list(self._links.values()):
            if link.state in (OPEN, CLOSING) and not self.reachable(link.cid.src, link.cid.dst):
                self._abort(link, "partition")

    def heal(self) -> None:
        self._groups = {}
        self._record("heal")

    def crash(self, name: str) -> None:
        node = self._node(name)
        if not node.alive:
            return
        self._record("crash", name)
        node.alive = False
        node.accept_queue.clear()
        for link in list(self._links.values()):
            if name in (link.cid.src, link.cid.dst):
                if link.state in (OPEN, CLOSING):
                    self._abort(link, "crash")
                elif link.state == PENDING:
                    link.fail_reason = "unreachable"

    def restart(self, name: str, handler: Optional[TransportHandler] = None) -> None:
        node = self._node(name)
        node.alive = True
        node.cache = ConnectionCache()
        if handler is not None:
            node.handler = handler
        self._record("restart", name)

    def trace_hash(self) -> str:
        return self.trace.hexdigest()
