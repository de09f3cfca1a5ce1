"""Publish-subscribe backend: every frame goes through a broker node.

Queues are named ``"membership"`` (broadcast to every subscriber) and
``"node/<name>"`` (one inbox per node, single subscriber). Nodes only ever
open one outbound connection, to the broker. Channels are not mapped onto
queues: everything for a node lands in its inbox.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional

from .. import codec
from ..service import LEAVE_NAME
from ..sim import ConnectionId
from ..types import DEFAULT_CHANNEL, Envelope, MembershipView, NodeSpec
from .base import Backend

log = logging.getLogger(__name__)

MEMBERSHIP_QUEUE = "membership"
BROADCAST = "broadcast"
SINGLE = "single"


def inbox(name: str) -> str:
    return f"node/{name}"


@dataclass
class Queue:
    name: str
    fanout: str
    subscribers: set[str] = field(default_factory=set)
    # messages not yet handed to a live subscriber
    backlog: deque = field(default_factory=deque)


class Broker:
    """In-simulator queue service. FIFO per queue holds for as long as the
    broker stays up; ``restart()`` drops every queue and connection."""

    def __init__(self, sim, name: str = "broker", record_published: bool = False):
        self.sim = sim
        self.name = name
        self.record_published = record_published
        self.queues: dict[str, Queue] = {}
        self.conns: dict[str, ConnectionId] = {}
        self.dead_letters: deque[tuple[str, bytes]] = deque(maxlen=1024)
        self.stats: Counter = Counter()
        # per-queue publish order, for checking FIFO from the outside (opt-in)
        self.published: dict[str, list[bytes]] = {}
        self.restarts = 0
        self._reset()
        sim.add_node(name, self)

    def _reset(self) -> None:
        self.queues = {MEMBERSHIP_QUEUE: Queue(MEMBERSHIP_QUEUE, BROADCAST)}
        self.conns = {}
        self.published = {}

    def restart(self) -> None:
        self.sim.crash(self.name)
        self.sim.restart(self.name, self)
        self.restarts += 1
        self._reset()

    # -- queue semantics ------------------------------------------------------------

    def subscribe(self, node: str, queue: str) -> None:
        q = self.queues.get(queue)
        if q is None:
            q = self.queues[queue] = Queue(queue, SINGLE)
        if q.fanout == SINGLE and q.subscribers - {node}:
            log.warning("%s: %s already has a subscriber, replacing it", self.name, queue)
            q.subscribers.clear()
        q.subscribers.add(node)
        self._flush(q)

    def unsubscribe(self, node: str) -> None:
        for q in self.queues.values():
            q.subscribers.discard(node)

    def publish(self, queue: str, payload: bytes) -> bool:
        q = self.queues.get(queue)
        if q is None:
            self.stats["dead_letters"] += 1
            self.dead_letters.append((queue, payload))
            return False
        self.stats["published"] += 1
        if self.record_published:
            self.published.setdefault(queue, []).append(payload)
        q.backlog.append(payload)
        self._flush(q)
        return True

    def _flush(self, q: Queue) -> None:
        # the backlog drains in order, so FIFO survives a subscriber reconnecting
        while q.backlog and self._live_subscribers(q):
            self._deliver(q, q.backlog.popleft())

    def _live_subscribers(self, q: Queue) -> list[str]:
        return sorted(s for s in q.subscribers if s in self.conns)

    def _deliver(self, q: Queue, payload: bytes) -> None:
        frame = codec.encode_control("deliver", (q.name, payload))
        for node in self._live_subscribers(q):
            self.sim.send(self.conns[node], frame, self.name)
            self.stats["delivered"] += 1

    # -- transport ----------------------------------------------------------------------

    def on_accepted(self, conn: ConnectionId) -> None:
        old = self.conns.get(conn.src)
        if old is not None and old != conn:
            self.sim.close(old, by=self.name)
        self.conns[conn.src] = conn

    def on_connected(self, conn: ConnectionId) -> None:
        pass

    def on_connect_failed(self, conn: ConnectionId, reason: str) -> None:
        pass

    def on_disconnected(self, conn: ConnectionId) -> None:
        node = conn.peer_of(self.name)
        if self.conns.get(node) == conn:
            del self.conns[node]

    def on_frame(self, conn: ConnectionId, frame: bytes, sender: str) -> None:
        try:
            kind, body = codec.decode_control(frame)
        except codec.MalformedFrame:
            self.stats["malformed"] += 1
            return
        if kind == "subscribe":
            self.subscribe(sender, body)
        elif kind == "publish":
            queue, payload = body
            self.publish(queue, payload)
        else:
            self.stats["malformed"] += 1


class PubSubBackend(Backend):
    kind = "pub_sub"

    def __init__(self, service):
        super().__init__(service)
        self.params = self.config.pubsub
        self.broker = self.params.broker
        self.view = MembershipView([self.local])
        self.last_seen: dict[str, float] = {}
        self.conn: Optional[ConnectionId] = None
        self._connecting: Optional[ConnectionId] = None
        self._outbox: list[bytes] = []

    def start(self) -> None:
        self._connect()
        p = self.params
        self.every(p.announce_interval, self.membership_tick, phase=p.announce_interval)

    def members(self) -> list[str]:
        if self.stopped:
            return [self.name]
        return self.view.live_names()

    # -- broker connection ----------------------------------------------------------------

    def _connect(self) -> None:
        if self.stopped or self.conn is not None or self._connecting is not None:
            return
        self._connecting = self.sim.open_connection(self.name, self.broker, DEFAULT_CHANNEL, 0)

    def on_connected(self, conn: ConnectionId) -> None:
        if conn != self._connecting:
            self.sim.close(conn, by=self.name)
            return
        self._connecting = None
        if self.stopped:
            self.sim.close(conn, by=self.name)
            return
        self.conn = conn
        self.sim.send(conn, codec.encode_control("subscribe", MEMBERSHIP_QUEUE), self.name)
        self.sim.send(conn, codec.encode_control("subscribe", inbox(self.name)), self.name)
        self.announce()
        outbox, self._outbox = self._outbox, []
        for frame in outbox:
            self.sim.send(conn, frame, self.name)

    def on_connect_failed(self, conn: ConnectionId, reason: str) -> None:
        if conn == self._connecting:
            self._connecting = None
            self.after(self.params.reconnect_interval, self._connect)

    def on_disconnected(self, conn: ConnectionId) -> None:
        if conn == self.conn:
            self.conn = None
            self.after(self.params.reconnect_interval, self._connect)

    def _publish(self, queue: str, payload: bytes) -> None:
        frame = codec.encode_control("publish", (queue, payload))
        if self.conn is not None:
            self.sim.send(self.conn, frame, self.name)
        else:
            self._outbox.append(frame)
            self._connect()

    # -- membership ------------------------------------------------------------------------

    def announce(self) -> None:
        self._publish(MEMBERSHIP_QUEUE, codec.encode_gossip(MembershipView([self.local])))

    def membership_tick(self) -> None:
        if self.stopped:
            return
        self.announce()
        horizon = self.params.expiry_periods * self.params.announce_interval
        expired = [n for n, t in self.last_seen.items() if self.sim.now - t > horizon]
        if expired:
            view = self.view
            for name in expired:
                del self.last_seen[name]
                view = MembershipView(n for n in view if n.name != name)
            self.view = view
            self.service.membership_changed()

    def _on_announcement(self, remote: MembershipView) -> None:
        changed = False
        view = self.view
        for node in remote:
            if node.name == self.name:
                continue
            if node.leaving:
                if node.name in view:
                    view = MembershipView(n for n in view if n.name != node.name)
                    self.last_seen.pop(node.name, None)
                    changed = True
                continue
            self.last_seen[node.name] = self.sim.now
            if view.get(node.name) != node:
                view = view.replaced(node)
                changed = True
        if changed:
            self.view = view
            self.service.membership_changed()

    def join(self, node: NodeSpec) -> None:
        # membership flows through the broker; joining just speeds up discovery
        if not self.stopped:
            self.announce()

    def leave(self, name: str) -> None:
        self.service.forward_message(name, None, LEAVE_NAME, b"")

    def self_leave(self) -> None:
        if self.stopped:
            return
        self._publish(MEMBERSHIP_QUEUE,
                      codec.encode_gossip(MembershipView([self.local.tombstone()])))
        if self.conn is not None:
            self.sim.close(self.conn, by=self.name)
            self.conn = None
        self.view = MembershipView([self.local])
        self.last_seen.clear()
        self.stop()
        self.service.membership_changed()

    # -- messaging ------------------------------------------------------------------------------

    def send_envelope(self, env: Envelope) -> None:
        if self.stopped:
            self.service.undeliverable(env, "stopped")
            return
        self._publish(inbox(env.dst_node), codec.encode_envelope(env, self.max_frame_size))

    def handle_control(self, kind: str, body, sender: str, conn: ConnectionId) -> None:
        if kind != "deliver":
            super().handle_control(kind, body, sender, conn)
            return
        queue, payload = body
        if queue == MEMBERSHIP_QUEUE:
            self._on_announcement(codec.decode_gossip(payload))
        elif queue == inbox(self.name):
            env = codec.decode_envelope(payload, self.max_frame_size)
            if env.dst_node == self.name:
                self.service.deliver(env)
            else:
                self.service.dead_letter(env)
