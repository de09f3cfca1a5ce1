"""Full-mesh backend.

Every node opens its own outbound connections to every peer: one per
(channel, slot), where a channel with parallelism P has P slots. Incoming
connections are only read from, except when no outbound route exists (the
client-server policy relies on that for server-to-client traffic).

Membership is a grow-merge set of NodeSpec gossiped periodically to every
connected peer. Leaves are tombstones, so the set can shrink.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Optional

from .. import codec
from ..sim import ConnectionId
from ..types import (DEFAULT_CHANNEL, Envelope, MembershipView, NodeSpec, RoundRobin,
                     connection_slot, merge_views)
from .base import EPS, Backend, NoRoute

TRANSMIT = "transmit"
SHED = "shed"


@dataclass(frozen=True)
class SendDecision:
    action: str
    item: Any


@dataclass
class MonotonicQueueState:
    """Outgoing backlog of one monotonic channel towards one peer."""

    window: float
    pending: deque = field(default_factory=deque)
    last_sent_at: float = -math.inf
    shed: int = 0
    transmitted: int = 0

    def dequeue(self, now: float) -> SendDecision:
        """Pop the head; shed it when a newer message will subsume it.

        The head is shed only while more than one message stays queued behind
        it and a transmission already happened inside the current window.
        """
        item = self.pending.popleft()
        if len(self.pending) > 1 and now - self.last_sent_at < self.window:
            self.shed += 1
            return SendDecision(SHED, item)
        self.last_sent_at = now
        self.transmitted += 1
        return SendDecision(TRANSMIT, item)


def monotonic_dequeue(state: MonotonicQueueState, now: float) -> SendDecision:
    return state.dequeue(now)


class FullMeshBackend(Backend):
    kind = "full_mesh"
    gossip_enabled = True

    def __init__(self, service):
        super().__init__(service)
        self.params = self.config.mesh
        self.view = MembershipView([self.local])
        self.slots = [(ch.name, s) for ch in self.channels.values() for s in range(ch.parallelism)]
        self._pending: dict[tuple[str, str, int], ConnectionId] = {}
        self._inbound: dict[tuple[str, str, int], ConnectionId] = {}
        self._last_attempt: dict[str, float] = {}
        self._rr: dict[tuple[str, str], RoundRobin] = {}
        self._mono: dict[tuple[str, str], MonotonicQueueState] = {}
        self._mono_wake: set[tuple[str, str]] = set()
        self._down_since: dict[str, float] = {}
        self._reported_down: set[str] = set()
        self.connect_attempts: dict[str, list[float]] = {}

    def start(self) -> None:
        p = self.params
        if self.gossip_enabled:
            self.every(p.gossip_interval, self.gossip_tick, phase=p.gossip_interval)
        self.every(p.refresh_interval, self.refresh_tick, phase=p.refresh_interval)

    # -- policy hooks --------------------------------------------------------------

    def allowed(self, peer: NodeSpec) -> bool:
        return True

    def targets(self) -> list[NodeSpec]:
        """Live peers this node should hold outbound connections to."""
        return [n for n in self.view.live() if n.name != self.name and self.allowed(n)]

    def members(self) -> list[str]:
        if self.stopped:
            return [self.name]
        return self.view.live_names()

    # -- connection matrix ---------------------------------------------------------------

    def open_slots(self, peer: str) -> list[tuple[str, int]]:
        return [(ch, s) for ch, s in self.slots
                if self.sim.cache_lookup(self.name, peer, ch, s) is not None]

    def matrix_full(self) -> bool:
        return all(len(self.open_slots(p.name)) == len(self.slots) for p in self.targets())

    def _missing_slots(self, peer: str) -> list[tuple[str, int]]:
        return [(ch, s) for ch, s in self.slots
                if self.sim.cache_lookup(self.name, peer, ch, s) is None
                and (peer, ch, s) not in self._pending]

    def _pump(self, peer: str) -> None:
        """Initiate missing connections to ``peer``; one per refresh interval when pacing."""
        if self.stopped:
            return
        missing = self._missing_slots(peer)
        if not missing:
            return
        if self.params.pacing:
            last = self._last_attempt.get(peer)
            if last is not None and self.sim.now - last < self.params.refresh_interval - EPS:
                return
            missing = missing[:1]
        for ch, s in missing:
            self._last_attempt[peer] = self.sim.now
            self.connect_attempts.setdefault(peer, []).append(self.sim.now)
            self._pending[(peer, ch, s)] = self.sim.open_connection(self.name, peer, ch, s)

    def refresh_tick(self) -> None:
        for peer in self.targets():
            self._pump(peer.name)

    def on_connected(self, conn: ConnectionId) -> None:
        key = (conn.dst, conn.channel, conn.slot)
        if self._pending.get(key) == conn:
            del self._pending[key]
        peer = self.view.get(conn.dst)
        if self.stopped or peer is None or peer.leaving or not self.allowed(peer):
            self.sim.close(conn, by=self.name)
            return
        self._down_since.pop(conn.dst, None)
        if conn.dst in self._reported_down:
            self._reported_down.discard(conn.dst)
            self.service.notify("up", conn.dst)
        if self.gossip_enabled and (conn.channel, conn.slot) == (DEFAULT_CHANNEL, 0):
            self.sim.send(conn, codec.encode_gossip(self.view), self.name)
        for (p, ch) in list(self._mono):
            if p == conn.dst:
                self._mono_drain(p, ch)

    def on_connect_failed(self, conn: ConnectionId, reason: str) -> None:
        key = (conn.dst, conn.channel, conn.slot)
        if self._pending.get(key) == conn:
            del self._pending[key]
        self.service.stats[f"connect_{reason}"] += 1

    def on_accepted(self, conn: ConnectionId) -> None:
        if self.stopped:
            self.sim.close(conn, by=self.name)
            return
        self._inbound[(conn.src, conn.channel, conn.slot)] = conn

    def on_disconnected(self, conn: ConnectionId) -> None:
        if conn.src == self.name:
            self.handle_disconnect(conn)
        else:
            key = (conn.src, conn.channel, conn.slot)
            if self._inbound.get(key) == conn:
                del self._inbound[key]

    def handle_disconnect(self, conn: ConnectionId) -> None:
        """Outbound slot lost: the refresh tick reconnects it; report the peer
        down if it stays unreachable for ``failure_timeout``."""
        peer = conn.dst
        spec = self.view.get(peer)
        if self.stopped or spec is None or spec.leaving:
            return
        if self.open_slots(peer) or peer in self._down_since:
            return
        since = self.sim.now
        self._down_since[peer] = since
        self.after(self.params.failure_timeout, self._check_down, peer, since)

    def _check_down(self, peer: str, since: float) -> None:
        if self._down_since.get(peer) != since or self.open_slots(peer):
            return
        if peer not in self._reported_down:
            self._reported_down.add(peer)
            self.service.notify("down", peer)

    def _close_peer(self, peer: str) -> None:
        for key in [k for k in self._pending if k[0] == peer]:
            self.sim.close(self._pending.pop(key), by=self.name)
        for ch, s in self.slots:
            conn = self.sim.cache_lookup(self.name, peer, ch, s)
            if conn is not None:
                self.sim.close(conn, by=self.name)
        for key in [k for k in self._inbound if k[0] == peer]:
            self.sim.close(self._inbound.pop(key), by=self.name)
        for key in [k for k in self._mono if k[0] == peer]:
            del self._mono[key]
        self._last_attempt.pop(peer, None)
        self._down_since.pop(peer, None)
        self._reported_down.discard(peer)

    # -- membership ---------------------------------------------------------------------

    def gossip_tick(self) -> None:
        if self.stopped:
            return
        frame = codec.encode_gossip(self.view)
        for peer in self.view.live_names():
            if peer == self.name:
                continue
            conn = self._control_conn(peer)
            if conn is not None:
                self.sim.send(conn, frame, self.name)

    def _control_conn(self, peer: str) -> Optional[ConnectionId]:
        conn = self.sim.cache_lookup(self.name, peer, DEFAULT_CHANNEL, 0)
        if conn is None:
            conn = self._inbound.get((peer, DEFAULT_CHANNEL, 0))
            if conn is not None and not self.sim.is_open(conn):
                conn = None
        return conn

    def handle_gossip(self, remote: MembershipView, sender: str) -> None:
        if self.stopped:
            return
        merged = merge_views(self.view, remote, on_conflict=self._conflict)
        if merged == self.view:
            return
        mine = merged.get(self.name)
        if mine is not None and mine != self.local:
            if mine.leaving and mine.epoch >= self.local.epoch:
                self.self_leave()
                return
            merged = merged.replaced(self.local)
        self._apply_view(merged)

    def _conflict(self, mine: NodeSpec, theirs: NodeSpec) -> None:
        self.service.notify("conflict", theirs.name)

    def _apply_view(self, new: MembershipView) -> None:
        before = {n.name for n in self.view.live()}
        self.view = new
        after = {n.name for n in new.live()}
        for name in sorted(before - after):
            self._close_peer(name)
        for name in sorted(after - before):
            spec = new.get(name)
            if name != self.name and self.allowed(spec):
                self._pump(name)
        self.service.membership_changed()

    def handle_join(self, node: NodeSpec) -> None:
        if self.stopped or node.name == self.name:
            return
        cur = self.view.get(node.name)
        if cur is not None and not cur.leaving and cur.epoch >= node.epoch:
            return
        self._apply_view(self.view.with_node(node))

    def join(self, node: NodeSpec) -> None:
        self.handle_join(node)

    def leave(self, name: str) -> None:
        spec = self.view.get(name)
        if self.stopped or spec is None or spec.leaving:
            return
        conn = self._control_conn(name)
        if conn is not None:
            self.sim.send(conn, codec.encode_control("leave"), self.name)
        self._apply_view(self.view.replaced(spec.tombstone()))

    def self_leave(self) -> None:
        if self.stopped:
            return
        self.view = self.view.replaced(self.local.tombstone())
        frame = codec.encode_gossip(self.view)
        peers = [n for n in self.view.names() if n != self.name]
        for peer in peers:
            conn = self._control_conn(peer)
            if conn is not None:
                self.sim.send(conn, frame, self.name)
        for peer in peers:
            self._close_peer(peer)
        self.stop()
        self.service.membership_changed()

    # -- messaging --------------------------------------------------------------------------

    def select_connection(self, peer: str, channel: str, key: Optional[bytes]) -> ConnectionId:
        ch = self.channels.get(channel) or self.channels[DEFAULT_CHANNEL]
        rr = self._rr.get((peer, ch.name))
        if rr is None:
            rr = self._rr[(peer, ch.name)] = RoundRobin()
        slot = connection_slot(key, ch.parallelism, rr)
        candidates = ((ch.name, slot), (DEFAULT_CHANNEL, 0))
        for c, s in candidates:
            conn = self.sim.cache_lookup(self.name, peer, c, s)
            if conn is not None:
                return conn
        for c, s in candidates:
            conn = self._inbound.get((peer, c, s))
            if conn is not None and self.sim.is_open(conn):
                return conn
        raise NoRoute(peer)

    def send_envelope(self, env: Envelope) -> None:
        spec = self.view.get(env.dst_node)
        if self.stopped or spec is None or spec.leaving:
            self.service.undeliverable(env, "unknown node")
            return
        frame = codec.encode_envelope(env, self.max_frame_size)
        ch = self.channels[env.channel]
        if ch.monotonic:
            key = (env.dst_node, ch.name)
            state = self._mono.get(key)
            if state is None:
                state = self._mono[key] = MonotonicQueueState(self.params.monotonic_window)
            state.pending.append(frame)
            self._mono_drain(*key)
            return
        try:
            conn = self.select_connection(env.dst_node, env.channel, env.partition_key)
        except NoRoute:
            self.route_without_connection(env, frame)
            return
        self.sim.send(conn, frame, self.name)

    def route_without_connection(self, env: Envelope, frame: bytes) -> None:
        self.service.undeliverable(env, "no route")

    def _mono_drain(self, peer: str, channel: str) -> None:
        key = (peer, channel)
        self._mono_wake.discard(key)
        state = self._mono.get(key)
        if state is None or not state.pending:
            return
        try:
            conn = self.select_connection(peer, channel, None)
        except NoRoute:
            return
        now = self.sim.now
        idle = self.sim.idle_at(conn, self.name)
        if idle <= now + EPS:
            while state.pending:
                decision = state.dequeue(now)
                if decision.action == SHED:
                    self.service.stats["shed"] += 1
                    continue
                self.sim.send(conn, decision.item, self.name)
                break
            idle = self.sim.idle_at(conn, self.name)
        if state.pending and key not in self._mono_wake:
            self._mono_wake.add(key)
            self.after(max(0.0, idle - now), self._mono_drain, peer, channel)

    def monotonic_state(self, peer: str, channel: str) -> Optional[MonotonicQueueState]:
        return self._mono.get((peer, channel))
