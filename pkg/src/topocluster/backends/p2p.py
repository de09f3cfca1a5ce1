"""Peer-to-peer backend: HyParView partial views, Plumtree broadcast and
point-to-point delivery along heartbeat-maintained trees.

``members()`` only reports directly connected peers (the active view).
No FIFO guarantee: a message may take different paths over time.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

from .. import codec
from ..service import LEAVE_NAME
from ..sim import ConnectionId
from ..types import DEFAULT_CHANNEL, Envelope, NodeSpec
from .base import Backend
from .plumtree import Plumtree

HIGH = "high"
LOW = "low"
_TS = struct.Struct(">d")


@dataclass
class TreeEntry:
    parent: str
    last_heartbeat: float
    timestamp: float


class PeerToPeerBackend(Backend):
    kind = "peer_to_peer"

    def __init__(self, service):
        super().__init__(service)
        self.params = self.config.hyparview
        self.active: set[str] = set()
        self.passive: set[str] = set()
        self.contacts: list[str] = []
        self.tree: dict[str, TreeEntry] = {}
        self.plumtree = Plumtree(self, self.params, self._on_broadcast)
        self.broadcast_handlers = []
        self._out: dict[str, ConnectionId] = {}
        self._out_pending: dict[str, ConnectionId] = {}
        self._in: dict[str, ConnectionId] = {}
        self._queue: dict[str, list[bytes]] = {}
        self._request: Optional[tuple[str, object]] = None
        self._tried: set[str] = set()
        self._last_shuffle: tuple[str, ...] = ()
        self._routed: OrderedDict = OrderedDict()

    def start(self) -> None:
        p = self.params
        self.every(p.repair_interval, self.repair_tick, phase=p.repair_interval)
        self.every(p.shuffle_interval, self.shuffle_tick,
                   phase=self.rng.uniform(0, p.shuffle_interval))
        if p.heartbeat_interval:
            self.every(p.heartbeat_interval, self.heartbeat_tick,
                       phase=self.rng.uniform(0, p.heartbeat_interval))

    def members(self) -> list[str]:
        if self.stopped:
            return [self.name]
        return sorted(self.active | {self.name})

    def _pick(self, pool) -> str:
        return self.rng.choice(sorted(pool))

    # -- connections ------------------------------------------------------------------

    def _conn(self, peer: str) -> Optional[ConnectionId]:
        conn = self._out.get(peer)
        if conn is not None:
            return conn
        conn = self._in.get(peer)
        if conn is not None and self.sim.is_open(conn):
            return conn
        return None

    def _connect(self, peer: str) -> None:
        if peer not in self._out_pending and peer not in self._out:
            self._out_pending[peer] = self.sim.open_connection(self.name, peer, DEFAULT_CHANNEL, 0)

    def send_to(self, peer: str, frame: bytes) -> None:
        if self.stopped:
            return
        conn = self._conn(peer)
        if conn is not None:
            self.sim.send(conn, frame, self.name)
            return
        self._queue.setdefault(peer, []).append(frame)
        self._connect(peer)

    def _release(self, peer: str) -> None:
        """Close our side of a connection nobody needs any more."""
        if peer in self.active or self._queue.get(peer):
            return
        if self._request is not None and self._request[0] == peer:
            return
        conn = self._out.pop(peer, None)
        if conn is not None:
            self.sim.close(conn, by=self.name)
        pending = self._out_pending.pop(peer, None)
        if pending is not None:
            self.sim.close(pending, by=self.name)

    def on_connected(self, conn: ConnectionId) -> None:
        peer = conn.dst
        if self._out_pending.get(peer) == conn:
            del self._out_pending[peer]
        if self.stopped:
            self.sim.close(conn, by=self.name)
            return
        old = self._out.get(peer)
        if old is not None and old != conn:
            self.sim.close(old, by=self.name)
        self._out[peer] = conn
        for frame in self._queue.pop(peer, []):
            self.sim.send(conn, frame, self.name)
        self._release(peer)

    def on_connect_failed(self, conn: ConnectionId, reason: str) -> None:
        peer = conn.dst
        if self._out_pending.get(peer) != conn:
            return
        del self._out_pending[peer]
        if self._conn(peer) is not None:
            for frame in self._queue.pop(peer, []):
                self.sim.send(self._conn(peer), frame, self.name)
            return
        self._queue.pop(peer, None)
        self._unreachable(peer)

    def on_accepted(self, conn: ConnectionId) -> None:
        if self.stopped:
            self.sim.close(conn, by=self.name)
            return
        self._in[conn.src] = conn

    def on_disconnected(self, conn: ConnectionId) -> None:
        peer = conn.peer_of(self.name)
        if self._out.get(peer) == conn:
            del self._out[peer]
        if self._in.get(peer) == conn:
            del self._in[peer]
        if self.stopped:
            return
        if self._conn(peer) is None:
            if self._queue.get(peer):
                self._connect(peer)
            elif peer in self.active:
                self.handle_failure(peer)

    # -- HyParView ---------------------------------------------------------------------

    def join(self, node: NodeSpec) -> None:
        if node.name == self.name or self.stopped:
            return
        if node.name not in self.contacts:
            self.contacts.append(node.name)
        self._join_via(node.name)

    def _join_via(self, contact: str) -> None:
        self.add_active(contact)
        self.send_to(contact, codec.encode_control("join", self.name))

    def add_active(self, peer: str) -> None:
        if peer == self.name or peer in self.active:
            return
        if len(self.active) >= self.params.active_size:
            self._drop_random_active()
        self.passive.discard(peer)
        self.active.add(peer)
        self.plumtree.neighbor_up(peer)
        if self._conn(peer) is None:
            self._connect(peer)
        self.service.membership_changed()

    def _drop_random_active(self) -> None:
        victim = self._pick(self.active)
        self.send_to(victim, codec.encode_control("disconnect"))
        self._remove_active(victim)
        self.add_passive(victim)
        self._release(victim)

    def _remove_active(self, peer: str) -> None:
        if peer in self.active:
            self.active.discard(peer)
            self.plumtree.neighbor_down(peer)
            self.service.membership_changed()

    def add_passive(self, peer: str) -> None:
        if peer == self.name or peer in self.active or peer in self.passive:
            return
        if len(self.passive) >= self.params.passive_size:
            self.passive.discard(self._pick(self.passive))
        self.passive.add(peer)

    def handle_failure(self, peer: str) -> None:
        """Active neighbour lost: drop it and promote a passive candidate."""
        self._remove_active(peer)
        self.try_promote()

    def _unreachable(self, peer: str) -> None:
        self.passive.discard(peer)
        self._remove_active(peer)
        if self._request is not None and self._request[0] == peer:
            self._request[1].cancel()
            self._request = None
        self.try_promote()

    def try_promote(self) -> None:
        if self.stopped or self._request is not None:
            return
        if len(self.active) >= self.params.active_size:
            return
        candidates = self.passive - self._tried
        if not candidates:
            return
        peer = self._pick(candidates)
        priority = HIGH if not self.active else LOW
        timer = self.after(self.params.neighbor_timeout, self._request_timeout, peer)
        self._request = (peer, timer)
        self.send_to(peer, codec.encode_control("neighbor", priority))

    def _request_timeout(self, peer: str) -> None:
        if self._request is None or self._request[0] != peer:
            return
        self._request = None
        self._tried.add(peer)
        self.passive.discard(peer)
        self._release(peer)
        self.try_promote()

    def repair_tick(self) -> None:
        if self.stopped:
            return
        self._tried.clear()
        if not self.active and not self.passive and self.contacts:
            # isolated: start over from the contacts we joined through
            for contact in self.contacts:
                if contact != self.name:
                    self.add_passive(contact)
        self.try_promote()

    def shuffle_tick(self) -> None:
        if self.stopped or not self.active:
            return
        p = self.params
        target = self._pick(self.active)
        others = sorted(self.active - {target})
        sample = [self.name]
        sample += self.rng.sample(others, min(p.shuffle_active, len(others)))
        passive = sorted(self.passive)
        sample += self.rng.sample(passive, min(p.shuffle_passive, len(passive)))
        self._last_shuffle = tuple(sample)
        self.send_to(target, codec.encode_control("shuffle", (self.name, p.arwl, tuple(sample))))

    def _integrate(self, nodes, sent) -> None:
        for peer in nodes:
            if peer == self.name or peer in self.active or peer in self.passive:
                continue
            if len(self.passive) >= self.params.passive_size:
                spare = sorted(self.passive & set(sent))
                victim = spare[0] if spare else self._pick(self.passive)
                self.passive.discard(victim)
            self.passive.add(peer)

    def handle_control(self, kind: str, body, sender: str, conn: ConnectionId) -> None:
        if kind == "join":
            joiner = body
            self.add_active(joiner)
            for peer in sorted(self.active - {joiner}):
                self.send_to(peer, codec.encode_control("forward_join", (joiner, self.params.arwl)))
        elif kind == "forward_join":
            self._forward_join(body[0], body[1], sender)
        elif kind == "neighbor":
            if sender in self.active or body == HIGH or len(self.active) < self.params.active_size:
                self.add_active(sender)
                self.send_to(sender, codec.encode_control("neighbor_reply", True))
            else:
                self.send_to(sender, codec.encode_control("neighbor_reply", False))
                self._release(sender)
        elif kind == "neighbor_reply":
            self._neighbor_reply(sender, bool(body))
        elif kind == "disconnect":
            if sender in self.active:
                self._remove_active(sender)
                self.add_passive(sender)
                self._release(sender)
        elif kind == "shuffle":
            self._shuffle(sender, *body)
        elif kind == "shuffle_reply":
            self._integrate(body, self._last_shuffle)
        elif kind == "gossip":
            self.plumtree.on_gossip(sender, body)
        elif kind == "ihave":
            self.plumtree.on_ihave(sender, body)
        elif kind == "graft":
            self.plumtree.on_graft(sender, body)
        elif kind == "prune":
            self.plumtree.on_prune(sender, body)
        elif kind == "leave":
            self.self_leave()

    def _forward_join(self, joiner: str, ttl: int, sender: str) -> None:
        if joiner == self.name:
            return
        if ttl <= 0 or len(self.active) <= 1:
            self._accept_joiner(joiner)
            return
        if ttl == self.params.prwl:
            self.add_passive(joiner)
        candidates = self.active - {sender, joiner}
        if not candidates:
            self._accept_joiner(joiner)
            return
        self.send_to(self._pick(candidates),
                     codec.encode_control("forward_join", (joiner, ttl - 1)))

    def _accept_joiner(self, joiner: str) -> None:
        if joiner in self.active:
            return
        self.add_active(joiner)
        self.send_to(joiner, codec.encode_control("neighbor", HIGH))

    def _neighbor_reply(self, peer: str, accepted: bool) -> None:
        if self._request is not None and self._request[0] == peer:
            self._request[1].cancel()
            self._request = None
            if accepted:
                self.add_active(peer)
            else:
                self._tried.add(peer)
                self._release(peer)
                self.try_promote()
        elif accepted and peer not in self.active:
            # we dropped this peer while its acceptance was in flight
            self.send_to(peer, codec.encode_control("disconnect"))
            self._release(peer)

    def _shuffle(self, sender: str, origin: str, ttl: int, nodes) -> None:
        if origin == self.name:
            return
        ttl -= 1
        if ttl > 0 and len(self.active) > 1:
            candidates = self.active - {sender, origin}
            if candidates:
                self.send_to(self._pick(candidates),
                             codec.encode_control("shuffle", (origin, ttl, nodes)))
                return
        passive = sorted(self.passive)
        reply = tuple(self.rng.sample(passive, min(len(nodes), len(passive))))
        self.send_to(origin, codec.encode_control("shuffle_reply", reply))
        self._integrate(nodes, reply)
        self._release(origin)

    # -- leaving ----------------------------------------------------------------------------

    def leave(self, name: str) -> None:
        if name in self.active:
            self.send_to(name, codec.encode_control("leave"))
        else:
            self.service.forward_message(name, None, LEAVE_NAME, b"")

    def self_leave(self) -> None:
        if self.stopped:
            return
        frame = codec.encode_control("disconnect")
        for peer in sorted(self.active):
            self.send_to(peer, frame)
        self.active.clear()
        self.passive.clear()
        for conn in list(self._out.values()) + list(self._out_pending.values()):
            self.sim.close(conn, by=self.name)
        for conn in list(self._in.values()):
            self.sim.close(conn, by=self.name)
        self._out.clear()
        self._out_pending.clear()
        self._in.clear()
        self.stop()
        self.service.membership_changed()

    # -- broadcast and tree routing -----------------------------------------------------------

    def broadcast(self, payload: bytes):
        return self.plumtree.broadcast("app", payload)

    def on_broadcast(self, handler) -> None:
        self.broadcast_handlers.append(handler)

    def heartbeat_tick(self) -> None:
        if not self.stopped:
            self.plumtree.broadcast("hb", _TS.pack(self.sim.now))

    def _on_broadcast(self, mid, kind: str, payload: bytes, sender: Optional[str]) -> None:
        if kind == "hb":
            if sender is not None and mid[0] != self.name:
                self.tree[mid[0]] = TreeEntry(sender, self.sim.now, _TS.unpack(payload)[0])
            return
        for handler in self.broadcast_handlers:
            handler(mid, payload)

    def tree_children(self, root: str) -> list[str]:
        entry = self.tree.get(root)
        eager = self.plumtree.eager.get(root, set())
        return sorted(eager - ({entry.parent} if entry else set()))

    def fresh_parent(self, root: str) -> Optional[str]:
        entry = self.tree.get(root)
        interval = self.params.heartbeat_interval
        if entry is None or not interval:
            return None
        if self.sim.now - entry.last_heartbeat > self.params.tree_staleness * interval:
            return None
        return entry.parent if entry.parent in self.active else None

    def send_envelope(self, env: Envelope) -> None:
        self.route_transitive(env)

    def relay(self, env: Envelope, frame: bytes, sender: str) -> None:
        self.route_transitive(env, frame, sender)

    def route_transitive(self, env: Envelope, frame: Optional[bytes] = None,
                         sender: Optional[str] = None) -> None:
        """Direct when adjacent, otherwise one hop up the tree rooted at the destination."""
        if self.stopped:
            self.service.undeliverable(env, "stopped")
            return
        key = (env.src, env.channel, env.seq)
        if key in self._routed:
            self.service.stats["routing_loops"] += 1
            self.service.dead_letter(env)
            return
        self._routed[key] = None
        if len(self._routed) > self.params.seen_capacity:
            self._routed.popitem(last=False)
        frame = frame or codec.encode_envelope(env, self.max_frame_size)
        dst = env.dst_node
        if dst in self.active:
            hop = dst
        else:
            hop = self.fresh_parent(dst)
            if hop is None:
                self.service.stats["tree_drops"] += 1
                self.service.dead_letter(env)
                return
        if sender is not None:
            self.service.stats["relayed"] += 1
        self.send_to(hop, frame)
