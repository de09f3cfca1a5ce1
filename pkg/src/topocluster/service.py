"""Topology-agnostic peer service: the one API applications program against.

Every call returns immediately. What happens next depends on the backend
chosen in :class:`TopologyConfig` when the service is constructed.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

from .types import (DEFAULT_CHANNEL, MAX_FRAME_SIZE, ChannelSpec, Envelope, NodeSpec,
                    normalize_channels)

log = logging.getLogger(__name__)

FULL_MESH = "full_mesh"
STATIC = "static"
CLIENT_SERVER = "client_server"
PEER_TO_PEER = "peer_to_peer"
PUB_SUB = "pub_sub"
TOPOLOGIES = (STATIC, FULL_MESH, CLIENT_SERVER, PEER_TO_PEER, PUB_SUB)

FORWARD_MARK = b"\x00"
CAST_MARK = b"\x01"

# registered names reserved for the service itself
LEAVE_NAME = "$leave"

SEND_OPTIONS = frozenset({"partition_key", "ack"})


@dataclass(frozen=True)
class MeshParams:
    gossip_interval: float = 1.0
    refresh_interval: float = 0.1
    failure_timeout: float = 5.0
    monotonic_window: float = 1.0
    pacing: bool = True


@dataclass(frozen=True)
class HyParViewParams:
    active_size: int = 5
    passive_size: int = 30
    arwl: int = 6
    prwl: int = 3
    shuffle_interval: float = 10.0
    shuffle_active: int = 3
    shuffle_passive: int = 4
    repair_interval: float = 1.0
    neighbor_timeout: float = 0.5
    ihave_timeout: float = 0.2
    heartbeat_interval: Optional[float] = 5.0
    tree_staleness: int = 3
    seen_capacity: int = 10_000
    recent_ids: int = 128


@dataclass(frozen=True)
class PubSubParams:
    broker: str = "broker"
    announce_interval: float = 5.0
    expiry_periods: int = 3
    reconnect_interval: float = 0.5


@dataclass(frozen=True)
class TopologyConfig:
    kind: str
    local: NodeSpec
    channels: tuple[ChannelSpec, ...] = ()
    mesh: MeshParams = field(default_factory=MeshParams)
    hyparview: HyParViewParams = field(default_factory=HyParViewParams)
    pubsub: PubSubParams = field(default_factory=PubSubParams)
    roster: tuple[NodeSpec, ...] = ()
    servers: tuple[NodeSpec, ...] = ()
    max_frame_size: int = MAX_FRAME_SIZE

    def __post_init__(self):
        if self.kind not in TOPOLOGIES:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        object.__setattr__(self, "channels", normalize_channels(self.channels))
        object.__setattr__(self, "roster", tuple(self.roster))
        object.__setattr__(self, "servers", tuple(self.servers))


@dataclass(frozen=True)
class Delivery:
    """What a registered handler receives."""

    kind: str  # "forward" or "cast"
    src: str
    channel: str
    seq: int
    payload: bytes
    partition_key: Optional[bytes] = None


@dataclass(frozen=True)
class MembershipEvent:
    """``kind`` is "changed" whenever members() changes; "down", "up" and
    "conflict" are advisory and leave members() as it was."""

    kind: str
    node: Optional[str]
    members: tuple[str, ...]
    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()


class DuplicateName(ValueError):
    pass


Handler = Callable[[Delivery], None]
MembershipCallback = Callable[[MembershipEvent], None]


class PeerService:
    def __init__(self, sim, config: TopologyConfig):
        from .backends import BACKENDS

        self.sim = sim
        self.config = config
        self.name = config.local.name
        self.stats: Counter = Counter()
        self.dead_letters: deque[Envelope] = deque(maxlen=1024)
        self._handlers: dict[str, Handler] = {}
        self._listeners: list[MembershipCallback] = []
        self._seq: Counter = Counter()
        self.backend = BACKENDS[config.kind](self)
        self._members = tuple(self.backend.members())
        self.backend.start()

    # -- membership ----------------------------------------------------------

    def join(self, node: NodeSpec) -> None:
        self.backend.join(node)

    def leave(self, node: Union[NodeSpec, str]) -> None:
        name = node.name if isinstance(node, NodeSpec) else node
        if name == self.name:
            self.self_leave()
        else:
            self.backend.leave(name)

    def self_leave(self) -> None:
        self.backend.self_leave()

    def members(self) -> list[str]:
        return sorted(self.backend.members())

    def on_membership_change(self, callback: MembershipCallback) -> None:
        self._listeners.append(callback)

    # -- messaging -----------------------------------------------------------

    def register_name(self, name: str, handler: Handler) -> None:
        if name in self._handlers or name.startswith("$"):
            raise DuplicateName(name)
        self._handlers[name] = handler

    def unregister_name(self, name: str) -> None:
        self._handlers.pop(name, None)

    def forward_message(self, node: str, channel: Optional[str], name: str, payload: bytes,
                        options: Optional[Mapping] = None) -> None:
        self._send(node, channel, name, FORWARD_MARK, payload, options)

    def cast_message(self, node: str, channel: Optional[str], name: str, payload: bytes,
                     options: Optional[Mapping] = None) -> None:
        self._send(node, channel, name, CAST_MARK, payload, options)

    def _send(self, node: str, channel: Optional[str], name: str, mark: bytes,
              payload: bytes, options: Optional[Mapping]) -> None:
        options = dict(options or {})
        unknown = set(options) - SEND_OPTIONS
        if unknown:
            raise ValueError(f"unknown send options: {sorted(unknown)}")
        if options.get("ack") not in (None, "none"):
            raise ValueError("only ack='none' is supported")
        key = options.get("partition_key")
        if isinstance(key, str):
            key = key.encode("utf-8")
        channel = self.backend.resolve_channel(channel or DEFAULT_CHANNEL)
        self._seq[channel] += 1
        env = Envelope(src=self.name, dst_node=node, dst_name=name, channel=channel,
                       payload=mark + bytes(payload), seq=self._seq[channel], partition_key=key)
        self.stats["sent"] += 1
        if node == self.name:
            self.sim.schedule(0.0, self.deliver, env, owner=self.name)
        else:
            self.backend.send_envelope(env)

    def deliver(self, env: Envelope) -> None:
        """Hand an envelope addressed to this node to its registered handler."""
        if env.dst_name == LEAVE_NAME:
            self.self_leave()
            return
        handler = self._handlers.get(env.dst_name)
        mark, payload = env.payload[:1], env.payload[1:]
        if handler is None or mark not in (FORWARD_MARK, CAST_MARK):
            self.stats["dead_letters"] += 1
            self.dead_letters.append(env)
            return
        self.stats["delivered"] += 1
        handler(Delivery(kind="cast" if mark == CAST_MARK else "forward", src=env.src,
                         channel=env.channel, seq=env.seq, payload=payload,
                         partition_key=env.partition_key))

    # -- backend hooks ----------------------------------------------------------

    def undeliverable(self, env: Envelope, reason: str) -> None:
        self.stats["undeliverable"] += 1
        log.debug("%s: dropping envelope to %s (%s)", self.name, env.dst_node, reason)

    def dead_letter(self, env: Envelope) -> None:
        self.stats["dead_letters"] += 1
        self.dead_letters.append(env)

    def membership_changed(self) -> None:
        current = tuple(self.members())
        if current == self._members:
            return
        before = set(self._members)
        after = set(current)
        self._members = current
        self._emit(MembershipEvent("changed", None, current,
                                   added=tuple(sorted(after - before)),
                                   removed=tuple(sorted(before - after))))

    def notify(self, kind: str, node: str) -> None:
        self._emit(MembershipEvent(kind, node, self._members))

    def _emit(self, event: MembershipEvent) -> None:
        for callback in list(self._listeners):
            callback(event)
