"""Static and client-server topologies: the mesh machinery behind a connection policy."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .. import codec
from ..types import CLIENT, DEFAULT_CHANNEL, SERVER, Envelope, MembershipView, NodeSpec
from .mesh import FullMeshBackend

log = logging.getLogger(__name__)

STATIC_ROSTER = "static_roster"
TAG_RULE = "tag_rule"


class StaticMembershipError(RuntimeError):
    """Membership of a static cluster cannot change after start."""


@dataclass(frozen=True)
class ConnectionPolicy:
    kind: str
    roster: tuple[NodeSpec, ...] = ()

    def __post_init__(self):
        if self.kind not in (STATIC_ROSTER, TAG_RULE):
            raise ValueError(f"unknown policy kind {self.kind!r}")


def allowed_connection(local: NodeSpec, peer: NodeSpec, policy: ConnectionPolicy) -> bool:
    """May ``local`` open a connection to ``peer``?"""
    if policy.kind == STATIC_ROSTER:
        return any(n.name == peer.name for n in policy.roster)
    if local.tag not in (CLIENT, SERVER) or peer.tag not in (CLIENT, SERVER):
        log.warning("tag rule with untagged node: %s(%s) -> %s(%s)",
                    local.name, local.tag, peer.name, peer.tag)
        return False
    return peer.tag == SERVER


class StaticBackend(FullMeshBackend):
    kind = "static"
    gossip_enabled = False

    def __init__(self, service):
        super().__init__(service)
        roster = tuple(n for n in self.config.roster if n.name != self.name)
        self.policy = ConnectionPolicy(STATIC_ROSTER, roster)
        self.view = MembershipView([self.local, *roster])

    def start(self) -> None:
        super().start()
        # peers may not exist in the simulator yet; connect once setup is done
        self.after(0.0, self.refresh_tick)

    def allowed(self, peer: NodeSpec) -> bool:
        return allowed_connection(self.local, peer, self.policy)

    def join(self, node: NodeSpec) -> None:
        if node.name == self.name or node.name in {n.name for n in self.policy.roster}:
            return
        raise StaticMembershipError(f"{node.name} is not in the static roster of {self.name}")

    def leave(self, name: str) -> None:
        raise StaticMembershipError("static clusters do not support leave")

    def self_leave(self) -> None:
        raise StaticMembershipError("static clusters do not support leave")

    def handle_gossip(self, remote, sender: str) -> None:
        pass


class ClientServerBackend(FullMeshBackend):
    """Clients connect only to servers; servers connect to each other.

    Servers reach clients over the connections the clients opened. A message
    from one client to another travels through the lowest-named connected
    server.
    """

    kind = "client_server"

    def __init__(self, service):
        super().__init__(service)
        if self.local.tag not in (CLIENT, SERVER):
            raise ValueError("client-server nodes must be tagged client or server")
        self.policy = ConnectionPolicy(TAG_RULE)

    def allowed(self, peer: NodeSpec) -> bool:
        return allowed_connection(self.local, peer, self.policy)

    def members(self) -> list[str]:
        if self.stopped:
            return [self.name]
        if self.local.tag == SERVER:
            return self.view.live_names()
        return [n.name for n in self.view.live() if n.name == self.name or self.allowed(n)]

    def join(self, node: NodeSpec) -> None:
        if node.name == self.name:
            return
        if self.allowed(node):
            self.handle_join(node)
            return
        # redirect: learn the node, but connect through the configured servers
        self.service.stats["join_redirects"] += 1
        servers = [s for s in self.config.servers if s.name != self.name]
        if not servers:
            servers = [n for n in self.view.live() if n.name != self.name and n.tag == SERVER]
        if not servers:
            log.warning("%s: join via client %s with no known server", self.name, node.name)
        self.handle_join(node)
        for server in servers:
            self.handle_join(server)

    def connected_servers(self) -> list[str]:
        return sorted(n.name for n in self.view.live()
                      if n.tag == SERVER and n.name != self.name
                      and self.sim.cache_lookup(self.name, n.name, DEFAULT_CHANNEL, 0) is not None)

    def route_without_connection(self, env: Envelope, frame: bytes) -> None:
        spec = self.view.get(env.dst_node)
        if self.local.tag == CLIENT and spec is not None and spec.tag == CLIENT:
            self.route_client_to_client(env, frame)
        else:
            self.service.undeliverable(env, "no route")

    def route_client_to_client(self, env: Envelope, frame: bytes | None = None) -> None:
        servers = self.connected_servers()
        if not servers:
            self.service.dead_letter(env)
            return
        conn = self.sim.cache_lookup(self.name, servers[0], DEFAULT_CHANNEL, 0)
        self.sim.send(conn, frame or codec.encode_envelope(env, self.max_frame_size), self.name)

    def relay(self, env: Envelope, frame: bytes, sender: str) -> None:
        if self.local.tag != SERVER:
            self.service.dead_letter(env)
            return
        try:
            conn = self.select_connection(env.dst_node, env.channel, env.partition_key)
        except LookupError:
            self.service.dead_letter(env)
            return
        self.service.stats["relayed"] += 1
        self.sim.send(conn, frame, self.name)
