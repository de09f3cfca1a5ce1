"""Topology-agnostic cluster membership and messaging over a deterministic network simulator."""

from .backends import (BACKENDS, Broker, StaticMembershipError, allowed_connection,
                       monotonic_dequeue)
from .cluster import Cluster
from .codec import FrameTooLarge, MalformedFrame
from .service import (CLIENT_SERVER, FULL_MESH, PEER_TO_PEER, PUB_SUB, STATIC, TOPOLOGIES,
                      Delivery, DuplicateName, HyParViewParams, MembershipEvent, MeshParams,
                      PeerService, PubSubParams, TopologyConfig)
from .sim import ConnectionId, SimConfig, SimEvent, Simulator, Trace
from .types import (CLIENT, DEFAULT_CHANNEL, SERVER, UNDEFINED, ChannelSpec, Envelope,
                    MembershipView, NodeSpec, connection_slot, merge_views, stable_hash)

__all__ = [
    "BACKENDS", "Broker", "CLIENT", "CLIENT_SERVER", "ChannelSpec", "Cluster", "ConnectionId",
    "DEFAULT_CHANNEL", "Delivery", "DuplicateName", "Envelope", "FULL_MESH", "FrameTooLarge",
    "HyParViewParams", "MalformedFrame", "MembershipEvent", "MembershipView", "MeshParams",
    "NodeSpec", "PEER_TO_PEER", "PUB_SUB", "PeerService", "PubSubParams", "SERVER", "STATIC",
    "SimConfig", "SimEvent", "Simulator", "StaticMembershipError", "TOPOLOGIES",
    "TopologyConfig", "Trace", "UNDEFINED", "allowed_connection", "connection_slot",
    "merge_views", "monotonic_dequeue", "stable_hash",
]
