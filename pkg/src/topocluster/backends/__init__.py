from .base import Backend, NoRoute
from .constrained import (ClientServerBackend, ConnectionPolicy, StaticBackend,
                          StaticMembershipError, allowed_connection)
from .mesh import FullMeshBackend, MonotonicQueueState, SendDecision, monotonic_dequeue
from .p2p import PeerToPeerBackend
from .pubsub import Broker, PubSubBackend

BACKENDS = {
    "static": StaticBackend,
    "full_mesh": FullMeshBackend,
    "client_server": ClientServerBackend,
    "peer_to_peer": PeerToPeerBackend,
    "pub_sub": PubSubBackend,
}

__all__ = [
    "BACKENDS", "Backend", "Broker", "ClientServerBackend", "ConnectionPolicy",
    "FullMeshBackend", "MonotonicQueueState", "NoRoute", "PeerToPeerBackend",
    "PubSubBackend", "SendDecision", "StaticBackend", "StaticMembershipError",
    "allowed_connection", "monotonic_dequeue",
]
