from __future__ import annotations

import logging

from .. import codec
from ..sim import ConnectionId
from ..types import DEFAULT_CHANNEL, Envelope, NodeSpec

log = logging.getLogger(__name__)

EPS = 1e-9


class NoRoute(LookupError):
    pass


class Backend:
    """Common plumbing: node registration, timers, frame dispatch.

    Subclasses implement membership and routing. All methods run inside the
    simulator's event loop, which makes each backend a single sequential
    owner of its state.
    """

    kind = ""

    def __init__(self, service):
        self.service = service
        self.sim = service.sim
        self.config = service.config
        self.local: NodeSpec = service.config.local
        self.name = self.local.name
        self.channels = {ch.name: ch for ch in service.config.channels}
        self.max_frame_size = service.config.max_frame_size
        self.rng = self.sim.rng_for(self.name)
        self.stopped = False
        self._timers = []
        self.sim.add_node(self.name, self)

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        pass

    def every(self, interval: float, fn, phase: float = 0.0) -> None:
        self._timers.append(self.sim.every(interval, fn, owner=self.name, phase=phase))

    def after(self, delay: float, fn, *args):
        timer = self.sim.schedule(delay, fn, *args, owner=self.name)
        return timer

    def stop(self) -> None:
        self.stopped = True
        for timer in self._timers:
            timer.cancel()
        self._timers.clear()

    # -- API surface used by PeerService ------------------------------------------

    def resolve_channel(self, name: str) -> str:
        return name if name in self.channels else DEFAULT_CHANNEL

    def members(self) -> list[str]:
        raise NotImplementedError

    def join(self, node: NodeSpec) -> None:
        raise NotImplementedError

    def leave(self, name: str) -> None:
        raise NotImplementedError

    def self_leave(self) -> None:
        raise NotImplementedError

    def send_envelope(self, env: Envelope) -> None:
        raise NotImplementedError

    # -- transport callbacks ------------------------------------------------------

    def on_connected(self, conn: ConnectionId) -> None:
        pass

    def on_accepted(self, conn: ConnectionId) -> None:
        if self.stopped:
            self.sim.close(conn, by=self.name)

    def on_connect_failed(self, conn: ConnectionId, reason: str) -> None:
        pass

    def on_disconnected(self, conn: ConnectionId) -> None:
        pass

    def on_frame(self, conn: ConnectionId, frame: bytes, sender: str) -> None:
        if self.stopped:
            return
        try:
            tag = codec.frame_tag(frame)
            if tag == codec.TAG_ENVELOPE:
                env = codec.decode_envelope(frame, self.max_frame_size)
                if env.dst_node == self.name:
                    self.service.deliver(env)
                else:
                    self.relay(env, frame, sender)
            elif tag == codec.TAG_GOSSIP:
                self.handle_gossip(codec.decode_gossip(frame), sender)
            elif tag == codec.TAG_CONTROL:
                kind, body = codec.decode_control(frame)
                self.handle_control(kind, body, sender, conn)
            else:
                raise codec.MalformedFrame(f"unknown frame tag {tag:#x}")
        except codec.MalformedFrame:
            self.service.stats["malformed"] += 1
            log.warning("%s: malformed frame from %s", self.name, sender)

    # -- frame handlers subclasses override ------------------------------------------

    def relay(self, env: Envelope, frame: bytes, sender: str) -> None:
        self.service.dead_letter(env)

    def handle_gossip(self, view, sender: str) -> None:
        pass

    def handle_control(self, kind: str, body, sender: str, conn: ConnectionId) -> None:
        if kind == "leave":
            self.self_leave()
