"""Convenience wiring: a simulator plus one PeerService per node."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Mapping, Optional

from .backends.pubsub import Broker
from .service import (CLIENT_SERVER, PUB_SUB, STATIC, HyParViewParams, MeshParams, PeerService,
                      PubSubParams, TopologyConfig)
from .sim import SimConfig, Simulator
from .types import MAX_FRAME_SIZE, SERVER, ChannelSpec, NodeSpec


class Cluster:
    """Build ``names`` as nodes of one topology inside a fresh simulator.

    Nothing is joined yet; call :meth:`join_all` (or ``service.join``
    yourself) to form the cluster.
    """

    def __init__(self, kind: str, names: Iterable[str], *, sim: Optional[Simulator] = None,
                 sim_config: Optional[SimConfig] = None, channels: Iterable[ChannelSpec] = (),
                 mesh: Optional[MeshParams] = None, hyparview: Optional[HyParViewParams] = None,
                 pubsub: Optional[PubSubParams] = None, tags: Optional[Mapping[str, str]] = None,
                 max_frame_size: int = MAX_FRAME_SIZE):
        self.kind = kind
        self.sim = sim or Simulator(sim_config)
        self.channels = tuple(channels)
        self.mesh = mesh or MeshParams()
        self.hyparview = hyparview or HyParViewParams()
        self.pubsub = pubsub or PubSubParams()
        self.max_frame_size = max_frame_size
        names = list(names)
        tags = dict(tags or {})
        self.specs = {n: NodeSpec(n, tag=tags.get(n, "undefined")) for n in names}
        self.broker = Broker(self.sim, self.pubsub.broker) if kind == PUB_SUB else None
        self.services: dict[str, PeerService] = {}
        for name in names:
            self.add(name)

    def config_for(self, name: str) -> TopologyConfig:
        specs = list(self.specs.values())
        return TopologyConfig(
            kind=self.kind, local=self.specs[name], channels=self.channels, mesh=self.mesh,
            hyparview=self.hyparview, pubsub=self.pubsub,
            roster=tuple(specs) if self.kind == STATIC else (),
            servers=tuple(s for s in specs if s.tag == SERVER) if self.kind == CLIENT_SERVER else (),
            max_frame_size=self.max_frame_size)

    def add(self, name: str, tag: Optional[str] = None) -> PeerService:
        if name not in self.specs or tag is not None:
            self.specs[name] = NodeSpec(name, tag=tag or "undefined")
        service = PeerService(self.sim, self.config_for(name))
        self.services[name] = service
        return service

    def __getitem__(self, name: str) -> PeerService:
        return self.services[name]

    @property
    def names(self) -> list[str]:
        return list(self.services)

    def alive(self) -> list[str]:
        return [n for n, s in self.services.items()
                if self.sim.is_alive(n) and not s.backend.stopped]

    # -- forming the cluster ------------------------------------------------------------

    def join_all(self, contact: Optional[str] = None, stagger: float = 0.0) -> None:
        """Every node joins ``contact`` (default: the first node), ``stagger`` seconds apart."""
        if self.kind == STATIC:
            return
        names = self.names
        contact = contact or names[0]
        for i, name in enumerate(n for n in names if n != contact):
            if stagger and i:
                self.sim.run_for(stagger)
            self.services[name].join(self.specs[contact])

    def views(self, names: Optional[Iterable[str]] = None) -> dict[str, tuple[str, ...]]:
        return {n: tuple(self.services[n].members()) for n in (names or self.alive())}

    def views_agree(self, expected: Optional[Iterable[str]] = None) -> bool:
        views = set(self.views().values())
        if len(views) != 1:
            return False
        return expected is None or views.pop() == tuple(sorted(expected))

    def mesh_ready(self) -> bool:
        """Views agree and every outbound connection slot is open."""
        return self.views_agree(self.alive()) and all(
            self.services[n].backend.matrix_full() for n in self.alive())

    def overlay_connected(self, names: Optional[Iterable[str]] = None) -> bool:
        """Is the (undirected) active-view graph over ``names`` one component?"""
        nodes = set(names or self.alive())
        if not nodes:
            return True
        adjacency = {n: set() for n in nodes}
        for n in nodes:
            for peer in self.services[n].backend.active:
                if peer in nodes:
                    adjacency[n].add(peer)
                    adjacency[peer].add(n)
        start = min(nodes)
        seen = {start}
        todo = deque([start])
        while todo:
            for peer in adjacency[todo.popleft()]:
                if peer not in seen:
                    seen.add(peer)
                    todo.append(peer)
        return seen == nodes

    def run_until(self, predicate, timeout: float, step: float = 0.01) -> bool:
        return self.sim.run_until(predicate, timeout, step)

    def crash(self, name: str) -> None:
        self.sim.crash(name)
