"""Benchmark workloads run inside the simulator.

Every runner takes a parameter dataclass plus a :class:`RunContext` (seed,
topology kind, simulator and backend overrides) and returns a list of
:class:`ScenarioResult`. Workers are virtual: they are callbacks interleaved
by the event loop, so a run is a pure function of its inputs.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Mapping, Optional

from .. import codec
from ..cluster import Cluster
from ..service import (CLIENT_SERVER, FULL_MESH, PEER_TO_PEER, PUB_SUB, STATIC, HyParViewParams,
                       MeshParams, PubSubParams)
from ..sim import SimConfig
from ..types import DEFAULT_CHANNEL, SERVER, ChannelSpec
from .gcounter import GCounter
from .results import OpRecord, ScenarioResult
from .ring import REPLICAS, Ring, build_ring, preference_list

KB = 1024
MB = 1024 * 1024

_HDR = struct.Struct(">II")  # worker, op index


class ScenarioError(RuntimeError):
    """The scenario could not run to completion (e.g. the cluster never formed)."""


@dataclass(frozen=True)
class RunContext:
    seed: int = 0
    kind: Optional[str] = None
    sim: Mapping[str, Any] = field(default_factory=dict)
    mesh: Mapping[str, Any] = field(default_factory=dict)
    hyparview: Mapping[str, Any] = field(default_factory=dict)
    pubsub: Mapping[str, Any] = field(default_factory=dict)
    record_events: bool = False

    def sim_config(self, **defaults) -> SimConfig:
        values = {"seed": self.seed, "record_events": self.record_events, **defaults}
        values.update(self.sim)
        return SimConfig(**values)


# -- shared plumbing -------------------------------------------------------------------


def _form_cluster(kind: str, names: list[str], ctx: RunContext, *, channels=(),
                  sim_defaults: Optional[dict] = None, tags: Optional[dict] = None,
                  hyparview_defaults: Optional[dict] = None, timeout: float = 120.0) -> Cluster:
    hyparview = replace(HyParViewParams(), **{**(hyparview_defaults or {}), **ctx.hyparview})
    cluster = Cluster(kind, names, sim_config=ctx.sim_config(**(sim_defaults or {})),
                      channels=channels, mesh=replace(MeshParams(), **ctx.mesh),
                      hyparview=hyparview, pubsub=replace(PubSubParams(), **ctx.pubsub), tags=tags)
    cluster.join_all()
    if kind in (FULL_MESH, STATIC):
        ready = cluster.mesh_ready
    elif kind == CLIENT_SERVER:
        def ready():
            servers = [n for n in names if cluster.specs[n].tag == SERVER]
            return (all(cluster[n].members() == sorted(names) for n in servers)
                    and all(cluster[n].backend.matrix_full() for n in names))
    elif kind == PUB_SUB:
        def ready():
            return cluster.views_agree(names)
    else:
        ready = cluster.overlay_connected
    if not cluster.run_until(ready, timeout, step=0.05):
        raise ScenarioError(f"{kind} cluster of {len(names)} nodes did not form within {timeout}s")
    return cluster


def _finish(name: str, params, kind: str, cluster: Cluster, ops: list[OpRecord], runtime: float,
            metrics: dict, checks: dict) -> ScenarioResult:
    sim = cluster.sim
    deliveries: Counter = Counter()
    for service in cluster.services.values():
        deliveries.update(service.stats)
    if cluster.broker is not None:
        deliveries["broker_dead_letters"] += cluster.broker.stats["dead_letters"]
    config = {"kind": kind, **asdict(params)}
    ops = sorted(ops, key=lambda op: (op.worker, op.op_index))
    return ScenarioResult(name, config, ops, runtime, dict(sorted(sim.bytes_sent.items())),
                          dict(sorted(sim.bytes_received.items())), deliveries, metrics, checks,
                          sim.trace_hash(),
                          sim.trace.dumps() if sim.trace.keep_events else "")


def _resolve_kind(ctx: RunContext, allowed: tuple[str, ...], default: str) -> str:
    kind = ctx.kind or default
    if kind not in allowed:
        raise ValueError(f"this scenario supports topologies {list(allowed)}, not {kind!r}")
    return kind


def _worker_key(worker: int) -> bytes:
    return f"w{worker}".encode()


def _traffic_channels(count: int, parallelism: int) -> tuple[list[ChannelSpec], list[str]]:
    """Channel specs plus the channel name each worker index cycles through."""
    if count <= 1:
        return [ChannelSpec(DEFAULT_CHANNEL, parallelism)], [DEFAULT_CHANNEL]
    names = [f"c{i}" for i in range(count)]
    return [ChannelSpec(n, parallelism) for n in names], names


MESSAGING_KINDS = (FULL_MESH, STATIC, PUB_SUB)


# -- unicast -----------------------------------------------------------------------------


@dataclass(frozen=True)
class UnicastParams:
    workers: int = 16
    messages: int = 100
    payload_size: int = 64 * KB
    rtt: float = 0.001
    channels: int = 1
    parallelism: int = 1
    baseline: bool = False
    bandwidth: float = 125e6
    closed_loop: bool = False
    timeout: float = 3600.0


def run_unicast(params: UnicastParams = UnicastParams(), ctx: RunContext = RunContext()
                ) -> list[ScenarioResult]:
    """Workers on n1 each send ``messages`` payloads to a paired receiver on n2."""
    p = params
    kind = _resolve_kind(ctx, MESSAGING_KINDS, FULL_MESH)
    n_channels, parallelism = (1, 1) if p.baseline else (p.channels, p.parallelism)
    specs, worker_channels = _traffic_channels(n_channels, parallelism)
    cluster = _form_cluster(kind, ["n1", "n2"], ctx, channels=specs,
                            sim_defaults={"default_rtt": p.rtt,
                                          "max_in_flight_bandwidth": p.bandwidth or None})
    sim = cluster.sim
    sender, receiver = cluster["n1"], cluster["n2"]
    pad = bytes(max(0, p.payload_size - _HDR.size))
    sent_at: dict[tuple[int, int], float] = {}
    ops: list[OpRecord] = []

    def channel(w: int) -> str:
        return worker_channels[w % len(worker_channels)]

    def send(w: int, idx: int) -> None:
        sent_at[(w, idx)] = sim.now
        sender.cast_message("n2", channel(w), "unicast", _HDR.pack(w, idx) + pad,
                            {"partition_key": _worker_key(w)})

    def on_message(d) -> None:
        w, idx = _HDR.unpack_from(d.payload)
        ops.append(OpRecord(w, idx, sent_at[(w, idx)], sim.now))
        if p.closed_loop:
            receiver.cast_message("n1", channel(w), "unicast_ack", d.payload[:_HDR.size],
                                  {"partition_key": _worker_key(w)})

    def on_ack(d) -> None:
        w, idx = _HDR.unpack_from(d.payload)
        if idx + 1 < p.messages:
            send(w, idx + 1)

    receiver.register_name("unicast", on_message)
    sender.register_name("unicast_ack", on_ack)
    t0 = sim.now
    if p.closed_loop:
        for w in range(p.workers):
            send(w, 0)
    else:
        for idx in range(p.messages):
            for w in range(p.workers):
                send(w, idx)
    total = p.workers * p.messages
    sim.run_until(lambda: len(ops) >= total, p.timeout)
    runtime = max((op.end for op in ops), default=t0) - t0
    checks = {"all_delivered": len(ops) == total}
    metrics = {"completion_time": runtime, "delivered": len(ops)}
    return [_finish("unicast", p, kind, cluster, ops, runtime, metrics, checks)]


# -- channel separation ---------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSeparationParams:
    workers: int = 50
    messages: int = 200
    payload_size: int = 1 * KB
    gossip_size: int = 1 * MB
    metadata_size: int = 0
    period: float = 0.1
    rtt: float = 0.001
    bandwidth: float = 12.5e6
    timeout: float = 3600.0


SEPARATED_CHANNELS = ("requests", "metadata", "gossip")


def _run_separation(p: ChannelSeparationParams, ctx: RunContext, kind: str, separated: bool
                    ) -> ScenarioResult:
    names = ["n1", "n2", "n3"]
    specs = [ChannelSpec(n) for n in SEPARATED_CHANNELS] if separated else []
    cluster = _form_cluster(kind, names, ctx, channels=specs,
                            sim_defaults={"default_rtt": p.rtt,
                                          "max_in_flight_bandwidth": p.bandwidth or None})
    sim = cluster.sim
    pad = bytes(max(0, p.payload_size - _HDR.size))
    background = [(ch, bytes(size)) for ch, size in
                  (("gossip", p.gossip_size), ("metadata", p.metadata_size)) if size > 0]
    sent_at: dict[tuple[int, int], float] = {}
    ops: list[OpRecord] = []
    client = cluster["n1"]

    def target(w: int) -> str:
        return names[1 + w % 2]

    def send(w: int, idx: int) -> None:
        sent_at[(w, idx)] = sim.now
        client.cast_message(target(w), "requests", "request", _HDR.pack(w, idx) + pad)

    def on_ack(d) -> None:
        w, idx = _HDR.unpack_from(d.payload)
        ops.append(OpRecord(w, idx, sent_at[(w, idx)], sim.now))
        if idx + 1 < p.messages:
            send(w, idx + 1)

    for name in names:
        service = cluster[name]
        service.register_name("background", lambda d: None)
        service.register_name(
            "request", lambda d, s=service: s.cast_message(d.src, "requests", "ack",
                                                          d.payload[:_HDR.size]))
    client.register_name("ack", on_ack)

    def background_tick(name: str) -> None:
        for peer in names:
            if peer != name:
                for ch, payload in background:
                    cluster[name].cast_message(peer, ch, "background", payload)

    tickers = [sim.every(p.period, lambda n=n: background_tick(n), owner=n) for n in names]
    t0 = sim.now
    for w in range(p.workers):
        send(w, 0)
    total = p.workers * p.messages
    sim.run_until(lambda: len(ops) >= total, p.timeout)
    for t in tickers:
        t.cancel()
    runtime = max((op.end for op in ops), default=t0) - t0
    label = "separated" if separated else "shared"
    return _finish(f"channel_separation/{label}", p, kind, cluster, ops, runtime,
                   {"completion_time": runtime}, {"all_delivered": len(ops) == total})


def run_channel_separation(params: ChannelSeparationParams = ChannelSeparationParams(),
                           ctx: RunContext = RunContext()) -> list[ScenarioResult]:
    """Same foreground load twice: background bulk traffic on the shared
    default channel, then on dedicated channels. Returns [shared, separated]."""
    kind = _resolve_kind(ctx, (FULL_MESH, STATIC), FULL_MESH)
    shared = _run_separation(params, ctx, kind, separated=False)
    separated = _run_separation(params, ctx, kind, separated=True)
    speedup = shared.runtime / separated.runtime if separated.runtime > 0 else float("inf")
    for res in (shared, separated):
        res.metrics["speedup"] = speedup
    return [shared, separated]


# -- echo on a ring ------------------------------------------------------------------------------


@dataclass(frozen=True)
class EchoParams:
    workers: int = 8
    ops: int = 20
    payload_size: int = 1 * MB
    nodes: int = 3
    partitions: int = 64
    rtt: float = 0.001
    channels: int = 1
    parallelism: int = 1
    bandwidth: float = 125e6
    timeout: float = 3600.0


def _node_names(count: int) -> list[str]:
    return [f"n{i + 1}" for i in range(count)]


def run_echo(params: EchoParams = EchoParams(), ctx: RunContext = RunContext()
             ) -> list[ScenarioResult]:
    """Workers on n1 send each request to the owner of its key's partition,
    which echoes the payload back."""
    p = params
    kind = _resolve_kind(ctx, MESSAGING_KINDS, FULL_MESH)
    names = _node_names(p.nodes)
    specs, worker_channels = _traffic_channels(p.channels, p.parallelism)
    cluster = _form_cluster(kind, names, ctx, channels=specs,
                            sim_defaults={"default_rtt": p.rtt,
                                          "max_in_flight_bandwidth": p.bandwidth or None})
    sim = cluster.sim
    ring = build_ring(names, p.partitions)
    pad = bytes(max(0, p.payload_size - _HDR.size))
    client = cluster["n1"]
    sent_at: dict[tuple[int, int], float] = {}
    ops: list[OpRecord] = []

    def channel(w: int) -> str:
        return worker_channels[w % len(worker_channels)]

    def send(w: int, idx: int) -> None:
        owner = ring.owner(ring.partition_of(f"echo/{w}/{idx}"))
        sent_at[(w, idx)] = sim.now
        client.cast_message(owner, channel(w), "echo", _HDR.pack(w, idx) + pad,
                            {"partition_key": _worker_key(w)})

    def on_reply(d) -> None:
        w, idx = _HDR.unpack_from(d.payload)
        ops.append(OpRecord(w, idx, sent_at[(w, idx)], sim.now))
        if idx + 1 < p.ops:
            send(w, idx + 1)

    for name in names:
        service = cluster[name]
        service.register_name("echo", lambda d, s=service: s.cast_message(
            d.src, d.channel, "echo_reply", d.payload, {"partition_key": d.partition_key}))
    client.register_name("echo_reply", on_reply)
    t0 = sim.now
    for w in range(p.workers):
        send(w, 0)
    total = p.workers * p.ops
    sim.run_until(lambda: len(ops) >= total, p.timeout)
    runtime = max((op.end for op in ops), default=t0) - t0
    return [_finish("echo", p, kind, cluster, ops, runtime, {"completion_time": runtime},
                    {"all_replied": len(ops) == total})]


# -- quorum key-value store ---------------------------------------------------------------------


@dataclass(frozen=True)
class KVResult:
    ok: bool
    value: Optional[bytes] = None
    error: Optional[str] = None
    version: Optional[tuple[int, str]] = None


@dataclass
class _Pending:
    op: str
    key: str
    callback: Callable[[KVResult], None]
    timer: Any = None
    replies: list = field(default_factory=list)
    version: Optional[tuple[int, str]] = None


class KVNode:
    """Coordinator and replica roles of one node of the quorum store.

    A request goes to the three partitions of the key's preference list;
    each replica waits ``storage_delay`` and replies; the coordinator answers
    once ``quorum`` replies are in, or with a timeout error.
    """

    def __init__(self, service, ring: Ring, *, quorum: int = 2, storage_delay: float = 0.001,
                 timeout: float = 1.0, channel: str = DEFAULT_CHANNEL):
        self.service = service
        self.sim = service.sim
        self.name = service.name
        self.ring = ring
        self.quorum = quorum
        self.storage_delay = storage_delay
        self.timeout = timeout
        self.channel = channel
        self.store: dict[tuple[int, str], tuple[tuple[int, str], bytes]] = {}
        self.versions: Counter = Counter()
        self.pending: dict[int, _Pending] = {}
        self._next_id = 0
        service.register_name("kv", self._on_request)
        service.register_name("kv_reply", self._on_reply)

    # coordinator side

    def put(self, key: str, value: bytes, callback: Callable[[KVResult], None]) -> None:
        self.versions[key] += 1
        version = (self.versions[key], self.name)
        self._start("put", key, callback, value, version)

    def get(self, key: str, callback: Callable[[KVResult], None]) -> None:
        self._start("get", key, callback, b"", None)

    def _start(self, op: str, key: str, callback, value: bytes, version) -> None:
        self._next_id += 1
        req = self._next_id
        pending = self.pending[req] = _Pending(op, key, callback, version=version)
        pending.timer = self.sim.schedule(self.timeout, self._expire, req, owner=self.name)
        pref = preference_list(self.ring, key)
        vcount, vnode = version or (0, "")
        for partition, owner in zip(pref.partitions, pref.nodes):
            body = codec.encode_term((op, req, partition, key, vcount, vnode, value))
            self.service.cast_message(owner, self.channel, "kv", body,
                                      {"partition_key": key.encode()})

    def _expire(self, req: int) -> None:
        pending = self.pending.pop(req, None)
        if pending is not None:
            pending.callback(KVResult(False, error="timeout"))

    def _on_reply(self, d) -> None:
        req, vcount, vnode, value = codec.decode_term(d.payload)
        pending = self.pending.get(req)
        if pending is None:
            return
        pending.replies.append(((vcount, vnode), value))
        if len(pending.replies) < self.quorum:
            return
        del self.pending[req]
        pending.timer.cancel()
        if pending.op == "put":
            pending.callback(KVResult(True, version=pending.version))
            return
        version, value = max(pending.replies, key=lambda r: r[0])
        if version == (0, ""):
            pending.callback(KVResult(True, None, version=None))
        else:
            pending.callback(KVResult(True, value, version=version))

    # replica side

    def _on_request(self, d) -> None:
        self.sim.schedule(self.storage_delay, self._apply, d.src, codec.decode_term(d.payload),
                          owner=self.name)

    def _apply(self, coordinator: str, request) -> None:
        op, req, partition, key, vcount, vnode, value = request
        slot = (partition, key)
        if op == "put":
            current = self.store.get(slot)
            if current is None or (vcount, vnode) > current[0]:
                self.store[slot] = ((vcount, vnode), value)
            reply = (req, vcount, vnode, b"")
        else:
            (rc, rn), stored = self.store.get(slot, ((0, ""), b""))
            reply = (req, rc, rn, stored)
        self.service.cast_message(coordinator, self.channel, "kv_reply", codec.encode_term(reply),
                                  {"partition_key": key.encode()})


@dataclass(frozen=True)
class KVParams:
    workers: int = 4
    ops: int = 100
    get_put_ratio: str = "1:1"
    key_count: int = 10_000
    payload_size: int = 64 * KB
    replicas: int = REPLICAS
    quorum: int = 2
    storage_delay: float = 0.001
    request_timeout: float = 1.0
    read_your_writes: bool = False
    partitions: int = 64
    rtt: float = 0.001
    channels: int = 1
    parallelism: int = 1
    bandwidth: float = 125e6
    timeout: float = 36_000.0


def parse_ratio(ratio: str | float) -> float:
    """``"gets:puts"`` (or a plain number of gets per put) to the fraction of gets."""
    if isinstance(ratio, (int, float)):
        gets, puts = float(ratio), 1.0
    else:
        left, sep, right = str(ratio).partition(":")
        gets, puts = (float(left), float(right)) if sep else (float(left), 1.0)
    if gets < 0 or puts < 0 or gets + puts == 0:
        raise ValueError(f"bad get:put ratio {ratio!r}")
    return gets / (gets + puts)


def choose_key(rng, key_count: int) -> int:
    """Normal over the key index space, mean in the middle, clamped to it."""
    idx = int(round(rng.gauss(key_count / 2, key_count / 6)))
    return min(max(idx, 0), key_count - 1)


@dataclass
class KVCluster:
    cluster: Cluster
    ring: Ring
    stores: dict[str, KVNode]

    @property
    def sim(self):
        return self.cluster.sim

    def call(self, node: str, op: str, key: str, value: bytes = b"",
             limit: float = 60.0) -> KVResult:
        """Run one operation to completion and return its result."""
        box: list[KVResult] = []
        store = self.stores[node]
        if op == "put":
            store.put(key, value, box.append)
        else:
            store.get(key, box.append)
        if not self.sim.run_until(lambda: bool(box), limit, step=0.001):
            raise ScenarioError(f"{op} {key!r} produced no result within {limit}s")
        return box[0]


def build_kv_cluster(params: KVParams = KVParams(), ctx: RunContext = RunContext(),
                     nodes: int = 3) -> KVCluster:
    p = params
    if p.replicas != REPLICAS:
        raise ValueError(f"preference lists have {REPLICAS} partitions")
    if not 1 <= p.quorum <= p.replicas:
        raise ValueError("quorum must be between 1 and the replica count")
    kind = _resolve_kind(ctx, MESSAGING_KINDS, FULL_MESH)
    names = _node_names(nodes)
    if p.channels > 1 or p.parallelism > 1:
        specs, channel = [ChannelSpec("kv", p.parallelism)], "kv"
    else:
        specs, channel = [], DEFAULT_CHANNEL
    cluster = _form_cluster(kind, names, ctx, channels=specs,
                            sim_defaults={"default_rtt": p.rtt,
                                          "max_in_flight_bandwidth": p.bandwidth or None})
    ring = build_ring(names, p.partitions)
    stores = {n: KVNode(cluster[n], ring, quorum=p.quorum, storage_delay=p.storage_delay,
                        timeout=p.request_timeout, channel=channel) for n in names}
    return KVCluster(cluster, ring, stores)


def run_kv_workload(params: KVParams = KVParams(), ctx: RunContext = RunContext()
                    ) -> list[ScenarioResult]:
    """Closed-loop workers on n1 issue gets and puts with normally distributed keys.

    With ``read_your_writes`` every op is a put followed by a get of the same
    key, and a get that does not return the value just written is counted as
    a violation.
    """
    p = params
    kv = build_kv_cluster(p, ctx)
    sim = kv.sim
    rng = sim.rng_for("kv-workload")
    get_fraction = parse_ratio(p.get_put_ratio)
    store = kv.stores["n1"]
    pad = bytes(max(0, p.payload_size - _HDR.size))
    ops: list[OpRecord] = []
    tally: Counter = Counter()

    def next_op(w: int, idx: int) -> None:
        if idx >= p.ops:
            return
        key = f"key{choose_key(rng, p.key_count)}"
        start = sim.now
        if p.read_your_writes:
            value = _HDR.pack(w, idx) + pad

            def after_get(res: KVResult) -> None:
                tally["gets"] += 1
                ok = res.ok and res.value == value
                tally["violations"] += res.ok and res.value != value
                tally["timeouts"] += not res.ok
                ops.append(OpRecord(w, idx, start, sim.now, ok))
                next_op(w, idx + 1)

            def after_put(res: KVResult) -> None:
                tally["puts"] += 1
                if not res.ok:
                    tally["timeouts"] += 1
                    ops.append(OpRecord(w, idx, start, sim.now, False))
                    next_op(w, idx + 1)
                else:
                    store.get(key, after_get)

            store.put(key, value, after_put)
            return

        def done(res: KVResult) -> None:
            tally["timeouts"] += not res.ok
            ops.append(OpRecord(w, idx, start, sim.now, res.ok))
            next_op(w, idx + 1)

        if rng.random() < get_fraction:
            tally["gets"] += 1
            store.get(key, done)
        else:
            tally["puts"] += 1
            store.put(key, _HDR.pack(w, idx) + pad, done)

    t0 = sim.now
    for w in range(p.workers):
        next_op(w, 0)
    total = p.workers * p.ops
    sim.run_until(lambda: len(ops) >= total, p.timeout, step=0.1)
    runtime = max((op.end for op in ops), default=t0) - t0
    metrics = {"completion_time": runtime, "gets": tally["gets"], "puts": tally["puts"],
               "timeouts": tally["timeouts"], "violations": tally["violations"]}
    checks = {"all_completed": len(ops) == total, "no_timeouts": tally["timeouts"] == 0,
              "read_your_writes": tally["violations"] == 0}
    return [_finish("kv", p, kv.cluster.kind, kv.cluster, ops, runtime, metrics, checks)]


# -- advertisement counter ----------------------------------------------------------------------


@dataclass(frozen=True)
class AdCounterParams:
    nodes: int = 16
    servers: int = 1
    duration: float = 60.0
    ad_interval: float = 10.0
    propagation_interval: float = 5.0
    quiesce_timeout: float = 300.0


def run_ad_counter(params: AdCounterParams = AdCounterParams(), ctx: RunContext = RunContext()
                   ) -> list[ScenarioResult]:
    """Each node bumps its own counter entry every ``ad_interval`` and pushes
    its whole counter to its current peers every ``propagation_interval``."""
    p = params
    kind = _resolve_kind(ctx, (CLIENT_SERVER, PEER_TO_PEER), CLIENT_SERVER)
    width = len(str(p.nodes))
    names = [f"n{i:0{width}d}" for i in range(p.nodes)]
    tags = None
    if kind == CLIENT_SERVER:
        if not 1 <= p.servers <= p.nodes:
            raise ValueError("need between 1 and `nodes` servers")
        tags = {n: ("server" if i < p.servers else "client") for i, n in enumerate(names)}
    cluster = _form_cluster(kind, names, ctx, tags=tags,
                            hyparview_defaults={"heartbeat_interval": None})
    sim = cluster.sim
    counters = {n: GCounter() for n in names}

    def on_state(name: str, d) -> None:
        counters[name].merge_in(GCounter.decode(d.payload))

    def propagate(name: str) -> None:
        service = cluster[name]
        state = counters[name].encode()
        for peer in service.members():
            if peer != name:
                service.cast_message(peer, None, "counter", state)

    increments: Counter = Counter()

    def advertise(name: str) -> None:
        counters[name].increment(name)
        increments[name] += 1

    for name in names:
        cluster[name].register_name("counter", lambda d, n=name: on_state(n, d))
    sent0, recv0 = Counter(sim.bytes_sent), Counter(sim.bytes_received)
    t0 = sim.now
    ad_timers = [sim.every(p.ad_interval, lambda n=n: advertise(n), owner=n, phase=p.ad_interval)
                 for n in names]
    push_timers = [sim.every(p.propagation_interval, lambda n=n: propagate(n), owner=n,
                             phase=p.propagation_interval) for n in names]
    sim.run_for(p.duration)
    for t in ad_timers:
        t.cancel()
    sent = Counter(sim.bytes_sent)
    sent.subtract(sent0)
    recv = Counter(sim.bytes_received)
    recv.subtract(recv0)
    total = sum(increments.values())
    converged = sim.run_until(lambda: all(c.value == total for c in counters.values()),
                              p.quiesce_timeout, step=p.propagation_interval / 5)
    quiesce = sim.now - t0 - p.duration
    for t in push_timers:
        t.cancel()
    per_node = {n: sent[n] + recv[n] for n in names}
    metrics = {
        "increments": total,
        "max_node_bytes": max(per_node.values()),
        "mean_node_bytes": sum(per_node.values()) / len(names),
        "state_bytes": len(counters[names[0]].encode()),
        "quiesce_time": quiesce,
        "converged": int(converged),
    }
    if kind == CLIENT_SERVER:
        servers = [n for n in names if tags[n] == "server"]
        metrics["server_ingress_bytes"] = max(recv[s] for s in servers)
    return [_finish("ad_counter", p, kind, cluster, [], p.duration, metrics,
                    {"converged": converged})]


# -- registry -------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    summary: str
    params: type
    runner: Callable[..., list[ScenarioResult]]
    topologies: tuple[str, ...]
    notes: tuple[str, ...] = ()

    def describe(self) -> str:
        lines = [f"{self.name}: {self.summary}",
                 f"  topologies: {', '.join(self.topologies)} (default {self.topologies[0]})",
                 "  parameters:"]
        defaults = self.params()
        for f in fields(self.params):
            lines.append(f"    {f.name} = {getattr(defaults, f.name)!r}")
        lines.extend(f"  {note}" for note in self.notes)
        return "\n".join(lines)


SCENARIOS: dict[str, Scenario] = {s.name: s for s in (
    Scenario("unicast", "N workers on one node stream payloads to paired receivers on another",
             UnicastParams, run_unicast, MESSAGING_KINDS,
             ("baseline = true forces one channel with parallelism 1.",
              "Each worker's messages carry its own partition key.")),
    Scenario("channel_separation",
             "foreground requests with bulk background traffic, shared vs dedicated channels",
             ChannelSeparationParams, run_channel_separation, (FULL_MESH, STATIC),
             ("Runs twice and reports both completion times and their ratio.",)),
    Scenario("echo", "closed-loop echo requests routed to key owners on a hash ring",
             EchoParams, run_echo, MESSAGING_KINDS),
    Scenario("kv", "quorum key-value store over 3 replicas (quorum 2 of 3 by default)",
             KVParams, run_kv_workload, MESSAGING_KINDS,
             ("replicas = 3 partitions per key (primary plus two clockwise successors).",
              "Keys are drawn from a normal distribution over key_count keys.")),
    Scenario("ad_counter", "grow-only counters incremented per ad view and pushed to peers",
             AdCounterParams, run_ad_counter, (CLIENT_SERVER, PEER_TO_PEER)),
)}


def list_scenarios() -> list[str]:
    return list(SCENARIOS)


def describe(name: str) -> str:
    try:
        return SCENARIOS[name].describe()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}") from None


def run_scenario(name: str, params: Mapping[str, Any] | None = None,
                 ctx: RunContext = RunContext()) -> list[ScenarioResult]:
    scenario = SCENARIOS[name]
    return scenario.runner(scenario.params(**dict(params or {})), ctx)
