from __future__ import annotations

import math
from collections import deque

from hypothesis import given
from hypothesis import strategies as st

from topocluster import ChannelSpec, Cluster, MeshParams, SimConfig
from topocluster.backends.mesh import SHED, TRANSMIT, MonotonicQueueState, monotonic_dequeue


def formed(names, **kw):
    c = Cluster("full_mesh", names, **kw)
    c.join_all()
    assert c.run_until(c.mesh_ready, 20)
    return c


def test_connection_matrix_per_channel_and_slot():
    c = formed(["a", "b", "c"], channels=[ChannelSpec("x", 3)])
    for name in c.names:
        slots = c[name].backend.slots
        assert slots == [("default", 0), ("x", 0), ("x", 1), ("x", 2)]
        for peer in c.names:
            if peer != name:
                assert len(c[name].backend.open_slots(peer)) == 4


def test_keyed_messages_use_hashed_slot():
    c = formed(["a", "b"], channels=[ChannelSpec("x", 4)])
    c["b"].register_name("h", lambda d: None)
    for key in (b"k1", b"k2", b"k3"):
        c["a"].cast_message("b", "x", "h", b"", {"partition_key": key})
    c.sim.run_for(0.5)
    from topocluster import stable_hash
    sent = [e.slot for e in c.sim.trace.of_kind("frame_sent") if e.channel == "x"]
    assert sent == [stable_hash(k) % 4 for k in (b"k1", b"k2", b"k3")]


def test_unkeyed_messages_round_robin():
    c = formed(["a", "b"], channels=[ChannelSpec("x", 3)])
    c["b"].register_name("h", lambda d: None)
    for _ in range(6):
        c["a"].cast_message("b", "x", "h", b"")
    sent = [e.slot for e in c.sim.trace.of_kind("frame_sent") if e.channel == "x"]
    assert sent == [0, 1, 2, 0, 1, 2]


def test_pacing_spaces_out_connects():
    c = Cluster("full_mesh", ["a", "b"], channels=[ChannelSpec("x", 4)],
                mesh=MeshParams(refresh_interval=0.1))
    c.join_all()
    c.run_until(c.mesh_ready, 10)
    attempts = c["a"].backend.connect_attempts["b"]
    gaps = [y - x for x, y in zip(attempts, attempts[1:])]
    assert len(attempts) == 5 and min(gaps) >= 0.1 - 1e-9


def test_down_then_up_notifications():
    c = formed(["a", "b"], mesh=MeshParams(failure_timeout=1.0))
    events = []
    c["a"].on_membership_change(lambda e: events.append((e.kind, e.node)))
    c.sim.partition(["a"], ["b"])
    c.sim.run_for(2.0)
    assert ("down", "b") in events
    assert c["a"].members() == ["a", "b"]  # advisory only
    c.sim.heal()
    c.sim.run_for(2.0)
    assert events[-1] == ("up", "b")


def test_reconnect_after_partition():
    c = formed(["a", "b"])
    c.sim.partition(["a"], ["b"])
    c.sim.run_for(1)
    c.sim.heal()
    assert c.run_until(c.mesh_ready, 5)
    got = []
    c["b"].register_name("h", got.append)
    c["a"].forward_message("b", None, "h", b"x")
    c.sim.run_for(0.1)
    assert len(got) == 1


def test_rejoin_with_higher_epoch_after_leave():
    from topocluster import NodeSpec
    c = formed(["a", "b"])
    c["a"].leave("b")
    c.sim.run_for(2)
    assert c["a"].members() == ["a"]
    c["a"].join(NodeSpec("b", epoch=0))
    c.sim.run_for(1)
    assert c["a"].members() == ["a"]  # the tombstone wins at equal epoch
    c["a"].join(NodeSpec("b", epoch=1))
    c.sim.run_for(1)
    assert c["a"].members() == ["a", "b"]


def test_monotonic_dequeue_rule():
    s = MonotonicQueueState(window=1.0, pending=deque([1, 2, 3]))
    # nothing sent yet: the head goes out even though newer messages are queued
    assert monotonic_dequeue(s, 0.0).action == TRANSMIT
    s.pending.extend([4, 5])
    # transmitted 0.5s ago, more than one message behind: shed
    d = monotonic_dequeue(s, 0.5)
    assert d == type(d)(SHED, 2)
    # one message behind the head: keep it
    s.pending.popleft()
    assert s.pending == deque([4, 5])
    assert monotonic_dequeue(s, 0.6).action == TRANSMIT
    assert monotonic_dequeue(s, 0.7).action == TRANSMIT
    # window elapsed: transmit regardless of backlog
    s.pending.extend([6, 7, 8])
    assert monotonic_dequeue(s, 2.0).action == TRANSMIT


@given(st.lists(st.tuples(st.floats(0, 0.5), st.integers(0, 4)), max_size=60),
       st.floats(0.05, 2.0))
def test_monotonic_never_sheds_newest_and_respects_window(steps, window):
    s = MonotonicQueueState(window)
    now, sent, counter = 0.0, [], 0
    for dt, arrivals in steps:
        now += dt
        for _ in range(arrivals):
            s.pending.append(counter)
            counter += 1
        if s.pending:
            d = s.dequeue(now)
            if d.action == TRANSMIT:
                sent.append((now, d.item))
    while s.pending:
        now += 0.01
        d = s.dequeue(now)
        if d.action == TRANSMIT:
            sent.append((now, d.item))
    if counter:
        assert sent[-1][1] == counter - 1
    assert [i for _, i in sent] == sorted(i for _, i in sent)
    assert s.transmitted + s.shed == counter
    assert not math.isnan(s.last_sent_at)


def test_monotonic_channel_sheds_under_overload():
    c = formed(["a", "b"], channels=[ChannelSpec("m", monotonic=True)],
               sim_config=SimConfig(max_in_flight_bandwidth=1e5))
    got = []
    c["b"].register_name("h", lambda d: got.append(d.payload))
    for i in range(50):
        c["a"].cast_message("b", "m", "h", bytes([i]) * 1000)
    c.sim.run_for(5)
    assert c["a"].stats["shed"] > 0
    assert got[-1][0] == 49
