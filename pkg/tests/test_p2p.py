from __future__ import annotations

from collections import Counter

from hypothesis import given, settings
from hypothesis import strategies as st

from topocluster import Cluster, HyParViewParams, SimConfig
from topocluster.backends.p2p import HIGH
from topocluster import codec


def p2p(names, seed=0, **hv):
    hv.setdefault("heartbeat_interval", None)
    return Cluster("peer_to_peer", names, sim_config=SimConfig(seed=seed),
                   hyparview=HyParViewParams(**hv))


def invariants(c, names):
    for n in names:
        b = c[n].backend
        assert not (b.active & b.passive)
        assert n not in b.active and n not in b.passive
        assert len(b.active) <= b.params.active_size
        assert len(b.passive) <= b.params.passive_size
        b.plumtree.check_invariants()


def test_two_nodes_become_mutual_neighbours():
    c = p2p(["a", "b"])
    c["b"].join(c.specs["a"])
    c.sim.run_for(1)
    assert c["a"].backend.active == {"b"} and c["b"].backend.active == {"a"}
    assert c["a"].members() == ["a", "b"]


def test_full_active_view_evicts_to_passive():
    c = p2p(["a", "b", "c", "d"], active_size=2)
    c.join_all(stagger=0.5)
    c.sim.run_for(3)
    invariants(c, c.names)
    for n in c.names:
        b = c[n].backend
        assert len(b.active) <= 2
    # nobody was forgotten: every node is in some view
    known = set()
    for n in c.names:
        known |= c[n].backend.active | c[n].backend.passive
    assert known == set(c.names)


def test_high_priority_neighbor_request_accepted_when_full():
    c = p2p(["a", "b", "c", "x"], active_size=2)
    a = c["a"].backend
    a.add_active("b")
    a.add_active("c")
    a.handle_control("neighbor", HIGH, "x", None)
    assert "x" in a.active and len(a.active) == 2
    # the evicted neighbour moved to passive
    assert len(a.passive & {"b", "c"}) == 1


def test_low_priority_neighbor_request_refused_when_full():
    c = p2p(["a", "b", "c", "x"], active_size=2)
    a = c["a"].backend
    a.add_active("b")
    a.add_active("c")
    a.handle_control("neighbor", "low", "x", None)
    assert a.active == {"b", "c"}


def test_active_view_is_symmetric_once_settled():
    names = [f"n{i}" for i in range(12)]
    c = p2p(names, seed=4)
    c.join_all(stagger=0.05)
    assert c.run_until(c.overlay_connected, 30)
    c.sim.run_for(30)
    for n in names:
        for peer in c[n].backend.active:
            assert n in c[peer].backend.active


def test_shuffle_fills_passive_views_without_self():
    names = [f"n{i}" for i in range(12)]
    c = p2p(names, seed=2, shuffle_interval=1.0, active_size=3)
    c.join_all(stagger=0.05)
    c.sim.run_for(20)
    invariants(c, names)
    for n in names:
        assert c[n].backend.passive, n


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 14))
def test_view_invariants_hold_throughout(seed, n):
    names = [f"n{i:02d}" for i in range(n)]
    c = p2p(names, seed=seed, active_size=3, passive_size=6, shuffle_interval=2.0)
    c.join_all(stagger=0.02)
    for _ in range(20):
        c.sim.run_for(0.5)
        invariants(c, names)


def test_plumtree_line_uses_one_send_per_hop():
    c = p2p(["a", "b", "c"])
    c["b"].join(c.specs["a"])
    c.sim.run_for(1)
    # force a line a - b - c
    c["c"].join(c.specs["b"])
    c.sim.run_for(1)
    c["a"].backend.handle_control("disconnect", None, "c", None)
    c["c"].backend.handle_control("disconnect", None, "a", None)
    c.sim.run_for(1)
    assert c["a"].backend.active == {"b"} and c["c"].backend.active == {"b"}
    got = Counter()
    for n in c.names:
        c[n].backend.on_broadcast(lambda mid, p, n=n: got.update([n]))
    mid = c["a"].backend.broadcast(b"hello")
    c.sim.run_for(1)
    assert sum(c[n].backend.plumtree.stats.payload_sends[mid] for n in c.names) == 2
    assert got == Counter({"a": 1, "b": 1, "c": 1})


def test_graft_recovers_message_after_heal():
    names = [f"n{i}" for i in range(6)]
    c = p2p(names, seed=1)
    c.join_all(stagger=0.05)
    assert c.run_until(c.overlay_connected, 30)
    c.sim.run_for(10)
    got = Counter()
    for n in names:
        c[n].backend.on_broadcast(lambda mid, p, n=n: got.update([(n, mid)]))
    c.sim.partition(["n3"], [n for n in names if n != "n3"])
    mid = c["n0"].backend.broadcast(b"x")
    c.sim.run_for(2)
    c.sim.heal()
    assert c.run_until(lambda: all(got[(n, mid)] == 1 for n in names), 30)
    assert max(got.values()) == 1


def test_transitive_routing_and_stale_tree_drop():
    names = ["a", "b", "c"]
    c = Cluster("peer_to_peer", names, hyparview=HyParViewParams(heartbeat_interval=1.0))
    c["b"].join(c.specs["a"])
    c.sim.run_for(0.5)
    c["c"].join(c.specs["b"])
    c.sim.run_for(0.5)
    # a and c cannot reach each other, so b is the only path
    c.sim.partition(["a"], ["c"])
    c.sim.run_for(3)
    assert "c" not in c["a"].backend.active
    got = []
    c["c"].register_name("h", got.append)
    c["a"].forward_message("c", None, "h", b"x")
    c.sim.run_for(0.5)
    assert len(got) == 1 and c["b"].stats["relayed"] == 1
    # stop c's heartbeats from reaching anyone; a's entry for c goes stale
    c.crash("c")
    c.sim.run_for(5)
    c["a"].forward_message("c", None, "h", b"y")
    assert c["a"].stats["tree_drops"] == 1


def test_leave_propagates_to_active_peer():
    c = p2p(["a", "b"])
    c["b"].join(c.specs["a"])
    c.sim.run_for(1)
    c["a"].leave("b")
    c.sim.run_for(1)
    assert c["b"].backend.stopped
    assert c["a"].members() == ["a"]


def test_control_frames_roundtrip():
    frame = codec.encode_control("shuffle", ("a", 6, ("a", "b")))
    assert codec.decode_control(frame) == ("shuffle", ("a", 6, ("a", "b")))
