from __future__ import annotations

import pytest

from topocluster import (ChannelSpec, Cluster, DuplicateName, NodeSpec, PeerService, Simulator,
                         TopologyConfig)


def mesh(n=3, **kw):
    c = Cluster("full_mesh", [f"n{i}" for i in range(n)], **kw)
    c.join_all()
    assert c.run_until(c.mesh_ready, 10)
    return c


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        TopologyConfig(kind="ring", local=NodeSpec("a"))


def test_duplicate_node_name_rejected():
    sim = Simulator()
    PeerService(sim, TopologyConfig("full_mesh", NodeSpec("a")))
    with pytest.raises(ValueError):
        PeerService(sim, TopologyConfig("full_mesh", NodeSpec("a")))


def test_register_name_rules():
    c = mesh(1)
    s = c["n0"]
    s.register_name("x", lambda d: None)
    with pytest.raises(DuplicateName):
        s.register_name("x", lambda d: None)
    with pytest.raises(DuplicateName):
        s.register_name("$leave", lambda d: None)
    s.unregister_name("x")
    s.register_name("x", lambda d: None)


def test_forward_and_cast_are_distinguished():
    c = mesh(2)
    got = []
    c["n1"].register_name("h", got.append)
    c["n0"].forward_message("n1", None, "h", b"f")
    c["n0"].cast_message("n1", None, "h", b"c", {"partition_key": "k"})
    c.sim.run_for(1)
    assert [(d.kind, d.payload, d.src) for d in got] == [("forward", b"f", "n0"), ("cast", b"c", "n0")]
    assert got[1].partition_key == b"k"
    assert got[0].seq == 1 and got[1].seq == 2


def test_send_options_are_validated():
    c = mesh(2)
    with pytest.raises(ValueError):
        c["n0"].forward_message("n1", None, "h", b"", {"priority": 1})
    with pytest.raises(ValueError):
        c["n0"].forward_message("n1", None, "h", b"", {"ack": "sync"})
    c["n0"].forward_message("n1", None, "h", b"", {"ack": "none"})


def test_self_send_is_delivered_locally():
    c = mesh(1)
    got = []
    c["n0"].register_name("h", got.append)
    c["n0"].forward_message("n0", "default", "h", b"me")
    assert got == []  # delivery is asynchronous
    c.sim.run_for(0.01)
    assert got[0].payload == b"me"


def test_unregistered_name_dead_letters():
    c = mesh(2)
    c["n0"].forward_message("n1", None, "nobody", b"x")
    c.sim.run_for(1)
    assert c["n1"].stats["dead_letters"] == 1
    assert c["n1"].dead_letters[0].dst_name == "nobody"


def test_unknown_channel_falls_back_to_default():
    c = mesh(2, channels=[ChannelSpec("fast")])
    got = []
    c["n1"].register_name("h", got.append)
    c["n0"].forward_message("n1", "nonexistent", "h", b"x")
    c["n0"].forward_message("n1", "fast", "h", b"y")
    c.sim.run_for(1)
    assert [d.channel for d in got] == ["default", "fast"]


def test_unknown_destination_is_undeliverable():
    c = mesh(2)
    c["n0"].forward_message("ghost", None, "h", b"x")
    assert c["n0"].stats["undeliverable"] == 1


def test_membership_events():
    c = Cluster("full_mesh", ["a", "b"])
    events = []
    c["a"].on_membership_change(events.append)
    c["b"].join(c.specs["a"])
    c.sim.run_for(1)
    changed = [e for e in events if e.kind == "changed"]
    assert changed and changed[-1].members == ("a", "b") and changed[-1].added == ("b",)


def test_leave_by_name_or_spec():
    c = mesh(3)
    c["n0"].leave(c.specs["n2"])
    c.sim.run_for(3)
    assert c["n0"].members() == ["n0", "n1"]
    assert c["n2"].backend.stopped
    c["n1"].leave("n1")
    c.sim.run_for(3)
    assert c["n0"].members() == ["n0"]
