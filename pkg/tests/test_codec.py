from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from topocluster import codec
from topocluster.types import Envelope, MembershipView, NodeSpec

text = st.text(max_size=12)
envelopes = st.builds(Envelope, src=text, dst_node=text, dst_name=text, channel=text,
                      payload=st.binary(max_size=200), seq=st.integers(0, 2 ** 64 - 1),
                      partition_key=st.none() | st.binary(max_size=16))


@given(envelopes)
def test_envelope_roundtrip(env):
    frame = codec.encode_envelope(env)
    assert codec.decode_envelope(frame) == env
    assert codec.frame_tag(frame) == codec.TAG_ENVELOPE
    key_len = None if env.partition_key is None else len(env.partition_key)
    assert len(frame) == codec.envelope_frame_size(env.src, env.dst_node, env.dst_name,
                                                   env.channel, len(env.payload), key_len)


def test_envelope_frame_size_by_hand():
    # 5 header + 3 strings of 1 char (3 bytes each) + "default" (9) + flag (1) + seq (8)
    # + payload block (4 + 10) = 46
    env = Envelope("a", "b", "c", "default", bytes(10), 1)
    assert len(codec.encode_envelope(env)) == 46
    # a 2-byte key adds a 4-byte length and the key itself
    keyed = Envelope("a", "b", "c", "default", bytes(10), 1, b"kk")
    assert len(codec.encode_envelope(keyed)) == 52


def test_gossip_frame_size_by_hand():
    # 5 header + count (4) + "a" (3) + address "a" (3) + "undefined" (11) + epoch (8) + leaving (1)
    frame = codec.encode_gossip(MembershipView([NodeSpec("a")]))
    assert len(frame) == 35


nodes = st.builds(NodeSpec, name=st.text(min_size=1, max_size=8),
                  tag=st.sampled_from(["server", "client", "undefined"]),
                  epoch=st.integers(0, 2 ** 40), leaving=st.booleans())


@given(st.lists(nodes, max_size=8))
def test_gossip_roundtrip(ns):
    view = MembershipView(ns)
    assert codec.decode_gossip(codec.encode_gossip(view)) == view


terms = st.recursive(
    st.none() | st.booleans() | st.integers(-2 ** 63, 2 ** 63 - 1) | st.text(max_size=10)
    | st.binary(max_size=20) | st.floats(allow_nan=False),
    lambda inner: st.lists(inner, max_size=4).map(tuple), max_leaves=12)


@given(st.sampled_from(codec.CONTROL_KINDS), terms)
def test_control_roundtrip(kind, body):
    assert codec.decode_control(codec.encode_control(kind, body)) == (kind, body)
    assert codec.decode_term(codec.encode_term(body)) == body


def test_lists_decode_as_tuples():
    assert codec.decode_control(codec.encode_control("shuffle", ["a", ["b"]])) == \
        ("shuffle", ("a", ("b",)))


def test_unknown_control_kind_rejected():
    with pytest.raises(ValueError):
        codec.encode_control("teleport")
    with pytest.raises(TypeError):
        codec.encode_control("join", {1, 2})


def test_oversized_payload_rejected():
    env = Envelope("a", "b", "c", "default", bytes(101), 1)
    with pytest.raises(codec.FrameTooLarge):
        codec.encode_envelope(env, max_frame_size=100)
    frame = codec.encode_envelope(env)
    with pytest.raises(codec.MalformedFrame):
        codec.decode_envelope(frame, max_frame_size=100)


@given(envelopes, st.data())
def test_truncated_frames_are_malformed(env, data):
    frame = codec.encode_envelope(env)
    cut = data.draw(st.integers(0, len(frame) - 1))
    with pytest.raises(codec.MalformedFrame):
        codec.decode_envelope(frame[:cut])


def test_trailing_and_wrong_tag():
    frame = codec.encode_envelope(Envelope("a", "b", "c", "d", b"x", 1))
    with pytest.raises(codec.MalformedFrame):
        codec.decode_envelope(frame + b"\x00")
    with pytest.raises(codec.MalformedFrame):
        codec.decode_gossip(frame)
    # patch the length prefix so it covers a trailing byte inside the body
    padded = (len(frame) + 1).to_bytes(4, "big") + frame[4:] + b"\x00"
    with pytest.raises(codec.MalformedFrame):
        codec.decode_envelope(padded)


@given(st.binary(max_size=64))
def test_garbage_never_crashes(blob):
    for decode in (codec.decode_envelope, codec.decode_gossip, codec.decode_control):
        try:
            decode(blob)
        except codec.MalformedFrame:
            pass
