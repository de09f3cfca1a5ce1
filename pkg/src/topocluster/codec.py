"""Wire framing.

Every frame::

    u32 total length (whole frame, prefix included, big-endian)
    u8  tag          0x01 envelope | 0x02 membership gossip | 0x03 control
    ... body

Strings are ``u16 length + UTF-8``; opaque byte blocks are ``u32 length + raw``.

Envelope body: src, dst_node, dst_name, channel (strings), ``u8`` key flag
followed by the key as a byte block when the flag is 1, ``u64`` seq, payload
byte block.

Gossip body: ``u32`` count, then per node: name, address, tag (strings),
``u64`` epoch, ``u8`` leaving.

Control body: ``u8`` sub-tag followed by one term. Terms are self-describing:
composites are encoded as lists of terms and leaves as tagged binaries, so a
backend can ship any nested tuple of str/bytes/int/float/bool/None.
"""

from __future__ import annotations

import struct
from typing import Any

from .types import MAX_FRAME_SIZE, Envelope, MembershipView, NodeSpec

TAG_ENVELOPE = 0x01
TAG_GOSSIP = 0x02
TAG_CONTROL = 0x03

FRAME_HEADER = 5  # length prefix + tag

_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")

# control sub-tags
CONTROL_KINDS = (
    "join", "forward_join", "neighbor", "neighbor_reply", "disconnect",
    "shuffle", "shuffle_reply", "gossip", "ihave", "graft", "prune",
    "heartbeat", "leave", "subscribe", "publish", "deliver",
)
_SUBTAG = {kind: i + 1 for i, kind in enumerate(CONTROL_KINDS)}
_SUBTAG_NAME = {i: kind for kind, i in _SUBTAG.items()}


class MalformedFrame(ValueError):
    pass


class FrameTooLarge(ValueError):
    pass


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FrameTooLarge("string field longer than 65535 bytes")
    return _U16.pack(len(raw)) + raw


def _blob(b: bytes) -> bytes:
    return _U32.pack(len(b)) + b


def _frame(tag: int, body: bytes) -> bytes:
    return _U32.pack(FRAME_HEADER + len(body)) + bytes((tag,)) + body


class _Reader:
    __slots__ = ("buf", "pos", "end")

    def __init__(self, buf: memoryview, pos: int, end: int):
        self.buf, self.pos, self.end = buf, pos, end

    def take(self, n: int) -> memoryview:
        if self.pos + n > self.end:
            raise MalformedFrame("truncated frame")
        view = self.buf[self.pos:self.pos + n]
        self.pos += n
        return view

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def str(self) -> str:
        try:
            return str(self.take(self.u16()), "utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame("bad UTF-8 in string field") from exc

    def blob(self, limit: int = MAX_FRAME_SIZE) -> bytes:
        n = self.u32()
        if n > limit:
            raise MalformedFrame(f"byte block of {n} bytes exceeds limit {limit}")
        return bytes(self.take(n))

    def done(self):
        if self.pos != self.end:
            raise MalformedFrame("trailing bytes in frame")


def _open(frame: bytes, expect_tag: int | None = None) -> tuple[int, _Reader]:
    if len(frame) < FRAME_HEADER:
        raise MalformedFrame("truncated frame header")
    mv = memoryview(frame)
    total = _U32.unpack(mv[:4])[0]
    if total != len(frame):
        kind = "truncated" if total > len(frame) else "over-length"
        raise MalformedFrame(f"{kind} frame: header says {total}, got {len(frame)}")
    tag = mv[4]
    if expect_tag is not None and tag != expect_tag:
        raise MalformedFrame(f"expected frame tag {expect_tag:#x}, got {tag:#x}")
    return tag, _Reader(mv, FRAME_HEADER, total)


def frame_tag(frame: bytes) -> int:
    if len(frame) < FRAME_HEADER:
        raise MalformedFrame("truncated frame header")
    return frame[4]


# -- envelopes ---------------------------------------------------------------

def encode_envelope(e: Envelope, max_frame_size: int = MAX_FRAME_SIZE) -> bytes:
    if len(e.payload) > max_frame_size:
        raise FrameTooLarge(f"payload of {len(e.payload)} bytes exceeds {max_frame_size}")
    if e.seq < 0:
        raise ValueError("seq must be non-negative")
    parts = [_str(e.src), _str(e.dst_node), _str(e.dst_name), _str(e.channel)]
    if e.partition_key is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + _blob(e.partition_key))
    parts.append(_U64.pack(e.seq))
    parts.append(_U32.pack(len(e.payload)))
    head = b"".join(parts)
    total = FRAME_HEADER + len(head) + len(e.payload)
    return b"".join((_U32.pack(total), bytes((TAG_ENVELOPE,)), head, e.payload))


def decode_envelope(frame: bytes, max_frame_size: int = MAX_FRAME_SIZE) -> Envelope:
    _, r = _open(frame, TAG_ENVELOPE)
    src, dst_node, dst_name, channel = r.str(), r.str(), r.str(), r.str()
    flag = r.u8()
    if flag not in (0, 1):
        raise MalformedFrame("bad partition key flag")
    key = r.blob() if flag else None
    seq = r.u64()
    payload = r.blob(max_frame_size)
    r.done()
    return Envelope(src=src, dst_node=dst_node, dst_name=dst_name, channel=channel,
                    payload=payload, seq=seq, partition_key=key)


def envelope_frame_size(src: str, dst_node: str, dst_name: str, channel: str,
                        payload_len: int, key_len: int | None = None) -> int:
    size = FRAME_HEADER
    for s in (src, dst_node, dst_name, channel):
        size += 2 + len(s.encode("utf-8"))
    size += 1 + (0 if key_len is None else 4 + key_len)
    return size + 8 + 4 + payload_len


# -- membership gossip --------------------------------------------------------

def encode_gossip(view: MembershipView) -> bytes:
    nodes = list(view)
    parts = [_U32.pack(len(nodes))]
    for n in nodes:
        parts += [_str(n.name), _str(n.address), _str(n.tag), _U64.pack(n.epoch),
                  b"\x01" if n.leaving else b"\x00"]
    return _frame(TAG_GOSSIP, b"".join(parts))


def decode_gossip(frame: bytes) -> MembershipView:
    _, r = _open(frame, TAG_GOSSIP)
    nodes = []
    for _ in range(r.u32()):
        name, address, tag = r.str(), r.str(), r.str()
        epoch, leaving = r.u64(), r.u8()
        try:
            nodes.append(NodeSpec(name, address, tag, epoch, bool(leaving)))
        except ValueError as exc:
            raise MalformedFrame(str(exc)) from exc
    r.done()
    return MembershipView(nodes)


# -- control frames and terms -------------------------------------------------

_T_NONE, _T_FALSE, _T_TRUE, _T_INT, _T_STR, _T_BYTES, _T_LIST, _T_FLOAT = range(8)


def _encode_term(term: Any, out: list[bytes]) -> None:
    if term is None:
        out.append(bytes((_T_NONE,)))
    elif term is True:
        out.append(bytes((_T_TRUE,)))
    elif term is False:
        out.append(bytes((_T_FALSE,)))
    elif isinstance(term, int):
        out.append(bytes((_T_INT,)) + _I64.pack(term))
    elif isinstance(term, float):
        out.append(bytes((_T_FLOAT,)) + _F64.pack(term))
    elif isinstance(term, str):
        out.append(bytes((_T_STR,)) + _str(term))
    elif isinstance(term, (bytes, bytearray, memoryview)):
        out.append(bytes((_T_BYTES,)) + _blob(bytes(term)))
    elif isinstance(term, (list, tuple)):
        out.append(bytes((_T_LIST,)) + _U32.pack(len(term)))
        for item in term:
            _encode_term(item, out)
    else:
        raise TypeError(f"cannot encode {type(term).__name__} as a wire term")


def _decode_term(r: _Reader) -> Any:
    t = r.u8()
    if t == _T_NONE:
        return None
    if t == _T_TRUE:
        return True
    if t == _T_FALSE:
        return False
    if t == _T_INT:
        return _I64.unpack(r.take(8))[0]
    if t == _T_FLOAT:
        return _F64.unpack(r.take(8))[0]
    if t == _T_STR:
        return r.str()
    if t == _T_BYTES:
        return r.blob(2 * MAX_FRAME_SIZE)
    if t == _T_LIST:
        return tuple(_decode_term(r) for _ in range(r.u32()))
    raise MalformedFrame(f"unknown term type {t}")


def encode_control(kind: str, body: Any = None) -> bytes:
    try:
        sub = _SUBTAG[kind]
    except KeyError:
        raise ValueError(f"unknown control kind {kind!r}") from None
    out = [bytes((sub,))]
    _encode_term(body, out)
    return _frame(TAG_CONTROL, b"".join(out))


def decode_control(frame: bytes) -> tuple[str, Any]:
    _, r = _open(frame, TAG_CONTROL)
    sub = r.u8()
    kind = _SUBTAG_NAME.get(sub)
    if kind is None:
        raise MalformedFrame(f"unknown control sub-tag {sub}")
    body = _decode_term(r)
    r.done()
    return kind, body


def encode_term(term: Any) -> bytes:
    """Serialize a term on its own, e.g. as an application payload."""
    out: list[bytes] = []
    _encode_term(term, out)
    return b"".join(out)


def decode_term(data: bytes) -> Any:
    view = memoryview(data)
    r = _Reader(view, 0, len(view))
    term = _decode_term(r)
    r.done()
    return term
