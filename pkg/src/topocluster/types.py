"""Shared value types: node identities, channels, envelopes and membership views."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Iterator, Optional

SERVER = "server"
CLIENT = "client"
UNDEFINED = "undefined"
TAGS = (SERVER, CLIENT, UNDEFINED)

DEFAULT_CHANNEL = "default"
MAX_FRAME_SIZE = 16 * 1024 * 1024

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def stable_hash(data: bytes | str) -> int:
    """64-bit FNV-1a. Identical on every node and every run."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class NodeSpec:
    """A cluster member.

    ``leaving`` marks a tombstone: the node has left at this epoch and must
    come back with a higher epoch to rejoin.
    """

    name: str
    address: str = ""
    tag: str = UNDEFINED
    epoch: int = 0
    leaving: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("node name must be non-empty")
        if self.tag not in TAGS:
            raise ValueError(f"unknown node tag {self.tag!r}")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")
        if not self.address:
            object.__setattr__(self, "address", self.name)

    def tombstone(self) -> NodeSpec:
        return replace(self, leaving=True)

    def rank(self) -> tuple:
        # total order used to pick a winner on name collision
        return (self.epoch, self.leaving, self.address, self.tag)


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    parallelism: int = 1
    monotonic: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("channel name must be non-empty")
        if self.parallelism < 1:
            raise ValueError("channel parallelism must be >= 1")
        if self.monotonic and self.parallelism != 1:
            raise ValueError("monotonic channels must have parallelism 1")


DEFAULT_CHANNEL_SPEC = ChannelSpec(DEFAULT_CHANNEL)


def normalize_channels(channels: Iterable[ChannelSpec] = ()) -> tuple[ChannelSpec, ...]:
    """Ensure the default channel exists and names are unique; default comes first."""
    seen: dict[str, ChannelSpec] = {}
    for ch in channels:
        if ch.name in seen:
            raise ValueError(f"duplicate channel {ch.name!r}")
        seen[ch.name] = ch
    default = seen.pop(DEFAULT_CHANNEL, DEFAULT_CHANNEL_SPEC)
    return (default, *seen.values())


@dataclass(frozen=True)
class Envelope:
    src: str
    dst_node: str
    dst_name: str
    channel: str
    payload: bytes
    seq: int
    partition_key: Optional[bytes] = None


class MembershipView:
    """Immutable set of NodeSpec keyed by name.

    Tombstoned entries are kept so that a leave wins over stale gossip;
    ``live()`` hides them.
    """

    __slots__ = ("_nodes",)

    def __init__(self, nodes: Iterable[NodeSpec] = ()):
        by_name: dict[str, NodeSpec] = {}
        for node in nodes:
            cur = by_name.get(node.name)
            if cur is None or node.rank() > cur.rank():
                by_name[node.name] = node
        self._nodes = dict(sorted(by_name.items()))

    def __iter__(self) -> Iterator[NodeSpec]:
        return iter(self._nodes.values())

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, name: object) -> bool:
        return name in self._nodes

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MembershipView) and self._nodes == other._nodes

    def __hash__(self) -> int:
        return hash(tuple(self._nodes.values()))

    def __repr__(self) -> str:
        return f"MembershipView({list(self._nodes.values())!r})"

    def get(self, name: str) -> Optional[NodeSpec]:
        return self._nodes.get(name)

    def names(self) -> list[str]:
        return list(self._nodes)

    def live(self) -> list[NodeSpec]:
        return [n for n in self._nodes.values() if not n.leaving]

    def live_names(self) -> list[str]:
        return [n.name for n in self._nodes.values() if not n.leaving]

    def with_node(self, node: NodeSpec) -> MembershipView:
        return merge_views(self, MembershipView([node]))

    def replaced(self, node: NodeSpec) -> MembershipView:
        """Overwrite the entry for ``node.name`` unconditionally."""
        nodes = dict(self._nodes)
        nodes[node.name] = node
        view = MembershipView()
        view._nodes = dict(sorted(nodes.items()))
        return view


ConflictCallback = Callable[[NodeSpec, NodeSpec], None]


def merge_views(a: MembershipView, b: MembershipView,
                on_conflict: Optional[ConflictCallback] = None) -> MembershipView:
    """Union by name; the higher epoch wins, a tombstone wins at equal epoch.

    Two entries with equal epoch but different addresses are reported through
    ``on_conflict``; the winner is still picked deterministically so the merge
    stays commutative.
    """
    if on_conflict is not None:
        for node in b:
            cur = a.get(node.name)
            if cur is not None and cur.epoch == node.epoch and cur.address != node.address:
                on_conflict(cur, node)
    return MembershipView(itertools.chain(a, b))


class RoundRobin:
    """Per-sender counter for unkeyed slot selection. Not shared between senders."""

    __slots__ = ("value",)

    def __init__(self, start: int = 0):
        self.value = start

    def next(self) -> int:
        v = self.value
        self.value += 1
        return v


def connection_slot(key: Optional[bytes], parallelism: int, rr: Optional[RoundRobin] = None) -> int:
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if parallelism == 1:
        return 0
    if key is not None:
        return stable_hash(key) % parallelism
    if rr is None:
        raise ValueError("unkeyed selection needs a round-robin counter")
    return rr.next() % parallelism
