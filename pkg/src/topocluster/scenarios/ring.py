"""Consistent-hash ring with a fixed number of equal partitions."""

from __future__ import annotations

from dataclasses import dataclass

from ..types import stable_hash

RING_BITS = 32
RING_SIZE = 1 << RING_BITS
REPLICAS = 3


def key_position(key: bytes | str) -> int:
    """Position of ``key`` on the 32-bit ring: the top half of its 64-bit hash."""
    return stable_hash(key) >> 32


@dataclass(frozen=True)
class Ring:
    partitions: int
    owners: tuple[str, ...]

    @property
    def partition_size(self) -> int:
        return RING_SIZE // self.partitions

    def partition_of(self, key: bytes | str) -> int:
        return min(key_position(key) // self.partition_size, self.partitions - 1)

    def owner(self, partition: int) -> str:
        return self.owners[partition % self.partitions]

    def claims(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for node in self.owners:
            counts[node] = counts.get(node, 0) + 1
        return counts


@dataclass(frozen=True)
class PrefList:
    partitions: tuple[int, ...]
    nodes: tuple[str, ...]


def build_ring(nodes, partitions: int = 64) -> Ring:
    """Claim partitions round-robin over the sorted node names."""
    nodes = sorted(set(nodes))
    if not nodes:
        raise ValueError("a ring needs at least one node")
    if partitions < REPLICAS:
        raise ValueError(f"a ring needs at least {REPLICAS} partitions")
    return Ring(partitions, tuple(nodes[i % len(nodes)] for i in range(partitions)))


def preference_list(ring: Ring, key: bytes | str, n: int = REPLICAS) -> PrefList:
    """The key's partition followed by its clockwise successors."""
    first = ring.partition_of(key)
    parts = tuple((first + i) % ring.partitions for i in range(n))
    return PrefList(parts, tuple(ring.owner(p) for p in parts))
