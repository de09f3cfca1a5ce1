from __future__ import annotations

import struct
from dataclasses import dataclass, field

_COUNT = struct.Struct(">Q")


@dataclass
class GCounter:
    """Grow-only counter: one non-negative count per node."""

    counts: dict[str, int] = field(default_factory=dict)

    def increment(self, node: str, by: int = 1) -> None:
        if by < 0:
            raise ValueError("a grow-only counter cannot decrease")
        self.counts[node] = self.counts.get(node, 0) + by

    @property
    def value(self) -> int:
        return sum(self.counts.values())

    def merge(self, other: GCounter) -> GCounter:
        merged = dict(self.counts)
        for node, count in other.counts.items():
            if count > merged.get(node, 0):
                merged[node] = count
        return GCounter(merged)

    def merge_in(self, other: GCounter) -> bool:
        """Merge in place; report whether anything changed."""
        changed = False
        for node, count in other.counts.items():
            if count > self.counts.get(node, 0):
                self.counts[node] = count
                changed = True
        return changed

    def encode(self) -> bytes:
        out = [_COUNT.pack(len(self.counts))]
        for node in sorted(self.counts):
            raw = node.encode("utf-8")
            out.append(struct.pack(">H", len(raw)) + raw + _COUNT.pack(self.counts[node]))
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes) -> GCounter:
        (n,), pos = _COUNT.unpack_from(data, 0), _COUNT.size
        counts = {}
        for _ in range(n):
            (length,) = struct.unpack_from(">H", data, pos)
            pos += 2
            node = data[pos:pos + length].decode("utf-8")
            pos += length
            (counts[node],) = _COUNT.unpack_from(data, pos)
            pos += _COUNT.size
        if pos != len(data):
            raise ValueError("trailing bytes after counter state")
        return cls(counts)
