"""Epidemic broadcast tree over the HyParView active view.

Each broadcast root keeps its own eager/lazy split of the active view, so
every node ends up with a spanning tree rooted at itself. Payloads travel
over eager links; lazy links only carry ``ihave`` announcements, which are
turned into ``graft`` requests when the payload does not show up in time.
"""

from __future__ import annotations

from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional

from .. import codec

MessageId = tuple[str, int]


@dataclass
class PlumtreeStats:
    payload_sends: Counter
    duplicates: int = 0
    grafts_sent: int = 0
    grafts_served: int = 0
    prunes_sent: int = 0
    ihaves_sent: int = 0


class Plumtree:
    def __init__(self, backend, params, on_deliver: Callable[[MessageId, str, bytes, Optional[str]], None]):
        self.backend = backend
        self.params = params
        self.on_deliver = on_deliver
        self.eager: dict[str, set[str]] = {}
        self.lazy: dict[str, set[str]] = {}
        self.seen: OrderedDict[MessageId, tuple[int, str, bytes]] = OrderedDict()
        self.missing: dict[MessageId, list[str]] = {}
        self._timers: dict[MessageId, object] = {}
        self.counter = 0
        self.stats = PlumtreeStats(Counter())

    @property
    def active(self) -> set[str]:
        return self.backend.active

    def _sets(self, root: str) -> tuple[set[str], set[str]]:
        eager = self.eager.get(root)
        if eager is None:
            eager = self.eager[root] = set(self.active)
            self.lazy[root] = set()
        return eager, self.lazy[root]

    def _make_eager(self, root: str, peer: str) -> None:
        if peer in self.active:
            eager, lazy = self._sets(root)
            eager.add(peer)
            lazy.discard(peer)

    def _make_lazy(self, root: str, peer: str) -> None:
        if peer in self.active:
            eager, lazy = self._sets(root)
            eager.discard(peer)
            lazy.add(peer)

    # -- view changes --------------------------------------------------------------

    def neighbor_up(self, peer: str) -> None:
        for root in self.eager:
            self.eager[root].add(peer)
            self.lazy[root].discard(peer)
        recent = list(self.seen.items())[-self.params.recent_ids:]
        if recent:
            ids = tuple((root, counter, rnd) for (root, counter), (rnd, _, _) in recent)
            self._send(peer, codec.encode_control("ihave", ids))
            self.stats.ihaves_sent += 1

    def neighbor_down(self, peer: str) -> None:
        for root in self.eager:
            self.eager[root].discard(peer)
            self.lazy[root].discard(peer)
        for announcers in self.missing.values():
            while peer in announcers:
                announcers.remove(peer)

    # -- broadcast -------------------------------------------------------------------

    def broadcast(self, kind: str, payload: bytes) -> MessageId:
        self.counter += 1
        mid = (self.backend.name, self.counter)
        self._first_receipt(mid, 0, kind, payload, None)
        return mid

    def _send(self, peer: str, frame: bytes) -> None:
        self.backend.send_to(peer, frame)

    def _remember(self, mid: MessageId, rnd: int, kind: str, payload: bytes) -> None:
        self.seen[mid] = (rnd, kind, payload)
        while len(self.seen) > self.params.seen_capacity:
            self.seen.popitem(last=False)

    def _first_receipt(self, mid: MessageId, rnd: int, kind: str, payload: bytes,
                       sender: Optional[str]) -> None:
        root = mid[0]
        self._remember(mid, rnd, kind, payload)
        timer = self._timers.pop(mid, None)
        if timer is not None:
            timer.cancel()
        self.missing.pop(mid, None)
        if sender is not None:
            self._make_eager(root, sender)
        self.on_deliver(mid, kind, payload, sender)
        eager, lazy = self._sets(root)
        frame = codec.encode_control("gossip", (root, mid[1], rnd + 1, kind, payload))
        for peer in sorted(eager):
            if peer != sender:
                self._send(peer, frame)
                self.stats.payload_sends[mid] += 1
        if lazy:
            announce = codec.encode_control("ihave", ((root, mid[1], rnd + 1),))
            for peer in sorted(lazy):
                if peer != sender:
                    self._send(peer, announce)
                    self.stats.ihaves_sent += 1

    def on_gossip(self, sender: str, body) -> None:
        root, counter, rnd, kind, payload = body
        mid = (root, counter)
        if mid in self.seen:
            self.stats.duplicates += 1
            self._make_lazy(root, sender)
            self._send(sender, codec.encode_control("prune", root))
            self.stats.prunes_sent += 1
            return
        self._first_receipt(mid, rnd, kind, payload, sender)

    def on_prune(self, sender: str, root: str) -> None:
        self._make_lazy(root, sender)

    def on_ihave(self, sender: str, ids) -> None:
        for root, counter, _rnd in ids:
            mid = (root, counter)
            if mid in self.seen:
                continue
            announcers = self.missing.setdefault(mid, [])
            if sender not in announcers:
                announcers.append(sender)
            if mid not in self._timers:
                self._timers[mid] = self.backend.after(self.params.ihave_timeout, self._expire, mid)

    def _expire(self, mid: MessageId) -> None:
        self._timers.pop(mid, None)
        if mid in self.seen:
            self.missing.pop(mid, None)
            return
        announcers = self.missing.get(mid)
        if not announcers:
            self.missing.pop(mid, None)
            return
        peer = announcers.pop(0)
        self._make_eager(mid[0], peer)
        self._send(peer, codec.encode_control("graft", (mid[0], mid[1])))
        self.stats.grafts_sent += 1
        self._timers[mid] = self.backend.after(self.params.ihave_timeout, self._expire, mid)

    def on_graft(self, sender: str, body) -> None:
        root, counter = body
        self._make_eager(root, sender)
        entry = self.seen.get((root, counter))
        if entry is not None:
            rnd, kind, payload = entry
            self._send(sender, codec.encode_control("gossip", (root, counter, rnd, kind, payload)))
            self.stats.payload_sends[(root, counter)] += 1
            self.stats.grafts_served += 1

    def check_invariants(self) -> None:
        for root, eager in self.eager.items():
            lazy = self.lazy[root]
            assert not (eager & lazy), f"eager/lazy overlap for root {root}"
            assert eager | lazy == self.active, f"eager+lazy != active view for root {root}"
