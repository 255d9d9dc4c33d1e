"""Replay of Bitswap wantlist logs into a FIFO window and CID relevance scores.

Each CID in the window carries the set of peers that asked for it. A peer's
weight is one over the number of windowed CIDs it asked for, and a CID scores
the sum of its peers' weights, so CIDs wanted by many otherwise-quiet peers
rank first.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, OrderedDict
from collections.abc import Iterable
from dataclasses import dataclass
from typing import TextIO

from ipfscensor.errors import ParseError

DEFAULT_CAPACITY = 10_000


@dataclass(frozen=True)
class BitswapLogEvent:
    timestamp: float
    peer: str
    cid: str


def read_bitswap_log(stream: TextIO | str, source: str | None = None) -> Iterable[BitswapLogEvent]:
    """Yield events from ``timestamp,peer,cid`` CSV; a header row is skipped."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or row[0].startswith("#"):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", lineno, source)
        if lineno == 1 and row[0].strip() == "timestamp":
            continue
        try:
            ts = float(row[0])
        except ValueError:
            raise ParseError(f"bad timestamp {row[0]!r}", lineno, source) from None
        peer, cid = row[1].strip(), row[2].strip()
        if not peer or not cid:
            raise ParseError("empty peer or cid", lineno, source)
        yield BitswapLogEvent(ts, peer, cid)


class ScoreWindow:
    """FIFO of ``cid -> peers`` holding at most ``capacity`` CIDs.

    A CID enters at the tail when first seen (or first seen again after
    eviction) and leaves from the head when the window is full.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._cids: OrderedDict[str, set[str]] = OrderedDict()
        self._occurrences: Counter[str] = Counter()
        self.max_size = 0
        self.evicted = 0

    def __len__(self) -> int:
        return len(self._cids)

    def __contains__(self, cid: str) -> bool:
        return cid in self._cids

    def cids(self) -> list[str]:
        return list(self._cids)

    def peers(self, cid: str) -> frozenset[str]:
        return frozenset(self._cids[cid])

    def add(self, cid: str, peer: str) -> None:
        peers = self._cids.get(cid)
        if peers is None:
            if len(self._cids) >= self.capacity:
                _, gone = self._cids.popitem(last=False)
                self._occurrences.subtract(gone)
                self.evicted += 1
            peers = self._cids[cid] = set()
            self.max_size = max(self.max_size, len(self._cids))
        if peer not in peers:
            peers.add(peer)
            self._occurrences[peer] += 1

    def weight(self, peer: str) -> float:
        n = self._occurrences.get(peer, 0)
        return 1.0 / n if n > 0 else 0.0

    def score(self, cid: str) -> float:
        return math.fsum(1.0 / self._occurrences[p] for p in self._cids[cid])

    def ranked(self) -> list[tuple[str, float]]:
        """CIDs by descending score; equal scores keep first-seen order."""
        scored = [(cid, self.score(cid)) for cid in self._cids]
        scored.sort(key=lambda item: -item[1])
        return scored


def score_cids(
    events: Iterable[BitswapLogEvent], capacity: int = DEFAULT_CAPACITY
) -> list[tuple[str, float]]:
    window = ScoreWindow(capacity)
    for ev in events:
        window.add(ev.cid, ev.peer)
    return window.ranked()


def replay(events: Iterable[BitswapLogEvent], capacity: int = DEFAULT_CAPACITY) -> ScoreWindow:
    window = ScoreWindow(capacity)
    for ev in events:
        window.add(ev.cid, ev.peer)
    return window
