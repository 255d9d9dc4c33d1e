"""Per-destination routing trees under customer > peer > provider preference.

Trees are built with three breadth-first phases over the CSR adjacency of a
:class:`~ipfscensor.topology.TopologyGraph`:

1. customer routes, climbing customer->provider edges from the destination;
2. peer routes, one peer hop off the destination or a customer-routed AS;
3. provider routes, descending provider->customer edges from everything
   routed so far, in order of route length.

Within a class the shortest route wins and equal lengths go to the neighbour
with the smallest ASN. Because graph indices follow ASN order, that is simply
the smallest index.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import threading
from collections.abc import Callable, Iterable
from typing import NamedTuple

import numpy as np

from ipfscensor.errors import UnknownASError
from ipfscensor.topology import TopologyGraph


class RouteClass(enum.IntEnum):
    """Route classes; a lower value is a more preferred route."""

    SELF = 0
    CUSTOMER = 1
    PEER = 2
    PROVIDER = 3
    UNREACHABLE = 4


UNREACHABLE_LENGTH = math.inf


class RouteEntry(NamedTuple):
    cls: RouteClass
    length: int | float
    parent: int | None


def _gather(ptr: np.ndarray, idx: np.ndarray, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All (node, neighbour) pairs for ``nodes`` in CSR adjacency ``ptr/idx``."""
    starts = ptr[nodes]
    counts = ptr[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    owners = np.repeat(nodes, counts)
    offsets = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(total)
    return owners, idx[offsets].astype(np.int64)


def _first_per_key(key: np.ndarray, *tiebreak: np.ndarray) -> np.ndarray:
    """Positions of the winning row per distinct ``key``, minimising ``tiebreak`` in order."""
    order = np.lexsort(tiebreak[::-1] + (key,))
    k = key[order]
    first = np.ones(len(k), dtype=bool)
    first[1:] = k[1:] != k[:-1]
    return order[first]


class RoutingTree:
    """Best route of every AS towards one destination AS.

    ``cls``, ``length`` and ``parent`` are arrays over graph indices; ``parent``
    is -1 for the destination and for unreachable ASes, and ``length`` is -1
    for unreachable ASes.
    """

    __slots__ = ("graph", "dest", "dest_index", "cls", "length", "parent")

    def __init__(self, graph: TopologyGraph, dest: int, cls: np.ndarray, length: np.ndarray, parent: np.ndarray):
        self.graph = graph
        self.dest = dest
        self.dest_index = graph.index_of(dest)
        for a in (cls, length, parent):
            a.setflags(write=False)
        self.cls = cls
        self.length = length
        self.parent = parent

    def __repr__(self) -> str:
        reachable = int((self.cls != RouteClass.UNREACHABLE).sum())
        return f"RoutingTree(dest={self.dest}, reachable={reachable}/{len(self.cls)})"

    def entry(self, asn: int) -> RouteEntry:
        i = self.graph.index_of(asn)
        c = RouteClass(int(self.cls[i]))
        if c == RouteClass.UNREACHABLE:
            return RouteEntry(c, UNREACHABLE_LENGTH, None)
        p = int(self.parent[i])
        return RouteEntry(c, int(self.length[i]), int(self.graph.asns[p]) if p >= 0 else None)

    def entries(self) -> dict[int, RouteEntry]:
        return {int(a): self.entry(int(a)) for a in self.graph.asns}

    def path(self, src: int) -> list[int] | None:
        i = self.graph.index_of(src)
        if self.cls[i] == RouteClass.UNREACHABLE:
            return None
        hops = [i]
        while hops[-1] != self.dest_index:
            hops.append(int(self.parent[hops[-1]]))
        return [int(self.graph.asns[h]) for h in hops]

    def pref(self, src: int) -> tuple[RouteClass, int | float]:
        e = self.entry(src)
        return e.cls, e.length


def build_routing_tree(graph: TopologyGraph, dest: int) -> RoutingTree:
    d = graph.index_of(dest)
    n = len(graph)
    unreach = np.int8(RouteClass.UNREACHABLE)
    cls = np.full(n, unreach, dtype=np.int8)
    length = np.full(n, -1, dtype=np.int32)
    parent = np.full(n, -1, dtype=np.int32)
    cls[d] = RouteClass.SELF
    length[d] = 0

    # phase 1: customer routes
    frontier = np.array([d], dtype=np.int64)
    level = 0
    while frontier.size:
        via, nbr = _gather(graph.up_ptr, graph.up_idx, frontier)
        keep = cls[nbr] == unreach
        via, nbr = via[keep], nbr[keep]
        if not nbr.size:
            break
        win = _first_per_key(nbr, via)
        frontier = nbr[win]
        level += 1
        cls[frontier] = RouteClass.CUSTOMER
        length[frontier] = level
        parent[frontier] = via[win]

    # phase 2: peer routes
    sources = np.flatnonzero(cls <= RouteClass.CUSTOMER)
    via, nbr = _gather(graph.peer_ptr, graph.peer_idx, sources)
    keep = cls[nbr] == unreach
    via, nbr = via[keep], nbr[keep]
    if nbr.size:
        cand = length[via] + 1
        win = _first_per_key(nbr, cand, via)
        sel = nbr[win]
        cls[sel] = RouteClass.PEER
        length[sel] = cand[win]
        parent[sel] = via[win]

    # phase 3: provider routes, processed in increasing route length
    routed = np.flatnonzero(cls != unreach)
    by_len = routed[np.argsort(length[routed], kind="stable")]
    lens = length[by_len]
    max_len = int(lens[-1])
    bounds = np.searchsorted(lens, np.arange(max_len + 2))
    carry = np.empty(0, dtype=np.int64)
    level = 0
    while level <= max_len or carry.size:
        if level <= max_len:
            frontier = np.concatenate([by_len[bounds[level] : bounds[level + 1]], carry])
        else:
            frontier = carry
        carry = np.empty(0, dtype=np.int64)
        if frontier.size:
            via, nbr = _gather(graph.down_ptr, graph.down_idx, frontier)
            keep = cls[nbr] == unreach
            via, nbr = via[keep], nbr[keep]
            if nbr.size:
                win = _first_per_key(nbr, via)
                carry = nbr[win]
                cls[carry] = RouteClass.PROVIDER
                length[carry] = level + 1
                parent[carry] = via[win]
        level += 1
    return RoutingTree(graph, int(dest), cls, length, parent)


def route_path(tree: RoutingTree, src: int) -> list[int] | None:
    """``[src, ..., dest]`` along parent links, or None when src has no route."""
    return tree.path(src)


def route_pref(tree: RoutingTree, src: int) -> tuple[RouteClass, int | float]:
    return tree.pref(src)


def on_path(tree: RoutingTree, src: int, via: int) -> bool:
    tree.graph.index_of(via)
    path = tree.path(src)
    return path is not None and via in path


def pref_beats(
    a: tuple[RouteClass, int | float], b: tuple[RouteClass, int | float], ties: bool = False
) -> bool:
    """Whether route preference ``a`` beats ``b``; ``ties=True`` also accepts equality."""
    ka, kb = (int(a[0]), a[1]), (int(b[0]), b[1])
    return ka <= kb if ties else ka < kb


def is_valley_free(graph: TopologyGraph, path: list[int]) -> bool:
    """Check a path is uphill edges, at most one peer edge, then downhill edges."""
    phase = 0  # 0 climbing, 1 after the peer edge or first descent
    for a, b in zip(path, path[1:]):
        rel = graph.relationship(a, b)
        if rel is None:
            return False
        if rel == "provider":
            if phase:
                return False
        elif rel == "peer":
            if phase:
                return False
            phase = 1
        else:
            phase = 1
    return True


class RoutingTreeCache:
    """Thread-safe get-or-build cache of routing trees keyed by destination ASN."""

    def __init__(self, graph: TopologyGraph, builder: Callable[[TopologyGraph, int], RoutingTree] = build_routing_tree):
        self.graph = graph
        self._builder = builder
        self._trees: dict[int, RoutingTree] = {}
        self._lock = threading.Lock()
        self._building: dict[int, threading.Event] = {}

    def __len__(self) -> int:
        return len(self._trees)

    def __contains__(self, dest: int) -> bool:
        return dest in self._trees

    def get(self, dest: int) -> RoutingTree:
        while True:
            with self._lock:
                tree = self._trees.get(dest)
                if tree is not None:
                    return tree
                pending = self._building.get(dest)
                if pending is None:
                    pending = self._building[dest] = threading.Event()
                    owner = True
                else:
                    owner = False
            if not owner:
                pending.wait()
                continue
            try:
                tree = self._builder(self.graph, dest)
                with self._lock:
                    self._trees[dest] = tree
                return tree
            finally:
                with self._lock:
                    del self._building[dest]
                pending.set()

    __getitem__ = get


def dump_routes_csv(trees: Iterable[RoutingTree], out: io.TextIOBase | None = None) -> str:
    """CSV rows ``src,dest,class,length,path`` with the path space-separated."""
    buf = out or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src", "dest", "class", "length", "path"])
    for tree in trees:
        for asn in tree.graph.asns:
            e = tree.entry(int(asn))
            path = tree.path(int(asn))
            w.writerow([
                int(asn), tree.dest, e.cls.name.lower(),
                "inf" if path is None else e.length,
                "" if path is None else " ".join(map(str, path)),
            ])
    return buf.getvalue() if out is None else ""


__all__ = [
    "RouteClass", "RouteEntry", "RoutingTree", "RoutingTreeCache", "UNREACHABLE_LENGTH",
    "UnknownASError", "build_routing_tree", "dump_routes_csv", "is_valley_free",
    "on_path", "pref_beats", "route_path", "route_pref",
]
