"""AS-level topology: CAIDA as-rel ingestion, IXP merging, validation, snapshots.

The graph is immutable once built. ASes are stored in ascending ASN order, so
the dense index of an AS doubles as its rank for smallest-ASN tie breaks.
"""

from __future__ import annotations

import enum
import io
import json
import struct
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from typing import BinaryIO, TextIO

import numpy as np

from ipfscensor.errors import ParseError, UnknownASError, ValidationError

MAX_ASN = 2**32 - 1

SNAPSHOT_MAGIC = b"IPFSCTOPO\x00"
SNAPSHOT_VERSION = 1


class EdgeKind(str, enum.Enum):
    PROVIDER_OF = "provider-of"
    PEER = "peer"


def check_asn(value: int) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise TypeError(f"AS number must be an integer, got {value!r}")
    value = int(value)
    if not 0 < value <= MAX_ASN:
        raise ValueError(f"AS number out of range: {value}")
    return value


@dataclass(frozen=True)
class RelEdge:
    """One relationship. For ``PROVIDER_OF``, ``a`` is the provider of ``b``."""

    a: int
    b: int
    kind: EdgeKind

    def __post_init__(self) -> None:
        check_asn(self.a)
        check_asn(self.b)
        if self.a == self.b:
            raise ValueError(f"self-loop on AS{self.a}")


@dataclass(frozen=True)
class Anomalies:
    """Problems found while building a graph that did not abort construction."""

    self_loops: tuple[int, ...] = ()
    contradictions: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    n_ases: int
    n_p2c: int
    n_p2p: int
    self_loops: tuple[int, ...] = ()
    contradictions: tuple[tuple[int, int], ...] = ()
    isolated: tuple[int, ...] = ()

    @property
    def accepted(self) -> bool:
        return not self.self_loops and not self.contradictions

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "n_ases": self.n_ases,
            "n_p2c": self.n_p2c,
            "n_p2p": self.n_p2p,
            "self_loops": list(self.self_loops),
            "contradictions": [list(p) for p in self.contradictions],
            "isolated": list(self.isolated),
        }


def _csr(src: np.ndarray, dst: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Adjacency src -> dst as (indptr, indices), neighbours sorted ascending."""
    order = np.lexsort((dst, src))
    indices = dst[order].astype(np.int32)
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class TopologyGraph:
    """Immutable AS graph with provider/customer/peer adjacency.

    Build with :meth:`from_edges`, :func:`parse_as_rel`, or :func:`load_snapshot`.
    Edges are stored as ASN arrays: ``p2c`` rows are ``(provider, customer)`` and
    ``p2p`` rows are ``(low, high)``.
    """

    def __init__(
        self,
        asns: np.ndarray,
        p2c: np.ndarray,
        p2p: np.ndarray,
        provenance: tuple[str, ...] = (),
        anomalies: Anomalies | None = None,
    ):
        self.asns = _frozen(np.asarray(asns, dtype=np.int64))
        self.p2c = _frozen(np.asarray(p2c, dtype=np.int64).reshape(-1, 2))
        self.p2p = _frozen(np.asarray(p2p, dtype=np.int64).reshape(-1, 2))
        self.provenance = tuple(provenance)
        self.anomalies = anomalies or Anomalies()
        self._index = {int(a): i for i, a in enumerate(self.asns)}
        n = len(self.asns)
        prov = np.searchsorted(self.asns, self.p2c[:, 0])
        cust = np.searchsorted(self.asns, self.p2c[:, 1])
        pa = np.searchsorted(self.asns, self.p2p[:, 0])
        pb = np.searchsorted(self.asns, self.p2p[:, 1])
        # customer -> providers, provider -> customers, peer <-> peer
        self.up_ptr, self.up_idx = map(_frozen, _csr(cust, prov, n))
        self.down_ptr, self.down_idx = map(_frozen, _csr(prov, cust, n))
        self.peer_ptr, self.peer_idx = map(
            _frozen, _csr(np.concatenate([pa, pb]), np.concatenate([pb, pa]), n)
        )

    @classmethod
    def from_edges(
        cls,
        p2c: Iterable[tuple[int, int]] = (),
        p2p: Iterable[tuple[int, int]] = (),
        ases: Iterable[int] = (),
        provenance: tuple[str, ...] = (),
    ) -> TopologyGraph:
        """Build and validate a graph; raises ValidationError on self-loops or contradictions."""
        p2c_arr = np.array(list(p2c), dtype=np.int64).reshape(-1, 2)
        p2p_arr = np.array(list(p2p), dtype=np.int64).reshape(-1, 2)
        return cls.from_arrays(p2c_arr, p2p_arr, np.array(list(ases), dtype=np.int64), provenance)

    @classmethod
    def from_arrays(
        cls,
        p2c: np.ndarray,
        p2p: np.ndarray,
        ases: np.ndarray | None = None,
        provenance: tuple[str, ...] = (),
    ) -> TopologyGraph:
        p2c = np.asarray(p2c, dtype=np.int64).reshape(-1, 2)
        p2p = np.asarray(p2p, dtype=np.int64).reshape(-1, 2)
        extra = np.asarray(ases if ases is not None else [], dtype=np.int64)
        every = np.concatenate([p2c.ravel(), p2p.ravel(), extra])
        if every.size and (every.min() <= 0 or every.max() > MAX_ASN):
            raise ValidationError("AS number out of range")
        loops = np.concatenate([p2c[p2c[:, 0] == p2c[:, 1], 0], p2p[p2p[:, 0] == p2p[:, 1], 0]])
        if loops.size:
            raise ValidationError(f"self-loop on AS{int(loops[0])}")
        p2c = np.unique(p2c, axis=0)
        p2p = np.unique(np.sort(p2p, axis=1), axis=0)
        pairs = np.concatenate([np.sort(p2c, axis=1), p2p])
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        if (counts > 1).any():
            a, b = uniq[np.argmax(counts > 1)]
            raise ValidationError(f"contradictory relationships for AS{a} and AS{b}")
        asns = np.unique(every)
        return cls(asns, p2c, p2p, provenance)

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.asns)

    def __contains__(self, asn: object) -> bool:
        return asn in self._index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TopologyGraph):
            return NotImplemented
        return (
            np.array_equal(self.asns, other.asns)
            and np.array_equal(self.p2c, other.p2c)
            and np.array_equal(self.p2p, other.p2p)
        )

    def __repr__(self) -> str:
        return f"TopologyGraph(ases={len(self)}, p2c={len(self.p2c)}, p2p={len(self.p2p)})"

    def index_of(self, asn: int) -> int:
        try:
            return self._index[asn]
        except KeyError:
            raise UnknownASError(asn) from None

    def indices_of(self, asns: Iterable[int]) -> np.ndarray:
        return np.array([self.index_of(a) for a in asns], dtype=np.int64)

    def _nbrs(self, ptr: np.ndarray, idx: np.ndarray, asn: int) -> tuple[int, ...]:
        i = self.index_of(asn)
        return tuple(int(self.asns[j]) for j in idx[ptr[i] : ptr[i + 1]])

    def providers_of(self, asn: int) -> tuple[int, ...]:
        return self._nbrs(self.up_ptr, self.up_idx, asn)

    def customers_of(self, asn: int) -> tuple[int, ...]:
        return self._nbrs(self.down_ptr, self.down_idx, asn)

    def peers_of(self, asn: int) -> tuple[int, ...]:
        return self._nbrs(self.peer_ptr, self.peer_idx, asn)

    def relationship(self, a: int, b: int) -> str | None:
        """Relationship of ``b`` as seen from ``a``: 'customer', 'provider', 'peer' or None."""
        if b in self.customers_of(a):
            return "customer"
        if b in self.providers_of(a):
            return "provider"
        if b in self.peers_of(a):
            return "peer"
        return None

    def edges(self) -> Iterator[RelEdge]:
        for p, c in self.p2c:
            yield RelEdge(int(p), int(c), EdgeKind.PROVIDER_OF)
        for a, b in self.p2p:
            yield RelEdge(int(a), int(b), EdgeKind.PEER)

    def degree(self) -> np.ndarray:
        return (
            np.diff(self.up_ptr) + np.diff(self.down_ptr) + np.diff(self.peer_ptr)
        )

    def with_ases(self, extra: Iterable[int]) -> TopologyGraph:
        """Copy of the graph with additional isolated ASes."""
        missing = sorted({check_asn(a) for a in extra} - self._index.keys())
        if not missing:
            return self
        asns = np.union1d(self.asns, np.array(missing, dtype=np.int64))
        return TopologyGraph(asns, self.p2c, self.p2p, self.provenance, self.anomalies)


# -- as-rel text -----------------------------------------------------------

_REL_CODES = {"-1": EdgeKind.PROVIDER_OF, "0": EdgeKind.PEER}


def parse_as_rel(
    stream: TextIO | str, source: str | None = None, strict: bool = True
) -> TopologyGraph:
    """Parse CAIDA serial-1 ``A|B|rel`` lines.

    ``rel`` is ``-1`` (A provider of B) or ``0`` (peers); extra trailing fields
    such as the serial-2 source column are not accepted. Self-loop lines are
    dropped and recorded as anomalies. A pair given with two different
    relationships raises ValidationError, or with ``strict=False`` keeps the
    first one and records the conflict.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    seen: dict[tuple[int, int], tuple[EdgeKind, int, int]] = {}
    loops: list[int] = []
    conflicts: list[tuple[int, int]] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        if len(fields) != 3:
            raise ParseError(f"expected 3 '|'-separated fields, got {len(fields)}", lineno, source)
        try:
            a, b = check_asn(int(fields[0])), check_asn(int(fields[1]))
        except (ValueError, TypeError):
            raise ParseError(f"invalid AS number in {line!r}", lineno, source) from None
        kind = _REL_CODES.get(fields[2].strip())
        if kind is None:
            raise ParseError(f"unknown relationship code {fields[2]!r}", lineno, source)
        if a == b:
            loops.append(a)
            continue
        key = (min(a, b), max(a, b))
        prev = seen.get(key)
        if prev is None:
            seen[key] = (kind, a, b)
            continue
        same = prev[0] == kind and (kind == EdgeKind.PEER or (prev[1], prev[2]) == (a, b))
        if same:
            continue
        if strict:
            raise ValidationError(f"contradictory relationship for AS{key[0]} and AS{key[1]}", lineno)
        conflicts.append(key)
    p2c = [(a, b) for kind, a, b in seen.values() if kind == EdgeKind.PROVIDER_OF]
    p2p = [(a, b) for kind, a, b in seen.values() if kind == EdgeKind.PEER]
    g = TopologyGraph.from_edges(p2c, p2p, provenance=(source,) if source else ())
    if loops or conflicts:
        g = TopologyGraph(
            g.asns, g.p2c, g.p2p, g.provenance,
            Anomalies(tuple(sorted(set(loops))), tuple(sorted(set(conflicts)))),
        )
    return g


def format_as_rel(graph: TopologyGraph) -> str:
    lines = [f"{p}|{c}|-1" for p, c in graph.p2c]
    lines += [f"{a}|{b}|0" for a, b in graph.p2p]
    return "".join(line + "\n" for line in lines)


# -- IXP peerings ----------------------------------------------------------


def parse_ixp_pairs(stream: TextIO | str, source: str | None = None) -> list[tuple[int, int]]:
    """Read ``asn_a,asn_b`` CSV rows; an optional non-numeric header row is skipped."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    pairs = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if lineno == 1 and not fields[0].isdigit():
            continue
        if len(fields) != 2:
            raise ParseError(f"expected 2 comma-separated fields, got {len(fields)}", lineno, source)
        try:
            pairs.append((check_asn(int(fields[0])), check_asn(int(fields[1]))))
        except (ValueError, TypeError):
            raise ParseError(f"invalid AS number in {line!r}", lineno, source) from None
    return pairs


@dataclass(frozen=True)
class IxpMergeReport:
    added: int = 0
    conflicts: int = 0
    already_peers: int = 0
    self_pairs: int = 0
    new_ases: int = 0
    conflict_pairs: tuple[tuple[int, int], ...] = field(default=(), repr=False)


def merge_ixp_peerings(
    graph: TopologyGraph, pairs: Iterable[tuple[int, int]], source: str | None = None
) -> tuple[TopologyGraph, IxpMergeReport]:
    """Add IXP co-location pairs as peer edges.

    Pairs already linked by a provider-customer edge keep that edge and are
    counted as conflicts.
    """
    p2c_keys = {(min(p, c), max(p, c)) for p, c in graph.p2c.tolist()}
    p2p_keys = {(a, b) for a, b in graph.p2p.tolist()}
    added: dict[tuple[int, int], None] = {}
    conflicts: list[tuple[int, int]] = []
    already = loops = 0
    for a, b in pairs:
        if a == b:
            loops += 1
            continue
        key = (min(a, b), max(a, b))
        if key in p2c_keys:
            conflicts.append(key)
        elif key in p2p_keys or key in added:
            already += 1
        else:
            added[key] = None
    if not added:
        return graph, IxpMergeReport(0, len(conflicts), already, loops, 0, tuple(conflicts))
    new_p2p = np.concatenate([graph.p2p, np.array(list(added), dtype=np.int64)])
    merged = TopologyGraph.from_arrays(
        graph.p2c, new_p2p, graph.asns,
        graph.provenance + ((source,) if source else ()),
    )
    merged = TopologyGraph(merged.asns, merged.p2c, merged.p2p, merged.provenance, graph.anomalies)
    report = IxpMergeReport(
        len(added), len(conflicts), already, loops, len(merged) - len(graph), tuple(conflicts)
    )
    return merged, report


def validate_topology(graph: TopologyGraph) -> ValidationReport:
    deg = graph.degree()
    isolated = tuple(int(a) for a in graph.asns[deg == 0])
    return ValidationReport(
        n_ases=len(graph),
        n_p2c=len(graph.p2c),
        n_p2p=len(graph.p2p),
        self_loops=graph.anomalies.self_loops,
        contradictions=graph.anomalies.contradictions,
        isolated=isolated,
    )


# -- binary snapshot -------------------------------------------------------
#
# Layout (little endian):
#   magic  10 bytes  b"IPFSCTOPO\0"
#   u16    version
#   u64    n_ases, n_p2c, n_p2p, provenance_len
#   u32[n_ases]     ASNs, ascending
#   u32[2*n_p2c]    (provider, customer) pairs
#   u32[2*n_p2p]    (low, high) peer pairs
#   provenance_len bytes of UTF-8 JSON (list of source identifiers)

_HEADER = struct.Struct("<H4Q")


def write_snapshot(graph: TopologyGraph, fh: BinaryIO) -> None:
    prov = json.dumps(list(graph.provenance)).encode()
    fh.write(SNAPSHOT_MAGIC)
    fh.write(_HEADER.pack(SNAPSHOT_VERSION, len(graph), len(graph.p2c), len(graph.p2p), len(prov)))
    for arr in (graph.asns, graph.p2c, graph.p2p):
        fh.write(arr.astype("<u4").tobytes())
    fh.write(prov)


def load_snapshot(fh: BinaryIO) -> TopologyGraph:
    if fh.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
        raise ParseError("not a topology snapshot (bad magic)")
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ParseError("truncated snapshot header")
    version, n, n_p2c, n_p2p, n_prov = _HEADER.unpack(head)
    if version != SNAPSHOT_VERSION:
        raise ParseError(f"unsupported snapshot version {version}")

    def take(count: int) -> np.ndarray:
        buf = fh.read(4 * count)
        if len(buf) != 4 * count:
            raise ParseError("truncated snapshot body")
        return np.frombuffer(buf, dtype="<u4").astype(np.int64)

    asns = take(n)
    p2c = take(2 * n_p2c).reshape(-1, 2)
    p2p = take(2 * n_p2p).reshape(-1, 2)
    provenance = tuple(json.loads(fh.read(n_prov).decode() or "[]"))
    g = TopologyGraph.from_arrays(p2c, p2p, asns, provenance)
    if not np.array_equal(g.asns, asns):
        raise ParseError("snapshot AS list inconsistent with its edges")
    return g
