"""Attack-surface size distributions and RPKI category histograms."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass

from ipfscensor.attack.predicates import Vector, attack_surface
from ipfscensor.datasets.records import CidRecord
from ipfscensor.prefixdb import Endpoint, RpkiCategory

SURFACE_COLUMNS = ["cid", "vector", "asns", "prefixes", "ipv4", "ipv6"]
CATEGORY_COLUMNS = ["vector", "category", "prefixes"]


@dataclass(frozen=True)
class SurfaceRow:
    cid: str
    vector: Vector
    asns: int
    prefixes: int
    ipv4: int
    ipv6: int


@dataclass
class SurfaceStats:
    rows: list[SurfaceRow]
    # vector -> category -> distinct prefixes across the dataset
    categories: dict[Vector, dict[RpkiCategory, int]]

    def surface_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SURFACE_COLUMNS)
        for r in self.rows:
            w.writerow([r.cid, r.vector.value, r.asns, r.prefixes, r.ipv4, r.ipv6])
        return buf.getvalue()

    def category_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CATEGORY_COLUMNS)
        for vector, counts in self.categories.items():
            for cat in RpkiCategory:
                w.writerow([vector.value, int(cat), counts.get(cat, 0)])
        return buf.getvalue()


def _surface(cid: CidRecord, vector: Vector) -> tuple[Endpoint, ...]:
    if vector == Vector.FULL:
        return attack_surface(cid, Vector.PROVIDERS) + attack_surface(cid, Vector.RESOLVERS)
    return attack_surface(cid, vector)


def surface_stats(
    cids: Sequence[CidRecord],
    vectors: Sequence[Vector] = (Vector.PROVIDERS, Vector.RESOLVERS, Vector.FULL),
) -> SurfaceStats:
    """Distinct ASNs, prefixes and v4/v6 IPs per CID surface, and category counts."""
    vectors = [Vector(v) for v in vectors]
    rows: list[SurfaceRow] = []
    seen: dict[Vector, dict] = {v: {} for v in vectors}
    if not cids:
        return SurfaceStats([], {})
    for cid in cids:
        for v in vectors:
            eps = [e for e in _surface(cid, v) if e.mapped]
            ips = {e.ip for e in eps}
            rows.append(SurfaceRow(
                cid.cid, v,
                asns=len({e.origin for e in eps}),
                prefixes=len({e.prefix for e in eps}),
                ipv4=sum(1 for ip in ips if ip.version == 4),
                ipv6=sum(1 for ip in ips if ip.version == 6),
            ))
            for e in eps:
                seen[v].setdefault(e.prefix, e.category)
    categories = {}
    for v in vectors:
        counts = {cat: 0 for cat in RpkiCategory}
        for cat in seen[v].values():
            counts[cat] += 1
        categories[v] = counts
    return SurfaceStats(rows, categories)
