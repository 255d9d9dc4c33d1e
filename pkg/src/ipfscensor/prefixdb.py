"""IP-to-origin mapping and RPKI hijackability classification.

Longest-prefix match uses one hash table per prefix length, probed from the
most specific length present down to the least specific. Prefixes are stdlib
:mod:`ipaddress` network objects with host bits cleared.
"""

from __future__ import annotations

import enum
import io
import ipaddress
from collections.abc import Iterable
from dataclasses import dataclass
from typing import TextIO, Union

from ipfscensor.errors import ParseError, ValidationError
from ipfscensor.topology import check_asn

IpPrefix = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]
IpAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]

# announcements more specific than these are filtered by operators
V4_FILTER_LENGTH = 24
V6_FILTER_LENGTH = 48


class RpkiCategory(enum.IntEnum):
    """Hijackability class of a prefix.

    1. no covering ROA, shorter than /24 (v4) or /48 (v6)
    2. no covering ROA, at the /24 or /48 filtering limit
    3. covered by a ROA whose maxLength exceeds the prefix length
    4. covered by a ROA whose maxLength equals the prefix length
    """

    NO_ROA_SHORT = 1
    NO_ROA_LIMIT = 2
    ROA_LOOSE = 3
    ROA_MAXLEN = 4

    @property
    def always_hijackable(self) -> bool:
        return self in (RpkiCategory.NO_ROA_SHORT, RpkiCategory.ROA_LOOSE)


def filter_length(version: int) -> int:
    return V4_FILTER_LENGTH if version == 4 else V6_FILTER_LENGTH


def parse_prefix(text: str) -> IpPrefix:
    """Parse a CIDR prefix; host bits must be zero."""
    try:
        return ipaddress.ip_network(text.strip(), strict=True)
    except ValueError as exc:
        raise ParseError(f"invalid prefix {text!r}: {exc}") from None


def parse_ip(text: str) -> IpAddress:
    try:
        return ipaddress.ip_address(text.strip())
    except ValueError:
        raise ParseError(f"invalid IP address {text!r}") from None


class _LengthTable:
    """Per-family map length -> {network int: value}, probed longest first."""

    def __init__(self, bits: int):
        self.bits = bits
        self.tables: dict[int, dict[int, object]] = {}
        self._lengths: list[int] = []

    def insert(self, net: int, length: int, value: object) -> object | None:
        table = self.tables.get(length)
        if table is None:
            table = self.tables[length] = {}
            self._lengths = sorted(self.tables, reverse=True)
        prev = table.get(net)
        if prev is None:
            table[net] = value
        return prev

    def longest(self, addr: int):
        for length in self._lengths:
            hit = self.tables[length].get(addr >> (self.bits - length) << (self.bits - length))
            if hit is not None:
                return hit
        return None

    def covering(self, addr: int, max_length: int) -> list:
        out = []
        for length in self._lengths:
            if length > max_length:
                continue
            hit = self.tables[length].get(addr >> (self.bits - length) << (self.bits - length))
            if hit is not None:
                out.append(hit)
        return out


class PrefixIndex:
    """Longest-prefix-match index mapping prefixes to origin ASNs."""

    def __init__(self, entries: Iterable[tuple[IpPrefix, int]] = ()):
        self._tables = {4: _LengthTable(32), 6: _LengthTable(128)}
        self._entries: list[tuple[IpPrefix, int]] = []
        for prefix, origin in entries:
            self.add(prefix, origin)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def add(self, prefix: IpPrefix, origin: int) -> None:
        """Insert an entry; re-adding the same pair is a no-op, a different origin is rejected."""
        origin = check_asn(origin)
        table = self._tables[prefix.version]
        prev = table.insert(int(prefix.network_address), prefix.prefixlen, (prefix, origin))
        if prev is None:
            self._entries.append((prefix, origin))
        elif prev[1] != origin:
            raise ValidationError(f"{prefix} already mapped to AS{prev[1]}, not AS{origin}")

    def lookup(self, ip: IpAddress | str) -> tuple[IpPrefix, int] | None:
        """Most specific ``(prefix, origin)`` covering ``ip``, or None."""
        if isinstance(ip, str):
            ip = parse_ip(ip)
        return self._tables[ip.version].longest(int(ip))


def load_rib(stream: TextIO | str, source: str | None = None) -> PrefixIndex:
    """Read ``<prefix>\\t<asn>`` lines (any whitespace separates; ``#`` starts a comment)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    index = PrefixIndex()
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(f"expected '<prefix> <asn>', got {line!r}", lineno, source)
        try:
            prefix = ipaddress.ip_network(fields[0], strict=True)
            asn = check_asn(int(fields[1].removeprefix("AS")))
        except (ValueError, TypeError) as exc:
            raise ParseError(f"bad RIB entry {line!r}: {exc}", lineno, source) from None
        try:
            index.add(prefix, asn)
        except ValidationError as exc:
            raise ValidationError(str(exc), lineno) from None
    return index


def format_rib(index: PrefixIndex) -> str:
    return "".join(f"{p}\t{asn}\n" for p, asn in index)


@dataclass(frozen=True)
class RoaRecord:
    prefix: IpPrefix
    max_length: int
    origin: int

    def __post_init__(self) -> None:
        check_asn(self.origin)
        bits = self.prefix.max_prefixlen
        if not self.prefix.prefixlen <= self.max_length <= bits:
            raise ValueError(f"maxLength {self.max_length} invalid for {self.prefix}")

    def covers(self, prefix: IpPrefix) -> bool:
        return prefix.version == self.prefix.version and prefix.subnet_of(self.prefix)


class RoaSet:
    """ROAs indexed for covering-prefix queries."""

    def __init__(self, roas: Iterable[RoaRecord] = ()):
        self._tables = {4: _LengthTable(32), 6: _LengthTable(128)}
        self._roas: list[RoaRecord] = []
        for roa in roas:
            self.add(roa)

    def __len__(self) -> int:
        return len(self._roas)

    def __iter__(self):
        return iter(self._roas)

    def add(self, roa: RoaRecord) -> None:
        table = self._tables[roa.prefix.version]
        bucket = table.insert(int(roa.prefix.network_address), roa.prefix.prefixlen, [roa])
        if bucket is None:
            self._roas.append(roa)
        elif roa not in bucket:
            bucket.append(roa)
            self._roas.append(roa)

    def covering(self, prefix: IpPrefix) -> list[RoaRecord]:
        table = self._tables[prefix.version]
        hits = table.covering(int(prefix.network_address), prefix.prefixlen)
        return [roa for bucket in hits for roa in bucket]

    def governing(self, prefix: IpPrefix) -> RoaRecord | None:
        """The most permissive covering ROA (largest maxLength, then most specific)."""
        cover = self.covering(prefix)
        if not cover:
            return None
        return max(cover, key=lambda r: (r.max_length, r.prefix.prefixlen, -r.origin))


def load_roas(stream: TextIO | str, source: str | None = None) -> RoaSet:
    """Read ``prefix,maxLength,originAsn`` rows; a non-numeric header row is skipped."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    roas = RoaSet()
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise ParseError(f"expected 3 comma-separated fields, got {len(fields)}", lineno, source)
        if not fields[1].isdigit() and lineno == 1:
            continue
        try:
            roa = RoaRecord(
                ipaddress.ip_network(fields[0], strict=True),
                int(fields[1]),
                int(fields[2].removeprefix("AS")),
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(f"bad ROA {line!r}: {exc}", lineno, source) from None
        roas.add(roa)
    return roas


def format_roas(roas: RoaSet) -> str:
    rows = ["prefix,maxLength,originAsn\n"]
    rows += [f"{r.prefix},{r.max_length},{r.origin}\n" for r in roas]
    return "".join(rows)


def classify_prefix(prefix: IpPrefix, roas: RoaSet | Iterable[RoaRecord]) -> RpkiCategory:
    if not isinstance(roas, RoaSet):
        roas = RoaSet(roas)
    roa = roas.governing(prefix)
    if roa is None:
        if prefix.prefixlen < filter_length(prefix.version):
            return RpkiCategory.NO_ROA_SHORT
        return RpkiCategory.NO_ROA_LIMIT
    if prefix.prefixlen < roa.max_length:
        return RpkiCategory.ROA_LOOSE
    return RpkiCategory.ROA_MAXLEN


@dataclass(frozen=True)
class Endpoint:
    """An IP resolved to its covering prefix, origin AS and RPKI category.

    Unmapped endpoints (no covering RIB entry) have ``prefix``, ``origin`` and
    ``category`` set to None. ``ipni`` tags indexer endpoints kept among resolvers.
    """

    ip: IpAddress
    prefix: IpPrefix | None
    origin: int | None
    category: RpkiCategory | None
    ipni: bool = False

    @property
    def mapped(self) -> bool:
        return self.prefix is not None


class PrefixDB:
    """A RIB index plus ROA set, with per-prefix category memoisation."""

    def __init__(self, index: PrefixIndex, roas: RoaSet | None = None):
        self.index = index
        self.roas = roas if roas is not None else RoaSet()
        self._categories: dict[IpPrefix, RpkiCategory] = {}

    def category(self, prefix: IpPrefix) -> RpkiCategory:
        cat = self._categories.get(prefix)
        if cat is None:
            cat = self._categories[prefix] = classify_prefix(prefix, self.roas)
        return cat

    def resolve(self, ip: IpAddress | str, ipni: bool = False) -> Endpoint:
        return resolve_endpoint(ip, self.index, self, ipni=ipni)


def resolve_endpoint(
    ip: IpAddress | str,
    index: PrefixIndex,
    roas: RoaSet | PrefixDB | Iterable[RoaRecord],
    ipni: bool = False,
) -> Endpoint:
    if isinstance(ip, str):
        ip = parse_ip(ip)
    hit = index.lookup(ip)
    if hit is None:
        return Endpoint(ip, None, None, None, ipni)
    prefix, origin = hit
    if isinstance(roas, PrefixDB):
        cat = roas.category(prefix)
    else:
        cat = classify_prefix(prefix, roas)
    return Endpoint(ip, prefix, origin, cat, ipni)
