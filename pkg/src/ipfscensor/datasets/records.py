"""CID attack-surface records, requester sets and attacker lists."""

from __future__ import annotations

import io
import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import TextIO

from ipfscensor.errors import ParseError
from ipfscensor.prefixdb import Endpoint, IpAddress, IpPrefix, PrefixDB, parse_ip
from ipfscensor.topology import check_asn

log = logging.getLogger(__name__)

DEFAULT_MONITORS = 4

CID_FIELDS = ("cid", "providers", "resolvers", "ipni", "bitswap_attacker", "bitswap_victims")


@dataclass(frozen=True)
class CidRecord:
    """Everything an attacker must disrupt to censor one CID.

    ``resolvers`` holds the DHT resolvers followed by indexer endpoints
    (``Endpoint.ipni`` set). ``bitswap_victims`` holds one endpoint tuple per
    independent monitor.
    """

    cid: str
    providers: tuple[Endpoint, ...] = ()
    resolvers: tuple[Endpoint, ...] = ()
    bitswap_attacker: tuple[Endpoint, ...] = ()
    bitswap_victims: tuple[tuple[Endpoint, ...], ...] = ()
    unmapped: int = field(default=0, compare=False)

    @property
    def ipni(self) -> tuple[Endpoint, ...]:
        return tuple(e for e in self.resolvers if e.ipni)

    @property
    def unattackable_surface(self) -> bool:
        return not self.providers and not self.bitswap_attacker

    @property
    def victim_only_ips(self) -> set[IpAddress]:
        seen = {e.ip for e in self.bitswap_attacker}
        return {e.ip for view in self.bitswap_victims for e in view} - seen

    @property
    def feasible(self) -> bool:
        """False when some monitor saw a caching peer the attacker's node missed."""
        return not self.victim_only_ips

    def endpoints(self) -> Iterator[Endpoint]:
        """Every endpoint the attacker can target (victim views excluded)."""
        yield from self.providers
        yield from self.resolvers
        yield from self.bitswap_attacker

    def with_providers(self, extra: Iterable[Endpoint]) -> CidRecord:
        have = {e.ip for e in self.providers}
        added = tuple(e for e in extra if e.ip not in have)
        return CidRecord(
            self.cid, self.providers + added, self.resolvers,
            self.bitswap_attacker, self.bitswap_victims, self.unmapped,
        )

    def to_json(self) -> str:
        row = {
            "cid": self.cid,
            "providers": [str(e.ip) for e in self.providers],
            "resolvers": [str(e.ip) for e in self.resolvers if not e.ipni],
            "ipni": [str(e.ip) for e in self.resolvers if e.ipni],
            "bitswap_attacker": [str(e.ip) for e in self.bitswap_attacker],
            "bitswap_victims": [[str(e.ip) for e in view] for view in self.bitswap_victims],
        }
        return json.dumps(row, separators=(",", ":"))


@dataclass
class IngestReport:
    records: int = 0
    unmapped: int = 0
    unmapped_ips: list[str] = field(default_factory=list)
    unattackable: list[str] = field(default_factory=list)
    duplicates: int = 0

    def warn(self, what: str) -> None:
        if self.unmapped:
            log.warning("%s: %d IPs without a covering prefix were excluded", what, self.unmapped)
        if self.unattackable:
            log.warning("%s: %d records have no providers and no Bitswap peers", what, len(self.unattackable))


def _ip_list(value: object, key: str, lineno: int, source: str | None) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError(f"field {key!r} must be a list of IP strings", lineno, source)
    return value


class _Resolver:
    def __init__(self, db: PrefixDB, report: IngestReport, lineno: int, source: str | None):
        self.db, self.report, self.lineno, self.source = db, report, lineno, source

    def __call__(self, ips: list[str], ipni: bool = False, skip: set | None = None) -> tuple[Endpoint, ...]:
        out: list[Endpoint] = []
        seen = set(skip or ())
        for text in ips:
            try:
                ip = parse_ip(text)
            except ParseError:
                raise ParseError(f"invalid IP address {text!r}", self.lineno, self.source) from None
            if ip in seen:
                continue
            seen.add(ip)
            ep = self.db.resolve(ip, ipni=ipni)
            if not ep.mapped:
                self.report.unmapped += 1
                self.report.unmapped_ips.append(text)
                continue
            out.append(ep)
        return tuple(out)


def parse_cid_row(row: object, db: PrefixDB, report: IngestReport, lineno: int = 0, source: str | None = None) -> CidRecord:
    if not isinstance(row, dict):
        raise ParseError("expected a JSON object", lineno, source)
    unknown = set(row) - set(CID_FIELDS)
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", lineno, source)
    cid = row.get("cid")
    if not isinstance(cid, str) or not cid:
        raise ParseError("'cid' must be a non-empty string", lineno, source)
    before = report.unmapped
    resolve = _Resolver(db, report, lineno, source)
    providers = resolve(_ip_list(row.get("providers", []), "providers", lineno, source))
    resolvers = resolve(_ip_list(row.get("resolvers", []), "resolvers", lineno, source))
    ipni = resolve(
        _ip_list(row.get("ipni", []), "ipni", lineno, source),
        ipni=True, skip={e.ip for e in resolvers},
    )
    attacker = resolve(_ip_list(row.get("bitswap_attacker", []), "bitswap_attacker", lineno, source))
    views = row.get("bitswap_victims", [])
    if not isinstance(views, list):
        raise ParseError("'bitswap_victims' must be a list of IP lists", lineno, source)
    victims = tuple(resolve(_ip_list(v, "bitswap_victims", lineno, source)) for v in views)
    rec = CidRecord(cid, providers, resolvers + ipni, attacker, victims, report.unmapped - before)
    if rec.unattackable_surface:
        report.unattackable.append(cid)
    report.records += 1
    return rec


def ingest_cid_dataset(
    stream: TextIO | str, db: PrefixDB, source: str | None = None
) -> tuple[list[CidRecord], IngestReport]:
    """Load JSON-lines CID records, resolving every IP through ``db``."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    report = IngestReport()
    records = []
    for lineno, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        try:
            row = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno, source) from None
        records.append(parse_cid_row(row, db, report, lineno, source))
    report.warn(source or "CID dataset")
    return records, report


def format_cid_dataset(records: Iterable[CidRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


@dataclass(frozen=True)
class Requester:
    ip: IpAddress
    asn: int
    prefix: IpPrefix


@dataclass(frozen=True)
class RequesterSet(Sequence):
    """Requesters unique by IP, in first-seen order."""

    requesters: tuple[Requester, ...] = ()
    excluded: tuple[str, ...] = ()
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.requesters)

    def __getitem__(self, i):
        return self.requesters[i]

    def __iter__(self) -> Iterator[Requester]:
        return iter(self.requesters)

    @classmethod
    def from_ips(cls, ips: Iterable[IpAddress | str], db: PrefixDB) -> RequesterSet:
        seen: set = set()
        out: list[Requester] = []
        excluded: list[str] = []
        dups = 0
        for raw in ips:
            ip = parse_ip(raw) if isinstance(raw, str) else raw
            if ip in seen:
                dups += 1
                continue
            seen.add(ip)
            hit = db.index.lookup(ip)
            if hit is None:
                excluded.append(str(ip))
                continue
            out.append(Requester(ip, hit[1], hit[0]))
        if excluded:
            log.warning("%d requester IPs without a covering prefix were excluded", len(excluded))
        return cls(tuple(out), tuple(excluded), dups)

    def ips(self) -> list[str]:
        return [str(r.ip) for r in self.requesters]


def _ip_lines(stream: TextIO | str, source: str | None) -> list:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_ip(line))
        except ParseError:
            raise ParseError(f"invalid IP address {line!r}", lineno, source) from None
    return out


def ingest_requesters(stream: TextIO | str, db: PrefixDB, source: str | None = None) -> RequesterSet:
    """One IP per line; duplicates dropped (first wins), unmapped IPs excluded."""
    return RequesterSet.from_ips(_ip_lines(stream, source), db)


def ingest_node_pool(stream: TextIO | str, db: PrefixDB, source: str | None = None) -> list[Endpoint]:
    """Server-node pool for pinning: same file format and mapping as requesters."""
    return [
        db.resolve(r.ip) for r in ingest_requesters(stream, db, source)
    ]


def load_attackers(stream: TextIO | str, source: str | None = None) -> list[int]:
    """One ASN per line (``AS`` prefix and ``#`` comments allowed); duplicates dropped."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out: dict[int, None] = {}
    dups = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            asn = check_asn(int(line.removeprefix("AS")))
        except (ValueError, TypeError):
            raise ParseError(f"invalid AS number {line!r}", lineno, source) from None
        if asn in out:
            dups += 1
        out[asn] = None
    if dups:
        log.warning("%d duplicate attacker ASNs ignored", dups)
    return list(out)
