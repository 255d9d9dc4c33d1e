"""Seeded synthetic scenarios written in the same formats the ingesters read.

The topology is a tiered hierarchy: a peering clique of tier-1 ASes, every
other AS buying transit from ASes above it (so customer-provider links never
form a cycle) and lateral peering between ASes of similar rank. Endpoints are
hosted in a bounded pool of hosting ASes with Zipf-skewed popularity, and
requesters sit in a separate pool of eyeball ASes.
"""

from __future__ import annotations

import dataclasses
import ipaddress
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ipfscensor.datasets.records import (
    CidRecord,
    DEFAULT_MONITORS,
    RequesterSet,
    ingest_cid_dataset,
    ingest_node_pool,
    ingest_requesters,
    load_attackers,
)
from ipfscensor.errors import ConfigError
from ipfscensor.prefixdb import Endpoint, PrefixDB, RpkiCategory, load_rib, load_roas
from ipfscensor.topology import TopologyGraph, merge_ixp_peerings, parse_as_rel, parse_ixp_pairs

FILES = (
    "as-rel.txt", "ixp.csv", "rib.tsv", "roas.csv", "cids.jsonl",
    "requesters.txt", "attackers.txt", "pool.txt", "bitswap.csv",
)

_V4_BASE = int(ipaddress.IPv4Address("1.0.0.0"))
_V4_SLOTS = (223 - 1) * 256  # one /16 slot per prefix, below the multicast range
_V6_BASE = int(ipaddress.IPv6Address("2400::"))


@dataclass
class SynthConfig:
    n_ases: int = 2000
    n_tier1: int = 8
    providers_per_as: float = 1.8
    peers_per_as: float = 1.0
    ixp_pairs_per_as: float = 0.1
    hosting_ases: int = 120
    requester_ases: int = 300
    prefixes_per_as: float = 1.5
    category_fractions: tuple[float, float, float, float] = (0.45, 0.25, 0.2, 0.1)
    v6_fraction: float = 0.1
    hosting_skew: float = 1.1
    n_cids: int = 100
    providers_per_cid: float = 2.0
    resolvers_per_cid: int = 20
    ipni_probability: float = 0.5
    bitswap_per_cid: float = 1.0
    n_monitors: int = DEFAULT_MONITORS
    infeasible_probability: float = 0.05
    n_requesters: int = 1000
    n_attackers: int = 10
    pool_size: int = 200
    bitswap_events: int = 2000
    bitswap_peers: int = 300
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.category_fractions = tuple(float(f) for f in self.category_fractions)
        self.validate()

    def validate(self) -> None:
        positive = (
            "n_ases", "n_tier1", "hosting_ases", "requester_ases", "n_cids",
            "n_requesters", "n_attackers", "n_monitors", "pool_size",
        )
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("resolvers_per_cid", "bitswap_events", "bitswap_peers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("providers_per_as", "peers_per_as", "ixp_pairs_per_as", "providers_per_cid", "bitswap_per_cid"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.providers_per_as < 1:
            raise ConfigError("providers_per_as must be at least 1")
        if self.prefixes_per_as < 1:
            raise ConfigError("prefixes_per_as must be at least 1")
        fr = self.category_fractions
        if len(fr) != 4 or any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ConfigError(f"category_fractions must be 4 non-negative values summing to 1, got {fr}")
        for name in ("v6_fraction", "ipni_probability", "infeasible_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.n_tier1 > self.n_ases:
            raise ConfigError("n_tier1 exceeds n_ases")
        for name in ("hosting_ases", "requester_ases", "n_attackers"):
            if getattr(self, name) > self.n_ases:
                raise ConfigError(f"{name} exceeds n_ases")
        if self.hosting_skew < 0:
            raise ConfigError("hosting_skew must be non-negative")
        if self.extra:
            raise ConfigError(f"unknown config keys {sorted(self.extra)}")

    @classmethod
    def from_dict(cls, data: dict) -> SynthConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)} - {"extra"}
        known = {k: v for k, v in data.items() if k in names}
        unknown = {k: v for k, v in data.items() if k not in names}
        try:
            return cls(**known, extra=unknown)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> SynthConfig:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc.msg}") from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        d["category_fractions"] = list(self.category_fractions)
        return d


@dataclass
class SynthDataset:
    config: SynthConfig
    seed: int
    texts: dict[str, str]
    graph: TopologyGraph
    db: PrefixDB
    cids: list[CidRecord]
    requesters: RequesterSet
    attackers: list[int]
    pool: list[Endpoint]

    def write(self, outdir: str | Path) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in FILES:
            p = outdir / name
            p.write_text(self.texts[name])
            paths.append(p)
        return paths


# -- topology ----------------------------------------------------------------


def _topology(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (asns by rank, p2c rank pairs, p2p rank pairs, ixp rank pairs)."""
    n, t1 = cfg.n_ases, cfg.n_tier1
    # distinct, unordered AS numbers so smallest-ASN tie-breaks are not rank-aligned
    asns = rng.choice(np.arange(1, 8 * n + 64, dtype=np.int64), size=n, replace=False)

    ranks = np.arange(t1, n)
    k = 1 + rng.poisson(cfg.providers_per_as - 1, size=ranks.size)
    k = np.minimum(k, ranks)
    owner = np.repeat(ranks, k)
    # providers drawn from higher tiers: u**2 biases toward low (top) ranks
    u = rng.random(owner.size)
    prov = np.floor(owner * u**2).astype(np.int64)
    p2c = np.unique(np.stack([prov, owner], axis=1), axis=0)

    clique = np.array([(i, j) for i in range(t1) for j in range(i + 1, t1)], dtype=np.int64).reshape(-1, 2)
    m = int(round(cfg.peers_per_as * n))
    a = rng.integers(t1, n, size=m) if n > t1 else np.zeros(0, dtype=np.int64)
    off = rng.geometric(0.02, size=a.size) * rng.choice([-1, 1], size=a.size)
    b = np.clip(a + off, t1, n - 1)
    lateral = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
    lateral = lateral[lateral[:, 0] != lateral[:, 1]]
    p2p = np.unique(np.concatenate([clique, lateral]), axis=0)
    taken = np.sort(p2c, axis=1)
    keys = taken[:, 0] * n + taken[:, 1]
    p2p = p2p[~np.isin(p2p[:, 0] * n + p2p[:, 1], keys)]

    mx = int(round(cfg.ixp_pairs_per_as * n))
    xa, xb = rng.integers(0, n, size=mx), rng.integers(0, n, size=mx)
    ixp = np.stack([xa, xb], axis=1)[xa != xb]
    return asns, p2c, p2p, ixp


# -- address plan --------------------------------------------------------------


@dataclass(frozen=True)
class _Prefix:
    network: ipaddress.IPv4Network | ipaddress.IPv6Network
    asn: int
    category: RpkiCategory
    max_length: int | None


def _prefix_plan(cfg: SynthConfig, rng: np.random.Generator, owners: list[int]) -> dict[int, list[_Prefix]]:
    counts = 1 + rng.poisson(cfg.prefixes_per_as - 1, size=len(owners))
    total = int(counts.sum())
    cats = rng.choice(4, size=total, p=np.array(cfg.category_fractions)) + 1
    v6 = rng.random(total) < cfg.v6_fraction
    if int((~v6).sum()) > _V4_SLOTS:
        raise ConfigError("too many IPv4 prefixes for the synthetic address plan")
    plan: dict[int, list[_Prefix]] = {}
    i4 = i6 = 0
    j = 0
    for asn, c in zip(owners, counts):
        for _ in range(int(c)):
            cat = RpkiCategory(int(cats[j]))
            six = bool(v6[j])
            j += 1
            lo, limit = (32, 48) if six else (16, 24)
            if cat == RpkiCategory.NO_ROA_SHORT:
                length, maxlen = int(rng.integers(lo, limit)), None
            elif cat == RpkiCategory.NO_ROA_LIMIT:
                length, maxlen = limit, None
            elif cat == RpkiCategory.ROA_LOOSE:
                length = int(rng.integers(lo, limit))
                maxlen = int(rng.integers(length + 1, limit + 1))
            else:
                length = int(rng.integers(lo, limit + 1))
                maxlen = length
            if six:
                net = ipaddress.IPv6Network((_V6_BASE + (i6 << 96), length))
                i6 += 1
            else:
                net = ipaddress.IPv4Network((_V4_BASE + (i4 << 16), length))
                i4 += 1
            plan.setdefault(asn, []).append(_Prefix(net, asn, cat, maxlen))
    return plan


def _random_ip(rng: np.random.Generator, net) -> str:
    host_bits = net.max_prefixlen - net.prefixlen
    span = 1 << min(host_bits, 62)
    offset = int(rng.integers(1, span - 1)) if span > 2 else 0
    return str(net.network_address + offset)


def _zipf_weights(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


# -- driver --------------------------------------------------------------------


def generate_synthetic(config: SynthConfig | dict | None = None, seed: int = 0) -> SynthDataset:
    """Generate a scenario deterministically from ``(config, seed)``.

    Everything is emitted as file text first and parsed back through the
    regular ingesters, so the returned objects are exactly what a later run
    on the written files would see.
    """
    cfg = config if isinstance(config, SynthConfig) else SynthConfig.from_dict(config or {})
    rng = np.random.default_rng(seed)
    asns, p2c, p2p, ixp = _topology(cfg, rng)

    texts: dict[str, str] = {}
    rel = [f"{asns[p]}|{asns[c]}|-1\n" for p, c in p2c]
    rel += [f"{asns[a]}|{asns[b]}|0\n" for a, b in p2p]
    texts["as-rel.txt"] = f"# synthetic topology seed={seed}\n" + "".join(rel)
    texts["ixp.csv"] = "asn_a,asn_b\n" + "".join(f"{asns[a]},{asns[b]}\n" for a, b in ixp)

    n = cfg.n_ases
    # attackers: best-connected ASes, like a rank list
    deg = np.bincount(np.concatenate([p2c.ravel(), p2p.ravel()]), minlength=n)
    order = np.lexsort((asns, -deg))
    attackers = [int(asns[i]) for i in order[: cfg.n_attackers]]

    # hosting and eyeball pools favour the lower tiers
    lower = np.arange(min(cfg.n_tier1, n - 1), n) if n > 1 else np.arange(n)
    hosting = rng.choice(lower, size=min(cfg.hosting_ases, lower.size), replace=False)
    eyeballs = rng.choice(lower, size=min(cfg.requester_ases, lower.size), replace=False)
    owners = list(dict.fromkeys(int(asns[i]) for i in np.concatenate([hosting, eyeballs])))
    plan = _prefix_plan(cfg, rng, owners)

    rib = sorted((p for ps in plan.values() for p in ps), key=lambda p: (p.network.version, p.network))
    texts["rib.tsv"] = "".join(f"{p.network}\t{p.asn}\n" for p in rib)
    texts["roas.csv"] = "prefix,maxLength,originAsn\n" + "".join(
        f"{p.network},{p.max_length},{p.asn}\n" for p in rib if p.max_length is not None
    )

    host_asns = [int(asns[i]) for i in hosting]
    host_w = _zipf_weights(len(host_asns), cfg.hosting_skew)
    eye_asns = [int(asns[i]) for i in eyeballs]
    eye_w = _zipf_weights(len(eye_asns), cfg.hosting_skew)

    def ips_from(pool: list[int], weights: np.ndarray | None, count: int) -> list[str]:
        picks = rng.choice(len(pool), size=count, p=weights)
        out = []
        for i in picks:
            prefixes = plan[pool[i]]
            out.append(_random_ip(rng, prefixes[int(rng.integers(len(prefixes)))].network))
        return out

    def distinct_ips_from(pool: list[int], weights: np.ndarray | None, count: int) -> list[str]:
        # ingestion dedups requesters and pool nodes by IP, so redraw collisions
        out: dict[str, None] = {}
        for _ in range(64):
            for ip in ips_from(pool, weights, count - len(out)):
                out.setdefault(ip)
            if len(out) == count:
                return list(out)
        raise ConfigError(f"could not draw {count} distinct addresses from the prefix plan")

    indexers = ips_from(host_asns, None, 2)
    rows = []
    for c in range(cfg.n_cids):
        cid = "bafy" + rng.bytes(16).hex()
        providers = ips_from(host_asns, host_w, 1 + int(rng.poisson(max(cfg.providers_per_cid - 1, 0))))
        resolvers = ips_from(host_asns, None, cfg.resolvers_per_cid)
        ipni = [indexers[int(rng.integers(2))]] if rng.random() < cfg.ipni_probability else []
        bitswap = ips_from(host_asns, host_w, int(rng.poisson(cfg.bitswap_per_cid)))
        views = []
        for _ in range(cfg.n_monitors):
            keep = [ip for ip in bitswap if rng.random() < 0.5]
            views.append(keep)
        if rng.random() < cfg.infeasible_probability:
            views[int(rng.integers(cfg.n_monitors))].extend(ips_from(host_asns, host_w, 1))
        rows.append({
            "cid": cid, "providers": providers, "resolvers": resolvers, "ipni": ipni,
            "bitswap_attacker": bitswap, "bitswap_victims": views,
        })
    texts["cids.jsonl"] = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in rows)

    texts["requesters.txt"] = "".join(ip + "\n" for ip in distinct_ips_from(eye_asns, eye_w, cfg.n_requesters))
    texts["attackers.txt"] = "".join(f"{a}\n" for a in attackers)
    texts["pool.txt"] = "".join(ip + "\n" for ip in distinct_ips_from(host_asns, host_w, cfg.pool_size))

    cid_names = [r["cid"] for r in rows]
    events = ["timestamp,peer,cid\n"]
    if cfg.bitswap_events and cfg.bitswap_peers:
        peers = rng.integers(cfg.bitswap_peers, size=cfg.bitswap_events)
        wanted = rng.choice(len(cid_names), size=cfg.bitswap_events, p=_zipf_weights(len(cid_names), 1.0))
        for t in range(cfg.bitswap_events):
            events.append(f"{t / 10:.1f},peer{peers[t]},{cid_names[wanted[t]]}\n")
    texts["bitswap.csv"] = "".join(events)

    return _load(cfg, seed, texts)


def _load(cfg: SynthConfig, seed: int, texts: dict[str, str]) -> SynthDataset:
    graph = parse_as_rel(texts["as-rel.txt"], source="as-rel.txt")
    graph, _ = merge_ixp_peerings(graph, parse_ixp_pairs(texts["ixp.csv"]), source="ixp.csv")
    db = PrefixDB(load_rib(texts["rib.tsv"]), load_roas(texts["roas.csv"]))
    cids, _ = ingest_cid_dataset(texts["cids.jsonl"], db, source="cids.jsonl")
    requesters = ingest_requesters(texts["requesters.txt"], db)
    attackers = load_attackers(texts["attackers.txt"])
    pool = ingest_node_pool(texts["pool.txt"], db)
    return SynthDataset(cfg, seed, texts, graph, db, cids, requesters, attackers, pool)
