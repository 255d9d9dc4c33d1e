"""Bulk blockage evaluation over (CID, attacker, requester).

Whether an endpoint is blocked depends only on the attacker, the requester's
AS and the endpoint's ``(origin AS, RPKI category)`` key. The engine therefore

* groups requesters by AS (weights = requesters per AS),
* builds one routing tree per origin, attacker and requester AS, keeping only
  the slices it needs,
* derives, per attacker, a ``keys x requester-ASes`` boolean matrix per mode,
* and reduces CID surfaces with a sparse incidence product: a surface is
  blocked for a requester AS when none of its keys is unblocked.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ipfscensor.attack.predicates import Mode, TiePolicy, Vector, attack_surface
from ipfscensor.datasets.records import CidRecord, Requester
from ipfscensor.prefixdb import Endpoint, IpPrefix, RpkiCategory
from ipfscensor.routing import RouteClass, build_routing_tree
from ipfscensor.topology import TopologyGraph

log = logging.getLogger(__name__)

UNREACH = np.int8(RouteClass.UNREACHABLE)

SURFACE_VECTORS = (Vector.PROVIDERS, Vector.RESOLVERS)


def default_threads() -> int:
    return os.cpu_count() or 1


def _attackers_on_paths(parent: np.ndarray, cls: np.ndarray, sources: np.ndarray, att_pos: np.ndarray, n_att: int) -> np.ndarray:
    """``out[i, k]``: attacker ``k`` lies on the tree path from ``sources[i]`` (endpoints included)."""
    out = np.zeros((len(sources), n_att), dtype=bool)
    rows = np.arange(len(sources))
    cur = sources.astype(np.int64)
    alive = cls[cur] != UNREACH
    rows, cur = rows[alive], cur[alive]
    while cur.size:
        k = att_pos[cur]
        hit = k >= 0
        out[rows[hit], k[hit]] = True
        nxt = parent[cur]
        keep = nxt >= 0
        rows, cur = rows[keep], nxt[keep].astype(np.int64)
    return out


@dataclass(frozen=True)
class EndpointKey:
    origin: int
    category: RpkiCategory


class BlockageEngine:
    """Precomputed routing facts for one scenario.

    ``extra_endpoints`` registers endpoints that are not in any CID yet (the
    pinning pool) so their keys can be evaluated too.
    """

    def __init__(
        self,
        graph: TopologyGraph,
        cids: Sequence[CidRecord],
        requesters: Sequence[Requester],
        attackers: Sequence[int],
        tie_policy: TiePolicy = TiePolicy.LEGIT_WINS,
        extra_endpoints: Iterable[Endpoint] = (),
        threads: int | None = None,
    ):
        if not attackers:
            raise ValueError("attacker list is empty")
        self.cids = list(cids)
        self.requesters = list(requesters)
        self.attackers = list(dict.fromkeys(int(a) for a in attackers))
        self.tie_policy = TiePolicy(tie_policy)
        self.threads = threads or default_threads()
        extra_endpoints = list(extra_endpoints)

        # requester ASes in first-seen order
        req_asns: dict[int, int] = {}
        for r in self.requesters:
            req_asns.setdefault(r.asn, len(req_asns))
        self.req_asns = list(req_asns)
        self.req_group = np.array([req_asns[r.asn] for r in self.requesters], dtype=np.int64)
        self.weights = np.bincount(self.req_group, minlength=len(self.req_asns)).astype(np.int64)
        self.n_requesters = len(self.requesters)

        # endpoint keys and prefixes in first-seen order
        self.keys: list[EndpointKey] = []
        self._key_index: dict[EndpointKey, int] = {}
        self.prefixes: list[IpPrefix] = []
        self._prefix_index: dict[IpPrefix, int] = {}
        self.prefix_key: list[int] = []
        self.surface_keys: list[list[list[int]]] = []  # [cid][vector] -> key indices
        self.surface_prefixes: list[list[list[int]]] = []  # [cid][vector] -> prefix indices
        for cid in self.cids:
            per_k, per_p = [], []
            for vec in SURFACE_VECTORS:
                ks, ps = self._register(attack_surface(cid, vec))
                per_k.append(ks)
                per_p.append(ps)
            self.surface_keys.append(per_k)
            self.surface_prefixes.append(per_p)
        self._register(extra_endpoints)
        self.feasible = np.array([c.feasible for c in self.cids], dtype=bool)

        origins = list(dict.fromkeys(k.origin for k in self.keys))
        self.origins = origins
        self._origin_index = {o: i for i, o in enumerate(origins)}
        self.key_origin = np.array([self._origin_index[k.origin] for k in self.keys], dtype=np.int64)
        self.key_category = np.array([int(k.category) for k in self.keys], dtype=np.int8)
        self.key_origin_asn = np.array([k.origin for k in self.keys], dtype=np.int64)

        missing = set(self.req_asns) | set(origins) | set(self.attackers)
        missing = {a for a in missing if a not in graph}
        if missing:
            log.warning("%d ASes missing from the topology are treated as isolated", len(missing))
        self.graph = graph.with_ases(missing)
        self._attacker_index = {a: i for i, a in enumerate(self.attackers)}
        self._prepare()

    # -- setup ---------------------------------------------------------------

    def _register(self, endpoints: Iterable[Endpoint]) -> tuple[list[int], list[int]]:
        ks: dict[int, None] = {}
        ps: dict[int, None] = {}
        for e in endpoints:
            if not e.mapped:
                continue
            key = EndpointKey(e.origin, e.category)
            k = self._key_index.get(key)
            if k is None:
                k = self._key_index[key] = len(self.keys)
                self.keys.append(key)
            ks[k] = None
            p = self._prefix_index.get(e.prefix)
            if p is None:
                p = self._prefix_index[e.prefix] = len(self.prefixes)
                self.prefixes.append(e.prefix)
                self.prefix_key.append(k)
            ps[p] = None
        return list(ks), list(ps)

    def key_of(self, endpoint: Endpoint) -> int:
        return self._key_index[EndpointKey(endpoint.origin, endpoint.category)]

    def attacker_index(self, asn: int) -> int:
        return self._attacker_index[asn]

    def _prepare(self) -> None:
        g = self.graph
        R = g.indices_of(self.req_asns)
        O = g.indices_of(self.origins)
        nR, nO, nA = len(R), len(O), len(self.attackers)
        att_pos = np.full(len(g), -1, dtype=np.int64)
        att_pos[g.indices_of(self.attackers)] = np.arange(nA)

        self.origin_cls = np.empty((nO, nR), dtype=np.int8)
        self.origin_len = np.empty((nO, nR), dtype=np.int32)
        self.att_cls = np.empty((nA, nR), dtype=np.int8)
        self.att_len = np.empty((nA, nR), dtype=np.int32)
        # [attacker, origin, requester AS]
        self.forward = np.zeros((nA, nO, nR), dtype=bool)
        self.reverse = np.zeros((nA, nO, nR), dtype=bool)

        dests = list(dict.fromkeys(self.origins + self.attackers + self.req_asns))
        origin_at = self._origin_index
        att_at = self._attacker_index
        req_at = {a: i for i, a in enumerate(self.req_asns)}

        def job(dest: int):
            tree = build_routing_tree(g, dest)
            cls, length, parent = tree.cls, tree.length, tree.parent
            out = {}
            if dest in origin_at or dest in att_at:
                out["pref"] = (cls[R], length[R])
            if dest in origin_at:
                out["fwd"] = _attackers_on_paths(parent, cls, R, att_pos, nA)
            if dest in req_at:
                out["rev"] = _attackers_on_paths(parent, cls, O, att_pos, nA)
            return dest, out

        def absorb(dest: int, out: dict) -> None:
            if "pref" in out:
                c, l = out["pref"]
                if dest in origin_at:
                    self.origin_cls[origin_at[dest]] = c
                    self.origin_len[origin_at[dest]] = l
                if dest in att_at:
                    self.att_cls[att_at[dest]] = c
                    self.att_len[att_at[dest]] = l
            if "fwd" in out:
                self.forward[:, origin_at[dest], :] = out["fwd"].T
            if "rev" in out:
                self.reverse[:, :, req_at[dest]] = out["rev"].T

        if self.threads > 1 and len(dests) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                for dest, out in pool.map(job, dests):
                    absorb(dest, out)
        else:
            for dest in dests:
                absorb(*job(dest))

        self.incidence = [self._incidence(v) for v in range(len(SURFACE_VECTORS))]

    def _incidence(self, v: int) -> sp.csr_matrix:
        rows, cols = [], []
        for c, per in enumerate(self.surface_keys):
            rows.extend([c] * len(per[v]))
            cols.extend(per[v])
        data = np.ones(len(rows), dtype=np.int32)
        return sp.csr_matrix((data, (rows, cols)), shape=(len(self.cids), len(self.keys)))

    # -- per-attacker matrices ------------------------------------------------

    def passive_matrix(self, k: int) -> np.ndarray:
        """``[key, requester AS]``: passive interception of the key's origin."""
        by_origin = self.forward[k] | self.reverse[k]
        return by_origin[self.key_origin]

    def hijack_matrix(self, k: int, tie_policy: TiePolicy | None = None) -> np.ndarray:
        """``[key, requester AS]``: hijack of an endpoint with that key succeeds."""
        ties = TiePolicy(tie_policy or self.tie_policy) == TiePolicy.ATTACKER_WINS
        a_cls = self.att_cls[k].astype(np.int32)
        a_len = self.att_len[k].astype(np.int64)
        reach = a_cls != int(UNREACH)
        o_cls = self.origin_cls[self.key_origin].astype(np.int32)
        o_len = self.origin_len[self.key_origin].astype(np.int64)
        extra = (self.key_category == RpkiCategory.ROA_MAXLEN).astype(np.int64)[:, None]
        a_len = a_len[None, :] + extra
        better_cls = a_cls[None, :] < o_cls
        same_cls = a_cls[None, :] == o_cls
        shorter = a_len <= o_len if ties else a_len < o_len
        # two unreachable routes share a class; reach masks that case out
        out = reach[None, :] & (better_cls | (same_cls & shorter))
        out[np.isin(self.key_category, (RpkiCategory.NO_ROA_SHORT, RpkiCategory.ROA_LOOSE))] = True
        out[self.key_origin_asn == self.attackers[k]] = True
        return out

    def key_matrix(self, k: int, mode: Mode, tie_policy: TiePolicy | None = None) -> np.ndarray:
        mode = Mode(mode)
        if mode == Mode.PASSIVE:
            return self.passive_matrix(k)
        if mode == Mode.HIJACK:
            return self.hijack_matrix(k, tie_policy)
        return self.hijack_matrix(k, tie_policy) | self.passive_matrix(k)

    def surface_blocked(self, k: int, mode: Mode, tie_policy: TiePolicy | None = None) -> np.ndarray:
        """``[vector, cid, requester AS]`` for the providers and resolvers surfaces.

        Infeasible CIDs are all False.
        """
        unblocked = (~self.key_matrix(k, mode, tie_policy)).astype(np.int32)
        out = np.empty((len(SURFACE_VECTORS), len(self.cids), len(self.req_asns)), dtype=bool)
        for v, inc in enumerate(self.incidence):
            out[v] = (inc @ unblocked) == 0
        out[:, ~self.feasible, :] = False
        return out

    def blocked_groups(self, k: int, mode: Mode, vector: Vector, tie_policy: TiePolicy | None = None) -> np.ndarray:
        """``[cid, requester AS]`` blocked flags for one attacker, mode and vector."""
        surf = self.surface_blocked(k, mode, tie_policy)
        return _combine(surf, Vector(vector))

    def blocked_requesters(self, cid_index: int, attacker: int, mode: Mode, vector: Vector) -> frozenset[Requester]:
        groups = self.blocked_groups(self.attacker_index(attacker), mode, vector)[cid_index]
        return frozenset(r for r, g in zip(self.requesters, self.req_group) if groups[g])


def _combine(surf: np.ndarray, vector: Vector) -> np.ndarray:
    if vector == Vector.PROVIDERS:
        return surf[0]
    if vector == Vector.RESOLVERS:
        return surf[1]
    return surf[0] | surf[1]
