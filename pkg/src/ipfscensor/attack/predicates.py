"""Per-requester blocking decisions, evaluated one endpoint at a time.

These are the reference semantics. :mod:`ipfscensor.attack.engine` computes
the same answers in bulk and is tested against this module.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable
from dataclasses import dataclass
from typing import NamedTuple

from ipfscensor.datasets.records import CidRecord, Requester
from ipfscensor.prefixdb import Endpoint, RpkiCategory
from ipfscensor.routing import RouteClass, RoutingTreeCache, pref_beats


class Mode(str, enum.Enum):
    PASSIVE = "passive"
    HIJACK = "hijack"
    COMBINED = "combined"


class Vector(str, enum.Enum):
    PROVIDERS = "providers"
    RESOLVERS = "resolvers"
    FULL = "full"


class TiePolicy(str, enum.Enum):
    LEGIT_WINS = "legit-wins"
    ATTACKER_WINS = "attacker-wins"


@dataclass(frozen=True)
class AttackConfig:
    attacker: int
    mode: Mode = Mode.COMBINED
    vector: Vector = Vector.FULL
    tie_policy: TiePolicy = TiePolicy.LEGIT_WINS

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "vector", Vector(self.vector))
        object.__setattr__(self, "tie_policy", TiePolicy(self.tie_policy))


class Blockage(NamedTuple):
    blocked: frozenset[Requester]
    feasible: bool


def passive_intercepts(trees: RoutingTreeCache, attacker: int, requester_as: int, target_as: int) -> bool:
    """Attacker sits on the requester->target route or on the target->requester route."""
    trees.graph.index_of(attacker)
    forward = trees.get(target_as).path(requester_as)
    if forward is not None and attacker in forward:
        return True
    reverse = trees.get(requester_as).path(target_as)
    return reverse is not None and attacker in reverse


def hijack_diverts(
    trees: RoutingTreeCache,
    attacker: int,
    requester_as: int,
    endpoint: Endpoint,
    tie_policy: TiePolicy = TiePolicy.LEGIT_WINS,
) -> bool:
    """Whether a bogus announcement for the endpoint's prefix captures the requester.

    Categories 1 and 3 always fall (a more specific announcement is possible).
    Categories 2 and 4 compete on route preference: the requester must prefer
    its route to the attacker over its route to the origin, and in category 4
    the forged origin costs the attacker one extra hop.
    """
    graph = trees.graph
    graph.index_of(attacker)
    graph.index_of(requester_as)
    if endpoint.origin == attacker:
        return True
    if endpoint.category.always_hijackable:
        return True
    to_attacker = trees.get(attacker).pref(requester_as)
    if to_attacker[0] == RouteClass.UNREACHABLE:
        return False
    to_origin = trees.get(endpoint.origin).pref(requester_as)
    extra = 1 if endpoint.category == RpkiCategory.ROA_MAXLEN else 0
    return pref_beats(
        (to_attacker[0], to_attacker[1] + extra),
        to_origin,
        ties=TiePolicy(tie_policy) == TiePolicy.ATTACKER_WINS,
    )


def endpoint_blocked(config: AttackConfig, trees: RoutingTreeCache, requester_as: int, endpoint: Endpoint) -> bool:
    if config.mode == Mode.PASSIVE:
        return passive_intercepts(trees, config.attacker, requester_as, endpoint.origin)
    if config.mode == Mode.HIJACK:
        return hijack_diverts(trees, config.attacker, requester_as, endpoint, config.tie_policy)
    return hijack_diverts(
        trees, config.attacker, requester_as, endpoint, config.tie_policy
    ) or passive_intercepts(trees, config.attacker, requester_as, endpoint.origin)


def attack_surface(cid: CidRecord, vector: Vector) -> tuple[Endpoint, ...]:
    """Endpoints to disrupt for one vector; resolvers include the indexer endpoints."""
    vector = Vector(vector)
    if vector == Vector.PROVIDERS:
        return cid.providers + cid.bitswap_attacker
    if vector == Vector.RESOLVERS:
        return cid.resolvers + cid.bitswap_attacker
    raise ValueError("the full vector is the union of two surfaces, not one surface")


def requesters_blocked(
    config: AttackConfig,
    trees: RoutingTreeCache,
    cid: CidRecord,
    requesters: Iterable[Requester],
) -> Blockage:
    """Requesters cut off from ``cid``: every endpoint of a surface must be blocked.

    An empty surface blocks vacuously. When a victim monitor saw a caching
    peer the attacker's node missed, nothing is blocked.
    """
    requesters = list(requesters)
    if not cid.feasible:
        return Blockage(frozenset(), False)
    vectors = (
        [Vector.PROVIDERS, Vector.RESOLVERS] if config.vector == Vector.FULL else [config.vector]
    )
    surfaces = [attack_surface(cid, v) for v in vectors]
    verdict: dict[int, bool] = {}
    blocked = []
    for r in requesters:
        hit = verdict.get(r.asn)
        if hit is None:
            hit = verdict[r.asn] = any(
                all(endpoint_blocked(config, trees, r.asn, e) for e in surface)
                for surface in surfaces
            )
        if hit:
            blocked.append(r)
    return Blockage(frozenset(blocked), True)
