import ipaddress
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import RouteOracle, hijack_rule, oracle_blocked, passive_rule, random_scenario, random_topology
from ipfscensor.attack import (
    ALL_MODES,
    ALL_VECTORS,
    AttackConfig,
    BlockageEngine,
    Mode,
    TiePolicy,
    Vector,
    attack_surface,
    endpoint_blocked,
    evaluate_dataset,
    evaluate_engine,
    hijack_diverts,
    passive_intercepts,
    requesters_blocked,
    surface_stats,
)
from ipfscensor.datasets.records import CidRecord, Requester
from ipfscensor.datasets.synth import generate_synthetic
from ipfscensor.errors import UnknownASError
from ipfscensor.prefixdb import Endpoint, RpkiCategory
from ipfscensor.routing import RoutingTreeCache

net = ipaddress.ip_network


def ep(origin, cat, host=10, ipni=False):
    p = net(f"10.{origin}.0.0/24")
    return Endpoint(p.network_address + host, p, origin, RpkiCategory(cat), ipni)


def req(asn, host=9):
    p = net(f"10.{asn}.0.0/24")
    return Requester(p.network_address + host, asn, p)


# -- predicates on T1 ----------------------------------------------------------------


def test_passive_examples(t1_trees):
    assert passive_intercepts(t1_trees, 3, 2, 4)
    assert not passive_intercepts(t1_trees, 1, 2, 4)
    assert passive_intercepts(t1_trees, 4, 2, 4)
    assert passive_intercepts(t1_trees, 2, 2, 4)


def test_passive_unreachable_is_not_interception(t1):
    trees = RoutingTreeCache(t1.with_ases([99]))
    assert not passive_intercepts(trees, 1, 99, 4)
    assert passive_intercepts(trees, 99, 99, 4) is False


def test_hijack_examples(t1_trees):
    for cat in (1, 3):
        for a in range(1, 6):
            for r in range(1, 6):
                assert hijack_diverts(t1_trees, a, r, ep(4, cat))
    assert not hijack_diverts(t1_trees, 1, 2, ep(4, 2))


def test_hijack_tie_policy(t1_trees):
    # requester 5: attacker 1 at (provider, 2); origin 3 at (provider, 2)
    assert not hijack_diverts(t1_trees, 1, 5, ep(3, 2))
    assert hijack_diverts(t1_trees, 1, 5, ep(3, 2), TiePolicy.ATTACKER_WINS)


def test_forged_origin_costs_a_hop(t1_trees):
    # requester 1: attacker 2 at (customer, 1); origin 4 at (customer, 2)
    assert hijack_diverts(t1_trees, 2, 1, ep(4, 2))
    assert not hijack_diverts(t1_trees, 2, 1, ep(4, 4))
    assert hijack_diverts(t1_trees, 2, 1, ep(4, 4), TiePolicy.ATTACKER_WINS)


def test_unreachable_attacker_never_wins(t1):
    trees = RoutingTreeCache(t1.with_ases([99]))
    assert not hijack_diverts(trees, 99, 2, ep(4, 2), TiePolicy.ATTACKER_WINS)
    assert hijack_diverts(trees, 99, 2, ep(4, 1))


def test_self_hosting_attacker(t1_trees):
    assert hijack_diverts(t1_trees, 4, 2, ep(4, 4))
    assert endpoint_blocked(AttackConfig(4, Mode.HIJACK), t1_trees, 2, ep(4, 4))


def test_unknown_as_errors(t1_trees):
    with pytest.raises(UnknownASError):
        passive_intercepts(t1_trees, 99, 2, 4)
    with pytest.raises(UnknownASError):
        hijack_diverts(t1_trees, 99, 2, ep(4, 1))


def test_endpoint_blocked_modes(t1_trees):
    assert endpoint_blocked(AttackConfig(1, Mode.COMBINED), t1_trees, 2, ep(4, 1))
    assert not endpoint_blocked(AttackConfig(1, Mode.PASSIVE), t1_trees, 2, ep(4, 2))
    assert endpoint_blocked(AttackConfig(3, Mode.PASSIVE), t1_trees, 2, ep(4, 2))
    assert AttackConfig(1).tie_policy == TiePolicy.LEGIT_WINS


def test_surfaces():
    c = CidRecord("c", (ep(1, 1),), (ep(2, 1), ep(3, 1, ipni=True)), (ep(5, 1),))
    assert [e.origin for e in attack_surface(c, Vector.PROVIDERS)] == [1, 5]
    assert [e.origin for e in attack_surface(c, Vector.RESOLVERS)] == [2, 3, 5]
    with pytest.raises(ValueError):
        attack_surface(c, Vector.FULL)


def test_requesters_blocked_examples(t1_trees):
    reqs = [req(a) for a in range(1, 6)]
    cache = ep(5, 1)
    bad = CidRecord("x", (ep(4, 1),), (), (cache,), ((cache, ep(2, 1, host=77)),))
    res = requesters_blocked(AttackConfig(1, Mode.HIJACK), t1_trees, bad, reqs)
    assert res.blocked == frozenset() and not res.feasible
    all_one = CidRecord("y", (ep(4, 1), ep(5, 3)), (ep(2, 1),))
    res = requesters_blocked(AttackConfig(1, Mode.HIJACK), t1_trees, all_one, reqs)
    assert res.blocked == frozenset(reqs) and res.feasible
    one = CidRecord("z", (ep(4, 2),))
    res = requesters_blocked(AttackConfig(1, Mode.HIJACK, Vector.PROVIDERS), t1_trees, one, [req(2)])
    assert res.blocked == frozenset()


def test_empty_surface_is_vacuously_blocked(t1_trees):
    # no providers and no caches: the providers surface has nothing left to disrupt
    c = CidRecord("e", (), (ep(4, 2),))
    res = requesters_blocked(AttackConfig(1, Mode.PASSIVE, Vector.PROVIDERS), t1_trees, c, [req(2)])
    assert res.blocked == frozenset([req(2)])


# -- independent rule evaluators ----------------------------------------------------------


def check_rules(graph, trees):
    oracle = RouteOracle(graph)
    nodes = [int(a) for a in graph.asns]
    for a in nodes:
        for r in nodes:
            for o in nodes:
                assert passive_intercepts(trees, a, r, o) == passive_rule(oracle, a, r, o)
                for cat in (1, 2, 3, 4):
                    e = Endpoint(ipaddress.ip_address("10.0.0.1"), net("10.0.0.0/24"), o, RpkiCategory(cat))
                    for wins in (False, True):
                        tie = TiePolicy.ATTACKER_WINS if wins else TiePolicy.LEGIT_WINS
                        assert hijack_diverts(trees, a, r, e, tie) == hijack_rule(oracle, a, r, o, cat, wins)


def test_rules_match_oracle_on_t1(t1, t1_trees):
    check_rules(t1, t1_trees)


def test_rules_match_oracle_on_random_graphs():
    rng = random.Random(21)
    for _ in range(15):
        g = random_topology(rng, max_ases=6)
        check_rules(g, RoutingTreeCache(g))


# -- engine and scalar agreement ----------------------------------------------------------


def check_engine(graph, cids, requesters, attackers, tie):
    trees = RoutingTreeCache(graph)
    oracle = RouteOracle(graph)
    engine = BlockageEngine(graph, cids, requesters, attackers, tie_policy=tie, threads=2)
    for a in attackers:
        for m in ALL_MODES:
            for v in ALL_VECTORS:
                cfg = AttackConfig(a, m, v, tie)
                for i, c in enumerate(cids):
                    scalar = requesters_blocked(cfg, trees, c, requesters).blocked
                    assert engine.blocked_requesters(i, a, m, v) == scalar
                    want = oracle_blocked(oracle, c, requesters, a, m, v, tie == TiePolicy.ATTACKER_WINS)
                    assert scalar == want


def test_engine_matches_scalar_on_demo(demo):
    for tie in TiePolicy:
        check_engine(demo.graph, demo.cids, list(demo.requesters), demo.attackers, tie)


def test_engine_matches_scalar_on_random_scenarios():
    rng = random.Random(2)
    for _ in range(25):
        g = random_topology(rng, max_ases=7)
        cids, reqs = random_scenario(rng, g)
        attackers = rng.sample([int(a) for a in g.asns], k=min(2, len(g)))
        check_engine(g, cids, reqs, attackers, rng.choice(list(TiePolicy)))


def test_engine_adds_missing_ases(t1):
    c = CidRecord("c", (ep(42, 2),))
    engine = BlockageEngine(t1, [c], [req(2)], [77])
    assert engine.blocked_requesters(0, 77, Mode.COMBINED, Vector.PROVIDERS) == frozenset()
    with pytest.raises(ValueError):
        BlockageEngine(t1, [c], [req(2)], [])


def test_engine_thread_count_irrelevant():
    d = generate_synthetic(dict(n_ases=150, hosting_ases=20, requester_ases=30, n_cids=20, n_requesters=80, n_attackers=6), seed=5)
    res = [
        evaluate_dataset(d.graph, d.cids, d.requesters, d.attackers, threads=t).results_csv()
        for t in (1, 8)
    ]
    assert res[0] == res[1]


# -- evaluation outputs ---------------------------------------------------------------------


def test_demo_fractions_hand_evaluated(demo):
    res = evaluate_dataset(demo.graph, demo.cids, demo.requesters, demo.attackers,
                           modes=[Mode.COMBINED], vectors=[Vector.FULL])
    counts = res.counts[Mode.COMBINED, Vector.FULL]
    # rows cidA, cidB; columns AS1, AS3
    assert counts.tolist() == [[1, 3], [3, 3]]
    assert res.per_cid_max(Mode.COMBINED, Vector.FULL).tolist() == [1.0, 1.0]
    assert res.per_attacker_mean(Mode.COMBINED, Vector.FULL).tolist() == pytest.approx([4 / 6, 1.0])
    assert res.fully_blockable_fraction(Mode.COMBINED, Vector.FULL) == 1.0
    assert res.violations == []


def test_all_infeasible_dataset_blocks_nothing():
    d = generate_synthetic(dict(n_ases=100, hosting_ases=15, requester_ases=20, n_cids=10, n_requesters=30,
                                n_attackers=4, bitswap_per_cid=2, infeasible_probability=1.0), seed=1)
    assert not any(c.feasible for c in d.cids)
    res = evaluate_dataset(d.graph, d.cids, d.requesters, d.attackers)
    for m in ALL_MODES:
        for v in ALL_VECTORS:
            assert res.fully_blockable_fraction(m, v) == 0.0
            assert not res.counts[m, v].any()


def test_all_category_one_fully_blockable():
    d = generate_synthetic(dict(n_ases=100, hosting_ases=15, requester_ases=20, n_cids=10, n_requesters=30,
                                n_attackers=4, category_fractions=(1, 0, 0, 0), v6_fraction=0,
                                infeasible_probability=0), seed=1)
    res = evaluate_dataset(d.graph, d.cids, d.requesters, d.attackers, modes=[Mode.HIJACK])
    for v in ALL_VECTORS:
        assert res.fully_blockable_fraction(Mode.HIJACK, v) == 1.0


def test_results_csv_shape(demo):
    res = evaluate_dataset(demo.graph, demo.cids, demo.requesters, demo.attackers, dataset="demo")
    lines = res.results_csv().splitlines()
    assert lines[0] == "dataset,cid,attacker_asn,mode,vector,blocked_count,requester_count,feasible"
    assert len(lines) == 1 + 2 * 2 * 3 * 3
    assert "demo,cidA,1,combined,full,1,3,1" in lines
    assert "demo,cidB,3,hijack,full,3,3,1" in lines


def test_surface_stats_counts():
    c = CidRecord("c", (ep(1, 1, host=1), Endpoint(ipaddress.ip_address("10.1.1.5"), net("10.1.1.0/24"), 1, RpkiCategory(2))),
                  (), (ep(7, 1),))
    stats = surface_stats([c])
    row = {r.vector: r for r in stats.rows}[Vector.PROVIDERS]
    assert (row.asns, row.prefixes) == (2, 3)
    assert surface_stats([]).rows == []
    assert "vector,category,prefixes" in surface_stats([]).category_csv()


# -- algebraic properties ------------------------------------------------------------------


def blocked_sets(engine, k, tie=None):
    out = {}
    for m in ALL_MODES:
        surf = engine.surface_blocked(k, m, tie)
        out[m] = {Vector.PROVIDERS: surf[0], Vector.RESOLVERS: surf[1], Vector.FULL: surf[0] | surf[1]}
        assert np.array_equal(engine.blocked_groups(k, m, Vector.FULL, tie), out[m][Vector.FULL])
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_mode_vector_and_tie_monotonicity(seed):
    rng = random.Random(seed)
    g = random_topology(rng, max_ases=7)
    cids, reqs = random_scenario(rng, g, n_cids=5)
    engine = BlockageEngine(g, cids, reqs, [int(a) for a in g.asns], threads=1)
    for k in range(len(engine.attackers)):
        legit = blocked_sets(engine, k, TiePolicy.LEGIT_WINS)
        wins = blocked_sets(engine, k, TiePolicy.ATTACKER_WINS)
        for v in ALL_VECTORS:
            assert not (legit[Mode.PASSIVE][v] & ~legit[Mode.COMBINED][v]).any()
            assert not (legit[Mode.HIJACK][v] & ~legit[Mode.COMBINED][v]).any()
            for m in ALL_MODES:
                assert not (legit[m][v] & ~wins[m][v]).any()
                assert not legit[m][v][~engine.feasible].any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_adding_an_endpoint_never_enlarges_blockage(seed):
    rng = random.Random(seed)
    g = random_topology(rng, max_ases=7)
    cids, reqs = random_scenario(rng, g, n_cids=3, infeasible=0)
    trees = RoutingTreeCache(g)
    extra_cids, _ = random_scenario(rng, g, n_cids=1, infeasible=0)
    extra = (extra_cids[0].providers + extra_cids[0].resolvers)[:1]
    for c in cids:
        bigger = c.with_providers(extra)
        for a in g.asns:
            for m in ALL_MODES:
                cfg = AttackConfig(int(a), m, Vector.PROVIDERS)
                assert requesters_blocked(cfg, trees, bigger, reqs).blocked <= requesters_blocked(cfg, trees, c, reqs).blocked


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_always_hijackable_endpoints_never_falsify(seed):
    rng = random.Random(seed)
    g = random_topology(rng, max_ases=7)
    cids, reqs = random_scenario(rng, g, n_cids=3, infeasible=0)
    trees = RoutingTreeCache(g)
    free = Endpoint(ipaddress.ip_address("10.250.0.1"), net("10.250.0.0/16"), int(g.asns[0]), RpkiCategory.ROA_LOOSE)
    for c in cids:
        bigger = c.with_providers([free])
        for a in g.asns:
            cfg = AttackConfig(int(a), Mode.HIJACK, Vector.PROVIDERS)
            assert requesters_blocked(cfg, trees, bigger, reqs).blocked == requesters_blocked(cfg, trees, c, reqs).blocked


def test_evaluate_records_no_violations_on_synthetic():
    d = generate_synthetic(dict(n_ases=200, hosting_ases=25, requester_ases=40, n_cids=30, n_requesters=120, n_attackers=8), seed=7)
    engine = BlockageEngine(d.graph, d.cids, d.requesters, d.attackers, threads=2)
    res = evaluate_engine(engine, ALL_MODES, ALL_VECTORS)
    assert res.violations == []
    for m in ALL_MODES:
        full = res.counts[m, Vector.FULL]
        assert (full >= np.maximum(res.counts[m, Vector.PROVIDERS], res.counts[m, Vector.RESOLVERS])).all()
        assert (full <= res.counts[m, Vector.PROVIDERS] + res.counts[m, Vector.RESOLVERS]).all()
