import numpy as np
import pytest

from conftest import T1_TEXT
from oracles import exhaustive_best, pair_requirements, small_budget_instances, subset_pairs
from ipfscensor.attack import BlockageEngine, Mode, Vector, evaluate_engine
from ipfscensor.datasets import CidRecord, ingest_requesters
from ipfscensor.datasets.synth import generate_synthetic
from ipfscensor.errors import ConfigError
from ipfscensor.prefixdb import PrefixDB, RpkiCategory, load_rib, load_roas
from ipfscensor.routing import RoutingTreeCache
from ipfscensor.strategy import (
    Verdict,
    greedy_prefix_budget,
    hijack_pairs,
    protection_report,
    report_csv,
    sample_sizes,
    simulate_random_pinning,
)
from ipfscensor.topology import parse_as_rel

RIB = (
    "10.1.0.0/16\t1\n10.2.0.0/16\t2\n10.2.4.0/22\t2\n10.3.0.0/24\t3\n"
    "10.4.0.0/24\t4\n10.5.0.0/24\t5\n10.5.1.0/24\t5\n10.6.0.0/16\t5\n"
)
ROAS = "prefix,maxLength,originAsn\n10.2.4.0/22,24,2\n10.3.0.0/24,24,3\n"
GRAPH = parse_as_rel(T1_TEXT)
DB = PrefixDB(load_rib(RIB), load_roas(ROAS))


def cid(name, providers=(), resolvers=()):
    return CidRecord(name, tuple(DB.resolve(i) for i in providers), tuple(DB.resolve(i) for i in resolvers))


def requesters(*ips):
    return ingest_requesters("\n".join(ips), DB)


def test_fixture_categories():
    assert DB.resolve("10.2.4.1").category == RpkiCategory.ROA_LOOSE
    assert DB.resolve("10.3.0.1").category == RpkiCategory.ROA_MAXLEN
    assert DB.resolve("10.4.0.1").category == RpkiCategory.NO_ROA_LIMIT
    assert DB.resolve("10.2.0.1").category == RpkiCategory.NO_ROA_SHORT


# -- greedy budget ----------------------------------------------------------------------


def three_cid_engine():
    # a = 10.2.0.0/16 (always hijackable), b = 10.4.0.0/24 and c = 10.5.0.0/24 compete on routes
    cids = [
        cid("c1", ["10.2.0.1"]),
        cid("c2", ["10.2.0.2", "10.4.0.1"]),
        cid("c3", ["10.5.0.1"]),
    ]
    reqs = requesters("10.1.0.9", "10.5.1.9")
    return BlockageEngine(GRAPH, cids, reqs, [3], threads=1), cids, reqs


def test_three_cid_plan_order():
    engine, cids, reqs = three_cid_engine()
    plan = greedy_prefix_budget(engine, 3, 3, Mode.HIJACK, Vector.PROVIDERS)
    assert [str(p) for p in plan.prefixes] == ["10.2.0.0/16", "10.4.0.0/24", "10.5.0.0/24"]
    assert plan.marginal == [2, 1, 1]
    assert plan.cumulative == [2, 3, 4]
    reqs_of = pair_requirements(RoutingTreeCache(GRAPH), cids, reqs, 3, Mode.HIJACK, Vector.PROVIDERS)
    prefixes = list(engine.prefixes)
    for k in range(1, 4):
        opt = exhaustive_best(prefixes, k, lambda h: subset_pairs(reqs_of, h))
        assert plan.cumulative[k - 1] == opt


def test_budget_zero():
    engine, _, _ = three_cid_engine()
    plan = greedy_prefix_budget(engine, 3, 0)
    assert plan.prefixes == [] and plan.cumulative == [] and plan.marginal == []
    assert plan.to_csv().splitlines() == [
        "rank,prefix,marginal_pairs,cumulative_pairs,pooled_fraction,feasible_cid_mean_fraction"
    ]


def test_budget_rejects_passive_and_negative():
    engine, _, _ = three_cid_engine()
    with pytest.raises(ValueError):
        greedy_prefix_budget(engine, 3, 2, Mode.PASSIVE)
    with pytest.raises(ValueError):
        greedy_prefix_budget(engine, 3, -1)


def test_fallback_buys_toward_nearest_cid():
    # one CID needing two competing prefixes: no single prefix gains, so the first one is bought anyway
    cids = [cid("c", ["10.4.0.1", "10.2.0.1"])]
    engine = BlockageEngine(GRAPH, cids, requesters("10.1.0.9"), [3], threads=1)
    plan = greedy_prefix_budget(engine, 3, 2, Mode.HIJACK, Vector.PROVIDERS)
    assert plan.marginal == [0, 1]
    assert [str(p) for p in plan.prefixes] == ["10.4.0.0/24", "10.2.0.0/16"]


def test_plan_csv_columns():
    engine, _, _ = three_cid_engine()
    plan = greedy_prefix_budget(engine, 3, 3, Mode.HIJACK, Vector.PROVIDERS)
    rows = plan.to_csv().splitlines()
    assert rows[1] == "1,10.2.0.0/16,2,2,0.333333,0.333333"
    assert rows[3] == "3,10.5.0.0/24,1,4,0.666667,0.666667"


def test_single_prefix_surfaces_greedy_is_optimal():
    # every CID's surface is one prefix, so coverage is additive and greedy sorts by value
    hosts = ["10.2.0.1", "10.4.0.1", "10.5.0.1", "10.3.0.1", "10.2.4.1", "10.6.0.1"]
    cids = [cid(f"c{i}", [h], [h]) for i, h in enumerate(hosts + hosts[:3])]
    reqs = requesters("10.1.0.9", "10.5.1.9", "10.3.0.9", "10.4.0.9")
    trees = RoutingTreeCache(GRAPH)
    for attacker in (1, 2, 3, 4, 5):
        engine = BlockageEngine(GRAPH, cids, reqs, [attacker], threads=1)
        for ctx in (Mode.HIJACK, Mode.COMBINED):
            plan = greedy_prefix_budget(engine, attacker, len(engine.prefixes), ctx, Vector.FULL)
            need = pair_requirements(trees, cids, reqs, attacker, ctx, Vector.FULL)
            for k, got in enumerate(plan.cumulative, start=1):
                assert got == exhaustive_best(engine.prefixes, k, lambda h: subset_pairs(need, h))


@pytest.mark.parametrize("index", range(6))
def test_greedy_against_exhaustive(index):
    d, engine = small_budget_instances(6)[index]
    trees = RoutingTreeCache(engine.graph)
    for attacker in d.attackers:
        for ctx in (Mode.HIJACK, Mode.COMBINED):
            for vec in (Vector.PROVIDERS, Vector.FULL):
                need = pair_requirements(trees, d.cids, d.requesters, attacker, ctx, vec)
                plan = greedy_prefix_budget(engine, attacker, len(engine.prefixes), ctx, vec)
                held = set()
                prev = plan.baseline
                assert prev == subset_pairs(need, held)
                for p, m, c in zip(plan.prefixes, plan.marginal, plan.cumulative):
                    alternatives = [subset_pairs(need, held | {q}) - prev for q in engine.prefixes if q not in held]
                    assert m == max(alternatives + [0])
                    held.add(p)
                    assert c == subset_pairs(need, held) == hijack_pairs(engine, attacker, held, ctx, vec)
                    assert c == prev + m
                    prev = c
                for k, got in enumerate(plan.cumulative, start=1):
                    assert got <= exhaustive_best(engine.prefixes, k, lambda h: subset_pairs(need, h))


def test_exhaustion_matches_evaluation():
    d = generate_synthetic(dict(n_ases=200, hosting_ases=25, requester_ases=40, n_cids=30,
                                n_requesters=150, n_attackers=5, bitswap_events=0), seed=3)
    engine = BlockageEngine(d.graph, d.cids, d.requesters, d.attackers, threads=2)
    res = evaluate_engine(engine, [Mode.HIJACK, Mode.COMBINED], list(Vector))
    for k, a in enumerate(engine.attackers):
        for ctx in (Mode.HIJACK, Mode.COMBINED):
            for vec in Vector:
                plan = greedy_prefix_budget(engine, a, len(engine.prefixes), ctx, vec)
                assert plan.final_pairs == int(res.counts[ctx, vec][:, k].sum())
                assert all(m >= 0 for m in plan.marginal)
                assert len(set(plan.prefixes)) == len(plan.prefixes)


# -- pinning ------------------------------------------------------------------------------


def test_sample_sizes():
    assert sample_sizes([0, 0.07, 0.5, 1], 100) == [0, 7, 50, 100]
    assert sample_sizes([0.001], 3) == [1]
    for bad in ([], [0.5, 0.2], [-0.1], [1.5], [float("nan")]):
        with pytest.raises(ConfigError):
            sample_sizes(bad, 10)


def pinning_scenario():
    cids = [cid("a", ["10.6.0.10"]), cid("b", ["10.1.0.10", "10.2.4.10"])]
    pool = [DB.resolve(i) for i in ("10.6.0.50", "10.1.0.50", "10.3.0.50", "10.2.4.50")]
    reqs = requesters("10.3.0.9", "10.4.0.9")
    engine = BlockageEngine(GRAPH, cids, reqs, [1, 2], extra_endpoints=pool, threads=1)
    return engine, pool


def test_protected_pool_node_stops_hijack():
    engine, pool = pinning_scenario()
    fractions = [0, 0.25, 0.5, 0.75, 1]
    curve = simulate_random_pinning(engine, pool, fractions, 20, seed=11, mode=Mode.HIJACK, vector=Vector.PROVIDERS)
    assert curve.points[0].mean_blockage == 1.0
    protected = 2  # 10.3.0.50
    for t in range(20):
        order = np.random.default_rng([11, t]).permutation(len(pool))
        first = int(np.where(order == protected)[0][0])
        for i, p in enumerate(curve.points):
            if p.nodes > first:
                assert not curve.counts[t, i].any()
    assert curve.points[-1].mean_blockage == 0.0


def test_pinning_f0_equals_baseline_and_is_reproducible(demo):
    engine = BlockageEngine(demo.graph, demo.cids, demo.requesters, demo.attackers, extra_endpoints=demo.pool, threads=1)
    base = evaluate_engine(engine, [Mode.COMBINED], [Vector.PROVIDERS]).mean_max_blocked(Mode.COMBINED, Vector.PROVIDERS)
    a = simulate_random_pinning(engine, demo.pool, [0, 0.5, 1], 5, seed=3)
    b = simulate_random_pinning(engine, demo.pool, [0, 0.5, 1], 5, seed=3)
    assert a.points[0].mean_blockage == base
    assert (a.per_trial[:, 0] == base).all()
    assert a.to_csv() == b.to_csv() and np.array_equal(a.counts, b.counts)
    assert [round(p.mean_blockage, 6) for p in a.points][0] == 0.833333


def test_pinning_requires_pool_in_engine(demo):
    engine = BlockageEngine(demo.graph, demo.cids, demo.requesters, demo.attackers, threads=1)
    stranger = [demo.db.resolve("10.1.0.77")]  # AS1 hosts no CID endpoint
    with pytest.raises(ValueError):
        simulate_random_pinning(engine, stranger, [0, 1], 2, seed=1)
    with pytest.raises(ConfigError):
        simulate_random_pinning(engine, [], [0, 1], 2, seed=1)


def test_pinning_monotone_on_synthetic():
    d = generate_synthetic(dict(n_ases=200, hosting_ases=25, requester_ases=40, n_cids=25,
                                n_requesters=120, n_attackers=5, pool_size=40, bitswap_events=0), seed=8)
    engine = BlockageEngine(d.graph, d.cids, d.requesters, d.attackers, extra_endpoints=d.pool, threads=1)
    for mode in Mode:
        curve = simulate_random_pinning(engine, d.pool, np.linspace(0, 1, 11), 4, seed=2, mode=mode)
        assert (np.diff(curve.counts, axis=1) <= 0).all()
        assert (np.diff(curve.per_trial, axis=1) <= 1e-15).all()


# -- protection ----------------------------------------------------------------------------


def test_protection_verdicts():
    cids = [cid("hard", ["10.3.0.10"]), cid("plain", ["10.6.0.10"]), cid("none", [], ["10.6.0.11"])]
    engine = BlockageEngine(GRAPH, cids, requesters("10.3.0.9", "10.4.0.9"), [1, 2], threads=1)
    rows = {r.cid: r for r in protection_report(engine)}
    assert rows["hard"].verdict == Verdict.HARDENED and rows["hard"].hardening_endpoints == 1
    assert rows["hard"].worst_hijack_fraction == 0.0
    assert rows["plain"].verdict == Verdict.NOT_HARDENED and rows["plain"].worst_hijack_fraction == 1.0
    assert rows["none"].verdict == Verdict.NO_PROVIDERS
    text = report_csv(list(rows.values()))
    assert text.splitlines()[0].startswith("cid,verdict,providers")


def test_protection_exposed_when_attackers_win_every_requester():
    cids = [cid("x", ["10.4.0.10"])]
    engine = BlockageEngine(GRAPH, cids, requesters("10.1.0.9"), [1], threads=1)
    (row,) = protection_report(engine)
    assert row.verdict == Verdict.EXPOSED and row.cat2_endpoints == 1


def test_protection_on_demo(demo):
    engine = BlockageEngine(demo.graph, demo.cids, demo.requesters, demo.attackers, threads=1)
    verdicts = {r.cid: r.verdict for r in protection_report(engine)}
    assert verdicts == {"cidA": Verdict.HARDENED, "cidB": Verdict.NOT_HARDENED}
