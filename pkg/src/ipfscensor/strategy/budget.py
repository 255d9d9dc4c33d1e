"""Greedy selection of prefixes to hijack under a prefix budget.

A ``(cid, requester)`` pair falls once, for some surface, every endpoint is
either already down without hijacking (passive interception when the context
is combined, or hosted by the attacker itself) or sits in a hijacked prefix
whose announcement wins for that requester. The greedy loop buys the prefix
that unlocks the most pairs. When no single prefix unlocks anything it buys a
prefix of the CID closest to falling.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ipfscensor.attack.engine import SURFACE_VECTORS, BlockageEngine
from ipfscensor.attack.predicates import Mode, Vector
from ipfscensor.prefixdb import IpPrefix

PLAN_COLUMNS = [
    "rank", "prefix", "marginal_pairs", "cumulative_pairs",
    "pooled_fraction", "feasible_cid_mean_fraction",
]


@dataclass
class BudgetPlan:
    attacker: int
    context: Mode
    vector: Vector
    prefixes: list[IpPrefix] = field(default_factory=list)
    marginal: list[int] = field(default_factory=list)
    cumulative: list[int] = field(default_factory=list)
    baseline: int = 0
    total_pairs: int = 0
    feasible_pairs: int = 0

    @property
    def final_pairs(self) -> int:
        return self.cumulative[-1] if self.cumulative else self.baseline

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PLAN_COLUMNS)
        for rank, (p, m, c) in enumerate(zip(self.prefixes, self.marginal, self.cumulative), start=1):
            pooled = c / self.total_pairs if self.total_pairs else 0.0
            feas = c / self.feasible_pairs if self.feasible_pairs else 0.0
            w.writerow([rank, str(p), m, c, f"{pooled:.6f}", f"{feas:.6f}"])
        return buf.getvalue()


class _Instance:
    """Dense per-attacker matrices over ``[prefix, requester AS]``."""

    def __init__(self, engine: BlockageEngine, attacker: int, context: Mode, vector: Vector):
        context, vector = Mode(context), Vector(vector)
        if context == Mode.PASSIVE:
            raise ValueError("budget context must be hijack or combined")
        self.engine = engine
        k = engine.attacker_index(attacker)
        pk = np.asarray(engine.prefix_key, dtype=np.int64)
        nP = len(pk)
        own = (engine.key_origin_asn == attacker)[pk]
        free = np.zeros((nP, len(engine.req_asns)), dtype=bool)
        free[own] = True
        if context == Mode.COMBINED:
            free |= engine.passive_matrix(k)[pk]
        self.free = free
        self.divert = engine.hijack_matrix(k)[pk] | free
        self.weights = engine.weights
        self.vectors = list(range(len(SURFACE_VECTORS))) if vector == Vector.FULL else [SURFACE_VECTORS.index(vector)]
        nC = len(engine.cids)
        self.inc = []
        for v in self.vectors:
            rows, cols = [], []
            for c, per in enumerate(engine.surface_prefixes):
                rows.extend([c] * len(per[v]))
                cols.extend(per[v])
            self.inc.append(sp.csr_matrix(
                (np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(nC, nP)
            ))
        cid_ok = engine.feasible[:, None]
        # a surface can fall only if every endpoint is free or divertable
        self.possible = [
            cid_ok & ((inc @ (~self.divert).astype(np.int32)) == 0) for inc in self.inc
        ]

    def remaining(self, hijacked: np.ndarray) -> list[np.ndarray]:
        todo = (~self.free & ~hijacked[:, None]).astype(np.int32)
        return [inc @ todo for inc in self.inc]

    def covered(self, rem: list[np.ndarray]) -> np.ndarray:
        out = np.zeros_like(self.possible[0])
        for ok, r in zip(self.possible, rem):
            out |= ok & (r == 0)
        return out

    def pairs(self, hijacked: np.ndarray) -> int:
        return int((self.covered(self.remaining(hijacked)) @ self.weights).sum())


def hijack_pairs(
    engine: BlockageEngine,
    attacker: int,
    hijacked: Iterable[IpPrefix],
    context: Mode = Mode.HIJACK,
    vector: Vector = Vector.FULL,
) -> int:
    """Blocked ``(cid, requester)`` pairs for a given set of hijacked prefixes."""
    inst = _Instance(engine, attacker, context, vector)
    index = {p: i for i, p in enumerate(engine.prefixes)}
    mask = np.zeros(len(engine.prefixes), dtype=bool)
    for p in hijacked:
        if p in index:
            mask[index[p]] = True
    return inst.pairs(mask)


def _gains(inst: _Instance, rem: list[np.ndarray], covered: np.ndarray, hijacked: np.ndarray) -> np.ndarray:
    """Pairs each unhijacked prefix would unlock on its own."""
    todo = ~inst.free & ~hijacked[:, None]
    ready = [(ok & (r == 1) & ~covered).astype(np.int32) for ok, r in zip(inst.possible, rem)]
    hits = inst.inc[0].T @ ready[0]
    if len(ready) == 2:
        both = inst.inc[0].multiply(inst.inc[1]).tocsr()
        hits = hits + inst.inc[1].T @ ready[1] - both.T @ (ready[0] & ready[1])
    gain = (np.asarray(hits) * todo) @ inst.weights
    gain[hijacked] = 0
    return gain


def _fallback(inst: _Instance, rem: list[np.ndarray], covered: np.ndarray, hijacked: np.ndarray) -> int | None:
    """First needed prefix of the CID with the smallest deficit (dataset order)."""
    best = None  # (deficit, cid, group, vector slot)
    for s, (ok, r) in enumerate(zip(inst.possible, rem)):
        cand = ok & ~covered & (r > 0)
        if not cand.any():
            continue
        deficit = np.where(cand, r.astype(np.int64), np.iinfo(np.int64).max)
        per_cid = deficit.min(axis=1)
        c = int(np.argmin(per_cid))
        d = int(per_cid[c])
        g = int(np.argmin(deficit[c]))
        if best is None or (d, c) < best[:2]:
            best = (d, c, g, s)
    if best is None:
        return None
    _, c, g, s = best
    surface = inst.engine.surface_prefixes[c][inst.vectors[s]]
    for p in surface:
        if not inst.free[p, g] and not hijacked[p]:
            return p
    return None


def greedy_prefix_budget(
    engine: BlockageEngine,
    attacker: int,
    budget: int,
    context: Mode = Mode.HIJACK,
    vector: Vector = Vector.FULL,
) -> BudgetPlan:
    if budget < 0:
        raise ValueError("budget must be non-negative")
    inst = _Instance(engine, attacker, context, vector)
    nP = len(engine.prefixes)
    in_surface = np.zeros(nP, dtype=bool)
    for per in engine.surface_prefixes:
        for v in inst.vectors:
            in_surface[per[v]] = True
    hijacked = ~in_surface  # never buy prefixes outside every surface
    rem = inst.remaining(hijacked)
    covered = inst.covered(rem)
    cum = int((covered @ inst.weights).sum())
    n_feasible = int(engine.feasible.sum())
    plan = BudgetPlan(
        attacker, Mode(context), Vector(vector), baseline=cum,
        total_pairs=len(engine.cids) * engine.n_requesters,
        feasible_pairs=n_feasible * engine.n_requesters,
    )
    for _ in range(budget):
        gain = _gains(inst, rem, covered, hijacked)
        p = int(np.argmax(gain)) if gain.size else 0
        if not gain.size or gain[p] <= 0:
            p = _fallback(inst, rem, covered, hijacked)
            if p is None:
                break
        hijacked[p] = True
        rem = inst.remaining(hijacked)
        covered = inst.covered(rem)
        new = int((covered @ inst.weights).sum())
        plan.prefixes.append(engine.prefixes[p])
        plan.marginal.append(new - cum)
        plan.cumulative.append(new)
        cum = new
    return plan
