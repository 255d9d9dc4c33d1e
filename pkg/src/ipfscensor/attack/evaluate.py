"""Dataset-level blockage metrics: feasibility, per-CID and per-attacker rates."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ipfscensor.attack.engine import BlockageEngine, _combine
from ipfscensor.attack.predicates import Mode, TiePolicy, Vector
from ipfscensor.datasets.records import CidRecord, Requester
from ipfscensor.topology import TopologyGraph

ALL_MODES = (Mode.PASSIVE, Mode.HIJACK, Mode.COMBINED)
ALL_VECTORS = (Vector.PROVIDERS, Vector.RESOLVERS, Vector.FULL)

RESULT_COLUMNS = [
    "dataset", "cid", "attacker_asn", "mode", "vector",
    "blocked_count", "requester_count", "feasible",
]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


@dataclass
class BlockageResult:
    """Blocked requester counts per ``(mode, vector)`` as ``[cid, attacker]`` arrays."""

    dataset: str
    cids: list[str]
    attackers: list[int]
    n_requesters: int
    feasible: np.ndarray
    unattackable: np.ndarray
    counts: dict[tuple[Mode, Vector], np.ndarray] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def configs(self) -> list[tuple[Mode, Vector]]:
        return list(self.counts)

    def fraction(self, mode: Mode, vector: Vector) -> np.ndarray:
        c = self.counts[Mode(mode), Vector(vector)]
        if self.n_requesters == 0:
            return np.zeros(c.shape)
        return c / self.n_requesters

    def per_cid_max(self, mode: Mode, vector: Vector) -> np.ndarray:
        f = self.fraction(mode, vector)
        return f.max(axis=1) if f.size else np.zeros(len(self.cids))

    def mean_max_blocked(self, mode: Mode, vector: Vector) -> float:
        """Mean over CIDs of the best attacker's blocked fraction."""
        c = self.counts[Mode(mode), Vector(vector)]
        pairs = len(self.cids) * self.n_requesters
        if not pairs or not c.size:
            return 0.0
        return float(c.max(axis=1).sum() / pairs)

    def per_attacker_mean(self, mode: Mode, vector: Vector) -> np.ndarray:
        """Mean blocked fraction over all CID x requester pairs, per attacker."""
        f = self.fraction(mode, vector)
        return f.mean(axis=0) if f.size else np.zeros(len(self.attackers))

    def fully_blockable(self, mode: Mode, vector: Vector) -> np.ndarray:
        c = self.counts[Mode(mode), Vector(vector)]
        if self.n_requesters == 0 or not c.size:
            return np.zeros(len(self.cids), dtype=bool)
        return (c == self.n_requesters).any(axis=1)

    def fully_blockable_fraction(self, mode: Mode, vector: Vector) -> float:
        fb = self.fully_blockable(mode, vector)
        return float(fb.mean()) if fb.size else 0.0

    # -- CSV ------------------------------------------------------------------

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for (mode, vector), c in self.counts.items():
            for i, cid in enumerate(self.cids):
                for j, a in enumerate(self.attackers):
                    w.writerow([
                        self.dataset, cid, a, mode.value, vector.value,
                        int(c[i, j]), self.n_requesters, int(bool(self.feasible[i])),
                    ])
        return buf.getvalue()

    def per_cid_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "dataset", "cid", "mode", "vector", "max_blocked_fraction",
            "best_attacker_asn", "fully_blockable", "feasible", "unattackable_surface",
        ])
        for (mode, vector), c in self.counts.items():
            best = c.argmax(axis=1) if c.size else np.zeros(len(self.cids), dtype=int)
            mx = self.per_cid_max(mode, vector)
            full = self.fully_blockable(mode, vector)
            for i, cid in enumerate(self.cids):
                w.writerow([
                    self.dataset, cid, mode.value, vector.value, _fmt(mx[i]),
                    self.attackers[best[i]] if c[i].any() else "",
                    int(full[i]), int(bool(self.feasible[i])), int(bool(self.unattackable[i])),
                ])
        return buf.getvalue()

    def per_attacker_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "dataset", "attacker_asn", "mode", "vector",
            "mean_blocked_fraction", "blocked_pairs", "total_pairs",
        ])
        total = len(self.cids) * self.n_requesters
        for (mode, vector), c in self.counts.items():
            mean = self.per_attacker_mean(mode, vector)
            for j, a in enumerate(self.attackers):
                w.writerow([
                    self.dataset, a, mode.value, vector.value,
                    _fmt(mean[j]), int(c[:, j].sum()), total,
                ])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "dataset", "mode", "vector", "cids", "infeasible_cids", "unattackable_cids",
            "fully_blockable_fraction", "mean_max_blocked_fraction", "median_max_blocked_fraction",
        ])
        for mode, vector in self.counts:
            mx = self.per_cid_max(mode, vector)
            w.writerow([
                self.dataset, mode.value, vector.value, len(self.cids),
                int((~self.feasible).sum()), int(self.unattackable.sum()),
                _fmt(self.fully_blockable_fraction(mode, vector)),
                _fmt(self.mean_max_blocked(mode, vector)),
                _fmt(float(np.median(mx)) if mx.size else 0.0),
            ])
        return buf.getvalue()


def evaluate_engine(
    engine: BlockageEngine,
    modes: Iterable[Mode] = ALL_MODES,
    vectors: Iterable[Vector] = ALL_VECTORS,
    dataset: str = "dataset",
) -> BlockageResult:
    modes = [Mode(m) for m in modes]
    vectors = [Vector(v) for v in vectors]
    nC, nA = len(engine.cids), len(engine.attackers)
    result = BlockageResult(
        dataset=dataset,
        cids=[c.cid for c in engine.cids],
        attackers=list(engine.attackers),
        n_requesters=engine.n_requesters,
        feasible=engine.feasible.copy(),
        unattackable=np.array([c.unattackable_surface for c in engine.cids], dtype=bool),
    )
    for m in modes:
        for v in vectors:
            result.counts[m, v] = np.zeros((nC, nA), dtype=np.int64)
    check_modes = set(ALL_MODES) <= set(modes)
    for k, asn in enumerate(engine.attackers):
        by_mode = {}
        for m in modes:
            surf = engine.surface_blocked(k, m)
            by_mode[m] = surf
            for v in vectors:
                result.counts[m, v][:, k] = _combine(surf, v) @ engine.weights
        if check_modes:
            comb = by_mode[Mode.COMBINED]
            for m in (Mode.PASSIVE, Mode.HIJACK):
                if (by_mode[m] & ~comb).any():
                    result.violations.append(f"AS{asn}: {m.value} blocks a requester combined does not")
    for (m, v), c in result.counts.items():
        if c[~result.feasible].any():
            result.violations.append(f"{m.value}/{v.value}: infeasible CID with blocked requesters")
    return result


def evaluate_dataset(
    graph: TopologyGraph,
    cids: Sequence[CidRecord],
    requesters: Sequence[Requester],
    attackers: Sequence[int],
    modes: Iterable[Mode] = ALL_MODES,
    vectors: Iterable[Vector] = ALL_VECTORS,
    tie_policy: TiePolicy = TiePolicy.LEGIT_WINS,
    dataset: str = "dataset",
    threads: int | None = None,
) -> BlockageResult:
    engine = BlockageEngine(graph, cids, requesters, attackers, tie_policy=tie_policy, threads=threads)
    return evaluate_engine(engine, modes, vectors, dataset)
