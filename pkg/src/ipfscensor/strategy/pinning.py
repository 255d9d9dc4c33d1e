"""Random collaborative pinning: every pool node pins each CID with equal probability.

Each trial draws one random order of the pool. The sample for fraction ``f``
is the first ``ceil(f * |pool|)`` nodes of that order, so a trial's samples
are nested as ``f`` grows and its blockage curve can only fall.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ipfscensor.attack.engine import BlockageEngine, _combine
from ipfscensor.attack.predicates import Mode, Vector
from ipfscensor.errors import ConfigError
from ipfscensor.prefixdb import Endpoint

CURVE_COLUMNS = ["fraction", "nodes", "mean_blockage", "stddev", "trials", "seed"]


@dataclass(frozen=True)
class PinningPoint:
    fraction: float
    nodes: int
    mean_blockage: float
    stddev: float
    trials: int
    seed: int


@dataclass
class PinningCurve:
    points: list[PinningPoint]
    mode: Mode
    vector: Vector
    per_trial: np.ndarray  # [trial, fraction]: mean over CIDs of the max over attackers
    by_attacker: np.ndarray  # [trial, fraction, attacker]: mean over CIDs
    counts: np.ndarray  # [trial, fraction, attacker, cid]: blocked requesters

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in self.points:
            w.writerow([
                repr(p.fraction), p.nodes, f"{p.mean_blockage:.6f}", f"{p.stddev:.6f}",
                p.trials, p.seed,
            ])
        return buf.getvalue()


def sample_sizes(fractions: Sequence[float], pool_size: int) -> list[int]:
    fractions = [float(f) for f in fractions]
    if not fractions:
        raise ConfigError("at least one fraction is required")
    for f in fractions:
        if not 0.0 <= f <= 1.0 or math.isnan(f):
            raise ConfigError(f"fraction {f} outside [0, 1]")
    if any(b < a for a, b in zip(fractions, fractions[1:])):
        raise ConfigError("fractions must be sorted ascending")
    # round first so 0.07 * 100 does not become 8 nodes
    return [min(pool_size, math.ceil(round(f * pool_size, 9))) for f in fractions]


def simulate_random_pinning(
    engine: BlockageEngine,
    pool: Sequence[Endpoint],
    fractions: Sequence[float],
    trials: int,
    seed: int,
    mode: Mode = Mode.COMBINED,
    vector: Vector = Vector.PROVIDERS,
) -> PinningCurve:
    """Blockage after pinning every CID on random pool samples.

    ``engine`` must have been built with the pool as ``extra_endpoints``.
    """
    pool = [e for e in pool if e.mapped]
    if not pool:
        raise ConfigError("server-node pool is empty")
    if trials < 1:
        raise ConfigError("trials must be positive")
    mode, vector = Mode(mode), Vector(vector)
    sizes = sample_sizes(fractions, len(pool))
    try:
        pool_keys = np.array([engine.key_of(e) for e in pool], dtype=np.int64)
    except KeyError:
        raise ValueError("the engine was built without the pinning pool") from None

    nT, nF, nA, nC = trials, len(sizes), len(engine.attackers), len(engine.cids)
    orders = [np.random.default_rng([seed, t]).permutation(len(pool)) for t in range(nT)]
    # [trial, fraction, attacker, cid] blocked requester counts
    counts = np.zeros((nT, nF, nA, nC), dtype=np.int64)
    for k in range(nA):
        keys = engine.key_matrix(k, mode)
        base = engine.surface_blocked(k, mode)
        for t, order in enumerate(orders):
            ok = np.ones(len(engine.req_asns), dtype=bool)
            taken = 0
            for i, n in enumerate(sizes):
                for j in order[taken:n]:
                    ok &= keys[pool_keys[j]]
                taken = n
                surf = base.copy()
                surf[0] &= ok[None, :]
                counts[t, i, k] = _combine(surf, vector) @ engine.weights

    # integer sums with one division, so equal inputs give identical floats
    pairs = nC * engine.n_requesters
    if pairs:
        best = counts.max(axis=2).sum(axis=2)  # [trial, fraction]
        per_trial = best / pairs
        by_attacker = counts.sum(axis=3) / pairs
        means = best.sum(axis=0) / (nT * pairs)
    else:
        per_trial = np.zeros((nT, nF))
        by_attacker = np.zeros((nT, nF, nA))
        means = np.zeros(nF)
    points = [
        PinningPoint(float(f), int(n), float(means[i]), float(per_trial[:, i].std()), nT, int(seed))
        for i, (f, n) in enumerate(zip(fractions, sizes))
    ]
    return PinningCurve(points, mode, vector, per_trial, by_attacker, counts)
