"""Per-CID assessment of how well the provider side resists prefix hijacking."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from ipfscensor.attack.engine import BlockageEngine
from ipfscensor.attack.predicates import Mode, TiePolicy, Vector, attack_surface
from ipfscensor.prefixdb import RpkiCategory

REPORT_COLUMNS = [
    "cid", "verdict", "providers", "provider_asns", "provider_prefixes",
    "cat2_endpoints", "cat4_endpoints", "hardening_endpoints",
    "worst_hijack_fraction", "recommendation",
]


class Verdict(str, enum.Enum):
    NO_PROVIDERS = "no-providers"
    HARDENED = "hijack-hardened"
    EXPOSED = "exposed"
    NOT_HARDENED = "not-hardened"


RECOMMENDATIONS = {
    Verdict.NO_PROVIDERS: "publish a provider record; the CID is served only from caches, if at all",
    Verdict.HARDENED: "keep the ROA maxLength equal to the announced length and add providers in other ASes against interception",
    Verdict.EXPOSED: "a protected prefix exists but every attacker can still win it; host a replica nearer the requesters",
    Verdict.NOT_HARDENED: "announce provider prefixes at the filtering limit (/24, /48) or issue a ROA with maxLength equal to the prefix length",
}


@dataclass(frozen=True)
class ProtectionRow:
    cid: str
    verdict: Verdict
    providers: int
    provider_asns: int
    provider_prefixes: int
    cat2_endpoints: int
    cat4_endpoints: int
    hardening_endpoints: int
    worst_hijack_fraction: float

    @property
    def recommendation(self) -> str:
        return RECOMMENDATIONS[self.verdict]


def protection_report(engine: BlockageEngine) -> list[ProtectionRow]:
    """Classify each CID by whether some provider-side endpoint withstands every attacker.

    An endpoint hardens a CID when it is category 2 or 4 and no attacker
    diverts all requesters from it, even when equal routes go to the attacker.
    """
    ties = TiePolicy.ATTACKER_WINS
    surfaces = [attack_surface(c, Vector.PROVIDERS) for c in engine.cids]
    nK = len(engine.keys)
    # a key survives if some requester AS keeps the legitimate route against every attacker
    survives = np.ones(nK, dtype=bool)
    worst = np.zeros(len(engine.cids), dtype=np.int64)
    for k in range(len(engine.attackers)):
        survives &= ~engine.hijack_matrix(k, ties).all(axis=1)
        blocked = engine.surface_blocked(k, Mode.HIJACK, ties)[0]
        worst = np.maximum(worst, blocked @ engine.weights)
    rows = []
    for i, cid in enumerate(engine.cids):
        eps = [e for e in surfaces[i] if e.mapped]
        guarded = [e for e in eps if e.category in (RpkiCategory.NO_ROA_LIMIT, RpkiCategory.ROA_MAXLEN)]
        hard = sum(1 for e in guarded if survives[engine.key_of(e)])
        if not cid.providers:
            verdict = Verdict.NO_PROVIDERS
        elif hard:
            verdict = Verdict.HARDENED
        elif guarded:
            verdict = Verdict.EXPOSED
        else:
            verdict = Verdict.NOT_HARDENED
        n_req = engine.n_requesters
        rows.append(ProtectionRow(
            cid=cid.cid,
            verdict=verdict,
            providers=len(cid.providers),
            provider_asns=len({e.origin for e in eps}),
            provider_prefixes=len({e.prefix for e in eps}),
            cat2_endpoints=sum(1 for e in eps if e.category == RpkiCategory.NO_ROA_LIMIT),
            cat4_endpoints=sum(1 for e in eps if e.category == RpkiCategory.ROA_MAXLEN),
            hardening_endpoints=hard,
            worst_hijack_fraction=float(worst[i] / n_req) if n_req else 0.0,
        ))
    return rows


def report_csv(rows: list[ProtectionRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([
            r.cid, r.verdict.value, r.providers, r.provider_asns, r.provider_prefixes,
            r.cat2_endpoints, r.cat4_endpoints, r.hardening_endpoints,
            f"{r.worst_hijack_fraction:.6f}", r.recommendation,
        ])
    return buf.getvalue()
