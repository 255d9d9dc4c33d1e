"""Experiment inputs: CID records, requesters, attacker lists, log scoring, synthesis."""

from importlib import resources
from pathlib import Path

from ipfscensor.datasets.records import (
    CidRecord,
    IngestReport,
    Requester,
    RequesterSet,
    format_cid_dataset,
    ingest_cid_dataset,
    ingest_node_pool,
    ingest_requesters,
    load_attackers,
)
from ipfscensor.datasets.scoring import (
    BitswapLogEvent,
    ScoreWindow,
    read_bitswap_log,
    replay,
    score_cids,
)


def fixture_path(*parts: str) -> Path:
    """Path of a bundled fixture file, e.g. ``fixture_path("t1_demo", "as-rel.txt")``."""
    return Path(str(resources.files("ipfscensor.datasets").joinpath("fixtures", *parts)))


__all__ = [
    "BitswapLogEvent", "CidRecord", "IngestReport", "Requester", "RequesterSet",
    "ScoreWindow", "fixture_path", "format_cid_dataset", "ingest_cid_dataset",
    "ingest_node_pool", "ingest_requesters", "load_attackers", "read_bitswap_log",
    "replay", "score_cids",
]
