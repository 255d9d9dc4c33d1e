from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ipfscensor.datasets import (  # noqa: E402
    fixture_path,
    ingest_cid_dataset,
    ingest_node_pool,
    ingest_requesters,
    load_attackers,
)
from ipfscensor.prefixdb import PrefixDB, load_rib, load_roas  # noqa: E402
from ipfscensor.routing import RoutingTreeCache  # noqa: E402
from ipfscensor.topology import TopologyGraph, parse_as_rel  # noqa: E402

T1_TEXT = "1|2|-1\n1|3|-1\n3|4|-1\n2|5|-1\n2|3|0\n4|5|0\n"
DEMO = fixture_path("t1_demo")
GOLDEN = Path(__file__).parent / "data" / "golden"


class Scenario:
    """Loaded copy of a scenario directory in the ingest file formats."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.graph = parse_as_rel((self.root / "as-rel.txt").read_text())
        roas = self.root / "roas.csv"
        self.db = PrefixDB(
            load_rib((self.root / "rib.tsv").read_text()),
            load_roas(roas.read_text()) if roas.exists() else None,
        )
        self.cids, self.report = ingest_cid_dataset((self.root / "cids.jsonl").read_text(), self.db)
        self.requesters = ingest_requesters((self.root / "requesters.txt").read_text(), self.db)
        self.attackers = load_attackers((self.root / "attackers.txt").read_text())
        pool = self.root / "pool.txt"
        self.pool = ingest_node_pool(pool.read_text(), self.db) if pool.exists() else []
        self.trees = RoutingTreeCache(self.graph)


def write_scenario(root: Path, files: dict[str, str]) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (root / name).write_text(text)
    return root


@pytest.fixture(scope="session")
def t1() -> TopologyGraph:
    return parse_as_rel(T1_TEXT)


@pytest.fixture(scope="session")
def t1_trees(t1) -> RoutingTreeCache:
    return RoutingTreeCache(t1)


@pytest.fixture(scope="session")
def demo() -> Scenario:
    return Scenario(DEMO)


# -- acceptance reporting ------------------------------------------------------------

_VERDICTS = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, sink: list, number: int, title: str):
        self.sink, self.number, self.title = sink, number, title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        status = "PASS" if kind is None else "FAIL"
        extra = "; ".join(self.details)
        if kind is not None:
            extra = f"{extra}; {kind.__name__}: {exc}".lstrip("; ")
        line = f"[{status}] criterion {self.number:>2}: {self.title}" + (f" ({extra})" if extra else "")
        self.sink.append((self.number, line))
        print(line)
        return False


@pytest.fixture
def criterion(request):
    sink = request.config.stash.setdefault(_VERDICTS, [])
    return lambda number, title: _Criterion(sink, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(verdicts):
        terminalreporter.write_line(line)
