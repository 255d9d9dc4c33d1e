"""``ipfscensor`` command-line interface.

Every command writes CSV outputs plus ``manifest.json`` (tool version, seed,
parameters, and SHA-256 digests of inputs and outputs). Relative input paths
are resolved against ``$IPFSCENSOR_INPUT_DIR`` when it is set.

Exit status: 0 on success, 1 on data errors or detected invariant
violations, 2 on usage errors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from ipfscensor import __version__
from ipfscensor.attack import (
    ALL_MODES,
    ALL_VECTORS,
    BlockageEngine,
    Mode,
    TiePolicy,
    Vector,
    evaluate_engine,
    surface_stats,
)
from ipfscensor.datasets import (
    ingest_cid_dataset,
    ingest_node_pool,
    ingest_requesters,
    load_attackers,
    read_bitswap_log,
    replay,
)
from ipfscensor.datasets.scoring import DEFAULT_CAPACITY
from ipfscensor.datasets.synth import SynthConfig, generate_synthetic
from ipfscensor.errors import ConfigError, ParseError, UnknownASError, ValidationError
from ipfscensor.prefixdb import PrefixDB, classify_prefix, load_rib, load_roas, parse_prefix
from ipfscensor.routing import build_routing_tree, dump_routes_csv
from ipfscensor.strategy import greedy_prefix_budget, protection_report, report_csv, simulate_random_pinning
from ipfscensor.topology import (
    load_snapshot,
    merge_ixp_peerings,
    parse_as_rel,
    parse_ixp_pairs,
    validate_topology,
    write_snapshot,
)

log = logging.getLogger("ipfscensor")

INPUT_DIR_ENV = "IPFSCENSOR_INPUT_DIR"


class InputPath(click.ParamType):
    """An existing input file; relative paths honour ``$IPFSCENSOR_INPUT_DIR``."""

    name = "path"

    def convert(self, value, param, ctx):
        if isinstance(value, Path):
            return value
        p = Path(value)
        base = os.environ.get(INPUT_DIR_ENV)
        if base and not p.is_absolute():
            p = Path(base) / p
        if not p.is_file():
            self.fail(f"file {str(p)!r} does not exist", param, ctx)
        return p


INPUT = InputPath()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects inputs, outputs and violations for one command invocation."""

    def __init__(self, command: str, out: Path, seed: int | None = None, **params):
        self.command = command
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.params = {k: _jsonable(v) for k, v in params.items()}
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []
        self.violations: list[str] = []

    def input(self, role: str, path: Path | None) -> Path | None:
        if path is not None:
            self.inputs[role] = {"name": path.name, "sha256": _sha256(path)}
        return path

    def write(self, name: str, text: str | bytes) -> Path:
        p = self.out / name
        if isinstance(text, bytes):
            p.write_bytes(text)
        else:
            with open(p, "w", newline="") as fh:
                fh.write(text)
        if name not in self.outputs:
            self.outputs.append(name)
        return p

    def finish(self) -> None:
        manifest = {
            "tool": "ipfscensor",
            "version": __version__,
            "command": self.command,
            "seed": self.seed,
            "parameters": self.params,
            "inputs": self.inputs,
            "outputs": {n: _sha256(self.out / n) for n in self.outputs},
            "invariant_violations": self.violations,
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if self.violations:
            for v in self.violations[:20]:
                click.echo(f"invariant violation: {v}", err=True)
            raise SystemExit(1)


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return v.name
    if hasattr(v, "value"):
        return v.value
    return v


# -- shared loading ------------------------------------------------------------


def _open(path: Path):
    return open(path, encoding="utf-8")


def _load_graph(run: Run, as_rel: Path, ixp: Path | None):
    with _open(run.input("as_rel", as_rel)) as fh:
        graph = parse_as_rel(fh, source=as_rel.name)
    if ixp is not None:
        with _open(run.input("ixp", ixp)) as fh:
            pairs = parse_ixp_pairs(fh, source=ixp.name)
        graph, report = merge_ixp_peerings(graph, pairs, source=ixp.name)
        if report.conflicts:
            log.info("%d IXP pairs dropped in favour of existing relationships", report.conflicts)
    return graph


def _load_db(run: Run, rib: Path, roas: Path | None) -> PrefixDB:
    with _open(run.input("rib", rib)) as fh:
        index = load_rib(fh, source=rib.name)
    if roas is None:
        return PrefixDB(index)
    with _open(run.input("roas", roas)) as fh:
        return PrefixDB(index, load_roas(fh, source=roas.name))


def _load_scenario(run: Run, as_rel, ixp, rib, roas, cids, requesters, attackers):
    graph = _load_graph(run, as_rel, ixp)
    db = _load_db(run, rib, roas)
    with _open(run.input("cids", cids)) as fh:
        records, _ = ingest_cid_dataset(fh, db, source=cids.name)
    with _open(run.input("requesters", requesters)) as fh:
        reqs = ingest_requesters(fh, db, source=requesters.name)
    with _open(run.input("attackers", attackers)) as fh:
        atts = load_attackers(fh, source=attackers.name)
    if not atts:
        raise click.UsageError(f"attacker list {attackers.name} is empty")
    return graph, db, records, reqs, atts


def scenario_options(f):
    opts = [
        click.option("--as-rel", type=INPUT, required=True, help="AS relationships (A|B|rel)."),
        click.option("--ixp", type=INPUT, default=None, help="IXP pairs CSV (asn_a,asn_b)."),
        click.option("--rib", type=INPUT, required=True, help="Prefix-to-origin table."),
        click.option("--roas", type=INPUT, default=None, help="ROA CSV (prefix,maxLength,originAsn)."),
        click.option("--cids", type=INPUT, required=True, help="CID records (JSON lines)."),
        click.option("--requesters", type=INPUT, required=True, help="Requester IPs, one per line."),
        click.option("--attackers", type=INPUT, required=True, help="Attacker ASNs, one per line."),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True),
        click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads (default: all cores)."),
        click.option("--tie-policy", type=click.Choice([t.value for t in TiePolicy]), default=TiePolicy.LEGIT_WINS.value),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _choices(values: tuple[str, ...], every: tuple, enum_cls) -> list:
    if not values or "all" in values:
        return list(every)
    return [enum_cls(v) for v in dict.fromkeys(values)]


# -- command tree ----------------------------------------------------------------


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ParseError, ValidationError, ConfigError, UnknownASError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(1)


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="ipfscensor")
@click.option("-v", "--verbose", count=True, help="More log output.")
def main(verbose: int) -> None:
    """Simulate single-AS censorship of IPFS content and evaluate countermeasures."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@main.group(cls=_Group)
def topo() -> None:
    """Topology construction."""


@topo.command("build")
@click.option("--as-rel", type=INPUT, required=True)
@click.option("--ixp", type=INPUT, default=None)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def topo_build(as_rel: Path, ixp: Path | None, out: Path) -> None:
    """Parse and validate a topology; write a binary snapshot and a report."""
    run = Run("topo build", out)
    graph = _load_graph(run, as_rel, ixp)
    report = validate_topology(graph)
    with open(out / "topology.snap", "wb") as fh:
        write_snapshot(graph, fh)
    run.outputs.append("topology.snap")
    run.write("validation.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    if not report.accepted:
        run.violations.append("topology has self-loops or contradictory edges")
    run.finish()


@topo.command("routes")
@click.option("--snapshot", type=INPUT, default=None, help="Snapshot from 'topo build'.")
@click.option("--as-rel", type=INPUT, default=None)
@click.option("--dest", type=int, multiple=True, required=True, help="Destination ASN (repeatable).")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def topo_routes(snapshot: Path | None, as_rel: Path | None, dest: tuple[int, ...], out: Path) -> None:
    """Dump routing trees as ``src,dest,class,length,path`` rows."""
    run = Run("topo routes", out, dest=list(dest))
    if (snapshot is None) == (as_rel is None):
        raise click.UsageError("give exactly one of --snapshot or --as-rel")
    if snapshot is not None:
        with open(run.input("snapshot", snapshot), "rb") as fh:
            graph = load_snapshot(fh)
    else:
        graph = _load_graph(run, as_rel, None)
    trees = [build_routing_tree(graph, d) for d in dest]
    run.write("routes.csv", dump_routes_csv(trees))
    run.finish()


@main.group(cls=_Group)
def attack() -> None:
    """Censorship attack simulation and planning."""


@attack.command("simulate")
@scenario_options
@click.option("--mode", "modes", multiple=True, type=click.Choice(["all"] + [m.value for m in Mode]), help="Repeatable; default all.")
@click.option("--vector", "vectors", multiple=True, type=click.Choice(["all"] + [v.value for v in Vector]), help="Repeatable; default all.")
@click.option("--dataset-name", default=None, help="Label for the dataset column (default: CID file stem).")
def attack_simulate(as_rel, ixp, rib, roas, cids, requesters, attackers, out, threads, tie_policy, modes, vectors, dataset_name):
    """Per-CID, per-attacker and summary blockage tables."""
    modes = _choices(modes, ALL_MODES, Mode)
    vectors = _choices(vectors, ALL_VECTORS, Vector)
    name = dataset_name or cids.stem
    run = Run("attack simulate", out, modes=modes, vectors=vectors, tie_policy=tie_policy, dataset=name)
    graph, _, records, reqs, atts = _load_scenario(run, as_rel, ixp, rib, roas, cids, requesters, attackers)
    engine = BlockageEngine(graph, records, reqs, atts, tie_policy=tie_policy, threads=threads)
    result = evaluate_engine(engine, modes, vectors, dataset=name)
    run.violations.extend(result.violations)
    _check_vector_identity(engine, result, modes, vectors, run)
    run.write("results.csv", result.results_csv())
    run.write("per_cid.csv", result.per_cid_csv())
    run.write("per_attacker.csv", result.per_attacker_csv())
    run.write("summary.csv", result.summary_csv())
    stats = surface_stats(records)
    run.write("surface_stats.csv", stats.surface_csv())
    run.write("rpki_categories.csv", stats.category_csv())
    run.finish()


def _check_vector_identity(engine, result, modes, vectors, run: Run) -> None:
    if not {Vector.PROVIDERS, Vector.RESOLVERS, Vector.FULL} <= set(vectors):
        return
    for m in modes:
        full = result.counts[m, Vector.FULL]
        lo = np.maximum(result.counts[m, Vector.PROVIDERS], result.counts[m, Vector.RESOLVERS])
        hi = result.counts[m, Vector.PROVIDERS] + result.counts[m, Vector.RESOLVERS]
        if (full < lo).any() or (full > hi).any():
            run.violations.append(f"{m.value}: full vector count outside provider/resolver union bounds")


@attack.command("budget")
@scenario_options
@click.option("--budget", type=click.IntRange(min=0), required=True, help="Maximum prefixes to hijack.")
@click.option("--attacker", "chosen", type=int, multiple=True, help="Attacker ASN to plan for (repeatable; default: every listed attacker).")
@click.option("--context", type=click.Choice([Mode.HIJACK.value, Mode.COMBINED.value]), default=Mode.HIJACK.value)
@click.option("--vector", type=click.Choice([v.value for v in Vector]), default=Vector.FULL.value)
def attack_budget(as_rel, ixp, rib, roas, cids, requesters, attackers, out, threads, tie_policy, budget, chosen, context, vector):
    """Greedy hijack-prefix plan per attacker (``plan_AS<asn>.csv``)."""
    run = Run("attack budget", out, budget=budget, attacker=list(chosen), context=context, vector=vector, tie_policy=tie_policy)
    graph, _, records, reqs, atts = _load_scenario(run, as_rel, ixp, rib, roas, cids, requesters, attackers)
    targets = list(dict.fromkeys(chosen)) or atts
    unknown = [a for a in targets if a not in atts]
    if unknown:
        raise click.UsageError(f"attacker(s) {unknown} not in {attackers.name}")
    engine = BlockageEngine(graph, records, reqs, targets, tie_policy=tie_policy, threads=threads)
    for a in targets:
        plan = greedy_prefix_budget(engine, a, budget, context, vector)
        if any(m < 0 for m in plan.marginal) or len(plan.prefixes) != len(set(plan.prefixes)):
            run.violations.append(f"AS{a}: plan gain decreased or repeated a prefix")
        run.write(f"plan_AS{a}.csv", plan.to_csv())
    run.finish()


@main.group(cls=_Group)
def defend() -> None:
    """Countermeasure evaluation."""


@defend.command("pinning")
@scenario_options
@click.option("--pool", type=INPUT, required=True, help="Server-node IPs, one per line.")
@click.option("--fractions", required=True, help="Comma-separated, ascending, in [0, 1].")
@click.option("--trials", type=click.IntRange(min=1), default=10)
@click.option("--seed", type=int, required=True)
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default=Mode.COMBINED.value)
@click.option("--vector", type=click.Choice([v.value for v in Vector]), default=Vector.PROVIDERS.value)
def defend_pinning(as_rel, ixp, rib, roas, cids, requesters, attackers, out, threads, tie_policy, pool, fractions, trials, seed, mode, vector):
    """Blockage curve under random collaborative pinning."""
    try:
        fracs = [float(x) for x in fractions.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"not a list of numbers: {fractions!r}", param_hint="--fractions") from None
    run = Run("defend pinning", out, seed=seed, fractions=fracs, trials=trials, mode=mode, vector=vector, tie_policy=tie_policy)
    graph, db, records, reqs, atts = _load_scenario(run, as_rel, ixp, rib, roas, cids, requesters, attackers)
    with _open(run.input("pool", pool)) as fh:
        nodes = ingest_node_pool(fh, db, source=pool.name)
    engine = BlockageEngine(graph, records, reqs, atts, tie_policy=tie_policy, extra_endpoints=nodes, threads=threads)
    curve = simulate_random_pinning(engine, nodes, fracs, trials, seed, mode, vector)
    if (np.diff(curve.counts, axis=1) > 0).any():
        run.violations.append("blockage increased with a larger pinning sample")
    run.write("curve.csv", curve.to_csv())
    rows = ["trial,fraction,nodes,max_blockage\n"]
    for t in range(trials):
        for i, p in enumerate(curve.points):
            rows.append(f"{t},{p.fraction!r},{p.nodes},{curve.per_trial[t, i]:.6f}\n")
    run.write("trials.csv", "".join(rows))
    run.finish()


@main.group(cls=_Group)
def protection() -> None:
    """Provider-side hijack resistance."""


@protection.command("report")
@scenario_options
def protection_cmd(as_rel, ixp, rib, roas, cids, requesters, attackers, out, threads, tie_policy):
    """Per-CID hardening verdicts with recommended actions."""
    run = Run("protection report", out)
    graph, _, records, reqs, atts = _load_scenario(run, as_rel, ixp, rib, roas, cids, requesters, attackers)
    engine = BlockageEngine(graph, records, reqs, atts, threads=threads)
    run.write("protection.csv", report_csv(protection_report(engine)))
    run.finish()


@main.group(cls=_Group)
def dataset() -> None:
    """Input generation and log scoring."""


@dataset.command("synth")
@click.option("--config", "config_path", type=INPUT, default=None, help="JSON generator config.")
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def dataset_synth(config_path: Path | None, seed: int, out: Path) -> None:
    """Write a synthetic scenario in the ingestible file formats."""
    run = Run("dataset synth", out, seed=seed)
    if config_path is not None:
        cfg = SynthConfig.from_json(Path(run.input("config", config_path)).read_text())
    else:
        cfg = SynthConfig()
    run.params["config"] = cfg.to_dict()
    data = generate_synthetic(cfg, seed)
    for name, text in data.texts.items():
        run.write(name, text)
    run.finish()


@dataset.command("score")
@click.option("--log", "log_path", type=INPUT, required=True, help="Bitswap log CSV (timestamp,peer,cid).")
@click.option("--capacity", type=click.IntRange(min=1), default=DEFAULT_CAPACITY)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def dataset_score(log_path: Path, capacity: int, out: Path) -> None:
    """Rank CIDs in the final FIFO window by peer-weighted score."""
    run = Run("dataset score", out, capacity=capacity)
    with _open(run.input("log", log_path)) as fh:
        window = replay(read_bitswap_log(fh, source=log_path.name), capacity)
    rows = ["rank,cid,score,peers\n"]
    for rank, (cid, score) in enumerate(window.ranked(), start=1):
        rows.append(f"{rank},{cid},{score!r},{len(window.peers(cid))}\n")
    run.write("scores.csv", "".join(rows))
    if window.max_size > capacity:
        run.violations.append("score window exceeded its capacity")
    run.finish()


@main.group(cls=_Group)
def rpki() -> None:
    """RPKI hijackability classification."""


@rpki.command("classify")
@click.option("--prefixes", type=INPUT, required=True, help="One prefix per line.")
@click.option("--roas", type=INPUT, required=True, help="ROA CSV; may hold only a header.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def rpki_classify(prefixes: Path, roas: Path, out: Path) -> None:
    """Category 1-4 for each prefix, with the governing ROA if any."""
    run = Run("rpki classify", out)
    with _open(run.input("roas", roas)) as fh:
        roa_set = load_roas(fh, source=roas.name)
    rows = ["prefix,category,roa_prefix,roa_max_length,roa_origin\n"]
    with _open(run.input("prefixes", prefixes)) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                p = parse_prefix(line)
            except (ParseError, ValueError):
                raise ParseError(f"invalid prefix {line!r}", lineno, prefixes.name) from None
            roa = roa_set.governing(p)
            cat = classify_prefix(p, roa_set)
            if roa is None:
                rows.append(f"{p},{int(cat)},,,\n")
            else:
                rows.append(f"{p},{int(cat)},{roa.prefix},{roa.max_length},{roa.origin}\n")
    run.write("categories.csv", "".join(rows))
    run.finish()


if __name__ == "__main__":
    main()
