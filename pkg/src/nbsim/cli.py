"""Command-line front end: corpus building, querying, benchmarking, inspection.

Exit codes: 0 ok, 1 ingest error, 2 query error, 3 corpus error,
4 correctness-guard failure (a benchmark toggle subset disagreed).
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import InvalidQuery, NbsimError
from .gen import generate_corpus, generate_queries, write_query_file
from .graph import (
    NodeLabel,
    QueryGraph,
    build_workflow_graph,
    query_graph_from_json,
    topology_signature,
)
from .ingest import TableManifest, attach_tables, load_table_csv, parse_notebook
from .model import OutputKind, Weights
from .search import (
    ScoredResult,
    SearchOptions,
    SearchStats,
    SearchToggles,
    SetQuery,
    naive_search_topk,
    search_topk,
    set_based_search_topk,
)
from .similarity import DEFAULT_CONFIG, SimilarityConfig
from .store import load_corpus, save_corpus, verify_index

GRAPH_DEFAULT_WEIGHTS = Weights(code=8, data=1, output=1, library=1)
SET_DEFAULT_WEIGHTS = Weights(code=32, data=2, output=1, library=1)


@dataclass
class LoadedQuery:
    mode: str
    graph: QueryGraph | None
    set_query: SetQuery | None
    weights: Weights
    k: int
    theta: NodeLabel
    toggles: SearchToggles


def _parse_weights(data: dict, default: Weights) -> Weights:
    if not data:
        return default
    try:
        return Weights(
            code=float(data.get("code", default.code)),
            data=float(data.get("data", default.data)),
            output=float(data.get("output", default.output)),
            library=float(data.get("library", default.library)),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidQuery(f"bad weights: {exc}") from exc


def _parse_toggles(data: dict) -> SearchToggles:
    return SearchToggles(
        pruning=bool(data.get("pruning", True)),
        ordering=bool(data.get("ordering", True)),
        caching=bool(data.get("caching", True)),
        indexing=bool(data.get("indexing", True)),
    )


def load_query_file(path: str | Path) -> LoadedQuery:
    """Parse a query file (graph or set mode) with its options."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidQuery(f"cannot read query file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidQuery(f"query file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidQuery("query file must be a JSON object")
    mode = data.get("mode")
    if mode not in ("graph", "set"):
        raise InvalidQuery("query file needs \"mode\": \"graph\" or \"set\"")
    k = data.get("k", 10)
    if not isinstance(k, int) or k <= 0:
        raise InvalidQuery("k must be a positive integer")
    try:
        theta = NodeLabel.parse(data.get("theta", "data"))
    except ValueError as exc:
        raise InvalidQuery(str(exc)) from exc
    if theta not in (NodeLabel.CODE, NodeLabel.DATA, NodeLabel.OUTPUT):
        raise InvalidQuery("theta must be code, data, or output")
    toggles = _parse_toggles(data.get("toggles", {}))

    if mode == "graph":
        if "graph" not in data:
            raise InvalidQuery("graph mode needs a \"graph\" section")
        graph = query_graph_from_json(data["graph"], base_dir=path.parent)
        weights = _parse_weights(data.get("weights", {}), GRAPH_DEFAULT_WEIGHTS)
        return LoadedQuery("graph", graph, None, weights, k, theta, toggles)

    code = data.get("code", "")
    if "code_file" in data:
        try:
            code = (path.parent / data["code_file"]).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidQuery(f"cannot read code_file: {exc}") from exc
    tables = tuple(
        load_table_csv(path.parent / p, name=Path(p).stem)
        for p in data.get("tables", [])
    )
    try:
        outputs = tuple(OutputKind.parse(str(o)) for o in data.get("outputs", []))
    except ValueError as exc:
        raise InvalidQuery(str(exc)) from exc
    libraries = frozenset(str(x) for x in data.get("libraries", []))
    set_query = SetQuery(code=str(code), tables=tables, outputs=outputs, libraries=libraries)
    weights = _parse_weights(data.get("weights", {}), SET_DEFAULT_WEIGHTS)
    return LoadedQuery("set", None, set_query, weights, k, theta, toggles)


def _format_mapping(result: ScoredResult) -> str:
    if result.mapping is None:
        return "-"
    return ",".join(f"{q}->{w}" for q, w in sorted(result.mapping.items()))


def _print_results(results: list[ScoredResult], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "jsonl":
        for rank, r in enumerate(results, start=1):
            record = {
                "rank": rank,
                "id": r.notebook,
                "score": r.score,
                "mapping": r.mapping,
            }
            print(json.dumps(record, sort_keys=True), file=out)
        return
    print(f"{'rank':<5} {'id':<16} {'score':<12} mapping", file=out)
    for rank, r in enumerate(results, start=1):
        print(f"{rank:<5} {r.notebook:<16} {r.score:<12.6f} {_format_mapping(r)}", file=out)


def _toggles_from_flags(base: SearchToggles, args) -> SearchToggles:
    return SearchToggles(
        pruning=base.pruning and not args.no_prune,
        ordering=base.ordering and not args.no_order,
        caching=base.caching and not args.no_cache,
        indexing=base.indexing and not args.no_index,
    )


def _search_options(query: LoadedQuery, args, toggles: SearchToggles,
                    sim_config: SimilarityConfig = DEFAULT_CONFIG) -> SearchOptions:
    return SearchOptions(
        k=args.k if args.k is not None else query.k,
        weights=query.weights,
        theta=query.theta,
        toggles=toggles,
        include_zero=getattr(args, "include_zero", False),
        threads=args.threads,
        sim_config=sim_config,
    )


def cmd_ingest(args) -> int:
    notebooks = []
    failures: list[str] = []
    for nb_path in args.notebooks:
        nb_path = Path(nb_path)
        try:
            document = nb_path.read_bytes()
            notebook = parse_notebook(document, nb_path.stem)
            manifest_path = nb_path.parent / (nb_path.stem + ".tables.json")
            if manifest_path.exists():
                manifest = TableManifest.from_json(manifest_path.read_text(encoding="utf-8"))
                notebook = attach_tables(notebook, manifest, base_dir=manifest_path.parent)
            graph = build_workflow_graph(notebook)
            notebooks.append(graph)
        except (NbsimError, OSError) as exc:
            failures.append(f"{nb_path}: {exc}")
    if failures and not args.skip_bad:
        for line in failures:
            print(f"error: {line}", file=sys.stderr)
        return 1
    for line in failures:
        print(f"warning: skipped {line}", file=sys.stderr)
    try:
        save_corpus(notebooks, args.out)
    except OSError as exc:
        print(f"error: cannot write corpus: {exc}", file=sys.stderr)
        return 1
    print(f"{'id':<20} {'code':>5} {'data':>5} {'out':>5} {'edges':>6} "
          f"{'max_in':>7} {'max_out':>8} {'libs':>5}")
    for g in notebooks:
        sig = topology_signature(g)
        print(
            f"{g.owner:<20} {sig.code:>5} {sig.data:>5} {sig.output:>5} "
            f"{len(g.edges):>6} {sig.max_in:>7} {sig.max_out:>8} {len(g.libraries):>5}"
        )
    return 0


def cmd_search(args) -> int:
    try:
        corpus = load_corpus(args.corpus)
    except (NbsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    try:
        query = load_query_file(args.query)
        toggles = _toggles_from_flags(query.toggles, args)
        if args.naive:
            toggles = SearchToggles.none()
        opts = _search_options(query, args, toggles)
        if query.mode == "graph":
            if args.naive:
                results = naive_search_topk(query.graph, corpus, opts)
            else:
                results = search_topk(query.graph, corpus, opts)
        else:
            results = set_based_search_topk(query.set_query, corpus, opts)
    except InvalidQuery as exc:
        print(f"error: invalid query: {exc}", file=sys.stderr)
        return 2
    except NbsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    _print_results(results, args.format)
    return 0


_SUBSET_FLAGS = (("PR", "pruning"), ("OR", "ordering"), ("CA", "caching"), ("IND", "indexing"))


def _subset_name(toggles: SearchToggles) -> str:
    parts = [short for short, attr in _SUBSET_FLAGS if getattr(toggles, attr)]
    return "+".join(parts) if parts else "none"


def _matrix(kind: str) -> list[SearchToggles]:
    if kind == "onoff":
        return [SearchToggles(), SearchToggles.none()]
    if kind == "ablation":
        subsets = [SearchToggles()]
        for _, attr in _SUBSET_FLAGS:
            subsets.append(replace(SearchToggles(), **{attr: False}))
        subsets.append(SearchToggles.none())
        return subsets
    subsets = []
    for bits in range(16):
        subsets.append(
            SearchToggles(
                pruning=bool(bits & 8),
                ordering=bool(bits & 4),
                caching=bool(bits & 2),
                indexing=bool(bits & 1),
            )
        )
    subsets.sort(key=lambda t: -sum((t.pruning, t.ordering, t.caching, t.indexing)))
    return subsets


def cmd_bench(args) -> int:
    try:
        corpus = load_corpus(args.corpus)
    except (NbsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    try:
        query = load_query_file(args.query)
    except InvalidQuery as exc:
        print(f"error: invalid query: {exc}", file=sys.stderr)
        return 2
    sim_config = SimilarityConfig(column_pair_cost_s=args.table_cost_ms / 1000.0)

    def run(toggles: SearchToggles):
        opts = _search_options(query, args, toggles, sim_config)
        stats = SearchStats()
        if query.mode == "graph":
            results = search_topk(query.graph, corpus, opts, stats=stats)
        else:
            results = set_based_search_topk(query.set_query, corpus, opts, stats=stats)
        return results, stats

    try:
        naive_opts = _search_options(query, args, SearchToggles.none(), sim_config)
        naive_stats = SearchStats()
        if query.mode == "graph":
            reference = naive_search_topk(query.graph, corpus, naive_opts, stats=naive_stats)
        else:
            reference = set_based_search_topk(query.set_query, corpus, naive_opts, stats=naive_stats)
    except NbsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, InvalidQuery) else 3

    expected = [(r.notebook, r.score) for r in reference]
    rows = []
    disagreements = []
    for toggles in _matrix(args.matrix):
        times = []
        results = stats = None
        for _ in range(args.reps):
            results, stats = run(toggles)
            times.append(stats.elapsed_s)
        got = [(r.notebook, r.score) for r in results]
        if args.fault_inject and toggles == SearchToggles():
            got = list(reversed(got))
        if got != expected:
            disagreements.append(_subset_name(toggles))
        rows.append((toggles, times, stats))

    if disagreements:
        print(
            "error: toggle subsets disagree with the naive ranking: "
            + ", ".join(disagreements),
            file=sys.stderr,
        )
        return 4

    print(
        f"{'subset':<16} {'median_s':>9} {'reps':>5} {'sims':>7} {'col_pairs':>10} "
        f"{'maps':>7} {'idx_pruned':>10} {'abandoned':>10} {'cache_hits':>10}"
    )
    print(
        f"{'naive':<16} {naive_stats.elapsed_s:>9.3f} {1:>5} "
        f"{naive_stats.total_sim_calls():>7} {naive_stats.column_pairs:>10} "
        f"{naive_stats.mappings_enumerated:>7} {0:>10} {0:>10} {0:>10}"
    )
    for toggles, times, stats in rows:
        abandoned = stats.pairs_abandoned_topk + stats.pairs_abandoned_best
        print(
            f"{_subset_name(toggles):<16} {statistics.median(times):>9.3f} {len(times):>5} "
            f"{stats.total_sim_calls():>7} {stats.column_pairs:>10} "
            f"{stats.mappings_enumerated:>7} {stats.graphs_index_pruned:>10} "
            f"{abandoned:>10} {stats.cache_hits:>10}"
        )
        if len(times) > 1:
            print(f"{'':<16} " + " ".join(f"{t:.3f}" for t in times))
    return 0


def cmd_gen(args) -> int:
    try:
        graphs, _ = generate_corpus(args.count, args.seed, args.out)
    except OSError as exc:
        print(f"error: cannot write corpus: {exc}", file=sys.stderr)
        return 1
    print(f"generated {len(graphs)} notebooks in {args.out}")
    if args.queries:
        queries = generate_queries(args.seed + 1, graphs, args.queries)
        query_dir = Path(args.out) / "queries"
        for i, q in enumerate(queries):
            write_query_file(q, query_dir / f"q{i:02d}.json", k=args.k)
        print(f"wrote {len(queries)} query files in {query_dir}")
    return 0


def cmd_verify(args) -> int:
    try:
        corpus = load_corpus(args.corpus)
        stale = verify_index(corpus)
    except (NbsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if stale:
        for notebook_id in stale:
            print(f"stale signature: {notebook_id}")
        return 3
    print(f"ok: {len(corpus.ids())} notebooks, all signatures fresh")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbsim",
        description="Similarity search over computational notebooks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse notebooks and build a corpus")
    p_ingest.add_argument("notebooks", nargs="+", help="notebook document files")
    p_ingest.add_argument("--out", required=True, help="corpus output directory")
    p_ingest.add_argument("--skip-bad", action="store_true", help="skip unparseable files")
    p_ingest.set_defaults(fn=cmd_ingest)

    def add_search_flags(p, include_naive=True):
        p.add_argument("--k", type=int, default=None, help="override the query's k")
        p.add_argument("--no-prune", action="store_true")
        p.add_argument("--no-order", action="store_true")
        p.add_argument("--no-cache", action="store_true")
        p.add_argument("--no-index", action="store_true")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        if include_naive:
            p.add_argument("--naive", action="store_true", help="run the baseline method")

    p_search = sub.add_parser("search", help="run a top-k query against a corpus")
    p_search.add_argument("corpus")
    p_search.add_argument("query")
    add_search_flags(p_search)
    p_search.add_argument("--include-zero", action="store_true",
                          help="pad results with zero-score notebooks")
    p_search.add_argument("--format", choices=["table", "jsonl"], default="table")
    p_search.set_defaults(fn=cmd_search)

    p_bench = sub.add_parser("bench", help="time a query under optimization subsets")
    p_bench.add_argument("corpus")
    p_bench.add_argument("query")
    add_search_flags(p_bench, include_naive=False)
    p_bench.add_argument("--matrix", choices=["onoff", "ablation", "full"], default="onoff")
    p_bench.add_argument("--reps", type=int, default=1)
    p_bench.add_argument("--table-cost-ms", type=float, default=0.0,
                         help="artificial cost per column-pair comparison")
    p_bench.add_argument("--fault-inject", action="store_true", help=argparse.SUPPRESS)
    p_bench.set_defaults(fn=cmd_bench)

    p_gen = sub.add_parser("gen", help="generate a deterministic synthetic corpus")
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--queries", type=int, default=0,
                       help="also write this many sample query files")
    p_gen.add_argument("--k", type=int, default=10, help="k recorded in query files")
    p_gen.set_defaults(fn=cmd_gen)

    p_verify = sub.add_parser("verify", help="check stored topology signatures")
    p_verify.add_argument("corpus")
    p_verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
