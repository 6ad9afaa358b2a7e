"""Top-k similarity search over a corpus of workflow graphs.

Two scoring models are provided. Set-based scoring compares whole facets
(code, tables, outputs, libraries) between a query and a notebook. Graph-based
scoring enumerates subgraph mappings and sums per-node content similarities
under normalized weights, taking the best mapping per notebook.

The optimized graph search evaluates cheap similarities first, orders
(graph, mapping) pairs by their tentative scores, and walks the deferred
(theta-labeled) similarities under an optimistic upper bound, abandoning a
pair as soon as the bound drops below the running k-th score or the
notebook's own best. Optimizations never change results, only time.

Float discipline: every path accumulates a mapping's score over the same term
sequence (library term first, then per-node terms in query order), and the
upper bound replaces unscored terms in that sequence with their optimistic
values. Scores are therefore bit-identical across optimization toggles and
the bound is exactly monotone.
"""

from __future__ import annotations

import heapq
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .errors import EmptyCorpus, InvalidQuery
from .graph import (
    NodeLabel,
    QueryGraph,
    TopologySignature,
    WorkflowGraph,
    graph_facets,
    topology_signature,
    validate_query_graph,
)
from .matching import Mapping, enumerate_mappings, index_prune
from .model import NotebookId, OutputKind, TableData, Weights
from .similarity import DEFAULT_CONFIG, SimCache, SimilarityConfig, SimilarityEngine


class Corpus(Protocol):
    """What search needs from a corpus: ids with signatures, lazy graph bodies."""

    def ids(self) -> Sequence[NotebookId]: ...

    def signature(self, notebook_id: NotebookId) -> TopologySignature: ...

    def graph(self, notebook_id: NotebookId) -> WorkflowGraph: ...


@dataclass(frozen=True)
class NormalizedWeights:
    """Per-node weights: each label's weight divided by the query's node count
    for that label (0 when the query has no such nodes); the library weight is
    used as-is."""

    code: float
    data: float
    output: float
    library: float

    def for_label(self, label: NodeLabel) -> float:
        return {
            NodeLabel.CODE: self.code,
            NodeLabel.DATA: self.data,
            NodeLabel.OUTPUT: self.output,
        }[label]


def normalize_weights(q: QueryGraph, w: Weights) -> NormalizedWeights:
    counts = {NodeLabel.CODE: 0, NodeLabel.DATA: 0, NodeLabel.OUTPUT: 0}
    for node in q.plain_nodes():
        counts[node.label] += 1
    return NormalizedWeights(
        code=w.code / counts[NodeLabel.CODE] if counts[NodeLabel.CODE] else 0.0,
        data=w.data / counts[NodeLabel.DATA] if counts[NodeLabel.DATA] else 0.0,
        output=w.output / counts[NodeLabel.OUTPUT] if counts[NodeLabel.OUTPUT] else 0.0,
        library=w.library,
    )


@dataclass(frozen=True)
class SearchToggles:
    pruning: bool = True
    ordering: bool = True
    caching: bool = True
    indexing: bool = True

    @classmethod
    def none(cls) -> "SearchToggles":
        return cls(False, False, False, False)


@dataclass(frozen=True)
class SearchOptions:
    k: int
    weights: Weights = field(default_factory=Weights)
    theta: NodeLabel = NodeLabel.DATA
    toggles: SearchToggles = field(default_factory=SearchToggles)
    include_zero: bool = False
    threads: int = 1
    sim_config: SimilarityConfig = DEFAULT_CONFIG
    cache_entries: int = 1 << 18

    def __post_init__(self):
        if self.k <= 0:
            raise InvalidQuery("k must be a positive integer")
        if self.theta not in (NodeLabel.CODE, NodeLabel.DATA, NodeLabel.OUTPUT):
            raise InvalidQuery("theta must be code, data, or output")
        if self.threads < 1:
            raise InvalidQuery("threads must be >= 1")


@dataclass(frozen=True)
class ScoredResult:
    notebook: NotebookId
    score: float
    mapping: Mapping | None = None


@dataclass
class SearchStats:
    """Counters filled in by one search run."""

    graphs_total: int = 0
    graphs_index_pruned: int = 0
    mappings_enumerated: int = 0
    pairs_abandoned_topk: int = 0
    pairs_abandoned_best: int = 0
    sim_calls: dict = field(default_factory=dict)
    column_pairs: int = 0
    cache_hits: int = 0
    elapsed_s: float = 0.0

    def take_engine(self, engine: SimilarityEngine) -> None:
        self.sim_calls = dict(engine.calls)
        self.column_pairs = engine.column_pairs
        self.cache_hits = engine.cache_hits

    def total_sim_calls(self) -> int:
        return sum(self.sim_calls.values())


@dataclass
class MaxSimTrace:
    """Instrumented record of one (graph, mapping) pair's bound sequence."""

    notebook: NotebookId
    mapping_index: int
    mapping: Mapping
    bounds: list[float]
    partial: float
    completed: bool
    abandoned_by: str | None  # "topk" | "best" | None


@dataclass
class PartialScore:
    """A mapping's score state over the canonical term sequence.

    terms[0] is the library term, terms[1:] are per-node terms in query-node
    order; None marks a term not yet computed. `optimistic` holds each slot's
    upper-bound value (the slot's normalized weight, similarity 1).
    """

    graph: WorkflowGraph
    mapping: Mapping
    terms: list[float | None]
    optimistic: list[float]

    @property
    def computed(self) -> float:
        total = 0.0
        for t in self.terms:
            if t is not None:
                total += t
        return total

    @property
    def remaining_weight(self) -> float:
        total = 0.0
        for t, opt in zip(self.terms, self.optimistic):
            if t is None:
                total += opt
        return total


def max_sim(partial: PartialScore) -> float:
    """Optimistic upper bound: unscored terms count at full weight.

    Evaluated over the same left-to-right term sequence as the final score, so
    the bound is exactly non-increasing as terms are filled in and equals the
    final score once everything is scored.
    """
    total = 0.0
    for t, opt in zip(partial.terms, partial.optimistic):
        total += opt if t is None else t
    return total


def _chain_sum(terms: Iterable[float]) -> float:
    total = 0.0
    for t in terms:
        total += t
    return total


def _node_sim(engine: SimilarityEngine, label: NodeLabel, a, b) -> float:
    if label is NodeLabel.CODE:
        return engine.code(a, b)
    if label is NodeLabel.DATA:
        return engine.table(a, b)
    return engine.output(a, b)


def graph_mapping_score(
    q: QueryGraph,
    w: WorkflowGraph,
    m: Mapping,
    nw: NormalizedWeights,
    engine: SimilarityEngine,
    library_term: float | None = None,
) -> float:
    """Exact similarity of one mapping: library term plus weighted node terms."""
    node_of = w.node_map()
    terms = [
        nw.library * engine.library(q.libraries, w.libraries)
        if library_term is None
        else library_term
    ]
    for v in q.plain_nodes():
        weight = nw.for_label(v.label)
        terms.append(weight * _node_sim(engine, v.label, v.attribute, node_of[m[v.id]].attribute))
    return _chain_sum(terms)


def notebook_score(
    q: QueryGraph,
    w: WorkflowGraph,
    mappings: Sequence[Mapping],
    nw: NormalizedWeights,
    engine: SimilarityEngine,
) -> float:
    """Best mapping score, or 0.0 when there are no mappings."""
    best = 0.0
    for m in mappings:
        best = max(best, graph_mapping_score(q, w, m, nw, engine))
    return best


def _rank(results: list[ScoredResult], k: int, include_zero: bool) -> list[ScoredResult]:
    if not include_zero:
        results = [r for r in results if r.score > 0.0]
    results.sort(key=lambda r: (-r.score, r.notebook))
    return results[:k]


def _kth_largest(values: Iterable[float], k: int) -> float:
    top = heapq.nlargest(k, values)
    if len(top) < k:
        return 0.0
    return top[-1]


def _ensure_corpus(corpus: Corpus) -> list[NotebookId]:
    ids = list(corpus.ids())
    if not ids:
        raise EmptyCorpus("corpus contains no notebooks")
    return ids


def _validated(q: QueryGraph) -> None:
    problems = validate_query_graph(q)
    if problems:
        raise InvalidQuery("; ".join(problems))


def search_topk(
    q: QueryGraph,
    corpus: Corpus,
    opts: SearchOptions,
    stats: SearchStats | None = None,
    traces: list[MaxSimTrace] | None = None,
) -> list[ScoredResult]:
    """Graph-based top-k search with the four optimizations behind toggles.

    Phase 1 enumerates mappings per graph (skipping graphs the topology index
    rules out) and computes the library and non-theta node terms. Phase 2
    visits (graph, mapping) pairs — in tentative-score order when ordering is
    on — filling in theta terms one at a time and abandoning a pair when its
    bound falls below the running k-th score or the notebook's current best.

    Returns at most k notebooks with score > 0 (include_zero pads with
    zero-score notebooks), ranked by score, ties by ascending id. Returned
    scores are exact.
    """
    _validated(q)
    ids = _ensure_corpus(corpus)
    started = time.perf_counter()
    toggles = opts.toggles
    nw = normalize_weights(q, opts.weights)
    engine = SimilarityEngine(
        opts.sim_config,
        SimCache(opts.cache_entries) if toggles.caching else None,
    )
    q_sig = topology_signature(q)
    plain = q.plain_nodes()
    theta_slots = [
        i + 1 for i, v in enumerate(plain) if v.label is opts.theta
    ]
    optimistic = [nw.library] + [nw.for_label(v.label) for v in plain]

    def phase_one(notebook_id: NotebookId) -> tuple[NotebookId, list[PartialScore] | None]:
        if toggles.indexing and index_prune(q_sig, corpus.signature(notebook_id)):
            return notebook_id, None
        g = corpus.graph(notebook_id)
        mappings = enumerate_mappings(q, g)
        node_of = g.node_map()
        partials: list[PartialScore] = []
        for m in mappings:
            terms: list[float | None] = [
                nw.library * engine.library(q.libraries, g.libraries)
            ]
            for v in plain:
                if v.label is opts.theta:
                    terms.append(None)
                else:
                    weight = nw.for_label(v.label)
                    terms.append(
                        weight * _node_sim(engine, v.label, v.attribute, node_of[m[v.id]].attribute)
                    )
            partials.append(PartialScore(graph=g, mapping=m, terms=terms, optimistic=list(optimistic)))
        return notebook_id, partials

    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            phase1 = list(pool.map(phase_one, ids))
    else:
        phase1 = [phase_one(i) for i in ids]

    if stats is not None:
        stats.graphs_total = len(ids)
        stats.graphs_index_pruned = sum(1 for _, p in phase1 if p is None)
        stats.mappings_enumerated = sum(len(p) for _, p in phase1 if p is not None)

    pairs: list[tuple[NotebookId, int, PartialScore]] = []
    for notebook_id, partials in phase1:
        if partials is None:
            continue
        for idx, ps in enumerate(partials):
            pairs.append((notebook_id, idx, ps))

    if toggles.ordering:
        pairs.sort(key=lambda item: (-item[2].computed, item[0], item[1]))

    k = opts.k
    best_score: dict[NotebookId, float] = {i: 0.0 for i in ids}
    # per notebook: (score, mapping enumeration index, mapping); ties prefer
    # the earliest-enumerated mapping so results match the naive baseline.
    best_pair: dict[NotebookId, tuple[float, int, Mapping]] = {}
    sim_k = _kth_largest(best_score.values(), k)

    for notebook_id, idx, ps in pairs:
        node_of = ps.graph.node_map()
        abandoned: str | None = None
        bounds = [max_sim(ps)] if traces is not None else None
        for slot in theta_slots:
            v = plain[slot - 1]
            weight = nw.for_label(v.label)
            ps.terms[slot] = weight * _node_sim(
                engine, v.label, v.attribute, node_of[ps.mapping[v.id]].attribute
            )
            bound = max_sim(ps)
            if bounds is not None:
                bounds.append(bound)
            if toggles.pruning and (bound < sim_k or bound < best_score[notebook_id]):
                abandoned = "topk" if bound < sim_k else "best"
                break
        partial = ps.computed
        if traces is not None:
            traces.append(
                MaxSimTrace(
                    notebook=notebook_id,
                    mapping_index=idx,
                    mapping=ps.mapping,
                    bounds=bounds,
                    partial=partial,
                    completed=abandoned is None,
                    abandoned_by=abandoned,
                )
            )
        if stats is not None and abandoned == "topk":
            stats.pairs_abandoned_topk += 1
        if stats is not None and abandoned == "best":
            stats.pairs_abandoned_best += 1
        current = best_pair.get(notebook_id)
        if current is None or partial > current[0] or (partial == current[0] and idx < current[1]):
            best_pair[notebook_id] = (partial, idx, ps.mapping)
        if partial > best_score[notebook_id]:
            best_score[notebook_id] = partial
            sim_k = _kth_largest(best_score.values(), k)

    results = []
    for notebook_id in ids:
        pair = best_pair.get(notebook_id)
        mapping = pair[2] if pair is not None and best_score[notebook_id] > 0.0 else None
        results.append(ScoredResult(notebook_id, best_score[notebook_id], mapping))
    ranked = _rank(results, k, opts.include_zero)
    if stats is not None:
        stats.take_engine(engine)
        stats.elapsed_s = time.perf_counter() - started
    return ranked


def naive_search_topk(
    q: QueryGraph,
    corpus: Corpus,
    opts: SearchOptions,
    stats: SearchStats | None = None,
) -> list[ScoredResult]:
    """Baseline: enumerate every mapping of every graph and score it in full.

    One library similarity per graph plus one content similarity per mapped
    node; no pruning, ordering, caching, or indexing. Ranking and tie rules
    match search_topk.
    """
    _validated(q)
    ids = _ensure_corpus(corpus)
    started = time.perf_counter()
    engine = SimilarityEngine(opts.sim_config, cache=None)
    nw = normalize_weights(q, opts.weights)
    results: list[ScoredResult] = []
    mapping_count = 0
    for notebook_id in ids:
        g = corpus.graph(notebook_id)
        library_term = nw.library * engine.library(q.libraries, g.libraries)
        best = 0.0
        best_mapping: Mapping | None = None
        for m in enumerate_mappings(q, g):
            mapping_count += 1
            score = graph_mapping_score(q, g, m, nw, engine, library_term=library_term)
            if score > best:
                best = score
                best_mapping = m
        results.append(ScoredResult(notebook_id, best, best_mapping if best > 0.0 else None))
    ranked = _rank(results, opts.k, opts.include_zero)
    if stats is not None:
        stats.graphs_total = len(ids)
        stats.mappings_enumerated = mapping_count
        stats.take_engine(engine)
        stats.elapsed_s = time.perf_counter() - started
    return ranked


# --- set-based search ---------------------------------------------------------


@dataclass(frozen=True)
class SetQuery:
    """A structureless query: code text, tables, output kinds, libraries."""

    code: str = ""
    tables: tuple[TableData, ...] = ()
    outputs: tuple[OutputKind, ...] = ()
    libraries: frozenset[str] = frozenset()


_FACET_ORDER = ("code", "data", "output", "library")


def _facet_sims(
    q: SetQuery,
    facets: tuple[str, tuple[TableData, ...], tuple[OutputKind, ...], frozenset[str]],
    engine: SimilarityEngine,
    skip: set[str] = frozenset(),
) -> dict[str, float]:
    code, tables, outputs, libraries = facets
    sims: dict[str, float] = {}
    if "code" not in skip:
        sims["code"] = engine.code(q.code, code)
    if "data" not in skip:
        sims["data"] = engine.table_sets(q.tables, tables)
    if "output" not in skip:
        sims["output"] = engine.output_multiset(q.outputs, outputs)
    if "library" not in skip:
        sims["library"] = engine.library(q.libraries, libraries)
    return sims


def _facet_weight(w: Weights, facet: str) -> float:
    return {"code": w.code, "data": w.data, "output": w.output, "library": w.library}[facet]


def set_based_score(q: SetQuery, facets, w: Weights, engine: SimilarityEngine | None = None) -> float:
    """Weighted sum of the four facet similarities (code, data, output, library)."""
    engine = engine or SimilarityEngine()
    sims = _facet_sims(q, facets, engine)
    return _chain_sum(_facet_weight(w, f) * sims[f] for f in _FACET_ORDER)


_THETA_FACET = {NodeLabel.CODE: "code", NodeLabel.DATA: "data", NodeLabel.OUTPUT: "output"}


def set_based_search_topk(
    q: SetQuery,
    corpus: Corpus,
    opts: SearchOptions,
    stats: SearchStats | None = None,
) -> list[ScoredResult]:
    """Set-based top-k: non-theta facets first, theta deferred behind the bound.

    Only the pruning and ordering toggles apply to the set-based method (the
    caching toggle is honored too since it cannot change results); the
    topology index has nothing to index here. With include_zero set, pruning
    is disabled so every reported score is exact.
    """
    ids = _ensure_corpus(corpus)
    started = time.perf_counter()
    toggles = opts.toggles
    engine = SimilarityEngine(
        opts.sim_config,
        SimCache(opts.cache_entries) if toggles.caching else None,
    )
    theta_facet = _THETA_FACET[opts.theta]
    theta_weight = _facet_weight(opts.weights, theta_facet)
    prune = toggles.pruning and not opts.include_zero

    staged: list[tuple[NotebookId, dict[str, float]]] = []
    for notebook_id in ids:
        facets = graph_facets(corpus.graph(notebook_id))
        sims = _facet_sims(q, facets, engine, skip={theta_facet})
        staged.append((notebook_id, sims))

    def sequence(sims: dict[str, float], theta_value: float | None) -> float:
        terms = []
        for facet in _FACET_ORDER:
            if facet == theta_facet:
                terms.append(0.0 if theta_value is None else theta_value)
            else:
                terms.append(_facet_weight(opts.weights, facet) * sims[facet])
        return _chain_sum(terms)

    def tentative(item: tuple[NotebookId, dict[str, float]]) -> float:
        return sequence(item[1], None)

    if toggles.ordering:
        staged.sort(key=lambda item: (-tentative(item), item[0]))

    finals: dict[NotebookId, float] = {}
    skipped = 0
    for notebook_id, sims in staged:
        sim_k = _kth_largest(finals.values(), opts.k)
        bound = sequence(sims, theta_weight)
        if prune and bound < sim_k:
            skipped += 1
            continue
        if theta_weight == 0.0:
            theta_term = 0.0
        else:
            facets = graph_facets(corpus.graph(notebook_id))
            value = _facet_sims(q, facets, engine, skip=set(_FACET_ORDER) - {theta_facet})[theta_facet]
            theta_term = theta_weight * value
        finals[notebook_id] = sequence(sims, theta_term)

    results = [ScoredResult(nb, score, None) for nb, score in finals.items()]
    ranked = _rank(results, opts.k, opts.include_zero)
    if stats is not None:
        stats.graphs_total = len(ids)
        stats.pairs_abandoned_topk = skipped
        stats.take_engine(engine)
        stats.elapsed_s = time.perf_counter() - started
    return ranked
