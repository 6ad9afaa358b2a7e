"""Independent reference implementations the real code is checked against.

Everything here favors obviousness over speed: exhaustive enumeration, DFS
path checks, and direct formula evaluation. None of it shares logic with the
optimized paths it verifies (the matcher, the bound-based searches, or the
greedy column matcher).
"""

from __future__ import annotations

import itertools

from nbsim.graph import NodeLabel, QueryGraph, WorkflowGraph, graph_facets
from nbsim.model import TableData, Weights
from nbsim.search import SetQuery
from nbsim.similarity import (
    jaccard,
    sim_code,
    sim_library,
    sim_output,
    sim_output_multiset,
    sim_table,
    sim_table_sets,
)


def dfs_path_exists(w: WorkflowGraph, start: str, goal: str) -> bool:
    """True iff a directed path of length >= 1 leads from start to goal."""
    succ: dict[str, list[str]] = {n.id: [] for n in w.nodes}
    for a, b in w.edges:
        succ[a].append(b)
    stack = list(succ[start])
    seen: set[str] = set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(succ[node])
    return False


def brute_force_mappings(q: QueryGraph, w: WorkflowGraph) -> set[frozenset]:
    """Every injective label-preserving assignment that passes the edge and
    wildcard-path conditions, the latter checked by DFS."""
    plain = [n for n in q.nodes if n.label is not NodeLabel.WILDCARD]
    plain_ids = {n.id for n in plain}
    candidates = {
        v.id: [u.id for u in w.nodes if u.label == v.label] for v in plain
    }
    plain_edges = [
        (a, b) for a, b in q.edges if a in plain_ids and b in plain_ids
    ]
    wild_pairs = []
    for m in q.nodes:
        if m.label is not NodeLabel.WILDCARD:
            continue
        incoming = [a for a, b in q.edges if b == m.id]
        outgoing = [b for a, b in q.edges if a == m.id]
        for a in incoming:
            for b in outgoing:
                wild_pairs.append((a, b))

    results: set[frozenset] = set()

    def passes(assign: dict[str, str]) -> bool:
        for a, b in plain_edges:
            if (assign[a], assign[b]) not in w.edges:
                return False
        for a, b in wild_pairs:
            if assign[a] == assign[b]:
                return False
            if not dfs_path_exists(w, assign[a], assign[b]):
                return False
        return True

    def recurse(i: int, assign: dict[str, str], used: set[str]) -> None:
        if i == len(plain):
            if passes(assign):
                results.add(frozenset(assign.items()))
            return
        v = plain[i]
        for u in candidates[v.id]:
            if u in used:
                continue
            assign[v.id] = u
            used.add(u)
            recurse(i + 1, assign, used)
            used.discard(u)
            del assign[v.id]

    recurse(0, {}, set())
    return results


def exact_mapping_score(
    q: QueryGraph, w: WorkflowGraph, mapping: dict[str, str], weights: Weights
) -> float:
    """Direct evaluation of one mapping's similarity, left to right:
    library term first, then node terms in query order."""
    counts = {NodeLabel.CODE: 0, NodeLabel.DATA: 0, NodeLabel.OUTPUT: 0}
    plain = [n for n in q.nodes if n.label is not NodeLabel.WILDCARD]
    for v in plain:
        counts[v.label] += 1
    per_label = {
        NodeLabel.CODE: weights.code / counts[NodeLabel.CODE] if counts[NodeLabel.CODE] else 0.0,
        NodeLabel.DATA: weights.data / counts[NodeLabel.DATA] if counts[NodeLabel.DATA] else 0.0,
        NodeLabel.OUTPUT: weights.output / counts[NodeLabel.OUTPUT] if counts[NodeLabel.OUTPUT] else 0.0,
    }
    node_of = w.node_map()
    total = weights.library * sim_library(q.libraries, w.libraries)
    for v in plain:
        target = node_of[mapping[v.id]].attribute
        if v.label is NodeLabel.CODE:
            value = sim_code(v.attribute, target)
        elif v.label is NodeLabel.DATA:
            value = sim_table(v.attribute, target)
        else:
            value = sim_output(v.attribute, target)
        total += per_label[v.label] * value
    return total


def exhaustive_graph_scores(
    q: QueryGraph, corpus, weights: Weights, mappings_of=None
) -> dict[str, list[float]]:
    """Every mapping's exact score for every notebook, via the brute-force
    matcher unless a mapping list is supplied."""
    scores: dict[str, list[float]] = {}
    for notebook_id in corpus.ids():
        g = corpus.graph(notebook_id)
        if mappings_of is not None:
            mappings = mappings_of(q, g)
        else:
            mappings = [dict(m) for m in brute_force_mappings(q, g)]
        scores[notebook_id] = [
            exact_mapping_score(q, g, m, weights) for m in mappings
        ]
    return scores


def exhaustive_set_ranking(
    q: SetQuery, corpus, weights: Weights, k: int, include_zero: bool = False
) -> list[tuple[str, float]]:
    """Score every notebook on all four facets and rank; no shortcuts."""
    results = []
    for notebook_id in corpus.ids():
        code, tables, outputs, libraries = graph_facets(corpus.graph(notebook_id))
        score = 0.0
        score += weights.code * sim_code(q.code, code)
        score += weights.data * sim_table_sets(q.tables, tables)
        score += weights.output * sim_output_multiset(q.outputs, outputs)
        score += weights.library * sim_library(q.libraries, libraries)
        results.append((notebook_id, score))
    if not include_zero:
        results = [(nb, s) for nb, s in results if s > 0.0]
    results.sort(key=lambda item: (-item[1], item[0]))
    return results[:k]


def best_assignment_table_score(a: TableData, b: TableData) -> float:
    """Maximum-weight column injection (exact, by enumeration); the greedy
    measure can never exceed this."""
    cols_a = [values for _, values in a.columns]
    cols_b = [values for _, values in b.columns]
    if not cols_a and not cols_b:
        return 1.0
    if not cols_a or not cols_b:
        return 0.0
    if len(cols_a) > len(cols_b):
        cols_a, cols_b = cols_b, cols_a
    best = 0.0
    for chosen in itertools.permutations(range(len(cols_b)), len(cols_a)):
        total = sum(jaccard(cols_a[i], cols_b[j]) for i, j in enumerate(chosen))
        best = max(best, total)
    return best / len(cols_a)
