"""Subgraph matching of query graphs into workflow DAGs.

A mapping assigns every non-wildcard query node to a distinct workflow node of
the same label such that query edges between plain nodes map to workflow
edges, and every wildcard bridges its in/out neighbors through a directed path
of length >= 1 between distinct workflow nodes.
"""

from __future__ import annotations

from typing import Iterable

from .graph import NodeLabel, QueryGraph, TopologySignature, WorkflowGraph, _topo_order

# query node id -> workflow node id, over non-wildcard query nodes only
Mapping = dict[str, str]


class ReachabilityIndex:
    """Constant-time reachability over a DAG via per-node descendant bitsets.

    reachable(u, v) is True iff a directed path of length >= 1 leads from u to
    v; on a DAG this is always False for u == v.
    """

    def __init__(self, node_ids: Iterable[str], edges: Iterable[tuple[str, str]]):
        ids = list(node_ids)
        edge_list = list(edges)
        succ: dict[str, list[str]] = {i: [] for i in ids}
        for a, b in edge_list:
            succ[a].append(b)
        self._slot = {node: i for i, node in enumerate(ids)}
        self._reach = [0] * len(ids)
        for node in reversed(_topo_order(ids, edge_list)):
            bits = 0
            for child in succ[node]:
                child_slot = self._slot[child]
                bits |= (1 << child_slot) | self._reach[child_slot]
            self._reach[self._slot[node]] = bits

    def reachable(self, source: str, target: str) -> bool:
        return bool(self._reach[self._slot[source]] >> self._slot[target] & 1)


def build_reachability(w: WorkflowGraph) -> ReachabilityIndex:
    return ReachabilityIndex((n.id for n in w.nodes), w.edges)


def index_prune(q: TopologySignature, w: TopologySignature) -> bool:
    """True when the signatures alone rule out any match (conservative)."""
    return (
        w.code < q.code
        or w.data < q.data
        or w.output < q.output
        or w.max_in < q.max_in
        or w.max_out < q.max_out
    )


def _wildcard_pair_constraints(q: QueryGraph) -> list[tuple[str, str]]:
    """(in-neighbor, out-neighbor) pairs that every wildcard must bridge."""
    pairs: set[tuple[str, str]] = set()
    for w in q.wildcard_nodes():
        incoming = [a for a, b in q.edges if b == w.id]
        outgoing = [b for a, b in q.edges if a == w.id]
        for a in incoming:
            for b in outgoing:
                pairs.add((a, b))
    return sorted(pairs)


def enumerate_mappings(
    q: QueryGraph, w: WorkflowGraph, r: ReachabilityIndex | None = None
) -> list[Mapping]:
    """All mappings of q into w, in a deterministic order.

    The result is sorted lexicographically by the images of the query's
    non-wildcard nodes (in construction order), comparing workflow nodes by
    their position in the graph's node list.
    """
    plain = q.plain_nodes()
    if not plain:
        return [{}]

    ordinal = {n.id: i for i, n in enumerate(w.nodes)}
    by_label: dict[NodeLabel, list[str]] = {}
    for n in w.nodes:
        by_label.setdefault(n.label, []).append(n.id)
    candidates: dict[str, list[str]] = {}
    for v in plain:
        pool = by_label.get(v.label, [])
        if not pool:
            return []
        candidates[v.id] = pool

    plain_ids = [v.id for v in plain]
    plain_set = set(plain_ids)
    edge_constraints = [
        (a, b) for a, b in q.edges if a in plain_set and b in plain_set
    ]
    path_constraints = _wildcard_pair_constraints(q)
    if path_constraints and r is None:
        r = build_reachability(w)

    # Constraints indexed by the later-assigned endpoint, so each is checked
    # exactly once, as soon as both endpoints have images.
    search_order = sorted(plain_ids, key=lambda v: len(candidates[v]))
    rank = {v: i for i, v in enumerate(search_order)}
    checks: dict[str, list[tuple[str, str, bool]]] = {v: [] for v in plain_ids}
    for a, b in edge_constraints:
        later = a if rank[a] > rank[b] else b
        checks[later].append((a, b, True))
    for a, b in path_constraints:
        later = a if rank[a] > rank[b] else b
        checks[later].append((a, b, False))

    w_edges = w.edges
    assignment: Mapping = {}
    used: set[str] = set()
    found: list[Mapping] = []

    def extend(depth: int) -> None:
        if depth == len(search_order):
            found.append(dict(assignment))
            return
        v = search_order[depth]
        for u in candidates[v]:
            if u in used:
                continue
            ok = True
            for a, b, is_edge in checks[v]:
                ua = u if a == v else assignment[a]
                ub = u if b == v else assignment[b]
                if is_edge:
                    if (ua, ub) not in w_edges:
                        ok = False
                        break
                else:
                    if ua == ub or not r.reachable(ua, ub):
                        ok = False
                        break
            if not ok:
                continue
            assignment[v] = u
            used.add(u)
            extend(depth + 1)
            used.discard(u)
            del assignment[v]

    extend(0)
    found.sort(key=lambda m: tuple(ordinal[m[v]] for v in plain_ids))
    return found
