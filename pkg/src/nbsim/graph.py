"""Workflow and query DAGs over notebook contents, plus topology signatures.

A workflow graph has one code node per cell (chained in execution order, which
is document order), one data node per table, and one output node per output
record. Query graphs share the shape but may additionally contain wildcard
nodes, each standing for a directed path between its neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

from .errors import CycleDetected, GraphConstructionError, InvalidQuery
from .ingest import detect_table_refs, load_table_csv
from .model import Notebook, NotebookId, OutputKind, TableData, validate_notebook


class NodeLabel(Enum):
    CODE = "code"
    DATA = "data"
    OUTPUT = "output"
    WILDCARD = "any"

    @classmethod
    def parse(cls, text: str) -> "NodeLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown node label: {text!r}") from None


_LABEL_RANK = {
    NodeLabel.CODE: 0,
    NodeLabel.DATA: 1,
    NodeLabel.OUTPUT: 2,
    NodeLabel.WILDCARD: 3,
}

Attribute = Union[str, TableData, OutputKind, None]


@dataclass(frozen=True)
class Node:
    """One graph node; `pos` is a stable ordinal within the node's label class."""

    id: str
    label: NodeLabel
    pos: int
    attribute: Attribute = None


@dataclass(frozen=True)
class WorkflowGraph:
    owner: NotebookId
    nodes: tuple[Node, ...]
    edges: frozenset[tuple[str, str]]
    libraries: frozenset[str] = frozenset()

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def by_label(self, label: NodeLabel) -> tuple[Node, ...]:
        return tuple(
            sorted((n for n in self.nodes if n.label == label), key=lambda n: n.pos)
        )


@dataclass(frozen=True)
class QueryGraph:
    nodes: tuple[Node, ...]
    edges: frozenset[tuple[str, str]]
    libraries: frozenset[str] = frozenset()

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def plain_nodes(self) -> tuple[Node, ...]:
        """Non-wildcard nodes in construction order."""
        return tuple(n for n in self.nodes if n.label is not NodeLabel.WILDCARD)

    def wildcard_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.label is NodeLabel.WILDCARD)


Graph = Union[WorkflowGraph, QueryGraph]


@dataclass(frozen=True)
class TopologySignature:
    """Per-label node counts and maximum in/out degree of a graph.

    For query graphs, wildcard nodes are excluded from the counts and their
    incident edges are replaced by direct in-neighbor -> out-neighbor edges for
    degree purposes, a conservative lower bound on what a match requires.
    """

    code: int
    data: int
    output: int
    max_in: int
    max_out: int

    def count(self, label: NodeLabel) -> int:
        return {NodeLabel.CODE: self.code, NodeLabel.DATA: self.data, NodeLabel.OUTPUT: self.output}[label]

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "data": self.data,
            "output": self.output,
            "max_in": self.max_in,
            "max_out": self.max_out,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TopologySignature":
        return cls(
            code=int(data["code"]),
            data=int(data["data"]),
            output=int(data["output"]),
            max_in=int(data["max_in"]),
            max_out=int(data["max_out"]),
        )


def successors(g: Graph) -> dict[str, tuple[str, ...]]:
    out: dict[str, list[str]] = {n.id: [] for n in g.nodes}
    for a, b in g.edges:
        out[a].append(b)
    order = {n.id: i for i, n in enumerate(g.nodes)}
    return {k: tuple(sorted(v, key=order.__getitem__)) for k, v in out.items()}


def predecessors(g: Graph) -> dict[str, tuple[str, ...]]:
    inc: dict[str, list[str]] = {n.id: [] for n in g.nodes}
    for a, b in g.edges:
        inc[b].append(a)
    order = {n.id: i for i, n in enumerate(g.nodes)}
    return {k: tuple(sorted(v, key=order.__getitem__)) for k, v in inc.items()}


def _topo_order(ids: list[str], edges: Iterable[tuple[str, str]]) -> list[str]:
    """Kahn's algorithm; raises CycleDetected with a witness cycle."""
    indegree = {i: 0 for i in ids}
    succ: dict[str, list[str]] = {i: [] for i in ids}
    for a, b in edges:
        succ[a].append(b)
        indegree[b] += 1
    ready = [i for i in ids if indegree[i] == 0]
    order: list[str] = []
    while ready:
        node = ready.pop()
        order.append(node)
        for nxt in succ[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    if len(order) < len(ids):
        remaining = {i for i in ids if indegree[i] > 0}
        witness = _find_cycle(remaining, succ)
        raise CycleDetected(witness)
    return order


def _find_cycle(remaining: set[str], succ: dict[str, list[str]]) -> list[str]:
    start = sorted(remaining)[0]
    seen: list[str] = []
    node = start
    while node not in seen:
        seen.append(node)
        node = sorted(n for n in succ[node] if n in remaining)[0]
    return seen[seen.index(node):] + [node]


def assert_dag(g: Graph) -> None:
    """Raise CycleDetected unless the graph has no directed cycle."""
    _topo_order([n.id for n in g.nodes], g.edges)


def topology_signature(g: Graph) -> TopologySignature:
    nodes = list(g.nodes)
    wild = {n.id for n in nodes if n.label is NodeLabel.WILDCARD}
    plain = [n for n in nodes if n.id not in wild]
    counts = {NodeLabel.CODE: 0, NodeLabel.DATA: 0, NodeLabel.OUTPUT: 0}
    for n in plain:
        counts[n.label] += 1
    indeg: dict[str, int] = {n.id: 0 for n in plain}
    outdeg: dict[str, int] = {n.id: 0 for n in plain}
    for a, b in g.edges:
        if a not in wild and b not in wild:
            outdeg[a] += 1
            indeg[b] += 1
    # A wildcard path needs one edge out of its in-neighbor's image and one
    # into its out-neighbor's image, but those edges may coincide with the
    # ones direct query edges already demand (paths through several wildcards
    # may even share them), so the demand is a floor of 1, not a sum.
    for a, b in g.edges:
        if b in wild and a not in wild:
            outdeg[a] = max(outdeg[a], 1)
        if a in wild and b not in wild:
            indeg[b] = max(indeg[b], 1)
    return TopologySignature(
        code=counts[NodeLabel.CODE],
        data=counts[NodeLabel.DATA],
        output=counts[NodeLabel.OUTPUT],
        max_in=max(indeg.values(), default=0),
        max_out=max(outdeg.values(), default=0),
    )


def build_workflow_graph(n: Notebook) -> WorkflowGraph:
    """Convert a notebook into its workflow DAG.

    Code nodes are chained in cell order. Each table entry pairs with the cell
    that writes its name (k-th same-name entry with the k-th write); the writer
    gets a code->data edge and later readers get data->code edges, up to the
    name's next write. A table that is never written attaches code->data at its
    first mention instead. Output nodes hang off their producing cell.
    """
    problems = validate_notebook(n)
    if problems:
        raise GraphConstructionError("invalid notebook: " + "; ".join(problems))

    nodes: list[Node] = []
    edges: set[tuple[str, str]] = set()
    for cell in n.cells:
        nodes.append(Node(id=f"c{cell.index}", label=NodeLabel.CODE, pos=cell.index, attribute=cell.source))
        if cell.index > 0:
            edges.add((f"c{cell.index - 1}", f"c{cell.index}"))

    table_names = {t.name for t in n.tables}
    known: set[str] = set(table_names)
    reads_at: dict[str, list[int]] = {}
    writes_at: dict[str, list[int]] = {}
    for cell in n.cells:
        reads, writes = detect_table_refs(cell.source, known)
        known |= writes
        for name in reads:
            reads_at.setdefault(name, []).append(cell.index)
        for name in writes:
            writes_at.setdefault(name, []).append(cell.index)

    entries_by_name: dict[str, list[int]] = {}
    for j, t in enumerate(n.tables):
        entries_by_name.setdefault(t.name, []).append(j)

    for name, entry_indices in entries_by_name.items():
        write_cells = writes_at.get(name, [])
        read_cells = reads_at.get(name, [])
        if not write_cells:
            if len(entry_indices) > 1:
                raise GraphConstructionError(
                    f"table '{name}' has {len(entry_indices)} entries but no writing cell"
                )
            if not read_cells:
                raise GraphConstructionError(
                    f"table '{name}' is never referenced by any cell"
                )
            j = entry_indices[0]
            first = read_cells[0]
            edges.add((f"c{first}", f"d{j}"))
            for r in read_cells[1:]:
                edges.add((f"d{j}", f"c{r}"))
            continue
        if len(entry_indices) > len(write_cells):
            raise GraphConstructionError(
                f"table '{name}' has {len(entry_indices)} entries but only "
                f"{len(write_cells)} writing cells"
            )
        boundaries = write_cells[: len(entry_indices)]
        for version, j in enumerate(entry_indices):
            writer = boundaries[version]
            edges.add((f"c{writer}", f"d{j}"))
            upper = boundaries[version + 1] if version + 1 < len(boundaries) else None
            for r in read_cells:
                # Reads in the rewriting cell itself refer to the old version.
                if r > writer and (upper is None or r <= upper):
                    edges.add((f"d{j}", f"c{r}"))

    for j, t in enumerate(n.tables):
        nodes.append(Node(id=f"d{j}", label=NodeLabel.DATA, pos=j, attribute=t))

    for r, (cell_index, kind) in enumerate(n.outputs):
        nodes.append(Node(id=f"o{r}", label=NodeLabel.OUTPUT, pos=r, attribute=kind))
        edges.add((f"c{cell_index}", f"o{r}"))

    graph = WorkflowGraph(
        owner=n.id,
        nodes=tuple(nodes),
        edges=frozenset(edges),
        libraries=n.libraries,
    )
    try:
        assert_dag(graph)
    except CycleDetected as exc:
        raise GraphConstructionError(f"construction produced a cycle: {exc}") from exc
    return graph


def graph_facets(
    g: WorkflowGraph,
) -> tuple[str, tuple[TableData, ...], tuple[OutputKind, ...], frozenset[str]]:
    """Recover the notebook-level facets (code, tables, outputs, libraries)."""
    code = "\n".join(n.attribute for n in g.by_label(NodeLabel.CODE))
    tables = tuple(n.attribute for n in g.by_label(NodeLabel.DATA))
    outputs = tuple(n.attribute for n in g.by_label(NodeLabel.OUTPUT))
    return code, tables, outputs, g.libraries


def validate_query_graph(q: QueryGraph) -> list[str]:
    """Check wildcard rules, DAG-ness, and label/attribute agreement."""
    problems: list[str] = []
    ids = [n.id for n in q.nodes]
    if len(set(ids)) != len(ids):
        problems.append("duplicate node ids")
        return problems
    id_set = set(ids)
    for a, b in q.edges:
        if a not in id_set or b not in id_set:
            problems.append(f"edge ({a}, {b}) references unknown node")
        elif a == b:
            problems.append(f"self-loop on node {a}")
    if problems:
        return problems
    node_of = q.node_map()
    for n in q.nodes:
        if n.label is NodeLabel.WILDCARD:
            if n.attribute is not None:
                problems.append(f"wildcard node {n.id} carries an attribute")
        elif n.label is NodeLabel.CODE and not isinstance(n.attribute, str):
            problems.append(f"code node {n.id} needs source text")
        elif n.label is NodeLabel.DATA and not isinstance(n.attribute, TableData):
            problems.append(f"data node {n.id} needs table data")
        elif n.label is NodeLabel.OUTPUT and not isinstance(n.attribute, OutputKind):
            problems.append(f"output node {n.id} needs an output kind")
    wild = {n.id for n in q.nodes if n.label is NodeLabel.WILDCARD}
    for a, b in q.edges:
        if a in wild and b in wild:
            problems.append(f"adjacent wildcard nodes {a} and {b}")
    has_in = {w: False for w in wild}
    has_out = {w: False for w in wild}
    for a, b in q.edges:
        if b in wild:
            has_in[b] = True
        if a in wild:
            has_out[a] = True
    for w in sorted(wild):
        if not has_in[w] or not has_out[w]:
            problems.append(f"wildcard node {w} must have both in- and out-edges")
    try:
        assert_dag(q)
    except CycleDetected as exc:
        problems.append(str(exc))
    return problems


def ensure_valid_query(q: QueryGraph) -> None:
    problems = validate_query_graph(q)
    if problems:
        raise InvalidQuery("; ".join(problems))


def query_graph_from_json(data: dict, base_dir: str | Path | None = None) -> QueryGraph:
    """Build a query graph from its JSON form.

    Nodes carry `id`, `label` in {code, data, output, any}, and an `attribute`:
    inline code text, a table CSV path (resolved against base_dir), or an
    output kind name. `edges` is a list of [from, to] pairs and `libraries` a
    list of names.
    """
    if not isinstance(data, dict):
        raise InvalidQuery("query graph must be a JSON object")
    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list):
        raise InvalidQuery("query graph needs a 'nodes' array")
    counters = {label: 0 for label in NodeLabel}
    nodes: list[Node] = []
    for raw in raw_nodes:
        try:
            label = NodeLabel.parse(raw["label"])
            node_id = str(raw["id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidQuery(f"bad query node: {exc}") from exc
        attribute: Attribute = None
        if label is NodeLabel.CODE:
            attribute = str(raw.get("attribute", ""))
        elif label is NodeLabel.DATA:
            path = raw.get("attribute")
            if not isinstance(path, str):
                raise InvalidQuery(f"data node {node_id} needs a table file path")
            full = Path(base_dir) / path if base_dir is not None else Path(path)
            table = load_table_csv(full, name=Path(path).stem)
            attribute = table
        elif label is NodeLabel.OUTPUT:
            try:
                attribute = OutputKind.parse(str(raw.get("attribute")))
            except ValueError as exc:
                raise InvalidQuery(str(exc)) from exc
        nodes.append(Node(id=node_id, label=label, pos=counters[label], attribute=attribute))
        counters[label] += 1
    raw_edges = data.get("edges", [])
    edges: set[tuple[str, str]] = set()
    for pair in raw_edges:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise InvalidQuery(f"bad edge entry: {pair!r}")
        edges.add((str(pair[0]), str(pair[1])))
    libraries = frozenset(str(x) for x in data.get("libraries", []))
    q = QueryGraph(nodes=tuple(nodes), edges=frozenset(edges), libraries=libraries)
    ensure_valid_query(q)
    return q


def sorted_nodes(g: Graph) -> list[Node]:
    """Canonical node order: label class first, then stable position."""
    return sorted(g.nodes, key=lambda n: (_LABEL_RANK[n.label], n.pos))


def sorted_edges(g: Graph) -> list[tuple[str, str]]:
    return sorted(g.edges)
