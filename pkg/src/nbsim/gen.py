"""Deterministic synthetic corpus and query generation for tests and benchmarks.

Everything derives from a caller-supplied seed: the same seed yields the same
notebooks, the same graphs, and (through the canonical store serialization) a
byte-identical corpus directory. Content is duplicated across notebooks on
purpose — shared cells and shared tables give the similarity cache something
to hit.
"""

from __future__ import annotations

import json
import random
from dataclasses import replace
from pathlib import Path

from .graph import (
    Node,
    NodeLabel,
    QueryGraph,
    WorkflowGraph,
    build_workflow_graph,
    predecessors,
    successors,
)
from .ingest import parse_notebook
from .model import Notebook, OutputKind, TableData
from .search import SetQuery
from .store import CorpusManifest, save_corpus

LIBRARY_POOL = [
    "pandas",
    "numpy",
    "matplotlib",
    "sklearn",
    "scipy",
    "seaborn",
    "statsmodels",
    "xgboost",
    "torch",
    "requests",
    "plotly",
    "nltk",
]

WORD_POOL = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lam", "mu", "nu", "xi", "omicron", "pi", "rho",
    "sigma", "tau", "upsilon", "red", "green", "blue", "north", "south",
]

FIXED_SNIPPETS = [
    "model.fit(X_train, y_train)",
    "score = model.score(X_test, y_test)",
    "plt.plot(history)",
    "plt.show()",
    "X_train, X_test = split(X)",
    "result = run_pipeline(cfg)",
    "summary = describe(result)",
    "log.info('done')",
]

_OUTPUT_WEIGHTS = [
    (OutputKind.TEXT, 5),
    (OutputKind.PNG, 3),
    (OutputKind.DATAFRAME, 2),
]


def _pick_kind(rng: random.Random) -> OutputKind:
    total = sum(weight for _, weight in _OUTPUT_WEIGHTS)
    roll = rng.randrange(total)
    for kind, weight in _OUTPUT_WEIGHTS:
        roll -= weight
        if roll < 0:
            return kind
    return OutputKind.TEXT


def _random_table(rng: random.Random, name: str) -> TableData:
    n_columns = rng.randint(1, 4)
    columns = []
    for c in range(n_columns):
        n_values = rng.randint(2, 8)
        values = set()
        for _ in range(n_values):
            if rng.random() < 0.5:
                values.add(rng.choice(WORD_POOL))
            else:
                values.add(str(rng.randint(0, 99)))
        columns.append((f"col{c}", frozenset(values)))
    return TableData(name=name, columns=tuple(columns))


def _shared_pools(rng: random.Random) -> tuple[list[TableData], list[str]]:
    tables = [_random_table(rng, f"shared{i}") for i in range(8)]
    snippets = list(FIXED_SNIPPETS)
    for i in range(12):
        a, b = rng.randint(1, 9), rng.randint(1, 9)
        snippets.append(f"x{i} = {a} * value + {b}")
    return tables, snippets


def _output_record(kind: OutputKind, rng: random.Random) -> dict:
    if kind is OutputKind.PNG:
        return {"output_type": "display_data", "data": {"image/png": "iVBORw0KGgo="}}
    if kind is OutputKind.DATAFRAME:
        return {
            "output_type": "execute_result",
            "data": {"text/html": "<table><tr><td>0</td></tr></table>"},
            "execution_count": rng.randint(1, 50),
        }
    return {"output_type": "stream", "name": "stdout", "text": "ok\n"}


def generate_notebook(
    rng: random.Random,
    notebook_id: str,
    shared_tables: list[TableData],
    shared_snippets: list[str],
) -> Notebook:
    """Generate one synthetic notebook: 5-30 cells, 0-5 tables, 0-10 outputs."""
    n_cells = rng.randint(5, 30)
    n_tables = rng.randint(0, min(5, n_cells - 1))
    libraries = rng.sample(LIBRARY_POOL, rng.randint(2, 6))

    tables: list[TableData] = []
    for t in range(n_tables):
        name = f"t{t}"
        if rng.random() < 0.4:
            tables.append(replace(rng.choice(shared_tables), name=name))
        else:
            tables.append(_random_table(rng, name))

    creation_cells = sorted(rng.sample(range(1, n_cells), n_tables)) if n_tables else []
    cell_lines: list[list[str]] = [[] for _ in range(n_cells)]
    cell_lines[0] = [f"import {lib}" for lib in libraries]

    for t, cell_index in enumerate(creation_cells):
        name = tables[t].name
        if t > 0 and rng.random() < 0.4:
            parent = tables[rng.randrange(t)].name
            cell_lines[cell_index].append(f"{name} = {parent}.dropna()")
        else:
            cell_lines[cell_index].append(f"{name} = pd.read_csv('{name}.csv')")
        readers = rng.randint(0, 3)
        candidates = range(cell_index + 1, n_cells)
        for reader in sorted(rng.sample(candidates, min(readers, len(candidates)))):
            cell_lines[reader].append(f"print({name}.describe())")

    for index in range(n_cells):
        fillers = rng.randint(0 if cell_lines[index] else 1, 2)
        for _ in range(fillers):
            cell_lines[index].append(rng.choice(shared_snippets))

    n_outputs = rng.randint(0, 10)
    outputs: list[tuple[int, OutputKind]] = []
    for _ in range(n_outputs):
        outputs.append((rng.randrange(n_cells), _pick_kind(rng)))
    outputs.sort(key=lambda pair: pair[0])

    cells_doc = []
    for index in range(n_cells):
        records = [
            _output_record(kind, rng) for cell, kind in outputs if cell == index
        ]
        cells_doc.append(
            {
                "cell_type": "code",
                "execution_count": None,
                "metadata": {},
                "source": "\n".join(cell_lines[index]),
                "outputs": records,
            }
        )
    document = {
        "nbformat": 4,
        "nbformat_minor": 5,
        "metadata": {},
        "cells": cells_doc,
    }
    parsed = parse_notebook(json.dumps(document).encode("utf-8"), notebook_id)
    return replace(parsed, tables=tuple(tables))


def generate_corpus(
    count: int, seed: int, out_dir: str | Path | None = None
) -> tuple[list[WorkflowGraph], CorpusManifest | None]:
    """Generate `count` notebooks, build their graphs, optionally save them."""
    rng = random.Random(seed)
    shared_tables, shared_snippets = _shared_pools(rng)
    graphs: list[WorkflowGraph] = []
    for i in range(count):
        notebook = generate_notebook(rng, f"nb{i:04d}", shared_tables, shared_snippets)
        graphs.append(build_workflow_graph(notebook))
    manifest = save_corpus(graphs, out_dir) if out_dir is not None else None
    return graphs, manifest


def _perturb_code(rng: random.Random, source: str) -> str:
    if rng.random() < 0.25:
        return source + "\nextra = 1"
    return source


def _perturb_table(rng: random.Random, table: TableData) -> TableData:
    if len(table.columns) > 1 and rng.random() < 0.3:
        return replace(table, columns=table.columns[:-1])
    return table


def generate_query(rng: random.Random, graphs: list[WorkflowGraph]) -> QueryGraph:
    """Cut a connected fragment of a random graph into a query.

    The fragment is a run of consecutive code cells plus a sample of their
    attached data/output nodes; interior unattached code nodes may become
    wildcards. Attributes are sometimes perturbed so similarities fall
    below 1.
    """
    g = graphs[rng.randrange(len(graphs))]
    code_nodes = g.by_label(NodeLabel.CODE)
    length = rng.randint(1, min(4, len(code_nodes)))
    start = rng.randrange(len(code_nodes) - length + 1)
    window = list(code_nodes[start : start + length])

    nodes: list[Node] = []
    edges: set[tuple[str, str]] = set()
    qid_of: dict[str, str] = {}
    counters = {label: 0 for label in NodeLabel}

    def add_node(label: NodeLabel, attribute) -> str:
        qid = f"q{len(nodes)}"
        nodes.append(Node(id=qid, label=label, pos=counters[label], attribute=attribute))
        counters[label] += 1
        return qid

    for w_node in window:
        qid_of[w_node.id] = add_node(NodeLabel.CODE, _perturb_code(rng, w_node.attribute))
    for prev, then in zip(window, window[1:]):
        edges.add((qid_of[prev.id], qid_of[then.id]))

    node_of = g.node_map()
    succ = successors(g)
    pred = predecessors(g)
    plain_budget = 6
    attached: set[str] = set()
    for w_node in window:
        for neighbor in succ[w_node.id]:
            target = node_of[neighbor]
            if target.label is NodeLabel.CODE or neighbor in attached:
                continue
            if len([n for n in nodes if n.label is not NodeLabel.WILDCARD]) >= plain_budget:
                break
            if rng.random() < 0.45:
                attached.add(neighbor)
                if target.label is NodeLabel.DATA:
                    qid = add_node(NodeLabel.DATA, _perturb_table(rng, target.attribute))
                else:
                    qid = add_node(NodeLabel.OUTPUT, target.attribute)
                edges.add((qid_of[w_node.id], qid))
        for neighbor in pred[w_node.id]:
            source = node_of[neighbor]
            if source.label is not NodeLabel.DATA or neighbor in attached:
                continue
            if len([n for n in nodes if n.label is not NodeLabel.WILDCARD]) >= plain_budget:
                break
            if rng.random() < 0.35:
                attached.add(neighbor)
                qid = add_node(NodeLabel.DATA, _perturb_table(rng, source.attribute))
                edges.add((qid, qid_of[w_node.id]))

    # Turn interior, unattached code nodes into wildcards (never two adjacent).
    wild_budget = rng.choice([0, 0, 1, 1, 2])
    interior = []
    for offset in range(1, length - 1):
        w_node = window[offset]
        qid = qid_of[w_node.id]
        if any(qid in edge for edge in edges if edge not in
               {(qid_of[window[offset - 1].id], qid), (qid, qid_of[window[offset + 1].id])}):
            continue
        interior.append(offset)
    chosen: list[int] = []
    for offset in interior:
        if len(chosen) >= wild_budget:
            break
        if chosen and offset - chosen[-1] < 2:
            continue
        chosen.append(offset)
    if chosen:
        replaced = {qid_of[window[offset].id] for offset in chosen}
        nodes = [
            replace(n, label=NodeLabel.WILDCARD, attribute=None)
            if n.id in replaced
            else n
            for n in nodes
        ]

    libraries = {lib for lib in sorted(g.libraries) if rng.random() < 0.7}
    if rng.random() < 0.2:
        libraries.add("zlib")
    return QueryGraph(nodes=tuple(nodes), edges=frozenset(edges), libraries=frozenset(libraries))


def generate_queries(seed: int, graphs: list[WorkflowGraph], count: int) -> list[QueryGraph]:
    rng = random.Random(seed)
    return [generate_query(rng, graphs) for _ in range(count)]


def generate_set_query(rng: random.Random, graphs: list[WorkflowGraph]) -> SetQuery:
    """Sample a facet-level query from a random graph's contents."""
    g = graphs[rng.randrange(len(graphs))]
    code_nodes = g.by_label(NodeLabel.CODE)
    picked = rng.sample(code_nodes, rng.randint(1, min(3, len(code_nodes))))
    code = "\n".join(n.attribute for n in sorted(picked, key=lambda n: n.pos))
    tables = tuple(
        _perturb_table(rng, n.attribute)
        for n in g.by_label(NodeLabel.DATA)
        if rng.random() < 0.5
    )
    outputs = tuple(
        n.attribute for n in g.by_label(NodeLabel.OUTPUT) if rng.random() < 0.4
    )
    libraries = frozenset(lib for lib in sorted(g.libraries) if rng.random() < 0.7)
    return SetQuery(code=code, tables=tables, outputs=outputs, libraries=libraries)


# --- query files ----------------------------------------------------------------


def query_graph_to_json(q: QueryGraph, directory: Path, stem: str) -> dict:
    """Serialize a query graph, writing table attributes as CSV files."""
    from .store import _write_table_csv  # same canonical CSV form as the corpus

    nodes = []
    for n in q.nodes:
        entry: dict = {"id": n.id, "label": n.label.value}
        if n.label is NodeLabel.CODE:
            entry["attribute"] = n.attribute
        elif n.label is NodeLabel.DATA:
            rel = f"{stem}_tables/{n.id}.csv"
            _write_table_csv(n.attribute, directory / rel)
            entry["attribute"] = rel
        elif n.label is NodeLabel.OUTPUT:
            entry["attribute"] = n.attribute.value
        nodes.append(entry)
    return {
        "nodes": nodes,
        "edges": [list(e) for e in sorted(q.edges)],
        "libraries": sorted(q.libraries),
    }


def write_query_file(
    q: QueryGraph,
    path: str | Path,
    k: int = 10,
    weights: dict | None = None,
    theta: str = "data",
) -> None:
    """Write a graph-mode query file next to its table CSVs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "mode": "graph",
        "k": k,
        "theta": theta,
        "graph": query_graph_to_json(q, path.parent, path.stem),
    }
    if weights is not None:
        doc["weights"] = weights
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
