"""Shared builders for notebooks, documents, and random graphs."""

from __future__ import annotations

import json
import random

import pytest

from nbsim.graph import Node, NodeLabel, QueryGraph, WorkflowGraph
from nbsim.model import Cell, Notebook, OutputKind, TableData

PNG_RECORD = {"output_type": "display_data", "data": {"image/png": "iVBORw0KGgo="}}
DATAFRAME_RECORD = {
    "output_type": "execute_result",
    "data": {"text/html": "<table><tr><td>1</td></tr></table>"},
}
TEXT_RECORD = {"output_type": "stream", "name": "stdout", "text": "hello\n"}

_RECORD_OF = {
    OutputKind.PNG: PNG_RECORD,
    OutputKind.DATAFRAME: DATAFRAME_RECORD,
    OutputKind.TEXT: TEXT_RECORD,
}


def make_document(cell_sources, outputs_by_cell=None, extra_cells=()):
    """Build a notebook document (bytes) from code cell sources.

    outputs_by_cell maps a cell index to a list of OutputKind values;
    extra_cells appends raw cell dicts (e.g. markdown) after the code cells.
    """
    outputs_by_cell = outputs_by_cell or {}
    cells = []
    for i, source in enumerate(cell_sources):
        cells.append(
            {
                "cell_type": "code",
                "metadata": {},
                "source": source,
                "outputs": [_RECORD_OF[k] for k in outputs_by_cell.get(i, [])],
            }
        )
    cells.extend(extra_cells)
    return json.dumps({"nbformat": 4, "cells": cells}).encode("utf-8")


def table(name, *columns):
    """table('t', ('a', {'1','2'}), ...) -> TableData"""
    return TableData(
        name=name,
        columns=tuple((c, frozenset(values)) for c, values in columns),
    )


def notebook(id="nb", sources=("pass",), tables=(), outputs=(), libraries=()):
    return Notebook(
        id=id,
        cells=tuple(Cell(i, s) for i, s in enumerate(sources)),
        tables=tuple(tables),
        outputs=tuple(outputs),
        libraries=frozenset(libraries),
    )


def wnode(node_id, label, pos, attribute=None):
    return Node(id=node_id, label=label, pos=pos, attribute=attribute)


def code_chain_graph(sources, owner="nb", libraries=(), extra_nodes=(), extra_edges=()):
    """Workflow graph with a code chain plus optional extra nodes/edges."""
    nodes = [
        wnode(f"c{i}", NodeLabel.CODE, i, src) for i, src in enumerate(sources)
    ]
    edges = {(f"c{i}", f"c{i+1}") for i in range(len(sources) - 1)}
    nodes.extend(extra_nodes)
    edges.update(extra_edges)
    return WorkflowGraph(
        owner=owner,
        nodes=tuple(nodes),
        edges=frozenset(edges),
        libraries=frozenset(libraries),
    )


_LABEL_CHOICES = [
    NodeLabel.CODE,
    NodeLabel.CODE,
    NodeLabel.DATA,
    NodeLabel.OUTPUT,
]

_ATTR_OF = {
    NodeLabel.CODE: lambda rng: f"stmt_{rng.randint(0, 5)} = f()",
    NodeLabel.DATA: lambda rng: TableData(
        name="t", columns=(("c", frozenset({str(rng.randint(0, 3))})),)
    ),
    NodeLabel.OUTPUT: lambda rng: rng.choice(list(OutputKind)),
}


def random_workflow(rng: random.Random, max_nodes: int = 10) -> WorkflowGraph:
    """Random labeled DAG (edges always point from lower to higher index)."""
    n = rng.randint(1, max_nodes)
    counters = {label: 0 for label in NodeLabel}
    nodes = []
    for i in range(n):
        label = rng.choice(_LABEL_CHOICES)
        nodes.append(
            wnode(f"w{i}", label, counters[label], _ATTR_OF[label](rng))
        )
        counters[label] += 1
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.25:
                edges.add((f"w{i}", f"w{j}"))
    return WorkflowGraph(
        owner="rand", nodes=tuple(nodes), edges=frozenset(edges), libraries=frozenset()
    )


def random_query(rng: random.Random, max_plain: int = 5, max_wild: int = 2) -> QueryGraph:
    """Random query DAG; wildcards bridge plain nodes across an index split."""
    n = rng.randint(1, max_plain)
    counters = {label: 0 for label in NodeLabel}
    nodes = []
    for i in range(n):
        label = rng.choice(_LABEL_CHOICES)
        nodes.append(wnode(f"q{i}", label, counters[label], _ATTR_OF[label](rng)))
        counters[label] += 1
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                edges.add((f"q{i}", f"q{j}"))
    n_wild = rng.randint(0, max_wild) if n >= 2 else 0
    for w in range(n_wild):
        split = rng.randint(1, n - 1)
        wild_id = f"qw{w}"
        nodes.append(wnode(wild_id, NodeLabel.WILDCARD, counters[NodeLabel.WILDCARD]))
        counters[NodeLabel.WILDCARD] += 1
        for i in rng.sample(range(split), rng.randint(1, min(2, split))):
            edges.add((f"q{i}", wild_id))
        for j in rng.sample(range(split, n), rng.randint(1, min(2, n - split))):
            edges.add((wild_id, f"q{j}"))
    return QueryGraph(nodes=tuple(nodes), edges=frozenset(edges), libraries=frozenset())


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
