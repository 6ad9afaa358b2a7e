"""File-based corpus persistence.

Layout of one corpus directory:

    manifest.json            version, per-notebook graph paths and signatures
    graphs/<id>.json         nodes, edges, libraries (canonical ordering)
    tables/<id>/<name>.csv   one file per data node's table

The manifest and signatures load eagerly; graph bodies load lazily on first
use, so a search that prunes a notebook by its signature never reads its
graph file.
"""

from __future__ import annotations

import csv
import json
import os
import re
import threading
from dataclasses import dataclass
from itertools import zip_longest
from pathlib import Path
from typing import Iterable

from .errors import CorruptGraph, StoreError, VersionMismatch
from .graph import (
    Node,
    NodeLabel,
    TopologySignature,
    WorkflowGraph,
    sorted_edges,
    sorted_nodes,
    topology_signature,
)
from .ingest import load_table_csv
from .model import NotebookId, OutputKind, TableData

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    id: NotebookId
    graph_path: str
    table_paths: tuple[str, ...]
    signature: TopologySignature


@dataclass(frozen=True)
class CorpusManifest:
    version: int
    entries: tuple[ManifestEntry, ...]


def _safe_name(name: str) -> str:
    cleaned = re.sub(r"[^\w.\-]", "_", name)
    return cleaned or "table"


def _write_table_csv(table: TableData, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not table.columns:
        path.write_text("", encoding="utf-8")
        return
    header = list(table.column_names())
    value_columns = [sorted(values) for _, values in table.columns]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(zip_longest(*value_columns, fillvalue=""))


def _node_to_json(node: Node, table_path: str | None) -> dict:
    data: dict = {"id": node.id, "label": node.label.value, "pos": node.pos}
    if node.label is NodeLabel.CODE:
        data["source"] = node.attribute
    elif node.label is NodeLabel.DATA:
        data["name"] = node.attribute.name
        data["table"] = table_path
    elif node.label is NodeLabel.OUTPUT:
        data["kind"] = node.attribute.value
    return data


def save_corpus(graphs: Iterable[WorkflowGraph], directory: str | Path) -> CorpusManifest:
    """Write every graph (and its tables) under `directory`, manifest last.

    Serialization is canonical — nodes sorted by (label, position), edges and
    libraries sorted — so identical corpora produce byte-identical trees. The
    manifest is written atomically (temp file + rename).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "graphs").mkdir(exist_ok=True)
    entries: list[ManifestEntry] = []
    for g in sorted(graphs, key=lambda g: g.owner):
        table_paths: dict[str, str] = {}
        used_names: set[str] = set()
        for node in sorted_nodes(g):
            if node.label is not NodeLabel.DATA:
                continue
            base = _safe_name(node.attribute.name)
            filename = f"{base}.csv"
            if filename in used_names:
                filename = f"{base}__{node.id}.csv"
            used_names.add(filename)
            rel = f"tables/{g.owner}/{filename}"
            _write_table_csv(node.attribute, directory / rel)
            table_paths[node.id] = rel
        graph_doc = {
            "owner": g.owner,
            "nodes": [
                _node_to_json(n, table_paths.get(n.id)) for n in sorted_nodes(g)
            ],
            "edges": [list(e) for e in sorted_edges(g)],
            "libraries": sorted(g.libraries),
        }
        rel_graph = f"graphs/{g.owner}.json"
        (directory / rel_graph).write_text(
            json.dumps(graph_doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
        entries.append(
            ManifestEntry(
                id=g.owner,
                graph_path=rel_graph,
                table_paths=tuple(sorted(table_paths.values())),
                signature=topology_signature(g),
            )
        )
    manifest = CorpusManifest(version=FORMAT_VERSION, entries=tuple(entries))
    doc = {
        "version": manifest.version,
        "notebooks": [
            {
                "id": e.id,
                "graph": e.graph_path,
                "tables": list(e.table_paths),
                "signature": e.signature.to_json(),
            }
            for e in manifest.entries
        ],
    }
    tmp = directory / "manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, directory / "manifest.json")
    return manifest


def _node_from_json(data: dict, base_dir: Path) -> Node:
    label = NodeLabel(data["label"])
    attribute = None
    if label is NodeLabel.CODE:
        attribute = data["source"]
    elif label is NodeLabel.DATA:
        attribute = load_table_csv(base_dir / data["table"], name=data["name"])
    elif label is NodeLabel.OUTPUT:
        attribute = OutputKind(data["kind"])
    return Node(id=data["id"], label=label, pos=int(data["pos"]), attribute=attribute)


class LoadedCorpus:
    """A corpus directory with eager signatures and lazy graph bodies.

    `bodies_loaded` records which notebooks' graph files have been read; it
    backs the guarantee that signature-pruned notebooks stay untouched.
    """

    def __init__(self, directory: Path, manifest: CorpusManifest):
        self.directory = directory
        self.manifest = manifest
        self._by_id = {e.id: e for e in manifest.entries}
        self._graphs: dict[NotebookId, WorkflowGraph] = {}
        self._lock = threading.Lock()
        self.bodies_loaded: set[NotebookId] = set()

    def ids(self) -> list[NotebookId]:
        return [e.id for e in self.manifest.entries]

    def signature(self, notebook_id: NotebookId) -> TopologySignature:
        return self._by_id[notebook_id].signature

    def graph(self, notebook_id: NotebookId) -> WorkflowGraph:
        with self._lock:
            cached = self._graphs.get(notebook_id)
        if cached is not None:
            return cached
        entry = self._by_id[notebook_id]
        try:
            raw = (self.directory / entry.graph_path).read_text(encoding="utf-8")
            data = json.loads(raw)
            nodes = tuple(_node_from_json(n, self.directory) for n in data["nodes"])
            edges = frozenset((str(a), str(b)) for a, b in data["edges"])
            graph = WorkflowGraph(
                owner=data["owner"],
                nodes=nodes,
                edges=edges,
                libraries=frozenset(data["libraries"]),
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CorruptGraph(notebook_id, exc) from exc
        with self._lock:
            self._graphs[notebook_id] = graph
            self.bodies_loaded.add(notebook_id)
        return graph


def load_corpus(directory: str | Path) -> LoadedCorpus:
    """Open a corpus directory; manifest and signatures load now, bodies later."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise StoreError(f"cannot read corpus manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StoreError(f"corpus manifest is not valid JSON: {exc}") from exc
    version = data.get("version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"corpus format version {version!r} unsupported (expected {FORMAT_VERSION})"
        )
    try:
        entries = tuple(
            ManifestEntry(
                id=str(nb["id"]),
                graph_path=str(nb["graph"]),
                table_paths=tuple(nb.get("tables", [])),
                signature=TopologySignature.from_json(nb["signature"]),
            )
            for nb in data["notebooks"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreError(f"corpus manifest is malformed: {exc}") from exc
    return LoadedCorpus(directory, CorpusManifest(version=version, entries=entries))


class InMemoryCorpus:
    """Corpus interface over graphs already in memory (tests, generation)."""

    def __init__(self, graphs: Iterable[WorkflowGraph]):
        self._graphs = {g.owner: g for g in graphs}
        self._order = sorted(self._graphs)
        self._signatures = {
            owner: topology_signature(g) for owner, g in self._graphs.items()
        }
        self.bodies_loaded: set[NotebookId] = set(self._order)

    def ids(self) -> list[NotebookId]:
        return list(self._order)

    def signature(self, notebook_id: NotebookId) -> TopologySignature:
        return self._signatures[notebook_id]

    def graph(self, notebook_id: NotebookId) -> WorkflowGraph:
        return self._graphs[notebook_id]


def verify_index(corpus: LoadedCorpus) -> list[NotebookId]:
    """Recompute each notebook's signature and report any that went stale."""
    stale: list[NotebookId] = []
    for notebook_id in corpus.ids():
        stored = corpus.signature(notebook_id)
        if topology_signature(corpus.graph(notebook_id)) != stored:
            stale.append(notebook_id)
    return stale
