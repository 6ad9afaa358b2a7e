"""Parse notebook documents into Notebook values and load sidecar table data.

Tables are never obtained by executing notebook code: a per-notebook manifest
maps variable or file names to delimited data files, which are parsed into
per-column distinct-value sets.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .errors import (
    EmptyNotebook,
    MalformedDocument,
    TableLoadError,
    UnknownOutputType,
)
from .model import Cell, Notebook, NotebookId, OutputKind, TableData

log = logging.getLogger(__name__)

# Each pattern must capture, in group 1, a comma-separated list of imported
# module paths; only the root name before the first period is kept.
DEFAULT_IMPORT_PATTERNS = (
    r"^\s*import\s+([\w\. ,]+)",
    r"^\s*from\s+([\w\.]+)\s+import\b",
)

# Call names whose result counts as a table-producing expression.
DEFAULT_TABLE_READERS = (
    "read_csv",
    "read_table",
    "read_excel",
    "read_parquet",
    "read_json",
    "read_sql",
    "read_feather",
    "read_pickle",
    "read_html",
    "DataFrame",
)

_ASSIGN_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?::[^=]+)?=(?![=<>])\s*(.+)$")


@dataclass(frozen=True)
class TableManifest:
    """Maps table variable/file names to paths of delimited data files."""

    entries: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_json(cls, text: str | bytes) -> "TableManifest":
        data = json.loads(text)
        if not isinstance(data, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in data.items()
        ):
            raise MalformedDocument("table manifest must be a flat name->path object")
        return cls(entries=tuple(data.items()))


def canonical_value(raw: str) -> str | None:
    """Trim a cell value and render numbers in plain decimal form.

    Returns None for values that are empty after trimming (treated as missing
    data, never recorded in a column's value set).
    """
    s = raw.strip()
    if not s:
        return None
    try:
        f = float(s)
    except ValueError:
        return s
    if not math.isfinite(f):
        return s
    if f == int(f) and abs(f) < 2**53:
        return str(int(f))
    return repr(f)


def load_table_csv(path: str | Path, name: str) -> TableData:
    """Parse a comma-delimited UTF-8 file (first row = header) into TableData."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TableLoadError(str(path), exc) from exc
    return parse_table_csv(text, name, origin=str(path))


def parse_table_csv(text: str, name: str, origin: str = "<memory>") -> TableData:
    if not text.strip():
        return TableData(name=name, columns=())
    try:
        rows = list(csv.reader(io.StringIO(text)))
    except csv.Error as exc:
        raise TableLoadError(origin, exc) from exc
    header = rows[0]
    values: list[set[str]] = [set() for _ in header]
    for row in rows[1:]:
        for i in range(min(len(row), len(header))):
            v = canonical_value(row[i])
            if v is not None:
                values[i].add(v)
    columns = tuple(
        (column_name.strip(), frozenset(values[i]))
        for i, column_name in enumerate(header)
    )
    return TableData(name=name, columns=columns)


def extract_libraries(
    source: str, patterns: Iterable[str] = DEFAULT_IMPORT_PATTERNS
) -> frozenset[str]:
    """Collect root module names from import statements, line by line."""
    compiled = [re.compile(p) for p in patterns]
    found: set[str] = set()
    for line in source.splitlines():
        for pattern in compiled:
            m = pattern.match(line)
            if not m:
                continue
            for chunk in m.group(1).split(","):
                module = chunk.strip().split(" ")[0]
                root = module.split(".")[0].strip()
                if root:
                    found.add(root)
    return frozenset(found)


def classify_output(record: dict) -> OutputKind:
    """Map one raw output record to its format class.

    Png for image payloads, DataFrame for rendered HTML tables, Text for
    plain-text streams and payloads. Raises UnknownOutputType otherwise;
    callers may skip such records with a warning.
    """
    if not isinstance(record, dict):
        raise UnknownOutputType(f"output record is not an object: {type(record).__name__}")
    output_type = record.get("output_type")
    if output_type == "stream":
        return OutputKind.TEXT
    data = record.get("data")
    if isinstance(data, dict):
        if any(mime.startswith("image/") for mime in data):
            return OutputKind.PNG
        html = data.get("text/html")
        if html is not None:
            payload = "".join(html) if isinstance(html, list) else str(html)
            if "<table" in payload:
                return OutputKind.DATAFRAME
            return OutputKind.TEXT
        if "text/plain" in data:
            return OutputKind.TEXT
    raise UnknownOutputType(f"unrecognized output record (type={output_type!r})")


def _cell_source(cell: dict) -> str:
    source = cell.get("source", "")
    if isinstance(source, list):
        return "".join(source)
    return str(source)


def parse_notebook(document: bytes | str, id: NotebookId) -> Notebook:
    """Parse a notebook document (JSON with a top-level `cells` array).

    Markdown and raw cells are skipped; code cells keep document order and are
    re-indexed contiguously from 0. Output records that cannot be classified
    are skipped with a warning. Tables are left empty until attach_tables.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not UTF-8: {exc}") from exc
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("cells"), list):
        raise MalformedDocument("document has no top-level 'cells' array")

    cells: list[Cell] = []
    outputs: list[tuple[int, OutputKind]] = []
    libraries: set[str] = set()
    for raw_cell in data["cells"]:
        if not isinstance(raw_cell, dict) or raw_cell.get("cell_type") != "code":
            continue
        index = len(cells)
        source = _cell_source(raw_cell)
        cells.append(Cell(index=index, source=source))
        libraries |= extract_libraries(source)
        for record in raw_cell.get("outputs") or ():
            try:
                outputs.append((index, classify_output(record)))
            except UnknownOutputType as exc:
                log.warning("notebook %s cell %d: skipping output: %s", id, index, exc)
    if not cells:
        raise EmptyNotebook(f"notebook {id!r} has no code cells")
    return Notebook(
        id=id,
        cells=tuple(cells),
        outputs=tuple(outputs),
        libraries=frozenset(libraries),
    )


def attach_tables(
    n: Notebook, manifest: TableManifest, base_dir: str | Path | None = None
) -> Notebook:
    """Load every manifest entry and return a notebook with the tables attached.

    Cells, outputs, and libraries are never modified. Paths are resolved
    relative to base_dir when given.
    """
    if not manifest.entries:
        return n
    base = Path(base_dir) if base_dir is not None else None
    loaded = []
    for name, path in manifest.entries:
        full = base / path if base is not None else Path(path)
        loaded.append(load_table_csv(full, name))
    return replace(n, tables=n.tables + tuple(loaded))


def _mention_re(name: str) -> re.Pattern:
    return re.compile(r"(?<![\w])" + re.escape(name) + r"(?![\w])")


def detect_table_refs(
    source: str,
    known: Iterable[str] = (),
    readers: Iterable[str] = DEFAULT_TABLE_READERS,
) -> tuple[frozenset[str], frozenset[str]]:
    """Find table-variable reads and writes in one cell's source.

    writes: names plain-assigned from a table-producing expression — a call to
    one of the reader functions, or an expression mentioning a table variable
    that is already known (or written earlier in the same cell).
    reads: known table names that appear on a line other than one of their own
    defining assignments. Names become known line by line, so a mention before
    the first write is not a read.
    """
    reader_re = re.compile(r"\b(?:" + "|".join(re.escape(r) for r in readers) + r")\s*\(")
    live: set[str] = set(known)
    reads: set[str] = set()
    writes: set[str] = set()
    for line in source.splitlines():
        m = _ASSIGN_RE.match(line)
        lhs = m.group(1) if m else None
        table_write = bool(
            m
            and (
                reader_re.search(m.group(2))
                or any(_mention_re(name).search(m.group(2)) for name in live)
            )
        )
        for name in sorted(live):
            if name == lhs:
                # A line that (re-)assigns `name` is its defining assignment,
                # not a read of it.
                continue
            if _mention_re(name).search(line):
                reads.add(name)
        if table_write and lhs is not None:
            writes.add(lhs)
            live.add(lhs)
    return frozenset(reads), frozenset(writes)
