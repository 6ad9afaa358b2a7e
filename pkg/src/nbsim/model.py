"""Core domain types: notebooks, cells, tables, outputs, and search weights."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

# A notebook identifier is an opaque string, unique within one corpus.
NotebookId = str


class OutputKind(Enum):
    """Format class of a cell output."""

    DATAFRAME = "dataframe"
    TEXT = "text"
    PNG = "png"

    @classmethod
    def parse(cls, text: str) -> "OutputKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown output kind: {text!r}") from None


@dataclass(frozen=True)
class Cell:
    """One code cell; `index` is its 0-based position in the notebook."""

    index: int
    source: str


@dataclass(frozen=True)
class TableData:
    """A named table reduced to an ordered list of per-column distinct-value sets.

    Values are canonical strings (trimmed, numbers rendered in plain decimal
    form); empty strings never occur as values.
    """

    name: str
    columns: tuple[tuple[str, frozenset[str]], ...] = ()

    def column_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)


@dataclass(frozen=True)
class Notebook:
    """A notebook's contents: ordered code cells, tables, output formats, libraries.

    `outputs` is a multiset of (cell-index, kind) pairs; one entry per output
    record, so a cell emitting two images contributes two entries.
    """

    id: NotebookId
    cells: tuple[Cell, ...]
    tables: tuple[TableData, ...] = ()
    outputs: tuple[tuple[int, OutputKind], ...] = ()
    libraries: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Weights:
    """Relative importance of code, table, output, and library similarity."""

    code: float = 1.0
    data: float = 1.0
    output: float = 1.0
    library: float = 1.0

    def __post_init__(self):
        values = (self.code, self.data, self.output, self.library)
        if any(v < 0 for v in values):
            raise ValueError("weights must be non-negative")
        if not any(v > 0 for v in values):
            raise ValueError("at least one weight must be positive")

    def total(self) -> float:
        return self.code + self.data + self.output + self.library


def validate_notebook(n: Notebook) -> list[str]:
    """Return a description of every structural violation; empty list = valid."""
    problems: list[str] = []
    if not n.id:
        problems.append("empty notebook id")
    if not n.cells:
        problems.append("cells empty")
    for position, cell in enumerate(n.cells):
        if cell.index != position:
            problems.append(f"cell index {cell.index} at position {position}")
    for table in n.tables:
        seen: set[str] = set()
        for column_name, _ in table.columns:
            if column_name in seen:
                problems.append(
                    f"table '{table.name}' duplicate column name '{column_name}'"
                )
            seen.add(column_name)
    for cell_index, _ in n.outputs:
        if not 0 <= cell_index < len(n.cells):
            problems.append(f"dangling output cell-index {cell_index}")
    return problems
