"""Exception types shared across the package."""


class NbsimError(Exception):
    """Base class for all nbsim errors."""


class MalformedDocument(NbsimError):
    """The notebook document could not be parsed."""


class EmptyNotebook(NbsimError):
    """The notebook document contains no code cells."""


class UnknownOutputType(NbsimError):
    """An output record carries none of the recognized payload classes."""


class TableLoadError(NbsimError):
    """A table file referenced by a manifest could not be loaded."""

    def __init__(self, path, cause):
        super().__init__(f"cannot load table from {path}: {cause}")
        self.path = path
        self.cause = cause


class GraphConstructionError(NbsimError):
    """The notebook contents cannot be turned into a consistent workflow graph."""


class CycleDetected(NbsimError):
    """A directed cycle was found where a DAG is required."""

    def __init__(self, cycle):
        super().__init__("cycle detected: " + " -> ".join(cycle))
        self.cycle = tuple(cycle)


class InvalidQuery(NbsimError):
    """The query (graph or set form) violates its structural rules."""


class EmptyCorpus(NbsimError):
    """A search was issued against a corpus with no notebooks."""


class StoreError(NbsimError):
    """A corpus directory could not be read or written."""


class VersionMismatch(StoreError):
    """The corpus manifest was written by an unsupported format version."""


class CorruptGraph(StoreError):
    """A stored graph file is unreadable or truncated."""

    def __init__(self, notebook_id, cause):
        super().__init__(f"graph for '{notebook_id}' is corrupt: {cause}")
        self.notebook_id = notebook_id
        self.cause = cause
