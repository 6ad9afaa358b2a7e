"""Similarity search over computational notebooks via labeled workflow DAGs."""

from .errors import (
    CorruptGraph,
    CycleDetected,
    EmptyCorpus,
    EmptyNotebook,
    GraphConstructionError,
    InvalidQuery,
    MalformedDocument,
    NbsimError,
    StoreError,
    TableLoadError,
    UnknownOutputType,
    VersionMismatch,
)
from .graph import (
    Node,
    NodeLabel,
    QueryGraph,
    TopologySignature,
    WorkflowGraph,
    assert_dag,
    build_workflow_graph,
    graph_facets,
    query_graph_from_json,
    topology_signature,
    validate_query_graph,
)
from .ingest import (
    TableManifest,
    attach_tables,
    classify_output,
    detect_table_refs,
    extract_libraries,
    load_table_csv,
    parse_notebook,
)
from .matching import (
    Mapping,
    ReachabilityIndex,
    build_reachability,
    enumerate_mappings,
    index_prune,
)
from .model import (
    Cell,
    Notebook,
    NotebookId,
    OutputKind,
    TableData,
    Weights,
    validate_notebook,
)
from .search import (
    NormalizedWeights,
    PartialScore,
    ScoredResult,
    SearchOptions,
    SearchStats,
    SearchToggles,
    SetQuery,
    graph_mapping_score,
    max_sim,
    naive_search_topk,
    normalize_weights,
    notebook_score,
    search_topk,
    set_based_score,
    set_based_search_topk,
)
from .similarity import (
    SimCache,
    SimilarityConfig,
    SimilarityEngine,
    cached,
    jaccard,
    sim_code,
    sim_library,
    sim_output,
    sim_output_multiset,
    sim_table,
    sim_table_sets,
    tokenize_code,
)
from .store import (
    CorpusManifest,
    InMemoryCorpus,
    LoadedCorpus,
    load_corpus,
    save_corpus,
    verify_index,
)

__version__ = "0.1.0"
