"""Content similarity measures and the content-addressed similarity cache.

All pairwise measures return values in [0, 1], are symmetric, and give 1.0
for identical non-empty contents. The shared empty-vs-empty convention is
1.0 (an empty facet never penalizes) and empty-vs-nonempty is 0.0.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .model import OutputKind, TableData


@dataclass(frozen=True)
class SimilarityConfig:
    """Tunables for the measures.

    table_denominator: 'smaller' divides the table score by the smaller
    column count (the default), 'larger' by the larger one.
    column_pair_cost_s: artificial delay charged per column-pair comparison,
    used by the benchmark harness to model expensive table similarity.
    """

    code_delimiters: str = " \n.="
    table_denominator: str = "smaller"
    column_pair_cost_s: float = 0.0

    def __post_init__(self):
        if self.table_denominator not in ("smaller", "larger"):
            raise ValueError("table_denominator must be 'smaller' or 'larger'")
        if not self.code_delimiters:
            raise ValueError("code_delimiters must be non-empty")


DEFAULT_CONFIG = SimilarityConfig()


def tokenize_code(source: str, delimiters: str = DEFAULT_CONFIG.code_delimiters) -> frozenset[str]:
    """Split source text on the delimiter characters into a set of words.

    Empty fragments are dropped, so the result never contains ''.
    """
    if not source:
        return frozenset()
    parts = re.split("[" + re.escape(delimiters) + "]", source)
    return frozenset(p for p in parts if p)


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """|a ∩ b| / |a ∪ b|, with 1.0 for two empty sets and 0.0 if only one is empty."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    union = len(sa | sb)
    if union == 0:
        return 0.0
    return len(sa & sb) / union


def sim_code(a: str, b: str, config: SimilarityConfig = DEFAULT_CONFIG) -> float:
    """Jaccard similarity of the token sets of two pieces of source text."""
    return jaccard(tokenize_code(a, config.code_delimiters), tokenize_code(b, config.code_delimiters))


def _table_value_columns(t: TableData) -> list[frozenset[str]]:
    return [values for _, values in t.columns]


def _table_content_key(t: TableData) -> str:
    # Column names and the table name are irrelevant to the measure; column
    # order matters because it breaks ties in the greedy selection.
    return json.dumps([sorted(values) for _, values in t.columns])


def sim_table(a: TableData, b: TableData, config: SimilarityConfig = DEFAULT_CONFIG) -> float:
    """Greedy column-matching similarity between two tables.

    All column pairs are ranked by Jaccard similarity of their distinct-value
    sets (descending, ties by ascending column indices) and selected greedily
    as an injection from the narrower table into the wider one. The result is
    the mean selected Jaccard over the denominator chosen by the config.

    Symmetric: the narrower table always plays the role of the injection's
    domain, and equally wide tables are ordered by their canonical content
    serialization so both argument orders compute the same selection.
    """
    cols_a = _table_value_columns(a)
    cols_b = _table_value_columns(b)
    if not cols_a and not cols_b:
        return 1.0
    if not cols_a or not cols_b:
        return 0.0
    if len(cols_a) > len(cols_b) or (
        len(cols_a) == len(cols_b) and _table_content_key(a) > _table_content_key(b)
    ):
        cols_a, cols_b = cols_b, cols_a
    if config.column_pair_cost_s > 0.0:
        time.sleep(config.column_pair_cost_s * len(cols_a) * len(cols_b))
    pairs = [
        (jaccard(ca, cb), i, j)
        for i, ca in enumerate(cols_a)
        for j, cb in enumerate(cols_b)
    ]
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    total = 0.0
    for value, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        total += value
        if len(used_a) == len(cols_a):
            break
    denominator = len(cols_a) if config.table_denominator == "smaller" else len(cols_b)
    return total / denominator


def sim_table_sets(
    dq: Sequence[TableData],
    dn: Sequence[TableData],
    config: SimilarityConfig = DEFAULT_CONFIG,
) -> float:
    """Aggregate similarity between a query's tables and a notebook's tables.

    Pairs are matched greedily by descending sim_table (injection from the
    smaller list, ties by ascending list indices) and the matched total is
    normalized by the number of query tables. Reduces to sim_table on
    singleton lists.
    """
    if not dq and not dn:
        return 1.0
    if not dq or not dn:
        return 0.0
    pairs = [
        (sim_table(tq, tn, config), i, j)
        for i, tq in enumerate(dq)
        for j, tn in enumerate(dn)
    ]
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    budget = min(len(dq), len(dn))
    used_q: set[int] = set()
    used_n: set[int] = set()
    total = 0.0
    for value, i, j in pairs:
        if i in used_q or j in used_n:
            continue
        used_q.add(i)
        used_n.add(j)
        total += value
        if len(used_q) == budget:
            break
    return total / len(dq)


def sim_library(a: Iterable[str], b: Iterable[str]) -> float:
    """Jaccard similarity of two sets of library names."""
    return jaccard(a, b)


def sim_output(a: OutputKind, b: OutputKind) -> float:
    """1.0 if the two output kinds match, else 0.0."""
    return 1.0 if a == b else 0.0


def sim_output_multiset(oq: Iterable[OutputKind], on: Iterable[OutputKind]) -> float:
    """Multiset Jaccard over output kinds: Σ min(counts) / Σ max(counts)."""
    cq = Counter(oq)
    cn = Counter(on)
    if not cq and not cn:
        return 1.0
    kinds = set(cq) | set(cn)
    low = sum(min(cq[k], cn[k]) for k in kinds)
    high = sum(max(cq[k], cn[k]) for k in kinds)
    return low / high


# --- content-addressed caching -----------------------------------------------

CacheKey = tuple[str, bytes, bytes]


class SimCache:
    """Bounded LRU cache of computed similarity values.

    Keys are (measure tag, content hash, content hash); for symmetric measures
    the hash pair is sorted so (a, b) and (b, a) share one entry. Lookups and
    inserts are lock-guarded, but no lock is held while a measure computes, so
    two threads may race to compute the same key; values are identical and the
    last write wins.
    """

    def __init__(self, max_entries: int = 1 << 18):
        if max_entries <= 0:
            raise ValueError("max_entries must be positive")
        self.max_entries = max_entries
        self._entries: OrderedDict[CacheKey, float] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: CacheKey) -> float | None:
        with self._lock:
            value = self._entries.get(key)
            if value is None:
                self.misses += 1
                return None
            self._entries.move_to_end(key)
            self.hits += 1
            return value

    def put(self, key: CacheKey, value: float) -> None:
        with self._lock:
            self._entries[key] = value
            self._entries.move_to_end(key)
            while len(self._entries) > self.max_entries:
                self._entries.popitem(last=False)


def _hash(payload: str) -> bytes:
    # 256-bit content hashes; distinct contents colliding is treated as
    # impossible at this width.
    return hashlib.sha256(payload.encode("utf-8")).digest()


def _key_code(text: str) -> bytes:
    return _hash(text)


def _key_table(t: TableData) -> bytes:
    return _hash(_table_content_key(t))


def _key_output(k: OutputKind) -> bytes:
    return _hash(k.value)


def _key_library(names: Iterable[str]) -> bytes:
    return _hash(json.dumps(sorted(names)))


def _key_table_list(tables: Sequence[TableData]) -> bytes:
    return _hash(json.dumps([_table_content_key(t) for t in tables]))


def _key_output_multiset(kinds: Iterable[OutputKind]) -> bytes:
    counts = Counter(k.value for k in kinds)
    return _hash(json.dumps(sorted(counts.items())))


# tag -> (symmetric, key function, compute function)
_MEASURES: dict[str, tuple[bool, Callable, Callable]] = {
    "code": (True, _key_code, lambda a, b, cfg: sim_code(a, b, cfg)),
    "table": (True, _key_table, lambda a, b, cfg: sim_table(a, b, cfg)),
    "output": (True, _key_output, lambda a, b, cfg: sim_output(a, b)),
    "library": (True, _key_library, lambda a, b, cfg: sim_library(a, b)),
    "tableset": (False, _key_table_list, lambda a, b, cfg: sim_table_sets(a, b, cfg)),
    "outputset": (True, _key_output_multiset, lambda a, b, cfg: sim_output_multiset(a, b)),
}


def measure_tags() -> tuple[str, ...]:
    return tuple(_MEASURES)


def cache_key(tag: str, a, b) -> CacheKey:
    symmetric, key_fn, _ = _MEASURES[tag]
    ha, hb = key_fn(a), key_fn(b)
    if symmetric and hb < ha:
        ha, hb = hb, ha
    return (tag, ha, hb)


def cached(tag: str, a, b, cache: SimCache, config: SimilarityConfig = DEFAULT_CONFIG) -> float:
    """Return the measure value for (a, b), consulting and filling the cache."""
    key = cache_key(tag, a, b)
    value = cache.get(key)
    if value is not None:
        return value
    _, _, compute = _MEASURES[tag]
    value = compute(a, b, config)
    cache.put(key, value)
    return value


class SimilarityEngine:
    """Front door for measure evaluation with optional caching and counters.

    `calls` counts underlying computations per tag (cache hits excluded);
    `column_pairs` counts column comparisons performed inside table measures.
    Counter updates are lock-guarded so phase-1 search threads can share one
    engine.
    """

    def __init__(self, config: SimilarityConfig = DEFAULT_CONFIG, cache: SimCache | None = None):
        self.config = config
        self.cache = cache
        self.calls: Counter[str] = Counter()
        self.column_pairs = 0
        self.cache_hits = 0
        self._lock = threading.Lock()

    def _pairs(self, tag: str, a, b) -> int:
        if tag == "table":
            return len(a.columns) * len(b.columns)
        if tag == "tableset":
            return sum(
                len(ta.columns) * len(tb.columns) for ta in a for tb in b
            )
        return 0

    def _eval(self, tag: str, a, b) -> float:
        if self.cache is not None:
            key = cache_key(tag, a, b)
            value = self.cache.get(key)
            if value is not None:
                with self._lock:
                    self.cache_hits += 1
                return value
        _, _, compute = _MEASURES[tag]
        value = compute(a, b, self.config)
        with self._lock:
            self.calls[tag] += 1
            self.column_pairs += self._pairs(tag, a, b)
        if self.cache is not None:
            self.cache.put(key, value)
        return value

    def code(self, a: str, b: str) -> float:
        return self._eval("code", a, b)

    def table(self, a: TableData, b: TableData) -> float:
        return self._eval("table", a, b)

    def output(self, a: OutputKind, b: OutputKind) -> float:
        return self._eval("output", a, b)

    def library(self, a: Iterable[str], b: Iterable[str]) -> float:
        return self._eval("library", frozenset(a), frozenset(b))

    def table_sets(self, dq: Sequence[TableData], dn: Sequence[TableData]) -> float:
        return self._eval("tableset", tuple(dq), tuple(dn))

    def output_multiset(self, oq, on) -> float:
        return self._eval("outputset", tuple(oq), tuple(on))

    def total_calls(self) -> int:
        return sum(self.calls.values())
