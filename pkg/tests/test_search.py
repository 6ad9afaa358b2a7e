import itertools
import random

import pytest

from conftest import code_chain_graph, notebook, table, wnode
from nbsim.errors import EmptyCorpus, InvalidQuery
from nbsim.gen import generate_corpus, generate_queries, generate_set_query
from nbsim.graph import NodeLabel, QueryGraph, build_workflow_graph, graph_facets
from nbsim.matching import enumerate_mappings
from nbsim.model import OutputKind, Weights
from nbsim.search import (
    PartialScore,
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
from nbsim.similarity import SimilarityEngine
from nbsim.store import InMemoryCorpus
from oracles import exhaustive_set_ranking


def query_of(nodes, edges, libraries=()):
    return QueryGraph(nodes=tuple(nodes), edges=frozenset(edges), libraries=frozenset(libraries))


def two_code_query(src0="a b", src1="c d", libraries=()):
    return query_of(
        [wnode("q0", NodeLabel.CODE, 0, src0), wnode("q1", NodeLabel.CODE, 1, src1)],
        {("q0", "q1")},
        libraries,
    )


class TestNormalizeWeights:
    def test_division_by_node_count(self):
        nw = normalize_weights(two_code_query(), Weights(code=8))
        assert nw.code == 4.0

    def test_zero_count_label(self):
        nw = normalize_weights(two_code_query(), Weights(data=5))
        assert nw.data == 0.0

    def test_library_unnormalized(self):
        nw = normalize_weights(two_code_query(), Weights(library=7))
        assert nw.library == 7.0


class TestSetBasedScore:
    def test_identity_square(self):
        n = notebook(
            sources=("import pandas", "x = 1"),
            tables=[table("t", ("c", {"1", "2"}))],
            outputs=[(0, OutputKind.PNG)],
            libraries={"pandas"},
        )
        # facets straight from the notebook
        facets = ("import pandas\nx = 1", n.tables, (OutputKind.PNG,), n.libraries)
        q = SetQuery(
            code="import pandas\nx = 1",
            tables=n.tables,
            outputs=(OutputKind.PNG,),
            libraries={"pandas"},
        )
        assert set_based_score(q, facets, Weights(32, 2, 1, 1)) == 36.0

    def test_empty_query_facets(self):
        facets = ("x = 1", (), (), frozenset())
        q = SetQuery(code="x = 1")
        # code identity 1; empty-vs-empty facets are 1 as well
        assert set_based_score(q, facets, Weights(1, 1, 1, 1)) == 4.0

    def test_disjoint_facets_leave_only_empty_conventions(self):
        facets = ("alpha", (), (), frozenset({"x"}))
        q = SetQuery(code="beta", libraries=frozenset({"y"}))
        # code and libraries disjoint -> 0; empty-vs-empty tables/outputs -> 1
        assert set_based_score(q, facets, Weights(1, 0.5, 0.5, 1)) == 1.0

    def test_all_disjoint_zero(self):
        facets = ("alpha", (table("t", ("x", {"1"})),), (OutputKind.PNG,), frozenset({"x"}))
        q = SetQuery(code="beta", libraries=frozenset({"y"}))
        assert set_based_score(q, facets, Weights(1, 0.5, 0.5, 1)) == 0.0


class TestGraphMappingScore:
    def test_identity_fragment(self):
        n = notebook(
            sources=("t = pd.read_csv('t.csv')", "print(t.head())"),
            tables=[table("t", ("x", {"1", "2"}))],
            outputs=[(1, OutputKind.TEXT)],
            libraries={"pandas"},
        )
        g = build_workflow_graph(n)
        q = query_of(
            [
                wnode("q0", NodeLabel.CODE, 0, n.cells[0].source),
                wnode("q1", NodeLabel.CODE, 1, n.cells[1].source),
                wnode("qd", NodeLabel.DATA, 0, n.tables[0]),
                wnode("qo", NodeLabel.OUTPUT, 0, OutputKind.TEXT),
            ],
            {("q0", "q1"), ("q0", "qd"), ("q1", "qo")},
            {"pandas"},
        )
        w = Weights(8, 1, 1, 1)
        nw = normalize_weights(q, w)
        m = {"q0": "c0", "q1": "c1", "qd": "d0", "qo": "o0"}
        assert graph_mapping_score(q, g, m, nw, SimilarityEngine()) == 11.0

    def test_partial_code_similarity(self):
        g = code_chain_graph(["a b", "zz qq"])
        q = two_code_query("a b", "zz xx")
        nw = normalize_weights(q, Weights(code=8, data=1, output=1, library=0))
        m = {"q0": "c0", "q1": "c1"}
        # 4*1 + 4*(1/3): tokens {zz,xx} vs {zz,qq} share one of three
        score = graph_mapping_score(q, g, m, nw, SimilarityEngine())
        assert score == pytest.approx(4 + 4 / 3)

    def test_one_node_at_half(self):
        # two code nodes at weight 4 each, one matching fully and one at 0.5,
        # zero library contribution
        g = code_chain_graph(["same", "a b c d"])
        q = two_code_query("same", "a b")
        nw = normalize_weights(q, Weights(code=8, data=1, output=1, library=0))
        m = {"q0": "c0", "q1": "c1"}
        score = graph_mapping_score(q, g, m, nw, SimilarityEngine())
        assert score == 6.0


class TestNotebookScore:
    def test_no_mappings_zero(self):
        g = code_chain_graph(["a"])
        q = two_code_query()
        nw = normalize_weights(q, Weights())
        assert notebook_score(q, g, [], nw, SimilarityEngine()) == 0.0

    def test_max_over_mappings(self):
        g = code_chain_graph(["a b", "c d", "a b"])
        q = two_code_query("a b", "c d")
        nw = normalize_weights(q, Weights(code=8))
        mappings = enumerate_mappings(q, g)
        best = notebook_score(q, g, mappings, nw, SimilarityEngine())
        per = [graph_mapping_score(q, g, m, nw, SimilarityEngine()) for m in mappings]
        assert best == max(per)


class TestMaxSim:
    def test_nothing_scored(self):
        g = code_chain_graph(["x"])
        ps = PartialScore(
            graph=g, mapping={}, terms=[None, None, None], optimistic=[1.0, 4.0, 6.0]
        )
        assert max_sim(ps) == 11.0

    def test_all_scored_equals_final(self):
        g = code_chain_graph(["x"])
        ps = PartialScore(graph=g, mapping={}, terms=[0.5, 2.0], optimistic=[1.0, 4.0])
        assert max_sim(ps) == 2.5
        assert ps.computed == 2.5
        assert ps.remaining_weight == 0.0

    def test_spec_arithmetic(self):
        # lib scored 1.0, one of two code nodes scored at 0.5 under weight 4
        g = code_chain_graph(["x"])
        ps = PartialScore(
            graph=g, mapping={}, terms=[1.0, 2.0, None], optimistic=[1.0, 4.0, 4.0]
        )
        assert max_sim(ps) == 7.0
        assert ps.remaining_weight == 4.0


def small_world(seed=13, count=18):
    graphs, _ = generate_corpus(count, seed=seed)
    return graphs, InMemoryCorpus(graphs)


class TestSearchTopk:
    def test_identity_fragment_ranks_first(self):
        graphs, corpus = small_world()
        g = graphs[0]
        code_nodes = g.by_label(NodeLabel.CODE)[:2]
        q = query_of(
            [
                wnode("q0", NodeLabel.CODE, 0, code_nodes[0].attribute),
                wnode("q1", NodeLabel.CODE, 1, code_nodes[1].attribute),
            ],
            {("q0", "q1")},
            g.libraries,
        )
        results = search_topk(q, corpus, SearchOptions(k=1, weights=Weights(8, 1, 1, 1)))
        assert results[0].notebook == g.owner
        assert results[0].score == 8.0 + 1.0  # code exact + library exact

    def test_k_larger_than_corpus(self):
        graphs, corpus = small_world(count=6)
        q = two_code_query("model.fit(X_train, y_train)", "plt.show()")
        results = search_topk(q, corpus, SearchOptions(k=50, weights=Weights(8, 1, 1, 1)))
        assert all(r.score > 0 for r in results)
        assert len(results) <= 6

    def test_matches_naive_on_generated_queries(self):
        graphs, corpus = small_world(seed=29, count=20)
        for q in generate_queries(31, graphs, 8):
            opts = SearchOptions(k=5, weights=Weights(8, 1, 1, 1))
            fast = [(r.notebook, r.score, r.mapping) for r in search_topk(q, corpus, opts)]
            slow = [(r.notebook, r.score, r.mapping) for r in naive_search_topk(q, corpus, opts)]
            assert fast == slow

    def test_toggle_subsets_identical(self):
        graphs, corpus = small_world(seed=37, count=15)
        queries = generate_queries(41, graphs, 4)
        for q in queries:
            reference = None
            for bits in itertools.product([False, True], repeat=4):
                toggles = SearchToggles(*bits)
                opts = SearchOptions(k=4, weights=Weights(8, 1, 1, 1), toggles=toggles)
                got = [(r.notebook, r.score, r.mapping) for r in search_topk(q, corpus, opts)]
                if reference is None:
                    reference = got
                assert got == reference

    def test_zero_scores_excluded_by_default(self):
        g1 = code_chain_graph(["alpha beta"], owner="nb-a")
        g2 = code_chain_graph(["gamma delta"], owner="nb-b")
        corpus = InMemoryCorpus([g1, g2])
        q = query_of([wnode("q0", NodeLabel.CODE, 0, "alpha beta")], set())
        opts = SearchOptions(k=5, weights=Weights(code=1, data=0, output=0, library=0))
        results = search_topk(q, corpus, opts)
        assert [r.notebook for r in results] == ["nb-a"]

    def test_include_zero_pads(self):
        g1 = code_chain_graph(["alpha beta"], owner="nb-a")
        g2 = code_chain_graph(["gamma delta"], owner="nb-b")
        corpus = InMemoryCorpus([g1, g2])
        q = query_of([wnode("q0", NodeLabel.CODE, 0, "alpha beta")], set())
        opts = SearchOptions(
            k=5, weights=Weights(code=1, data=0, output=0, library=0), include_zero=True
        )
        results = search_topk(q, corpus, opts)
        assert [(r.notebook, r.score) for r in results] == [("nb-a", 1.0), ("nb-b", 0.0)]

    def test_tie_breaks_by_id(self):
        g1 = code_chain_graph(["alpha"], owner="nb-z")
        g2 = code_chain_graph(["alpha"], owner="nb-a")
        corpus = InMemoryCorpus([g1, g2])
        q = query_of([wnode("q0", NodeLabel.CODE, 0, "alpha")], set())
        results = search_topk(q, corpus, SearchOptions(k=2, weights=Weights(code=1)))
        assert [r.notebook for r in results] == ["nb-a", "nb-z"]

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            search_topk(two_code_query(), InMemoryCorpus([]), SearchOptions(k=1))

    def test_invalid_k_rejected(self):
        with pytest.raises(InvalidQuery):
            SearchOptions(k=0)

    def test_invalid_query_rejected(self):
        graphs, corpus = small_world(count=3)
        bad = query_of(
            [wnode("a", NodeLabel.CODE, 0, "x"), wnode("w", NodeLabel.WILDCARD, 0)],
            {("a", "w")},
        )
        with pytest.raises(InvalidQuery):
            search_topk(bad, corpus, SearchOptions(k=1))

    def test_threads_deterministic(self):
        graphs, corpus = small_world(seed=53, count=12)
        q = generate_queries(57, graphs, 1)[0]
        serial = search_topk(q, corpus, SearchOptions(k=5, weights=Weights(8, 1, 1, 1), threads=1))
        threaded = search_topk(q, corpus, SearchOptions(k=5, weights=Weights(8, 1, 1, 1), threads=4))
        assert [(r.notebook, r.score, r.mapping) for r in serial] == [
            (r.notebook, r.score, r.mapping) for r in threaded
        ]

    def test_stats_populated(self):
        graphs, corpus = small_world(seed=61, count=10)
        q = generate_queries(67, graphs, 1)[0]
        stats = SearchStats()
        search_topk(q, corpus, SearchOptions(k=3, weights=Weights(8, 1, 1, 1)), stats=stats)
        assert stats.graphs_total == 10
        assert stats.mappings_enumerated >= 0
        assert stats.elapsed_s > 0


class TestNaiveSearch:
    def test_call_counts_match_definition(self):
        graphs, corpus = small_world(seed=71, count=8)
        q = generate_queries(73, graphs, 1)[0]
        stats = SearchStats()
        naive_search_topk(q, corpus, SearchOptions(k=3, weights=Weights(8, 1, 1, 1)), stats=stats)
        plain_count = len(q.plain_nodes())
        expected_node_sims = stats.mappings_enumerated * plain_count
        node_sims = sum(
            count for tag, count in stats.sim_calls.items() if tag in ("code", "table", "output")
        )
        assert node_sims == expected_node_sims
        assert stats.sim_calls.get("library", 0) == len(corpus.ids())

    def test_k_must_be_positive(self):
        with pytest.raises(InvalidQuery):
            SearchOptions(k=0, weights=Weights())


class TestCacheEffect:
    def test_duplicated_contents_reduce_calls(self):
        # identical cells across notebooks -> repeated content pairs
        sources = ["model.fit(X_train, y_train)", "plt.show()", "model.fit(X_train, y_train)"]
        graphs = [
            code_chain_graph(sources, owner=f"nb{i}") for i in range(4)
        ]
        corpus = InMemoryCorpus(graphs)
        q = two_code_query(sources[0], sources[1])
        on, off = SearchStats(), SearchStats()
        search_topk(
            q, corpus,
            SearchOptions(k=2, weights=Weights(8, 1, 1, 1), theta=NodeLabel.CODE,
                          toggles=SearchToggles(pruning=False, ordering=False, caching=True, indexing=False)),
            stats=on,
        )
        search_topk(
            q, corpus,
            SearchOptions(k=2, weights=Weights(8, 1, 1, 1), theta=NodeLabel.CODE,
                          toggles=SearchToggles(pruning=False, ordering=False, caching=False, indexing=False)),
            stats=off,
        )
        assert on.total_sim_calls() < off.total_sim_calls()
        assert on.cache_hits > 0


class TestSetBasedSearch:
    def test_matches_exhaustive_on_generated(self):
        graphs, corpus = small_world(seed=83, count=20)
        rng = random.Random(89)
        for _ in range(6):
            q = generate_set_query(rng, graphs)
            opts = SearchOptions(k=5, weights=Weights(32, 2, 1, 1))
            fast = [(r.notebook, r.score) for r in set_based_search_topk(q, corpus, opts)]
            slow = exhaustive_set_ranking(q, corpus, opts.weights, opts.k)
            assert fast == slow

    def test_zero_theta_weight_no_op(self):
        graphs, corpus = small_world(seed=97, count=8)
        q = SetQuery(code="model.fit(X_train, y_train)")
        opts = SearchOptions(k=3, weights=Weights(code=32, data=0, output=1, library=1))
        fast = [(r.notebook, r.score) for r in set_based_search_topk(q, corpus, opts)]
        slow = exhaustive_set_ranking(q, corpus, opts.weights, opts.k)
        assert fast == slow

    def test_single_notebook(self):
        graphs, corpus = small_world(seed=101, count=1)
        q = SetQuery(code="anything at all")
        results = set_based_search_topk(q, corpus, SearchOptions(k=1, weights=Weights(32, 2, 1, 1)))
        assert len(results) <= 1

    def test_include_zero_reports_exact_scores(self):
        graphs, corpus = small_world(seed=103, count=12)
        rng = random.Random(107)
        q = generate_set_query(rng, graphs)
        opts = SearchOptions(k=12, weights=Weights(32, 2, 1, 1), include_zero=True)
        fast = [(r.notebook, r.score) for r in set_based_search_topk(q, corpus, opts)]
        slow = exhaustive_set_ranking(q, corpus, opts.weights, opts.k, include_zero=True)
        assert fast == slow
