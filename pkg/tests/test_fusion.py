"""Fusion: link estimation, element scoring, pruning, capacity, batches."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medgraph.errors import ElementNotFound, InvalidCounts, InvalidField
from medgraph.extraction import CandidateEntity, CandidateRelation, embed
from medgraph.feedback import TunableParams
from medgraph.fusion import (
    BatchReport,
    CandidateBatch,
    CooccurrenceCounts,
    MrfConfig,
    apply_batch,
    enforce_capacity,
    estimate_link_probability,
    mrf_score,
    prune,
    score_all,
)
from medgraph.graph import (
    CapacityConfig,
    Edge,
    EdgeType,
    KnowledgeGraph,
    Node,
    NodeType,
)

from conftest import build_graph, random_graph


class TestLinkProbability:
    def test_smoothed_ratio(self):
        p = estimate_link_probability(CooccurrenceCounts(8, 10), MrfConfig())
        assert p == pytest.approx(0.75, rel=1e-9)

    def test_uninformed_prior(self):
        p = estimate_link_probability(CooccurrenceCounts(0, 0), MrfConfig())
        assert p == pytest.approx(0.5, rel=1e-9)

    def test_limit_approaches_one_monotonically(self):
        cfg = MrfConfig()
        previous = 0.0
        for n in (1, 10, 100, 10_000, 1_000_000):
            p = estimate_link_probability(CooccurrenceCounts(n, n), cfg)
            assert p > previous
            previous = p
        assert previous > 0.999

    def test_invalid_counts(self):
        with pytest.raises(InvalidCounts):
            CooccurrenceCounts(-1, 5)
        with pytest.raises(InvalidCounts):
            CooccurrenceCounts(6, 5)
        with pytest.raises(InvalidCounts):
            CooccurrenceCounts(1, 5, alternatives=1)

    @given(
        pair=st.integers(0, 1000),
        extra=st.integers(0, 1000),
        smoothing=st.floats(0.1, 10),
    )
    def test_strictly_inside_unit_interval(self, pair, extra, smoothing):
        p = estimate_link_probability(
            CooccurrenceCounts(pair, pair + extra), MrfConfig(smoothing=smoothing)
        )
        assert 0.0 < p < 1.0

    @given(source=st.integers(5, 50))
    def test_monotone_in_pair_count(self, source):
        cfg = MrfConfig()
        values = [
            estimate_link_probability(CooccurrenceCounts(k, source), cfg)
            for k in range(source + 1)
        ]
        assert values == sorted(values)


class TestMrfScore:
    def test_zero_energy(self):
        g = build_graph(
            [("s:a", NodeType.Symptom, 1.0), ("s:b", NodeType.Symptom, 1.0)],
            [("s:a", "s:b", EdgeType.SymptomSymptom, 1.0)],
        )
        assert mrf_score(g, "s:a").retention == pytest.approx(1.0)

    def test_isolated_node_scores_relevance(self):
        g = build_graph([("s:a", NodeType.Symptom, 0.37)], [])
        assert mrf_score(g, "s:a").retention == pytest.approx(0.37, rel=1e-9)

    def test_geometric_mean(self):
        g = build_graph(
            [("s:a", NodeType.Symptom, 0.9), ("d:b", NodeType.Disease, 1.0)],
            [("s:a", "d:b", EdgeType.Diagnostic, 0.4)],
        )
        score = mrf_score(g, "s:a")
        assert score.retention == pytest.approx(math.sqrt(0.36), rel=1e-9)
        assert score.unary == pytest.approx(-math.log(0.9), rel=1e-9)
        assert score.pairwise_sum == pytest.approx(-math.log(0.4), rel=1e-9)

    def test_edge_retention_is_weight(self):
        g = build_graph(
            [("s:a", NodeType.Symptom, 1.0), ("d:b", NodeType.Disease, 1.0)],
            [("s:a", "d:b", EdgeType.Diagnostic, 0.42)],
        )
        assert mrf_score(g, ("s:a", "d:b", EdgeType.Diagnostic)).retention == 0.42

    def test_element_not_found(self):
        g = KnowledgeGraph()
        with pytest.raises(ElementNotFound):
            mrf_score(g, "s:ghost")
        with pytest.raises(ElementNotFound):
            mrf_score(g, ("s:a", "s:b", EdgeType.SymptomSymptom))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31))
    def test_bulk_scoring_matches_per_element(self, seed):
        g = random_graph(random.Random(seed))
        node_scores, edge_scores = score_all(g)
        for nid, bulk in node_scores.items():
            assert bulk == pytest.approx(mrf_score(g, nid).retention, rel=1e-9)
        for key, bulk in edge_scores.items():
            assert bulk == pytest.approx(mrf_score(g, key).retention, rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([0.5, 2.0, 3.0]))
    def test_retention_ordering_invariant_under_power_reweighting(self, seed, power):
        # raising relevance and weights to a power scales all energies
        # uniformly in log-space, so the retention ranking cannot change
        rng = random.Random(seed)
        g = random_graph(rng)
        for node in g.nodes.values():
            node.relevance = max(node.relevance, 1e-3)
        for edge in g.edges():
            edge.weight = max(edge.weight, 1e-3)
        before, _ = score_all(g)
        reweighted = g.copy()
        for node in reweighted.nodes.values():
            node.relevance = node.relevance**power
        for edge in reweighted.edges():
            edge.weight = edge.weight**power
        after, _ = score_all(reweighted)
        order_before = sorted(before, key=lambda n: (before[n], n))
        order_after = sorted(after, key=lambda n: (after[n], n))
        assert order_before == order_after


class TestPrune:
    def test_vacuous(self):
        g = build_graph(
            [("s:a", NodeType.Symptom, 0.95), ("d:b", NodeType.Disease, 0.95)],
            [("s:a", "d:b", EdgeType.Diagnostic, 0.95)],
        )
        assert prune(g, MrfConfig(tau=0.7)) == []
        assert g.node_count == 2

    def test_boundary_retention_kept(self):
        g = build_graph([("s:a", NodeType.Symptom, 0.7)], [])
        assert prune(g, MrfConfig(tau=0.7)) == []
        assert g.has_node("s:a")

    def test_low_retention_node_removed_with_edges(self):
        g = build_graph(
            [
                ("s:a", NodeType.Symptom, 0.9),
                ("d:b", NodeType.Disease, 0.95),
                ("s:c", NodeType.Symptom, 0.95),
            ],
            [
                ("s:a", "d:b", EdgeType.Diagnostic, 0.4),
                ("s:c", "d:b", EdgeType.Diagnostic, 0.95),
            ],
        )
        # s:a retention = sqrt(0.9 * 0.4) = 0.6 < 0.7
        removed = prune(g, MrfConfig(tau=0.7))
        assert "s:a" in removed
        assert ("s:a", "d:b", EdgeType.Diagnostic) in removed
        assert not g.has_node("s:a")
        for key in g.edge_keys():
            assert key[0] in g.nodes and key[1] in g.nodes

    def test_tau_zero_removes_nothing(self):
        rng = random.Random(7)
        g = random_graph(rng)
        nodes, edges = g.node_count, g.edge_count
        assert prune(g, MrfConfig(tau=0.0)) == []
        assert (g.node_count, g.edge_count) == (nodes, edges)

    def test_tau_near_one_removes_everything_below_one(self):
        g = build_graph(
            [("s:a", NodeType.Symptom, 0.99), ("s:b", NodeType.Symptom, 1.0)],
            [],
        )
        removed = prune(g, MrfConfig(tau=1 - 1e-12))
        assert removed == ["s:a"]
        assert g.has_node("s:b")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 0.95))
    def test_never_leaves_dangling_edges(self, seed, tau):
        g = random_graph(random.Random(seed))
        prune(g, MrfConfig(tau=tau))
        for key in g.edge_keys():
            assert key[0] in g.nodes and key[1] in g.nodes


class TestEnforceCapacity:
    def test_at_capacity(self):
        g = build_graph(
            [("s:a", NodeType.Symptom, 1.0), ("s:b", NodeType.Symptom, 1.0)],
            [("s:a", "s:b", EdgeType.SymptomSymptom, 0.5)],
            capacity=CapacityConfig(max_edges=1, batch_budget=5),
        )
        assert enforce_capacity(g) == 0

    def test_eviction_count(self):
        g = KnowledgeGraph(CapacityConfig(max_edges=12, batch_budget=50))
        for i in range(13):
            g.add_node(Node(id=f"s:n{i}", type=NodeType.Symptom, label=f"n{i}"))
        for i in range(12):
            g.add_edge(
                Edge(
                    src=f"s:n{i}",
                    dst=f"s:n{i+1}",
                    type=EdgeType.SymptomSymptom,
                    weight=round(0.1 + 0.05 * i, 3),
                )
            )
        # lower the ceiling to 10: the 2 lowest-weight edges go
        g.capacity = CapacityConfig(max_edges=10, batch_budget=50)
        evicted = enforce_capacity(g)
        assert evicted == 2
        assert g.edge_count == 10
        assert not g.has_edge(("s:n0", "s:n1", EdgeType.SymptomSymptom))
        assert not g.has_edge(("s:n1", "s:n2", EdgeType.SymptomSymptom))


def _entity(surface: str, ntype: NodeType, conf: float, doc_id: str = "doc0") -> CandidateEntity:
    return CandidateEntity(
        surface=surface,
        entity_type=ntype,
        prob=1.0,
        embedding=embed(surface.split()),
        provenance=doc_id,
        confidence=conf,
    )


def _relation(src: str, dst: str, etype: EdgeType, prob: float, doc_id: str = "doc0") -> CandidateRelation:
    return CandidateRelation(
        src_surface=src, dst_surface=dst, edge_type=etype, prob=prob, provenance=doc_id
    )


class TestApplyBatch:
    def test_budget_cap(self):
        g = KnowledgeGraph(CapacityConfig(max_edges=987_654, batch_budget=150))
        batch = CandidateBatch(
            entities=[
                _entity(f"symptom{i}", NodeType.Symptom, conf=0.9) for i in range(200)
            ]
        )
        report = apply_batch(g, batch, TunableParams())
        assert report.nodes_added + report.edges_added <= 150
        assert report.nodes_added == 150

    def test_empty_batch_is_noop(self):
        g = KnowledgeGraph()
        report = apply_batch(g, CandidateBatch(), TunableParams())
        assert report.nodes_added == 0
        assert report.edges_added == 0
        assert report.elements_pruned == 0
        assert report.candidates_seen == 0
        assert g.node_count == 0

    def test_deterministic_across_copies(self):
        params = TunableParams()
        batch_spec = [
            ("fever", NodeType.Symptom, 0.9),
            ("influenza", NodeType.Disease, 0.85),
            ("cough", NodeType.Symptom, 0.8),
        ]
        relations = [
            _relation("fever", "influenza", EdgeType.Diagnostic, 0.9),
            _relation("cough", "influenza", EdgeType.Diagnostic, 0.8),
        ]

        def run() -> tuple[BatchReport, KnowledgeGraph]:
            g = KnowledgeGraph()
            batch = CandidateBatch(
                entities=[_entity(s, t, c) for s, t, c in batch_spec],
                relations=list(relations),
            )
            return apply_batch(g, batch, params), g

        report_a, graph_a = run()
        report_b, graph_b = run()
        assert graph_a.structurally_equal(graph_b)
        dict_a, dict_b = report_a.to_dict(), report_b.to_dict()
        dict_a.pop("elapsed_ms"), dict_b.pop("elapsed_ms")
        assert dict_a == dict_b

    def test_relations_create_edges_and_update_existing(self):
        params = TunableParams(gamma=0.5)
        g = KnowledgeGraph()
        batch = CandidateBatch(
            entities=[
                _entity("fever", NodeType.Symptom, 0.9),
                _entity("influenza", NodeType.Disease, 0.9),
            ],
            relations=[_relation("fever", "influenza", EdgeType.Diagnostic, 0.9)],
        )
        apply_batch(g, batch, params)
        key = ("s:fever", "d:influenza", EdgeType.Diagnostic)
        assert g.has_edge(key)
        first_weight = g.get_edge(key).weight
        assert first_weight == pytest.approx(0.9, rel=1e-9)

        batch2 = CandidateBatch(
            entities=[
                _entity("fever", NodeType.Symptom, 0.9, doc_id="doc1"),
                _entity("influenza", NodeType.Disease, 0.9, doc_id="doc1"),
            ],
            relations=[_relation("fever", "influenza", EdgeType.Diagnostic, 0.8, doc_id="doc1")],
        )
        apply_batch(g, batch2, params)
        edge = g.get_edge(key)
        assert edge.weight == pytest.approx(0.5 * 0.9 + 0.5 * 0.8, rel=1e-9)
        assert edge.evidence_count == 2

    def test_low_probability_relation_dropped(self):
        g = KnowledgeGraph()
        batch = CandidateBatch(
            entities=[
                _entity("fever", NodeType.Symptom, 0.9),
                _entity("influenza", NodeType.Disease, 0.9),
            ],
            relations=[_relation("fever", "influenza", EdgeType.Diagnostic, 0.3)],
        )
        apply_batch(g, batch, TunableParams())
        assert g.edge_count == 0

    def test_entity_linking_merges_same_surface(self):
        g = KnowledgeGraph()
        params = TunableParams()
        batch = CandidateBatch(
            entities=[
                _entity("fever", NodeType.Symptom, 0.8),
                _entity("fever", NodeType.Symptom, 0.9, doc_id="doc1"),
            ]
        )
        report = apply_batch(g, batch, params)
        assert report.nodes_added == 1
        assert g.nodes["s:fever"].relevance == pytest.approx(0.9)

    def test_capacity_respected(self):
        g = KnowledgeGraph(CapacityConfig(max_edges=3, batch_budget=150))
        entities = [
            _entity(f"symptom{i}", NodeType.Symptom, conf=0.95) for i in range(6)
        ]
        relations = [
            _relation(f"symptom{i}", f"symptom{i+1}", EdgeType.SymptomSymptom, 0.9)
            for i in range(5)
        ]
        apply_batch(g, CandidateBatch(entities=entities, relations=relations), TunableParams())
        assert g.edge_count <= 3


def test_mrf_config_validation():
    with pytest.raises(InvalidField):
        MrfConfig(tau=1.0)
    with pytest.raises(InvalidField):
        MrfConfig(tau=-0.1)
    with pytest.raises(InvalidField):
        MrfConfig(smoothing=0.0)
    assert MrfConfig(tau=0.0).tau == 0.0
