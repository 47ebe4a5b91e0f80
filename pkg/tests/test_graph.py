"""Graph store: typed enumerations, mutations, capacity, persistence."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medgraph.errors import (
    CapacityExceeded,
    CorruptDocument,
    DuplicateIdWithConflict,
    EdgeNotFound,
    InvalidField,
    InvalidProbability,
    InvalidWeight,
    MissingEndpoint,
    SchemaVersionMismatch,
)
from medgraph.graph import (
    CapacityConfig,
    Edge,
    EdgeType,
    KnowledgeGraph,
    Node,
    NodeType,
)

from conftest import graph_strategy, random_graph


def test_node_type_enumeration_is_closed():
    assert len(NodeType) == 13
    assert {t.value for t in NodeType} == {
        "Disease", "Symptom", "Treatment", "PatientProfile", "Medication",
        "Procedure", "RiskFactor", "Comorbidity", "DiagnosticTest",
        "BodySystem", "Gene", "LifestyleFactor", "Biomarker",
    }


def test_edge_type_enumeration_is_closed():
    assert len(EdgeType) == 26
    assert {t.value for t in EdgeType} == {
        "Causal", "Therapeutic", "Associative", "Contraindicative",
        "Diagnostic", "Preventive", "Exacerbative", "Ameliorative",
        "Temporal", "DosageRelated", "SideEffect", "Interaction",
        "Epidemiological", "Genetic", "Allergic", "Monitoring",
        "Supportive", "Concomitant", "RiskAssociated", "SymptomSymptom",
        "ProcedureRelated", "OutcomeRelated", "AgeRelated",
        "LifestyleRelated", "BiomarkerRelated", "ComorbidityRelated",
    }


class TestAddNode:
    def test_single_insertion(self):
        g = KnowledgeGraph()
        g.add_node(Node(id="d:diabetes", type=NodeType.Disease, label="diabetes"))
        assert g.node_count == 1

    def test_identical_readd_is_noop(self):
        g = KnowledgeGraph()
        node = Node(id="d:diabetes", type=NodeType.Disease, label="diabetes")
        g.add_node(node)
        g.add_node(Node(id="d:diabetes", type=NodeType.Disease, label="diabetes"))
        assert g.node_count == 1

    def test_prior_out_of_bounds(self):
        g = KnowledgeGraph()
        with pytest.raises(InvalidField):
            g.add_node(
                Node(id="d:x", type=NodeType.Disease, label="x", prior=1.5)
            )

    def test_relevance_out_of_bounds(self):
        g = KnowledgeGraph()
        with pytest.raises(InvalidField):
            g.add_node(
                Node(id="d:x", type=NodeType.Disease, label="x", relevance=-0.2)
            )

    def test_conflicting_readd(self):
        g = KnowledgeGraph()
        g.add_node(Node(id="d:x", type=NodeType.Disease, label="x"))
        with pytest.raises(DuplicateIdWithConflict):
            g.add_node(Node(id="d:x", type=NodeType.Symptom, label="x"))
        with pytest.raises(DuplicateIdWithConflict):
            g.add_node(Node(id="d:x", type=NodeType.Disease, label="y"))


class TestAddEdge:
    def _two_nodes(self) -> KnowledgeGraph:
        g = KnowledgeGraph()
        g.add_node(Node(id="s:fever", type=NodeType.Symptom, label="fever"))
        g.add_node(Node(id="d:flu", type=NodeType.Disease, label="flu"))
        return g

    def test_single_insertion(self):
        g = self._two_nodes()
        g.add_edge(Edge(src="s:fever", dst="d:flu", type=EdgeType.Diagnostic, weight=0.6))
        assert g.edge_count == 1

    def test_missing_endpoint(self):
        g = self._two_nodes()
        with pytest.raises(MissingEndpoint):
            g.add_edge(Edge(src="s:fever", dst="d:absent", type=EdgeType.Diagnostic, weight=0.5))

    def test_invalid_weight(self):
        g = self._two_nodes()
        with pytest.raises(InvalidWeight):
            g.add_edge(Edge(src="s:fever", dst="d:flu", type=EdgeType.Diagnostic, weight=-0.1))

    def test_duplicate_routes_to_weight_update(self):
        g = self._two_nodes()
        g.add_edge(Edge(src="s:fever", dst="d:flu", type=EdgeType.Diagnostic, weight=0.6))
        g.add_edge(
            Edge(src="s:fever", dst="d:flu", type=EdgeType.Diagnostic, weight=0.8),
            gamma=0.5,
        )
        edge = g.get_edge(("s:fever", "d:flu", EdgeType.Diagnostic))
        assert g.edge_count == 1
        assert edge.weight == pytest.approx(0.7)
        assert edge.evidence_count == 1

    def test_capacity_exceeded_without_eviction(self):
        g = KnowledgeGraph(CapacityConfig(max_edges=1, batch_budget=10))
        for nid in ("s:a", "s:b", "s:c"):
            g.add_node(Node(id=nid, type=NodeType.Symptom, label=nid[2:]))
        g.add_edge(Edge(src="s:a", dst="s:b", type=EdgeType.SymptomSymptom, weight=0.5))
        with pytest.raises(CapacityExceeded):
            g.add_edge(
                Edge(src="s:b", dst="s:c", type=EdgeType.SymptomSymptom, weight=0.9),
                auto_evict=False,
            )
        # with eviction enabled the lowest-weight edge makes room
        g.add_edge(Edge(src="s:b", dst="s:c", type=EdgeType.SymptomSymptom, weight=0.9))
        assert g.edge_count == 1
        assert g.has_edge(("s:b", "s:c", EdgeType.SymptomSymptom))


class TestUpdateEdgeWeight:
    def _graph(self, weight: float) -> tuple[KnowledgeGraph, tuple]:
        g = KnowledgeGraph()
        g.add_node(Node(id="s:a", type=NodeType.Symptom, label="a"))
        g.add_node(Node(id="d:b", type=NodeType.Disease, label="b"))
        key = g.add_edge(Edge(src="s:a", dst="d:b", type=EdgeType.Diagnostic, weight=weight))
        return g, key

    def test_full_decay_retains_old_weight(self):
        g, key = self._graph(0.4)
        assert g.update_edge_weight(key, 0.9, gamma=1.0) == pytest.approx(0.4)

    def test_no_decay_adopts_new_probability(self):
        g, key = self._graph(0.4)
        assert g.update_edge_weight(key, 0.9, gamma=0.0) == pytest.approx(0.9)

    def test_blend(self):
        g, key = self._graph(0.4)
        new = g.update_edge_weight(key, 0.8, gamma=0.5)
        assert new == pytest.approx(0.6, rel=1e-9)
        assert g.get_edge(key).evidence_count == 1

    def test_edge_not_found(self):
        g, _ = self._graph(0.4)
        with pytest.raises(EdgeNotFound):
            g.update_edge_weight(("s:a", "d:zzz", EdgeType.Diagnostic), 0.5, 0.5)

    def test_invalid_probability(self):
        g, key = self._graph(0.4)
        with pytest.raises(InvalidProbability):
            g.update_edge_weight(key, 1.2, 0.5)
        with pytest.raises(InvalidProbability):
            g.update_edge_weight(key, 0.5, -0.1)

    @given(
        w_old=st.floats(0, 1),
        p_new=st.floats(0, 1),
        gamma=st.floats(0, 1),
    )
    def test_convexity(self, w_old, p_new, gamma):
        g, key = self._graph(w_old)
        result = g.update_edge_weight(key, p_new, gamma)
        lo, hi = min(w_old, p_new), max(w_old, p_new)
        assert lo - 1e-12 <= result <= hi + 1e-12


class TestSnapshot:
    def test_empty_roundtrip(self):
        g = KnowledgeGraph()
        assert KnowledgeGraph.load(g.snapshot()).structurally_equal(g)

    def test_small_roundtrip(self):
        g = KnowledgeGraph()
        for nid, ntype in (("d:flu", NodeType.Disease), ("s:fever", NodeType.Symptom), ("t:rest", NodeType.Treatment)):
            g.add_node(Node(id=nid, type=ntype, label=nid[2:]))
        g.add_edge(Edge(src="s:fever", dst="d:flu", type=EdgeType.Diagnostic, weight=0.6))
        g.add_edge(Edge(src="t:rest", dst="d:flu", type=EdgeType.Therapeutic, weight=0.4))
        loaded = KnowledgeGraph.load(g.dumps())
        assert loaded.structurally_equal(g)
        assert loaded.edge_count == 2

    def test_unknown_schema_version(self):
        g = KnowledgeGraph()
        doc = g.snapshot()
        doc["schema_version"] = 99
        with pytest.raises(SchemaVersionMismatch):
            KnowledgeGraph.load(doc)

    def test_corrupt_document(self):
        with pytest.raises(CorruptDocument):
            KnowledgeGraph.load("{not json")
        with pytest.raises(CorruptDocument):
            # missing the edges field entirely
            KnowledgeGraph.load({"schema_version": 1, "nodes": [], "capacity": {}, "batch_counter": 0})
        with pytest.raises(CorruptDocument):
            KnowledgeGraph.load({"schema_version": 1, "nodes": [{"id": "x"}], "capacity": {}, "batch_counter": 0, "edges": []})

    def test_dangling_edge_rejected(self):
        g = KnowledgeGraph()
        g.add_node(Node(id="s:a", type=NodeType.Symptom, label="a"))
        g.add_node(Node(id="s:b", type=NodeType.Symptom, label="b"))
        g.add_edge(Edge(src="s:a", dst="s:b", type=EdgeType.SymptomSymptom, weight=0.5))
        doc = g.snapshot()
        doc["nodes"] = [n for n in doc["nodes"] if n["id"] != "s:b"]
        with pytest.raises(CorruptDocument):
            KnowledgeGraph.load(doc)

    @settings(max_examples=50, deadline=None)
    @given(graph_strategy())
    def test_roundtrip_identity_property(self, g: KnowledgeGraph):
        assert KnowledgeGraph.load(g.dumps()).structurally_equal(g)


class TestCapacity:
    def test_validation(self):
        with pytest.raises(InvalidField):
            CapacityConfig(max_edges=0)
        with pytest.raises(InvalidField):
            CapacityConfig(batch_budget=0)

    def test_eviction_order_and_tiebreak(self):
        g = KnowledgeGraph(CapacityConfig(max_edges=10, batch_budget=10))
        for i in range(6):
            g.add_node(Node(id=f"s:n{i}", type=NodeType.Symptom, label=f"n{i}"))
        edges = [
            ("s:n0", "s:n1", 0.2),
            ("s:n1", "s:n2", 0.2),
            ("s:n2", "s:n3", 0.5),
            ("s:n3", "s:n4", 0.9),
        ]
        for src, dst, w in edges:
            g.add_edge(Edge(src=src, dst=dst, type=EdgeType.SymptomSymptom, weight=w))
        evicted = g.evict_to_capacity(target=2)
        assert evicted == 2
        # both 0.2-weight edges tie at the minimum; lexicographic order falls
        # to (src, dst), so (s:n0, s:n1) and (s:n1, s:n2) go first
        assert not g.has_edge(("s:n0", "s:n1", EdgeType.SymptomSymptom))
        assert not g.has_edge(("s:n1", "s:n2", EdgeType.SymptomSymptom))
        assert g.has_edge(("s:n2", "s:n3", EdgeType.SymptomSymptom))

    def test_at_capacity_evicts_nothing(self):
        g = KnowledgeGraph(CapacityConfig(max_edges=1, batch_budget=1))
        g.add_node(Node(id="s:a", type=NodeType.Symptom, label="a"))
        g.add_node(Node(id="s:b", type=NodeType.Symptom, label="b"))
        g.add_edge(Edge(src="s:a", dst="s:b", type=EdgeType.SymptomSymptom, weight=0.5))
        assert g.evict_to_capacity() == 0
        assert g.edge_count == 1


def test_remove_node_cascades_edges():
    g = KnowledgeGraph()
    for nid in ("s:a", "s:b", "s:c"):
        g.add_node(Node(id=nid, type=NodeType.Symptom, label=nid[2:]))
    g.add_edge(Edge(src="s:a", dst="s:b", type=EdgeType.SymptomSymptom, weight=0.5))
    g.add_edge(Edge(src="s:c", dst="s:a", type=EdgeType.SymptomSymptom, weight=0.5))
    removed = g.remove_node("s:a")
    assert len(removed) == 2
    assert g.edge_count == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_no_dangling_edges_after_random_mutations(seed):
    rng = random.Random(seed)
    g = random_graph(rng)
    node_ids = list(g.nodes)
    for _ in range(rng.randint(0, 5)):
        if not g.nodes:
            break
        victim = rng.choice(sorted(g.nodes))
        g.remove_node(victim)
    for key in g.edge_keys():
        assert key[0] in g.nodes and key[1] in g.nodes
    assert g.edge_count <= g.capacity.max_edges
    del node_ids
