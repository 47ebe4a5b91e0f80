"""Evaluation kit: metric formulas and the synthetic-world generator."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medgraph.errors import (
    DegenerateMarginals,
    EmptyGroundTruth,
    EmptyInput,
    InvalidSizes,
    LengthMismatch,
    ZeroVariance,
)
from medgraph.evalkit import (
    ConfusionCounts,
    RaterTable,
    WorldSizes,
    classification_metrics,
    cohens_kappa,
    extraction_accuracy,
    gas,
    generate_world,
    mue,
    paired_t,
    reference_rater_table,
    semantic_coverage,
    simulated_likert_events,
)
from medgraph.feedback import aggregate_likert
from medgraph.graph import EdgeType, KnowledgeGraph, NodeType
from medgraph.reasoning import (
    PatientProfile,
    Posterior,
    UtilityWeights,
    recommend,
    treatment_options_from_graph,
)
from medgraph.evalkit import _truth_posterior


class TestClassificationMetrics:
    def test_accuracy_oracle(self):
        metrics = classification_metrics(ConfusionCounts(tp=5, tn=3, fp=1, fn=1))
        assert metrics["accuracy"] == pytest.approx(0.8, rel=1e-9)

    def test_equal_precision_recall_gives_same_f1(self):
        metrics = classification_metrics(ConfusionCounts(tp=6, tn=0, fp=2, fn=2))
        assert metrics["precision"] == metrics["recall"] == pytest.approx(0.75)
        assert metrics["f1"] == pytest.approx(0.75, rel=1e-9)

    def test_perfect_classifier(self):
        metrics = classification_metrics(ConfusionCounts(tp=4, tn=6, fp=0, fn=0))
        assert metrics["precision"] == 1.0
        assert metrics["recall"] == 1.0
        assert metrics["f1"] == 1.0

    def test_zero_denominators_reported_per_metric(self):
        metrics = classification_metrics(ConfusionCounts(tp=0, tn=5, fp=0, fn=0))
        assert metrics["accuracy"] == 1.0
        assert metrics["precision"] is None
        assert metrics["recall"] is None
        assert metrics["f1"] is None


class TestMue:
    def test_identical(self):
        assert mue([0.1, 0.9], [0.1, 0.9]) == 0.0

    def test_single_difference(self):
        assert mue([0.5], [0.7]) == pytest.approx(0.2, rel=1e-9)

    def test_joint_permutation_invariance(self):
        a = [0.1, 0.5, 0.9]
        b = [0.2, 0.4, 0.7]
        permuted = mue([a[2], a[0], a[1]], [b[2], b[0], b[1]])
        assert mue(a, b) == pytest.approx(permuted)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            mue([0.1], [0.1, 0.2])
        with pytest.raises(EmptyInput):
            mue([], [])


class TestKappa:
    def test_perfect_agreement(self):
        table = RaterTable(("x", "y", "x", "z"), ("x", "y", "x", "z"))
        assert cohens_kappa(table) == pytest.approx(1.0)

    def test_chance_level(self):
        # p_o equals p_e -> kappa 0
        table = RaterTable(("x", "x", "y", "y"), ("x", "y", "x", "y"))
        assert cohens_kappa(table) == pytest.approx(0.0, abs=1e-12)

    def test_reference_oracle(self):
        # p_o = 0.8, p_e = 0.5 -> (0.8 - 0.5) / 0.5 = 0.6
        assert cohens_kappa(reference_rater_table()) == pytest.approx(0.6, rel=1e-9)

    def test_symmetry(self):
        table = reference_rater_table()
        swapped = RaterTable(table.rater_b, table.rater_a)
        assert cohens_kappa(table) == pytest.approx(cohens_kappa(swapped), rel=1e-12)

    def test_degenerate_marginals(self):
        with pytest.raises(DegenerateMarginals):
            cohens_kappa(RaterTable(("x", "x"), ("x", "x")))


class TestPairedT:
    def test_symmetric_differences(self):
        t, df = paired_t([2.0, 1.0], [1.0, 2.0])
        assert t == pytest.approx(0.0, abs=1e-12)
        assert df == 1

    def test_hand_computed(self):
        t, df = paired_t([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
        assert t == pytest.approx(2 * math.sqrt(3), rel=1e-9)
        assert df == 2

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            paired_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            paired_t([1.0], [1.0, 2.0])
        with pytest.raises(LengthMismatch):
            paired_t([1.0], [2.0])


class TestCoverage:
    def test_identical_graphs(self):
        world = generate_world(3, WorldSizes(3, 6, 3, 2), 0.0)
        assert semantic_coverage(world.graph, world) == 1.0
        assert gas(world.graph, world) == 1.0

    def test_empty_graph(self):
        world = generate_world(3, WorldSizes(3, 6, 3, 2), 0.0)
        assert semantic_coverage(KnowledgeGraph(), world) == 0.0

    def test_partial_with_extraneous(self):
        world = generate_world(5, WorldSizes(2, 4, 2, 1), 0.0)
        partial = world.graph.copy()
        # drop 30% of edges, then add extraneous ones; extraneous never count
        keys = sorted(partial.edge_keys(), key=lambda k: (k[0], k[1], k[2].value))
        for key in keys[: max(1, len(keys) // 3)]:
            partial.remove_edge(key)
        from medgraph.graph import Edge, Node

        partial.add_node(Node(id="s:extra", type=NodeType.Symptom, label="extra"))
        partial.add_edge(
            Edge(src="s:extra", dst=keys[-1][0], type=EdgeType.Associative, weight=0.5)
        )
        truth_total = world.graph.node_count + world.graph.edge_count
        present = world.graph.node_count + partial.edge_count - 1  # extras excluded
        expected = present / truth_total
        assert semantic_coverage(partial, world) == pytest.approx(expected, rel=1e-9)

    def test_monotone_as_elements_added(self):
        world = generate_world(9, WorldSizes(3, 6, 3, 2), 0.0)
        g = KnowledgeGraph()
        last = 0.0
        snapshot = world.graph.snapshot()
        for node_doc in snapshot["nodes"]:
            from medgraph.graph import Node

            g.add_node(Node.from_dict(node_doc))
            value = semantic_coverage(g, world)
            assert value >= last
            last = value

    def test_empty_ground_truth(self):
        world = generate_world(3, WorldSizes(3, 6, 3, 2), 0.0)
        empty = world.mentioned_world()
        object.__setattr__(empty, "graph", KnowledgeGraph())
        with pytest.raises(EmptyGroundTruth):
            semantic_coverage(KnowledgeGraph(), empty)


class TestExtractionAccuracy:
    def test_perfect(self):
        truth = {("doc0", "fever", "Symptom")}
        assert extraction_accuracy(truth, truth) == 1.0

    def test_none_found(self):
        truth = {("doc0", "fever", "Symptom")}
        assert extraction_accuracy(set(), truth) == 0.0

    def test_three_of_four(self):
        truth = {(f"doc{i}", "x", "Symptom") for i in range(4)}
        found = set(list(sorted(truth))[:3])
        assert extraction_accuracy(found, truth) == pytest.approx(0.75)

    def test_empty_truth(self):
        with pytest.raises(EmptyGroundTruth):
            extraction_accuracy({("a", "b", "c")}, set())


class TestGenerateWorld:
    def test_exact_counts(self):
        world = generate_world(1, WorldSizes(10, 30, 15, 20), 0.0)
        by_type = {}
        for node in world.graph.nodes.values():
            by_type[node.type] = by_type.get(node.type, 0) + 1
        assert by_type[NodeType.Disease] == 10
        assert by_type[NodeType.Symptom] == 30
        assert by_type[NodeType.Treatment] == 15
        assert by_type[NodeType.PatientProfile] == 20

    def test_same_seed_byte_identical(self):
        a = generate_world(77, WorldSizes(6, 14, 7, 4), 0.2)
        b = generate_world(77, WorldSizes(6, 14, 7, 4), 0.2)
        assert a.serialize() == b.serialize()

    def test_different_seeds_differ(self):
        a = generate_world(1, WorldSizes(4, 8, 4, 2), 0.0)
        b = generate_world(2, WorldSizes(4, 8, 4, 2), 0.0)
        assert a.serialize() != b.serialize()

    def test_invalid_sizes(self):
        with pytest.raises(InvalidSizes):
            WorldSizes(0, 5, 5, 5)
        with pytest.raises(InvalidSizes):
            WorldSizes(2, 11, 2, 2)  # 11 symptoms > 5 * 2 diseases
        with pytest.raises(InvalidSizes):
            WorldSizes(2, 4, 7, 2)  # 7 treatments > 3 * 2 diseases

    def test_degree_constraints(self):
        world = generate_world(13, WorldSizes(8, 24, 12, 5), 0.0)
        g = world.graph
        for disease in g.nodes_of_type(NodeType.Disease):
            symptom_links = [
                e
                for e in list(g.in_edges(disease.id)) + list(g.out_edges(disease.id))
                if e.type in (EdgeType.Diagnostic, EdgeType.Causal)
            ]
            treatment_links = [
                e for e in g.in_edges(disease.id) if e.type is EdgeType.Therapeutic
            ]
            assert 2 <= len(symptom_links) <= 5
            assert 1 <= len(treatment_links) <= 3
        # every symptom and treatment participates
        for symptom in g.nodes_of_type(NodeType.Symptom):
            assert g.incident_keys(symptom.id)
        for treatment in g.nodes_of_type(NodeType.Treatment):
            assert g.incident_keys(treatment.id)

    def test_every_edge_has_a_sentence(self):
        world = generate_world(21, WorldSizes(5, 12, 6, 3), 0.0)
        mentioned = world.mentioned_edge_keys()
        for key in world.graph.edge_keys():
            assert key in mentioned

    def test_case_optima_match_recommend_oracle(self):
        world = generate_world(31, WorldSizes(5, 12, 6, 4), 0.0)
        options = treatment_options_from_graph(world.graph)
        weights = UtilityWeights(1.0, 1.0)
        for case in world.cases[:6]:
            posterior_map = _truth_posterior(world.graph, case.symptoms)
            posterior = Posterior(
                entries=tuple(
                    sorted(posterior_map.items(), key=lambda e: (-e[1], e[0]))
                ),
                epsilon=0.01,
            )
            plan = recommend(
                posterior, options, world.profiles[case.profile_id], weights
            )
            assert plan.chosen == (case.optimal_treatment,)
            assert plan.expected_utility == pytest.approx(case.optimal_utility, abs=1e-9)

    def test_noise_rate_bounds(self):
        with pytest.raises(Exception):
            generate_world(1, WorldSizes(3, 6, 3, 2), 1.5)


def test_simulated_panel_matches_report_targets():
    events = simulated_likert_events()
    summary = aggregate_likert(events)
    assert summary["accuracy"][0] == pytest.approx(4.3, rel=1e-9)
    assert summary["reliability"][0] == pytest.approx(4.1, rel=1e-9)
    assert summary["usability"][0] == pytest.approx(4.2, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_metrics_are_pure(seed):
    rng = random.Random(seed)
    counts = ConfusionCounts(
        tp=rng.randint(0, 20), tn=rng.randint(0, 20), fp=rng.randint(0, 20), fn=rng.randint(0, 20)
    )
    assert classification_metrics(counts) == classification_metrics(counts)
