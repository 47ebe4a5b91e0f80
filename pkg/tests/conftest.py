"""Shared fixtures and graph generators for the test suite."""

from __future__ import annotations

import random

import pytest
from hypothesis import strategies as st

from medgraph.extraction import embed, preprocess
from medgraph.graph import (
    CapacityConfig,
    Edge,
    EdgeType,
    KnowledgeGraph,
    Node,
    NodeType,
)

CORE_TYPES = (NodeType.Disease, NodeType.Symptom, NodeType.Treatment)


def build_graph(
    spec: list[tuple[str, NodeType, float]],
    edges: list[tuple[str, str, EdgeType, float]],
    capacity: CapacityConfig | None = None,
) -> KnowledgeGraph:
    g = KnowledgeGraph(capacity or CapacityConfig())
    for nid, ntype, relevance in spec:
        label = nid.split(":", 1)[-1]
        g.add_node(
            Node(
                id=nid,
                type=ntype,
                label=label,
                relevance=relevance,
                embedding=tuple(embed(preprocess(label)).tolist()),
            )
        )
    for src, dst, etype, weight in edges:
        g.add_edge(Edge(src=src, dst=dst, type=etype, weight=weight, evidence_count=1))
    return g


def random_graph(
    rng: random.Random,
    max_nodes: int = 10,
    max_extra_edges: int = 12,
    capacity: CapacityConfig | None = None,
) -> KnowledgeGraph:
    """Small random typed graph; always has at least one node."""
    g = KnowledgeGraph(capacity or CapacityConfig())
    n = rng.randint(1, max_nodes)
    ids = []
    for i in range(n):
        ntype = rng.choice(CORE_TYPES)
        nid = f"{ntype.value[0].lower()}:{ntype.value.lower()}{i}"
        g.add_node(
            Node(
                id=nid,
                type=ntype,
                label=f"{ntype.value.lower()} {i}",
                prior=round(rng.random(), 4) if ntype is NodeType.Disease else None,
                relevance=round(rng.uniform(0.05, 1.0), 4),
                embedding=tuple(embed([f"{ntype.value.lower()}{i}"]).tolist()),
            )
        )
        ids.append(nid)
    edge_types = list(EdgeType)
    for _ in range(rng.randint(0, max_extra_edges)):
        src, dst = rng.choice(ids), rng.choice(ids)
        if src == dst:
            continue
        g.add_edge(
            Edge(
                src=src,
                dst=dst,
                type=rng.choice(edge_types),
                weight=round(rng.uniform(0.0, 1.0), 4),
                evidence_count=rng.randint(0, 5),
            )
        )
    return g


def diagnostic_graph(rng: random.Random) -> KnowledgeGraph:
    """Random graph guaranteed to hold diseases and symptoms for diagnosis."""
    g = KnowledgeGraph()
    n_dis = rng.randint(1, 6)
    n_sym = rng.randint(1, 8)
    for i in range(n_dis):
        g.add_node(
            Node(
                id=f"d:dis{i}",
                type=NodeType.Disease,
                label=f"dis {i}",
                prior=round(rng.uniform(0.01, 1.0), 4),
            )
        )
    for i in range(n_sym):
        g.add_node(Node(id=f"s:sym{i}", type=NodeType.Symptom, label=f"sym {i}"))
    for i in range(n_dis):
        for j in range(n_sym):
            if rng.random() < 0.5:
                if rng.random() < 0.5:
                    src, dst, etype = f"s:sym{j}", f"d:dis{i}", EdgeType.Diagnostic
                else:
                    src, dst, etype = f"d:dis{i}", f"s:sym{j}", EdgeType.Causal
                g.add_edge(
                    Edge(src=src, dst=dst, type=etype, weight=round(rng.uniform(0, 1), 4))
                )
    return g


@st.composite
def graph_strategy(draw) -> KnowledgeGraph:
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    return random_graph(random.Random(seed))


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
