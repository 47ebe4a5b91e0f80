"""Batch fusion: merge accepted candidates, score, prune, enforce capacity.

Element scoring reduces the graph's energy model to a per-element quantity:
node energy is the sum of -log relevance and -log incident edge weights, and
retention is exp(-energy / (1 + degree)), i.e. the geometric mean of
relevance and incident weights. Edges retain on their own weight. The global
normalizer is never computed; thresholding only needs the per-element score,
and the ordering is invariant under any uniform monotone reweighting in
log-space.

Pruning is a single pass per batch (no fixpoint iteration) to keep update
latency bounded; edges incident to a removed node go with it, so the graph
never holds a dangling edge. The whole-graph scoring pass is vectorized, and
tests pin it to the per-element scorer.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
import numpy as np

from .errors import ElementNotFound, InvalidCounts, InvalidField
from .extraction import (
    EDGE_ENDPOINT_TYPES,
    CandidateEntity,
    CandidateRelation,
    GraphEmbeddingIndex,
)
from .feedback import TunableParams
from .graph import Edge, EdgeKey, KnowledgeGraph, Node, NodeType, make_node_id

ENERGY_FLOOR = 1e-9
DEFAULT_LINK_THRESHOLD = 0.85


@dataclass(frozen=True)
class MrfConfig:
    tau: float = 0.7
    smoothing: float = 1.0

    def __post_init__(self) -> None:
        # tau = 0 is admitted so the "prune nothing" boundary is expressible
        if not 0.0 <= self.tau < 1.0:
            raise InvalidField(f"tau must be within [0, 1), got {self.tau!r}")
        if self.smoothing <= 0:
            raise InvalidField("smoothing must be positive")


@dataclass
class BatchReport:
    batch_id: int
    candidates_seen: int
    nodes_added: int
    edges_added: int
    elements_pruned: int
    elapsed_ms: float
    final_edge_count: int

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "candidates_seen": self.candidates_seen,
            "nodes_added": self.nodes_added,
            "edges_added": self.edges_added,
            "elements_pruned": self.elements_pruned,
            "elapsed_ms": self.elapsed_ms,
            "final_edge_count": self.final_edge_count,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class ElementScore:
    element: str | EdgeKey
    unary: float
    pairwise_sum: float
    retention: float


@dataclass(frozen=True)
class CooccurrenceCounts:
    pair_count: int
    source_count: int
    alternatives: int = 2

    def __post_init__(self) -> None:
        if self.pair_count < 0 or self.source_count < 0:
            raise InvalidCounts("counts must be nonnegative")
        if self.pair_count > self.source_count:
            raise InvalidCounts("pair count cannot exceed source count")
        if self.alternatives < 2:
            raise InvalidCounts("need at least 2 alternatives for smoothing")


def estimate_link_probability(counts: CooccurrenceCounts, cfg: MrfConfig) -> float:
    """Laplace-smoothed frequency estimate of the link probability."""
    k = cfg.smoothing
    return (counts.pair_count + k) / (counts.source_count + k * counts.alternatives)


def _energy(value: float) -> float:
    return -math.log(max(value, ENERGY_FLOOR))


def mrf_score(g: KnowledgeGraph, element: str | EdgeKey) -> ElementScore:
    """Retention score for one node id or edge key."""
    if isinstance(element, str):
        node = g.nodes.get(element)
        if node is None:
            raise ElementNotFound(f"no node {element!r}")
        unary = _energy(node.relevance)
        pairwise = 0.0
        degree = 0
        for key in g.incident_keys(element):
            pairwise += _energy(g.get_edge(key).weight)
            degree += 1
        retention = math.exp(-(unary + pairwise) / (1 + degree))
        return ElementScore(element, unary, pairwise, retention)
    key = tuple(element)  # type: ignore[assignment]
    if not g.has_edge(key):
        raise ElementNotFound(f"no edge {key}")
    weight = g.get_edge(key).weight
    return ElementScore(key, 0.0, _energy(weight), weight)


def score_all(g: KnowledgeGraph) -> tuple[dict[str, float], dict[EdgeKey, float]]:
    """Vectorized retention for every node and edge; matches mrf_score."""
    node_ids = list(g.nodes.keys())
    if not node_ids:
        return {}, {}
    index = {nid: i for i, nid in enumerate(node_ids)}
    relevance = np.array([g.nodes[nid].relevance for nid in node_ids])
    unary = -np.log(np.maximum(relevance, ENERGY_FLOOR))

    edge_keys = list(g.edge_keys())
    if edge_keys:
        weights = np.array([g.get_edge(k).weight for k in edge_keys])
        energy = -np.log(np.maximum(weights, ENERGY_FLOOR))
        src = np.array([index[k[0]] for k in edge_keys])
        dst = np.array([index[k[1]] for k in edge_keys])
        pairwise = np.zeros(len(node_ids))
        degree = np.zeros(len(node_ids))
        np.add.at(pairwise, src, energy)
        np.add.at(pairwise, dst, energy)
        np.add.at(degree, src, 1.0)
        np.add.at(degree, dst, 1.0)
        edge_retention = dict(zip(edge_keys, weights.tolist()))
    else:
        pairwise = np.zeros(len(node_ids))
        degree = np.zeros(len(node_ids))
        edge_retention = {}

    node_retention = np.exp(-(unary + pairwise) / (1.0 + degree))
    return dict(zip(node_ids, node_retention.tolist())), edge_retention


def prune(g: KnowledgeGraph, cfg: MrfConfig) -> list[str | EdgeKey]:
    """Single-pass removal of every element whose retention falls below tau.

    Scores are computed on the pre-removal state (keep iff retention >= tau);
    edges incident to a removed node are removed as well. Returns the removed
    elements, nodes first, in deterministic order.
    """
    node_retention, edge_retention = score_all(g)
    doomed_nodes = sorted(nid for nid, r in node_retention.items() if r < cfg.tau)
    doomed_edges = {k for k, r in edge_retention.items() if r < cfg.tau}
    removed: list[str | EdgeKey] = []
    for nid in doomed_nodes:
        doomed_edges.update(g.remove_node(nid))
        removed.append(nid)
    for key in sorted(doomed_edges, key=lambda k: (k[0], k[1], k[2].value)):
        if g.has_edge(key):
            g.remove_edge(key)
        removed.append(key)
    return removed


def enforce_capacity(g: KnowledgeGraph) -> int:
    """Evict lowest-weight edges (ties by key) until within max_edges."""
    return g.evict_to_capacity()


@dataclass
class CandidateBatch:
    entities: list[CandidateEntity] = field(default_factory=list)
    relations: list[CandidateRelation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entities) + len(self.relations)


def _resolve_endpoint(
    surface: str,
    wanted: NodeType | None,
    surface_map: dict[tuple[str, NodeType], str],
) -> str | None:
    if wanted is not None:
        hit = surface_map.get((surface, wanted))
        if hit is not None:
            return hit
    matches = {nid for (s, _), nid in surface_map.items() if s == surface}
    if len(matches) == 1:
        return matches.pop()
    return None


def apply_batch(
    g: KnowledgeGraph,
    batch: CandidateBatch,
    params: TunableParams,
    *,
    smoothing: float = 1.0,
    link_threshold: float = DEFAULT_LINK_THRESHOLD,
) -> BatchReport:
    """Fuse one confidence-filtered candidate batch into the graph.

    Entity candidates are processed in confidence order and total additions
    (nodes plus edges) are capped by batch_budget, so the highest-confidence
    candidates win the budget. An entity merges into an existing node when
    its id already exists or its embedding matches a same-type node at or
    above the link threshold (merges are free); otherwise it becomes a new
    node whose relevance is the candidate confidence.

    Relation candidates fuse into a per-(src, dst, type) link probability:
    the max of the strongest single-occurrence probability and the
    Laplace-smoothed frequency estimate over this batch's co-occurrence
    counts. Links strictly above tau become edges (new weight = probability)
    or refresh existing edges through the decay blend. The batch ends with a
    prune pass and capacity enforcement; elements_pruned counts both.
    """
    started = time.perf_counter()
    g.batch_counter += 1
    cfg = MrfConfig(tau=params.tau, smoothing=smoothing)
    budget = g.capacity.batch_budget

    ranked = sorted(
        batch.entities,
        key=lambda c: -(c.confidence if c.confidence is not None else 0.0),
    )

    index = GraphEmbeddingIndex(g)
    surface_map: dict[tuple[str, NodeType], str] = {}
    docs_by_endpoint: dict[tuple[str, NodeType], set[str]] = {}
    additions = 0
    nodes_added = 0

    for c in ranked:
        docs_by_endpoint.setdefault((c.surface, c.entity_type), set()).add(c.provenance)
        if (c.surface, c.entity_type) in surface_map:
            continue
        conf = c.confidence if c.confidence is not None else 0.0
        nid = make_node_id(c.entity_type, c.surface.replace(" ", "_"))
        if g.has_node(nid) and g.nodes[nid].type is c.entity_type:
            g.add_node(
                Node(
                    id=nid,
                    type=c.entity_type,
                    label=g.nodes[nid].label,
                    embedding=tuple(c.embedding.tolist()) if c.embedding.any() else (),
                    relevance=conf,
                )
            )
            surface_map[(c.surface, c.entity_type)] = nid
            continue
        match_id, match_cos = index.best_match(c.entity_type, c.embedding)
        if match_id is not None and match_cos >= link_threshold:
            node = g.nodes[match_id]
            node.relevance = max(node.relevance, conf)
            node.updated_at = g.batch_counter
            surface_map[(c.surface, c.entity_type)] = match_id
            continue
        if additions >= budget:
            continue
        g.add_node(
            Node(
                id=nid,
                type=c.entity_type,
                label=c.surface,
                embedding=tuple(c.embedding.tolist()) if c.embedding.any() else (),
                relevance=conf,
            )
        )
        index.add(c.entity_type, nid, c.embedding)
        surface_map[(c.surface, c.entity_type)] = nid
        additions += 1
        nodes_added += 1

    # group relation occurrences per directed typed link
    grouped: dict[tuple[str, str, str], list[CandidateRelation]] = {}
    for r in batch.relations:
        grouped.setdefault((r.src_surface, r.dst_surface, r.edge_type.value), []).append(r)

    edges_added = 0
    order = sorted(
        grouped.items(),
        key=lambda item: (-max(r.prob for r in item[1]), item[0]),
    )
    for (src_surface, dst_surface, _), occurrences in order:
        edge_type = occurrences[0].edge_type
        endpoint_types = EDGE_ENDPOINT_TYPES.get(edge_type, (None, None))
        src_id = _resolve_endpoint(src_surface, endpoint_types[0], surface_map)
        dst_id = _resolve_endpoint(dst_surface, endpoint_types[1], surface_map)
        if src_id is None or dst_id is None or src_id == dst_id:
            continue
        pair_docs = {r.provenance for r in occurrences}
        src_docs = set(pair_docs)
        if endpoint_types[0] is not None:
            src_docs |= docs_by_endpoint.get((src_surface, endpoint_types[0]), set())
        p_ml = estimate_link_probability(
            CooccurrenceCounts(len(pair_docs), len(src_docs)), cfg
        )
        p_link = max(max(r.prob for r in occurrences), p_ml)
        if not p_link > params.tau:
            continue
        key = (src_id, dst_id, edge_type)
        if g.has_edge(key):
            g.update_edge_weight(key, p_link, params.gamma)
        elif additions < budget:
            g.add_edge(Edge(src=src_id, dst=dst_id, type=edge_type, weight=p_link, evidence_count=1))
            additions += 1
            edges_added += 1

    removed = prune(g, cfg)
    evicted = enforce_capacity(g)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return BatchReport(
        batch_id=g.batch_counter,
        candidates_seen=len(batch),
        nodes_added=nodes_added,
        edges_added=edges_added,
        elements_pruned=len(removed) + evicted,
        elapsed_ms=elapsed_ms,
        final_edge_count=g.edge_count,
    )
