"""Typed dynamic knowledge graph store.

Nodes and edges are typed against closed enumerations (13 node types,
26 relationship types). Edge weights live in [0, 1] and are refreshed with a
decay blend so repeated evidence converges instead of oscillating. The store
enforces a hard edge capacity: any mutating operation leaves the graph at or
below ``capacity.max_edges``.

Timestamps are logical batch counters, not wall clocks, so identical inputs
rebuild identical graphs.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator

from .errors import (
    CapacityExceeded,
    CorruptDocument,
    DuplicateIdWithConflict,
    EdgeNotFound,
    InvalidField,
    InvalidProbability,
    InvalidWeight,
    MissingEndpoint,
    SchemaVersionMismatch,
    UnknownNode,
)

SCHEMA_VERSION = 1

DEFAULT_MAX_EDGES = 987_654
DEFAULT_BATCH_BUDGET = 150


class NodeType(str, Enum):
    Disease = "Disease"
    Symptom = "Symptom"
    Treatment = "Treatment"
    PatientProfile = "PatientProfile"
    Medication = "Medication"
    Procedure = "Procedure"
    RiskFactor = "RiskFactor"
    Comorbidity = "Comorbidity"
    DiagnosticTest = "DiagnosticTest"
    BodySystem = "BodySystem"
    Gene = "Gene"
    LifestyleFactor = "LifestyleFactor"
    Biomarker = "Biomarker"


class EdgeType(str, Enum):
    Causal = "Causal"
    Therapeutic = "Therapeutic"
    Associative = "Associative"
    Contraindicative = "Contraindicative"
    Diagnostic = "Diagnostic"
    Preventive = "Preventive"
    Exacerbative = "Exacerbative"
    Ameliorative = "Ameliorative"
    Temporal = "Temporal"
    DosageRelated = "DosageRelated"
    SideEffect = "SideEffect"
    Interaction = "Interaction"
    Epidemiological = "Epidemiological"
    Genetic = "Genetic"
    Allergic = "Allergic"
    Monitoring = "Monitoring"
    Supportive = "Supportive"
    Concomitant = "Concomitant"
    RiskAssociated = "RiskAssociated"
    SymptomSymptom = "SymptomSymptom"
    ProcedureRelated = "ProcedureRelated"
    OutcomeRelated = "OutcomeRelated"
    AgeRelated = "AgeRelated"
    LifestyleRelated = "LifestyleRelated"
    BiomarkerRelated = "BiomarkerRelated"
    ComorbidityRelated = "ComorbidityRelated"


# id namespace prefixes, one per node type
ID_PREFIX: dict[NodeType, str] = {
    NodeType.Disease: "d",
    NodeType.Symptom: "s",
    NodeType.Treatment: "t",
    NodeType.PatientProfile: "p",
    NodeType.Medication: "m",
    NodeType.Procedure: "pr",
    NodeType.RiskFactor: "rf",
    NodeType.Comorbidity: "cm",
    NodeType.DiagnosticTest: "dt",
    NodeType.BodySystem: "bs",
    NodeType.Gene: "gn",
    NodeType.LifestyleFactor: "lf",
    NodeType.Biomarker: "bm",
}

EdgeKey = tuple[str, str, EdgeType]


def make_node_id(node_type: NodeType, slug: str) -> str:
    """Namespaced node id, e.g. ``d:diabetes`` for a Disease."""
    return f"{ID_PREFIX[node_type]}:{slug}"


def _check_unit(value: float, name: str) -> float:
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise InvalidField(f"{name} must be in [0, 1], got {value!r}")
    return value


@dataclass
class Node:
    id: str
    type: NodeType
    label: str
    prior: float | None = None
    attributes: dict[str, float] = field(default_factory=dict)
    embedding: tuple[float, ...] = ()
    relevance: float = 1.0
    created_at: int = 0
    updated_at: int = 0

    def validate(self) -> None:
        if not self.id:
            raise InvalidField("node id must be nonempty")
        if self.prior is not None:
            _check_unit(self.prior, f"prior of {self.id}")
        _check_unit(self.relevance, f"relevance of {self.id}")
        if self.embedding:
            norm = math.sqrt(sum(x * x for x in self.embedding))
            if abs(norm - 1.0) > 1e-6:
                raise InvalidField(
                    f"embedding of {self.id} must have unit L2 norm, got {norm}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "type": self.type.value,
            "label": self.label,
            "prior": self.prior,
            "attributes": dict(self.attributes),
            "embedding": list(self.embedding),
            "relevance": self.relevance,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Node":
        return cls(
            id=d["id"],
            type=NodeType(d["type"]),
            label=d["label"],
            prior=d.get("prior"),
            attributes=dict(d.get("attributes", {})),
            embedding=tuple(d.get("embedding", ())),
            relevance=d.get("relevance", 1.0),
            created_at=d.get("created_at", 0),
            updated_at=d.get("updated_at", 0),
        )


@dataclass
class Edge:
    src: str
    dst: str
    type: EdgeType
    weight: float
    evidence_count: int = 0
    created_at: int = 0
    updated_at: int = 0

    @property
    def key(self) -> EdgeKey:
        return (self.src, self.dst, self.type)

    def validate(self) -> None:
        w = float(self.weight)
        if math.isnan(w) or not 0.0 <= w <= 1.0:
            raise InvalidWeight(f"edge weight must be in [0, 1], got {w!r}")
        if self.evidence_count < 0:
            raise InvalidField("evidence_count must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "src": self.src,
            "dst": self.dst,
            "type": self.type.value,
            "weight": self.weight,
            "evidence_count": self.evidence_count,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Edge":
        return cls(
            src=d["src"],
            dst=d["dst"],
            type=EdgeType(d["type"]),
            weight=d["weight"],
            evidence_count=d.get("evidence_count", 0),
            created_at=d.get("created_at", 0),
            updated_at=d.get("updated_at", 0),
        )


@dataclass(frozen=True)
class CapacityConfig:
    max_edges: int = DEFAULT_MAX_EDGES
    batch_budget: int = DEFAULT_BATCH_BUDGET

    def __post_init__(self) -> None:
        if self.max_edges <= 0:
            raise InvalidField("max_edges must be positive")
        if self.batch_budget <= 0:
            raise InvalidField("batch_budget must be positive")

    def to_dict(self) -> dict[str, int]:
        return {"max_edges": self.max_edges, "batch_budget": self.batch_budget}


class KnowledgeGraph:
    """System of record: id-keyed nodes plus (src, dst, type)-keyed edges.

    Adjacency is indexed both ways so incident-edge scans are O(degree).
    Index containers are dicts (never sets) to keep iteration order equal to
    insertion order across processes.
    """

    def __init__(self, capacity: CapacityConfig | None = None) -> None:
        self.capacity = capacity or CapacityConfig()
        self.nodes: dict[str, Node] = {}
        self.batch_counter: int = 0
        self._edges: dict[EdgeKey, Edge] = {}
        self._out: dict[str, dict[EdgeKey, None]] = {}
        self._in: dict[str, dict[EdgeKey, None]] = {}

    # --- basic accessors ---------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def has_node(self, node_id: str) -> bool:
        return node_id in self.nodes

    def get_node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node {node_id!r}") from None

    def has_edge(self, key: EdgeKey) -> bool:
        return key in self._edges

    def get_edge(self, key: EdgeKey) -> Edge:
        try:
            return self._edges[key]
        except KeyError:
            raise EdgeNotFound(f"no edge {key}") from None

    def edges(self) -> Iterator[Edge]:
        return iter(self._edges.values())

    def edge_keys(self) -> Iterator[EdgeKey]:
        return iter(self._edges.keys())

    def nodes_of_type(self, node_type: NodeType) -> Iterator[Node]:
        for node in self.nodes.values():
            if node.type is node_type:
                yield node

    def out_edges(self, node_id: str) -> Iterator[Edge]:
        for key in self._out.get(node_id, ()):
            yield self._edges[key]

    def in_edges(self, node_id: str) -> Iterator[Edge]:
        for key in self._in.get(node_id, ()):
            yield self._edges[key]

    def incident_keys(self, node_id: str) -> list[EdgeKey]:
        """Incident edge keys; a self-loop appears twice (once per endpoint)."""
        keys = list(self._out.get(node_id, ()))
        keys.extend(self._in.get(node_id, ()))
        return keys

    def edges_between(
        self, a: str, b: str, types: tuple[EdgeType, ...] | None = None
    ) -> list[Edge]:
        """Edges connecting a and b in either direction, optionally type-filtered."""
        found = []
        for key in self._out.get(a, ()):
            if key[1] == b and (types is None or key[2] in types):
                found.append(self._edges[key])
        for key in self._out.get(b, ()):
            if key[1] == a and (types is None or key[2] in types):
                found.append(self._edges[key])
        return found

    # --- mutations -----------------------------------------------------

    def add_node(self, node: Node) -> str:
        """Insert a node, or refresh it if an identical one already exists.

        Re-adding with the same id, type and label merges the mutable fields
        (prior, attributes, embedding, relevance) and refreshes updated_at.
        A same-id node with different type or label is a conflict.
        """
        node.validate()
        existing = self.nodes.get(node.id)
        if existing is not None:
            if existing.type is not node.type or existing.label != node.label:
                raise DuplicateIdWithConflict(
                    f"node {node.id!r} already present as "
                    f"({existing.type.value}, {existing.label!r})"
                )
            if node.prior is not None:
                existing.prior = node.prior
            if node.attributes:
                existing.attributes.update(node.attributes)
            if node.embedding:
                existing.embedding = node.embedding
            existing.relevance = max(existing.relevance, node.relevance)
            existing.updated_at = self.batch_counter
            return existing.id
        node.created_at = self.batch_counter
        node.updated_at = self.batch_counter
        self.nodes[node.id] = node
        return node.id

    def add_edge(self, edge: Edge, *, auto_evict: bool = True, gamma: float = 0.0) -> EdgeKey:
        """Insert an edge; a duplicate (src, dst, type) updates the weight instead.

        When the graph is at capacity, the lowest-weight edges are evicted to
        make room unless ``auto_evict`` is False, in which case the call fails.
        """
        edge.validate()
        if edge.src not in self.nodes:
            raise MissingEndpoint(f"source node {edge.src!r} not in graph")
        if edge.dst not in self.nodes:
            raise MissingEndpoint(f"target node {edge.dst!r} not in graph")
        key = edge.key
        if key in self._edges:
            self.update_edge_weight(key, edge.weight, gamma)
            return key
        if len(self._edges) >= self.capacity.max_edges:
            if not auto_evict:
                raise CapacityExceeded(
                    f"graph at capacity ({self.capacity.max_edges} edges)"
                )
            self.evict_to_capacity(target=self.capacity.max_edges - 1)
        edge.created_at = self.batch_counter
        edge.updated_at = self.batch_counter
        self._edges[key] = edge
        self._out.setdefault(edge.src, {})[key] = None
        self._in.setdefault(edge.dst, {})[key] = None
        return key

    def update_edge_weight(self, key: EdgeKey, p_new: float, gamma: float) -> float:
        """Blend new evidence into an edge weight: gamma*old + (1-gamma)*new."""
        edge = self._edges.get(key)
        if edge is None:
            raise EdgeNotFound(f"no edge {key}")
        p_new = float(p_new)
        gamma = float(gamma)
        if math.isnan(p_new) or not 0.0 <= p_new <= 1.0:
            raise InvalidProbability(f"p_new must be in [0, 1], got {p_new!r}")
        if math.isnan(gamma) or not 0.0 <= gamma <= 1.0:
            raise InvalidProbability(f"gamma must be in [0, 1], got {gamma!r}")
        edge.weight = gamma * edge.weight + (1.0 - gamma) * p_new
        edge.evidence_count += 1
        edge.updated_at = self.batch_counter
        return edge.weight

    def remove_edge(self, key: EdgeKey) -> None:
        edge = self._edges.pop(key, None)
        if edge is None:
            raise EdgeNotFound(f"no edge {key}")
        self._out[edge.src].pop(key, None)
        self._in[edge.dst].pop(key, None)

    def remove_node(self, node_id: str) -> list[EdgeKey]:
        """Remove a node and every incident edge; returns the removed edge keys."""
        if node_id not in self.nodes:
            raise UnknownNode(f"no node {node_id!r}")
        removed = []
        for key in dict.fromkeys(self.incident_keys(node_id)):
            self.remove_edge(key)
            removed.append(key)
        del self.nodes[node_id]
        self._out.pop(node_id, None)
        self._in.pop(node_id, None)
        return removed

    def evict_to_capacity(self, target: int | None = None) -> int:
        """Drop lowest-weight edges until at most ``target`` remain.

        Ties broken lexicographically on (src, dst, type) so eviction is
        deterministic.
        """
        limit = self.capacity.max_edges if target is None else target
        overage = len(self._edges) - limit
        if overage <= 0:
            return 0
        victims = heapq.nsmallest(
            overage,
            self._edges.values(),
            key=lambda e: (e.weight, e.src, e.dst, e.type.value),
        )
        for edge in victims:
            self.remove_edge(edge.key)
        return overage

    # --- persistence ----------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "nodes": [n.to_dict() for n in self.nodes.values()],
            "edges": [e.to_dict() for e in self._edges.values()],
            "capacity": self.capacity.to_dict(),
            "batch_counter": self.batch_counter,
        }

    def dumps(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)

    @classmethod
    def load(cls, document: dict[str, Any] | str) -> "KnowledgeGraph":
        if isinstance(document, str):
            try:
                document = json.loads(document)
            except json.JSONDecodeError as exc:
                raise CorruptDocument(f"snapshot is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise CorruptDocument("snapshot must be a mapping")
        version = document.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"unsupported schema version {version!r}, expected {SCHEMA_VERSION}"
            )
        try:
            capacity = CapacityConfig(**document["capacity"])
            graph = cls(capacity)
            graph.batch_counter = int(document["batch_counter"])
            for entry in document["nodes"]:
                node = Node.from_dict(entry)
                node.validate()
                if node.id in graph.nodes:
                    raise CorruptDocument(f"duplicate node id {node.id!r}")
                graph.nodes[node.id] = node
            for entry in document["edges"]:
                edge = Edge.from_dict(entry)
                edge.validate()
                if edge.src not in graph.nodes or edge.dst not in graph.nodes:
                    raise CorruptDocument(f"dangling edge {edge.key}")
                if edge.key in graph._edges:
                    raise CorruptDocument(f"duplicate edge {edge.key}")
                graph._edges[edge.key] = edge
                graph._out.setdefault(edge.src, {})[edge.key] = None
                graph._in.setdefault(edge.dst, {})[edge.key] = None
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptDocument(f"malformed snapshot: {exc}") from exc
        if graph.edge_count > capacity.max_edges:
            raise CorruptDocument("snapshot exceeds its own edge capacity")
        return graph

    def copy(self) -> "KnowledgeGraph":
        return KnowledgeGraph.load(self.snapshot())

    def structurally_equal(self, other: "KnowledgeGraph") -> bool:
        return self.snapshot() == other.snapshot()
