"""Text preprocessing, candidate extraction, and confidence scoring.

The reference extractor is a gazetteer matcher: a lexicon maps surface
phrases to typed entries with scores, per-span probabilities come from a
softmax over those scores (plus a configurable per-context bonus), and
relations are emitted for co-occurring entity pairs through a typed pattern
table keyed on mention order. It is a pure function of its inputs, which is
what makes the synthetic-world evaluation reproducible.

A remote extractor adapter with the same output schema is provided for
LLM-backed deployments; its live output is intentionally outside the test
surface (a replay-fixture mode covers the transport and schema contract).
"""

from __future__ import annotations

import hashlib
import math
import re
import threading
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import InvalidField, RemoteExtractorError, UnknownContextTag
from .graph import EdgeType, KnowledgeGraph, NodeType

TOKEN_RE = re.compile(r"[a-z0-9]+")
DEFAULT_EMBED_DIM = 256

SOURCES = ("clinical_report", "article", "patient_record", "synthetic")

# Known context tags and their per-type score bonuses. Context influences
# entity scoring; embeddings stay context-free so the same surface links to
# the same node regardless of where it was seen.
DEFAULT_CONTEXTS: dict[str, dict[NodeType, float]] = {
    "": {},
    "clinical_report": {},
    "article": {},
    "patient_record": {},
    "synthetic": {},
}


def preprocess(raw: str) -> list[str]:
    """Lowercase, strip punctuation, collapse whitespace into tokens."""
    return TOKEN_RE.findall(raw.lower())


def _feature_buckets(feature: str, dim: int) -> tuple[tuple[int, float], tuple[int, float]]:
    # each feature fires two distinct buckets with one shared sign: a
    # single-bucket collision between different features costs cosine 0.5
    # instead of a spurious 1.0, and a feature can never cancel itself
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=16).digest()
    first = int.from_bytes(digest[:8], "big")
    second = int.from_bytes(digest[8:], "big")
    sign = 1.0 if first & 1 else -1.0
    bucket_a = (first >> 1) % dim
    bucket_b = (bucket_a + 1 + second % (dim - 1)) % dim
    return ((bucket_a, sign), (bucket_b, sign))


def embed(tokens: Sequence[str], dim: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """Deterministic feature-hashed embedding over unigrams and bigrams.

    Unit L2 norm whenever any feature fires; the zero vector for empty input.
    """
    vec = np.zeros(dim, dtype=np.float64)
    if not tokens:
        return vec
    features = ["u:" + tok for tok in tokens]
    features.extend(f"b:{a}_{b}" for a, b in zip(tokens, tokens[1:]))
    for feature in features:
        for bucket, sign in _feature_buckets(feature, dim):
            vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def softmax(scores: Sequence[float]) -> list[float]:
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass(frozen=True)
class Document:
    doc_id: str
    source: str
    text: str
    context_tag: str = ""

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise InvalidField(
                f"unknown document source {self.source!r}; expected one of {SOURCES}"
            )


@dataclass
class CandidateEntity:
    surface: str
    entity_type: NodeType
    prob: float
    embedding: np.ndarray
    provenance: str
    confidence: float | None = None


@dataclass(frozen=True)
class CandidateRelation:
    src_surface: str
    dst_surface: str
    edge_type: EdgeType
    prob: float
    provenance: str


@dataclass(frozen=True)
class FusionWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InvalidField(f"{name} must be finite and nonnegative")


@dataclass(frozen=True)
class LexiconEntry:
    entity_type: NodeType
    score: float


Lexicon = dict[str, tuple[LexiconEntry, ...]]


def parse_lexicon(doc: Mapping[str, Any]) -> Lexicon:
    """Lexicon document: surface -> {entity_type, score} or a list of those."""
    lexicon: Lexicon = {}
    for surface, value in doc.items():
        entries = value if isinstance(value, list) else [value]
        parsed = tuple(
            LexiconEntry(NodeType(e["entity_type"]), float(e["score"])) for e in entries
        )
        key = " ".join(preprocess(surface))
        if not key:
            raise InvalidField(f"lexicon surface {surface!r} normalizes to nothing")
        lexicon[key] = parsed
    return lexicon


def lexicon_to_doc(lexicon: Lexicon) -> dict[str, Any]:
    return {
        surface: [
            {"entity_type": e.entity_type.value, "score": e.score} for e in entries
        ]
        for surface, entries in lexicon.items()
    }


# Relation typing for co-occurring entity pairs, keyed on mention order
# (first type, second type) -> (edge type, base strength). The resulting
# edge is directed first -> second.
PATTERN_TABLE: dict[tuple[NodeType, NodeType], tuple[EdgeType, float]] = {
    (NodeType.Symptom, NodeType.Disease): (EdgeType.Diagnostic, 0.90),
    (NodeType.Disease, NodeType.Symptom): (EdgeType.Causal, 0.90),
    (NodeType.Treatment, NodeType.Disease): (EdgeType.Therapeutic, 0.90),
    (NodeType.Medication, NodeType.Disease): (EdgeType.Therapeutic, 0.88),
    (NodeType.RiskFactor, NodeType.Disease): (EdgeType.RiskAssociated, 0.88),
    (NodeType.Symptom, NodeType.Symptom): (EdgeType.SymptomSymptom, 0.85),
    (NodeType.Disease, NodeType.Disease): (EdgeType.ComorbidityRelated, 0.85),
    (NodeType.Gene, NodeType.Disease): (EdgeType.Genetic, 0.88),
    (NodeType.Biomarker, NodeType.Disease): (EdgeType.BiomarkerRelated, 0.88),
    (NodeType.LifestyleFactor, NodeType.Disease): (EdgeType.LifestyleRelated, 0.85),
    (NodeType.Procedure, NodeType.Disease): (EdgeType.ProcedureRelated, 0.85),
    (NodeType.DiagnosticTest, NodeType.Disease): (EdgeType.Monitoring, 0.85),
}

# Endpoint types implied by each relation type (inverse of the pattern table;
# first entry wins). Used to resolve ambiguous surfaces when fusing.
EDGE_ENDPOINT_TYPES: dict[EdgeType, tuple[NodeType, NodeType]] = {}
for _pair, (_etype, _strength) in PATTERN_TABLE.items():
    EDGE_ENDPOINT_TYPES.setdefault(_etype, _pair)


@dataclass(frozen=True)
class ExtractionResult:
    entities: tuple[CandidateEntity, ...]
    relations: tuple[CandidateRelation, ...]


class ExtractorPort(Protocol):
    def extract(self, doc: Document) -> ExtractionResult: ...


class LexiconExtractor:
    """Deterministic gazetteer extractor.

    Longest-match-first scan over normalized tokens; each matched span emits
    one candidate per lexicon entry with softmax probabilities over
    score + context bonus. Ordered co-occurring pairs are typed through the
    pattern table with prob = strength * min(endpoint probs).
    """

    def __init__(
        self,
        lexicon: Lexicon,
        contexts: Mapping[str, Mapping[NodeType, float]] | None = None,
        pattern_table: Mapping[tuple[NodeType, NodeType], tuple[EdgeType, float]] | None = None,
        dim: int = DEFAULT_EMBED_DIM,
    ) -> None:
        if not lexicon:
            raise InvalidField("reference extractor requires a nonempty lexicon")
        self.lexicon = lexicon
        self.contexts = {k: dict(v) for k, v in (contexts or DEFAULT_CONTEXTS).items()}
        self.pattern_table = dict(pattern_table or PATTERN_TABLE)
        self.dim = dim
        self._max_phrase = max(len(s.split()) for s in lexicon)

    def extract(self, doc: Document) -> ExtractionResult:
        if doc.context_tag not in self.contexts:
            raise UnknownContextTag(
                f"context tag {doc.context_tag!r} not configured "
                f"(known: {sorted(self.contexts)})"
            )
        bonus = self.contexts[doc.context_tag]
        tokens = preprocess(doc.text)
        mentions: list[CandidateEntity] = []
        i = 0
        while i < len(tokens):
            matched = 0
            for width in range(min(self._max_phrase, len(tokens) - i), 0, -1):
                phrase = " ".join(tokens[i : i + width])
                entries = self.lexicon.get(phrase)
                if entries is None:
                    continue
                scores = [e.score + bonus.get(e.entity_type, 0.0) for e in entries]
                probs = softmax(scores)
                vec = embed(phrase.split(), self.dim)
                for entry, prob in zip(entries, probs):
                    mentions.append(
                        CandidateEntity(
                            surface=phrase,
                            entity_type=entry.entity_type,
                            prob=prob,
                            embedding=vec,
                            provenance=doc.doc_id,
                        )
                    )
                matched = width
                break
            i += matched if matched else 1

        relations = self._pair_relations(mentions, doc.doc_id)
        return ExtractionResult(tuple(mentions), tuple(relations))

    def _pair_relations(
        self, mentions: Sequence[CandidateEntity], doc_id: str
    ) -> list[CandidateRelation]:
        best: dict[tuple[str, str, EdgeType], CandidateRelation] = {}
        for i in range(len(mentions)):
            for j in range(i + 1, len(mentions)):
                a, b = mentions[i], mentions[j]
                if a.surface == b.surface:
                    continue
                hit = self.pattern_table.get((a.entity_type, b.entity_type))
                if hit is None:
                    continue
                edge_type, strength = hit
                prob = strength * min(a.prob, b.prob)
                key = (a.surface, b.surface, edge_type)
                prev = best.get(key)
                if prev is None or prob > prev.prob:
                    best[key] = CandidateRelation(
                        src_surface=a.surface,
                        dst_surface=b.surface,
                        edge_type=edge_type,
                        prob=prob,
                        provenance=doc_id,
                    )
        return list(best.values())


def extract(doc: Document, ctx: Mapping[str, Mapping[NodeType, float]], lexicon: Lexicon) -> ExtractionResult:
    """One-shot reference extraction over a document."""
    return LexiconExtractor(lexicon, contexts=ctx).extract(doc)


_REMOTE_REQUIRED_SPAN = ("surface", "entity_type", "prob")
_REMOTE_REQUIRED_RELATION = ("src_surface", "dst_surface", "edge_type", "prob")


class RemoteLLMExtractor:
    """Adapter for an HTTP extraction model with a strict response schema.

    Request body: {doc_id, text, context_tag}. Response body:
    {spans: [{surface, entity_type, prob}], relations: [{src_surface,
    dst_surface, edge_type, prob}]}. A fixtures mapping (doc_id -> response)
    replaces the transport for tests; live output is not part of the
    verification surface.
    """

    def __init__(
        self,
        url: str = "",
        timeout: float = 10.0,
        max_inflight: int = 4,
        fixtures: Mapping[str, Mapping[str, Any]] | None = None,
        dim: int = DEFAULT_EMBED_DIM,
    ) -> None:
        self.url = url
        self.timeout = timeout
        self.fixtures = dict(fixtures) if fixtures is not None else None
        self.dim = dim
        self._slots = threading.BoundedSemaphore(max_inflight)

    def _fetch(self, doc: Document) -> Mapping[str, Any]:
        if self.fixtures is not None:
            try:
                return self.fixtures[doc.doc_id]
            except KeyError:
                raise RemoteExtractorError(
                    f"no replay fixture for document {doc.doc_id!r}"
                ) from None
        import httpx

        payload = {"doc_id": doc.doc_id, "text": doc.text, "context_tag": doc.context_tag}
        with self._slots:
            try:
                response = httpx.post(self.url, json=payload, timeout=self.timeout)
                response.raise_for_status()
                return response.json()
            except httpx.HTTPError as exc:
                raise RemoteExtractorError(f"remote extractor failed: {exc}") from exc

    def extract(self, doc: Document) -> ExtractionResult:
        body = self._fetch(doc)
        if not isinstance(body, Mapping) or "spans" not in body:
            raise RemoteExtractorError("response missing required field 'spans'")
        entities = []
        for span in body["spans"]:
            for name in _REMOTE_REQUIRED_SPAN:
                if name not in span:
                    raise RemoteExtractorError(f"span missing required field {name!r}")
            surface = " ".join(preprocess(span["surface"]))
            prob = float(span["prob"])
            if not 0.0 <= prob <= 1.0:
                raise RemoteExtractorError(f"span prob out of range: {prob}")
            entities.append(
                CandidateEntity(
                    surface=surface,
                    entity_type=NodeType(span["entity_type"]),
                    prob=prob,
                    embedding=embed(surface.split(), self.dim),
                    provenance=doc.doc_id,
                )
            )
        relations = []
        for rel in body.get("relations", []):
            for name in _REMOTE_REQUIRED_RELATION:
                if name not in rel:
                    raise RemoteExtractorError(f"relation missing required field {name!r}")
            relations.append(
                CandidateRelation(
                    src_surface=" ".join(preprocess(rel["src_surface"])),
                    dst_surface=" ".join(preprocess(rel["dst_surface"])),
                    edge_type=EdgeType(rel["edge_type"]),
                    prob=float(rel["prob"]),
                    provenance=doc.doc_id,
                )
            )
        return ExtractionResult(tuple(entities), tuple(relations))


class GraphEmbeddingIndex:
    """Per-type embedding matrices for fast max-cosine lookups over a graph.

    Nodes created mid-batch are appended incrementally so the base matrix is
    built once per batch instead of once per candidate.
    """

    def __init__(self, g: KnowledgeGraph) -> None:
        self._graph = g
        self._cache: dict[NodeType, tuple[list[str], np.ndarray] | None] = {}
        self._pending: dict[NodeType, tuple[list[str], list[np.ndarray]]] = {}

    def _matrix(self, node_type: NodeType) -> tuple[list[str], np.ndarray] | None:
        if node_type not in self._cache:
            ids, rows = [], []
            for node in self._graph.nodes_of_type(node_type):
                if node.embedding:
                    ids.append(node.id)
                    rows.append(node.embedding)
            self._cache[node_type] = (ids, np.array(rows)) if ids else None
        return self._cache[node_type]

    def add(self, node_type: NodeType, node_id: str, vec: np.ndarray) -> None:
        if float(np.linalg.norm(vec)) == 0.0:
            return
        ids, rows = self._pending.setdefault(node_type, ([], []))
        ids.append(node_id)
        rows.append(vec)

    def best_match(self, node_type: NodeType, vec: np.ndarray) -> tuple[str | None, float]:
        if float(np.linalg.norm(vec)) == 0.0:
            return None, 0.0
        best_id: str | None = None
        best_sim = 0.0
        entry = self._matrix(node_type)
        if entry is not None:
            ids, matrix = entry
            sims = matrix @ vec
            pick = int(np.argmax(sims))
            best_id, best_sim = ids[pick], float(sims[pick])
        pending = self._pending.get(node_type)
        if pending is not None:
            for nid, row in zip(*pending):
                sim = float(np.dot(row, vec))
                if best_id is None or sim > best_sim:
                    best_id, best_sim = nid, sim
        return best_id, best_sim

    def max_cosine(self, node_type: NodeType, vec: np.ndarray) -> float:
        return self.best_match(node_type, vec)[1]


def similarity_to_graph(
    c: CandidateEntity, g: KnowledgeGraph, index: GraphEmbeddingIndex | None = None
) -> float:
    """Max cosine similarity between the candidate and same-type graph nodes.

    Floored at 0: no match is never worse than an empty graph.
    """
    if index is not None:
        return max(0.0, index.max_cosine(c.entity_type, c.embedding))
    best = 0.0
    for node in g.nodes_of_type(c.entity_type):
        if node.embedding:
            best = max(best, cosine(c.embedding, np.asarray(node.embedding)))
    return best


def confidence(
    c: CandidateEntity,
    g: KnowledgeGraph,
    w: FusionWeights,
    index: GraphEmbeddingIndex | None = None,
) -> float:
    """Logistic blend of extractor probability and graph consistency."""
    sim = similarity_to_graph(c, g, index)
    return logistic(w.alpha * c.prob + w.beta * sim)


def score_candidates(
    candidates: Iterable[CandidateEntity],
    g: KnowledgeGraph,
    w: FusionWeights,
) -> list[CandidateEntity]:
    """Attach confidence scores to entity candidates against one graph state."""
    index = GraphEmbeddingIndex(g)
    return [replace(c, confidence=confidence(c, g, w, index)) for c in candidates]


def filter_candidates(
    candidates: Sequence[CandidateEntity], tau: float
) -> list[CandidateEntity]:
    """Keep candidates whose confidence is strictly above tau, order-stable."""
    if not 0.0 < tau < 1.0:
        raise InvalidField(f"tau must be in (0, 1), got {tau!r}")
    kept = []
    for c in candidates:
        if c.confidence is None:
            raise InvalidField(
                f"candidate {c.surface!r} has no confidence; score it first"
            )
        if c.confidence > tau:
            kept.append(c)
    return kept
