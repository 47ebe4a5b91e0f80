"""Metric suite plus a deterministic synthetic-world generator.

The generator builds a ground-truth graph (diseases wired to symptoms and
treatments), a templated corpus where each sentence expresses exactly one
relation in mention order, a matching gazetteer, and patient cases whose
optimal treatment and utility are brute-forced at generation time. A noise
rate corrupts a fraction of sentences (token swaps, ambiguous aliases,
typos) while annotations keep recording what should have been found.

All metrics are pure functions. Rates with a zero denominator come back as
None rather than failing the whole panel.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .errors import (
    DegenerateMarginals,
    EmptyGroundTruth,
    EmptyInput,
    InvalidField,
    InvalidSizes,
    LengthMismatch,
    ZeroVariance,
)
from .extraction import Document, Lexicon, LexiconEntry, embed, lexicon_to_doc, preprocess
from .feedback import FeedbackEvent, LikertScores
from .graph import (
    CapacityConfig,
    Edge,
    EdgeKey,
    EdgeType,
    KnowledgeGraph,
    Node,
    NodeType,
    make_node_id,
)
from .reasoning import PatientProfile

LIKELIHOOD_FLOOR = 0.01


# --- classification metrics ------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise InvalidField("confusion counts must be nonnegative")


def classification_metrics(c: ConfusionCounts) -> dict[str, float | None]:
    """Accuracy, precision, recall, f1; None where a denominator is zero."""
    total = c.tp + c.tn + c.fp + c.fn
    accuracy = (c.tp + c.tn) / total if total else None
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


def mue(predicted: Sequence[float], optimal: Sequence[float]) -> float:
    """Mean absolute utility gap between recommended and optimal treatments."""
    if len(predicted) != len(optimal):
        raise LengthMismatch(
            f"utility lists differ in length: {len(predicted)} vs {len(optimal)}"
        )
    if not predicted:
        raise EmptyInput("need at least one utility pair")
    return sum(abs(u - v) for u, v in zip(predicted, optimal)) / len(predicted)


# --- agreement statistics ----------------------------------------------------

@dataclass(frozen=True)
class RaterTable:
    rater_a: tuple[Hashable, ...]
    rater_b: tuple[Hashable, ...]

    def __post_init__(self) -> None:
        if len(self.rater_a) != len(self.rater_b):
            raise LengthMismatch("rating vectors must have equal length")
        if not self.rater_a:
            raise EmptyInput("need at least one rated item")


def cohens_kappa(t: RaterTable) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e)."""
    n = len(t.rater_a)
    p_o = sum(a == b for a, b in zip(t.rater_a, t.rater_b)) / n
    categories = set(t.rater_a) | set(t.rater_b)
    p_e = sum(
        (sum(a == k for a in t.rater_a) / n) * (sum(b == k for b in t.rater_b) / n)
        for k in categories
    )
    if p_e >= 1.0:
        raise DegenerateMarginals("chance agreement is 1; kappa undefined")
    return (p_o - p_e) / (1.0 - p_e)


def paired_t(x: Sequence[float], y: Sequence[float]) -> tuple[float, int]:
    """Paired t statistic and degrees of freedom for two matched samples."""
    if len(x) != len(y):
        raise LengthMismatch(f"samples differ in length: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise LengthMismatch("need at least two paired samples")
    diffs = [a - b for a, b in zip(x, y)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0:
        raise ZeroVariance("difference variance is zero")
    return mean / math.sqrt(var / n), n - 1


# --- graph-vs-truth metrics --------------------------------------------------

def _truth_elements(truth: "GroundTruthWorld") -> tuple[set[str], set[EdgeKey]]:
    nodes = set(truth.graph.nodes.keys())
    edges = set(truth.graph.edge_keys())
    if not nodes and not edges:
        raise EmptyGroundTruth("ground truth graph is empty")
    return nodes, edges


def semantic_coverage(g: KnowledgeGraph, truth: "GroundTruthWorld") -> float:
    """Fraction of ground-truth nodes and edges present in g (by id / key)."""
    nodes, edges = _truth_elements(truth)
    present = sum(1 for nid in nodes if g.has_node(nid))
    present += sum(1 for key in edges if g.has_edge(key))
    return present / (len(nodes) + len(edges))


def gas(g: KnowledgeGraph, truth: "GroundTruthWorld") -> float:
    """Alignment of the post-fusion graph with the ground truth.

    Same counting rule as semantic_coverage but applied to the graph as it
    stands right after integration, before any later pipeline stages touch it.
    """
    nodes, edges = _truth_elements(truth)
    integrated = sum(1 for nid in nodes if g.has_node(nid))
    integrated += sum(1 for key in edges if g.has_edge(key))
    return integrated / (len(nodes) + len(edges))


def extraction_accuracy(found: Iterable[Hashable], truth: Iterable[Hashable]) -> float:
    """Fraction of ground-truth entity mentions that were found."""
    truth_set = set(truth)
    if not truth_set:
        raise EmptyGroundTruth("no ground truth entities")
    found_set = set(found)
    return sum(1 for t in truth_set if t in found_set) / len(truth_set)


# --- synthetic world ---------------------------------------------------------

@dataclass(frozen=True)
class WorldSizes:
    diseases: int
    symptoms: int
    treatments: int
    profiles: int

    def __post_init__(self) -> None:
        if min(self.diseases, self.symptoms, self.treatments, self.profiles) <= 0:
            raise InvalidSizes("all world sizes must be positive")
        if self.symptoms < 2:
            raise InvalidSizes("need at least 2 symptoms")
        if self.symptoms > 5 * self.diseases:
            raise InvalidSizes("too many symptoms: each disease links to at most 5")
        if self.treatments > 3 * self.diseases:
            raise InvalidSizes("too many treatments: each disease links to at most 3")

    def to_dict(self) -> dict[str, int]:
        return {
            "diseases": self.diseases,
            "symptoms": self.symptoms,
            "treatments": self.treatments,
            "profiles": self.profiles,
        }


@dataclass(frozen=True)
class EntityAnnotation:
    node_id: str
    surface: str
    entity_type: NodeType


@dataclass(frozen=True)
class RelationAnnotation:
    src_id: str
    dst_id: str
    edge_type: EdgeType


@dataclass(frozen=True)
class AnnotatedDocument:
    doc: Document
    entities: tuple[EntityAnnotation, ...]
    relations: tuple[RelationAnnotation, ...]


@dataclass(frozen=True)
class PatientCase:
    case_id: str
    symptoms: tuple[str, ...]
    true_disease: str
    profile_id: str
    optimal_treatment: str
    optimal_utility: float


@dataclass(frozen=True)
class GroundTruthWorld:
    graph: KnowledgeGraph
    corpora: tuple[AnnotatedDocument, ...]
    lexicon: Lexicon
    cases: tuple[PatientCase, ...]
    profiles: dict[str, PatientProfile]
    seed: int
    sizes: WorldSizes
    noise_rate: float

    def documents(self) -> list[Document]:
        return [ad.doc for ad in self.corpora]

    def mentioned_node_ids(self) -> set[str]:
        return {e.node_id for ad in self.corpora for e in ad.entities}

    def mentioned_edge_keys(self) -> set[EdgeKey]:
        return {
            (r.src_id, r.dst_id, r.edge_type)
            for ad in self.corpora
            for r in ad.relations
        }

    def mentioned_world(self) -> "GroundTruthWorld":
        """Copy whose truth graph keeps only corpus-mentioned elements."""
        doc = self.graph.snapshot()
        keep_nodes = self.mentioned_node_ids()
        keep_edges = self.mentioned_edge_keys()
        doc["nodes"] = [n for n in doc["nodes"] if n["id"] in keep_nodes]
        doc["edges"] = [
            e
            for e in doc["edges"]
            if (e["src"], e["dst"], EdgeType(e["type"])) in keep_edges
        ]
        return GroundTruthWorld(
            graph=KnowledgeGraph.load(doc),
            corpora=self.corpora,
            lexicon=self.lexicon,
            cases=self.cases,
            profiles=self.profiles,
            seed=self.seed,
            sizes=self.sizes,
            noise_rate=self.noise_rate,
        )

    def truth_entity_mentions(self) -> set[tuple[str, str, str]]:
        """(doc_id, surface, type) triples the corpus expects to be extracted."""
        return {
            (ad.doc.doc_id, e.surface, e.entity_type.value)
            for ad in self.corpora
            for e in ad.entities
        }

    def serialize(self) -> str:
        body = {
            "seed": self.seed,
            "sizes": self.sizes.to_dict(),
            "noise_rate": self.noise_rate,
            "graph": self.graph.snapshot(),
            "lexicon": lexicon_to_doc(self.lexicon),
            "corpora": [
                {
                    "doc": {
                        "doc_id": ad.doc.doc_id,
                        "source": ad.doc.source,
                        "context_tag": ad.doc.context_tag,
                        "text": ad.doc.text,
                    },
                    "entities": [
                        [e.node_id, e.surface, e.entity_type.value] for e in ad.entities
                    ],
                    "relations": [
                        [r.src_id, r.dst_id, r.edge_type.value] for r in ad.relations
                    ],
                }
                for ad in self.corpora
            ],
            "cases": [
                {
                    "case_id": c.case_id,
                    "symptoms": list(c.symptoms),
                    "true_disease": c.true_disease,
                    "profile_id": c.profile_id,
                    "optimal_treatment": c.optimal_treatment,
                    "optimal_utility": c.optimal_utility,
                }
                for c in self.cases
            ],
            "profiles": {
                pid: dict(p.features) for pid, p in sorted(self.profiles.items())
            },
        }
        return json.dumps(body, sort_keys=True)


_SYLLABLES = (
    "ba", "ce", "di", "fo", "gu", "ha", "ki", "lo", "mu", "ne",
    "pa", "qui", "ro", "sa", "tu", "ve", "wi", "xa", "yo", "zu",
)
_SUFFIXES = {
    NodeType.Disease: ("itis", "osis", "emia"),
    NodeType.Symptom: ("algia", "pnea", "edema"),
    NodeType.Treatment: ("cillin", "mab", "phene"),
}
_RISK_FEATURES = (
    "elderly", "pediatric", "pregnancy",
    "renal_impairment", "allergy_aspirin", "hypertensive",
)


def _coin_name(rng: random.Random, used: set[str], suffixes: tuple[str, ...]) -> str:
    while True:
        stem = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3)))
        name = stem + rng.choice(suffixes)
        if name not in used:
            used.add(name)
            return name


def _sentence(edge_type: EdgeType, first: str, second: str) -> str:
    if edge_type is EdgeType.Diagnostic:
        return f"patients presenting {first} are often screened for {second}"
    if edge_type is EdgeType.Causal:
        return f"{first} frequently causes episodes of {second}"
    return f"{first} is commonly prescribed for {second}"


def _truth_posterior(
    g: KnowledgeGraph, symptoms: Sequence[str], epsilon: float = LIKELIHOOD_FLOOR
) -> dict[str, float]:
    diseases = sorted(n.id for n in g.nodes_of_type(NodeType.Disease))
    uniform = 1.0 / len(diseases)
    joint = {}
    for did in diseases:
        prior = g.nodes[did].prior
        prior = uniform if prior is None else prior
        value = prior
        for sid in symptoms:
            weight = epsilon
            for edge in g.edges_between(sid, did, types=(EdgeType.Diagnostic, EdgeType.Causal)):
                weight = max(weight, edge.weight)
            value *= weight
        joint[did] = value
    total = sum(joint.values())
    return {did: v / total for did, v in joint.items()}


def generate_world(
    seed: int,
    sizes: WorldSizes,
    noise_rate: float,
    capacity: CapacityConfig | None = None,
) -> GroundTruthWorld:
    """Deterministic ground-truth world; same seed, byte-identical output."""
    if not 0.0 <= noise_rate <= 1.0:
        raise InvalidField(f"noise_rate must be in [0, 1], got {noise_rate!r}")
    rng = random.Random(seed)
    used_names: set[str] = set()
    graph = KnowledgeGraph(capacity or CapacityConfig())

    disease_labels = [
        _coin_name(rng, used_names, _SUFFIXES[NodeType.Disease])
        for _ in range(sizes.diseases)
    ]
    symptom_labels = [
        _coin_name(rng, used_names, _SUFFIXES[NodeType.Symptom])
        for _ in range(sizes.symptoms)
    ]
    treatment_labels = [
        _coin_name(rng, used_names, _SUFFIXES[NodeType.Treatment])
        for _ in range(sizes.treatments)
    ]

    priors_raw = [rng.uniform(0.5, 1.5) for _ in range(sizes.diseases)]
    prior_total = sum(priors_raw)
    disease_ids = []
    for label, raw in zip(disease_labels, priors_raw):
        nid = make_node_id(NodeType.Disease, label)
        graph.add_node(
            Node(
                id=nid,
                type=NodeType.Disease,
                label=label,
                prior=round(raw / prior_total, 6),
                embedding=tuple(embed(preprocess(label)).tolist()),
            )
        )
        disease_ids.append(nid)

    symptom_ids = []
    for label in symptom_labels:
        nid = make_node_id(NodeType.Symptom, label)
        graph.add_node(
            Node(
                id=nid,
                type=NodeType.Symptom,
                label=label,
                embedding=tuple(embed(preprocess(label)).tolist()),
            )
        )
        symptom_ids.append(nid)

    # disease -> symptoms: 2..5 each, every symptom linked at least once
    linked_symptoms: dict[str, list[str]] = {did: [] for did in disease_ids}
    for did in disease_ids:
        want = rng.randint(2, 5)
        for sid in rng.sample(symptom_ids, min(want, len(symptom_ids))):
            linked_symptoms[did].append(sid)
    covered = {sid for ids in linked_symptoms.values() for sid in ids}
    for sid in symptom_ids:
        if sid not in covered:
            candidates = [d for d in disease_ids if len(linked_symptoms[d]) < 5]
            target = min(candidates, key=lambda d: (len(linked_symptoms[d]), d))
            linked_symptoms[target].append(sid)

    symptom_edges: list[tuple[str, str, EdgeType, float]] = []
    for did in disease_ids:
        for sid in linked_symptoms[did]:
            weight = round(rng.uniform(0.55, 0.95), 4)
            if rng.random() < 0.5:
                src, dst, etype = sid, did, EdgeType.Diagnostic
            else:
                src, dst, etype = did, sid, EdgeType.Causal
            graph.add_edge(Edge(src=src, dst=dst, type=etype, weight=weight, evidence_count=1))
            symptom_edges.append((src, dst, etype, weight))

    # treatments: attributes carry cost/efficacy/risk tables; efficacy matches
    # the Therapeutic edge weight so graph- and table-reads agree
    treatment_ids = []
    treatment_attrs: dict[str, dict[str, float]] = {}
    for label in treatment_labels:
        nid = make_node_id(NodeType.Treatment, label)
        attrs = {"cost": round(rng.uniform(1.0, 20.0), 2)}
        for feature in _RISK_FEATURES:
            if rng.random() < 0.25:
                attrs[f"risk:{feature}"] = round(rng.uniform(0.1, 0.6), 4)
        graph.add_node(
            Node(
                id=nid,
                type=NodeType.Treatment,
                label=label,
                attributes=attrs,
                embedding=tuple(embed(preprocess(label)).tolist()),
            )
        )
        treatment_ids.append(nid)
        treatment_attrs[nid] = attrs

    linked_treatments: dict[str, list[str]] = {did: [] for did in disease_ids}
    for did in disease_ids:
        want = rng.randint(1, 3)
        for tid in rng.sample(treatment_ids, min(want, len(treatment_ids))):
            linked_treatments[did].append(tid)
    covered = {tid for ids in linked_treatments.values() for tid in ids}
    for tid in treatment_ids:
        if tid not in covered:
            candidates = [d for d in disease_ids if len(linked_treatments[d]) < 3]
            target = min(candidates, key=lambda d: (len(linked_treatments[d]), d))
            linked_treatments[target].append(tid)

    treatment_edges: list[tuple[str, str, EdgeType, float]] = []
    for did in disease_ids:
        for tid in linked_treatments[did]:
            efficacy = round(rng.uniform(0.5, 0.95), 4)
            graph.add_edge(
                Edge(src=tid, dst=did, type=EdgeType.Therapeutic, weight=efficacy, evidence_count=1)
            )
            graph.nodes[tid].attributes[f"efficacy:{did}"] = efficacy
            treatment_edges.append((tid, did, EdgeType.Therapeutic, efficacy))

    profiles: dict[str, PatientProfile] = {}
    for i in range(sizes.profiles):
        pid = f"p:profile{i:02d}"
        features = {f: 1.0 for f in _RISK_FEATURES if rng.random() < 0.3}
        graph.add_node(
            Node(id=pid, type=NodeType.PatientProfile, label=f"profile {i:02d}", attributes=dict(features))
        )
        profiles[pid] = PatientProfile(id=pid, features=features)

    # gazetteer over every mentionable label, plus ambiguous aliases
    lexicon: Lexicon = {}
    for label in disease_labels:
        lexicon[label] = (LexiconEntry(NodeType.Disease, 1.0),)
    for label in symptom_labels:
        lexicon[label] = (LexiconEntry(NodeType.Symptom, 1.0),)
    for label in treatment_labels:
        lexicon[label] = (LexiconEntry(NodeType.Treatment, 1.0),)
    aliases = []
    for _ in range(max(1, (sizes.diseases + sizes.symptoms) // 10)):
        alias = _coin_name(rng, used_names, ("oid",))
        lexicon[alias] = (
            LexiconEntry(NodeType.Disease, 1.0),
            LexiconEntry(NodeType.Symptom, 1.0),
        )
        aliases.append(alias)

    # corpus: one sentence per truth edge, in mention order
    corpora: list[AnnotatedDocument] = []
    label_of = {nid: graph.nodes[nid].label for nid in graph.nodes}
    for i, (src, dst, etype, _) in enumerate(symptom_edges + treatment_edges):
        text = _sentence(etype, label_of[src], label_of[dst])
        entities = (
            EntityAnnotation(src, label_of[src], graph.nodes[src].type),
            EntityAnnotation(dst, label_of[dst], graph.nodes[dst].type),
        )
        relations = (RelationAnnotation(src, dst, etype),)
        if rng.random() < noise_rate:
            text = _corrupt(rng, text, [label_of[src], label_of[dst]], aliases)
        corpora.append(
            AnnotatedDocument(
                doc=Document(
                    doc_id=f"doc{i:04d}",
                    source="synthetic",
                    text=text,
                    context_tag="synthetic",
                ),
                entities=entities,
                relations=relations,
            )
        )

    # patient cases with brute-forced optima
    options = [
        (
            tid,
            {
                k.split(":", 1)[1]: v
                for k, v in treatment_attrs[tid].items()
                if k.startswith("efficacy:")
            },
            {
                k.split(":", 1)[1]: v
                for k, v in treatment_attrs[tid].items()
                if k.startswith("risk:")
            },
        )
        for tid in treatment_ids
    ]
    cases = []
    profile_ids = sorted(profiles)
    for i in range(2 * sizes.diseases):
        did = disease_ids[i % sizes.diseases]
        pool = sorted(linked_symptoms[did])
        k = rng.randint(2, min(4, len(pool)))
        symptoms = tuple(sorted(rng.sample(pool, k)))
        pid = rng.choice(profile_ids)
        posterior = _truth_posterior(graph, symptoms)
        best_tid, best_utility = None, -math.inf
        for tid, efficacy, risk_features in options:
            risk = min(
                max(
                    sum(
                        v * profiles[pid].features.get(f, 0.0)
                        for f, v in risk_features.items()
                    ),
                    0.0,
                ),
                1.0,
            )
            eu = sum(
                p * (efficacy.get(d, 0.0) - risk) for d, p in posterior.items()
            )
            if eu > best_utility or (eu == best_utility and tid < best_tid):
                best_tid, best_utility = tid, eu
        cases.append(
            PatientCase(
                case_id=f"case{i:03d}",
                symptoms=symptoms,
                true_disease=did,
                profile_id=pid,
                optimal_treatment=best_tid,
                optimal_utility=best_utility,
            )
        )

    world = GroundTruthWorld(
        graph=graph,
        corpora=tuple(corpora),
        lexicon=lexicon,
        cases=tuple(cases),
        profiles=profiles,
        seed=seed,
        sizes=sizes,
        noise_rate=noise_rate,
    )
    _check_case_optima(world)
    return world


def _corrupt(
    rng: random.Random, text: str, mentions: list[str], aliases: list[str]
) -> str:
    """Apply one corruption: token swap, ambiguous alias, or typo."""
    mode = rng.choice(("swap", "alias", "typo"))
    tokens = text.split()
    if mode == "swap" and len(tokens) >= 2:
        i, j = rng.sample(range(len(tokens)), 2)
        tokens[i], tokens[j] = tokens[j], tokens[i]
        return " ".join(tokens)
    victim = rng.choice(mentions)
    if mode == "alias" and aliases:
        replacement = rng.choice(aliases)
    else:
        replacement = victim[:-1] + "qx"
    return " ".join(replacement if tok == victim else tok for tok in tokens)


def _check_case_optima(world: GroundTruthWorld) -> None:
    """Generation-time self-consistency: stored optima are exhaustive maxima."""
    from .reasoning import TreatmentOption, UtilityWeights, utility as utility_fn

    weights = UtilityWeights(1.0, 1.0)
    for case in world.cases:
        posterior = _truth_posterior(world.graph, case.symptoms)
        profile = world.profiles[case.profile_id]
        best = -math.inf
        for tid in sorted(
            n.id for n in world.graph.nodes_of_type(NodeType.Treatment)
        ):
            node = world.graph.nodes[tid]
            option = TreatmentOption(
                id=tid,
                efficacy_by_disease={
                    k.split(":", 1)[1]: v
                    for k, v in node.attributes.items()
                    if k.startswith("efficacy:")
                },
                risk_features={
                    k.split(":", 1)[1]: v
                    for k, v in node.attributes.items()
                    if k.startswith("risk:")
                },
                cost=node.attributes.get("cost", 0.0),
            )
            eu = sum(
                p * utility_fn(option, d, profile, weights)
                for d, p in posterior.items()
            )
            best = max(best, eu)
        if abs(best - case.optimal_utility) > 1e-9:
            raise InvalidSizes(
                f"case {case.case_id} optimum inconsistent: {best} vs {case.optimal_utility}"
            )


# --- fixed qualitative panel -------------------------------------------------

def reference_rater_table() -> RaterTable:
    """Two-rater table with observed agreement 0.8 and chance agreement 0.5."""
    return RaterTable(
        rater_a=("x", "x", "x", "x", "x", "y", "y", "y", "y", "y"),
        rater_b=("x", "x", "x", "x", "y", "y", "y", "y", "y", "x"),
    )


_PANEL_SCORES = (
    (4, 4, 4), (4, 4, 4), (5, 4, 5), (4, 5, 4), (4, 4, 4),
    (5, 4, 4), (4, 4, 5), (4, 4, 4), (5, 4, 4), (4, 4, 4),
)


def simulated_likert_events() -> tuple[FeedbackEvent, ...]:
    """Fixed simulated clinician panel used for the qualitative report rows."""
    events = []
    for i, (acc, rel, usa) in enumerate(_PANEL_SCORES):
        events.append(
            FeedbackEvent(
                case_id=f"panel{i:02d}",
                diagnosis_correct=True,
                treatment_accepted=True,
                likert=LikertScores(accuracy=acc, reliability=rel, usability=usa),
                clinician_id=f"clinician{i % 3 + 1}",
            )
        )
    return tuple(events)
