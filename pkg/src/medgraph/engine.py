"""Pipeline orchestration, engine configuration, and persistence.

The engine owns one graph, one parameter vector, and one extractor. A
pipeline run executes the phases in order: preprocess/extract, confidence
scoring and filtering, batch fusion, then per-case diagnosis and
recommendation; the feedback phase runs only when events arrive. Mutations
are serialized behind a lock; reads work against the current graph value.

State persists as plain files in a data directory (graph snapshot, flat
key=value config, lexicon, feedback audit log) with write-then-rename so a
crash never leaves a half-written snapshot.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import fusion, reasoning
from .errors import CorruptDocument, InvalidField
from .evalkit import (
    ConfusionCounts,
    GroundTruthWorld,
    classification_metrics,
    cohens_kappa,
    extraction_accuracy,
    gas,
    mue,
    reference_rater_table,
    semantic_coverage,
    simulated_likert_events,
)
from .extraction import (
    DEFAULT_CONTEXTS,
    DEFAULT_EMBED_DIM,
    Document,
    ExtractionResult,
    Lexicon,
    LexiconExtractor,
    RemoteLLMExtractor,
    embed,
    lexicon_to_doc,
    parse_lexicon,
    preprocess,
    score_candidates,
    FusionWeights,
    filter_candidates,
)
from .feedback import (
    FeedbackEvent,
    ReplayCase,
    TunableParams,
    aggregate_likert,
    nudge_lexicon_scores,
    reward,
    update_params,
)
from .fusion import BatchReport, CandidateBatch
from .graph import CapacityConfig, Edge, KnowledgeGraph, Node, NodeType, EdgeType
from .reasoning import (
    Budget,
    PatientProfile,
    Posterior,
    TreatmentPlan,
    UtilityWeights,
    diagnose,
    expected_utility,
    recommend,
    recommend_constrained,
    treatment_options_from_graph,
)

DATA_DIR_ENV = "DKG_DATA_DIR"

GRAPH_FILE = "graph.json"
CONFIG_FILE = "engine.cfg"
LEXICON_FILE = "lexicon.json"
AUDIT_FILE = "params_audit.jsonl"


@dataclass(frozen=True)
class EngineConfig:
    params: TunableParams = field(default_factory=TunableParams)
    capacity: CapacityConfig = field(default_factory=CapacityConfig)
    smoothing: float = 1.0
    epsilon: float = reasoning.DEFAULT_EPSILON
    diagnosis_threshold: float = 0.2
    embedding_dim: int = DEFAULT_EMBED_DIM
    link_threshold: float = fusion.DEFAULT_LINK_THRESHOLD
    seed: int = 0
    data_dir: str = "data"
    extractor: str = "lexicon"

    def __post_init__(self) -> None:
        if self.extractor not in ("lexicon", "remote"):
            raise InvalidField("extractor must be 'lexicon' or 'remote'")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidField("epsilon must be in (0, 1)")
        if not 0.0 <= self.diagnosis_threshold < 1.0:
            raise InvalidField("diagnosis_threshold must be in [0, 1)")

    def to_text(self) -> str:
        pairs: list[tuple[str, Any]] = list(self.params.to_dict().items())
        pairs += [
            ("max_edges", self.capacity.max_edges),
            ("batch_budget", self.capacity.batch_budget),
            ("smoothing", self.smoothing),
            ("epsilon", self.epsilon),
            ("diagnosis_threshold", self.diagnosis_threshold),
            ("embedding_dim", self.embedding_dim),
            ("link_threshold", self.link_threshold),
            ("seed", self.seed),
            ("data_dir", self.data_dir),
            ("extractor", self.extractor),
        ]
        return "".join(f"{k} = {v!r}\n" for k, v in pairs)

    @classmethod
    def from_text(cls, text: str) -> "EngineConfig":
        import ast

        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CorruptDocument(f"config line {lineno} is not key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = ast.literal_eval(value.strip())
        param_names = set(TunableParams().to_dict())
        params = TunableParams.from_dict(
            {k: v for k, v in values.items() if k in param_names}
        )
        return cls(
            params=params,
            capacity=CapacityConfig(
                max_edges=int(values.get("max_edges", 987_654)),
                batch_budget=int(values.get("batch_budget", 150)),
            ),
            smoothing=float(values.get("smoothing", 1.0)),
            epsilon=float(values.get("epsilon", reasoning.DEFAULT_EPSILON)),
            diagnosis_threshold=float(values.get("diagnosis_threshold", 0.2)),
            embedding_dim=int(values.get("embedding_dim", DEFAULT_EMBED_DIM)),
            link_threshold=float(values.get("link_threshold", fusion.DEFAULT_LINK_THRESHOLD)),
            seed=int(values.get("seed", 0)),
            data_dir=str(values.get("data_dir", "data")),
            extractor=str(values.get("extractor", "lexicon")),
        )


@dataclass(frozen=True)
class PipelineResult:
    batch_report: BatchReport
    diagnoses: tuple[Posterior, ...]
    plans: tuple[TreatmentPlan | None, ...]
    graph: KnowledgeGraph


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content)
    os.replace(tmp, path)


class Engine:
    """Single-writer engine around one knowledge graph."""

    def __init__(
        self,
        cfg: EngineConfig,
        graph: KnowledgeGraph | None = None,
        lexicon: Lexicon | None = None,
        remote_fixtures: dict | None = None,
    ) -> None:
        self.cfg = cfg
        self.params = cfg.params
        self.graph = graph if graph is not None else KnowledgeGraph(cfg.capacity)
        self.lexicon: Lexicon = lexicon or {}
        self.remote_fixtures = remote_fixtures
        self.feedback_buffer: list[ReplayCase] = []
        self.audit_log: list[dict] = []
        self._last_context: dict[str, Any] | None = None
        self._lock = threading.RLock()

    # --- extraction phase -------------------------------------------------

    def _extractor(self):
        if self.cfg.extractor == "remote":
            return RemoteLLMExtractor(fixtures=self.remote_fixtures, dim=self.cfg.embedding_dim)
        return LexiconExtractor(self.lexicon, contexts=DEFAULT_CONTEXTS, dim=self.cfg.embedding_dim)

    def extract_corpus(self, corpus: Iterable[Document]) -> CandidateBatch:
        """Phases 1-2: preprocess, extract, score confidence, filter."""
        extractor = self._extractor()
        batch = CandidateBatch()
        for doc in corpus:
            result: ExtractionResult = extractor.extract(doc)
            batch.entities.extend(result.entities)
            batch.relations.extend(result.relations)
        weights = FusionWeights(self.params.alpha, self.params.beta)
        scored = score_candidates(batch.entities, self.graph, weights)
        batch.entities = filter_candidates(scored, self.params.tau)
        return batch

    # --- mutation phases ----------------------------------------------------

    def ingest(self, corpus: Sequence[Document]) -> BatchReport:
        """Phases 1-3 over one corpus batch."""
        batch = self.extract_corpus(corpus)
        with self._lock:
            return fusion.apply_batch(
                self.graph,
                batch,
                self.params,
                smoothing=self.cfg.smoothing,
                link_threshold=self.cfg.link_threshold,
            )

    def run_pipeline(
        self,
        corpus: Sequence[Document],
        cases: Sequence[Sequence[str]],
        feedback: Sequence[FeedbackEvent] = (),
    ) -> PipelineResult:
        """Full run: ingest the corpus, then diagnose/recommend each case.

        Case plans use the graph's own treatment options and an anonymous
        profile; profile-aware recommendation goes through recommend_case.
        The feedback phase runs only when events are supplied.
        """
        if corpus:
            report = self.ingest(corpus)
        else:
            report = BatchReport(
                batch_id=self.graph.batch_counter,
                candidates_seen=0,
                nodes_added=0,
                edges_added=0,
                elements_pruned=0,
                elapsed_ms=0.0,
                final_edge_count=self.graph.edge_count,
            )
        diagnoses = []
        plans: list[TreatmentPlan | None] = []
        options = treatment_options_from_graph(self.graph)
        profile = PatientProfile()
        weights = UtilityWeights(self.params.w1, self.params.w2)
        for case in cases:
            posterior = diagnose(self.graph, case, self.cfg.epsilon)
            diagnoses.append(posterior)
            plans.append(
                recommend(posterior, options, profile, weights) if options else None
            )
        for event in feedback:
            self.submit_feedback(event)
        return PipelineResult(
            batch_report=report,
            diagnoses=tuple(diagnoses),
            plans=tuple(plans),
            graph=self.graph,
        )

    # --- reasoning facade ---------------------------------------------------

    def diagnose_case(self, symptoms: Sequence[str], epsilon: float | None = None) -> Posterior:
        return diagnose(self.graph, symptoms, epsilon or self.cfg.epsilon)

    def recommend_case(
        self,
        symptoms: Sequence[str],
        profile: PatientProfile | None = None,
        budget: Budget | None = None,
        weights: UtilityWeights | None = None,
    ) -> tuple[Posterior, TreatmentPlan]:
        posterior = self.diagnose_case(symptoms)
        options = treatment_options_from_graph(self.graph)
        profile = profile or PatientProfile()
        weights = weights or UtilityWeights(self.params.w1, self.params.w2)
        if budget is None:
            plan = recommend(posterior, options, profile, weights)
        else:
            plan = recommend_constrained(posterior, options, profile, weights, budget)
        self._last_context = {
            "posterior": posterior,
            "options": tuple(options),
            "profile": profile,
            "recommended": plan.chosen,
        }
        return posterior, plan

    def explain_case(self, disease: str, symptoms: Sequence[str]):
        return reasoning.explain(self.graph, disease, symptoms, self.cfg.epsilon)

    # --- feedback phase ------------------------------------------------------

    def submit_feedback(self, event: FeedbackEvent) -> dict:
        """Buffer the event, retune parameters, and append an audit entry."""
        with self._lock:
            context = self._last_context or {}
            self.feedback_buffer.append(
                ReplayCase(
                    event=event,
                    posterior=context.get("posterior"),
                    options=context.get("options", ()),
                    profile=context.get("profile"),
                    recommended=context.get("recommended", ()),
                )
            )
            return self.retune(seed=self.cfg.seed)

    def retune(self, seed: int = 0) -> dict:
        """Run one parameter update over the buffered feedback."""
        with self._lock:
            before = self.params
            window = [case.event for case in self.feedback_buffer]
            reward_before = reward(window, self.graph, before)
            self.params = update_params(before, self.feedback_buffer, self.graph, seed)
            if self.lexicon:
                self.lexicon = nudge_lexicon_scores(self.lexicon, window)
            entry = {
                "update_id": len(self.audit_log) + 1,
                "events": len(window),
                "before": before.to_dict(),
                "after": self.params.to_dict(),
                "reward_before": reward_before,
                "reward_after": reward(window, self.graph, self.params),
            }
            self.audit_log.append(entry)
            return entry

    def likert_summary(self) -> dict[str, tuple[float, float]]:
        return aggregate_likert([case.event for case in self.feedback_buffer])

    def stats(self) -> dict:
        return {
            "nodes": self.graph.node_count,
            "edges": self.graph.edge_count,
            "capacity": self.graph.capacity.to_dict(),
            "batch_counter": self.graph.batch_counter,
            "params": self.params.to_dict(),
        }

    # --- persistence ----------------------------------------------------------

    def save(self, data_dir: str | Path | None = None) -> Path:
        root = Path(data_dir or self.cfg.data_dir)
        root.mkdir(parents=True, exist_ok=True)
        with self._lock:
            _atomic_write(root / GRAPH_FILE, self.graph.dumps())
            _atomic_write(root / CONFIG_FILE, replace(self.cfg, params=self.params).to_text())
            _atomic_write(root / LEXICON_FILE, json.dumps(lexicon_to_doc(self.lexicon), sort_keys=True))
            _atomic_write(
                root / AUDIT_FILE,
                "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.audit_log),
            )
        return root

    @classmethod
    def load(cls, data_dir: str | Path) -> "Engine":
        root = Path(data_dir)
        cfg = EngineConfig.from_text((root / CONFIG_FILE).read_text())
        cfg = replace(cfg, data_dir=str(root))
        graph = KnowledgeGraph.load((root / GRAPH_FILE).read_text())
        lexicon_path = root / LEXICON_FILE
        lexicon = (
            parse_lexicon(json.loads(lexicon_path.read_text()))
            if lexicon_path.exists() and lexicon_path.read_text().strip() not in ("", "{}")
            else {}
        )
        engine = cls(cfg, graph=graph, lexicon=lexicon)
        audit_path = root / AUDIT_FILE
        if audit_path.exists():
            engine.audit_log = [
                json.loads(line)
                for line in audit_path.read_text().splitlines()
                if line.strip()
            ]
        return engine


def resolve_data_dir(explicit: str | None = None) -> str:
    """Explicit flag beats the environment override beats the default."""
    if explicit:
        return explicit
    return os.environ.get(DATA_DIR_ENV, "data")


# --- demo world -----------------------------------------------------------


def build_demo_engine(cfg: EngineConfig | None = None) -> Engine:
    """Small hand-written graph for the service demo and UI fixtures."""
    cfg = cfg or EngineConfig()
    g = KnowledgeGraph(cfg.capacity)

    def node(nid: str, ntype: NodeType, label: str, prior=None, attrs=None):
        g.add_node(
            Node(
                id=nid,
                type=ntype,
                label=label,
                prior=prior,
                attributes=attrs or {},
                embedding=tuple(embed(preprocess(label)).tolist()),
            )
        )

    node("d:influenza", NodeType.Disease, "influenza", prior=0.6)
    node("d:migraine", NodeType.Disease, "migraine", prior=0.4)
    node("s:fever", NodeType.Symptom, "fever")
    node("s:cough", NodeType.Symptom, "cough")
    node("s:headache", NodeType.Symptom, "headache")
    node("s:nausea", NodeType.Symptom, "nausea")
    node(
        "t:oseltamivir",
        NodeType.Treatment,
        "oseltamivir",
        attrs={"cost": 12.0, "efficacy:d:influenza": 0.85, "risk:elderly": 0.2},
    )
    node(
        "t:ibuprofen",
        NodeType.Treatment,
        "ibuprofen",
        attrs={
            "cost": 3.0,
            "efficacy:d:migraine": 0.7,
            "efficacy:d:influenza": 0.3,
            "risk:renal_impairment": 0.4,
        },
    )
    node(
        "t:rest",
        NodeType.Treatment,
        "rest",
        attrs={"cost": 1.0, "efficacy:d:influenza": 0.4, "efficacy:d:migraine": 0.35},
    )
    node("p:default", NodeType.PatientProfile, "default profile", attrs={"elderly": 1.0})

    edges = [
        ("s:fever", "d:influenza", EdgeType.Diagnostic, 0.8),
        ("s:cough", "d:influenza", EdgeType.Diagnostic, 0.7),
        ("s:headache", "d:migraine", EdgeType.Diagnostic, 0.75),
        ("s:nausea", "d:migraine", EdgeType.Diagnostic, 0.5),
        ("d:influenza", "s:headache", EdgeType.Causal, 0.4),
        ("t:oseltamivir", "d:influenza", EdgeType.Therapeutic, 0.85),
        ("t:ibuprofen", "d:migraine", EdgeType.Therapeutic, 0.7),
        ("t:rest", "d:influenza", EdgeType.Therapeutic, 0.4),
        ("t:rest", "d:migraine", EdgeType.Therapeutic, 0.35),
    ]
    for src, dst, etype, w in edges:
        g.add_edge(Edge(src=src, dst=dst, type=etype, weight=w, evidence_count=1))

    lexicon = parse_lexicon(
        {
            "influenza": {"entity_type": "Disease", "score": 1.0},
            "migraine": {"entity_type": "Disease", "score": 1.0},
            "fever": {"entity_type": "Symptom", "score": 1.0},
            "cough": {"entity_type": "Symptom", "score": 1.0},
            "headache": {"entity_type": "Symptom", "score": 1.0},
            "nausea": {"entity_type": "Symptom", "score": 1.0},
            "oseltamivir": {"entity_type": "Treatment", "score": 1.0},
            "ibuprofen": {"entity_type": "Treatment", "score": 1.0},
            "rest": {"entity_type": "Treatment", "score": 1.0},
        }
    )
    return Engine(cfg, graph=g, lexicon=lexicon)


# --- evaluation harness -----------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    """Quantitative run metrics plus the fixed qualitative panel inputs."""

    diagnostic: ConfusionCounts
    recommendation_relevant: int
    recommendation_total: int
    coverage: float
    alignment: float
    extraction: float
    mean_utility_error: float
    batch_elapsed_ms: tuple[float, ...]
    extraction_prf: dict[str, float | None]
    posterior_sample: Posterior | None

    @property
    def diagnostic_accuracy(self) -> float | None:
        return classification_metrics(self.diagnostic)["accuracy"]

    @property
    def recommendation_precision(self) -> float | None:
        if self.recommendation_total == 0:
            return None
        return self.recommendation_relevant / self.recommendation_total


def evaluate_world(world: GroundTruthWorld, cfg: EngineConfig | None = None) -> EvalResult:
    """Run the full pipeline against a generated world and score it.

    Treatment options come from the world's option tables (costs and efficacy
    are case data that free text cannot carry); the posterior comes from the
    graph the pipeline built. Utilities for the error metric are measured on
    the ground-truth scale, so picking the true optimum scores zero error.
    """
    cfg = cfg or EngineConfig()
    engine = Engine(cfg, lexicon=dict(world.lexicon))
    corpus = world.documents()

    # extraction accuracy against annotated mentions
    batch = engine.extract_corpus(corpus)
    found = {(c.provenance, c.surface, c.entity_type.value) for c in batch.entities}
    truth_mentions = world.truth_entity_mentions()
    extraction = extraction_accuracy(found, truth_mentions)
    tp = sum(1 for m in truth_mentions if m in found)
    fp = len(found - truth_mentions)
    fn = len(truth_mentions) - tp
    extraction_prf = classification_metrics(ConfusionCounts(tp=tp, tn=0, fp=fp, fn=fn))

    report = fusion.apply_batch(
        engine.graph,
        batch,
        engine.params,
        smoothing=cfg.smoothing,
        link_threshold=cfg.link_threshold,
    )
    mentioned = world.mentioned_world()
    coverage = semantic_coverage(engine.graph, mentioned)
    alignment = gas(engine.graph, mentioned)

    options = {
        o.id: o for o in treatment_options_from_graph(world.graph)
    }
    weights = UtilityWeights(1.0, 1.0)
    correct = wrong = missed = 0
    relevant = total = 0
    predicted_utilities: list[float] = []
    optimal_utilities: list[float] = []
    posterior_sample: Posterior | None = None
    for case in world.cases:
        known = [s for s in case.symptoms if engine.graph.has_node(s)]
        profile = world.profiles[case.profile_id]
        if not known:
            missed += 1
            continue
        posterior = diagnose(engine.graph, known, cfg.epsilon)
        if posterior_sample is None:
            posterior_sample = posterior
        top, top_p = posterior.top()
        if top_p > cfg.diagnosis_threshold and top == case.true_disease:
            correct += 1
        else:
            wrong += 1
        plan = recommend(posterior, list(options.values()), profile, weights)
        total += 1
        truth_posterior = Posterior(
            entries=tuple(
                sorted(
                    _truth_posterior_entries(world, case.symptoms),
                    key=lambda e: (-e[1], e[0]),
                )
            ),
            epsilon=cfg.epsilon,
        )
        chosen_u = expected_utility(options[plan.chosen[0]], truth_posterior, profile, weights)
        predicted_utilities.append(chosen_u)
        optimal_utilities.append(case.optimal_utility)
        if abs(chosen_u - case.optimal_utility) <= 1e-9:
            relevant += 1
    return EvalResult(
        diagnostic=ConfusionCounts(tp=correct, tn=0, fp=wrong, fn=missed),
        recommendation_relevant=relevant,
        recommendation_total=total,
        coverage=coverage,
        alignment=alignment,
        extraction=extraction,
        mean_utility_error=(
            mue(predicted_utilities, optimal_utilities) if predicted_utilities else 0.0
        ),
        batch_elapsed_ms=(report.elapsed_ms,),
        extraction_prf=extraction_prf,
        posterior_sample=posterior_sample,
    )


def _truth_posterior_entries(world: GroundTruthWorld, symptoms: Sequence[str]):
    from .evalkit import _truth_posterior

    return list(_truth_posterior(world.graph, symptoms).items())


def qualitative_rows() -> dict[str, str]:
    """Fixed simulated-panel rows for the metric report."""
    events = simulated_likert_events()
    summary = aggregate_likert(events)
    kappa = cohens_kappa(reference_rater_table())
    acc_mean, acc_sd = summary["accuracy"]
    rel_mean, rel_sd = summary["reliability"]
    usa_mean, usa_sd = summary["usability"]
    return {
        "Clinician Feedback (Mean Likert Score: Accuracy)": f"{acc_mean:.1f} (± {acc_sd:.1f})",
        "Clinician Feedback (Mean Likert Score: Reliability)": f"{rel_mean:.1f} (± {rel_sd:.1f})",
        "Clinician Feedback (Mean Likert Score: Applicability)": f"{usa_mean:.1f} (± {usa_sd:.1f})",
        "Clinician Feedback (Cohen's Kappa)": f"{kappa:.6f}",
    }
