"""Dynamic medical knowledge graph engine.

Library surface: a typed weighted graph store, gazetteer extraction with
confidence scoring, probabilistic batch fusion with energy-based pruning,
Bayesian diagnosis, budget-constrained treatment recommendation, feedback
driven parameter tuning, and an evaluation kit with a synthetic-world
generator. The CLI and HTTP service live in medgraph.cli / medgraph.service.
"""

from .engine import Engine, EngineConfig, PipelineResult, build_demo_engine
from .errors import MedGraphError
from .extraction import Document, FusionWeights, LexiconExtractor
from .feedback import FeedbackEvent, TunableParams
from .fusion import BatchReport, CandidateBatch, MrfConfig
from .graph import (
    CapacityConfig,
    Edge,
    EdgeType,
    KnowledgeGraph,
    Node,
    NodeType,
)
from .reasoning import (
    Budget,
    PatientProfile,
    Posterior,
    TreatmentOption,
    TreatmentPlan,
    UtilityWeights,
)

__all__ = [
    "BatchReport",
    "Budget",
    "CandidateBatch",
    "CapacityConfig",
    "Document",
    "Edge",
    "EdgeType",
    "Engine",
    "EngineConfig",
    "FeedbackEvent",
    "FusionWeights",
    "KnowledgeGraph",
    "LexiconExtractor",
    "MedGraphError",
    "MrfConfig",
    "Node",
    "NodeType",
    "PatientProfile",
    "PipelineResult",
    "Posterior",
    "TreatmentOption",
    "TreatmentPlan",
    "TunableParams",
    "UtilityWeights",
    "build_demo_engine",
]

__version__ = "0.1.0"
