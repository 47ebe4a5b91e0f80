"""Diagnosis and treatment recommendation over a graph snapshot.

Diagnosis is Bayes over disease nodes: the symptom-set likelihood factorizes
as a product of diagnostic/causal edge weights with a configurable smoothing
floor, and disease priors live on the nodes (uniform when unset). Treatment
selection maximizes posterior-weighted utility; the budget-constrained
variant optimizes over treatment subsets (size <= 3, additive cost and
utility) and keeps a projected-subgradient multiplier trace alongside an
exact search so the two can be cross-checked.

Everything here is read-only over the graph and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .errors import (
    DiseaseNotFound,
    EmptySymptomSet,
    InvalidField,
    NoDiseases,
    NoFeasiblePlan,
    NoOptions,
    NotADisease,
    NotASymptom,
    UnknownNode,
)
from .graph import EdgeType, KnowledgeGraph, NodeType

DEFAULT_EPSILON = 0.01
MAX_PLAN_SIZE = 3
BRUTE_FORCE_LIMIT = 20

LIKELIHOOD_EDGE_TYPES = (EdgeType.Diagnostic, EdgeType.Causal)


@dataclass(frozen=True)
class Posterior:
    """Normalized disease distribution, sorted by probability then id."""

    entries: tuple[tuple[str, float], ...]
    epsilon: float

    def top(self) -> tuple[str, float]:
        return self.entries[0]

    def above(self, threshold: float) -> tuple[str, ...]:
        return tuple(d for d, p in self.entries if p > threshold)

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)


@dataclass(frozen=True)
class PatientProfile:
    id: str = "anonymous"
    features: Mapping[str, float] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", dict(self.features or {}))
        for name, value in self.features.items():
            if not math.isfinite(float(value)):
                raise InvalidField(f"profile feature {name!r} must be finite")


@dataclass(frozen=True)
class TreatmentOption:
    id: str
    efficacy_by_disease: Mapping[str, float]
    risk_features: Mapping[str, float]
    cost: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "efficacy_by_disease", dict(self.efficacy_by_disease))
        object.__setattr__(self, "risk_features", dict(self.risk_features))
        for name, value in {**self.efficacy_by_disease, **self.risk_features}.items():
            if not 0.0 <= float(value) <= 1.0:
                raise InvalidField(
                    f"efficacy/risk entries must be in [0, 1]; {name!r} is {value!r}"
                )
        if self.cost < 0:
            raise InvalidField("treatment cost must be nonnegative")


@dataclass(frozen=True)
class UtilityWeights:
    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self) -> None:
        for name in ("w1", "w2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InvalidField(f"{name} must be finite and nonnegative")


@dataclass(frozen=True)
class Budget:
    c_max: float
    eta: float = 0.1
    max_iter: int = 50

    def __post_init__(self) -> None:
        if self.c_max < 0:
            raise InvalidField("c_max must be nonnegative")
        if self.eta <= 0:
            raise InvalidField("eta must be positive")
        if self.max_iter < 1:
            raise InvalidField("max_iter must be at least 1")


@dataclass(frozen=True)
class DiseaseContribution:
    disease: str
    probability: float
    utility: float


@dataclass(frozen=True)
class TreatmentPlan:
    chosen: tuple[str, ...]
    expected_utility: float
    total_cost: float
    lambda_final: float
    budget_ok: bool
    per_disease_breakdown: tuple[DiseaseContribution, ...]

    def to_dict(self) -> dict:
        return {
            "chosen": list(self.chosen),
            "expected_utility": self.expected_utility,
            "total_cost": self.total_cost,
            "lambda_final": self.lambda_final,
            "budget_ok": self.budget_ok,
            "per_disease_breakdown": [
                {"disease": c.disease, "probability": c.probability, "utility": c.utility}
                for c in self.per_disease_breakdown
            ],
        }


@dataclass(frozen=True)
class EvidencePath:
    symptom: str
    edge_type: EdgeType | None
    weight: float
    floored: bool


def _require_symptoms(g: KnowledgeGraph, symptoms: Iterable[str]) -> list[str]:
    ids = list(symptoms)
    if not ids:
        raise EmptySymptomSet("symptom set must be nonempty")
    for sid in ids:
        node = g.nodes.get(sid)
        if node is None:
            raise UnknownNode(f"symptom id {sid!r} not in graph")
        if node.type is not NodeType.Symptom:
            raise NotASymptom(f"{sid!r} is a {node.type.value}, not a Symptom")
    return ids


def _symptom_factor(g: KnowledgeGraph, sid: str, disease_id: str, epsilon: float) -> tuple[float, EdgeType | None, bool]:
    edges = g.edges_between(sid, disease_id, types=LIKELIHOOD_EDGE_TYPES)
    if not edges:
        return epsilon, None, True
    best = max(edges, key=lambda e: e.weight)
    return max(best.weight, epsilon), best.type, best.weight < epsilon


def likelihood(
    g: KnowledgeGraph,
    symptoms: Iterable[str],
    disease_id: str,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """P(symptoms | disease) as a product of floored edge-weight factors."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidField(f"epsilon must be in (0, 1), got {epsilon!r}")
    node = g.nodes.get(disease_id)
    if node is None:
        raise UnknownNode(f"disease id {disease_id!r} not in graph")
    if node.type is not NodeType.Disease:
        raise NotADisease(f"{disease_id!r} is a {node.type.value}, not a Disease")
    ids = _require_symptoms(g, symptoms)
    result = 1.0
    for sid in ids:
        factor, _, _ = _symptom_factor(g, sid, disease_id, epsilon)
        result *= factor
    return result


def diagnose(
    g: KnowledgeGraph,
    symptoms: Iterable[str],
    epsilon: float = DEFAULT_EPSILON,
) -> Posterior:
    """Posterior over all disease nodes given the symptom set.

    Unset disease priors default to a uniform share, so a graph built purely
    from text (where priors are never stated) still normalizes sensibly.
    """
    ids = _require_symptoms(g, symptoms)
    diseases = sorted(n.id for n in g.nodes_of_type(NodeType.Disease))
    if not diseases:
        raise NoDiseases("graph contains no Disease nodes")
    uniform = 1.0 / len(diseases)
    joint: dict[str, float] = {}
    for did in diseases:
        prior = g.nodes[did].prior
        prior = uniform if prior is None else prior
        joint[did] = likelihood(g, ids, did, epsilon) * prior
    total = sum(joint.values())
    if total <= 0.0:
        # all priors explicitly zero; fall back to likelihood-only weighting
        joint = {did: likelihood(g, ids, did, epsilon) for did in diseases}
        total = sum(joint.values())
    entries = sorted(
        ((did, p / total) for did, p in joint.items()),
        key=lambda item: (-item[1], item[0]),
    )
    return Posterior(entries=tuple(entries), epsilon=epsilon)


def risk(t: TreatmentOption, p: PatientProfile) -> float:
    """Profile-weighted sum of matching risk contributions, clamped to [0, 1]."""
    total = 0.0
    for name, contribution in t.risk_features.items():
        total += contribution * p.features.get(name, 0.0)
    return min(max(total, 0.0), 1.0)


def utility(
    t: TreatmentOption,
    disease_id: str,
    p: PatientProfile,
    w: UtilityWeights,
) -> float:
    """w1 * efficacy - w2 * risk; unknown diseases contribute zero efficacy."""
    efficacy = t.efficacy_by_disease.get(disease_id, 0.0)
    return w.w1 * efficacy - w.w2 * risk(t, p)


def expected_utility(
    t: TreatmentOption,
    posterior: Posterior,
    p: PatientProfile,
    w: UtilityWeights,
) -> float:
    return sum(prob * utility(t, did, p, w) for did, prob in posterior.entries)


def _breakdown(
    chosen: Sequence[TreatmentOption],
    posterior: Posterior,
    p: PatientProfile,
    w: UtilityWeights,
) -> tuple[DiseaseContribution, ...]:
    return tuple(
        DiseaseContribution(
            disease=did,
            probability=prob,
            utility=sum(utility(t, did, p, w) for t in chosen),
        )
        for did, prob in posterior.entries
    )


def recommend(
    posterior: Posterior,
    options: Sequence[TreatmentOption],
    p: PatientProfile,
    w: UtilityWeights,
) -> TreatmentPlan:
    """Single treatment maximizing posterior-weighted utility, ties by id."""
    if not options:
        raise NoOptions("no treatment options supplied")
    scored = sorted(
        ((expected_utility(t, posterior, p, w), t) for t in options),
        key=lambda item: (-item[0], item[1].id),
    )
    best_eu, best = scored[0]
    return TreatmentPlan(
        chosen=(best.id,),
        expected_utility=best_eu,
        total_cost=best.cost,
        lambda_final=0.0,
        budget_ok=True,
        per_disease_breakdown=_breakdown([best], posterior, p, w),
    )


def _plan_candidates(
    options: Sequence[TreatmentOption],
    posterior: Posterior,
    p: PatientProfile,
    w: UtilityWeights,
    max_size: int = MAX_PLAN_SIZE,
) -> list[tuple[tuple[str, ...], float, float, tuple[TreatmentOption, ...]]]:
    """All nonempty subsets up to max_size as (ids, eu, cost, members)."""
    per_option = [(t, expected_utility(t, posterior, p, w)) for t in options]
    plans = []
    for size in range(1, min(max_size, len(options)) + 1):
        for subset in combinations(per_option, size):
            members = tuple(t for t, _ in subset)
            ids = tuple(sorted(t.id for t in members))
            eu = sum(e for _, e in subset)
            cost = sum(t.cost for t in members)
            plans.append((ids, eu, cost, members))
    return plans


def recommend_constrained(
    posterior: Posterior,
    options: Sequence[TreatmentOption],
    p: PatientProfile,
    w: UtilityWeights,
    b: Budget,
) -> TreatmentPlan:
    """Budget-constrained plan over treatment subsets.

    The multiplier trace follows a projected subgradient on the overspend
    penalty: each step picks the subset maximizing eu - mu * max(0, cost -
    c_max), then mu <- max(0, mu + eta * (cost - c_max)). For small option
    sets the final answer comes from exact search over feasible subsets; the
    subgradient pass supplies the multiplier and a cross-check.
    """
    if not options:
        raise NoOptions("no treatment options supplied")
    plans = _plan_candidates(options, posterior, p, w)
    feasible = [pl for pl in plans if pl[2] <= b.c_max]
    if not feasible:
        raise NoFeasiblePlan(
            f"no treatment subset fits the budget c_max={b.c_max}"
        )

    # projected subgradient on the penalized objective
    mu = 0.0
    best_seen: tuple[tuple[str, ...], float, float, tuple[TreatmentOption, ...]] | None = None
    for _ in range(b.max_iter):
        current = min(
            plans,
            key=lambda pl: (-(pl[1] - mu * max(0.0, pl[2] - b.c_max)), pl[0]),
        )
        if current[2] <= b.c_max and (best_seen is None or current[1] > best_seen[1]):
            best_seen = current
        overspend = current[2] - b.c_max
        new_mu = max(0.0, mu + b.eta * overspend)
        if new_mu == mu and overspend <= 0:
            break
        mu = new_mu

    if len(options) <= BRUTE_FORCE_LIMIT:
        ids, eu, cost, members = min(feasible, key=lambda pl: (-pl[1], pl[0]))
    elif best_seen is not None:
        ids, eu, cost, members = best_seen
    else:
        # subgradient never visited a feasible subset within max_iter; use the
        # best feasible subset found during enumeration
        ids, eu, cost, members = min(feasible, key=lambda pl: (-pl[1], pl[0]))

    return TreatmentPlan(
        chosen=ids,
        expected_utility=eu,
        total_cost=cost,
        lambda_final=mu,
        budget_ok=cost <= b.c_max,
        per_disease_breakdown=_breakdown(members, posterior, p, w),
    )


def explain(
    g: KnowledgeGraph,
    disease_id: str,
    symptoms: Iterable[str],
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[EvidencePath, ...]:
    """Per-symptom evidence: contributing edge, or the smoothing-floor marker."""
    node = g.nodes.get(disease_id)
    if node is None or node.type is not NodeType.Disease:
        raise DiseaseNotFound(f"no Disease node {disease_id!r}")
    ids = _require_symptoms(g, symptoms)
    paths = []
    for sid in sorted(ids):
        factor, edge_type, floored = _symptom_factor(g, sid, disease_id, epsilon)
        paths.append(
            EvidencePath(symptom=sid, edge_type=edge_type, weight=factor, floored=floored or edge_type is None)
        )
    return tuple(paths)


def treatment_options_from_graph(g: KnowledgeGraph) -> list[TreatmentOption]:
    """Build option tables from Treatment nodes.

    Efficacy precedence per disease: explicit ``efficacy:<disease>`` attribute,
    then Therapeutic edge weight, else absent. Cost from the ``cost``
    attribute (0 when missing), risk contributions from ``risk:<feature>``
    attributes.
    """
    options = []
    for node in sorted(g.nodes_of_type(NodeType.Treatment), key=lambda n: n.id):
        efficacy: dict[str, float] = {}
        risk_features: dict[str, float] = {}
        cost = 0.0
        for name, value in node.attributes.items():
            if name == "cost":
                cost = float(value)
            elif name.startswith("efficacy:"):
                efficacy[name.split(":", 1)[1]] = float(value)
            elif name.startswith("risk:"):
                risk_features[name.split(":", 1)[1]] = float(value)
        for edge in g.out_edges(node.id):
            if edge.type is EdgeType.Therapeutic:
                efficacy.setdefault(edge.dst, edge.weight)
        options.append(
            TreatmentOption(
                id=node.id,
                efficacy_by_disease=efficacy,
                risk_features=risk_features,
                cost=cost,
            )
        )
    return options
