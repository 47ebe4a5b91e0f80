"""Clinician feedback accumulation and bounded parameter tuning.

The reward sums per-case accuracy (mean of the diagnosis-correct and
treatment-accepted indicators) and subtracts a complexity penalty
proportional to graph fill. Parameter updates are a deterministic
coordinate-wise finite-difference hill climb on a replay buffer: each
tunable is probed at +/- 5% of its bound range and moves only on strict
improvement, so the replayed reward never decreases and every parameter
stays inside its declared bounds. The update entry point is a port; a
stochastic tuner can replace it without touching callers (hence the unused
seed argument).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

from .errors import InvalidField, NoLikertData
from .extraction import Lexicon, LexiconEntry
from .graph import KnowledgeGraph
from .reasoning import PatientProfile, Posterior, TreatmentOption, UtilityWeights, recommend

LIKERT_DIMENSIONS = ("accuracy", "reliability", "usability")


@dataclass(frozen=True)
class LikertScores:
    accuracy: int
    reliability: int
    usability: int

    def __post_init__(self) -> None:
        for dim in LIKERT_DIMENSIONS:
            value = getattr(self, dim)
            if value not in (1, 2, 3, 4, 5):
                raise InvalidField(f"likert {dim} must be an integer in 1..5")


@dataclass(frozen=True)
class FeedbackEvent:
    case_id: str
    diagnosis_correct: bool
    treatment_accepted: bool
    likert: LikertScores | None = None
    corrected_diagnosis: str | None = None
    clinician_id: str = "unknown"


# bound ranges for every live parameter; the hill-climb step is 5% of these
PARAM_BOUNDS: dict[str, tuple[float, float]] = {
    "alpha": (0.0, 5.0),
    "beta": (0.0, 5.0),
    "gamma": (0.0, 1.0),
    "tau": (0.05, 0.95),
    "w1": (0.0, 5.0),
    "w2": (0.0, 5.0),
    "lambda_c": (0.0, 5.0),
}

# tau bounds are exclusive; clamp just inside them
_TAU_MARGIN = 1e-6


@dataclass(frozen=True)
class TunableParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    tau: float = 0.7
    w1: float = 1.0
    w2: float = 1.0
    lambda_c: float = 0.5

    def __post_init__(self) -> None:
        for name, (lo, hi) in PARAM_BOUNDS.items():
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidField(f"{name} must be finite")
            if name == "tau":
                if not lo < value < hi:
                    raise InvalidField(f"tau must be strictly inside ({lo}, {hi})")
            elif not lo <= value <= hi:
                raise InvalidField(f"{name} must be within [{lo}, {hi}], got {value}")

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "TunableParams":
        known = {f.name for f in fields(cls)}
        return cls(**{k: float(v) for k, v in d.items() if k in known})


def clamp_param(name: str, value: float) -> float:
    lo, hi = PARAM_BOUNDS[name]
    if name == "tau":
        lo, hi = lo + _TAU_MARGIN, hi - _TAU_MARGIN
    return min(max(value, lo), hi)


@dataclass(frozen=True)
class ReplayCase:
    """One feedback event plus enough context to re-score decisions.

    When the recommendation context (posterior, options, profile, chosen) is
    present, the treatment indicator is recomputed under candidate utility
    weights; otherwise the recorded flags stand.
    """

    event: FeedbackEvent
    posterior: Posterior | None = None
    options: tuple[TreatmentOption, ...] = ()
    profile: PatientProfile | None = None
    recommended: tuple[str, ...] = ()


@dataclass(frozen=True)
class RewardRecord:
    window: tuple[float, ...]
    complexity: float
    reward: float


def case_accuracy(event: FeedbackEvent) -> float:
    """Mean of the two 0/1 outcome indicators."""
    return (float(event.diagnosis_correct) + float(event.treatment_accepted)) / 2.0


def graph_complexity(g: KnowledgeGraph) -> float:
    return g.edge_count / g.capacity.max_edges


def reward(
    window: Iterable[FeedbackEvent],
    g: KnowledgeGraph,
    params: TunableParams,
) -> float:
    """Summed per-case accuracy minus the weighted complexity penalty."""
    return sum(case_accuracy(e) for e in window) - params.lambda_c * graph_complexity(g)


def reward_record(
    window: Sequence[FeedbackEvent],
    g: KnowledgeGraph,
    params: TunableParams,
) -> RewardRecord:
    accuracies = tuple(case_accuracy(e) for e in window)
    complexity = graph_complexity(g)
    return RewardRecord(
        window=accuracies,
        complexity=complexity,
        reward=sum(accuracies) - params.lambda_c * complexity,
    )


def _treatment_indicator(case: ReplayCase, params: TunableParams) -> float:
    if case.posterior is None or not case.options or not case.recommended:
        return float(case.event.treatment_accepted)
    profile = case.profile or PatientProfile()
    plan = recommend(
        case.posterior,
        case.options,
        profile,
        UtilityWeights(params.w1, params.w2),
    )
    matches = plan.chosen == case.recommended
    # accepted: staying on the accepted plan is good; rejected: moving off it is
    return float(matches if case.event.treatment_accepted else not matches)


def replay_reward(
    params: TunableParams,
    history: Sequence[ReplayCase],
    g: KnowledgeGraph,
) -> float:
    """Reward over the replay buffer with decisions re-scored under params."""
    total = 0.0
    for case in history:
        diag = float(case.event.diagnosis_correct)
        treat = _treatment_indicator(case, params)
        total += (diag + treat) / 2.0
    return total - params.lambda_c * graph_complexity(g)


PARAM_ORDER = ("alpha", "beta", "gamma", "tau", "w1", "w2", "lambda_c")


def update_params(
    params: TunableParams,
    history: Sequence[ReplayCase],
    g: KnowledgeGraph,
    rng_seed: int = 0,
) -> TunableParams:
    """One bounded hill-climb sweep over every tunable, in a fixed order.

    For each parameter the replay reward is evaluated at the current value
    and at +/- one step (5% of the bound range, clamped); the parameter moves
    only on strict improvement, keeping the center on ties. An empty history
    carries no signal and returns the params unchanged. ``rng_seed`` is
    reserved for stochastic tuner implementations of this port; the reference
    climb is deterministic.
    """
    del rng_seed
    if not history:
        return params
    current = params
    best_reward = replay_reward(current, history, g)
    for name in PARAM_ORDER:
        lo, hi = PARAM_BOUNDS[name]
        step = 0.05 * (hi - lo)
        center = getattr(current, name)
        for candidate_value in (center - step, center + step):
            candidate_value = clamp_param(name, candidate_value)
            if candidate_value == center:
                continue
            candidate = replace(current, **{name: candidate_value})
            candidate_reward = replay_reward(candidate, history, g)
            if candidate_reward > best_reward + 1e-12:
                current = candidate
                best_reward = candidate_reward
    return current


def aggregate_likert(events: Iterable[FeedbackEvent]) -> dict[str, tuple[float, float]]:
    """Per-dimension (mean, sample standard deviation) over rated events."""
    scores: dict[str, list[int]] = {dim: [] for dim in LIKERT_DIMENSIONS}
    for event in events:
        if event.likert is None:
            continue
        for dim in LIKERT_DIMENSIONS:
            scores[dim].append(getattr(event.likert, dim))
    if not any(scores.values()):
        raise NoLikertData("no feedback event carries Likert scores")
    result = {}
    for dim, values in scores.items():
        n = len(values)
        mean = sum(values) / n
        if n > 1:
            sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
        else:
            sd = 0.0
        result[dim] = (mean, sd)
    return result


def nudge_lexicon_scores(
    lexicon: Lexicon,
    events: Iterable[FeedbackEvent],
    step: float = 0.05,
    lo: float = 0.0,
    hi: float = 10.0,
) -> Lexicon:
    """Bounded per-entry score adjustment driven by corrected diagnoses.

    Entries whose surface matches a corrected diagnosis label get a positive
    nudge (the extractor under-weighted them). The replay reward cannot see
    extraction effects, so this targeted rule stands in for a generic climb
    over extractor weights; remote-model weights are never touched.
    """
    boosts: dict[str, int] = {}
    for event in events:
        if event.corrected_diagnosis and not event.diagnosis_correct:
            slug = event.corrected_diagnosis.split(":", 1)[-1]
            surface = slug.replace("_", " ")
            boosts[surface] = boosts.get(surface, 0) + 1
    if not boosts:
        return lexicon
    updated: Lexicon = {}
    for surface, entries in lexicon.items():
        count = boosts.get(surface, 0)
        if count:
            entries = tuple(
                LexiconEntry(e.entity_type, min(max(e.score + step * count, lo), hi))
                for e in entries
            )
        updated[surface] = entries
    return updated
