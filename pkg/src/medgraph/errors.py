"""Exception hierarchy shared by all engine modules.

Every domain error carries a stable ``code`` (its class name) so the CLI and
HTTP layers can emit machine-parseable error bodies without string matching.
"""

from __future__ import annotations


class MedGraphError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- graph store ---------------------------------------------------------

class DuplicateIdWithConflict(MedGraphError):
    """Same node id re-added with a different type or label."""


class InvalidField(MedGraphError):
    """A field value is outside its declared bounds."""


class MissingEndpoint(MedGraphError):
    """Edge references a node id that is not in the graph."""


class InvalidWeight(MedGraphError):
    """Edge weight outside [0, 1]."""


class CapacityExceeded(MedGraphError):
    """Graph is at max_edges and auto-eviction was disabled for the call."""


class EdgeNotFound(MedGraphError):
    pass


class InvalidProbability(MedGraphError):
    """Probability or decay factor outside [0, 1]."""


class SchemaVersionMismatch(MedGraphError):
    """Snapshot document declares an unsupported schema version."""


class CorruptDocument(MedGraphError):
    """Snapshot document is unparseable or violates graph invariants."""


class ElementNotFound(MedGraphError):
    """Node id or edge key not present when a score was requested."""


# --- extraction ----------------------------------------------------------

class UnknownContextTag(MedGraphError):
    """Document context tag absent from the extractor configuration."""


class RemoteExtractorError(MedGraphError):
    """Transport failure or schema violation from the remote extractor."""


# --- fusion --------------------------------------------------------------

class InvalidCounts(MedGraphError):
    """Co-occurrence counts are negative or inconsistent."""


# --- reasoning -----------------------------------------------------------

class NotADisease(MedGraphError):
    pass


class NotASymptom(MedGraphError):
    pass


class UnknownNode(MedGraphError):
    pass


class EmptySymptomSet(MedGraphError):
    pass


class NoDiseases(MedGraphError):
    pass


class NoOptions(MedGraphError):
    pass


class NoFeasiblePlan(MedGraphError):
    """Every candidate plan exceeds the budget and empty plans are not allowed."""


class DiseaseNotFound(MedGraphError):
    pass


# --- feedback ------------------------------------------------------------

class NoLikertData(MedGraphError):
    pass


# --- evalkit -------------------------------------------------------------

class UndefinedMetric(MedGraphError):
    """A rate metric has a zero denominator."""


class LengthMismatch(MedGraphError):
    pass


class EmptyInput(MedGraphError):
    pass


class ZeroVariance(MedGraphError):
    pass


class EmptyGroundTruth(MedGraphError):
    pass


class InvalidSizes(MedGraphError):
    pass


class DegenerateMarginals(MedGraphError):
    """Chance agreement is exactly 1, kappa is undefined."""
