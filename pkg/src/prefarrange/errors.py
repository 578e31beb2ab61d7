"""Exception hierarchy.

Every error carries a short machine-parsable ``code`` that the CLI prints on
the diagnostic stream.
"""

from __future__ import annotations


class ArrangementError(Exception):
    """Base class for all package errors."""

    code = "E_GENERIC"


class SceneReferenceError(ArrangementError):
    """An object or receptacle id is not part of the scene."""

    code = "E_REFERENCE"


class SceneLoadError(ArrangementError):
    """A scene document is malformed or describes an unusable scene."""

    code = "E_SCENE"


class ValidationError(ArrangementError, ValueError):
    """An input value violates its documented range or shape."""

    code = "E_VALIDATION"


class PreconditionError(ArrangementError):
    code = "E_PRECONDITION"


class ComparisonError(ArrangementError):
    """Two arrangements (or an arrangement and a ground truth) are not comparable."""

    code = "E_COMPARISON"


class CoverageError(ArrangementError, KeyError):
    """A prior, affinity, table entry or demonstration is missing for some id."""

    code = "E_COVERAGE"

    def __str__(self) -> str:
        # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class DegenerateUsageError(ArrangementError):
    code = "E_DEGENERATE_USAGE"


class OracleParseError(ArrangementError):
    code = "E_ORACLE_PARSE"


class TransportError(ArrangementError):
    code = "E_TRANSPORT"


class PlanningError(ArrangementError):
    code = "E_PLANNING"


class CapacityError(ArrangementError):
    """The instance is too large for exhaustive enumeration."""

    code = "E_CAPACITY"


class CompletenessError(ArrangementError):
    code = "E_INCOMPLETE"
