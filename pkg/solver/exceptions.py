"""
Exception hierarchy for the iterfun solver.

Every error has a stable ``kind`` (written into the stderr JSON line of the
``iterfun`` command) and an ``exit_code`` from the command's contract:
1 usage, 2 hypothesis failure, 3 numerical failure.
"""

from __future__ import annotations

from typing import Any

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_HYPOTHESIS = 2
EXIT_NUMERICS = 3


class IterfunError(Exception):
    """Base class for all solver errors."""

    kind = "iterfun-error"
    exit_code = EXIT_NUMERICS

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        payload = {"error": self.kind, "message": self.message, "exit_code": self.exit_code}
        payload.update(self.details)
        return payload


# --- Expressions -------------------------------------------------------------

class ExpressionError(IterfunError):
    kind = "expression-error"
    exit_code = EXIT_USAGE

    def __init__(self, message: str, position: int | None = None, **details: Any):
        super().__init__(message, position=position, **details)
        self.position = position


class LexicalError(ExpressionError):
    kind = "lexical-error"


class ParseError(ExpressionError):
    kind = "syntax-error"


class UnknownFunctionError(ParseError):
    kind = "unknown-function"


class NonConstantExponentError(ParseError):
    kind = "non-constant-exponent"


class EvaluationError(IterfunError):
    kind = "evaluation-error"

    def __init__(self, message: str, x: float):
        super().__init__(message, x=x)
        self.x = x


# --- Function spaces -----------------------------------------------------------

class NotSurjectiveError(IterfunError):
    kind = "not-surjective"


class PreconditionError(IterfunError):
    kind = "precondition"
    exit_code = EXIT_HYPOTHESIS


class OutOfRangeError(IterfunError):
    kind = "out-of-range"

    def __init__(self, message: str, x: float, lo: float, hi: float):
        super().__init__(message, x=x, lo=lo, hi=hi)
        self.x = x


# --- Conditions and solvers ------------------------------------------------------

class HypothesisViolation(IterfunError):
    kind = "hypothesis-violation"
    exit_code = EXIT_HYPOTHESIS

    def __init__(self, message: str, hypothesis: str, witness: tuple[float, ...] | None = None):
        super().__init__(message, hypothesis=hypothesis, witness=list(witness) if witness else None)
        self.hypothesis = hypothesis
        self.witness = witness


class NoRealRootError(IterfunError):
    kind = "no-real-root"
    exit_code = EXIT_HYPOTHESIS


class InfeasiblePlanError(IterfunError):
    kind = "infeasible-plan"
    exit_code = EXIT_HYPOTHESIS


class NonConvergenceError(IterfunError):
    kind = "non-convergence"

    def __init__(self, message: str, distances: list[float]):
        super().__init__(message, distances=distances[-20:])
        self.distances = distances


# --- Piecewise construction -------------------------------------------------------

class ConstructionError(IterfunError):
    kind = "construction-error"


class DomainError(ConstructionError):
    kind = "domain-error"


class SeedError(IterfunError):
    kind = "seed-error"
    exit_code = EXIT_HYPOTHESIS


class PiecewiseHypothesisError(HypothesisViolation):
    """A failed hypothesis of the piecewise construction; ``kind`` is the hypothesis name."""

    def __init__(self, hypothesis: str, message: str, witness: float | None = None):
        super().__init__(message, hypothesis=hypothesis, witness=(witness,) if witness is not None else None)
        self.kind = hypothesis


# --- Command line ---------------------------------------------------------------

class UsageError(IterfunError):
    kind = "usage"
    exit_code = EXIT_USAGE
