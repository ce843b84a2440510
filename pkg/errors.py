class DiffSpaceError(Exception):
    # Base class for every failure the library reports on purpose.
    kind = "DiffSpaceError"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ArityMismatch(DiffSpaceError, ValueError):
    kind = "ArityMismatch"


class GuardViolation(DiffSpaceError, ValueError):
    kind = "GuardViolation"


class CarrierMismatch(DiffSpaceError, ValueError):
    kind = "CarrierMismatch"


class NotInCarrier(DiffSpaceError, ValueError):
    kind = "NotInCarrier"


class UnknownName(DiffSpaceError, KeyError):
    kind = "UnknownName"

    def __str__(self) -> str:
        return self.message


class AtlasDisagreement(DiffSpaceError, ValueError):
    kind = "AtlasDisagreement"


class AtlasCoverageError(DiffSpaceError, ValueError):
    kind = "AtlasCoverageError"


class RestrictionError(DiffSpaceError, ValueError):
    kind = "RestrictionError"


class LocalElementUnderAssignment(DiffSpaceError, ValueError):
    kind = "LocalElementUnderAssignment"


class MissingGeneratorValue(DiffSpaceError, ValueError):
    kind = "MissingGeneratorValue"


class MissingProjection(DiffSpaceError, ValueError):
    kind = "MissingProjection"


class IdempotentViolation(DiffSpaceError, ValueError):
    kind = "AlgebraicContradiction"


class DivergentAtZero(DiffSpaceError, ValueError):
    kind = "DivergentAtZero"


class ProbeError(DiffSpaceError, ValueError):
    kind = "ProbeError"


class SamplingBudgetExceeded(DiffSpaceError, RuntimeError):
    kind = "SamplingBudgetExceeded"


class TruncationBudgetExceeded(DiffSpaceError, RuntimeError):
    kind = "TruncationBudgetExceeded"


class SearchBudgetExhausted(DiffSpaceError, RuntimeError):
    kind = "SearchBudgetExhausted"


class DslError(DiffSpaceError, ValueError):
    # Source diagnostics: 1-based line/column plus the set of tokens that would have been accepted.
    kind = "DslError"

    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        super().__init__(message)
        self.line = line
        self.col = col
        self.expected = frozenset(expected)

    def __str__(self) -> str:
        text = f"{self.line}:{self.col}: {self.message}"
        if self.expected:
            text += f" (expected one of: {', '.join(sorted(self.expected))})"
        return text


class DslSyntaxError(DslError):
    kind = "DslSyntaxError"


class DslNameError(DslError):
    kind = "DslNameError"
