"""Exception hierarchy for the verifier."""


class VerifierError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(VerifierError, ValueError):
    """An argument violates a documented precondition."""


class DatasetError(VerifierError):
    """A dataset file could not be parsed.

    Carries the 1-based line number when the failure is tied to a line.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SceneExtractionError(VerifierError):
    """A scene query cannot be satisfied by the record store."""


class PredictorError(VerifierError):
    """A predictor failed: process death, malformed reply, bad shapes."""


class ProtocolError(PredictorError):
    """An external predictor violated the wire protocol."""


class BudgetError(VerifierError):
    """A PAC budget is infeasible for the requested key-feature count."""


class NumericError(VerifierError):
    """A numeric routine failed to converge.

    ``incumbent`` holds the best feasible point found so far, when any.
    """

    def __init__(self, message, incumbent=None):
        self.incumbent = incumbent
        super().__init__(message)
