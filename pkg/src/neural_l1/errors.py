"""Exception hierarchy shared by every module."""


class NeuralL1Error(Exception):
    """Base class for all library errors."""


class NotHurwitz(NeuralL1Error, ValueError):
    pass


class NotSPD(NeuralL1Error, ValueError):
    pass


class NotSymmetric(NeuralL1Error, ValueError):
    pass


class NonSquare(NeuralL1Error, ValueError):
    pass


class DimensionMismatch(NeuralL1Error, ValueError):
    pass


class NonConvergent(NeuralL1Error, ArithmeticError):
    pass


class NonFinite(NeuralL1Error, ArithmeticError):
    pass


class InvalidParams(NeuralL1Error, ValueError):
    pass


class Singular(NeuralL1Error, ValueError):
    pass


class InvalidCutoff(NeuralL1Error, ValueError):
    pass


class Uncontrollable(NeuralL1Error, ValueError):
    pass


class SingularKg(NeuralL1Error, ValueError):
    pass


class EmptyBuffer(NeuralL1Error, ValueError):
    pass


class IncompleteTrace(NeuralL1Error, ValueError):
    pass


class MismatchedScenarios(NeuralL1Error, ValueError):
    pass


class CertificationFailed(NeuralL1Error):
    """A design (or a run audit in strict mode) violated a certified condition."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        self.detail = detail
        msg = condition if not detail else f"{condition}: {detail}"
        super().__init__(msg)


class ConfigError(NeuralL1Error, ValueError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
