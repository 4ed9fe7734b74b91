"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the runner can turn any
failure into the documented status without a lookup table.
"""


class CribsimError(Exception):
    exit_code = 1


class InvalidParameter(CribsimError, ValueError):
    """A precondition on an input value was violated."""

    exit_code = 2

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InvariantViolation(CribsimError):
    exit_code = 2


class ProtocolOrderError(CribsimError):
    """Operations were applied out of protocol order (e.g. recall before flip)."""

    exit_code = 2


class SpectralLeakageError(CribsimError):
    exit_code = 3


class NumericalFailure(CribsimError):
    exit_code = 3

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            detail = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
            message = f"{message} ({detail})"
        super().__init__(message)


class UndefinedMetric(CribsimError):
    exit_code = 3


class AnalysisFailure(CribsimError):
    exit_code = 3

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)
