# nlslab/errors.py
from typing import Any, Optional


class NlsLabError(Exception):
    """Base error; carries a structured detail payload like the API responses"""

    title = "Lab Error"
    status_code = 400

    def __init__(self, message: str, **extra: Any):
        super().__init__(message)
        self.message = message
        self.extra = extra

    @property
    def detail(self) -> dict:
        return {"error": self.title, "message": self.message, **self.extra}


class GridError(NlsLabError):
    title = "Invalid Grid"


class GridMismatchError(NlsLabError):
    title = "Grid Mismatch"


class ResolutionError(NlsLabError):
    """High-frequency tail too heavy for spectral differentiation"""

    title = "Unresolved Field"
    status_code = 422


class PreconditionError(NlsLabError):
    title = "Precondition Failed"
    status_code = 422


class BracketError(NlsLabError):
    title = "Bracket Not Found"
    status_code = 422


class ConvergenceError(NlsLabError):
    title = "No Convergence"
    status_code = 422


class CertificationError(NlsLabError):
    title = "Certification Failed"
    status_code = 422

    def __init__(self, invariant: str, message: str, value: Optional[float] = None):
        super().__init__(message, invariant=invariant, value=value)
        self.invariant = invariant


class HypothesisError(NlsLabError):
    title = "Hypothesis Violated"


class ConcentrationError(NlsLabError):
    """Exterior mass too large for the truncated virial identity"""

    title = "Not Concentrated"
    status_code = 422


class InsufficientSnapshotsError(NlsLabError):
    title = "Insufficient Snapshots"
    status_code = 422


class ConfigError(NlsLabError):
    title = "Invalid Config"


class MissingCertificateError(NlsLabError):
    title = "Certificate Not Found"
    status_code = 404
