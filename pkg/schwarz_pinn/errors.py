from typing import List, Optional


class SchwarzPinnError(Exception):
    """Base class for every error raised by the package"""


class ConfigurationError(SchwarzPinnError, ValueError):
    """
    Invalid user-facing parameter (dimension, width, tau, eps, partition, ...)
    """

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ContractViolation(SchwarzPinnError, ValueError):
    """Violated precondition of an internal API"""


class SolverError(SchwarzPinnError, RuntimeError):
    """Internal numerical failure"""
