# dprag/errors.py
from __future__ import annotations

from typing import Optional


class DpRagError(Exception):
    """Base class for every error raised by the library."""

    exit_code: int = 1


class InvalidArgumentError(DpRagError, ValueError):
    exit_code = 2


class ContractViolationError(DpRagError, RuntimeError):
    """A caller broke a stateful contract (e.g. reused a consumed threshold)."""


class InfeasibleBudgetError(DpRagError):
    exit_code = 3


class BudgetExhaustedError(DpRagError):
    exit_code = 3


class DataError(DpRagError):
    exit_code = 4


class InsufficientCorpusError(DataError):
    pass


class ContextOverflowError(DpRagError):
    exit_code = 4


class BackendError(DpRagError):
    """Remote completion backend failed; keeps the HTTP status and a body excerpt."""

    exit_code = 5

    def __init__(self, message: str, status_code: Optional[int] = None, body: str = "") -> None:
        self.status_code = status_code
        self.body_excerpt = body[:200]
        detail = f" (status={status_code})" if status_code is not None else ""
        super().__init__(f"{message}{detail}: {self.body_excerpt}" if body else f"{message}{detail}")
