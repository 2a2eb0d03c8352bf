"""Exception types shared by every module; the CLI maps them to exit codes."""

from __future__ import annotations


class PropinqError(Exception):
    """Base class for library errors."""


class DomainError(PropinqError, ValueError):
    """An input violates a mathematical precondition."""


class ResourceError(PropinqError, RuntimeError):
    """A computation would exceed its enumeration or memory budget.

    ``completed`` carries whatever partial progress is meaningful, such as the
    largest ball radius that was fully enumerated.
    """

    def __init__(self, message: str, completed: float | None = None):
        super().__init__(message)
        self.completed = completed
