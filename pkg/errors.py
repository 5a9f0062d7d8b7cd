"""
Exception types shared by the Stokes entanglement lab modules.
"""


class StokesLabError(Exception):
    """Base class for all errors raised by the lab."""


class TruncationMismatchError(StokesLabError, ValueError):
    """Operators or states built over incompatible truncations."""


class InvalidStateError(StokesLabError, ValueError):
    """A state violates its invariants or a constructor got bad arguments."""


class StateSpecError(StokesLabError, ValueError):
    """A command-line state specification could not be parsed."""

    def __init__(self, message: str, token: str = ""):
        self.token = token
        if token:
            message = f"{message}: {token!r}"
        super().__init__(message)


class NumericalGuardError(StokesLabError, ArithmeticError):
    """A quantity that must be non-negative came out clearly negative."""


class InsufficientShotsError(StokesLabError, ValueError):
    """Too few simulated shots to form an estimate."""
