"""Error taxonomy shared across the toolkit.

The split mirrors how failures are reported to callers and, through the CLI,
as process exit codes: bad inputs (exit 2), numerical breakdowns (exit 3),
and failed experiment assertions (exit 4).
"""


class PreconditionError(ValueError):
    """An input violates a documented precondition (bad grid, box, eps, ...)."""


class CoercivityError(PreconditionError):
    """A conjugate or cell solve hit the momentum truncation boundary."""


class OutOfBoxError(PreconditionError):
    """An effective-Hamiltonian query fell outside the cached lattice box."""


class NumericalError(RuntimeError):
    """A solver failed: CFL violation, blow-up, stalled steady state, ..."""


class AgreementError(NumericalError):
    """Two independent routes to the same value disagree beyond tolerance."""

    def __init__(self, message, value_a=None, value_b=None):
        super().__init__(message)
        self.value_a = value_a
        self.value_b = value_b


class AcceptanceFailure(AssertionError):
    """An experiment-level assertion (bound, slope window, trend) failed."""
