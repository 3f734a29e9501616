"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so solvers raise the most
specific class that applies instead of a bare RuntimeError.
"""


class StarkLadderError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(StarkLadderError):
    """Invalid run configuration (bad flag value, unreadable config file)."""


class NonConvergedError(StarkLadderError):
    """A numerical result failed its convergence test."""


class EdgeContaminationError(StarkLadderError):
    """Wave-packet support reached the truncated chain's edge zone."""


class OutOfValidityError(StarkLadderError):
    """An asymptotic expansion was evaluated outside its validity domain."""


class DegeneracyError(StarkLadderError):
    """An eigenproblem or phase loop hit an exact degeneracy."""
