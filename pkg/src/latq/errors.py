"""Exception hierarchy shared by all latq modules.

The CLI maps these onto its exit-code contract: usage problems exit 1,
model/semantic problems exit 2, numerical problems exit 3.
"""


class LatqError(Exception):
    """Base class for all engine errors."""


class ExpressionError(LatqError):
    """Syntax error while parsing an expression.

    Carries the 1-based character position and a hint of what was expected.
    """

    def __init__(self, message, position, expected=None):
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)
        self.position = position
        self.expected = expected


class EvaluationError(LatqError):
    """Runtime error while evaluating an expression (unbound symbol,
    sqrt of a negative real, division by zero).  ``state`` identifies the
    lattice point at which evaluation failed, when there is one."""

    def __init__(self, message, state=None):
        if state is not None:
            message = f"{message} [at state {tuple(state)}]"
        super().__init__(message)
        self.state = state


class ValidationError(LatqError):
    """Semantic violation: non-affine constraint, cross-axis profile,
    observable of degree >= 2 in shift symbols, mixed state spaces."""


class ModelError(LatqError):
    """Unknown model or observable, or a malformed model file.  ``path``
    points into the offending document (e.g. ``$.profiles.1``)."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{message} [{path}]"
        super().__init__(message)
        self.path = path


class QuantizationError(LatqError):
    """The ladder recursion has no admissible solution on this lattice.

    ``residual`` carries the boundary inconsistency when that is the cause;
    ``state`` names the first state with a negative squared coefficient.
    """

    def __init__(self, message, residual=None, state=None):
        super().__init__(message)
        self.residual = residual
        self.state = state


class NumericalError(LatqError):
    """Quadrature non-convergence, root-bracketing failure, monotonicity
    violation, a non-Hermitian matrix passed to the eigensolver, or a
    dimension beyond the desk-scale cap."""
