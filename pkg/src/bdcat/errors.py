"""Exception hierarchy for the bdcat library.

Every library-raised error derives from :class:`BdcatError`, so callers can
catch one type at an API boundary.  The CLI maps subfamilies to exit codes.
"""


class BdcatError(Exception):
    """Base class for all bdcat errors."""


class SpecError(BdcatError):
    """A schedule/config description is structurally incomplete (missing field)."""


class ValidationError(BdcatError):
    """A value violates a model invariant (e.g. kappa <= 0, negative rate)."""


class ParseError(BdcatError):
    """A config document could not be parsed; carries line/column when known."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class RangeError(BdcatError):
    """A level/state index is outside its admissible range."""


class TruncationError(BdcatError):
    """An unbounded state space was used where a truncation hint is required."""


class NoConvergence(BdcatError):
    """Truncation refinement hit its cap before the change dropped below tol."""


class SingularSystem(BdcatError):
    """A linear system that should be well-posed turned out singular."""


class NotIrreducible(BdcatError):
    """A stationary solve was requested on a reducible generator."""


class NotMonotone(BdcatError):
    """Siegmund dual construction produced a genuinely negative rate."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DegenerateDenominator(BdcatError):
    """A ratio identity has a vanishing denominator (corrupted input)."""


class HypothesisViolated(BdcatError):
    """An identity was invoked outside its hypotheses (e.g. some mu_i = 0)."""


class QuadratureNoConvergence(BdcatError):
    """Quadrature node doubling hit its cap before the answers stabilised."""
