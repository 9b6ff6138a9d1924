"""Exception types shared across the package."""


class DegenflowError(Exception):
    """Base class for all package errors."""


class AssumptionViolated(DegenflowError):
    """A standing model assumption fails (tangency, hyperbolicity, ...).

    The CLI maps these to exit code 2.
    """


class TangencyViolated(AssumptionViolated):
    """A drift or noise field has a nonzero normal component on a face."""


class NonHyperbolic(AssumptionViolated):
    """A vertex linearization rate is zero within tolerance."""


class NonHyperbolicEdge(AssumptionViolated):
    """An averaged transversal rate is zero within its error estimate."""


class NonHyperbolicCycle(AssumptionViolated):
    """The cycle strength index equals one within tolerance."""


class ScenarioMismatch(AssumptionViolated):
    """An operation was invoked for a model in the wrong scenario."""


class NotInS(AssumptionViolated):
    """The edge does not carry an interior invariant measure."""


class MissingDerivative(DegenflowError):
    """A required derivative is unavailable and no fallback applies."""


class MissingCorrector(DegenflowError):
    """An edge Lyapunov function was requested without its corrector."""


class Infeasible(DegenflowError):
    """No positive weight vector satisfies the gluing inequalities."""


class BadParameters(DegenflowError):
    """Geometry or solver parameters violate their ordering constraints."""


class StepRejected(DegenflowError):
    """A single chart step moved farther than the allowed displacement."""


class AdaptiveFailure(DegenflowError):
    """Step-size halving hit its recursion limit without acceptance."""


class HorizonExceeded(DegenflowError):
    """A hitting time was not observed within the simulation horizon."""


class QuadratureFailure(DegenflowError):
    """A quadrature did not converge to the requested tolerance."""


class SolverFailure(DegenflowError):
    """A linear or nonlinear solve failed or left a large residual."""


class ParseError(DegenflowError):
    """A configuration file is syntactically invalid."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ValidationError(DegenflowError):
    """A configuration file is well-formed but semantically invalid."""
