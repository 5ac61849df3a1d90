"""Exception types shared across the package."""


class OdeupError(Exception):
    """Base class for all errors raised by odeup."""


class NonPSD(OdeupError):
    """A matrix required to be symmetric positive semidefinite is not."""


class ShapeMismatch(OdeupError):
    """Operands have non-conformant shapes."""


class SingularInnovation(OdeupError):
    """The innovation covariance of a Kalman update is numerically singular."""


class NonPositiveStep(OdeupError):
    """A step size that must be positive is zero or negative."""


class OrderOutOfRange(OdeupError):
    """A derivative or quadrature order lies outside the supported range."""


class UnknownProblem(OdeupError):
    """No benchmark problem is registered under the requested name."""


class DimensionMismatch(OdeupError):
    """A vector has the wrong length for the object it parameterizes."""


class UnsupportedOrder(OdeupError):
    """A derivative oracle cannot supply the requested order."""


class DegenerateResidual(OdeupError):
    """Diffusion calibration received a singular innovation covariance."""


class SingularPrediction(OdeupError):
    """A predicted covariance needed by the smoother is numerically singular."""


class DimensionTooLarge(OdeupError):
    """A tensor-grid quadrature rule would grow too large in this dimension."""


class NonFiniteState(OdeupError):
    """An integrator produced NaN or infinite state values.

    Attributes:
        t: time at which the state became non-finite, if known.
        sample_index: index of the failing Monte Carlo sample, if applicable.
    """

    def __init__(self, message, t=None, sample_index=None):
        super().__init__(message)
        self.t = t
        self.sample_index = sample_index


class NodeSolveFailed(OdeupError):
    """A per-quadrature-node solve failed during uncertainty propagation.

    Attributes:
        node_index: index of the failing quadrature node.
        error: the underlying exception.
    """

    def __init__(self, node_index, error):
        super().__init__(f"solve for quadrature node {node_index} failed: {error}")
        self.node_index = node_index
        self.error = error


class MixtureGridMismatch(OdeupError):
    """Per-node solutions do not share a common time grid."""
