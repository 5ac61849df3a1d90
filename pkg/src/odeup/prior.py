"""q-times integrated Wiener process prior.

The state stacks each ODE coordinate together with its first q time
derivatives, derivative-major within each coordinate block, so the full
state dimension is D = d * (q + 1).  Transition and process-noise matrices
are Kronecker products I_d (x) (small (q+1) x (q+1) blocks) and are
materialized densely; all benchmark systems are small enough that no
structured fast path is warranted.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NonPositiveStep, OrderOutOfRange
from .gaussians import sqrt_factor

# (q+1) x (q+1) template caches keyed by q; cheap but called per step.


@dataclass(frozen=True)
class IWPPrior:
    """Integrated Wiener process prior of smoothness order q.

    Attributes:
        d: ODE dimension.
        q: number of modelled derivatives (q >= 1).
        kappa2: diffusion parameter scaling the process noise (> 0).
    """

    d: int
    q: int
    kappa2: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.q < 1:
            raise OrderOutOfRange(f"need d >= 1 and q >= 1, got d={self.d}, q={self.q}")
        if not self.kappa2 > 0.0:
            raise ValueError(f"kappa2 must be positive, got {self.kappa2}")

    @property
    def state_dim(self):
        return self.d * (self.q + 1)


def _transition_block(q, h):
    # Phi[i, j] = h^(j-i) / (j-i)!  for j >= i (0-based), upper triangular.
    block = np.zeros((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(i, q + 1):
            block[i, j] = h ** (j - i) / math.factorial(j - i)
    return block


def _process_noise_block(q, h):
    # Q[i, j] = h^(2q+1-i-j) / ((2q+1-i-j) (q-i)! (q-j)!), 0-based indices.
    block = np.zeros((q + 1, q + 1))
    for i in range(q + 1):
        for j in range(q + 1):
            p = 2 * q + 1 - i - j
            block[i, j] = h**p / (p * math.factorial(q - i) * math.factorial(q - j))
    return block


def transition(prior, h):
    """State transition matrix over a step of size h > 0."""
    if not h > 0.0:
        raise NonPositiveStep(f"step must be positive, got {h}")
    return np.kron(np.eye(prior.d), _transition_block(prior.q, float(h)))


def process_noise_sqrt(prior, h):
    """Lower-triangular square root of the process noise over a step h > 0.

    The noise covariance is kappa2-scaled, so the returned factor carries a
    factor sqrt(kappa2); scaling in kappa2 is exact.
    """
    if not h > 0.0:
        raise NonPositiveStep(f"step must be positive, got {h}")
    block = _process_noise_block(prior.q, float(h))
    try:
        block_sqrt = np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        # Extremely short steps can underflow the Cholesky pivots.
        block_sqrt = sqrt_factor(block)
    return math.sqrt(prior.kappa2) * np.kron(np.eye(prior.d), block_sqrt)


def projection(prior, order):
    """Matrix selecting the order-th derivative block of every coordinate.

    Returns the (d, D) matrix E with E @ state = order-th derivative of the
    ODE solution.  ``order`` must lie in 0..q.
    """
    if not 0 <= order <= prior.q:
        raise OrderOutOfRange(f"derivative order {order} outside 0..{prior.q}")
    unit = np.zeros(prior.q + 1)
    unit[order] = 1.0
    return np.kron(np.eye(prior.d), unit[None, :])
