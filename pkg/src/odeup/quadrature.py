"""Quadrature rules over parameter distributions.

Provides the third-degree spherical cubature rule, tensorized Gauss-Hermite
rules, and plain Monte Carlo for both Gaussian and uniform-box parameter
distributions.  All rules are probability-normalized (weights sum to one)
and immutable; Monte Carlo rules are deterministic given their seed, with
no global generator state.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionTooLarge, OdeupError, OrderOutOfRange
from .gaussians import sqrt_factor
from .ivp import GaussianParameters, UniformBoxParameters

_GH_MAX_DIM = 3
_GH_MAX_ORDER = 10


@dataclass
class QuadratureRule:
    """Nodes (N, e) and weights (N,) of a probability-normalized rule."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.nodes.shape[0] != self.weights.shape[0] or self.weights.size < 1:
            raise ValueError(
                f"{self.nodes.shape[0]} nodes for {self.weights.shape[0]} weights"
            )
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")

    def __len__(self):
        return self.weights.shape[0]


@dataclass
class RuleSpec:
    """Declarative rule selection, as configured from the CLI.

    kind is one of "cubature", "gauss_hermite", "monte_carlo"; ``order``
    applies to Gauss-Hermite, ``n`` and ``seed`` to Monte Carlo.
    """

    kind: str = "cubature"
    order: int = 5
    n: int = 1000
    seed: int = 0


def spherical_cubature(mean, cov):
    """Third-degree spherical cubature rule for a Gaussian N(mean, cov).

    Places 2e nodes at mean +- sqrt(e) * L e_i, with L the lower-triangular
    factor of cov, all weighted 1/(2e).  Exact for polynomials of total
    degree up to three under the Gaussian.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    e = mean.size
    factor = sqrt_factor(cov)
    if factor.shape != (e, e):
        raise OdeupError(f"cov shape {factor.shape} for mean of length {e}")
    offsets = np.sqrt(e) * factor.T  # row i is sqrt(e) * L e_i
    nodes = np.concatenate([mean + offsets, mean - offsets], axis=0)
    return QuadratureRule(nodes, np.full(2 * e, 1.0 / (2 * e)))


def _hermite_rule_1d(order):
    # Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
    # polynomials: zero diagonal, off-diagonal sqrt(1..order-1).
    if order == 1:
        return np.array([0.0]), np.array([1.0])
    off = np.sqrt(np.arange(1, order, dtype=float))
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0, :] ** 2
    # the rule is symmetric by theory; enforce it against eigensolver noise
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights / weights.sum()


def gauss_hermite(mean, cov, order):
    """Tensorized Gauss-Hermite rule for a Gaussian N(mean, cov).

    The 1-D probabilists' nodes and weights come from the eigendecomposition
    of the Jacobi tridiagonal matrix; the tensor grid over e dimensions is
    pushed through theta = mean + L xi.  Guarded to e <= 3 and order <= 10
    to bound the order**e grid growth.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    e = mean.size
    if e > _GH_MAX_DIM:
        raise DimensionTooLarge(
            f"Gauss-Hermite tensor grid limited to {_GH_MAX_DIM} dims, got {e}"
        )
    if not 1 <= order <= _GH_MAX_ORDER:
        raise OrderOutOfRange(f"Gauss-Hermite order {order} outside 1..{_GH_MAX_ORDER}")
    factor = sqrt_factor(cov)
    nodes_1d, weights_1d = _hermite_rule_1d(order)
    grids = np.meshgrid(*([nodes_1d] * e), indexing="ij")
    xi = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([weights_1d] * e), indexing="ij")
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return QuadratureRule(mean + xi @ factor.T, weights)


def monte_carlo(dist, n, seed):
    """Monte Carlo rule: n i.i.d. samples from ``dist``, weights 1/n.

    Deterministic for a fixed seed (dedicated generator per call).
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    rng = np.random.default_rng(seed)
    if isinstance(dist, GaussianParameters):
        factor = sqrt_factor(dist.cov)
        nodes = dist.mean + rng.standard_normal((n, dist.dim)) @ factor.T
    elif isinstance(dist, UniformBoxParameters):
        u = rng.random((n, dist.dim))
        nodes = dist.lower + u * (dist.upper - dist.lower)
    else:
        raise OdeupError(f"cannot sample from distribution of type {type(dist)!r}")
    return QuadratureRule(nodes, np.full(n, 1.0 / n))


def build_rule(dist, spec):
    """Instantiate the quadrature rule described by a RuleSpec."""
    if spec.kind == "monte_carlo":
        return monte_carlo(dist, spec.n, spec.seed)
    if not isinstance(dist, GaussianParameters):
        raise OdeupError(
            f"rule {spec.kind!r} requires a Gaussian parameter distribution; "
            "use monte_carlo for uniform parameters"
        )
    if spec.kind == "cubature":
        return spherical_cubature(dist.mean, dist.cov)
    if spec.kind == "gauss_hermite":
        return gauss_hermite(dist.mean, dist.cov, spec.order)
    raise OdeupError(f"unknown quadrature rule kind {spec.kind!r}")
