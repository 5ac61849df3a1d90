"""Parameterized initial value problems and the benchmark catalog.

A problem is dy/dt = f(y, t, theta) on a time span, with the initial value
given by a map theta -> c(theta).  The catalog problems additionally carry
closed-form oracles for higher solution derivatives at t0 (used to
initialize the ODE filter on all modelled derivatives) and vector fields
that broadcast over leading axes of both y and theta, which the Monte
Carlo reference and the node-batched solver exploit.

Problem definitions are immutable; user-supplied evaluators must be pure
and re-entrant.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import DimensionMismatch, UnknownProblem, UnsupportedOrder


@dataclass
class GaussianParameters:
    """Gaussian distribution over the problem parameters."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise DimensionMismatch(
                f"parameter cov {self.cov.shape} for mean of length {self.mean.size}"
            )

    @property
    def dim(self):
        return self.mean.size


@dataclass
class UniformBoxParameters:
    """Coordinatewise uniform distribution over an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise DimensionMismatch("box bounds have different lengths")
        if not np.all(self.lower < self.upper):
            raise ValueError("box requires lower < upper elementwise")

    @property
    def dim(self):
        return self.lower.size


ParameterDistribution = Union[GaussianParameters, UniformBoxParameters]


def uniform_box_from_gaussian(dist, half_width_sigmas=1.96):
    """Uniform box [mu - k*sigma, mu + k*sigma] matched to a Gaussian.

    sigma is taken coordinatewise from the diagonal of the covariance.
    """
    sigma = np.sqrt(np.diag(dist.cov))
    return UniformBoxParameters(
        dist.mean - half_width_sigmas * sigma,
        dist.mean + half_width_sigmas * sigma,
    )


@dataclass
class IVProblem:
    """Parameterized initial value problem.

    Attributes:
        dim: ODE dimension d.
        f: vector field, (y, t, theta) -> dy/dt.
        jac: Jacobian of f with respect to y, (y, t, theta) -> (d, d).
        init_map: theta -> initial value, a vector of length d.
        tspan: (t0, T) with T > t0.
        theta_dim: parameter dimension.
        derivative_oracle: optional (theta, order) -> order-th time
            derivative of the solution at t0; raises UnsupportedOrder for
            orders it cannot supply.
        vectorized: True if f and jac broadcast over leading axes of y and
            theta (all catalog problems do).
        name: catalog name, empty for user-defined problems.
    """

    dim: int
    f: Callable
    jac: Callable
    init_map: Callable
    tspan: tuple
    theta_dim: int
    derivative_oracle: Optional[Callable] = None
    vectorized: bool = False
    name: str = ""

    def __post_init__(self):
        t0, t1 = self.tspan
        if not t1 > t0:
            raise ValueError(f"tspan must have T > t0, got {self.tspan}")


@dataclass
class ConcreteIVP:
    """An IVProblem with the parameter vector bound.

    f and jac take (y, t) only; ``derivatives(order)`` returns the order-th
    solution derivative at t0 via the parent problem's oracle.
    """

    dim: int
    f: Callable
    jac: Callable
    y0: np.ndarray
    tspan: tuple
    theta: Optional[np.ndarray] = None
    derivative_oracle: Optional[Callable] = None
    vectorized: bool = False
    name: str = ""

    def derivatives(self, order):
        if self.derivative_oracle is None:
            raise UnsupportedOrder(
                f"problem {self.name or '<anonymous>'} has no derivative oracle"
            )
        return self.derivative_oracle(order)


def apply_params(problem, theta):
    """Bind a parameter vector, yielding a solver-ready concrete problem."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (problem.theta_dim,):
        raise DimensionMismatch(
            f"theta has shape {theta.shape}, expected ({problem.theta_dim},)"
        )
    y0 = np.atleast_1d(np.asarray(problem.init_map(theta), dtype=float))
    oracle = None
    if problem.derivative_oracle is not None:
        parent = problem.derivative_oracle
        oracle = lambda order, _t=theta: parent(_t, order)  # noqa: E731
    return ConcreteIVP(
        dim=problem.dim,
        f=lambda y, t, _t=theta: problem.f(y, t, _t),
        jac=lambda y, t, _t=theta: problem.jac(y, t, _t),
        y0=y0,
        tspan=problem.tspan,
        theta=theta,
        derivative_oracle=oracle,
        vectorized=problem.vectorized,
        name=problem.name,
    )


def solution_derivatives(concrete, up_to):
    """Time derivatives [y(t0), dy/dt(t0), ...] of the solution at t0.

    Orders 0 and 1 come from the initial value and the vector field; higher
    orders from the problem's closed-form derivative oracle.  Raises
    UnsupportedOrder when the oracle cannot supply a requested order.
    """
    if up_to < 0:
        raise UnsupportedOrder(f"derivative order {up_to} is negative")
    t0 = concrete.tspan[0]
    derivs = [np.array(concrete.y0, dtype=float)]
    if up_to >= 1:
        derivs.append(np.atleast_1d(np.asarray(concrete.f(concrete.y0, t0), float)))
    for order in range(2, up_to + 1):
        derivs.append(np.atleast_1d(np.asarray(concrete.derivatives(order), float)))
    return derivs


# --------------------------------------------------------------------------
# Benchmark catalog.  Vector fields and Jacobians broadcast over leading
# axes: y has shape (..., d) and theta shape (..., e) or (e,).


def _theta_col(theta, index):
    theta = np.asarray(theta, dtype=float)
    return theta[..., index]


def _linear_problem():
    a, b = 1.0, 0.0

    def f(y, t, theta):
        return a * np.asarray(y, dtype=float) + b

    def jac(y, t, theta):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1] + (1, 1), a)

    def oracle(theta, order):
        y0 = float(np.atleast_1d(theta)[0])
        if order == 0:
            return np.array([y0])
        return np.array([a ** (order - 1) * (a * y0 + b)])

    return IVProblem(
        dim=1,
        f=f,
        jac=jac,
        init_map=lambda theta: np.atleast_1d(theta)[:1].astype(float),
        tspan=(0.0, 3.0),
        theta_dim=1,
        derivative_oracle=oracle,
        vectorized=True,
        name="linear",
    ), GaussianParameters([1.0], [[0.01]])


def _logistic_problem():
    a = 3.0
    y0_val = 0.05

    def f(y, t, theta):
        y = np.asarray(y, dtype=float)
        b = _theta_col(theta, 0)[..., None]
        return a * y * (1.0 - y / b)

    def jac(y, t, theta):
        y = np.asarray(y, dtype=float)
        b = _theta_col(theta, 0)[..., None]
        return (a * (1.0 - 2.0 * y / b))[..., None]

    def oracle(theta, order):
        b = float(np.atleast_1d(theta)[0])
        y = y0_val
        d1 = a * y * (1.0 - y / b)
        if order == 0:
            return np.array([y])
        if order == 1:
            return np.array([d1])
        d2 = a * (1.0 - 2.0 * y / b) * d1
        if order == 2:
            return np.array([d2])
        if order == 3:
            return np.array([a * (1.0 - 2.0 * y / b) * d2 - (2.0 * a / b) * d1**2])
        raise UnsupportedOrder(f"logistic oracle supports orders <= 3, got {order}")

    return IVProblem(
        dim=1,
        f=f,
        jac=jac,
        init_map=lambda theta: np.array([y0_val]),
        tspan=(0.0, 3.0),
        theta_dim=1,
        derivative_oracle=oracle,
        vectorized=True,
        name="logistic",
    ), GaussianParameters([3.0], [[0.01]])


def _fitzhugh_nagumo_problem():
    a, b, c, d = 0.0, 0.08, 0.07, 1.25

    def f(y, t, theta):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        return np.stack(
            [y1 - y1**3 / 3.0 - y2 + a, (y1 + b - c * y2) / d], axis=-1
        )

    def jac(y, t, theta):
        y = np.asarray(y, dtype=float)
        y1 = y[..., 0]
        out = np.empty(y.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 - y1**2
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = 1.0 / d
        out[..., 1, 1] = -c / d
        return out

    def oracle(theta, order):
        y = np.atleast_1d(np.asarray(theta, dtype=float))
        if order == 0:
            return y.copy()
        d1 = f(y, 0.0, theta)
        if order == 1:
            return d1
        d2 = jac(y, 0.0, theta) @ d1
        if order == 2:
            return d2
        if order == 3:
            y1 = y[0]
            return np.array(
                [
                    (1.0 - y1**2) * d2[0] - d2[1] - 2.0 * y1 * d1[0] ** 2,
                    (d2[0] - c * d2[1]) / d,
                ]
            )
        raise UnsupportedOrder(f"fitzhugh_nagumo oracle supports orders <= 3")

    return IVProblem(
        dim=2,
        f=f,
        jac=jac,
        init_map=lambda theta: np.asarray(theta, dtype=float).copy(),
        tspan=(0.0, 20.0),
        theta_dim=2,
        derivative_oracle=oracle,
        vectorized=True,
        name="fitzhugh_nagumo",
    ), GaussianParameters([0.5, 1.0], 0.1 * np.eye(2))


def _lotka_volterra_problem():
    a, b, c, d = 5.0, 0.5, 5.0, 0.5

    def f(y, t, theta):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        return np.stack([a * y1 - b * y1 * y2, -c * y2 + d * y1 * y2], axis=-1)

    def jac(y, t, theta):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        out = np.empty(y.shape[:-1] + (2, 2))
        out[..., 0, 0] = a - b * y2
        out[..., 0, 1] = -b * y1
        out[..., 1, 0] = d * y2
        out[..., 1, 1] = -c + d * y1
        return out

    def oracle(theta, order):
        y = np.atleast_1d(np.asarray(theta, dtype=float))
        if order == 0:
            return y.copy()
        d1 = f(y, 0.0, theta)
        if order == 1:
            return d1
        d2 = jac(y, 0.0, theta) @ d1
        if order == 2:
            return d2
        if order == 3:
            y1, y2 = y
            cross = 2.0 * d1[0] * d1[1]
            return np.array(
                [
                    a * d2[0] - b * (d2[0] * y2 + cross + y1 * d2[1]),
                    -c * d2[1] + d * (d2[0] * y2 + cross + y1 * d2[1]),
                ]
            )
        raise UnsupportedOrder(f"lotka_volterra oracle supports orders <= 3")

    return IVProblem(
        dim=2,
        f=f,
        jac=jac,
        init_map=lambda theta: np.asarray(theta, dtype=float).copy(),
        tspan=(0.0, 1.5),
        theta_dim=2,
        derivative_oracle=oracle,
        vectorized=True,
        name="lotka_volterra",
    ), GaussianParameters([5.0, 5.0], 0.3 * np.eye(2))


def _van_der_pol_problem():
    a = 0.05

    def f(y, t, theta):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        return np.stack([y2, a * (1.0 - y1**2) * y2 - y1], axis=-1)

    def jac(y, t, theta):
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        out = np.empty(y.shape[:-1] + (2, 2))
        out[..., 0, 0] = 0.0
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = -2.0 * a * y1 * y2 - 1.0
        out[..., 1, 1] = a * (1.0 - y1**2)
        return out

    def oracle(theta, order):
        y = np.atleast_1d(np.asarray(theta, dtype=float))
        if order == 0:
            return y.copy()
        d1 = f(y, 0.0, theta)
        if order == 1:
            return d1
        d2 = jac(y, 0.0, theta) @ d1
        if order == 2:
            return d2
        if order == 3:
            y1, y2 = y
            third_2 = (
                -2.0 * a * (d1[0] ** 2 * y2 + y1 * d2[0] * y2 + 2.0 * y1 * d1[0] * d1[1])
                + a * (1.0 - y1**2) * d2[1]
                - d2[0]
            )
            return np.array([d2[1], third_2])
        raise UnsupportedOrder(f"van_der_pol oracle supports orders <= 3")

    return IVProblem(
        dim=2,
        f=f,
        jac=jac,
        init_map=lambda theta: np.asarray(theta, dtype=float).copy(),
        tspan=(0.0, 10.0),
        theta_dim=2,
        derivative_oracle=oracle,
        vectorized=True,
        name="van_der_pol",
    ), GaussianParameters([5.0, 5.0], 2.0 * np.eye(2))


_CATALOG = {
    "linear": _linear_problem,
    "logistic": _logistic_problem,
    "fitzhugh_nagumo": _fitzhugh_nagumo_problem,
    "lotka_volterra": _lotka_volterra_problem,
    "van_der_pol": _van_der_pol_problem,
}

BENCHMARK_NAMES = tuple(_CATALOG)


def benchmark(name):
    """Look up a catalog problem and its parameter distribution by name."""
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise UnknownProblem(
            f"unknown problem {name!r}; available: {', '.join(BENCHMARK_NAMES)}"
        ) from None
    return builder()
