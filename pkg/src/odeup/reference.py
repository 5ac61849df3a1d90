"""Ground-truth oracles.

A classic fixed-step fourth-order Runge-Kutta integrator, Monte Carlo
uncertainty propagation over it, the analytic solution of the scalar
affine ODE, and a closed-form two-path demo contrasting Kalman-filter
state estimation with parameter marginalization on a one-step linear
model.

Per-sample solves are independent; the Monte Carlo reference batches them
through vectorized vector fields and reduces in sample-index order, so
results are bit-reproducible for a fixed seed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NonFiniteState, OdeupError
from .gaussians import Gaussian
from .ivp import GaussianParameters
from .quadrature import monte_carlo

# Slack for the integral-multiple test; grids carry representation noise
# of order ulp(T) / h, well above the exact-arithmetic tolerance.
_DIVIDE_RTOL = 1e-9


@dataclass
class ReferenceSolution:
    """Point-estimate trajectory on a strictly increasing grid."""

    times: np.ndarray
    values: np.ndarray


@dataclass
class MonteCarloReference:
    """Empirical moments of the solution under the parameter distribution.

    mean has shape (T, d), cov (T, d, d); stderr (T, d) is the Monte Carlo
    standard error of the mean per coordinate.
    """

    times: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    stderr: np.ndarray
    n_samples: int


def _substeps(spacing, h):
    ratio = spacing / h
    n_sub = int(round(ratio))
    if n_sub < 1 or abs(ratio - n_sub) > _DIVIDE_RTOL * max(1.0, ratio):
        raise OdeupError(
            f"internal step {h} does not divide output spacing {spacing}"
        )
    return n_sub


def _rk4_march(f, y0_batch, output_grid, h, on_output):
    """March a batch of states with classical RK4, reporting output points.

    ``f`` maps a (K, d) state block and a time to (K, d).  ``on_output`` is
    called with (grid_index, states) at every output point, including the
    initial one.  Raises NonFiniteState as soon as any state leaves the
    finite range, unless ``on_output`` swallows it.
    """
    y = np.array(y0_batch, dtype=float)
    on_output(0, y)
    for j in range(len(output_grid) - 1):
        t = float(output_grid[j])
        spacing = float(output_grid[j + 1]) - t
        n_sub = _substeps(spacing, h)
        sub_h = spacing / n_sub
        for k in range(n_sub):
            tk = t + k * sub_h
            k1 = f(y, tk)
            k2 = f(y + 0.5 * sub_h * k1, tk + 0.5 * sub_h)
            k3 = f(y + 0.5 * sub_h * k2, tk + 0.5 * sub_h)
            k4 = f(y + sub_h * k3, tk + sub_h)
            y = y + (sub_h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        on_output(j + 1, y)
    return y


def rk4_solve(concrete, h, output_grid):
    """Integrate a concrete problem with fixed-step classical Runge-Kutta.

    ``h`` is the internal step; it must divide every output-grid spacing
    (within 1e-12 relative), and the result is subsampled onto the grid.
    """
    output_grid = np.asarray(output_grid, dtype=float)
    values = np.empty((len(output_grid), concrete.dim))

    if concrete.vectorized:
        f = concrete.f
    else:
        def f(y_batch, t):
            return np.stack(
                [np.atleast_1d(np.asarray(concrete.f(y, t), float)) for y in y_batch]
            )

    def record(index, y):
        if not np.isfinite(y).all():
            raise NonFiniteState(
                f"non-finite state at t={output_grid[index]:g}",
                t=float(output_grid[index]),
            )
        values[index] = y[0]

    _rk4_march(f, np.atleast_1d(concrete.y0)[None, :], output_grid, h, record)
    return ReferenceSolution(times=output_grid, values=values)


def mc_reference(problem, dist, n, seed, h, output_grid, max_failure_fraction=0.0):
    """Monte Carlo uncertainty propagation over the Runge-Kutta solver.

    Draws n parameter samples from ``dist``, integrates each, and returns
    the empirical mean, unbiased covariance and standard error of the mean
    at every output point.  Samples that turn non-finite abort the run once
    their fraction exceeds ``max_failure_fraction`` (default: any failure
    aborts); below that they are dropped from the reduction.
    """
    if n < 2:
        raise ValueError(f"Monte Carlo reference needs n >= 2, got n={n}")
    output_grid = np.asarray(output_grid, dtype=float)
    thetas = monte_carlo(dist, n, seed).nodes
    y0 = np.stack(
        [np.atleast_1d(np.asarray(problem.init_map(th), float)) for th in thetas]
    )

    if problem.vectorized:
        def f(y_batch, t):
            return problem.f(y_batch, t, thetas)
    else:
        def f(y_batch, t):
            return np.stack(
                [
                    np.atleast_1d(np.asarray(problem.f(y, t, th), float))
                    for y, th in zip(y_batch, thetas)
                ]
            )

    n_times = len(output_grid)
    d = problem.dim
    mean = np.empty((n_times, d))
    cov = np.empty((n_times, d, d))
    stderr = np.empty((n_times, d))
    alive = np.ones(n, dtype=bool)

    def record(index, y):
        finite = np.isfinite(y).all(axis=-1)
        newly_dead = alive & ~finite
        if newly_dead.any():
            failed = int(np.flatnonzero(newly_dead)[0])
            alive[newly_dead] = False
            if (n - alive.sum()) / n > max_failure_fraction:
                raise NonFiniteState(
                    f"sample {failed} became non-finite at t={output_grid[index]:g}",
                    t=float(output_grid[index]),
                    sample_index=failed,
                )
        ys = y[alive]
        k = ys.shape[0]
        mu = ys.mean(axis=0)
        dev = ys - mu
        mean[index] = mu
        cov[index] = dev.T @ dev / (k - 1)
        stderr[index] = np.sqrt(np.diag(cov[index]) / k)

    _rk4_march(f, y0, output_grid, h, record)
    return MonteCarloReference(
        times=output_grid, mean=mean, cov=cov, stderr=stderr, n_samples=n
    )


def linear_analytic(a, b, y0_mean, y0_var, t):
    """Exact moments of the affine flow dy/dt = a y + b from N(y0_mean, y0_var).

    The flow is affine in the initial value, so the pushforward stays
    Gaussian: mean follows the flow, variance scales with exp(2 a t).
    """
    if a == 0.0:
        return y0_mean + b * t, y0_var
    growth = math.exp(a * t)
    mean = growth * y0_mean + (b / a) * (growth - 1.0)
    return mean, y0_var * growth**2


# One-step linear state-space model used by the demo: random-walk
# transition with variance 0.01, observation noise 0.01, observation 2.
_DEMO_TRANSITION_VAR = 0.01
_DEMO_OBS_VAR = 0.01
_DEMO_OBSERVATION = 2.0


def fig1_demo(prior_var):
    """State estimation versus uncertainty propagation, in closed form.

    For the one-step linear model x1 | x0 ~ N(x0, 0.01), y1 | x1 ~
    N(x1, 0.01), observed y1 = 2, and x0 ~ N(0, prior_var), returns both
    posteriors over x1:

    * "filter": the Kalman filter answer, which conditions x1 on y1 after
      marginalizing x0 into the prediction (state estimation);
    * "marginal": the average of the per-x0 conditionals under the x0
      prior (uncertainty propagation).

    The filter variance stays below the observation noise however wide the
    prior is, while the marginal variance grows linearly with it.
    """
    if not prior_var > 0.0:
        raise ValueError(f"prior_var must be positive, got {prior_var}")
    pred_var = prior_var + _DEMO_TRANSITION_VAR
    innovation_var = pred_var + _DEMO_OBS_VAR
    gain = pred_var / innovation_var
    filter_mean = gain * _DEMO_OBSERVATION
    filter_var = pred_var * _DEMO_OBS_VAR / innovation_var

    # Conditioning on y1 for a fixed x0 gives N((x0 + 2) / 2, 0.005);
    # averaging the affine map over x0 ~ N(0, prior_var) is exact.
    cond_var = _DEMO_TRANSITION_VAR * _DEMO_OBS_VAR / (2 * _DEMO_OBS_VAR)
    marginal_mean = _DEMO_OBSERVATION / 2.0
    marginal_var = cond_var + prior_var / 4.0

    return {
        "filter": Gaussian([filter_mean], [[math.sqrt(filter_var)]]),
        "marginal": Gaussian([marginal_mean], [[math.sqrt(marginal_var)]]),
    }
