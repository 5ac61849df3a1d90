"""Uncertainty propagation through per-node ODE solves.

Two-step scheme: build a quadrature rule over the parameter distribution,
solve the problem once per node on one shared time grid, and moment-match
the resulting per-time Gaussian mixture.  The matched covariance is kept
split into the part carried by the per-node solver covariances ("pn") and
the spread of the per-node means ("non_pn"); their sum is the total, by
construction exactly.

Node solves are independent.  They run through the batched solver core in
node-order chunks (optionally fanned out to threads), and moments are
always reduced in node order, so results do not depend on scheduling.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import MixtureGridMismatch, NodeSolveFailed, OdeupError
from .gaussians import Gaussian, GaussianMixture, sqrt_factor
from .ivp import apply_params
from .odefilter import (
    BatchSolution,
    SolverConfig,
    _BatchStepError,
    initialize,
    solve_batch,
    time_grid,
)
from .prior import IWPPrior, projection
from .quadrature import RuleSpec, build_rule
from .reference import _rk4_march

_DEFAULT_CHUNK = 256


@dataclass
class ClassicSolverConfig:
    """Settings for the non-probabilistic per-node solver.

    ``step`` fixes the shared output grid exactly like the filter's step;
    ``rk4_step`` is the internal integrator step and defaults to ``step``,
    mirroring the discretization a classic solver would use at that grid.
    """

    step: float
    rk4_step: Optional[float] = None


class _MixtureView:
    """Lazy per-time sequence of GaussianMixture objects."""

    def __init__(self, result):
        self._result = result

    def __len__(self):
        return len(self._result.times)

    def __getitem__(self, index):
        return self._result.mixture_at(index)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass
class PropagationResult:
    """Moment-matched mixture over the ODE solution, per grid time.

    component_means (T, K, d) and component_covs (T, K, d, d) hold the
    per-node solution marginals; mean, cov_total, cov_pn and cov_non_pn are
    the matched moments with cov_total = cov_pn + cov_non_pn exactly.
    ``mixtures`` is a lazy per-time view assembling GaussianMixture values
    on demand (the component count times the grid length can be large).
    """

    times: np.ndarray
    weights: np.ndarray
    component_means: np.ndarray
    component_covs: np.ndarray
    mean: np.ndarray
    cov_total: np.ndarray
    cov_pn: np.ndarray
    cov_non_pn: np.ndarray
    kappa2_per_node: np.ndarray
    rule: Optional[RuleSpec] = None

    def mixture_at(self, index):
        components = [
            Gaussian(self.component_means[index, k], sqrt_factor(self.component_covs[index, k]))
            for k in range(self.weights.shape[0])
        ]
        return GaussianMixture(self.weights, components)

    @property
    def mixtures(self):
        return _MixtureView(self)


def _matched_moments(weights, comp_means, comp_covs):
    # Reductions run in node order; total = pn + non_pn is one addition so
    # the decomposition identity is exact.
    mean = np.einsum("k,tkd->td", weights, comp_means)
    pn = np.einsum("k,tkij->tij", weights, comp_covs)
    dev = comp_means - mean[:, None, :]
    non_pn = np.einsum("k,tki,tkj->tij", weights, dev, dev)
    total = pn + non_pn
    return mean, total, pn, non_pn


def _node_batch_callables(problem, thetas):
    if problem.vectorized:
        def f(y_batch, t):
            return problem.f(y_batch, t, thetas)

        def jac(y_batch, t):
            return problem.jac(y_batch, t, thetas)
    else:
        def f(y_batch, t):
            return np.stack(
                [
                    np.atleast_1d(np.asarray(problem.f(y, t, th), float))
                    for y, th in zip(y_batch, thetas)
                ]
            )

        def jac(y_batch, t):
            return np.stack(
                [
                    np.atleast_2d(np.asarray(problem.jac(y, t, th), float))
                    for y, th in zip(y_batch, thetas)
                ]
            )

    return f, jac


def _solve_chunk(problem, thetas, offset, prior, config):
    try:
        init = [
            initialize(apply_params(problem, th), config.q) for th in thetas
        ]
        f, jac = _node_batch_callables(problem, thetas)
        return solve_batch(
            f,
            jac,
            np.stack([g.mean for g in init]),
            np.stack([g.cov_sqrt for g in init]),
            problem.tspan,
            prior,
            config,
        )
    except _BatchStepError as err:
        raise NodeSolveFailed(offset + err.node_index, err.error) from err
    except OdeupError as err:
        raise NodeSolveFailed(offset, err) from err


def _run_chunks(worker, n_nodes, jobs, chunk_size):
    chunks = [
        (start, min(start + chunk_size, n_nodes))
        for start in range(0, n_nodes, chunk_size)
    ]
    if jobs == 0:
        jobs = min(len(chunks), os.cpu_count() or 1)
    if jobs <= 1 or len(chunks) <= 1:
        return [worker(start, stop) for start, stop in chunks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(worker, start, stop) for start, stop in chunks]
        return [fut.result() for fut in futures]


def propagate(problem, dist, rule_spec, solver_config, *, jobs=1,
              chunk_size=_DEFAULT_CHUNK, kappa2=1.0):
    """Propagate parameter uncertainty through the probabilistic solver.

    Builds the quadrature rule for ``dist``, solves the problem at every
    node on the identical grid, projects each solve to the ODE-solution
    block, and moment-matches the per-time mixture.  ``kappa2`` fixes the
    diffusion when calibration is off; each node otherwise calibrates its
    own diffusion as part of its solve.
    """
    rule = build_rule(dist, rule_spec)
    thetas = rule.nodes
    prior = IWPPrior(d=problem.dim, q=solver_config.q, kappa2=kappa2)
    grid = time_grid(problem.tspan, solver_config.step)
    E0 = projection(prior, 0)

    def worker(start, stop):
        batch = _solve_chunk(problem, thetas[start:stop], start, prior, solver_config)
        if batch.times.shape != grid.shape or not np.array_equal(batch.times, grid):
            raise MixtureGridMismatch(
                f"nodes {start}:{stop} solved on a different grid"
            )
        proj_means = batch.means @ E0.T
        proj_factors = E0 @ batch.cov_sqrts  # (T, K, d, D)
        proj_covs = proj_factors @ np.swapaxes(proj_factors, -1, -2)
        return proj_means, proj_covs, batch.kappa2

    results = _run_chunks(worker, len(rule), jobs, chunk_size)
    comp_means = np.concatenate([r[0] for r in results], axis=1)
    comp_covs = np.concatenate([r[1] for r in results], axis=1)
    kappa2 = np.concatenate([r[2] for r in results])
    mean, total, pn, non_pn = _matched_moments(rule.weights, comp_means, comp_covs)
    return PropagationResult(
        times=grid,
        weights=rule.weights,
        component_means=comp_means,
        component_covs=comp_covs,
        mean=mean,
        cov_total=total,
        cov_pn=pn,
        cov_non_pn=non_pn,
        kappa2_per_node=kappa2,
        rule=rule_spec,
    )


def propagate_nonpn(problem, dist, rule_spec, classic_config, *, jobs=1,
                    chunk_size=_DEFAULT_CHUNK):
    """Uncertainty propagation over the classic (non-probabilistic) solver.

    Identical pipeline to :func:`propagate` with fixed-step Runge-Kutta as
    the per-node solver.  Per-node solutions are point estimates, so the
    matched covariance has no solver share: cov_pn is identically zero and
    cov_total equals cov_non_pn.
    """
    rule = build_rule(dist, rule_spec)
    thetas = rule.nodes
    grid = time_grid(problem.tspan, classic_config.step)
    rk4_step = classic_config.rk4_step or classic_config.step
    d = problem.dim

    def worker(start, stop):
        chunk = thetas[start:stop]
        y0 = np.stack(
            [np.atleast_1d(np.asarray(problem.init_map(th), float)) for th in chunk]
        )
        f, _ = _node_batch_callables(problem, chunk)
        values = np.empty((len(grid), stop - start, d))

        def record(index, y):
            if not np.isfinite(y).all():
                bad = int(np.flatnonzero(~np.isfinite(y).all(axis=-1))[0])
                raise NodeSolveFailed(
                    start + bad,
                    OdeupError(f"non-finite state at t={grid[index]:g}"),
                )
            values[index] = y

        _rk4_march(f, y0, grid, rk4_step, record)
        return values

    results = _run_chunks(worker, len(rule), jobs, chunk_size)
    comp_means = np.concatenate(results, axis=1)
    comp_covs = np.zeros(comp_means.shape + (d,))
    mean, total, pn, non_pn = _matched_moments(rule.weights, comp_means, comp_covs)
    return PropagationResult(
        times=grid,
        weights=rule.weights,
        component_means=comp_means,
        component_covs=comp_covs,
        mean=mean,
        cov_total=total,
        cov_pn=pn,
        cov_non_pn=non_pn,
        kappa2_per_node=np.zeros(len(rule)),
        rule=rule_spec,
    )


@dataclass
class SweepRow:
    """Final-time covariance decomposition for one step size."""

    step: float
    cov_pn: Optional[np.ndarray]
    cov_non_pn: Optional[np.ndarray]
    cov_total: Optional[np.ndarray]
    error: Optional[str] = None


def step_size_sweep(problem, dist, rule_spec, q, steps, *, jobs=1,
                    chunk_size=_DEFAULT_CHUNK, linearization="ek1"):
    """Propagate at a list of step sizes, recording final-time covariances.

    ``steps`` must be positive and sorted ascending.  A failing step is
    recorded in its row's ``error`` field; the sweep continues.
    """
    steps = [float(h) for h in steps]
    if any(h <= 0.0 for h in steps) or steps != sorted(steps):
        raise ValueError("steps must be positive and sorted ascending")
    rows = []
    for h in steps:
        config = SolverConfig(q=q, step=h, linearization=linearization)
        try:
            result = propagate(
                problem, dist, rule_spec, config, jobs=jobs, chunk_size=chunk_size
            )
        except OdeupError as err:
            rows.append(SweepRow(h, None, None, None, error=str(err)))
            continue
        rows.append(
            SweepRow(
                h,
                result.cov_pn[-1],
                result.cov_non_pn[-1],
                result.cov_total[-1],
            )
        )
    return rows
