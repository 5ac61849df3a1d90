"""Filtering-based probabilistic numerical ODE solver.

Solves an initial value problem by regressing an integrated-Wiener-process
state on noiseless "the-ODE-holds-here" observations over a fixed time
grid: extended Kalman forward pass (EK1 with Jacobian linearization, or
EK0 without), optional quasi-maximum-likelihood calibration of the
time-constant diffusion, and an optional Rauch-Tung-Striebel backward
pass.  All covariance algebra is in square-root form.

The core passes operate on a leading batch axis of independent solves that
share one grid; the uncertainty-propagation layer feeds all its quadrature
nodes through a single batched call.  A single solve is strictly
sequential, but distinct solves share no mutable state.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import (
    DegenerateResidual,
    NonFiniteState,
    NonPositiveStep,
    OdeupError,
    SingularInnovation,
    SingularPrediction,
)
from .gaussians import Gaussian, triangularize
from .ivp import solution_derivatives
from .prior import process_noise_sqrt, projection, transition
from .exceptions import UnsupportedOrder

# Lower clamp for the calibrated diffusion; keeps covariances representable.
KAPPA2_FLOOR = 1e-14
# Variance placed on derivative blocks the initialization cannot supply.
DIFFUSE_VARIANCE = 1e6

_PIVOT_RTOL = 1e-14
_GRID_RTOL = 1e-12


@dataclass
class SolverConfig:
    """Solver settings: prior order, step size, linearization and passes."""

    q: int = 1
    step: float = 0.01
    linearization: str = "ek1"
    calibrate: bool = True
    smooth: bool = True

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"prior order q must be >= 1, got {self.q}")
        if not self.step > 0.0:
            raise NonPositiveStep(f"step must be positive, got {self.step}")
        if self.linearization not in ("ek1", "ek0"):
            raise ValueError(f"unknown linearization {self.linearization!r}")


@dataclass
class ODESolution:
    """Per-grid-point Gaussian states over the full solver state.

    ``states`` holds smoothed marginals when the config requested the
    backward pass, filtered marginals otherwise.  ``kappa2_hat`` is the
    calibrated diffusion (or the prior's nominal value when calibration was
    off).  Project a state with the order-0 projection matrix to recover
    the ODE-solution marginal.
    """

    times: np.ndarray
    states: list
    kappa2_hat: float
    config: SolverConfig


class _BatchStepError(OdeupError):
    """Internal: a batched filter step failed for one node."""

    def __init__(self, step_index, t, node_index, error):
        super().__init__(f"step {step_index} (t={t:g}), node {node_index}: {error}")
        self.step_index = step_index
        self.t = t
        self.node_index = node_index
        self.error = error


def _times_and_steps(tspan, step):
    if not step > 0.0:
        raise NonPositiveStep(f"step must be positive, got {step}")
    t0, t_end = float(tspan[0]), float(tspan[1])
    span = t_end - t0
    if not span > 0.0:
        raise ValueError(f"tspan must have T > t0, got {tspan}")
    ratio = span / step
    n_full = int(round(ratio))
    if n_full >= 1 and abs(ratio - n_full) <= _GRID_RTOL * max(1.0, ratio):
        steps = np.full(n_full, float(step))
        times = t0 + step * np.arange(n_full + 1)
        times[-1] = t_end
    else:
        n_full = int(np.floor(ratio))
        steps = np.concatenate([np.full(n_full, float(step)), [span - n_full * step]])
        times = np.concatenate([t0 + step * np.arange(n_full + 1), [t_end]])
    return times, steps


def time_grid(tspan, step):
    """Fixed-step grid over tspan; the last step shrinks to land on T."""
    return _times_and_steps(tspan, step)[0]


def initialize(concrete, q, fallback=True):
    """Initial state over all modelled derivatives at t0.

    The mean stacks the solution derivatives up to order q with zero
    covariance (the initial data is exact).  If the problem's derivative
    oracle cannot supply some orders and ``fallback`` is on, those blocks
    start at zero mean with diffuse variance instead; with ``fallback``
    off, UnsupportedOrder propagates.
    """
    d = concrete.dim
    try:
        derivs = solution_derivatives(concrete, q)
    except UnsupportedOrder:
        if not fallback:
            raise
        derivs = solution_derivatives(concrete, 1)
        for order in range(2, q + 1):
            try:
                derivs.append(np.atleast_1d(np.asarray(concrete.derivatives(order), float)))
            except UnsupportedOrder:
                break
    supplied = len(derivs)
    mean = np.zeros(d * (q + 1))
    sqrt = np.zeros((d * (q + 1), d * (q + 1)))
    for j, vec in enumerate(derivs):
        mean[j :: q + 1] = vec
    for j in range(supplied, q + 1):
        idx = np.arange(j, d * (q + 1), q + 1)
        sqrt[idx, idx] = np.sqrt(DIFFUSE_VARIANCE)
    return Gaussian(mean, sqrt)


def _loop_field(concrete):
    # Per-sample evaluation wrappers lifting the (d,) -> (d,) contract to a
    # leading batch axis; used for the single-solve path.
    def f(y_batch, t):
        return np.stack(
            [np.atleast_1d(np.asarray(concrete.f(y, t), float)) for y in y_batch]
        )

    def jac(y_batch, t):
        return np.stack(
            [np.atleast_2d(np.asarray(concrete.jac(y, t), float)) for y in y_batch]
        )

    return f, jac


def _step_pair(cache, prior, h):
    key = float(h)
    if key not in cache:
        cache[key] = (transition(prior, key), process_noise_sqrt(prior, key))
    return cache[key]


def _predict_and_update(m, L, A, LQ, f, jac, t_next, E0, E1, linearization):
    """One batched extended-Kalman step against the Dirac ODE observation.

    Predicts through the prior transition, evaluates the vector field at
    the predicted mean, and conditions on the observation that the state's
    first-derivative block equals the field there.  Returns
    (m_pred, L_pred, m_new, L_new, residual, innovation_sqrt, whitened_sq)
    with leading batch axis; ``whitened_sq`` is z^T S^{-1} z per node.
    """
    n_batch, state_dim = m.shape
    d = E0.shape[0]
    m_pred = m @ A.T
    noise = np.broadcast_to(LQ, (n_batch, state_dim, state_dim))
    L_pred = triangularize(np.concatenate([A @ L, noise], axis=-1))

    y_pred = m_pred @ E0.T
    f_val = np.asarray(f(y_pred, t_next), dtype=float)
    residual = m_pred @ E1.T - f_val
    if linearization == "ek1":
        H = E1 - np.asarray(jac(y_pred, t_next), dtype=float) @ E0
    else:
        H = np.broadcast_to(E1, (n_batch, d, state_dim))

    joint = triangularize(np.concatenate([H @ L_pred, L_pred], axis=-2))
    innov = joint[..., :d, :d]
    gain_num = joint[..., d:, :d]
    L_new = joint[..., d:, d:]

    s_diag = (innov**2).sum(axis=-1)
    pivots = np.diagonal(innov, axis1=-2, axis2=-1) ** 2
    floor = np.maximum(s_diag.max(axis=-1), np.finfo(float).tiny)
    bad = pivots.min(axis=-1) < _PIVOT_RTOL * floor
    if np.any(bad):
        node = int(np.flatnonzero(bad)[0])
        raise _BatchStepError(
            -1, t_next, node, SingularInnovation("singular innovation covariance")
        )

    gain_t = np.linalg.solve(np.swapaxes(innov, -1, -2), np.swapaxes(gain_num, -1, -2))
    m_new = m_pred - np.einsum("kdi,kd->ki", gain_t, residual)
    whitened = np.linalg.solve(innov, residual[..., None])[..., 0]

    finite = np.isfinite(m_new).all(axis=-1)
    if not finite.all():
        node = int(np.flatnonzero(~finite)[0])
        raise _BatchStepError(
            -1, t_next, node,
            NonFiniteState("state became non-finite", t=t_next),
        )
    return m_pred, L_pred, m_new, L_new, residual, innov, (whitened**2).sum(axis=-1)


def _smooth_pass(filt_m, filt_L, pred_m, pred_L, mats, times):
    """Batched square-root RTS backward recursion.

    The smoothed factor recombines [(I - G Phi) L_f | G L_Q | G L_s+] by
    QR, which reproduces the classic covariance recursion without ever
    subtracting covariances.  The last smoothed state is the last filtered
    state, exactly.
    """
    n_steps = len(times) - 1
    state_dim = filt_m.shape[-1]
    sm_m = filt_m.copy()
    sm_L = filt_L.copy()
    eye = np.eye(state_dim)
    for n in range(n_steps - 1, -1, -1):
        A, LQ = mats[n]
        B = filt_L[n]
        sig_phi_t = B @ np.swapaxes(A @ B, -1, -2)

        Lp = pred_L[n + 1]
        p_diag = (Lp**2).sum(axis=-1)
        pivots = np.diagonal(Lp, axis1=-2, axis2=-1) ** 2
        floor = np.maximum(p_diag.max(axis=-1), np.finfo(float).tiny)
        bad = pivots.min(axis=-1) < _PIVOT_RTOL * floor
        if np.any(bad):
            node = int(np.flatnonzero(bad)[0])
            raise _BatchStepError(
                n, times[n + 1], node,
                SingularPrediction("singular predicted covariance in smoother"),
            )
        half = np.linalg.solve(Lp, np.swapaxes(sig_phi_t, -1, -2))
        gain = np.swapaxes(np.linalg.solve(np.swapaxes(Lp, -1, -2), half), -1, -2)

        sm_m[n] = filt_m[n] + np.einsum(
            "kij,kj->ki", gain, sm_m[n + 1] - pred_m[n + 1]
        )
        stack = np.concatenate(
            [(eye - gain @ A) @ B, gain @ LQ, gain @ sm_L[n + 1]], axis=-1
        )
        sm_L[n] = triangularize(stack)
    return sm_m, sm_L


@dataclass
class BatchSolution:
    """Marginal states of a batch of solves sharing one grid.

    means has shape (T, K, D) and cov_sqrts (T, K, D, D) over T grid points
    and K independent solves; kappa2 holds the per-solve diffusion.
    """

    times: np.ndarray
    steps: np.ndarray
    means: np.ndarray
    cov_sqrts: np.ndarray
    kappa2: np.ndarray


def solve_batch(f, jac, init_means, init_sqrts, tspan, prior, config):
    """Run the full solver for a batch of solves on one shared grid.

    ``f`` and ``jac`` take a (K, d) state block and a time and return
    (K, d) and (K, d, d) arrays.  Calibration runs the forward pass at unit
    diffusion and rescales the output covariances afterwards; posterior
    means are unaffected by the rescale.
    """
    times, steps = _times_and_steps(tspan, config.step)
    n_steps = len(steps)
    n_batch, state_dim = init_means.shape
    d = prior.d

    prior_run = replace(prior, kappa2=1.0) if config.calibrate else prior
    cache = {}
    mats = [_step_pair(cache, prior_run, h) for h in steps]
    E0 = projection(prior_run, 0)
    E1 = projection(prior_run, 1)

    filt_m = np.empty((n_steps + 1, n_batch, state_dim))
    filt_L = np.empty((n_steps + 1, n_batch, state_dim, state_dim))
    pred_m = np.empty_like(filt_m)
    pred_L = np.empty_like(filt_L)
    filt_m[0] = pred_m[0] = init_means
    filt_L[0] = pred_L[0] = init_sqrts

    ssq = np.zeros(n_batch)
    m, L = init_means, init_sqrts
    for n in range(n_steps):
        A, LQ = mats[n]
        try:
            m_pred, L_pred, m, L, _, _, wsq = _predict_and_update(
                m, L, A, LQ, f, jac, times[n + 1], E0, E1, config.linearization
            )
        except _BatchStepError as err:
            err.step_index = n + 1
            raise
        pred_m[n + 1] = m_pred
        pred_L[n + 1] = L_pred
        filt_m[n + 1] = m
        filt_L[n + 1] = L
        ssq += wsq

    if config.calibrate:
        kappa2 = np.maximum(ssq / (n_steps * d), KAPPA2_FLOOR)
    else:
        kappa2 = np.full(n_batch, prior.kappa2)

    if config.smooth and n_steps > 0:
        out_m, out_L = _smooth_pass(filt_m, filt_L, pred_m, pred_L, mats, times)
    else:
        out_m, out_L = filt_m, filt_L
    if config.calibrate:
        out_L = out_L * np.sqrt(kappa2)[None, :, None, None]
    return BatchSolution(times, steps, out_m, out_L, kappa2)


def ek_step(state, concrete, prior, t, h, linearization="ek1"):
    """One extended-Kalman solver step from t to t + h.

    Returns (predicted, updated, residual, innovation_sqrt): the predicted
    and conditioned Gaussians, the value of the ODE observation function at
    the predicted mean (first-derivative block minus vector field), and the
    square root of the innovation covariance.
    """
    A = transition(prior, h)
    LQ = process_noise_sqrt(prior, h)
    f, jac = _loop_field(concrete)
    E0 = projection(prior, 0)
    E1 = projection(prior, 1)
    try:
        m_pred, L_pred, m_new, L_new, residual, innov, _ = _predict_and_update(
            state.mean[None], state.cov_sqrt[None], A, LQ, f, jac,
            t + h, E0, E1, linearization,
        )
    except _BatchStepError as err:
        raise err.error from None
    return (
        Gaussian(m_pred[0], L_pred[0]),
        Gaussian(m_new[0], L_new[0]),
        residual[0],
        innov[0],
    )


def calibrate(residuals, innovation_sqrts, d, n_steps):
    """Quasi-MLE estimate of the time-constant diffusion parameter.

    With residuals z_n and unit-diffusion innovation factors S_n^(1/2), the
    estimate is sum_n z_n^T S_n^{-1} z_n / (n_steps * d), clamped below at
    KAPPA2_FLOOR so that rescaled covariances stay representable.
    """
    total = 0.0
    for z, s_sqrt in zip(residuals, innovation_sqrts):
        s_sqrt = np.atleast_2d(np.asarray(s_sqrt, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        diag = np.abs(np.diagonal(s_sqrt))
        if diag.min(initial=np.inf) ** 2 <= _PIVOT_RTOL * max(
            (s_sqrt**2).sum(axis=1).max(), np.finfo(float).tiny
        ):
            raise DegenerateResidual("singular innovation covariance in calibration")
        w = solve_triangular(s_sqrt, z, lower=True)
        total += float(w @ w)
    return max(total / (n_steps * d), KAPPA2_FLOOR)


def smooth(filtered, predictions, prior, steps):
    """Rauch-Tung-Striebel backward pass over a completed forward pass.

    ``filtered`` has one Gaussian per grid point; ``predictions[n]`` is the
    one-step prediction into grid point n + 1 and ``steps[n]`` its step
    size.  The prior must carry the same diffusion the forward pass used.
    """
    if len(filtered) != len(predictions) + 1 or len(steps) != len(predictions):
        raise ValueError(
            f"{len(filtered)} filtered states need {len(filtered) - 1} "
            f"predictions and steps"
        )
    if not predictions:
        return list(filtered)
    filt_m = np.stack([g.mean for g in filtered])[:, None]
    filt_L = np.stack([g.cov_sqrt for g in filtered])[:, None]
    pred_m = np.concatenate(
        [filt_m[:1], np.stack([g.mean for g in predictions])[:, None]]
    )
    pred_L = np.concatenate(
        [filt_L[:1], np.stack([g.cov_sqrt for g in predictions])[:, None]]
    )
    cache = {}
    mats = [_step_pair(cache, prior, h) for h in steps]
    times = np.concatenate([[0.0], np.cumsum(steps)])
    try:
        sm_m, sm_L = _smooth_pass(filt_m, filt_L, pred_m, pred_L, mats, times)
    except _BatchStepError as err:
        raise err.error from None
    return [Gaussian(sm_m[i, 0], sm_L[i, 0]) for i in range(len(filtered))]


def solve(concrete, prior, config):
    """Solve an initial value problem with the probabilistic ODE filter.

    Initializes on all modelled derivatives, runs the extended-Kalman
    forward pass over the fixed grid, calibrates the diffusion (two-pass,
    time-constant quasi-MLE with post-hoc covariance rescale) and applies
    the RTS smoother, both as configured.
    """
    if prior.q != config.q:
        raise ValueError(f"prior order {prior.q} != config order {config.q}")
    if prior.d != concrete.dim:
        raise ValueError(f"prior dimension {prior.d} != problem dimension {concrete.dim}")
    init = initialize(concrete, config.q)
    f, jac = _loop_field(concrete)
    try:
        batch = solve_batch(
            f, jac, init.mean[None], init.cov_sqrt[None],
            concrete.tspan, prior, config,
        )
    except _BatchStepError as err:
        raise err.error.__class__(
            f"step {err.step_index} (t={err.t:g}): {err.error}"
        ) from err
    states = [
        Gaussian(batch.means[i, 0], batch.cov_sqrts[i, 0])
        for i in range(batch.times.shape[0])
    ]
    return ODESolution(
        times=batch.times,
        states=states,
        kappa2_hat=float(batch.kappa2[0]),
        config=config,
    )
