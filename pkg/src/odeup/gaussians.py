"""Square-root Gaussian and Gaussian-mixture primitives.

All covariance bookkeeping in this package is done with lower-triangular
square-root factors L such that Sigma = L @ L.T.  Predictions and updates
recombine stacked factors with QR decompositions instead of forming
covariances explicitly, which keeps rank-deficient (Dirac-like) states
representable: zero diagonal pivots in a factor are legal.

Values are immutable after construction by convention; every function here
is pure, so concurrent use from independent tasks is safe.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NonPSD, ShapeMismatch, SingularInnovation

# Relative pivot threshold below which an innovation covariance is
# treated as singular.
_SINGULAR_PIVOT_RTOL = 1e-14


def triangularize(stack):
    """Recombine a stacked factor into a lower-triangular square root.

    Given ``stack`` of shape (..., n, k) interpreted as a (generally
    non-triangular) factor of C = stack @ stack.T, returns a lower-triangular
    T of shape (..., n, n) with nonnegative diagonal and T @ T.T == C.
    Works on batches via the leading dimensions.
    """
    stack = np.asarray(stack, dtype=float)
    n = stack.shape[-2]
    r = np.linalg.qr(np.swapaxes(stack, -1, -2), mode="reduced")[1]
    tri = np.swapaxes(r, -1, -2)
    if tri.shape[-1] < n:
        pad = np.zeros(tri.shape[:-1] + (n - tri.shape[-1],))
        tri = np.concatenate([tri, pad], axis=-1)
    diag = np.diagonal(tri, axis1=-2, axis2=-1)
    signs = np.where(diag < 0.0, -1.0, 1.0)
    return tri * signs[..., None, :]


def sqrt_factor(cov, *, sym_rtol=1e-10, psd_rtol=1e-10):
    """Lower-triangular square root of a symmetric PSD matrix.

    Tries a Cholesky factorization first and falls back to a symmetric
    eigendecomposition for semidefinite inputs, so zero pivots (rank
    deficient covariances) are handled.  Raises NonPSD if ``cov`` is not
    symmetric within ``sym_rtol`` or has eigenvalues below
    ``-psd_rtol * ||cov||``.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise NonPSD(f"covariance must be square, got shape {cov.shape}")
    scale = max(1.0, np.abs(cov).max()) if cov.size else 1.0
    if np.abs(cov - cov.T).max(initial=0.0) > sym_rtol * scale:
        raise NonPSD("covariance is not symmetric within tolerance")
    sym = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(sym)
    bound = psd_rtol * max(np.abs(eigvals).max(initial=0.0), np.finfo(float).tiny)
    if eigvals.min(initial=0.0) < -bound:
        raise NonPSD(
            f"covariance has eigenvalue {eigvals.min():.3e} below -{bound:.3e}"
        )
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return triangularize(factor)


@dataclass
class Gaussian:
    """Gaussian distribution stored as mean and lower-triangular cov factor.

    Attributes:
        mean: mean vector of length n.
        cov_sqrt: lower-triangular (n, n) factor L with covariance L @ L.T.
    """

    mean: np.ndarray
    cov_sqrt: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov_sqrt = np.atleast_2d(np.asarray(self.cov_sqrt, dtype=float))
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov_sqrt.shape != (n, n):
            raise ShapeMismatch(
                f"mean has length {n} but cov_sqrt has shape {self.cov_sqrt.shape}"
            )

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def cov(self):
        """Dense covariance, reconstructed from the square-root factor."""
        return self.cov_sqrt @ self.cov_sqrt.T


@dataclass
class GaussianMixture:
    """Finite mixture of equal-dimension Gaussians with normalized weights."""

    weights: np.ndarray
    components: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if len(self.components) != self.weights.shape[0]:
            raise ShapeMismatch(
                f"{self.weights.shape[0]} weights for {len(self.components)} components"
            )
        if self.weights.min(initial=0.0) < 0.0:
            raise ValueError("mixture weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {self.weights.sum()!r}, not 1")
        dims = {c.dim for c in self.components}
        if len(dims) > 1:
            raise ShapeMismatch(f"components have mixed dimensions {sorted(dims)}")

    @property
    def dim(self):
        return self.components[0].dim


def make_gaussian(mean, cov):
    """Build a Gaussian from a mean and a dense symmetric PSD covariance.

    Semidefinite covariances are accepted; the factorization is robust to
    zero pivots.  Raises NonPSD when symmetry or semidefiniteness fails
    beyond tolerance.
    """
    return Gaussian(mean, sqrt_factor(cov))


def affine_predict(g, A, b, noise_sqrt):
    """Push a Gaussian through x -> A x + b plus independent Gaussian noise.

    The output covariance A Sigma A^T + noise is assembled purely in
    square-root form by QR recombination of the stacked factors
    [A L | noise_sqrt]; the dense covariance is never formed.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    noise_sqrt = np.atleast_2d(np.asarray(noise_sqrt, dtype=float))
    m, n = A.shape
    if n != g.dim or b.shape != (m,) or noise_sqrt.shape != (m, m):
        raise ShapeMismatch(
            f"affine_predict with state dim {g.dim}: A {A.shape}, "
            f"b {b.shape}, noise {noise_sqrt.shape}"
        )
    mean = A @ g.mean + b
    stacked = np.concatenate([A @ g.cov_sqrt, noise_sqrt], axis=1)
    return Gaussian(mean, triangularize(stacked))


def condition_linear(g, H, residual, obs_noise_sqrt=None):
    """Condition a Gaussian on a linear observation in square-root form.

    The observation has value H @ mean - residual, i.e. ``residual`` is the
    predicted-minus-observed discrepancy; the posterior mean is
    mean - K @ residual with the usual Kalman gain.  ``obs_noise_sqrt`` may
    be None or exactly zero for noiseless (Dirac) observations.

    Returns:
        (posterior, innovation_sqrt): the conditioned Gaussian and the
        lower-triangular square root of S = H Sigma H^T + R, needed for
        diffusion calibration.

    Raises:
        SingularInnovation: if a pivot of S falls below 1e-14 * ||S||.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    residual = np.atleast_1d(np.asarray(residual, dtype=float))
    m, n = H.shape
    if n != g.dim or residual.shape != (m,):
        raise ShapeMismatch(
            f"condition_linear with state dim {g.dim}: H {H.shape}, "
            f"residual {residual.shape}"
        )
    if obs_noise_sqrt is None:
        noise = np.zeros((m, m))
    else:
        noise = np.atleast_2d(np.asarray(obs_noise_sqrt, dtype=float))
        if noise.shape != (m, m):
            raise ShapeMismatch(f"obs noise {noise.shape} for {m} observations")

    # Joint factor of Cov([observation; state]); one QR reveals the
    # innovation factor, the gain numerator, and the posterior factor.
    top = np.concatenate([H @ g.cov_sqrt, noise], axis=1)
    bottom = np.concatenate([g.cov_sqrt, np.zeros((n, m))], axis=1)
    joint = triangularize(np.concatenate([top, bottom], axis=0))
    innovation_sqrt = joint[:m, :m]
    gain_num = joint[m:, :m]
    posterior_sqrt = joint[m:, m:]

    s_rows = (innovation_sqrt**2).sum(axis=1)
    pivots = np.diagonal(innovation_sqrt) ** 2
    if pivots.min() < _SINGULAR_PIVOT_RTOL * max(s_rows.max(), np.finfo(float).tiny):
        raise SingularInnovation(
            f"innovation covariance pivot {pivots.min():.3e} is numerically singular"
        )
    # Gain K = Sigma H^T S^{-1} via a triangular solve; no explicit inverse.
    gain = solve_triangular(innovation_sqrt, gain_num.T, lower=True, trans="T").T
    mean = g.mean - gain @ residual
    return Gaussian(mean, posterior_sqrt), innovation_sqrt


def mixture_mean(m):
    """Mean of a Gaussian mixture: the weighted sum of component means."""
    means = np.stack([c.mean for c in m.components])
    return m.weights @ means


def mixture_cov(m):
    """Covariance of a Gaussian mixture, split into its two parts.

    Returns:
        (total, pn, non_pn) where pn = sum_i w_i Sigma_i is the share
        carried by the component covariances, non_pn is the spread of the
        component means around the mixture mean, and total = pn + non_pn
        exactly (single addition, identical summation path).
    """
    mu_bar = mixture_mean(m)
    pn = np.zeros((m.dim, m.dim))
    non_pn = np.zeros((m.dim, m.dim))
    for w, c in zip(m.weights, m.components):
        pn += w * (c.cov_sqrt @ c.cov_sqrt.T)
        dev = c.mean - mu_bar
        non_pn += w * np.outer(dev, dev)
    total = pn + non_pn
    return total, pn, non_pn
