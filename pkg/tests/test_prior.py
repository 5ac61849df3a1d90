import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from odeup import (
    IWPPrior,
    NonPositiveStep,
    OrderOutOfRange,
    process_noise_sqrt,
    projection,
    transition,
)


def drift_matrix(q):
    # companion drift of the q-times integrated Wiener process (d = 1)
    F = np.zeros((q + 1, q + 1))
    F[np.arange(q), np.arange(1, q + 1)] = 1.0
    return F


def transition_oracle(q, h):
    return expm(drift_matrix(q) * h)


def noise_oracle(q, h):
    # integral_0^h e^{F s} Gamma Gamma^T e^{F^T s} ds via Gauss-Legendre;
    # the integrand is polynomial in s of degree 2q, so 12 nodes are exact.
    F = drift_matrix(q)
    gamma = np.zeros((q + 1, 1))
    gamma[q, 0] = 1.0
    nodes, weights = np.polynomial.legendre.leggauss(12)
    s = 0.5 * h * (nodes + 1.0)
    total = np.zeros((q + 1, q + 1))
    for si, wi in zip(s, weights):
        e = expm(F * si)
        total += wi * (e @ gamma) @ (e @ gamma).T
    return 0.5 * h * total


class TestTransition:
    def test_iwp1_closed_form(self, rng):
        for h in rng.uniform(0.01, 2.0, size=5):
            prior = IWPPrior(d=1, q=1)
            assert np.allclose(transition(prior, h), [[1.0, h], [0.0, 1.0]])
            assert np.allclose(transition(prior, h), transition_oracle(1, h))

    def test_iwp2_unit_step(self):
        prior = IWPPrior(d=1, q=2)
        expected = [[1.0, 1.0, 0.5], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]]
        assert np.allclose(transition(prior, 1.0), expected)
        assert np.allclose(transition(prior, 1.0), transition_oracle(2, 1.0))

    def test_kronecker_block_structure(self):
        prior = IWPPrior(d=2, q=1)
        block = np.array([[1.0, 1.0], [0.0, 1.0]])
        expected = np.zeros((4, 4))
        expected[:2, :2] = block
        expected[2:, 2:] = block
        assert np.allclose(transition(prior, 1.0), expected)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(1, 4),
        st.floats(0.01, 5.0),
        st.floats(0.01, 5.0),
    )
    def test_semigroup(self, q, h1, h2):
        prior = IWPPrior(d=1, q=q)
        lhs = transition(prior, h1) @ transition(prior, h2)
        rhs = transition(prior, h1 + h2)
        assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(rhs).max())

    def test_matches_matrix_exponential(self, rng):
        for q in range(1, 5):
            for h in rng.uniform(0.05, 3.0, size=3):
                got = transition(IWPPrior(d=1, q=q), h)
                assert np.allclose(got, transition_oracle(q, h), atol=1e-12)

    def test_taylor_extrapolation_row(self, rng):
        # the solution row of the transition is the Taylor extrapolation of
        # the stacked derivatives: [1, h, h^2/2, ..., h^q/q!]
        for q in (1, 2):
            prior = IWPPrior(d=1, q=q)
            h = float(rng.uniform(0.1, 2.0))
            row = projection(prior, 0) @ transition(prior, h)
            expected = [h**j / math.factorial(j) for j in range(q + 1)]
            assert np.allclose(row.ravel(), expected)

    def test_positive_step_required(self):
        with pytest.raises(NonPositiveStep):
            transition(IWPPrior(d=1, q=1), 0.0)
        with pytest.raises(NonPositiveStep):
            transition(IWPPrior(d=1, q=1), -0.1)


class TestProcessNoise:
    def test_iwp1_closed_form(self, rng):
        for h in rng.uniform(0.05, 2.0, size=5):
            L = process_noise_sqrt(IWPPrior(d=1, q=1), h)
            expected = np.array([[h**3 / 3, h**2 / 2], [h**2 / 2, h]])
            assert np.allclose(L @ L.T, expected, rtol=1e-12)
            assert np.allclose(L @ L.T, noise_oracle(1, h), rtol=1e-10)

    def test_iwp2_unit_step(self):
        L = process_noise_sqrt(IWPPrior(d=1, q=2), 1.0)
        expected = np.array(
            [
                [1 / 20, 1 / 8, 1 / 6],
                [1 / 8, 1 / 3, 1 / 2],
                [1 / 6, 1 / 2, 1.0],
            ]
        )
        assert np.allclose(L @ L.T, expected, rtol=1e-12)
        assert np.allclose(L @ L.T, noise_oracle(2, 1.0), rtol=1e-10)

    def test_diffusion_scales_exactly(self):
        unit = process_noise_sqrt(IWPPrior(d=1, q=2, kappa2=1.0), 0.3)
        scaled = process_noise_sqrt(IWPPrior(d=1, q=2, kappa2=4.0), 0.3)
        assert np.array_equal(scaled, 2.0 * unit)

    def test_matches_sde_integral_oracle(self, rng):
        for q in range(1, 5):
            for h in rng.uniform(0.05, 2.0, size=3):
                L = process_noise_sqrt(IWPPrior(d=1, q=q), h)
                oracle = noise_oracle(q, h)
                err = np.abs(L @ L.T - oracle).max() / np.abs(oracle).max()
                assert err < 1e-10

    def test_psd_over_step_range(self):
        for q in range(1, 5):
            for h in np.geomspace(1e-3, 10.0, 12):
                L = process_noise_sqrt(IWPPrior(d=1, q=q), h)
                eigs = np.linalg.eigvalsh(L @ L.T)
                assert eigs.min() >= -1e-12

    def test_factor_reproduces_kron_noise(self):
        prior = IWPPrior(d=2, q=1, kappa2=2.5)
        L = process_noise_sqrt(prior, 0.7)
        h = 0.7
        block = 2.5 * np.array([[h**3 / 3, h**2 / 2], [h**2 / 2, h]])
        expected = np.kron(np.eye(2), block)
        assert np.allclose(L @ L.T, expected, rtol=1e-12)
        assert np.allclose(np.triu(L, 1), 0.0)

    def test_positive_step_required(self):
        with pytest.raises(NonPositiveStep):
            process_noise_sqrt(IWPPrior(d=1, q=1), 0.0)


class TestProjection:
    def test_order_zero(self):
        assert np.allclose(projection(IWPPrior(d=1, q=2), 0), [[1.0, 0.0, 0.0]])

    def test_order_one(self):
        assert np.allclose(projection(IWPPrior(d=1, q=2), 1), [[0.0, 1.0, 0.0]])

    def test_kronecker_two_dims(self):
        expected = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
        assert np.allclose(projection(IWPPrior(d=2, q=1), 0), expected)

    def test_order_out_of_range(self):
        with pytest.raises(OrderOutOfRange):
            projection(IWPPrior(d=1, q=2), 3)
        with pytest.raises(OrderOutOfRange):
            projection(IWPPrior(d=1, q=2), -1)


def test_state_dim():
    assert IWPPrior(d=2, q=3).state_dim == 8


def test_invalid_prior_parameters():
    with pytest.raises(OrderOutOfRange):
        IWPPrior(d=0, q=1)
    with pytest.raises(ValueError):
        IWPPrior(d=1, q=1, kappa2=0.0)
