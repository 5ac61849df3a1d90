import numpy as np
import pytest

from odeup import (
    BENCHMARK_NAMES,
    DimensionMismatch,
    GaussianParameters,
    UniformBoxParameters,
    UnknownProblem,
    UnsupportedOrder,
    apply_params,
    benchmark,
    rk4_solve,
    solution_derivatives,
    uniform_box_from_gaussian,
)

# state boxes roughly covering each system's plotted range
_PROBE_BOXES = {
    "linear": ([0.5], [25.0]),
    "logistic": ([0.01], [3.5]),
    "fitzhugh_nagumo": ([-3.0, -3.0], [3.0, 3.0]),
    "lotka_volterra": ([0.5, 0.5], [12.0, 12.0]),
    "van_der_pol": ([-7.0, -7.0], [7.0, 7.0]),
}


class TestCatalog:
    def test_names(self):
        assert set(BENCHMARK_NAMES) == {
            "linear", "logistic", "fitzhugh_nagumo", "lotka_volterra", "van_der_pol",
        }

    def test_unknown_problem(self):
        with pytest.raises(UnknownProblem):
            benchmark("lorenz")

    def test_logistic_definition(self):
        problem, dist = benchmark("logistic")
        b = 3.0
        y = np.array([0.4])
        assert np.allclose(problem.f(y, 0.0, [b]), 3.0 * y * (1 - y / b))
        assert np.allclose(problem.init_map([b]), [0.05])
        assert np.allclose(dist.mean, [3.0])
        assert np.allclose(dist.cov, [[0.01]])

    def test_linear_definition(self):
        problem, dist = benchmark("linear")
        assert np.allclose(problem.f([2.5], 0.0, [1.0]), [2.5])
        assert np.allclose(problem.init_map([1.3]), [1.3])
        assert np.allclose(dist.mean, [1.0])
        assert np.allclose(dist.cov, [[0.01]])

    def test_van_der_pol_field_by_hand(self):
        problem, _ = benchmark("van_der_pol")
        # a (1 - 25) * 5 - 5 = -11 at y = (5, 5), a = 0.05
        assert np.allclose(problem.f([5.0, 5.0], 0.0, [5.0, 5.0]), [5.0, -11.0])

    def test_fitzhugh_nagumo_field_by_hand(self):
        problem, dist = benchmark("fitzhugh_nagumo")
        y = np.array([0.5, 1.0])
        f1 = 0.5 - 0.5**3 / 3 - 1.0
        f2 = (0.5 + 0.08 - 0.07 * 1.0) / 1.25
        assert np.allclose(problem.f(y, 0.0, dist.mean), [f1, f2])

    def test_lotka_volterra_field_by_hand(self):
        problem, _ = benchmark("lotka_volterra")
        y = np.array([5.0, 5.0])
        assert np.allclose(
            problem.f(y, 0.0, y), [5 * 5 - 0.5 * 25, -5 * 5 + 0.5 * 25]
        )

    def test_fields_broadcast(self, rng):
        for name in BENCHMARK_NAMES:
            problem, dist = benchmark(name)
            ys = rng.uniform(0.5, 2.0, size=(7, problem.dim))
            thetas = np.tile(dist_mean(dist), (7, 1))
            batched_f = problem.f(ys, 0.0, thetas)
            batched_j = problem.jac(ys, 0.0, thetas)
            assert batched_f.shape == (7, problem.dim)
            assert batched_j.shape == (7, problem.dim, problem.dim)
            for i in range(7):
                assert np.allclose(batched_f[i], problem.f(ys[i], 0.0, thetas[i]))
                assert np.allclose(batched_j[i], problem.jac(ys[i], 0.0, thetas[i]))


def dist_mean(dist):
    if isinstance(dist, GaussianParameters):
        return dist.mean
    return 0.5 * (dist.lower + dist.upper)


class TestApplyParams:
    def test_linear_binds_initial_value(self):
        problem, _ = benchmark("linear")
        concrete = apply_params(problem, [1.1])
        assert np.allclose(concrete.y0, [1.1])
        assert np.allclose(concrete.f([1.1], 0.0), [1.1])

    def test_logistic_binds_coefficient(self):
        problem, _ = benchmark("logistic")
        concrete = apply_params(problem, [3.2])
        assert np.allclose(concrete.y0, [0.05])
        y = np.array([1.0])
        assert np.allclose(concrete.f(y, 0.0), 3.0 * y * (1 - y / 3.2))

    def test_lotka_volterra_initial_value(self):
        problem, _ = benchmark("lotka_volterra")
        concrete = apply_params(problem, [5.0, 5.0])
        assert np.allclose(concrete.y0, [5.0, 5.0])

    def test_dimension_mismatch(self):
        problem, _ = benchmark("linear")
        with pytest.raises(DimensionMismatch):
            apply_params(problem, [1.0, 2.0])


class TestSolutionDerivatives:
    def test_linear_all_equal(self):
        concrete = apply_params(benchmark("linear")[0], [1.0])
        derivs = solution_derivatives(concrete, 2)
        assert np.allclose(derivs, [[1.0], [1.0], [1.0]])

    def test_first_order_is_field_value(self):
        for name in BENCHMARK_NAMES:
            problem, dist = benchmark(name)
            concrete = apply_params(problem, dist_mean(benchmark(name)[1]))
            derivs = solution_derivatives(concrete, 1)
            assert np.allclose(derivs[0], concrete.y0)
            assert np.allclose(derivs[1], concrete.f(concrete.y0, 0.0))

    def test_logistic_second_order_formula(self):
        concrete = apply_params(benchmark("logistic")[0], [3.0])
        derivs = solution_derivatives(concrete, 2)
        y, a, b = 0.05, 3.0, 3.0
        d1 = a * y * (1 - y / b)
        assert np.allclose(derivs[2], [a * (1 - 2 * y / b) * d1])

    def test_unsupported_order(self):
        concrete = apply_params(benchmark("logistic")[0], [3.0])
        with pytest.raises(UnsupportedOrder):
            solution_derivatives(concrete, 4)

    def test_no_oracle_means_first_order_only(self):
        from odeup import ConcreteIVP

        concrete = ConcreteIVP(
            dim=1, f=lambda y, t: -y, jac=lambda y, t: [[-1.0]],
            y0=np.array([1.0]), tspan=(0.0, 1.0),
        )
        assert len(solution_derivatives(concrete, 1)) == 2
        with pytest.raises(UnsupportedOrder):
            solution_derivatives(concrete, 2)

    @pytest.mark.parametrize("name", BENCHMARK_NAMES)
    def test_order2_against_flow_finite_differences(self, name):
        # d2y/dt2 ~ (f(y(eps)) - f(y(0))) / eps along an accurate trajectory
        problem, dist = benchmark(name)
        theta = dist_mean(dist)
        concrete = apply_params(problem, theta)
        eps = 1e-6
        y_eps = rk4_solve(concrete, eps / 4, np.array([0.0, eps])).values[-1]
        fd = (concrete.f(y_eps, eps) - concrete.f(concrete.y0, 0.0)) / eps
        d2 = solution_derivatives(concrete, 2)[2]
        scale = max(1.0, np.abs(d2).max())
        assert np.abs(d2 - fd).max() <= 1e-3 * scale

    @pytest.mark.parametrize("name", BENCHMARK_NAMES)
    def test_order3_against_flow_finite_differences(self, name):
        # central difference of d2y/dt2 = J(y) f(y) along the flow
        problem, dist = benchmark(name)
        theta = dist_mean(dist)
        concrete = apply_params(problem, theta)
        eps = 1e-4

        def second_deriv_at(t, y):
            J = np.atleast_2d(concrete.jac(y, t))
            return J @ np.atleast_1d(concrete.f(y, t))

        grid = np.array([0.0, eps])
        y_plus = rk4_solve(concrete, eps / 8, grid).values[-1]
        d2_plus = second_deriv_at(eps, y_plus)
        d2_zero = second_deriv_at(0.0, np.asarray(concrete.y0))
        fd = (d2_plus - d2_zero) / eps
        d3 = solution_derivatives(concrete, 3)[3]
        scale = max(1.0, np.abs(d3).max())
        assert np.abs(d3 - fd).max() <= 1e-2 * scale


@pytest.mark.parametrize("name", BENCHMARK_NAMES)
def test_jacobian_matches_finite_differences(name, rng):
    problem, dist = benchmark(name)
    lo, hi = _PROBE_BOXES[name]
    theta = dist_mean(dist)
    step = 1e-6
    for _ in range(100):
        y = rng.uniform(lo, hi)
        J = np.atleast_2d(problem.jac(y, 0.0, theta))
        fd = np.empty_like(J)
        for k in range(problem.dim):
            delta = np.zeros(problem.dim)
            delta[k] = step
            fd[:, k] = (
                np.atleast_1d(problem.f(y + delta, 0.0, theta))
                - np.atleast_1d(problem.f(y - delta, 0.0, theta))
            ) / (2 * step)
        assert np.abs(J - fd).max() <= 1e-5 * max(1.0, np.abs(J).max())


class TestParameterDistributions:
    def test_gaussian_validation(self):
        with pytest.raises(DimensionMismatch):
            GaussianParameters([0.0, 1.0], [[1.0]])

    def test_uniform_box_validation(self):
        with pytest.raises(ValueError):
            UniformBoxParameters([0.0, 0.0], [1.0, 0.0])

    def test_box_from_gaussian(self):
        g = GaussianParameters([5.0, 5.0], 0.3 * np.eye(2))
        box = uniform_box_from_gaussian(g)
        sigma = np.sqrt(0.3)
        assert np.allclose(box.lower, 5.0 - 1.96 * sigma)
        assert np.allclose(box.upper, 5.0 + 1.96 * sigma)


def test_tspan_validation():
    from odeup import IVProblem

    with pytest.raises(ValueError):
        IVProblem(
            dim=1, f=lambda y, t, th: y, jac=lambda y, t, th: [[1.0]],
            init_map=lambda th: th, tspan=(1.0, 1.0), theta_dim=1,
        )
