import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arithmeta.meta import WeightScheme
from arithmeta.nn import central_diff
from arithmeta.quadratic import (
    AffineManifold,
    QuadraticTask,
    centroid_distance,
    dist_loss_grad,
    fixed_point,
    inner_step_exact,
    interpolation_expansion,
    project,
)


def random_subspace(rng, dim, codim):
    a = rng.normal(size=(codim, dim))
    b = rng.normal(size=codim)
    return AffineManifold.from_equations(a, b)


class TestProjection:
    def test_point_manifold(self):
        m = AffineManifold.from_point([1.0, 1.0])
        assert np.array_equal(project(np.array([5.0, -2.0]), m), [1.0, 1.0])

    def test_line_in_plane(self):
        # {y = 0} as A=[0,1], b=0
        m = AffineManifold.from_equations([[0.0, 1.0]], [0.0])
        assert np.allclose(project(np.array([3.0, 4.0]), m), [3.0, 0.0], atol=1e-14)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = random_subspace(rng, 6, 2)
            p = project(rng.normal(size=6), m)
            assert np.max(np.abs(project(p, m) - p)) <= 1e-10

    def test_nonexpansive(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            m = random_subspace(rng, 5, 2)
            x, y = rng.normal(size=5), rng.normal(size=5)
            dp = np.linalg.norm(project(x, m) - project(y, m))
            assert dp <= np.linalg.norm(x - y) + 1e-10

    def test_rank_deficient_rejected(self):
        with pytest.raises(ValueError, match="full row rank"):
            AffineManifold.from_equations([[1.0, 0.0], [2.0, 0.0]], [1.0, 2.0])

    def test_dimension_mismatch_rejected(self):
        m = AffineManifold.from_point([1.0, 2.0])
        with pytest.raises(ValueError, match="dimension"):
            project(np.zeros(3), m)


class TestDistLoss:
    def test_on_manifold_zero(self):
        m = AffineManifold.from_equations([[0.0, 1.0]], [0.0])
        loss, grad = dist_loss_grad(np.array([2.0, 0.0]), m)
        assert loss == 0.0
        assert np.max(np.abs(grad)) <= 1e-14

    def test_scalar_hand_case(self):
        m = AffineManifold.from_point([1.0])
        loss, grad = dist_loss_grad(np.array([0.0]), m)
        assert loss == 0.5
        assert grad[0] == -1.0

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            m = random_subspace(rng, 4, 1)
            x = rng.normal(size=4)
            _, grad = dist_loss_grad(x, m)
            fd = central_diff(lambda v: dist_loss_grad(v, m)[0], x, 1e-6)
            assert np.max(np.abs(grad - fd)) <= 1e-6


class TestInnerStep:
    def test_full_rate_projects(self):
        rng = np.random.default_rng(3)
        m = random_subspace(rng, 4, 2)
        x = rng.normal(size=4)
        stepped, eta = inner_step_exact(x, m, 1.0)
        assert eta == 1.0
        assert np.max(np.abs(stepped - project(x, m))) <= 1e-14

    def test_half_rate_midpoint(self):
        m = AffineManifold.from_point([1.0])
        stepped, eta = inner_step_exact(np.array([0.0]), m, 0.5)
        assert stepped[0] == 0.5 and eta == 0.5

    def test_two_half_steps_equal_one_three_quarter_step(self):
        rng = np.random.default_rng(4)
        m = random_subspace(rng, 5, 2)
        x = rng.normal(size=5)
        once, _ = inner_step_exact(x, m, 0.75)
        twice, _ = inner_step_exact(*[inner_step_exact(x, m, 0.5)[0]], m, 0.5)
        assert np.max(np.abs(once - twice)) <= 1e-12

    def test_rate_bounds(self):
        m = AffineManifold.from_point([0.0])
        with pytest.raises(ValueError):
            inner_step_exact(np.zeros(1), m, 0.0)
        with pytest.raises(ValueError):
            inner_step_exact(np.zeros(1), m, 1.5)


class TestExpansion:
    def test_all_zero_etas(self):
        theta = np.array([1.0, -2.0])
        out = interpolation_expansion(theta, [0.0, 0.0], [np.zeros(2), np.zeros(2)])
        assert np.array_equal(out, theta)

    def test_all_one_etas_keep_last_projection(self):
        phis = [np.array([1.0]), np.array([2.0]), np.array([3.0])]
        out = interpolation_expansion(np.array([9.0]), [1.0, 1.0, 1.0], phis)
        assert out[0] == 3.0

    def test_matches_iterated_steps(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            manifolds = [random_subspace(rng, 4, int(rng.integers(1, 3))) for _ in range(n)]
            etas = rng.uniform(0.05, 0.95, size=n)
            theta = rng.normal(size=4)
            current = theta
            phis = []
            for m, eta in zip(manifolds, etas):
                phis.append(project(current, m))
                current, _ = inner_step_exact(current, m, eta)
            expanded = interpolation_expansion(theta, etas, phis)
            assert np.max(np.abs(expanded - current)) <= 1e-12

    def test_recency_bias_coefficients_increase(self):
        # with equal etas the coefficient on projection j is eta*(1-eta)^(n-j):
        # read the coefficients off by feeding basis vectors as projections
        n, eta = 5, 0.3
        coeffs = []
        for j in range(n):
            phis = [np.array([1.0]) if i == j else np.array([0.0]) for i in range(n)]
            coeffs.append(interpolation_expansion(np.zeros(1), [eta] * n, phis)[0])
        assert np.all(np.diff(coeffs) > 0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**31),
    n=st.integers(min_value=1, max_value=6),
)
def test_property_expansion_equals_iteration(seed, n):
    rng = np.random.default_rng(seed)
    etas = rng.uniform(0.01, 0.99, size=n)
    phis = [rng.normal(size=3) for _ in range(n)]
    theta = rng.normal(size=3)
    current = theta
    for eta, phi in zip(etas, phis):
        current = (1 - eta) * current + eta * phi
    assert np.max(np.abs(interpolation_expansion(theta, etas, phis) - current)) <= 1e-12


class TestFixedPoint:
    def pair_task(self):
        return QuadraticTask.from_points([[1.0], [-1.0]])

    def test_arith_pair_value(self):
        # closed form for eta=0.5, weights {2/3, 1/3}: (1-eta)/(3-eta) = 0.2
        res = fixed_point(self.pair_task(), WeightScheme.arithmetic(1.0), 0.5, [0, 1])
        assert res.converged
        assert res.theta[0] == pytest.approx(0.2, abs=1e-10)

    def test_fish_pair_value(self):
        # full interpolation to the last inner model: -eta/(2-eta) = -1/3
        res = fixed_point(self.pair_task(), WeightScheme.constant(1.0), 0.5, [0, 1])
        assert res.converged
        assert res.theta[0] == pytest.approx(-1.0 / 3.0, abs=1e-10)
        assert abs(res.theta[0]) > 0.2  # further from the centroid at 0

    def test_matches_long_manual_iteration(self):
        # independent oracle: iterate the affine update map directly
        theta = np.zeros(1)
        phis = [np.array([1.0]), np.array([-1.0])]
        w = [2.0 / 3.0, 1.0 / 3.0]
        for _ in range(10_000):
            thetas = [theta]
            for phi in phis:
                thetas.append(0.5 * thetas[-1] + 0.5 * phi)
            grads = [thetas[i] - thetas[i + 1] for i in range(2)]
            theta = theta - (w[0] * grads[0] + w[1] * grads[1])
        res = fixed_point(self.pair_task(), WeightScheme.arithmetic(1.0), 0.5, [0, 1])
        assert abs(res.theta[0] - theta[0]) <= 1e-12

    def test_exact_projection_regime_reaches_centroid(self):
        rng = np.random.default_rng(6)
        for n in (2, 3, 5):
            for _ in range(5):
                points = rng.normal(size=(n, 4))
                task = QuadraticTask.from_points(points)
                for eps in (0.5, 1.0, 3.0):
                    res = fixed_point(task, WeightScheme.arithmetic(eps), 1.0, list(range(n)))
                    assert res.converged
                    assert np.max(np.abs(res.theta - points.mean(axis=0))) <= 1e-12

    def test_exact_projection_fish_reaches_last(self):
        rng = np.random.default_rng(7)
        points = rng.normal(size=(3, 4))
        task = QuadraticTask.from_points(points)
        res = fixed_point(task, WeightScheme.constant(1.0), 1.0, [0, 1, 2])
        assert np.max(np.abs(res.theta - points[2])) <= 1e-12

    def test_nonconvergence_reported(self):
        res = fixed_point(self.pair_task(), WeightScheme.arithmetic(1.0), 0.5, [0, 1], iters=3)
        assert not res.converged
        assert res.iterations == 3 and res.displacement > 1e-12

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError, match="permutation"):
            fixed_point(self.pair_task(), WeightScheme.arithmetic(1.0), 0.5, [0, 0])


class TestCentroidDistance:
    def test_at_centroid_zero(self):
        task = QuadraticTask.from_points([[1.0, 0.0], [-1.0, 0.0]])
        dist, per_domain = centroid_distance(np.zeros(2), task)
        assert dist == 0.0
        assert np.allclose(per_domain, [1.0, 1.0], atol=1e-14)

    def test_scalar_hand_case(self):
        task = QuadraticTask.from_points([[1.0], [-1.0]])
        dist, _ = centroid_distance(np.array([0.2]), task)
        assert dist == pytest.approx(0.2, abs=1e-15)

    def regular_simplex(self, n):
        # n vertices of a regular simplex in R^(n-1), centered at the origin
        basis = np.eye(n)
        verts = basis - basis.mean(axis=0)
        # project to (n-1) dims via QR of the centering subspace
        q, _ = np.linalg.qr(verts.T)
        return verts @ q[:, : n - 1]

    def test_balanced_positioning_beats_interpolation(self):
        rng = np.random.default_rng(8)
        for n in (3, 4):
            verts = self.regular_simplex(n)
            for _ in range(10):
                q, _ = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))
                task = QuadraticTask.from_points(verts @ q)
                res_a = fixed_point(task, WeightScheme.arithmetic(1.0), 0.5, list(range(n)))
                res_f = fixed_point(task, WeightScheme.constant(1.0), 0.5, list(range(n)))
                dist_a, per_a = centroid_distance(res_a.theta, task)
                dist_f, per_f = centroid_distance(res_f.theta, task)
                assert dist_a <= dist_f + 1e-12
                assert per_a.max() - per_a.min() <= per_f.max() - per_f.min() + 1e-12
