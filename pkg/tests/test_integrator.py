import numpy as np
import pytest

from matsde import integrator as it
from matsde.brownian import MatrixBrownianPath, SeedSpec, TimeGrid, coarsen, sample_path
from matsde.matspace import basis_matrix, is_nonnegative


SEED = SeedSpec(31415)


def path_from_increments(grid, deltas):
    values = np.concatenate(
        [np.zeros((1,) + deltas.shape[1:]), np.cumsum(deltas, axis=0)]
    )
    return MatrixBrownianPath(grid, values)


class TestSimpleIntegral:
    def test_identity_integrand_recovers_endpoint(self):
        grid = TimeGrid.uniform(1.0, 16)
        path = sample_path(2, grid, SEED)
        v = it.SimpleProcess(grid, np.broadcast_to(np.eye(2), (16, 2, 2)))
        np.testing.assert_allclose(
            it.ito_integral_simple(v, path), path.values[-1], atol=1e-12
        )

    def test_zero_integrand(self):
        grid = TimeGrid.uniform(1.0, 4)
        path = sample_path(2, grid, SEED)
        v = it.SimpleProcess(grid, np.zeros((4, 2, 2)))
        np.testing.assert_array_equal(it.ito_integral_simple(v, path), np.zeros((2, 2)))

    def test_single_cell_hand_oracle(self):
        # phi @ dB worked by hand:
        # [[1,1],[0,1]] @ [[0.3,-0.1],[0.2,0.5]] = [[0.5,0.4],[0.2,0.5]]
        grid = TimeGrid(np.array([0.0, 1.0]))
        delta = np.array([[[0.3, -0.1], [0.2, 0.5]]])
        path = path_from_increments(grid, delta)
        v = it.SimpleProcess(grid, np.array([[[1.0, 1.0], [0.0, 1.0]]]))
        np.testing.assert_allclose(
            it.ito_integral_simple(v, path),
            [[0.5, 0.4], [0.2, 0.5]],
            atol=1e-15,
        )

    def test_linearity_exact(self):
        grid = TimeGrid.uniform(1.0, 8)
        path = sample_path(2, grid, SEED.with_path(1))
        rng = np.random.default_rng(0)
        v1 = it.SimpleProcess(grid, rng.normal(size=(8, 2, 2)))
        v2 = it.SimpleProcess(grid, rng.normal(size=(8, 2, 2)))
        both = it.SimpleProcess(grid, v1.values + v2.values)
        lhs = it.ito_integral_simple(both, path)
        rhs = it.ito_integral_simple(v1, path) + it.ito_integral_simple(v2, path)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_additive_over_adjacent_intervals(self):
        grid = TimeGrid.uniform(1.0, 8)
        path = sample_path(2, grid, SEED.with_path(2))
        phis = np.random.default_rng(1).normal(size=(8, 2, 2))
        whole = it.ito_integral_simple(it.SimpleProcess(grid, phis), path)
        # same integrand split at t = 0.5; per-cell products are identical
        first = it.SimpleProcess(
            TimeGrid(grid.nodes[:5]), phis[:4]
        )
        second_nodes = grid.nodes[4:] - grid.nodes[4]
        second_path = MatrixBrownianPath(
            TimeGrid(second_nodes), path.values[4:] - path.values[4]
        )
        second = it.SimpleProcess(TimeGrid(second_nodes), phis[4:])
        split = it.ito_integral_simple(first, path) + it.ito_integral_simple(
            second, second_path
        )
        # algebraically identical; only summation order differs
        np.testing.assert_allclose(whole, split, rtol=0, atol=1e-13)

    def test_partition_must_align(self):
        path = sample_path(2, TimeGrid.uniform(1.0, 4), SEED)
        bad = it.SimpleProcess(TimeGrid(np.array([0.0, 0.3, 1.0])), np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            it.ito_integral_simple(bad, path)


class TestProjection:
    def test_piecewise_constant_fixed_point(self):
        grid = TimeGrid.uniform(1.0, 4)
        path = sample_path(2, grid, SEED)
        phis = np.random.default_rng(2).normal(size=(4, 2, 2))

        def evaluator(k, ts, vs):
            return phis[min(k, 3)]

        v = it.AdaptedProcess(evaluator)
        proj = it.project_simple(v, grid, path)
        np.testing.assert_array_equal(proj.values, phis)

    def test_left_endpoints_of_linear_ramp(self):
        grid = TimeGrid.uniform(1.0, 2)
        path = sample_path(2, grid, SEED)
        v = it.AdaptedProcess.from_time_function(lambda t: t * np.eye(2))
        proj = it.project_simple(v, grid, path)
        np.testing.assert_array_equal(proj.values[0], np.zeros((2, 2)))
        np.testing.assert_array_equal(proj.values[1], 0.5 * np.eye(2))

    def test_l2_error_decreases_under_refinement(self):
        # oracle: for v(t) = t I on [0,1] with m uniform cells the squared
        # projection error is sum over cells of int (t - t_i)^2 * ||I||^2 dt
        # = 2 h^2 / 3, computed below by fine quadrature instead
        v = it.AdaptedProcess.from_time_function(lambda t: t * np.eye(2))
        fine = TimeGrid.uniform(1.0, 256)
        path = sample_path(2, fine, SEED)
        quad_t = fine.nodes[:-1]
        errors = []
        for cells in (4, 8, 16, 32):
            sub = TimeGrid(fine.nodes[:: 256 // cells])
            proj = it.project_simple(v, sub, path)
            cell_of = np.searchsorted(sub.nodes, quad_t, side="right") - 1
            err = 0.0
            for t, c in zip(quad_t, cell_of):
                diff = t * np.eye(2) - proj.values[c]
                err += np.sum(diff * diff) * (1.0 / 256)
            errors.append(err)
        assert all(a > b for a, b in zip(errors, errors[1:]))
        # quartering of the squared error per halving of h
        np.testing.assert_allclose(
            [a / b for a, b in zip(errors, errors[1:])], 4.0, rtol=0.3
        )


class TestAdaptedIntegral:
    def test_constant_agrees_with_simple(self):
        grid = TimeGrid.uniform(1.0, 8)
        path = sample_path(2, grid, SEED.with_path(3))
        c = np.array([[1.0, 2.0], [3.0, 4.0]])
        via_adapted = it.ito_integral(it.AdaptedProcess.constant(c), path)
        via_simple = it.ito_integral_simple(
            it.SimpleProcess(grid, np.broadcast_to(c, (8, 2, 2))), path
        )
        np.testing.assert_array_equal(via_adapted, via_simple)

    def test_path_integrand_cauchy_refinement(self):
        # integrating the path against itself: successive refinements form
        # an L^2 Cauchy sequence
        v = it.AdaptedProcess.from_path_function(lambda t, b: b)
        diffs = []
        m = 200
        for lvl, cells in enumerate((64, 128, 256)):
            acc = 0.0
            for i in range(m):
                fine = sample_path(2, TimeGrid.uniform(1.0, 512), SEED.with_path(i))
                coarse = coarsen(fine, 512 // cells)
                finer = coarsen(fine, 512 // (2 * cells))
                d = it.ito_integral(v, finer) - it.ito_integral(v, coarse)
                acc += np.sum(d * d)
            diffs.append(acc / m)
        assert diffs[0] > diffs[1] > diffs[2]

    def test_linearity_per_path(self):
        grid = TimeGrid.uniform(1.0, 8)
        path = sample_path(2, grid, SEED.with_path(4))
        v1 = it.AdaptedProcess.from_path_function(lambda t, b: b)
        v2 = it.AdaptedProcess.constant(np.eye(2))
        v_sum = it.AdaptedProcess.from_path_function(lambda t, b: b + np.eye(2))
        lhs = it.ito_integral(v_sum, path)
        rhs = it.ito_integral(v1, path) + it.ito_integral(v2, path)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_non_anticipation_window(self):
        # the evaluator only ever sees nodes up to its index
        seen = []

        def evaluator(k, ts, vs):
            seen.append((k, len(ts), len(vs)))
            return np.zeros((2, 2))

        grid = TimeGrid.uniform(1.0, 4)
        path = sample_path(2, grid, SEED)
        it.ito_integral(it.AdaptedProcess(evaluator), path)
        assert seen == [(k, k + 1, k + 1) for k in range(4)]

    def test_prefix_views_are_read_only(self):
        def evaluator(k, ts, vs):
            with pytest.raises(ValueError):
                vs[0] = 1.0
            return np.zeros((2, 2))

        path = sample_path(2, TimeGrid.uniform(1.0, 2), SEED)
        it.ito_integral(it.AdaptedProcess(evaluator), path)


def expected_sq_norm_constant(v, horizon):
    """Oracle: E||V B_T||^2 = trace(V^T V) * n * T via E[B B^T] = n T I."""
    n = v.shape[0]
    return float(np.trace(v.T @ v)) * n * horizon


class TestIsometry:
    def test_identity_integrand(self):
        grid = TimeGrid.uniform(1.0, 4)
        rep = it.verify_isometry(
            it.AdaptedProcess.constant(np.eye(2)), 2, grid, 10_000, SEED
        )
        assert rep.rhs == pytest.approx(4.0, rel=1e-12)
        assert rep.rhs == pytest.approx(expected_sq_norm_constant(np.eye(2), 1.0))
        assert abs(rep.lhs - rep.rhs) <= 3.0 * rep.stderr

    def test_zero_integrand(self):
        grid = TimeGrid.uniform(1.0, 4)
        rep = it.verify_isometry(
            it.AdaptedProcess.constant(np.zeros((2, 2))), 2, grid, 100, SEED
        )
        assert rep.lhs == 0.0 and rep.rhs == 0.0

    def test_basis_integrand_horizon_two(self):
        grid = TimeGrid.uniform(2.0, 4)
        rep = it.verify_isometry(
            it.AdaptedProcess.constant(basis_matrix(1, 1, 2)), 2, grid, 4000, SEED
        )
        assert rep.rhs == pytest.approx(4.0, rel=1e-12)

    def test_dimension_factor_is_exact(self):
        grid = TimeGrid.uniform(1.0, 4)
        rng = np.random.default_rng(12)
        for k in range(5):
            v = rng.normal(size=(2, 2))
            rep = it.verify_isometry(
                it.AdaptedProcess.constant(v),
                2,
                grid,
                10_000,
                SEED.with_path(10_000 * k),
            )
            # regression guard: the factor is the dimension, not 1
            assert rep.rhs == rep.n * rep.time_integral
            assert abs(rep.lhs - rep.rhs) <= 3.0 * rep.stderr

    def test_integral_mean_is_zero(self):
        grid = TimeGrid.uniform(1.0, 2)
        v = it.AdaptedProcess.constant(np.array([[1.0, 2.0], [-1.0, 0.5]]))
        m = 10_000
        acc = np.zeros((m, 2, 2))
        for i in range(m):
            path = sample_path(2, grid, SEED.with_path(i))
            acc[i] = it.ito_integral(v, path)
        stderr = acc.std(axis=0, ddof=1) / np.sqrt(m)
        assert np.all(np.abs(acc.mean(axis=0)) <= 3.0 * stderr)


class TestQuadraticVariation:
    def test_identity(self):
        grid = TimeGrid.uniform(1.0, 8)
        path = sample_path(2, grid, SEED)
        v = it.AdaptedProcess.constant(np.eye(2))
        for t in (0.25, 0.5, 1.0):
            np.testing.assert_allclose(
                it.quadratic_variation_exact(v, path, t), t * np.eye(2), atol=1e-14
            )

    def test_lower_triangular_oracle(self):
        # V V^T for [[1,0],[1,1]] is [[1,1],[1,2]] by hand
        m = np.array([[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(m @ m.T, [[1.0, 1.0], [1.0, 2.0]])
        grid = TimeGrid.uniform(2.0, 4)
        path = sample_path(2, grid, SEED)
        got = it.quadratic_variation_exact(it.AdaptedProcess.constant(m), path, 2.0)
        np.testing.assert_allclose(got, 2.0 * np.array([[1, 1], [1, 2]]), atol=1e-14)

    def test_zero(self):
        grid = TimeGrid.uniform(1.0, 4)
        path = sample_path(2, grid, SEED)
        got = it.quadratic_variation_exact(
            it.AdaptedProcess.constant(np.zeros((2, 2))), path, 1.0
        )
        np.testing.assert_array_equal(got, np.zeros((2, 2)))

    def test_beyond_horizon(self):
        path = sample_path(2, TimeGrid.uniform(1.0, 4), SEED)
        with pytest.raises(ValueError):
            it.quadratic_variation_exact(
                it.AdaptedProcess.constant(np.eye(2)), path, 1.5
            )

    def test_nondecreasing_in_matrix_order(self):
        grid = TimeGrid.uniform(1.0, 16)
        path = sample_path(2, grid, SEED.with_path(9))
        v = it.AdaptedProcess.from_path_function(lambda t, b: b + np.eye(2))
        times = [0.25, 0.5, 0.75, 1.0]
        qvs = [it.quadratic_variation_exact(v, path, t) for t in times]
        for earlier, later in zip(qvs, qvs[1:]):
            assert is_nonnegative(later - earlier, tol=1e-12)


class TestMartingaleProperty:
    def test_constant_integrand(self):
        grid = TimeGrid.uniform(1.0, 32)
        e11 = basis_matrix(1, 1, 2)
        rows = it.verify_qv_martingale(
            it.AdaptedProcess.constant(np.array([[1.0, 0.0], [1.0, 1.0]])),
            e11,
            e11,
            grid,
            10_000,
            SEED,
            checkpoints=[0.25, 0.5, 1.0],
        )
        for row in rows:
            assert abs(row.residual) <= 3.0 * row.stderr

    def test_zero_integrand_exact(self):
        grid = TimeGrid.uniform(1.0, 8)
        rows = it.verify_qv_martingale(
            it.AdaptedProcess.constant(np.zeros((2, 2))),
            np.eye(2),
            np.eye(2),
            grid,
            50,
            SEED,
            checkpoints=[0.5, 1.0],
        )
        for row in rows:
            assert row.residual == 0.0

    def test_time_zero_checkpoint(self):
        grid = TimeGrid.uniform(1.0, 4)
        rows = it.verify_qv_martingale(
            it.AdaptedProcess.constant(np.eye(2)),
            np.eye(2),
            np.eye(2),
            grid,
            50,
            SEED,
            checkpoints=[0.0],
        )
        assert rows[0].residual == 0.0

    def test_checkpoint_must_be_node(self):
        grid = TimeGrid.uniform(1.0, 4)
        with pytest.raises(ValueError):
            it.verify_qv_martingale(
                it.AdaptedProcess.constant(np.eye(2)),
                np.eye(2),
                np.eye(2),
                grid,
                50,
                SEED,
                checkpoints=[0.3],
            )


class TestClamp:
    def test_below_level_unchanged(self):
        v = it.AdaptedProcess.constant(np.eye(2))
        clamped = it.clamp_process(v, 10.0)
        path = sample_path(2, TimeGrid.uniform(1.0, 2), SEED)
        np.testing.assert_array_equal(clamped.at(0, path), np.eye(2))

    def test_at_level_replaced(self):
        v = it.AdaptedProcess.constant(3.0 * np.eye(2))
        # ||3 I|| = sqrt(18) > 4, replaced by 4 I
        clamped = it.clamp_process(v, 4.0)
        path = sample_path(2, TimeGrid.uniform(1.0, 2), SEED)
        np.testing.assert_array_equal(clamped.at(0, path), 4.0 * np.eye(2))

    def test_l2_distance_shrinks_with_level(self):
        # once the level clears the bulk of the process norm distribution,
        # the clamped process converges to the original in L^2
        v = it.AdaptedProcess.from_path_function(lambda t, b: 5.0 * b)
        grid = TimeGrid.uniform(1.0, 16)
        dist = []
        for level in (8.0, 16.0, 32.0):
            clamped = it.clamp_process(v, level)
            acc = 0.0
            for i in range(100):
                path = sample_path(2, grid, SEED.with_path(i))
                d = it.values_along(v, path) - it.values_along(clamped, path)
                acc += np.sum(d * d)
            dist.append(acc)
        assert dist[0] > dist[1] > dist[2]
