import numpy as np
import pytest

from psml.core import (
    ArgmaxRule,
    ArgminRule,
    ConstantRule,
    RandomizedRule,
    draw_sample,
    empirical_psi_bias,
    empirical_psmse,
    information_dominance_check,
    psse_cost,
    selected_errors,
)
from psml.scenarios import LinearGaussianModel


class TestPsse:
    def test_zero_when_exact(self):
        t = np.array([0.3, -1.0, 2.0])
        for m in range(3):
            assert psse_cost(t, t, m) == 0.0

    def test_only_selected_coordinate_counts(self):
        assert psse_cost([2.0, 100.0], [1.0, -7.0], 0) == 1.0

    def test_direct_value(self):
        assert psse_cost([1.5, 0.0], [1.0, 9.9], 0) == pytest.approx(0.25)

    @pytest.mark.parametrize("m", [-1, 2, 5])
    def test_index_out_of_range(self, m):
        with pytest.raises(IndexError):
            psse_cost([1.0, 2.0], [1.0, 2.0], m)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            psse_cost([1.0], [1.0, 2.0], 0)


class TestPsmse:
    def test_zero(self):
        t = np.ones((5, 3))
        assert empirical_psmse(t, t, [0, 1, 2, 0, 1]) == 0.0

    def test_mean_of_two(self):
        est = np.array([[2.0, 0.0], [0.0, 1.0 + np.sqrt(3)]])
        truth = np.array([1.0, 1.0])
        assert empirical_psmse(est, truth, [0, 1]) == pytest.approx(2.0)

    def test_scalar_case_is_plain_mse(self, rng):
        est = rng.normal(size=(50, 1))
        assert empirical_psmse(est, [0.0], np.zeros(50, int)) == pytest.approx(np.mean(est**2))

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_psmse(np.zeros((0, 2)), np.zeros(2), [])

    def test_total_expectation_decomposition(self, rng):
        est = rng.normal(size=(200, 4))
        sel = rng.integers(0, 4, 200)
        total = empirical_psmse(est, np.zeros(4), sel)
        parts = sum(
            np.mean(sel == m) * np.mean(est[sel == m, m] ** 2) for m in range(4) if np.any(sel == m)
        )
        assert total == pytest.approx(parts, rel=1e-12)


class TestPsiBias:
    def test_zero(self):
        t = np.zeros((3, 2))
        assert empirical_psi_bias(t, t, [0, 1, 1]).aggregate == 0.0

    def test_cancelling_pair(self):
        est = np.array([[0.2, 0.0], [0.0, -0.2]])
        b = empirical_psi_bias(est, np.zeros(2), [0, 1])
        assert b.aggregate == pytest.approx(0.0)
        np.testing.assert_allclose(b.per_m, [0.2, -0.2])
        np.testing.assert_array_equal(b.counts, [1, 1])
        assert b.absolute == pytest.approx(0.0)

    def test_unselected_index_absent(self):
        b = empirical_psi_bias(np.array([[1.0, 0, 0]]), np.zeros(3), [0])
        assert b.per_m[0] == 1.0
        assert np.isnan(b.per_m[1]) and np.isnan(b.per_m[2])
        assert b.aggregate == 1.0

    def test_standard_error(self, rng):
        est = rng.normal(size=(400, 2))
        sel = rng.integers(0, 2, 400)
        b = empirical_psi_bias(est, np.zeros(2), sel)
        err = selected_errors(est, np.zeros(2), sel)
        assert b.se == pytest.approx(np.std(err, ddof=1) / 20)

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_psi_bias(np.zeros((0, 2)), np.zeros(2), [])


class TestRules:
    def test_argmax_ties_to_smallest(self):
        assert ArgmaxRule().select(np.array([1.0, 3.0, 3.0])) == 1
        assert ArgminRule().select(np.array([2.0, 0.0, 0.0])) == 1

    def test_second_best_differs(self, rng):
        for _ in range(50):
            x = rng.normal(size=5)
            for rule in (ArgmaxRule(), ArgminRule()):
                assert rule.second_best(x) != rule.select(x)

    def test_second_best_value(self):
        assert ArgmaxRule().second_best(np.array([0.1, 0.9, 0.5])) == 2
        assert ArgminRule().second_best(np.array([0.1, 0.9, 0.5])) == 2

    def test_select_many_matches_select(self, rng):
        xs = rng.normal(size=(30, 4))
        for rule in (ArgmaxRule(), ArgminRule(), ConstantRule(2), RandomizedRule([0.25] * 4)):
            np.testing.assert_array_equal(rule.select_many(xs), [rule.select(r) for r in xs])

    def test_randomized_is_deterministic(self, rng):
        rule = RandomizedRule([0.5, 0.5])
        x = rng.normal(size=2)
        assert rule.select(x) == rule.select(x.copy())

    def test_randomized_frequencies(self, rng):
        rule = RandomizedRule([0.2, 0.3, 0.5])
        sel = rule.select_many(rng.normal(size=(20000, 3)))
        np.testing.assert_allclose(np.bincount(sel, minlength=3) / 20000, [0.2, 0.3, 0.5], atol=0.015)

    def test_randomized_rejects_bad_probs(self):
        with pytest.raises(ValueError):
            RandomizedRule([0.5, 0.6])

    def test_constant_rule_has_no_second_best(self):
        with pytest.raises(NotImplementedError):
            ConstantRule(0).second_best(np.zeros(2))

    def test_partition(self, rng):
        xs = rng.normal(size=(100, 6))
        sel = ArgmaxRule().select_many(xs)
        assert sel.shape == (100,) and np.all((0 <= sel) & (sel < 6))


class TestDrawSample:
    def test_stores_realized_selection(self, rng):
        model = LinearGaussianModel.identity(3, 4, 2)
        rule = ArgmaxRule()
        for _ in range(20):
            s = draw_sample(model, rule, np.array([0.0, 0.1, 0.2]), rng)
            assert s.m == rule.select(model.ml_x(s.x))
            assert s.y.shape == (2, 3) and s.n_x == 4 and s.n_y == 2

    def test_rejects_wrong_length(self, rng):
        with pytest.raises(ValueError):
            draw_sample(LinearGaussianModel.identity(2, 1, 1), ArgmaxRule(), [0.0], rng)

    def test_rejects_non_finite(self, rng):
        with pytest.raises(ValueError):
            draw_sample(LinearGaussianModel.identity(2, 1, 1), ArgmaxRule(), [0.0, np.inf], rng)


class _FixedFim:
    def __init__(self, J):
        self.J = J

    def fim_joint(self, theta, m):
        return self.J


class TestDominance:
    def test_zero_gradient(self):
        assert information_dominance_check(_FixedFim(2 * np.eye(3)), None, 0, np.zeros(3)) == 0.0

    def test_scaled_identity(self):
        g = np.array([1.0, 0.0])
        assert information_dominance_check(_FixedFim(2 * np.eye(2)), None, 0, g) == pytest.approx(0.5)

    def test_matches_matrix_norm(self, rng):
        A = rng.normal(size=(4, 4))
        J = A @ A.T + np.eye(4)
        g = rng.normal(size=4)
        expected = np.linalg.norm(np.linalg.solve(J, np.outer(g, g)), 2)
        assert information_dominance_check(_FixedFim(J), None, 0, g) == pytest.approx(expected)

    def test_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            information_dominance_check(_FixedFim(np.zeros((2, 2))), None, 0, np.ones(2))

    @pytest.mark.parametrize("n_x, n_y", [(1, 1), (1, 0), (40, 10)])
    def test_gaussian_at_equal_means(self, n_x, n_y):
        model = LinearGaussianModel.identity(2, n_x, n_y)
        theta = np.zeros(2)
        g = model.selection_grad(theta, 0)
        assert information_dominance_check(model, theta, 0, g) < 1
