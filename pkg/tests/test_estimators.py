import numpy as np
import pytest

from psml.core import ArgmaxRule, ArgminRule, ConstantRule, draw_sample
from psml.estimators import (
    EstimationError,
    EstimatorConfig,
    james_stein,
    mbp_psml,
    ml_first,
    ml_joint,
    ml_split_y,
    psml,
    psml_grid,
    sa_psml,
    second_best_psml,
)
from psml.sa import SaConfig
from psml.scenarios import (
    BernoulliModel,
    LinearGaussianModel,
    SpectrumModel,
    build_knn_rule,
    inverse_square_cov,
)

TIGHT = EstimatorConfig(delta=1e-10, max_iter=200)


def gaussian2(n_x=40, n_y=10):
    return LinearGaussianModel.identity(2, n_x, n_y, inverse_square_cov(2))


def gaussian_instances(model, n, rng, lo=0.0, hi=2.0):
    for _ in range(n):
        theta = rng.uniform(lo, hi, model.dim)
        yield theta, draw_sample(model, ArgmaxRule(), theta, rng)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"delta": 0.0}, {"max_iter": 0}, {"update_mode": "newton"}, {"g_source": "oracle"},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EstimatorConfig(**kw)

    def test_defaults(self):
        cfg = EstimatorConfig()
        assert cfg.max_iter == 50 and cfg.update_mode == "linear-efficient"


class TestMlVariants:
    def test_joint_noise_free(self):
        model = LinearGaussianModel.identity(3, 4, 2)
        theta = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(ml_joint(model, np.tile(theta, (4, 1)), np.tile(theta, (2, 1)), 0), theta)

    def test_first_stage(self, rng):
        model = SpectrumModel(3, 5, 2)
        x = model.sample_first_stage(np.ones(3), rng)
        np.testing.assert_allclose(ml_first(model, x), (x**2).mean(axis=0))

    def test_split_gaussian(self, rng):
        model = LinearGaussianModel.identity(2, 3, 4)
        y = rng.normal(size=(4, 2))
        np.testing.assert_allclose(ml_split_y(model, y, 1), y.mean(axis=0))

    def test_split_bernoulli(self, rng):
        model = BernoulliModel(3, 5, 7)
        y = model.sample_second_stage(np.full(3, 0.4), 2, rng)
        est = ml_split_y(model, y, 2, coords=[2])
        assert est[2] == pytest.approx(y.mean())

    def test_split_unidentified_coordinate(self, rng):
        model = BernoulliModel(3, 5, 7)
        y = model.sample_second_stage(np.full(3, 0.4), 2, rng)
        with pytest.raises(ValueError):
            ml_split_y(model, y, 2, coords=[0])


class TestJamesStein:
    def test_full_shrinkage(self):
        np.testing.assert_allclose(james_stein([1.0, 0.0, 0.0], np.eye(3)), np.zeros(3))

    def test_vanishing_shrinkage(self):
        t = np.array([1e4, -2e4, 3e4])
        np.testing.assert_allclose(james_stein(t, np.eye(3)), t, rtol=1e-8)

    def test_arithmetic(self):
        np.testing.assert_allclose(james_stein([2.0, 0, 0, 0], np.eye(4)), [1.0, 0, 0, 0])

    def test_zero_quadratic_form_returns_ml(self):
        np.testing.assert_array_equal(james_stein(np.zeros(4), np.eye(4)), np.zeros(4))

    def test_needs_three(self):
        with pytest.raises(ValueError):
            james_stein([1.0, 2.0], np.eye(2))


class TestMbp:
    @pytest.mark.parametrize("model, theta", [
        (LinearGaussianModel.identity(3, 4, 2), np.array([0.1, 0.5, 0.3])),
        (BernoulliModel(3, 10, 4), np.array([0.4, 0.5, 0.6])),
        (SpectrumModel(3, 10, 4), np.array([1.0, 1.5, 0.7])),
    ])
    @pytest.mark.parametrize("mode", ["linear-efficient", "score-solve"])
    def test_zero_gradient_is_ml(self, model, theta, mode, rng):
        s = draw_sample(model, ArgmaxRule(), theta, rng)
        est, trace = mbp_psml(model, s.x, s.y, s.m, lambda t: np.zeros(3), EstimatorConfig(update_mode=mode))
        np.testing.assert_array_equal(est, model.ml_joint(s.x, s.y, s.m))
        assert trace.converged and trace.n_iter == 1 and trace.g_evaluations == 1

    def test_matches_grid_oracle(self, rng):
        model = gaussian2()
        for theta, s in gaussian_instances(model, 10, rng):
            est, trace = psml(model, s.x, s.y, s.m, TIGHT)
            assert trace.converged
            grid = psml_grid(model, s.x, s.y, s.m, lambda t: model.selection_logprob(t, s.m))
            np.testing.assert_allclose(est, grid, atol=1e-4)

    @pytest.mark.parametrize("model, theta, rule", [
        (gaussian2(4, 1), np.array([0.2, 0.0]), ArgmaxRule()),
        (BernoulliModel(2, 12, 4), np.array([0.5, 0.55]), ArgmaxRule()),
        (SpectrumModel(2, 60, 20), np.array([1.0, 1.1]), ArgminRule()),
    ])
    @pytest.mark.parametrize("mode", ["linear-efficient", "score-solve"])
    def test_score_equation_at_convergence(self, model, theta, rule, mode, rng):
        cfg = EstimatorConfig(delta=1e-9, max_iter=500, update_mode=mode)
        solved = 0
        for _ in range(8):
            s = draw_sample(model, rule, theta, rng)
            try:
                est, trace = psml(model, s.x, s.y, s.m, cfg)
            except EstimationError:
                # the variance score is bounded below, so a large penalty can
                # leave the score-solve step without a root
                assert mode == "score-solve" and isinstance(model, SpectrumModel)
                continue
            solved += 1
            assert trace.converged
            resid = model.grad_loglik_joint(s.x, s.y, s.m, est) - model.selection_grad(est, s.m)
            J = model.fim_joint(est, s.m)
            assert np.linalg.norm(resid) <= 10 * cfg.delta * np.linalg.norm(J, 2)
        assert solved >= 6

    def test_modes_agree_for_gaussian(self, rng):
        model = gaussian2()
        for theta, s in gaussian_instances(model, 5, rng):
            a, _ = psml(model, s.x, s.y, s.m, TIGHT)
            b, _ = psml(model, s.x, s.y, s.m, EstimatorConfig(delta=1e-10, max_iter=200, update_mode="score-solve"))
            np.testing.assert_allclose(a, b, atol=1e-8)

    def test_distances_eventually_decrease(self, rng):
        model = gaussian2(8, 2)
        cfg = EstimatorConfig(delta=1e-12, max_iter=80, track_dominance=True)
        checked = 0
        for theta, s in gaussian_instances(model, 60, rng):
            _, trace = psml(model, s.x, s.y, s.m, cfg)
            if max(trace.dominance) < 1 and trace.n_iter > 3:
                d = np.array(trace.distances)
                d = d[d > 1e-13]
                assert np.all(np.diff(d[1:]) <= 0)
                checked += 1
        assert checked > 10

    @pytest.mark.xfail(strict=True, reason="the dominance value is not a contraction rate; see notes")
    def test_contraction_at_dominance_rate(self, rng):
        # final distance <= 2 c^i initial, c = largest dominance value on the trace
        model = gaussian2(8, 2)
        cfg = EstimatorConfig(delta=1e-12, max_iter=60, track_dominance=True)
        for theta, s in gaussian_instances(model, 100, rng):
            _, trace = psml(model, s.x, s.y, s.m, cfg)
            c = max(trace.dominance)
            if c < 1 and trace.n_iter > 1:
                d = np.array(trace.distances)
                assert d[-1] <= 2 * c ** (len(d) - 1) * d[0]

    @pytest.mark.parametrize("M", [2, 3])
    def test_contraction_in_information_norm(self, M, rng):
        # the linear map's Jacobian is J^{-1}(J_x - Cov(s | selected)), whose
        # J-norm is at most rho = lambda_max(J^{-1} J_x)
        model = LinearGaussianModel.identity(M, 8, 2, inverse_square_cov(M))
        J = model.fim_joint(None, 0)
        rho = np.max(np.linalg.eigvals(np.linalg.solve(J, model.fim_x())).real)
        cfg = EstimatorConfig(delta=1e-12, max_iter=60)
        for theta, s in gaussian_instances(model, 30, rng):
            if M == 2:
                _, trace = psml(model, s.x, s.y, s.m, cfg)
            else:
                _, trace = second_best_psml(model, ArgmaxRule(), s.x, s.y, cfg)
            it = np.array(trace.iterates)
            steps = np.diff(it, axis=0)
            jn = np.sqrt(np.einsum("ni,ij,nj->n", steps, J, steps))
            ok = jn[:-1] > 1e-10
            assert np.all(jn[1:][ok] <= rho * jn[:-1][ok] * (1 + 1e-6))

    def test_non_convergence_flagged(self, rng):
        model = gaussian2()
        theta, s = next(gaussian_instances(model, 1, rng))
        est, trace = psml(model, s.x, s.y, s.m, EstimatorConfig(delta=1e-12, max_iter=1))
        assert not trace.converged and trace.n_iter == 1
        np.testing.assert_array_equal(est, trace.iterates[-1])

    def test_score_solve_failure_surfaces_trace(self, rng):
        model = SpectrumModel(2, 5, 2)
        s = draw_sample(model, ArgminRule(), np.ones(2), rng)
        with pytest.raises(EstimationError) as info:
            mbp_psml(model, s.x, s.y, s.m, lambda t: np.full(2, -1e9), EstimatorConfig(update_mode="score-solve"))
        assert len(info.value.trace.iterates) == 1

    def test_singular_fim_surfaces_trace(self, rng):
        class Broken(LinearGaussianModel):
            # fine for the closed-form ML, singular at every iterate
            def fim_joint_inv(self, theta, m):
                if theta is None:
                    return super().fim_joint_inv(theta, m)
                raise np.linalg.LinAlgError("singular")

        model = Broken(np.eye(2), np.eye(2), np.eye(2), np.eye(2), 2, 1)
        s = draw_sample(model, ArgmaxRule(), np.zeros(2), rng)
        with pytest.raises(EstimationError):
            mbp_psml(model, s.x, s.y, s.m, lambda t: np.ones(2))

    def test_bernoulli_iterates_stay_in_domain(self, rng):
        model = BernoulliModel(2, 3, 1)
        s = draw_sample(model, ArgmaxRule(), np.array([0.05, 0.04]), rng)
        est, trace = mbp_psml(model, s.x, s.y, s.m, lambda t: np.array([1e6, -1e6]))
        assert all(np.all((t >= 1e-6) & (t <= 1 - 1e-6)) for t in trace.iterates)

    def test_dominance_trace(self, rng):
        model = gaussian2()
        theta, s = next(gaussian_instances(model, 1, rng))
        _, trace = psml(model, s.x, s.y, s.m, EstimatorConfig(track_dominance=True))
        assert len(trace.dominance) == trace.g_evaluations


class TestSecondBest:
    def test_equals_full_psml_for_two(self, rng):
        model = gaussian2()
        for theta, s in gaussian_instances(model, 20, rng):
            a, _ = psml(model, s.x, s.y, s.m, TIGHT)
            b, _ = second_best_psml(model, ArgmaxRule(), s.x, s.y, TIGHT)
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_unambiguous_selection_is_ml(self, rng):
        model = LinearGaussianModel.identity(4, 40, 10)
        s = draw_sample(model, ArgmaxRule(), np.array([10.0, 0.0, 0.0, 0.0]), rng)
        est, _ = second_best_psml(model, ArgmaxRule(), s.x, s.y)
        np.testing.assert_allclose(est, model.ml_joint(s.x, s.y, s.m), atol=1e-12)

    def test_bernoulli_other_coordinates_untouched(self, rng):
        model = BernoulliModel(6, 30, 10)
        theta = np.array([0.5, 0.52, 0.5, 0.48, 0.5, 0.51])
        for _ in range(10):
            s = draw_sample(model, ArgmaxRule(), theta, rng)
            mt = ArgmaxRule().second_best(model.ml_x(s.x))
            est, _ = second_best_psml(model, ArgmaxRule(), s.x, s.y)
            ml = model.ml_joint(s.x, s.y, s.m)
            others = [k for k in range(6) if k not in (s.m, mt)]
            np.testing.assert_array_equal(est[others], ml[others])

    def test_penalty_pulls_selected_down(self, rng):
        model = SpectrumModel(5, 20, 5)
        theta = np.ones(5)
        s = draw_sample(model, ArgminRule(), theta, rng)
        est, _ = second_best_psml(model, ArgminRule(), s.x, s.y)
        # min-energy selection biases the chosen variance low; PSML raises it
        assert est[s.m] > model.ml_joint(s.x, s.y, s.m)[s.m]

    def test_requires_second_best_capability(self, rng):
        model = gaussian2()
        s = draw_sample(model, ArgmaxRule(), np.zeros(2), rng)
        with pytest.raises(ValueError):
            second_best_psml(model, ConstantRule(0), s.x, s.y)


class TestSa:
    def test_converges_to_analytic_psml(self, rng):
        model = gaussian2()
        for theta, s in gaussian_instances(model, 3, rng):
            exact, _ = psml(model, s.x, s.y, s.m, TIGHT)
            est, trace = sa_psml(model, ArgmaxRule(), s.x, s.y, EstimatorConfig(delta=1e-6),
                                 SaConfig(K=100_000), rng)
            np.testing.assert_allclose(est, exact, atol=0.02)
            assert trace.g_evaluations == trace.n_iter

    def test_constant_rule_returns_ml(self, rng):
        model = LinearGaussianModel.identity(3, 10, 5)
        s = draw_sample(model, ConstantRule(1), np.zeros(3), rng)
        K = 10_000
        est, _ = sa_psml(model, ConstantRule(1), s.x, s.y, EstimatorConfig(), SaConfig(K=K), rng)
        ml = model.ml_joint(s.x, s.y, 1)
        tol = 5 * np.sqrt(np.diag(model.fim_joint_inv(None, 1))) * np.sqrt(model.n_x / K)
        assert np.all(np.abs(est - ml) <= tol)

    def test_black_box_knn(self, rng):
        model = SpectrumModel(4, 40, 10)
        theta = np.array([0.9, 0.95, 0.95, 1.0])
        rule = build_knn_rule(model, theta, size=200, k=5, rng=rng)
        s = draw_sample(model, rule, theta, rng)
        est, trace = sa_psml(model, rule, s.x, s.y, EstimatorConfig(), SaConfig(K=500), rng)
        assert est.shape == (4,) and np.all(np.isfinite(est)) and np.all(est > 0)
        assert trace.g_evaluations >= 1

    def test_common_random_numbers_reproducible(self):
        model = gaussian2()
        s = draw_sample(model, ArgmaxRule(), np.array([0.5, 0.4]), np.random.default_rng(0))
        cfg = SaConfig(K=2000, common_random_numbers=True)
        a, ta = sa_psml(model, ArgmaxRule(), s.x, s.y, TIGHT, cfg, np.random.default_rng(5))
        b, _ = sa_psml(model, ArgmaxRule(), s.x, s.y, TIGHT, cfg, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)
        # a fixed sample makes the map deterministic, so it settles
        assert ta.converged


class TestGrid:
    def test_no_penalty_is_ml(self, rng):
        model = gaussian2()
        theta, s = next(gaussian_instances(model, 1, rng))
        np.testing.assert_allclose(psml_grid(model, s.x, s.y, s.m), model.ml_joint(s.x, s.y, s.m), atol=1e-9)

    def test_single_parameter(self, rng):
        model = LinearGaussianModel.identity(1, 3, 2)
        s = draw_sample(model, ArgmaxRule(), np.array([0.4]), rng)
        est = psml_grid(model, s.x, s.y, 0, lambda t: model.selection_logprob(t, 0))
        np.testing.assert_allclose(est, model.ml_joint(s.x, s.y, 0), atol=1e-9)

    def test_too_many_parameters(self, rng):
        model = LinearGaussianModel.identity(4, 1, 1)
        s = draw_sample(model, ArgmaxRule(), np.zeros(4), rng)
        with pytest.raises(ValueError):
            psml_grid(model, s.x, s.y, s.m)
