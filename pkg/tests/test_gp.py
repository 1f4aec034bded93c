import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import InputError, NumericError, UnsupportedCaseError
from gp import (OptimizerConfig, aggregated_fit_predict, aggregated_models, aggregated_predict, fit,
                log_marginal_likelihood, optimize_hyperparams, predict, predict_many)
from kernels import KernelSpec, gram
from measures import from_samples

RBF = KernelSpec("RBF")


def points(values):
    return [np.array([float(v)]) for v in values]


def sample_gp(x, ell, noise_var, seed):
    rng = np.random.default_rng(seed)
    K = np.exp(-0.5 * (x[:, None] - x[None, :]) ** 2 / ell ** 2)
    L = np.linalg.cholesky(K + 1e-8 * np.eye(len(x)))
    return L @ rng.standard_normal(len(x)) + np.sqrt(noise_var) * rng.standard_normal(len(x))


class TestFit:
    def test_single_point(self):
        model = fit(points([0.0]), [2.0], RBF, 1.0)
        assert_allclose(model.alpha, [1.0])

    def test_zero_response(self):
        model = fit(points([0.0, 1.0, 2.5]), [0.0, 0.0, 0.0], RBF, 0.1)
        assert np.all(model.alpha == 0.0)

    def test_residual_and_factor(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(30, 30))
        K = A @ A.T / 30
        y = rng.normal(size=30)
        model = fit(points(range(30)), y, RBF, 0.05, gram_entries=K)
        system = K + 0.05 * np.eye(30)
        assert np.linalg.norm(system @ model.alpha - y) / np.linalg.norm(y) <= 1e-8
        assert np.linalg.norm(model.chol @ model.chol.T - system) <= 1e-8 * np.linalg.norm(K)

    def test_jitter_escalation(self):
        K = np.array([[1.0, 1.0 + 1e-6], [1.0 + 1e-6, 1.0]])
        model = fit(points([0, 1]), [1.0, -1.0], RBF, 1e-10, gram_entries=K, verbose=False)
        assert model.jitter_escalations >= 1
        assert 0.0 < model.jitter <= 1e-2

    def test_irreparable_matrix(self):
        K = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NumericError):
            fit(points([0, 1]), [1.0, 0.0], RBF, 1e-8, gram_entries=K, verbose=False)

    @pytest.mark.parametrize("y, noise", [([np.nan], 1.0), ([1.0], 0.0), ([1.0, 2.0], 1.0)])
    def test_invalid(self, y, noise):
        with pytest.raises(InputError):
            fit(points([0.0]), y, RBF, noise)


class TestPredict:
    def test_single_point(self):
        s = predict(fit(points([0.0]), [2.0], RBF, 1.0), np.array([0.0]))
        assert s.mean == pytest.approx(1.0)
        assert s.variance == pytest.approx(0.5)
        assert s.total_variance == pytest.approx(1.5)

    def test_interpolation_limit(self):
        x = np.arange(5, dtype=float)
        y = np.sin(x)
        model = fit(points(x), y, KernelSpec("RBF", base_lengthscale=0.5), 1e-12)
        for xi, yi in zip(x, y):
            s = predict(model, np.array([xi]))
            assert s.mean == pytest.approx(yi, abs=1e-4)
            assert s.variance <= 1e-6

    def test_prior_reversion(self):
        model = fit(points([0.0, 1.0]), [1.0, -2.0], KernelSpec("RBF", amplitude=2.0), 0.1)
        s = predict(model, np.array([1e3]))
        assert s.mean == pytest.approx(0.0, abs=1e-12)
        assert s.variance == pytest.approx(2.0)

    def test_variance_below_prior(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-3, 3, size=15)
        model = fit(points(x), np.cos(x), RBF, 0.01)
        for s in predict_many(model, points(rng.uniform(-4, 4, size=20))):
            assert 0.0 <= s.variance <= 1.0 + 1e-8

    def test_variance_nonincreasing_in_training_size(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-2, 2, size=12)
        y = np.sin(2 * x)
        tests = points(np.linspace(-2.5, 2.5, 9))
        previous = None
        for n in range(1, 13):
            current = np.array([s.variance for s in predict_many(fit(points(x[:n]), y[:n], RBF, 0.05), tests)])
            if previous is not None:
                assert np.all(current <= previous + 1e-8)
            previous = current

    def test_mean_linear_in_y(self):
        x = points([0.0, 0.7, 1.9])
        y1, y2 = np.array([1.0, 2.0, -1.0]), np.array([0.5, -0.3, 0.2])
        t = np.array([0.4])
        m1 = predict(fit(x, y1, RBF, 0.1), t).mean
        m2 = predict(fit(x, y2, RBF, 0.1), t).mean
        m12 = predict(fit(x, 2 * y1 + 3 * y2, RBF, 0.1), t).mean
        assert m12 == pytest.approx(2 * m1 + 3 * m2, abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(3)
        clouds = [from_samples(rng.normal(loc=rng.uniform(-1, 1), size=(5, 1))) for _ in range(8)]
        y = rng.normal(size=8)
        spec = KernelSpec("PWA", scales=(0.7,))
        order = rng.permutation(8)
        test = from_samples(rng.normal(size=(5, 1)))
        a = predict(fit(clouds, y, spec, 0.1), test)
        b = predict(fit([clouds[i] for i in order], y[order], spec, 0.1), test)
        assert a.mean == pytest.approx(b.mean, abs=1e-10)
        assert a.variance == pytest.approx(b.variance, abs=1e-10)

    def test_vanishing_scale_forgets_inputs(self):
        rng = np.random.default_rng(4)
        clouds = [from_samples(rng.normal(loc=rng.uniform(-2, 2), size=(6, 1))) for _ in range(6)]
        y = rng.normal(size=6)
        spec = KernelSpec("PWA", scales=(1e-12,))
        model = fit(clouds, y, spec, 0.1)
        tests = [from_samples(rng.normal(loc=c, size=(6, 1))) for c in (-10.0, 0.0, 10.0)]
        means = [s.mean for s in predict_many(model, tests)]
        expected = y.sum() / (6 + 0.1)
        assert_allclose(means, expected, atol=1e-8)


class TestLogMarginalLikelihood:
    def test_single_point(self):
        model = fit(points([0.0]), [0.0], RBF, 1.0)
        assert log_marginal_likelihood(model) == pytest.approx(-1.26551, abs=1e-5)

    def test_scaling_response_decreases(self):
        x = points([0.0, 0.5, 1.7])
        y = np.array([1.0, -0.5, 0.8])
        assert log_marginal_likelihood(fit(x, 10 * y, RBF, 0.1)) < log_marginal_likelihood(fit(x, y, RBF, 0.1))

    def test_dense_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            x = rng.uniform(-3, 3, size=20)
            y = rng.normal(size=20)
            spec = KernelSpec("Matern52", amplitude=1.3, base_lengthscale=0.8)
            model = fit(points(x), y, spec, 0.2)
            A = gram(points(x), spec).entries + 0.2 * np.eye(20)
            _, logdet = np.linalg.slogdet(A)
            dense = -0.5 * y @ np.linalg.inv(A) @ y - 0.5 * logdet - 10 * np.log(2 * np.pi)
            assert log_marginal_likelihood(model) == pytest.approx(dense, abs=1e-8)


class TestOptimizer:
    def test_zero_iterations_returns_initialization(self):
        x = points(np.linspace(0, 5, 12))
        y = np.sin(np.linspace(0, 5, 12))
        result = optimize_hyperparams(x, y, RBF, OptimizerConfig(restarts=1, max_iter=0))
        assert result.lml == result.initial_objectives[0]
        assert result.restart_objectives == result.initial_objectives
        assert result.spec.amplitude == pytest.approx(np.var(y))
        assert result.noise == pytest.approx(0.1 * np.var(y))

    def test_best_of_restarts(self):
        rng = np.random.default_rng(6)
        clouds = [from_samples(rng.normal(loc=m, scale=0.2, size=(6, 1))) for m in np.linspace(0, 1, 10)]
        y = np.sin(4 * np.linspace(0, 1, 10))
        result = optimize_hyperparams(clouds, y, KernelSpec("PWA"), OptimizerConfig(restarts=3, max_iter=60))
        assert len(result.initial_objectives) == 3
        for final, initial in zip(result.restart_objectives, result.initial_objectives):
            assert final >= initial
        assert result.lml >= max(result.initial_objectives)
        assert result.lml == max(result.restart_objectives)

    def test_deterministic(self):
        x = points(np.linspace(-1, 1, 10))
        y = np.linspace(-1, 1, 10) ** 2
        config = OptimizerConfig(restarts=2, max_iter=40, seed=3)
        a = optimize_hyperparams(x, y, KernelSpec("Matern32"), config)
        b = optimize_hyperparams(x, y, KernelSpec("Matern32"), config)
        assert a.lml == b.lml
        assert a.spec.base_lengthscale == b.spec.base_lengthscale

    def test_recovers_lengthscale(self):
        x = np.linspace(0, 10, 40)
        estimates = []
        for seed in range(5):
            y = sample_gp(x, 1.0, 0.01, seed)
            result = optimize_hyperparams(points(x), y, RBF, OptimizerConfig(restarts=3, max_iter=200, seed=seed))
            estimates.append(result.spec.base_lengthscale)
        assert 0.5 <= np.median(estimates) <= 2.0

    def test_bad_config(self):
        with pytest.raises(InputError):
            OptimizerConfig(restarts=0)
        with pytest.raises(InputError):
            OptimizerConfig(max_iter=-1)


class TestAggregated:
    def test_single_replicate_matches_point_gp(self):
        rng = np.random.default_rng(7)
        train = [from_samples(rng.normal(size=(1, 1))) for _ in range(6)]
        test = [from_samples(rng.normal(size=(1, 1))) for _ in range(3)]
        y = rng.normal(size=6)
        agg = aggregated_fit_predict(train, y, RBF, 0.1, test)
        single = predict_many(fit([c.points[0] for c in train], y, RBF, 0.1), [c.points[0] for c in test])
        for a, s in zip(agg, single):
            assert a.mean == pytest.approx(s.mean, abs=1e-12)
            assert a.variance == pytest.approx(s.variance, abs=1e-12)

    def test_identical_replicates(self):
        train = [from_samples([[x], [x], [x]]) for x in (0.0, 0.8, 1.5)]
        test = [from_samples([[0.4], [0.4], [0.4]])]
        y = [1.0, 0.0, -1.0]
        agg = aggregated_fit_predict(train, y, RBF, 0.1, test)[0]
        single = predict(fit(points([0.0, 0.8, 1.5]), y, RBF, 0.1), np.array([0.4]))
        assert agg.mean == pytest.approx(single.mean, abs=1e-12)
        assert agg.variance == pytest.approx(single.variance, abs=1e-12)

    def test_total_variance(self):
        # replicate 0 sees the test sample at A's location, replicate 1 at B's
        train = [from_samples([[0.0], [100.0]]), from_samples([[100.0], [0.0]])]
        test = [from_samples([[0.0], [0.0]])]
        agg = aggregated_fit_predict(train, [0.0, 4.0], RBF, 1.0, test)[0]
        assert agg.mean == pytest.approx(1.0)
        assert agg.variance == pytest.approx(0.5 + 1.0)

    def test_unequal_replicates(self):
        with pytest.raises(UnsupportedCaseError):
            aggregated_fit_predict([from_samples([[0.0], [1.0]])], [1.0], RBF, 0.1, [from_samples([[0.0]])])

    def test_needs_point_kernel(self):
        with pytest.raises(InputError):
            aggregated_fit_predict([from_samples([[0.0]])], [1.0], KernelSpec("PWA"), 0.1, [from_samples([[0.0]])])

    def test_models_are_reusable(self):
        rng = np.random.default_rng(8)
        train = [from_samples(rng.normal(size=(3, 1))) for _ in range(5)]
        test = [from_samples(rng.normal(size=(3, 1))) for _ in range(2)]
        y = rng.normal(size=5)
        models = aggregated_models(train, y, RBF, 0.2)
        assert len(models) == 3
        for a, b in zip(aggregated_predict(models, test), aggregated_fit_predict(train, y, RBF, 0.2, test)):
            assert a == b
        with pytest.raises(UnsupportedCaseError):
            aggregated_predict(models, [from_samples([[0.0], [1.0]])])
