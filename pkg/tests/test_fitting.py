import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixem.errors import InvalidArgumentError
from mixem.experiment import generate_initialization, generate_instance
from mixem.fitting import (
    FitConfig,
    LambdaSchedule,
    fit,
    naive_em_step,
    regularized_em_step,
    regularized_objective,
    surrogate,
    write_trace_csv,
)
from mixem.mixture import MixtureModel, center_samples, log_likelihood, sample


def instance(K, d, seed, n=2000):
    model = generate_instance(K, d, seed)
    data, _ = center_samples(sample(model, n, seed + 1))
    return model, data


def grad_fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestSteps:
    def test_k1_sample_mean(self):
        x = np.array([[0.5], [1.5], [4.0]])
        assert naive_em_step([[10.0]], x).tolist() == [[x.mean()]]

    @pytest.mark.parametrize("M", [0.0, 0.3, 1.0, 7.0])
    def test_k1_regularized(self, M):
        x = np.array([[0.5, -1.0], [1.5, 2.0], [4.0, 0.25]])
        got = regularized_em_step([[3.0, -3.0]], x, M)
        np.testing.assert_allclose(got, x.mean(axis=0, keepdims=True) / (M + 1), rtol=1e-13, atol=1e-15)

    def test_symmetric_configuration(self):
        x = np.array([[-2.0], [2.0]])
        naive = naive_em_step([[-1.0], [1.0]], x)
        assert naive[0, 0] == pytest.approx(-naive[1, 0], abs=1e-15)
        assert naive[1, 0] > 0
        # The penalty gradient vanishes when the means sum to zero, but the
        # proximal part of the update still pulls towards the current means:
        # mu' = (E[x w] + M K mu) / (M K + E[w]), a convex combination.
        reg = regularized_em_step([[-1.0], [1.0]], x, 0.7)
        assert reg[0, 0] == pytest.approx(-reg[1, 0], abs=1e-15)
        ew = 0.5
        expected = (ew * naive[1, 0] + 0.7 * 2 * 1.0) / (0.7 * 2 + ew)
        assert reg[1, 0] == pytest.approx(expected, rel=1e-14)
        assert 1.0 < reg[1, 0] < naive[1, 0]

    def test_symmetric_fixed_point_shared(self):
        # at a naive-EM fixed point with zero-sum means every M leaves it in place
        x = np.array([[-2.0], [2.0]])
        res = fit([[-1.0], [1.0]], x, FitConfig("naive", max_iters=500, param_tol=1e-14))
        for M in (0.1, 1.0, 10.0):
            np.testing.assert_allclose(regularized_em_step(res.means, x, M), res.means, atol=1e-12)

    def test_ground_truth_is_near_fixed(self):
        model = MixtureModel("gaussian", [[-5.0], [5.0]])
        s = sample(model, 100_000, 11)
        out = naive_em_step(model.means, s)
        assert np.max(np.abs(out - model.means)) < 0.05

    def test_m0_bit_identical(self):
        _, data = instance(4, 2, 5)
        init = generate_initialization(4, 2, 6)
        assert np.array_equal(naive_em_step(init, data), regularized_em_step(init, data, 0.0))

    def test_jacobi_update_matches_formula(self):
        _, data = instance(3, 2, 8, n=300)
        x = data.data
        mu = generate_initialization(3, 2, 9)
        M = 0.4
        logw = x @ mu.T - 0.5 * np.sum(mu**2, axis=1)
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        Ew = w.mean(axis=0)
        Exw = (w.T @ x) / len(x)
        expected = (Exw + M * 3 * mu - M * mu.sum(axis=0)) / (M * 3 + Ew)[:, None]
        np.testing.assert_allclose(regularized_em_step(mu, data, M), expected, rtol=1e-12, atol=1e-12)

    def test_empty_samples(self):
        with pytest.raises(InvalidArgumentError):
            naive_em_step([[0.0]], np.zeros((0, 1)))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            naive_em_step([[0.0, 1.0]], np.zeros((3, 1)))

    def test_negative_M(self):
        with pytest.raises(InvalidArgumentError):
            regularized_em_step([[0.0]], np.zeros((3, 1)), -1.0)


class TestObjective:
    def test_m0_is_loglik(self):
        _, data = instance(3, 1, 1, n=200)
        mu = generate_initialization(3, 1, 2)
        ll = log_likelihood(MixtureModel("gaussian", mu), data)
        assert regularized_objective(mu, data, 0.0) == ll

    def test_zero_sum_means(self):
        _, data = instance(2, 1, 1, n=200)
        mu = np.array([[-1.3], [1.3]])
        ll = log_likelihood(MixtureModel("gaussian", mu), data)
        for M in (0.1, 1.0, 50.0):
            assert regularized_objective(mu, data, M) == pytest.approx(ll, abs=1e-15)

    def test_penalty_arithmetic(self):
        x = np.array([[0.3], [1.7], [2.2]])
        mu = np.array([[1.0], [2.0]])
        ll = log_likelihood(MixtureModel("gaussian", mu), x)
        assert regularized_objective(mu, x, 2.0) == pytest.approx(ll - 9.0, abs=1e-14)


class TestSurrogate:
    def test_tight_at_anchor(self):
        _, data = instance(3, 2, 21, n=500)
        a = generate_initialization(3, 2, 22)
        for M in (0.0, 0.1, 1.0):
            assert surrogate(a, a, data, M) == pytest.approx(regularized_objective(a, data, M), abs=1e-12)

    def test_sandwich(self):
        rng = np.random.default_rng(31)
        _, data = instance(3, 2, 23, n=500)
        for _ in range(40):
            a = generate_initialization(3, 2, int(rng.integers(1 << 30)))
            probe = a + rng.normal(scale=rng.choice([0.01, 0.3, 2.0]), size=a.shape)
            M = float(rng.choice([0.0, 0.01, 0.1, 1.0]))
            assert surrogate(probe, a, data, M) <= regularized_objective(probe, data, M) + 1e-9

    @pytest.mark.parametrize("M", [0.01, 0.1, 1.0])
    def test_step_maximizes_surrogate(self, M):
        _, data = instance(4, 2, 41, n=800)
        a = generate_initialization(4, 2, 42)
        star = regularized_em_step(a, data, M)
        g = grad_fd(lambda m: surrogate(m, a, data, M), star)
        assert np.linalg.norm(g) <= 1e-8 * (1 + np.linalg.norm(a))
        # and it is a maximum, not just a critical point
        assert surrogate(star, a, data, M) >= surrogate(star + 0.01, a, data, M)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            surrogate(np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((4, 1)), 0.1)


class TestFit:
    def test_k1_converges_to_mean(self):
        x = np.array([[1.0], [2.0], [6.0]])
        res = fit([[0.0]], x, FitConfig("naive"))
        assert res.converged
        assert res.means[0, 0] == pytest.approx(3.0, abs=1e-15)
        assert res.iterations_used == 2  # the second step has size 0
        assert len(res.trace) == res.iterations_used

    @pytest.mark.parametrize("K,d,seed", [(2, 1, 1), (3, 3, 2), (5, 1, 3), (5, 3, 4)])
    def test_naive_loglik_nondecreasing(self, K, d, seed):
        _, data = instance(K, d, seed)
        res = fit(generate_initialization(K, d, seed + 50), data, FitConfig("naive", max_iters=300))
        seq = np.array([res.initial_loglik] + res.trace.loglik)
        assert np.min(np.diff(seq)) >= -1e-9

    @pytest.mark.parametrize("M", [0.01, 0.1, 1.0])
    def test_regularized_objective_nondecreasing(self, M):
        _, data = instance(3, 3, 7)
        init = generate_initialization(3, 3, 8)
        res = fit(init, data, FitConfig("regularized", M=M, max_iters=300))
        seq = np.array([regularized_objective(init, data, M)] + res.trace.objective)
        assert np.min(np.diff(seq)) >= -1e-9

    def test_trace_fields(self):
        _, data = instance(3, 1, 9, n=500)
        res = fit(generate_initialization(3, 1, 10), data, FitConfig("regularized", M=0.5, max_iters=20))
        assert res.trace.lam == [0.5] * len(res.trace)
        assert res.trace.moment_residual[-1] == pytest.approx(abs(res.means.sum()), abs=1e-14)
        assert res.lambda_draws == []

    def test_m0_identical_sequences(self):
        _, data = instance(3, 2, 12, n=500)
        init = generate_initialization(3, 2, 13)
        a = fit(init, data, FitConfig("naive", max_iters=40, param_tol=0))
        b = fit(init, data, FitConfig("regularized", M=0.0, max_iters=40, param_tol=0))
        assert np.array_equal(a.means, b.means)
        assert a.trace.loglik == b.trace.loglik and a.trace.max_step == b.trace.max_step

    def test_constant_schedule_matches_regularized(self):
        _, data = instance(3, 2, 14, n=500)
        init = generate_initialization(3, 2, 15)
        a = fit(init, data, FitConfig("regularized", M=0.3, max_iters=50))
        b = fit(init, data, FitConfig("stochastic", schedule=LambdaSchedule("constant", value=0.3), max_iters=50))
        np.testing.assert_allclose(b.means, a.means, rtol=0, atol=1e-12)
        assert b.lambda_draws == [0.3] * b.iterations_used

    def test_stochastic_deterministic(self):
        _, data = instance(4, 1, 16, n=500)
        init = generate_initialization(4, 1, 17)
        cfg = FitConfig("stochastic", max_iters=60, seed=99)
        a, b = fit(init, data, cfg), fit(init, data, cfg)
        assert np.array_equal(a.means, b.means)
        assert a.lambda_draws == b.lambda_draws
        assert len(a.lambda_draws) == a.iterations_used
        assert all(0.01 <= v <= 1.0 for v in a.lambda_draws)
        c = fit(init, data, cfg.with_(seed=100))
        assert c.lambda_draws != a.lambda_draws

    @pytest.mark.parametrize(
        "cfg",
        [FitConfig("naive", max_iters=30), FitConfig("regularized", M=0.2, max_iters=30),
         FitConfig("stochastic", max_iters=30, seed=5)],
    )
    def test_permutation_equivariance(self, cfg):
        _, data = instance(4, 2, 18, n=400)
        init = generate_initialization(4, 2, 19)
        perm = [2, 0, 3, 1]
        a = fit(init, data, cfg)
        b = fit(init[perm], data, cfg)
        np.testing.assert_allclose(b.means, a.means[perm], rtol=0, atol=1e-10)

    def test_degenerate_component_frozen(self):
        x = np.array([[-1.0], [1.0]])
        res = fit([[0.0], [1e4]], x, FitConfig("naive", max_iters=3))
        assert res.degenerate_components == [1]
        assert res.means[1, 0] == 1e4

    def test_degenerate_with_penalty_is_fine(self):
        # lam K keeps the denominator positive
        x = np.array([[-1.0], [1.0]])
        res = fit([[0.0], [1e4]], x, FitConfig("regularized", M=0.1, max_iters=3))
        assert res.degenerate_components == []
        assert res.means[1, 0] < 1e4

    def test_trace_csv(self, tmp_path):
        _, data = instance(2, 1, 20, n=100)
        res = fit(generate_initialization(2, 1, 21), data, FitConfig("stochastic", max_iters=5, seed=3))
        write_trace_csv(res, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "iter,loglik,objective,moment_residual,max_step,lambda"
        assert len(lines) == res.iterations_used + 1
        assert float(lines[1].split(",")[5]) == res.lambda_draws[0]


class TestConfig:
    def test_default_schedule(self):
        cfg = FitConfig("stochastic")
        assert cfg.schedule == LambdaSchedule("loguniform", 0.01, 1.0)
        assert cfg.label == "stochastic(loguniform:0.01,1)"

    @pytest.mark.parametrize("kw", [{"algorithm": "gibbs"}, {"max_iters": 0}, {"M": -0.1}, {"param_tol": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgumentError):
            FitConfig(**kw)

    @pytest.mark.parametrize("text", ["loguniform:0.01,1", "uniform:0,2", "constant:0.5"])
    def test_schedule_parse_round_trip(self, text):
        s = LambdaSchedule.parse(text)
        assert LambdaSchedule.parse(str(s)) == s
        assert LambdaSchedule.from_dict(s.to_dict()) == s

    @pytest.mark.parametrize("text", ["loguniform:0,1", "uniform:2,1", "constant:-1", "beta:1,2", "uniform:1"])
    def test_schedule_invalid(self, text):
        with pytest.raises(InvalidArgumentError):
            LambdaSchedule.parse(text)

    def test_config_round_trip(self):
        cfg = FitConfig("stochastic", schedule=LambdaSchedule("uniform", 0.0, 3.0), max_iters=7, seed=4)
        assert FitConfig.from_dict(cfg.to_dict()) == cfg

    @given(st.integers(0, 2**63), st.sampled_from(["loguniform:0.01,1", "uniform:0.5,2"]))
    @settings(max_examples=30)
    def test_draws_in_range(self, seed, text):
        from mixem.rng import make_rng

        s = LambdaSchedule.parse(text)
        rng = make_rng(seed)
        assert all(s.lo <= s.draw(rng) <= s.hi for _ in range(20))
