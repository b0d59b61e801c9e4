"""Policy-computation phase: shaping, on-policy collection, decoder updates."""
import numpy as np
import pytest

from latentlqr import (Phase3Config, SystemSpec, SysIdEstimates, ValidationError,
                       build_noise_shaping, collect_onpolicy, compute_policy,
                       decoder_update, fit_residual_regressors, learn_initial_state,
                       make_benchmark_instance, rollout, solve_dare)
from latentlqr.phase3 import DecoderStack, _split, default_clip_radius
from latentlqr.regression import FittedRegressor
from latentlqr.system import PolicyDef

from helpers import truth_only


def scalar_pieces(a=0.5, sw=1.0, s0=1.0):
    spec = SystemSpec(a=[[a]], b=[[1.0]], q=[[1.0]], r=[[1.0]], sigma_w=[[sw]], sigma_0=[[s0]])
    _, emission, cls = make_benchmark_instance("scalar-identity")
    est = SysIdEstimates(a_hat=spec.a, b_hat=spec.b, sigma_w_hat=spec.sigma_w, q_hat=spec.q)
    return spec, emission, cls, est


def stack_for(spec, est, b_bar=50.0):
    sol = solve_dare(est.a_hat, est.b_hat, est.q_hat, spec.r)
    return DecoderStack(a_hat=est.a_hat, b_hat=est.b_hat, k_gain=sol.k, p_hat=sol.p,
                        b_bar=b_bar)


class TestNoiseShaping:
    def test_scalar_direct(self):
        shap = build_noise_shaping([[0.0]], [[1.0]], [[1.0]], sigma=1.0, kappa=1)
        assert abs(shap.m_k[0][0, 0] - 0.5) < 1e-12

    def test_scalar_limit(self):
        shap = build_noise_shaping([[0.0]], [[1.0]], [[1.0]], sigma=1e-4, kappa=1)
        assert abs(shap.m_k[0][0, 0] / 1e-8 - shap.m_bar[0, 0]) < 1e-3
        assert abs(shap.lambda_m - 1.0) < 1e-12

    def test_block_assembly(self):
        a = np.array([[0.5]])
        shap = build_noise_shaping(a, [[1.0]], [[1.0]], sigma=0.7, kappa=2)
        blocks = [shap.m_k[0], shap.m_k[1] @ a]
        assert np.array_equal(shap.big_m, np.vstack(blocks))
        # M_2 against an independent hand computation
        c2 = np.array([[0.5, 1.0]])
        w2 = np.array([[1.0 + 0.25]])
        m2 = c2.T @ np.linalg.inv(c2 @ c2.T + w2 / 0.49)
        assert np.allclose(shap.m_k[1], m2, atol=1e-12)

    def test_singular_noise_rejected(self):
        from latentlqr.errors import NumericalError

        with pytest.raises(NumericalError):
            build_noise_shaping([[0.5]], [[1.0]], [[0.0]], sigma=1.0, kappa=1)


class TestCollectOnPolicy:
    def test_t0_is_pure_gaussian(self):
        spec, emission, cls, est = scalar_pieces()
        stack = stack_for(spec, est)
        cfg = Phase3Config(n_op=50, sigma=0.5, t_horizon=1, kappa=1, r_op=8.0)
        half1, half2 = collect_onpolicy(spec, emission, stack, 0, cfg, seed=3)
        assert np.array_equal(half1.inputs, half1.injected)
        assert half1.n_traj == half2.n_traj == 50

    def test_deterministic_quiet_run(self):
        spec = SystemSpec(a=[[0.5]], b=[[1.0]], q=[[1.0]], r=[[1.0]],
                          sigma_w=[[0.0]], sigma_0=[[0.0]])
        _, emission, cls = make_benchmark_instance("scalar-identity")
        est = SysIdEstimates(a_hat=spec.a, b_hat=spec.b, sigma_w_hat=[[1.0]], q_hat=spec.q)
        stack = stack_for(spec, est)
        policy = PolicyDef.gain_decoder(stack.k_gain, stack, sigma=0.0)
        batch = rollout(spec, emission, policy, horizon=3, n_traj=4, base_seed=0)
        assert np.allclose(batch.states, 0.0)

    def test_injected_covariance(self):
        spec, emission, cls, est = scalar_pieces()
        stack = stack_for(spec, est)
        cfg = Phase3Config(n_op=50_000, sigma=0.4, t_horizon=1, kappa=1, r_op=8.0)
        half1, half2 = collect_onpolicy(spec, emission, stack, 0, cfg, seed=4)
        nu = np.vstack([half1.injected[:, 0], half2.injected[:, 0]])
        var = float(np.mean(nu**2))
        assert abs(var - 0.16) <= 0.03 * 0.16


class TestDecoderStack:
    def test_exact_telescoping(self):
        spec, emission, cls, est = scalar_pieces()
        stack = stack_for(spec, est)
        ident = FittedRegressor(candidate_index=0, m=np.eye(1), empirical_loss=0.0,
                                decoder_class=truth_only(cls))
        decoder_update(ident, stack)
        decoder_update(ident, stack)
        batch = rollout(spec, emission, PolicyDef.open_loop_gaussian(1.0),
                        horizon=2, n_traj=6, base_seed=1)
        vals = stack.values_all(batch.observations, 2)
        assert np.allclose(vals[:, 0], 0.0)
        # with h = f_star, A-hat = A and no initial pieces the update telescopes
        # to f(y_1) - A f(y_0), and at t=2 to exactly f(y_2)
        expected1 = batch.states[:, 1] - batch.states[:, 0] @ spec.a.T
        assert np.allclose(vals[:, 1], expected1, atol=1e-10)
        expected2 = batch.states[:, 2] - (batch.states[:, 0] @ spec.a.T @ spec.a.T)
        assert np.allclose(vals[:, 2], expected2, atol=1e-10)

    def test_clip_semantics(self):
        spec, emission, cls, est = scalar_pieces()
        stack = stack_for(spec, est, b_bar=5.0)
        tilde = np.array([[3.0, 4.0], [3.0, 4.0]])
        kept = stack._clip(tilde.copy(), t=1)
        assert np.allclose(kept, tilde)
        stack.b_bar = 4.0
        zeroed = stack._clip(tilde.copy(), t=1)
        assert np.allclose(zeroed, 0.0)
        assert stack.clip_counts[1][0] == 2
        assert stack.clip_events[0][0] == 1
        assert stack.clip_events[0][2] == pytest.approx(5.0)

    def test_depth_zero_beyond_stack(self):
        spec, emission, cls, est = scalar_pieces()
        stack = stack_for(spec, est)
        batch = rollout(spec, emission, PolicyDef.open_loop_gaussian(1.0),
                        horizon=3, n_traj=2, base_seed=2)
        vals = stack.values_all(batch.observations, 3)
        assert np.allclose(vals, 0.0)


class TestResidualRegression:
    def test_kappa1_stack_equals_single_block(self):
        spec, emission, cls, est = scalar_pieces()
        stack = stack_for(spec, est)
        shap = build_noise_shaping(est.a_hat, est.b_hat, est.sigma_w_hat, sigma=1.0, kappa=1)
        assert np.array_equal(shap.big_m, shap.m_k[0])
        cfg = Phase3Config(n_op=5_000, sigma=1.0, t_horizon=1, kappa=1, r_op=8.0)
        halves = collect_onpolicy(spec, emission, stack, 0, cfg, seed=5)
        first, h_t = fit_residual_regressors(halves, stack, shap, 0, cfg, truth_only(cls))
        assert len(first) == 1
        # the stacked second stage refits the same increment map
        assert abs(h_t.m[0, 0] - first[0].m[0, 0]) <= 0.15

    def test_scalar_bayes_oracle(self):
        # nu_t on y_{t+1}: population map 0.5 x_{t+1} when A=0, B=1, Sw=1, sigma=1
        spec, emission, cls, est = scalar_pieces(a=0.0)
        stack = stack_for(spec, est)
        shap = build_noise_shaping(est.a_hat, est.b_hat, est.sigma_w_hat, sigma=1.0, kappa=1)
        cfg = Phase3Config(n_op=100_000, sigma=1.0, t_horizon=1, kappa=1, r_op=8.0)
        halves = collect_onpolicy(spec, emission, stack, 0, cfg, seed=6)
        first, _ = fit_residual_regressors(halves, stack, shap, 0, cfg, truth_only(cls))
        # fitted composite map on y_{t+1} is M_1 * m; with A-hat=0 the y_t term drops
        composite = shap.m_k[0][0, 0] * first[0].m[0, 0]
        assert abs(composite - 0.5) <= 0.05


class TestInitialState:
    def test_covariance_guard(self):
        # a zero noise regressor plus negligible exploration collapses the
        # fitted covariance, which must error instead of inverting
        spec, emission, cls, est = scalar_pieces(a=0.0)
        from latentlqr.errors import IllConditionedCovarianceError

        cfg = Phase3Config(n_op=500, sigma=1e-6, t_horizon=1, kappa=1, r_op=8.0)
        zero_reg = FittedRegressor(candidate_index=0, m=np.zeros((1, 1)), empirical_loss=0.0,
                                   decoder_class=truth_only(cls))
        batch = rollout(spec, emission, PolicyDef.open_loop_gaussian(1e-6),
                        horizon=1, n_traj=1000, base_seed=8)
        with pytest.raises(IllConditionedCovarianceError):
            learn_initial_state((_split(batch), _split(batch, second=True)), zero_reg,
                                est, cfg, truth_only(cls))

    def test_zero_dynamics_target_is_zero(self):
        spec, emission, cls, est = scalar_pieces(a=0.0)
        stack = stack_for(spec, est)
        cfg = Phase3Config(n_op=20_000, sigma=1.0, t_horizon=1, kappa=1, r_op=8.0)
        halves = collect_onpolicy(spec, emission, stack, 0, cfg, seed=9)
        _, h0 = fit_residual_regressors(halves, stack, shaping_for(est), 0, cfg, truth_only(cls))
        batch = rollout(spec, emission, PolicyDef.open_loop_gaussian(sigma=1.0),
                        horizon=1, n_traj=40_000, base_seed=10)
        pieces = learn_initial_state((_split(batch), _split(batch, second=True)), h0,
                                     est, cfg, truth_only(cls))
        fa0 = pieces.f_a0(batch.observations[:, 0])
        assert float(np.mean(fa0**2)) <= 0.05


def shaping_for(est, sigma=1.0, kappa=1):
    return build_noise_shaping(est.a_hat, est.b_hat, est.sigma_w_hat, sigma=sigma, kappa=kappa)


class TestComputePolicy:
    def test_sigma_zero_rejected(self):
        with pytest.raises(ValidationError):
            Phase3Config(n_op=100, sigma=0.0, t_horizon=1, kappa=1, r_op=8.0)

    def test_stack_length(self):
        spec, emission, cls, est = scalar_pieces()
        cfg = Phase3Config(n_op=400, sigma=0.3, t_horizon=3, kappa=1, r_op=8.0)
        learned = compute_policy(spec, emission, est, truth_only(cls), cfg, seed=11)
        assert learned.stack.depth == 4  # decoders f_0..f_T with T = 3
        assert learned.t_horizon == 3
        assert learned.trajectories_used == 2 * 400 * 3 + 2 * 400

    def test_default_clip_radius_formula(self):
        assert default_clip_radius(1, 1, 5000) == pytest.approx(20.0 * np.log(5000.0))

    def test_error_tagged_with_stage(self):
        spec, emission, cls, est = scalar_pieces()
        bad = SysIdEstimates(a_hat=est.a_hat, b_hat=est.b_hat,
                             sigma_w_hat=[[0.0]], q_hat=est.q_hat)
        cfg = Phase3Config(n_op=100, sigma=0.3, t_horizon=1, kappa=1, r_op=8.0)
        from latentlqr.errors import NumericalError

        with pytest.raises(NumericalError):
            compute_policy(spec, emission, bad, truth_only(cls), cfg, seed=12)

    def test_exact_plugins_near_optimal_at_t1(self):
        # with exact identification the only suboptimality left is the
        # injected exploration noise plus decoder estimation error
        from latentlqr import estimate_gap, optimal_policy

        spec, emission, cls = make_benchmark_instance("scalar-identity")
        est = SysIdEstimates(a_hat=spec.a, b_hat=spec.b, sigma_w_hat=spec.sigma_w,
                             q_hat=spec.q)
        cfg = Phase3Config(n_op=20_000, sigma=0.1, t_horizon=1, kappa=1, r_op=8.0)
        learned = compute_policy(spec, emission, est, truth_only(cls), cfg, seed=15)
        gap, _ = estimate_gap(spec, emission, learned.policy(),
                              optimal_policy(spec, emission), t_horizon=1,
                              n_eval=20_000, seed=16)
        assert gap <= 0.1

    def test_no_compounding_error_growth(self):
        # with true plug-ins the per-time decoder error must not grow
        # faster than linearly in t
        spec, emission, cls, est = scalar_pieces()
        cfg = Phase3Config(n_op=5_000, sigma=1.0, t_horizon=5, kappa=1, r_op=8.0)
        learned = compute_policy(spec, emission, est, truth_only(cls), cfg, seed=13)
        batch = rollout(spec, emission, learned.policy(), horizon=5, n_traj=20_000,
                        base_seed=14)
        vals = learned.stack.values_all(batch.observations, 5)
        errors = []
        for t in range(1, 6):
            truth = emission.decode_batch(batch.observations[:, t])
            errors.append(float(np.mean(np.sum((vals[:, t] - truth) ** 2, axis=1))))
        floor = 1e-4
        base = max(errors[0], floor)
        for t, err in enumerate(errors, start=1):
            assert err <= 2.0 * t * base + floor
