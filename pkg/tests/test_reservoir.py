import numpy as np
import pytest

from mcdet.reservoir import (
    Reservoir,
    ReservoirConfig,
    ReservoirStepper,
    SingleClassError,
    TrainedReadout,
    collect_states,
    decide_standard,
    decide_with_threshold,
    init_reservoir,
    load_model,
    optimize_threshold,
    power_iteration_radius,
    predict_scores,
    save_model,
    score_states,
    spectral_radius,
    train_readout,
    update_state,
)


def tiny_reservoir(w_res, w_in, leak_rate=0.3):
    cfg = ReservoirConfig(n_reservoir=len(w_in), leak_rate=leak_rate)
    return Reservoir(
        w_in=np.asarray(w_in, dtype=float),
        w_res=np.asarray(w_res, dtype=float),
        config=cfg,
        achieved_radius=spectral_radius(np.asarray(w_res, dtype=float)),
    )


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(3)) == pytest.approx(1.0)

    def test_diagonal_dominant_negative(self):
        assert spectral_radius(np.diag([0.2, -0.9])) == pytest.approx(0.9)

    def test_matches_dense_eigensolver_on_random_matrices(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            m = rng.uniform(-1, 1, size=(50, 50))
            oracle = float(np.max(np.abs(np.linalg.eigvals(m))))
            assert spectral_radius(m) == pytest.approx(oracle, rel=1e-4)
            # The iterative estimator converges slowly without a spectral
            # gap; at 2000 iterations it should sit within a few parts in 1e3.
            assert power_iteration_radius(m, max_iter=2000) == pytest.approx(
                oracle, rel=2e-3
            )

    def test_power_iteration_handles_sign_alternation(self):
        # Dominant eigenvalue -2: plain iteration norms still converge, and
        # the squared-matrix pass guards the estimate.
        m = np.diag([-2.0, 0.5, 0.1])
        assert power_iteration_radius(m) == pytest.approx(2.0, rel=1e-6)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            spectral_radius(np.ones((2, 3)))


class TestInitReservoir:
    @pytest.mark.parametrize("n_r", [50, 300, 400])
    def test_scaled_radius_hits_target(self, n_r):
        res = init_reservoir(ReservoirConfig(n_reservoir=n_r, rng_seed=1))
        measured = float(np.max(np.abs(np.linalg.eigvals(res.w_res))))
        assert 0.699 <= measured <= 0.701

    def test_deterministic_in_seed(self):
        a = init_reservoir(ReservoirConfig(n_reservoir=64, rng_seed=9))
        b = init_reservoir(ReservoirConfig(n_reservoir=64, rng_seed=9))
        assert np.array_equal(a.w_res, b.w_res)
        assert np.array_equal(a.w_in, b.w_in)

    def test_scalar_reservoir_is_plus_minus_rho(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=1, rng_seed=4))
        assert abs(res.w_res[0, 0]) == pytest.approx(0.7)

    def test_input_weights_respect_scaling(self):
        res = init_reservoir(
            ReservoirConfig(n_reservoir=200, input_scaling=0.25, rng_seed=2)
        )
        assert np.max(np.abs(res.w_in)) <= 0.25

    def test_weights_are_immutable(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=10, rng_seed=0))
        with pytest.raises(ValueError):
            res.w_res[0, 0] = 1.0

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            ReservoirConfig(spectral_radius=1.2).validate()
        with pytest.raises(ValueError):
            ReservoirConfig(leak_rate=0.0).validate()


class TestUpdateState:
    def test_zero_everything_is_fixed_point_alpha_one(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=20, leak_rate=1.0, rng_seed=0))
        x = update_state(res, np.zeros(20), 0.0)
        assert np.all(x == 0)

    def test_zero_everything_is_fixed_point_leaky(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=20, leak_rate=0.3, rng_seed=0))
        x = update_state(res, np.zeros(20), 0.0)
        assert np.all(x == 0)

    def test_two_neuron_hand_calculation(self):
        w_res = np.array([[0.5, -0.2], [0.1, 0.3]])
        w_in = np.array([1.0, -0.5])
        res = tiny_reservoir(w_res, w_in, leak_rate=0.3)
        x_prev = np.array([0.2, -0.4])
        u = 0.7
        expected = 0.7 * x_prev + 0.3 * np.tanh(
            np.array(
                [
                    0.5 * 0.2 + (-0.2) * (-0.4) + 1.0 * 0.7,
                    0.1 * 0.2 + 0.3 * (-0.4) + (-0.5) * 0.7,
                ]
            )
        )
        got = update_state(res, x_prev, u)
        assert np.allclose(got, expected, atol=1e-15)

    def test_states_bounded_by_unit_interval(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=50, leak_rate=1.0, rng_seed=5))
        rng = np.random.default_rng(0)
        x = np.zeros(50)
        for u in rng.normal(0, 3, size=200):
            x = update_state(res, x, u)
            assert np.all(np.abs(x) <= 1.0)

    def test_leaky_states_stay_bounded_from_zero_start(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=50, leak_rate=0.3, rng_seed=5))
        rng = np.random.default_rng(1)
        x = np.zeros(50)
        for u in rng.normal(0, 3, size=300):
            x = update_state(res, x, u)
        assert np.all(np.abs(x) <= 1.0)


class TestCollectStates:
    def test_empty_input_gives_empty_matrix(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=8, rng_seed=0))
        states = collect_states(res, np.array([]))
        assert states.shape == (0, 8)

    def test_zero_input_stays_at_fixed_point(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=8, rng_seed=0))
        states = collect_states(res, np.zeros(10))
        assert np.all(states == 0)

    def test_rows_match_step_by_step_replay(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=12, rng_seed=3))
        rng = np.random.default_rng(2)
        u = rng.normal(size=20)
        states = collect_states(res, u)
        x = np.zeros(12)
        for k in range(20):
            x = update_state(res, x, u[k])
            assert np.allclose(states[k], x, atol=1e-14)


class TestEchoStateProperty:
    def test_contraction_from_different_initial_states(self):
        # Trajectories driven by the same input forget their initial states:
        # the gap shrinks by at least 1e6 over 500 steps at rho=0.7, alpha=0.3.
        rng = np.random.default_rng(0)
        u = rng.normal(size=500)
        for seed in range(10):
            res = init_reservoir(
                ReservoirConfig(n_reservoir=100, leak_rate=0.3, rng_seed=seed)
            )
            init_rng = np.random.default_rng(1000 + seed)
            xa = init_rng.uniform(-1, 1, 100)
            xb = init_rng.uniform(-1, 1, 100)
            gap0 = np.linalg.norm(xa - xb)
            for uk in u:
                xa = update_state(res, xa, uk)
                xb = update_state(res, xb, uk)
            assert np.linalg.norm(xa - xb) < 1e-6 * gap0


class TestTrainReadout:
    def test_exact_regression_on_identity_states(self):
        states = np.linspace(-1, 1, 40).reshape(-1, 1)
        labels = states.ravel()
        cfg = ReservoirConfig(n_reservoir=1, washout=0, ridge_lambda=0.0)
        ro = train_readout(states, labels, cfg)
        assert ro.weights[0] == pytest.approx(1.0, abs=1e-10)
        assert ro.bias == pytest.approx(0.0, abs=1e-10)

    def test_large_lambda_shrinks_to_label_mean(self):
        rng = np.random.default_rng(0)
        states = rng.normal(size=(100, 5))
        labels = rng.integers(0, 2, 100).astype(float)
        cfg = ReservoirConfig(n_reservoir=5, washout=0, ridge_lambda=1e9)
        ro = train_readout(states, labels, cfg)
        assert np.all(np.abs(ro.weights) < 1e-3)
        assert ro.bias == pytest.approx(labels.mean(), abs=1e-3)

    def test_matches_independent_normal_equations_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            states = rng.normal(size=(200, 20))
            labels = rng.normal(size=200)
            lam = 10.0 ** rng.uniform(-6, 0)
            cfg = ReservoirConfig(n_reservoir=20, washout=0, ridge_lambda=lam)
            ro = train_readout(states, labels, cfg)
            # Oracle: explicit inverse on the augmented system (different
            # solve path from numpy.linalg.solve).
            x_aug = np.hstack([states, np.ones((200, 1))])
            reg = lam * np.eye(21)
            reg[20, 20] = 0.0
            w_oracle = np.linalg.inv(x_aug.T @ x_aug + reg) @ (x_aug.T @ labels)
            got = np.concatenate([ro.weights, [ro.bias]])
            assert np.allclose(got, w_oracle, rtol=1e-8, atol=1e-10)

    def test_washout_rows_are_excluded(self):
        states = np.vstack([np.full((5, 1), 100.0), np.linspace(-1, 1, 50).reshape(-1, 1)])
        labels = np.concatenate([np.zeros(5), np.linspace(-1, 1, 50)])
        cfg = ReservoirConfig(n_reservoir=1, washout=5, ridge_lambda=0.0)
        ro = train_readout(states, labels, cfg)
        assert ro.weights[0] == pytest.approx(1.0, abs=1e-8)

    def test_param_count_contract(self):
        for n_r in (300, 400):
            rng = np.random.default_rng(n_r)
            states = rng.normal(size=(50, n_r))
            labels = rng.integers(0, 2, 50).astype(float)
            cfg = ReservoirConfig(n_reservoir=n_r, washout=0, ridge_lambda=1.0)
            ro = train_readout(states, labels, cfg)
            assert ro.param_count == n_r + 1

    def test_ridge_loss_beats_random_perturbations(self):
        rng = np.random.default_rng(7)
        states = rng.normal(size=(120, 10))
        labels = (states[:, 0] > 0).astype(float)
        lam = 0.5
        cfg = ReservoirConfig(n_reservoir=10, washout=0, ridge_lambda=lam)
        ro = train_readout(states, labels, cfg)
        x_aug = np.hstack([states, np.ones((120, 1))])
        w = np.concatenate([ro.weights, [ro.bias]])

        def loss(vec):
            resid = x_aug @ vec - labels
            return resid @ resid + lam * (vec[:-1] @ vec[:-1])

        base = loss(w)
        for _ in range(100):
            assert base <= loss(w + rng.normal(scale=0.01, size=11)) + 1e-12


class TestScoring:
    def test_constant_bias_scores(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=6, rng_seed=0))
        ro = TrainedReadout(weights=np.zeros(6), bias=0.3)
        scores = predict_scores(res, ro, np.array([1.0, -2.0, 0.5]))
        assert np.allclose(scores, 0.3)

    def test_fit_then_score_separable_toy(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=30, rng_seed=1))
        rng = np.random.default_rng(5)
        labels = rng.integers(0, 2, 300)
        u = labels * 2.0 - 1.0 + rng.normal(scale=0.05, size=300)
        states = collect_states(res, u)
        cfg = ReservoirConfig(n_reservoir=30, washout=20, ridge_lambda=1e-3)
        ro = train_readout(states, labels.astype(float), cfg)
        scores = score_states(states[20:], ro)
        pred = (scores > 0.5).astype(int)
        assert np.mean(pred == labels[20:]) > 0.95

    def test_scores_deterministic(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=15, rng_seed=2))
        ro = TrainedReadout(weights=np.ones(15) * 0.1, bias=-0.2)
        u = np.linspace(-1, 1, 25)
        assert np.array_equal(predict_scores(res, ro, u), predict_scores(res, ro, u))

    def test_dimension_mismatch_rejected(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=5, rng_seed=0))
        ro = TrainedReadout(weights=np.zeros(6), bias=0.0)
        with pytest.raises(ValueError):
            predict_scores(res, ro, np.array([1.0]))


class TestDecisions:
    def test_fixed_rule(self):
        assert np.array_equal(decide_standard(np.array([0.4, 0.6])), [0, 1])

    def test_boundary_is_strict(self):
        assert decide_standard(np.array([0.5]))[0] == 0

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(0.5, 0.3, size=200)
        oracle = np.array([1 if s > 0.5 else 0 for s in scores])
        assert np.array_equal(decide_standard(scores), oracle)


class TestOptimizeThreshold:
    def test_separable_returns_gap_midpoint(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        labels = np.array([0, 0, 1, 1])
        assert optimize_threshold(scores, labels) == pytest.approx(0.5)

    def test_inverted_labels_still_at_most_chance(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=400)
        labels = (scores < 0).astype(int)  # inverted relationship
        eta = optimize_threshold(scores, labels)
        ber = np.mean((scores > eta).astype(int) != labels)
        assert ber <= 0.5

    def test_matches_dense_grid_oracle(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            scores = rng.normal(size=300)
            labels = (scores + rng.normal(scale=1.0, size=300) > 0).astype(int)
            eta = optimize_threshold(scores, labels)
            best_ber = np.mean((scores > eta).astype(int) != labels)
            grid = np.linspace(scores.min() - 1, scores.max() + 1, 10_000)
            grid_bers = [
                np.mean((scores > g).astype(int) != labels) for g in grid
            ]
            assert best_ber <= min(grid_bers) + 1e-12

    def test_threshold_never_worse_than_half_rule(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(0.5, 0.2, size=500)
        labels = rng.integers(0, 2, 500)
        eta = optimize_threshold(scores, labels)
        ber_opt = np.mean((scores > eta).astype(int) != labels)
        ber_half = np.mean((scores > 0.5).astype(int) != labels)
        assert ber_opt <= ber_half

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            optimize_threshold(np.array([0.1, 0.9]), np.array([1, 1]))


class TestModelFile:
    def test_round_trip_preserves_everything(self, tmp_path):
        res = init_reservoir(ReservoirConfig(n_reservoir=17, rng_seed=6))
        ro = TrainedReadout(
            weights=np.random.default_rng(0).normal(size=17),
            bias=0.125,
            threshold=0.61,
            norm_mean=3.5,
            norm_std=1.25,
            ridge_lambda=1e-6,
        )
        path = save_model(res, ro, tmp_path / "model.csv")
        res2, ro2 = load_model(path)
        assert np.array_equal(res2.w_res, res.w_res)
        assert np.array_equal(res2.w_in, res.w_in)
        assert np.array_equal(ro2.weights, ro.weights)
        assert ro2.bias == ro.bias
        assert ro2.threshold == ro.threshold
        assert ro2.norm_mean == ro.norm_mean
        assert res2.config == res.config

    def test_trainable_value_count_in_file(self, tmp_path):
        res = init_reservoir(ReservoirConfig(n_reservoir=400, rng_seed=0))
        ro = TrainedReadout(weights=np.zeros(400), bias=0.0, threshold=0.7)
        path = save_model(res, ro, tmp_path / "m.csv")
        text = path.read_text().splitlines()
        w_out_header = [l for l in text if l.startswith("matrix,w_out")][0]
        assert w_out_header == "matrix,w_out,400,1"


class TestStreamingKernel:
    def test_stepper_decisions_match_batch_path(self):
        res = init_reservoir(ReservoirConfig(n_reservoir=60, rng_seed=8))
        rng = np.random.default_rng(9)
        u = rng.normal(10.0, 3.0, size=150)
        mean, std = float(u[:100].mean()), float(u[:100].std())
        states = collect_states(res, (u - mean) / std)
        cfg = ReservoirConfig(n_reservoir=60, washout=10, ridge_lambda=0.1)
        labels = (u > 10).astype(float)
        ro = train_readout(states[:100], labels[:100], cfg, norm_mean=mean, norm_std=std)
        batch = decide_with_threshold(score_states(states, ro), ro.threshold)
        stepper = ReservoirStepper(res, ro)
        stream = np.array([stepper.step(v) for v in u])
        # float32 streaming kernel may flip only scores within float32 noise
        # of the threshold.
        assert np.mean(stream == batch) > 0.97
