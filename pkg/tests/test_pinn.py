from dataclasses import replace

import numpy as np
import pytest

from stiff_pinn.autodiff import Dual, Tape
from stiff_pinn.common.errors import ConfigError, DimensionError, TrainingDivergedError
from stiff_pinn.common.seeding import COLLOCATION, make_rng
from stiff_pinn.pinn import (
    AdamState,
    MlpModel,
    TrainingConfig,
    adam_step,
    eval_grid,
    evaluate_rmse,
    forward,
    load_checkpoint,
    loss_and_gradient,
    predict,
    predict_full_state,
    reconstruct_qss_profile,
    residual_loss,
    sample_collocation,
    save_checkpoint,
    train,
    trained_species,
    xavier_bound,
    xavier_init,
)
from stiff_pinn.qssa import QssPartition, ReducedSystem


class ReferenceOracle:
    """Predicts by sampling a reference trajectory."""

    def __init__(self, trajectory, species):
        self.trajectory = trajectory
        self.species = tuple(species)
        self._cols = [trajectory.species_names.index(s) for s in species]

    def __call__(self, t):
        return self.trajectory.sample(t)[:, self._cols]


@pytest.fixture(scope="module")
def rober_stiff(rober):
    return ReducedSystem(rober, QssPartition.from_qss([1], 3), closure_mode="closed-form-rober")


def _model(system, transform="hard-ic", seed=3, hidden=(8, 8)):
    species = trained_species(system)
    return MlpModel.initialize(
        (1, *hidden, len(species)), seed, species=species, y0=system.y0, transform=transform,
        time_scale=1.0,
    )


def test_xavier_bound_and_init():
    assert xavier_bound(128, 128) == pytest.approx(0.153093, abs=1e-6)
    layers = xavier_init((1, 128, 128, 2), 0)
    assert [w.shape for w, _ in layers] == [(1, 128), (128, 128), (128, 2)]
    w, b = layers[1]
    assert np.abs(w).max() <= xavier_bound(128, 128)
    np.testing.assert_array_equal(b, np.zeros(128))
    again = xavier_init((1, 128, 128, 2), 0)
    np.testing.assert_array_equal(again[1][0], w)
    assert not np.array_equal(xavier_init((1, 128, 128, 2), 1)[1][0], w)


def test_adam_first_step():
    updated, state = adam_step(np.array([0.0]), np.array([2.0]), AdamState.zeros(1), 1e-3)
    assert updated[0] == pytest.approx(-9.99999995e-4, rel=1e-12)
    assert state.step == 1
    np.testing.assert_allclose(state.m, [0.2])
    np.testing.assert_allclose(state.v, [0.004])


def test_adam_rejects_non_finite_gradient():
    params = np.array([1.0, 2.0])
    with pytest.raises(TrainingDivergedError) as info:
        adam_step(params, np.array([np.nan, 1.0]), AdamState.zeros(2), 1e-3)
    assert info.value.snapshot["non_finite_entries"] == 1
    np.testing.assert_array_equal(params, [1.0, 2.0])


def test_model_validation():
    with pytest.raises(ConfigError):
        MlpModel.initialize((2, 8, 1), 0)
    with pytest.raises(ConfigError):
        MlpModel.initialize((1, 3), 0)
    with pytest.raises(ConfigError):
        MlpModel.initialize((1, 8, 2), 0, transform="softplus")
    with pytest.raises(DimensionError):
        MlpModel.initialize((1, 8, 2), 0, species=("A",))
    with pytest.raises(DimensionError):
        MlpModel.initialize((1, 8, 2), 0, y0=[1.0, 0.0, 0.0])


def test_flatten_round_trip():
    model = MlpModel.initialize((1, 5, 4, 3), 2)
    assert model.n_params == 1 * 5 + 5 + 5 * 4 + 4 + 4 * 3 + 3
    flat = model.flatten()
    np.testing.assert_array_equal(model.with_flat(flat).flatten(), flat)
    with pytest.raises(DimensionError):
        model.with_flat(flat[:-1])


def test_hard_ic_is_exact_at_zero(rober_stiff):
    model = _model(rober_stiff)
    np.testing.assert_array_equal(predict(model, 0.0), rober_stiff.y0)
    batch = predict(model, np.array([0.0, 1e-3, 10.0]))
    assert batch.shape == (3, 2)
    np.testing.assert_array_equal(batch[0], rober_stiff.y0)
    with pytest.raises(ValueError):
        predict(model, -1.0)


def test_hard_ic_tangent_matches_finite_differences(rober_stiff):
    model = _model(rober_stiff)
    t = np.array([1e-3, 0.5, 20.0])
    out = predict(model, Dual.variable(t))
    h = 1e-5 * t
    fd = (predict(model, t + h) - predict(model, t - h)) / (2 * h[:, None])
    np.testing.assert_allclose(out.tangent, fd, rtol=1e-5, atol=1e-10)
    assert np.all(np.isnan(predict(model, Dual.variable(0.0)).tangent))


def test_untransformed_forward_tangent(rober_stiff):
    model = _model(rober_stiff, transform="none")
    model.time_scale = 10.0
    t = np.array([0.0, 1.0, 5.0])
    out = forward(model, Dual.variable(t))
    h = 1e-6
    fd = (forward(model, t + h) - forward(model, t - h)) / (2 * h)
    np.testing.assert_allclose(out.tangent, fd, rtol=1e-6, atol=1e-10)


def test_checkpoint_round_trip(tmp_path, rober_stiff):
    model = _model(rober_stiff)
    model.time_scale = 1e5
    path = tmp_path / "ckpt" / "model.txt"
    save_checkpoint(model, str(path))
    text = path.read_text(encoding="utf-8")
    assert text.startswith("widths=1,8,8,2\nactivation=gelu\n")
    back = load_checkpoint(str(path))
    np.testing.assert_array_equal(back.flatten(), model.flatten())
    assert back.species == ("A", "C")
    assert back.transform == "hard-ic"
    assert back.time_scale == 1e5
    np.testing.assert_array_equal(back.y0, [1.0, 0.0])
    t = np.logspace(-5, 5, 7)
    np.testing.assert_array_equal(back(t), model(t))


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "missing.txt"))
    bad = tmp_path / "bad.txt"
    bad.write_text("activation=gelu\n0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="widths"):
        load_checkpoint(str(bad))
    bad.write_text("widths=1,2,1\nnot-a-number\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="line 2"):
        load_checkpoint(str(bad))


@pytest.mark.parametrize("mode, transform", [("regular", "hard-ic"), ("stiff", "hard-ic"), ("regular", "none")])
def test_loss_gradient_matches_finite_differences(rober, rober_stiff, mode, transform):
    system = rober if mode == "regular" else rober_stiff
    model = _model(system, transform=transform, seed=5)
    t = np.logspace(-4, -1, 6)
    weights = np.ones(len(trained_species(system)))
    result, terms = loss_and_gradient(model, system, t, weights)
    assert terms.excluded_points == 0
    flat = model.flatten()
    h = 1e-6
    fd = np.zeros_like(flat)
    for k in range(flat.size):
        step = np.zeros_like(flat)
        step[k] = h
        up, _ = loss_and_gradient(model.with_flat(flat + step), system, t, weights)
        down, _ = loss_and_gradient(model.with_flat(flat - step), system, t, weights)
        fd[k] = (up.loss_value - down.loss_value) / (2 * h)
    np.testing.assert_allclose(result.gradient, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


def test_stiff_loss_only_trains_non_qss_species(rober_stiff):
    model = _model(rober_stiff)
    tape = Tape()
    loss, terms = residual_loss(tape, model, rober_stiff, [1e-3, 1.0], [1.0, 2.0])
    assert terms.per_species.shape == (2,)
    assert terms.y_qss.shape == (2, 1)
    assert float(loss.value) == pytest.approx(terms.total)
    assert terms.total == pytest.approx(terms.per_species[0] + 2.0 * terms.per_species[1])


def test_closure_failures_leave_nan_qss_values(rober):
    system = ReducedSystem(rober, QssPartition.from_qss([1], 3), max_iterations=1)
    _, terms = residual_loss(Tape(), _model(system), system, [1e-3, 1.0], [1.0, 1.0])
    assert terms.excluded_points == 2
    assert terms.y_qss.shape == (2, 1)
    assert np.all(np.isnan(terms.y_qss))


def test_residual_loss_input_checks(rober, rober_stiff):
    model = _model(rober_stiff)
    with pytest.raises(ValueError):
        residual_loss(Tape(), model, rober_stiff, [], [1.0, 1.0])
    with pytest.raises(ValueError):
        residual_loss(Tape(), model, rober_stiff, [0.0, 1.0], [1.0, 1.0])
    with pytest.raises(DimensionError):
        residual_loss(Tape(), model, rober_stiff, [1.0], [1.0, 1.0, 1.0])
    with pytest.raises(DimensionError):
        residual_loss(Tape(), model, rober, [1.0], [1.0, 1.0, 1.0])


def test_untransformed_loss_includes_initial_condition(rober):
    model = _model(rober, transform="none")
    _, terms = residual_loss(Tape(), model, rober, [0.5], [1.0, 1.0, 1.0], ic_weights=[1.0, 1.0, 1.0])
    _, hard = residual_loss(Tape(), _model(rober), rober, [0.5], [1.0, 1.0, 1.0])
    assert terms.total > 0 and hard.total > 0


def test_sample_collocation():
    cfg = TrainingConfig(n_collocation=500, t_min=1e-5, t_max=1e5, batch_size=10)
    times = sample_collocation(cfg, make_rng(0, COLLOCATION))
    assert times.shape == (500,)
    assert times.min() >= 1e-5 and times.max() <= 1e5
    # log-uniform: roughly half of the points below 1
    assert 0.35 < np.mean(times < 1.0) < 0.65
    np.testing.assert_array_equal(times, sample_collocation(cfg, make_rng(0, COLLOCATION)))
    uniform = TrainingConfig(n_collocation=200, t_min=1e-3, t_max=60.0, sampling="uniform", batch_size=10)
    samples = sample_collocation(uniform, make_rng(1, COLLOCATION))
    assert samples.min() >= 1e-3 and samples.max() <= 60.0
    assert np.mean(samples < 1.0) < 0.1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"t_min": 10.0, "t_max": 1.0},
        {"t_min": 0.0},
        {"n_collocation": 10, "batch_size": 20},
        {"learning_rate": 0.0},
        {"sampling": "sobol"},
        {"max_updates": -1},
        {"species_weights": (1.0, 0.0)},
    ],
)
def test_training_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainingConfig(**kwargs)


def test_weights_for():
    assert TrainingConfig().weights_for(2).tolist() == [1.0, 1.0]
    np.testing.assert_allclose(TrainingConfig(y_ref_scale=(0.5, 2.0)).weights_for(2), [4.0, 0.25])
    assert TrainingConfig(species_weights=(3.0, 1.0), y_ref_scale=(0.5, 2.0)).weights_for(2).tolist() == [3.0, 1.0]
    with pytest.raises(DimensionError):
        TrainingConfig(species_weights=(1.0,)).weights_for(2)


def test_train_with_zero_updates_returns_initial_model(rober_stiff):
    model = _model(rober_stiff)
    cfg = TrainingConfig(n_collocation=16, batch_size=8, max_updates=0)
    result = train(model, rober_stiff, cfg)
    assert result.updates == 0 and result.history == []
    np.testing.assert_array_equal(result.model.flatten(), model.flatten())


def test_short_training_run_is_reproducible(rober_stiff):
    cfg = TrainingConfig(n_collocation=32, batch_size=8, max_updates=5, log_every=2, rng_seed=11)
    seen = []
    first = train(_model(rober_stiff), rober_stiff, cfg, sinks=[seen.append])
    second = train(_model(rober_stiff), rober_stiff, cfg)
    assert first.updates == 5
    assert [r.step for r in first.history] == [0, 2, 4]
    assert seen == first.history
    assert all(np.isfinite(r.total_loss) for r in first.history)
    assert all(len(r.per_species_loss) == 2 for r in first.history)
    np.testing.assert_array_equal(first.model.flatten(), second.model.flatten())
    assert [r.total_loss for r in first.history] == [r.total_loss for r in second.history]
    assert not np.array_equal(first.model.flatten(), _model(rober_stiff).flatten())


def test_train_rejects_mismatched_model(rober, rober_stiff):
    with pytest.raises(DimensionError):
        train(_model(rober), rober_stiff, TrainingConfig(n_collocation=8, batch_size=4, max_updates=1))


def test_evaluate_rmse_of_reference_is_zero(rober_reference):
    oracle = ReferenceOracle(rober_reference, ("A", "B", "C"))
    rmse = evaluate_rmse(oracle, rober_reference)
    assert rmse.shape == (3,)
    np.testing.assert_allclose(rmse, 0.0, atol=1e-15)
    assert evaluate_rmse(oracle, rober_reference, species=["C"], eval_times=[1.0, 10.0]).shape == (1,)
    with pytest.raises(DimensionError):
        evaluate_rmse(oracle, rober_reference, species=["D"])


def test_evaluate_rmse_detects_offset(rober_reference):
    oracle = ReferenceOracle(rober_reference, ("A",))
    shifted = lambda t: oracle(t) + 0.01  # noqa: E731
    shifted.species = ("A",)
    assert evaluate_rmse(shifted, rober_reference)[0] == pytest.approx(0.01)


def test_qss_reconstruction_from_non_qss_predictions(rober_stiff, rober_reference):
    oracle = ReferenceOracle(rober_reference, ("A", "C"))
    times = np.logspace(0, 5, 12)
    profile, missing = reconstruct_qss_profile(oracle, rober_stiff, times)
    assert not missing.any()
    np.testing.assert_allclose(profile[:, 0], rober_reference.sample(times)[:, 1], rtol=1e-2)
    full = predict_full_state(oracle, rober_stiff, times)
    assert full.shape == (12, 3)
    np.testing.assert_allclose(full[:, [0, 2]], oracle(times))


BENCHMARK_HIDDEN = (128, 128, 128)


def _train_benchmark(system, cfg):
    species = trained_species(system)
    model = MlpModel.initialize(
        (1, *BENCHMARK_HIDDEN, len(species)), cfg.rng_seed, species=species, y0=system.y0,
        transform="hard-ic", time_scale=cfg.t_max,
    )
    return train(model, system, cfg)


@pytest.mark.slow
def test_stiff_rober_loss_falls_within_a_thousand_updates(rober_stiff):
    ratios = []
    for seed in range(3):
        cfg = TrainingConfig(max_updates=1001, log_every=1000, rng_seed=seed, species_weights=(1.0, 1.0))
        history = _train_benchmark(rober_stiff, cfg).history
        assert [r.step for r in history] == [0, 1000]
        ratios.append(history[1].total_loss / history[0].total_loss)
    assert np.median(ratios) < 1.0


@pytest.mark.slow
def test_stiff_rober_beats_regular_at_equal_updates(rober, rober_stiff, rober_reference):
    cfg = TrainingConfig(max_updates=3000, log_every=1000, rng_seed=0)
    stiff = _train_benchmark(rober_stiff, replace(cfg, species_weights=(1.0, 1.0)))
    regular = _train_benchmark(rober, replace(cfg, species_weights=(1.0, 1.0, 1.0)))
    assert stiff.history[-1].total_loss <= 1e-4 * regular.history[-1].total_loss
    times = eval_grid(cfg.t_min, cfg.t_max, 200)
    stiff_rmse = evaluate_rmse(stiff.model, rober_reference, ["A"], times)[0]
    regular_rmse = evaluate_rmse(regular.model, rober_reference, ["A"], times)[0]
    assert regular_rmse >= 10 * stiff_rmse
