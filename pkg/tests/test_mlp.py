import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from specmarkov import mlp
from specmarkov.errors import ConfigError, DataError
from specmarkov.markov import fit, predict
from specmarkov.statespace import build_full
from specmarkov.traffic import Trace, periodic_states


def test_pair_example_most_recent_first():
    X, Y = mlp.build_nn_pairs(Trace([1, 1, 0, 0]), 2, 1)
    assert X.tolist() == [[1, 1], [0, 1]]
    assert Y.tolist() == [[0], [0]]


@given(n=st.integers(8, 80), m=st.integers(1, 4), t=st.integers(1, 4))
def test_pair_count(n, m, t):
    X, Y = mlp.build_nn_pairs(np.zeros(n, dtype=np.uint8), m, t)
    assert X.shape == (n - m - t + 1, m) and Y.shape == (n - m - t + 1, t)


def test_pairs_periodic_with_period_six():
    X, Y = mlp.build_nn_pairs(periodic_states(3, 60), 3, 4)
    assert np.array_equal(X[6:], X[:-6]) and np.array_equal(Y[6:], Y[:-6])
    assert not np.array_equal(X[3:], X[:-3])


def test_short_trace_rejected():
    with pytest.raises(DataError):
        mlp.build_nn_pairs(Trace([0, 1, 0]), 2, 2)


@pytest.mark.parametrize("sizes", [((3,), (4,), 2), ((5,), (7, 6), 3)])
def test_gradients_match_finite_differences(sizes):
    (n_in,), hidden, n_out = sizes
    rng = np.random.default_rng(1)
    net = mlp.init_model(mlp.MlpConfig(n_in, n_out, hidden_sizes=hidden, rng_seed=3))
    for b in net.biases:
        b[...] = rng.normal(0, 0.1, b.shape)
    X = rng.random((9, n_in))
    Y = (rng.random((9, n_out)) > 0.5).astype(float)
    _, grads = mlp.loss_and_grads(net, X, Y)
    for key, arr in net.params().items():
        def f(v, arr=arr):
            saved = arr.copy()
            arr[...] = v
            out = mlp.loss(net, X, Y)
            arr[...] = saved
            return out
        numeric = oracles.central_difference(f, arr.copy())
        assert oracles.max_relative_error(grads[key], numeric) < 1e-4, key


def test_constant_zero_labels():
    X, _ = mlp.build_nn_pairs(periodic_states(4, 200), 4, 3)
    net = mlp.train(mlp.MlpConfig(4, 3, epochs=60), X, np.zeros((X.shape[0], 3)))
    assert np.all(mlp.predict_proba(net, X, 3) < 0.1)


def test_horizon_contract():
    net = mlp.init_model(mlp.MlpConfig(3, 5))
    with pytest.raises(ConfigError):
        mlp.predict_nn(net, [1, 0, 1], 6)
    prob, hard = mlp.predict_nn(net, [1, 0, 1], 5)
    assert 0.0 <= prob <= 1.0 and hard in (0, 1)


def test_matches_markov_on_toy():
    X, Y = mlp.build_nn_pairs(periodic_states(3, 300), 3, 6)
    net = mlp.train(mlp.MlpConfig(3, 6), X, Y)
    markov = fit(build_full(3), Trace(periodic_states(3, 300)))
    for sensed in {tuple(r) for r in X.astype(int).tolist()}:
        for T in range(1, 7):
            assert mlp.predict_nn(net, sensed, T)[1] == predict(markov, sensed, T)[1]


def test_long_blocks_with_transition_in_window():
    X, Y = mlp.build_nn_pairs(periodic_states(16, 1600), 10, 32)
    net = mlp.train(mlp.MlpConfig(10, 32), X, Y)
    Xt, Yt = mlp.build_nn_pairs(periodic_states(16, 400, 0), 10, 32)
    # constant windows cannot locate the block edge; the rest are unambiguous
    informative = Xt.min(axis=1) != Xt.max(axis=1)
    hard = mlp.predict_proba(net, Xt, 32) > 0.5
    assert np.all(hard[informative] == Yt[informative])


def test_training_is_reproducible():
    X, Y = mlp.build_nn_pairs(periodic_states(5, 300), 6, 4)
    a = mlp.train(mlp.MlpConfig(6, 4, epochs=15, rng_seed=9), X, Y)
    b = mlp.train(mlp.MlpConfig(6, 4, epochs=15, rng_seed=9), X, Y)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(wa, wb)
    assert a.history == b.history


def test_small_lr_full_batch_loss_is_monotone():
    X, Y = mlp.build_nn_pairs(periodic_states(3, 300), 3, 6)
    cfg = mlp.MlpConfig(3, 6, learning_rate=1e-4, epochs=50, batch_size=X.shape[0],
                        val_fraction=0.0)
    hist = mlp.train(cfg, X, Y).history["train_loss"]
    assert np.all(np.diff(hist) <= 0)


def test_early_stopping_restores_best():
    X, Y = mlp.build_nn_pairs(periodic_states(4, 400), 4, 3)
    net = mlp.train(mlp.MlpConfig(4, 3, epochs=200, patience=3), X, Y)
    h = net.history
    assert h["best_epoch"] == int(np.argmin(h["val_loss"])) + 1
    assert h["epochs_run"] <= 200


def test_save_load_roundtrip(tmp_path):
    X, Y = mlp.build_nn_pairs(periodic_states(3, 200), 3, 4)
    net = mlp.train(mlp.MlpConfig(3, 4, hidden_sizes=(8, 8), epochs=5), X, Y)
    path = mlp.save_model(net, tmp_path / "net.txt")
    back = mlp.load_model(path)
    assert back.config == net.config
    assert np.array_equal(mlp.predict_proba(back, X, 4), mlp.predict_proba(net, X, 4))
    csv_path = mlp.write_loss_csv(tmp_path / "loss.csv", net)
    assert csv_path.read_text().splitlines()[0] == "epoch,train_loss,val_loss"


@pytest.mark.parametrize("kwargs", [dict(input_size=0, output_size=2),
                                    dict(input_size=2, output_size=2, hidden_sizes=(0,)),
                                    dict(input_size=2, output_size=2, epochs=0),
                                    dict(input_size=2, output_size=2, val_fraction=1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        mlp.MlpConfig(**kwargs)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000))
def test_outputs_are_probabilities(seed):
    net = mlp.init_model(mlp.MlpConfig(5, 3, hidden_sizes=(6,), rng_seed=seed))
    X = np.random.default_rng(seed).integers(0, 2, (20, 5))
    out = mlp.predict_proba(net, X, 3)
    assert np.all((out >= 0) & (out <= 1))
