import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayesdefense.predictor import (ClfNetwork, PredictorError, TrainConfig, accuracy, clf, forward,
                                    full_capability_threshold, load_network, read_dataset_csv, save_network,
                                    synthetic_dataset, threshold_outputs, train, write_dataset_csv)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(0, 1))
def test_threshold_rule(outs, th):
    res = threshold_outputs(outs, th)
    for o, p, t in zip(outs, res.p, res.t):
        if o <= th:
            assert (p, t) == (0.0, 0)
        else:
            assert (p, t) == (o, 1)


def test_threshold_must_be_a_probability():
    with pytest.raises(PredictorError):
        threshold_outputs([0.2], 1.5)


def test_zero_weight_network_is_undecided():
    net = ClfNetwork.initialise(zero=True)
    assert forward(net, np.ones(20)) == pytest.approx([0.5, 0.5])


def test_outputs_form_a_distribution():
    net = ClfNetwork.initialise(seed=4)
    out = net.predict(np.random.default_rng(0).normal(size=(7, 20)))
    assert out.shape == (7, 2)
    assert np.allclose(out.sum(axis=1), 1.0) and (out >= 0).all()


def test_wrong_input_length_is_rejected():
    with pytest.raises(PredictorError, match="length 3"):
        ClfNetwork.initialise().predict([1.0, 2.0, 3.0])


def test_gradients_match_central_differences():
    rng = np.random.default_rng(1)
    net = ClfNetwork.initialise((5, 6, 4, 2), seed=2)
    x = rng.normal(size=(8, 5))
    y = np.eye(2)[rng.integers(0, 2, 8)]
    _, gw, gb = net.loss_and_grads(x, y)
    eps = 1e-6
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(*p.shape):
                keep = p[idx]
                p[idx] = keep + eps
                up = net.loss_and_grads(x, y)[0]
                p[idx] = keep - eps
                down = net.loss_and_grads(x, y)[0]
                p[idx] = keep
                num = (up - down) / (2 * eps)
                assert abs(num - g[idx]) <= 1e-4 * max(1.0, abs(num), abs(g[idx]))


def test_training_is_seeded_and_accurate():
    x, y = synthetic_dataset(1000, seed=0)
    a = train(x, y, TrainConfig(seed=0))
    b = train(x, y, TrainConfig(seed=0))
    assert a.metrics["holdout_accuracy"] >= 0.9
    assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))


def test_untrained_network_is_near_chance():
    x, y = synthetic_dataset(1000, seed=0)
    net = train(x, y, TrainConfig(epochs=0))
    assert abs(accuracy(net, x, y) - 0.5) <= 0.2


def test_single_class_data_is_rejected():
    x, _ = synthetic_dataset(20)
    with pytest.raises(PredictorError, match="both"):
        train(x, np.zeros(20, dtype=int))


def test_clf_reads_absent_components_as_normal():
    x, y = synthetic_dataset(600, seed=2)
    net = train(x, y, TrainConfig(epochs=20))
    attacked = x[y == 1][0]
    out = clf({1: net}, attacked, threshold=0.5, components=[0, 1, 2])
    assert out.t == (0, 1, 0)
    assert out.p[0] == 0.0 and out.p[1] > 0.5


def test_full_capability_threshold_flags_everything_positive():
    assert threshold_outputs([1e-6], full_capability_threshold()).t == (1,)


def test_network_file_round_trip():
    net = ClfNetwork.initialise(seed=3)
    again = load_network(save_network(net))
    s = np.linspace(-1, 1, 20)
    assert forward(again, s) == pytest.approx(forward(net, s), abs=0)


def test_truncated_network_file_is_reported():
    text = save_network(ClfNetwork.initialise(seed=3))
    with pytest.raises(PredictorError, match="line"):
        load_network("\n".join(text.splitlines()[:10]))


def test_dataset_csv_round_trip():
    x, y = synthetic_dataset(10, seed=5)
    x2, y2 = read_dataset_csv(write_dataset_csv(x, y))
    assert np.array_equal(x, x2) and np.array_equal(y, y2)


@pytest.mark.parametrize("out0, th, expected", [(0.9, 0.5, (0.9, 1)), (0.0, 0.5, (0.0, 0))])
def test_threshold_examples(out0, th, expected):
    res = threshold_outputs([out0], th)
    assert (res.p[0], res.t[0]) == expected
