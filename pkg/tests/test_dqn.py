import json

import numpy as np
import pytest

from csil.cartpole import CartPoleEnv
from csil.dqn import (DqnTrainConfig, QNetwork, cs_boost_last_layer, forward,
                      greedy_action_net, init_qnetwork, last_layer_sparsity,
                      penultimate_features, td_loss_and_grads, train_dqn)
from csil.linear_agent import TrainingDiverged
from csil.sparse import SolverConfig


def tiny_net(width=2, dropout=0.0, seed=0):
    return init_qnetwork(layer_sizes=(4, 3, width, 2), dropout_rate=dropout,
                         seed=seed)


def test_forward_zero_weights():
    net = tiny_net()
    for pair in net.hidden:
        pair[0][...] = 0.0
        pair[1][...] = 0.0
    net.final[...] = 0.0
    np.testing.assert_array_equal(forward(net, np.ones(4)), [0.0, 0.0])


def test_forward_eval_deterministic():
    net = init_qnetwork(seed=3)
    s = np.array([0.1, -0.2, 0.03, 0.4])
    np.testing.assert_array_equal(forward(net, s, "eval"), forward(net, s, "eval"))


def test_forward_one_hidden_unit_hand_computed():
    """4 -> 1 -> 2 net evaluated against the formula written out by hand."""
    net = init_qnetwork(layer_sizes=(4, 1, 2), dropout_rate=0.0, seed=0)
    net.hidden[0][0][...] = np.array([[1.0, -2.0, 0.5, 0.0]])
    net.hidden[0][1][...] = np.array([0.3])
    net.final[...] = np.array([[2.0], [-1.5]])
    s = np.array([0.2, 0.1, 0.4, -0.9])
    h = max(0.0, 1.0 * 0.2 - 2.0 * 0.1 + 0.5 * 0.4 + 0.3)  # 0.5
    np.testing.assert_allclose(forward(net, s), [2.0 * h, -1.5 * h], atol=1e-12)
    # negative pre-activation rectifies to zero
    s_dead = np.array([-5.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(forward(net, s_dead), [0.0, 0.0])


def test_penultimate_split_consistency():
    rng = np.random.default_rng(1)
    net = init_qnetwork(layer_sizes=(4, 8, 6, 2), dropout_rate=0.3, seed=7)
    for _ in range(50):
        s = rng.uniform(-2, 2, size=4)
        feats = penultimate_features(net, s)
        assert np.all(feats >= 0.0)
        np.testing.assert_array_equal(forward(net, s, "eval"), net.final @ feats)


def test_final_layer_has_no_bias():
    net = init_qnetwork(seed=0)
    assert net.final.shape == (2, 512)
    # doubling the penultimate features doubles the outputs exactly
    s = np.array([0.3, 0.1, -0.2, 0.5])
    feats = penultimate_features(net, s)
    np.testing.assert_allclose(net.final @ (2 * feats), 2 * (net.final @ feats))


def test_train_mode_requires_rng():
    net = init_qnetwork(seed=0)
    with pytest.raises(ValueError):
        forward(net, np.zeros(4), "train")


def test_dropout_empirical_rate():
    """Inverted dropout zeroes each penultimate activation at the configured
    rate; measured over 1e5 component draws through the train-mode forward.

    The net is rigged so every penultimate unit outputs exactly 1 (zero
    weights, unit bias) and the first output sums them, making the kept count
    directly observable: q0 = kept / (1 - rate).
    """
    width = 200
    net = init_qnetwork(layer_sizes=(4, 4, width, 2), dropout_rate=0.3, seed=2)
    net.hidden[-1][0][...] = 0.0
    net.hidden[-1][1][...] = 1.0
    net.final[...] = 0.0
    net.final[0, :] = 1.0
    rng = np.random.default_rng(5)
    s = np.zeros(4)
    passes = 500  # 500 * 200 = 1e5 component draws
    kept = 0.0
    for _ in range(passes):
        q = forward(net, s, "train", rng)
        kept += q[0] * (1.0 - net.dropout_rate)
    rate_kept = kept / (passes * width)
    assert rate_kept == pytest.approx(0.7, abs=0.02)


def test_gradcheck_tiny_net():
    """Backprop vs central differences on a 2-hidden-unit net, 100 probes.

    Biases are randomized away from zero so no pre-activation sits exactly on
    the rectifier kink, where the two-sided difference is undefined.
    """
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        net = init_qnetwork(layer_sizes=(4, 2, 2, 2), dropout_rate=0.0,
                            seed=int(rng.integers(2**31)))
        net.hidden = [(w, rng.normal(0.0, 0.5, size=b.shape))
                      for w, b in net.hidden]
        states = rng.normal(size=(3, 4))
        actions = rng.integers(0, 2, size=3)
        targets = rng.normal(size=3)
        _, hidden_grads, final_grad = td_loss_and_grads(net, states, actions,
                                                        targets)
        flat_analytic = np.concatenate(
            [g.ravel() for pair in hidden_grads for g in pair]
            + [final_grad.ravel()])
        params = [p for pair in net.hidden for p in pair] + [net.final]
        numeric = []
        eps = 1e-6
        for p in params:
            flat = p.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up, _, _ = td_loss_and_grads(net, states, actions, targets)
                flat[i] = orig - eps
                dn, _, _ = td_loss_and_grads(net, states, actions, targets)
                flat[i] = orig
                numeric.append((up - dn) / (2 * eps))
        numeric = np.asarray(numeric)
        denom = max(np.linalg.norm(flat_analytic), np.linalg.norm(numeric), 1e-12)
        rel = np.linalg.norm(flat_analytic - numeric) / denom
        worst = max(worst, rel)
    assert worst <= 1e-4, f"worst relative gradient error {worst:.2e}"


def test_train_iterations_zero_returns_seeded_init():
    env = CartPoleEnv()
    net = train_dqn(env, DqnTrainConfig(iterations=0, seed=9))
    ref = init_qnetwork(seed=9)
    np.testing.assert_array_equal(net.final, ref.final)
    for (w1, b1), (w2, b2) in zip(net.hidden, ref.hidden):
        np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(b1, b2)


def test_train_reproducible():
    env = CartPoleEnv()
    cfg = DqnTrainConfig(iterations=120, batch_size=16, seed=4)
    a = train_dqn(env, cfg, layer_sizes=(4, 8, 8, 2), dropout_rate=0.1)
    b = train_dqn(CartPoleEnv(), cfg, layer_sizes=(4, 8, 8, 2), dropout_rate=0.1)
    np.testing.assert_array_equal(a.final, b.final)


def test_train_divergence_guard():
    env = CartPoleEnv()
    with pytest.raises(TrainingDiverged):
        train_dqn(env, DqnTrainConfig(iterations=3000, learning_rate=50.0,
                                      seed=0),
                  layer_sizes=(4, 8, 8, 2), dropout_rate=0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        DqnTrainConfig(iterations=-1)
    with pytest.raises(ValueError):
        DqnTrainConfig(batch_size=0)
    cfg = DqnTrainConfig()
    assert cfg.epsilon_at(0) == 1.0
    assert cfg.epsilon_at(10**7) == pytest.approx(0.05)


def test_cs_boost_leaves_body_bit_identical():
    rng = np.random.default_rng(21)
    net = train_dqn(CartPoleEnv(), DqnTrainConfig(iterations=150, batch_size=16,
                                                  seed=5),
                    layer_sizes=(4, 8, 16, 2), dropout_rate=0.2)
    body_before = [(w.copy(), b.copy()) for w, b in net.hidden]
    final_before = net.final.copy()
    demos = [(rng.uniform(-0.05, 0.05, size=4), int(rng.integers(2)))
             for _ in range(8)]
    boosted, report = cs_boost_last_layer(net, demos,
                                          config=SolverConfig(
                                              constraint_penalty_weight=100.0))
    for (w, b), (w0, b0) in zip(boosted.hidden, body_before):
        np.testing.assert_array_equal(w, w0)
        np.testing.assert_array_equal(b, b0)
    # the original net is untouched too
    np.testing.assert_array_equal(net.final, final_before)
    assert boosted.final.shape == net.final.shape
    assert report.iterations_used > 0


def test_cs_boost_feasible_target_stays_close():
    """Demos the pretrained layer already separates with a wide margin: a
    large anchor weight keeps the boosted layer near the original."""
    rng = np.random.default_rng(23)
    net = tiny_net(width=6, seed=8)
    net.final[...] = rng.normal(size=net.final.shape)
    demos = []
    for _ in range(30):
        s = rng.uniform(-1, 1, size=4)
        q = forward(net, s)
        if abs(q[0] - q[1]) > 0.5:
            demos.append((s, int(np.argmax(q))))
    assert len(demos) >= 5
    boosted, _ = cs_boost_last_layer(net, demos[:5], epsilon=0.01, lam=1e4,
                                     config=SolverConfig(
                                         constraint_penalty_weight=100.0))
    np.testing.assert_allclose(boosted.final, net.final, atol=1e-2)


def test_cs_boost_nuclear_objective_runs():
    rng = np.random.default_rng(29)
    net = tiny_net(width=6, seed=10)
    demos = [(rng.uniform(-0.5, 0.5, size=4), int(rng.integers(2)))
             for _ in range(6)]
    boosted, report = cs_boost_last_layer(net, demos, objective="nuclear")
    assert boosted.final.shape == net.final.shape
    with pytest.raises(ValueError):
        cs_boost_last_layer(net, demos, objective="l7")


def test_periodic_boost_option():
    rng = np.random.default_rng(31)
    demos = [(rng.uniform(-0.05, 0.05, size=4), int(rng.integers(2)))
             for _ in range(6)]
    net = train_dqn(CartPoleEnv(), DqnTrainConfig(iterations=80, batch_size=16,
                                                  seed=6),
                    layer_sizes=(4, 6, 8, 2), dropout_rate=0.0,
                    boost_every=40, boost_demos=demos)
    assert net.final.shape == (2, 8)
    with pytest.raises(ValueError):
        train_dqn(CartPoleEnv(), DqnTrainConfig(iterations=10, seed=0),
                  boost_every=0, boost_demos=demos)


def test_json_roundtrip_exact():
    net = train_dqn(CartPoleEnv(), DqnTrainConfig(iterations=60, batch_size=16,
                                                  seed=7),
                    layer_sizes=(4, 6, 6, 2), dropout_rate=0.4)
    clone = QNetwork.from_json(net.to_json())
    assert clone.dropout_rate == net.dropout_rate
    np.testing.assert_array_equal(clone.final, net.final)
    for (w1, b1), (w2, b2) in zip(clone.hidden, net.hidden):
        np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(b1, b2)
    s = np.array([0.02, -0.01, 0.03, 0.0])
    np.testing.assert_array_equal(forward(clone, s), forward(net, s))
    doc = json.loads(net.to_json())
    assert doc["layer_sizes"] == [4, 6, 6, 2]


def test_greedy_action_net():
    net = tiny_net(width=3, seed=12)
    net.final[...] = 0.0
    net.final[1, :] = 1.0
    s = np.array([0.5, 0.5, 0.05, 0.05])
    expected = 1 if penultimate_features(net, s).sum() > 0 else 0
    assert greedy_action_net(net, s) == expected


def test_last_layer_sparsity():
    net = tiny_net(width=4, seed=13)
    net.final[...] = np.array([[1.0, 0.0, 0.0, 0.0],
                               [0.0, 0.0, 0.0, 1e-6]])
    assert last_layer_sparsity(net) == pytest.approx(7.0 / 8.0)
