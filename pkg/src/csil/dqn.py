"""Small from-scratch deep Q-network with a wide, dropout-trained last hidden
layer, plus a compressed-sensing boost of the final linear layer.

The network is a plain MLP on raw 4-dim states. The final layer carries no
bias, so the map from penultimate activations to Q-values is exactly linear
and the last layer can be re-fit as a margin-constrained sparse recovery
problem: the earlier layers act as a learned featurizer, the pretrained last
layer becomes the anchor target, and a handful of demonstrated actions supply
the constraints.

Dropout on the penultimate activations is inverted (scaled at train time), so
evaluation-mode forward passes need no correction and stay deterministic.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .linear_agent import TrainingDiverged
from .seeding import substream
from . import sparse

DEFAULT_LAYER_SIZES = (4, 64, 64, 512, 2)
DEFAULT_DROPOUT = 0.5
_DIVERGENCE_LIMIT = 1e6


@dataclass
class QNetwork:
    """MLP weights. hidden holds (W, b) pairs, final is the bias-free last layer.

    W matrices are (out, in); final maps the wide penultimate layer to the two
    action values.
    """

    hidden: list
    final: np.ndarray
    dropout_rate: float

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        width = self.hidden[-1][0].shape[0]
        if self.final.shape != (2, width):
            raise ValueError("final layer shape mismatch")

    @property
    def penultimate_width(self) -> int:
        return self.final.shape[1]

    def copy(self) -> "QNetwork":
        return QNetwork(
            hidden=[(w.copy(), b.copy()) for w, b in self.hidden],
            final=self.final.copy(),
            dropout_rate=self.dropout_rate,
        )

    def to_json(self) -> str:
        payload = {
            "layer_sizes": [self.hidden[0][0].shape[1]]
            + [w.shape[0] for w, _ in self.hidden]
            + [2],
            "dropout_rate": self.dropout_rate,
            "hidden": [
                {"weights": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in self.hidden
            ],
            "final": self.final.ravel().tolist(),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "QNetwork":
        payload = json.loads(text)
        sizes = payload["layer_sizes"]
        hidden = []
        for i, layer in enumerate(payload["hidden"]):
            shape = (sizes[i + 1], sizes[i])
            w = np.asarray(layer["weights"], dtype=float).reshape(shape)
            b = np.asarray(layer["bias"], dtype=float)
            if b.shape != (shape[0],):
                raise ValueError("bias length mismatch")
            hidden.append((w, b))
        final = np.asarray(payload["final"], dtype=float).reshape(2, sizes[-2])
        return cls(hidden=hidden, final=final, dropout_rate=payload["dropout_rate"])


def init_qnetwork(
    layer_sizes=DEFAULT_LAYER_SIZES, dropout_rate=DEFAULT_DROPOUT, seed=0
) -> QNetwork:
    """He-style initialization; final layer small so initial Q-values are near 0."""
    if len(layer_sizes) < 3:
        raise ValueError("need at least one hidden layer")
    if layer_sizes[-1] != 2:
        raise ValueError("output width must be 2")
    rng = np.random.default_rng(seed)
    hidden = []
    for fan_in, fan_out in zip(layer_sizes[:-2], layer_sizes[1:-1]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        hidden.append((w, np.zeros(fan_out)))
    final = rng.normal(0.0, 0.01, size=(2, layer_sizes[-2]))
    return QNetwork(hidden=hidden, final=final, dropout_rate=dropout_rate)


def _forward_cached(net: QNetwork, states: np.ndarray, masks=None):
    """Batch forward. states is (B, 4). masks, if given, is the (B, W) dropout
    keep-mask applied to the penultimate activations (train mode)."""
    acts = [np.asarray(states, dtype=float)]
    pre = []
    h = acts[0]
    for w, b in net.hidden:
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    if masks is not None:
        h = h * masks / (1.0 - net.dropout_rate)
        acts[-1] = h
    q = h @ net.final.T
    return q, acts, pre


def forward(net: QNetwork, state, mode: str = "eval", rng=None) -> np.ndarray:
    """Q-values for both actions. Train mode draws a fresh dropout mask from rng."""
    s = np.asarray(state, dtype=float)
    if s.shape != (net.hidden[0][0].shape[1],):
        raise ValueError("state dimension mismatch")
    if mode == "eval":
        masks = None
    elif mode == "train":
        if rng is None:
            raise ValueError("train mode needs an rng for the dropout mask")
        masks = (rng.random((1, net.penultimate_width)) >= net.dropout_rate).astype(float)
    else:
        raise ValueError("mode must be 'train' or 'eval'")
    q, _, _ = _forward_cached(net, s[None, :], masks)
    return q[0]


def penultimate_features(net: QNetwork, state) -> np.ndarray:
    """Activations feeding the final linear layer, evaluation mode."""
    s = np.asarray(state, dtype=float)
    _, acts, _ = _forward_cached(net, s[None, :], None)
    return acts[-1][0]


def greedy_action_net(net: QNetwork, state) -> int:
    q = forward(net, state, "eval")
    return int(np.argmax(q))  # tie -> 0 via argmax convention


def td_loss_and_grads(net: QNetwork, states, actions, targets, masks=None):
    """Mean squared TD error over a batch and its gradients.

    Returns (loss, hidden_grads, final_grad) where hidden_grads mirrors
    net.hidden as (dW, db) pairs. masks fixes the dropout pattern so the
    computation is deterministic (None means eval-mode forward).
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    batch = states.shape[0]
    q, acts, pre = _forward_cached(net, states, masks)
    picked = q[np.arange(batch), actions]
    err = picked - targets
    loss = float(np.mean(err**2))

    g_q = np.zeros_like(q)
    g_q[np.arange(batch), actions] = 2.0 * err / batch
    d_final = g_q.T @ acts[-1]
    g_h = g_q @ net.final
    if masks is not None:
        g_h = g_h * masks / (1.0 - net.dropout_rate)
    hidden_grads = [None] * len(net.hidden)
    for i in range(len(net.hidden) - 1, -1, -1):
        g_z = g_h * (pre[i] > 0)
        hidden_grads[i] = (g_z.T @ acts[i], g_z.sum(axis=0))
        if i > 0:
            g_h = g_z @ net.hidden[i][0]
    return loss, hidden_grads, d_final


@dataclass(frozen=True)
class DqnTrainConfig:
    iterations: int = 20000
    batch_size: int = 64
    replay_capacity: int = 10000
    learning_rate: float = 1e-3
    discount: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_iterations: int = 10000
    target_refresh: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("iterations", "batch_size", "replay_capacity",
                     "epsilon_decay_iterations", "target_refresh"):
            if getattr(self, name) <= 0 and not (name == "iterations" and self.iterations == 0):
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or not 0 < self.discount <= 1:
            raise ValueError("bad learning_rate or discount")

    def epsilon_at(self, iteration: int) -> float:
        if iteration >= self.epsilon_decay_iterations:
            return self.epsilon_end
        frac = iteration / self.epsilon_decay_iterations
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


class _Replay:
    def __init__(self, capacity, state_dim):
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.capacity = capacity
        self.size = 0
        self.ptr = 0

    def push(self, s, a, r, s2, done):
        i = self.ptr
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s2
        self.terminal[i] = done
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch, rng):
        idx = rng.integers(self.size, size=batch)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminal[idx])


def train_dqn(env, config: DqnTrainConfig,
              layer_sizes=DEFAULT_LAYER_SIZES,
              dropout_rate=DEFAULT_DROPOUT,
              boost_every: int | None = None,
              boost_demos=None,
              boost_objective: str = "l1") -> QNetwork:
    """Standard DQN loop: replay buffer, epsilon-greedy collection, periodic
    target copy, squared TD error, Adam on all layers, dropout active on the
    penultimate activations during updates.

    When boost_every and boost_demos are given, the last layer is re-solved
    from the demos every boost_every iterations and written back in place,
    so training continues from the sparsified weights.
    """
    if boost_every is not None and boost_every <= 0:
        raise ValueError("boost_every must be positive")
    net = init_qnetwork(layer_sizes, dropout_rate, seed=config.seed)
    if config.iterations == 0:
        return net
    rng = substream(config.seed, "dqn-train")
    reset_rng = substream(config.seed, "dqn-resets")
    target = net.copy()
    replay = _Replay(config.replay_capacity, layer_sizes[0])

    # Adam state per parameter array
    params = [p for w_b in net.hidden for p in w_b] + [net.final]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    adam_t = 0

    s = env.reset(seed=int(reset_rng.integers(2**31)))
    for it in range(config.iterations):
        if rng.random() < config.epsilon_at(it):
            a = int(rng.integers(2))
        else:
            a = greedy_action_net(net, s)
        s2, r, done = env.step(a)
        replay.push(s, a, r, s2, done)
        s = env.reset(seed=int(reset_rng.integers(2**31))) if done else s2

        if replay.size >= config.batch_size:
            bs, ba, br, bs2, bterm = replay.sample(config.batch_size, rng)
            q_next, _, _ = _forward_cached(target, bs2, None)
            y = br + config.discount * q_next.max(axis=1) * ~bterm
            masks = (rng.random((config.batch_size, net.penultimate_width))
                     >= net.dropout_rate).astype(float)
            loss, hg, fg = td_loss_and_grads(net, bs, ba, y, masks)
            if not np.isfinite(loss) or loss > _DIVERGENCE_LIMIT:
                raise TrainingDiverged(f"TD loss {loss:.3g} at iteration {it}")
            grads = [g for pair in hg for g in pair] + [fg]
            adam_t += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                mhat = mi / (1 - beta1**adam_t)
                vhat = vi / (1 - beta2**adam_t)
                p -= config.learning_rate * mhat / (np.sqrt(vhat) + eps_adam)

        if boost_every is not None and boost_demos and (it + 1) % boost_every == 0:
            boosted, _ = cs_boost_last_layer(net, boost_demos,
                                             objective=boost_objective)
            net.final[...] = boosted.final  # in place: optimizer state stays attached

        if (it + 1) % config.target_refresh == 0:
            target = net.copy()
    return net


def last_layer_sparsity(net: QNetwork, threshold_frac: float = 1e-3) -> float:
    """Fraction of last-layer entries below threshold_frac times the max |w|."""
    w = np.abs(net.final)
    return float(np.mean(w < threshold_frac * w.max()))


def cs_boost_last_layer(net: QNetwork, demos, objective: str = "l1",
                        config: sparse.SolverConfig | None = None,
                        epsilon: float = sparse.DEFAULT_EPSILON,
                        lam: float = sparse.DEFAULT_LAMBDA):
    """Re-fit the final linear layer from demonstrated actions.

    demos is a list of (state, action). Margin rows are built over the
    penultimate features; the pretrained last layer is the anchor target.
    Returns (boosted_net, SolveReport); the input net is left untouched.
    """
    if not demos:
        raise ValueError("demos must be nonempty")
    if config is None:
        config = sparse.SolverConfig(constraint_penalty_weight=100.0)
    feats = np.array([penultimate_features(net, s) for s, _ in demos])
    pairs = [(feats[i], int(a)) for i, (_, a) in enumerate(demos)]
    problem = sparse.build_level2_constraints(pairs)
    w_target = np.concatenate([net.final[0], net.final[1]])
    problem = sparse.with_level2_settings(problem, epsilon=epsilon, lam=lam,
                                          w_target=w_target)
    if objective == "l1":
        report = sparse.solve_level2(problem, config)
    elif objective == "nuclear":
        report = sparse.solve_level2_nuclear(
            problem, (net.penultimate_width, 2), config)
    else:
        raise ValueError("objective must be 'l1' or 'nuclear'")
    width = net.penultimate_width
    boosted = net.copy()
    boosted.final = np.vstack([report.solution[:width], report.solution[width:]])
    return boosted, report
