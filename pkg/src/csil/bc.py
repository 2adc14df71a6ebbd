"""Behavior-cloning baseline: logistic action classifier on the same features
as the sparse agents, plus the sample-size sweep used for comparison.

BC here is deliberately the same model class as the reconstructed agents
(linear in the 500-dim features), so the comparison isolates what the sparsity
prior buys rather than mixing in model-capacity differences.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .cartpole import CartPoleEnv
from .linear_agent import greedy_action
from .seeding import substream, substream_seed

DEFAULT_SWEEP_SIZES = (10, 21, 50, 100, 200, 500, 1000, 2000)


@dataclass(frozen=True)
class BcModel:
    """Two action logits, each a linear function of the features."""

    weights: np.ndarray  # (2, feature_dim)
    biases: np.ndarray  # (2,)

    def __post_init__(self):
        if self.weights.shape[0] != 2 or self.biases.shape != (2,):
            raise ValueError("expected two action logits")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("non-finite parameters")

    def logits(self, phi: np.ndarray) -> np.ndarray:
        return self.weights @ phi + self.biases


@dataclass(frozen=True)
class BcConfig:
    epochs: int = 400
    learning_rate: float = 1.0
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("bad BC config")


def bc_action(model: BcModel, phi: np.ndarray) -> int:
    """Argmax logit; exact tie goes to action 0."""
    return int(np.argmax(model.logits(np.asarray(phi, dtype=float))))


def bc_loss(model: BcModel, phis: np.ndarray, actions: np.ndarray, l2: float) -> float:
    z = phis @ model.weights.T + model.biases
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = -logp[np.arange(len(actions)), actions].mean()
    return float(nll + 0.5 * l2 * (model.weights**2).sum())


def train_bc(demos, config: BcConfig = BcConfig()) -> BcModel:
    """Full-batch gradient descent on softmax cross-entropy.

    demos: list of (feature vector, action). Single-class data is allowed and
    produces a constant classifier (with a warning).
    """
    if not demos:
        raise ValueError("demos must be nonempty")
    phis = np.array([np.asarray(p, dtype=float) for p, _ in demos])
    actions = np.array([int(a) for _, a in demos])
    if len(np.unique(actions)) < 2:
        warnings.warn("single-class demonstrations; BC degenerates to a constant")
    dim = phis.shape[1]
    w = np.zeros((2, dim))
    b = np.zeros(2)
    n = len(actions)
    onehot = np.zeros((n, 2))
    onehot[np.arange(n), actions] = 1.0
    for _ in range(config.epochs):
        z = phis @ w.T + b
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= config.learning_rate * (g.T @ phis + config.l2 * w)
        b -= config.learning_rate * g.sum(axis=0)
    return BcModel(weights=w, biases=b)


def _expert_pool(env, expert_weights, featurizer, episodes, seed):
    states, rng = [], np.random.default_rng(seed)
    for _ in range(episodes):
        s = env.reset(seed=int(rng.integers(2**31)))
        done = False
        while not done:
            states.append(s)
            a = greedy_action(expert_weights, featurizer.transform(s))
            s, _, done = env.step(a)
    return np.array(states)


def _eval_bc(model, featurizer, episodes, seed):
    env, rng, totals = CartPoleEnv(), np.random.default_rng(seed), []
    for _ in range(episodes):
        s = env.reset(seed=int(rng.integers(2**31)))
        done, tot = False, 0.0
        while not done:
            s, _, done = env.step(bc_action(model, featurizer.transform(s)))
            tot += 1.0
        totals.append(tot)
    return np.array(totals)


def bc_sample_sweep(env, expert_weights, featurizer, sizes=DEFAULT_SWEEP_SIZES,
                    seeds=(0, 1, 2), eval_episodes=20, config: BcConfig = BcConfig(),
                    csv_path=None):
    """Train BC at each sample size and evaluate.

    Returns rows: one dict per (size, seed) plus an aggregate row per size.
    Sample states come from on-policy expert rollouts, matching how demos are
    gathered elsewhere.
    """
    sizes = list(sizes)
    if any(s < 1 for s in sizes):
        raise ValueError("sizes must be >= 1")
    rows = []
    for seed in seeds:
        # one pool per seed, sized for the largest request
        need = max(sizes)
        pool = _expert_pool(env, expert_weights, featurizer, episodes=5,
                            seed=substream_seed(seed, "bc-pool"))
        extra_rng = substream(seed, "bc-pool-extra")
        while len(pool) < need:
            more = _expert_pool(env, expert_weights, featurizer, episodes=5,
                                seed=int(extra_rng.integers(2**31)))
            pool = np.concatenate([pool, more])
        labels = np.array([greedy_action(expert_weights, featurizer.transform(s))
                           for s in pool])
        pick_rng = substream(seed, "bc-pick")
        for size in sizes:
            idx = pick_rng.choice(len(pool), size=size, replace=False)
            phis = featurizer.transform_batch(pool[idx])
            model = train_bc(list(zip(phis, labels[idx])), config)
            ev = _eval_bc(model, featurizer, eval_episodes,
                          substream_seed(seed, f"bc-eval-{size}"))
            rows.append({"size": size, "seed": seed,
                         "mean_reward": float(ev.mean()),
                         "median_reward": float(np.median(ev))})
    for size in sizes:
        sub = [r for r in rows if r["size"] == size and r["seed"] != "all"]
        rows.append({"size": size, "seed": "all",
                     "mean_reward": float(np.mean([r["mean_reward"] for r in sub])),
                     "median_reward": float(np.median([r["median_reward"] for r in sub]))})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["size", "seed", "mean_reward",
                                                    "median_reward"])
            writer.writeheader()
            writer.writerows(rows)
    return rows
