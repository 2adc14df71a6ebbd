"""Expert Q-function with linear approximation over the cosine features.

Q(s, a) = w_a . phi(s) with one weight vector per action. Training is
semi-gradient one-step Q-learning with epsilon-greedy exploration; the two
weight vectors concatenate into a single stacked vector [w0; w1] that the
sparse recovery code treats as the signal to reconstruct.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cartpole import CartPoleEnv
from .features import RBFFeaturizer
from .seeding import substream

DIVERGENCE_LIMIT = 1e6


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightStack:
    """Per-action weight vectors; `stacked` is their concatenation [w0; w1]."""

    w0: np.ndarray
    w1: np.ndarray

    def __post_init__(self):
        if self.w0.shape != self.w1.shape or self.w0.ndim != 1:
            raise ValueError("w0 and w1 must be 1-d vectors of equal length")
        if not (np.all(np.isfinite(self.w0)) and np.all(np.isfinite(self.w1))):
            raise ValueError("weights must be finite")

    @property
    def dim(self) -> int:
        return self.w0.shape[0]

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.w0, self.w1])

    @classmethod
    def zeros(cls, dim: int) -> "WeightStack":
        return cls(np.zeros(dim), np.zeros(dim))

    @classmethod
    def from_stacked(cls, x: np.ndarray) -> "WeightStack":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] % 2 != 0:
            raise ValueError(f"stacked vector must be 1-d with even length, got {x.shape}")
        half = x.shape[0] // 2
        return cls(x[:half].copy(), x[half:].copy())

    def to_json(self) -> str:
        return json.dumps(
            {"dim": self.dim, "w0": self.w0.tolist(), "w1": self.w1.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "WeightStack":
        doc = json.loads(text)
        ws = cls(np.asarray(doc["w0"], dtype=float), np.asarray(doc["w1"], dtype=float))
        if ws.dim != doc["dim"]:
            raise ValueError("dimension header disagrees with the stored vectors")
        return ws


def q_values(weights: WeightStack, phi: np.ndarray) -> np.ndarray:
    """[w0 . phi, w1 . phi] for both actions."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (weights.dim,):
        raise ValueError(f"feature dim {phi.shape} does not match weights ({weights.dim},)")
    return np.array([weights.w0 @ phi, weights.w1 @ phi])


def greedy_action(weights: WeightStack, phi: np.ndarray) -> int:
    """Argmax action; ties break toward action 0."""
    return int(np.argmax(q_values(weights, phi)))


@dataclass(frozen=True)
class QLearningConfig:
    episodes: int = 10000
    learning_rate: float = 0.01
    discount: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 5000
    l1_shrinkage: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if self.l1_shrinkage < 0:
            raise ValueError("l1_shrinkage must be nonnegative")

    def epsilon_at(self, episode: int) -> float:
        if self.epsilon_decay_episodes <= 0:
            return self.epsilon_end
        frac = min(1.0, episode / self.epsilon_decay_episodes)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class LinearTrainResult:
    weights: WeightStack
    episode_rewards: list[float] = field(default_factory=list)
    solved_at: int | None = None  # episode where the stop threshold was first met


def apply_td_update(
    w0: np.ndarray,
    w1: np.ndarray,
    phi: np.ndarray,
    action: int,
    td_target: float,
    learning_rate: float,
) -> None:
    """In-place semi-gradient update of the taken action's vector only."""
    w = w0 if action == 0 else w1
    delta = td_target - w @ phi
    w += learning_rate * delta * phi


def train_linear_q(
    env: CartPoleEnv,
    featurizer: RBFFeaturizer,
    config: QLearningConfig,
    stop_reward: float | None = None,
) -> LinearTrainResult:
    """Semi-gradient Q-learning from zero-initialized weights.

    Records the episodic reward curve. If `stop_reward` is given, training
    stops early once the trailing-100-episode mean reaches it. A positive
    l1_shrinkage soft-thresholds the updated vector after each step
    (truncated gradient), which concentrates the learned Q on few features
    and is what makes the expert recoverable from a handful of equations.
    Raises TrainingDiverged when any weight magnitude exceeds 1e6.
    """
    dim = featurizer.dim
    w0 = np.zeros(dim)
    w1 = np.zeros(dim)
    rng = substream(config.seed, "q-learning")
    reset_rng = substream(config.seed, "q-learning-resets")
    rewards: list[float] = []
    solved_at = None

    for episode in range(config.episodes):
        epsilon = config.epsilon_at(episode)
        state = env.reset(int(reset_rng.integers(2**63)))
        phi = featurizer.transform(state)
        total = 0.0
        done = False
        while not done:
            if rng.random() < epsilon:
                action = int(rng.integers(2))
            else:
                q0, q1 = w0 @ phi, w1 @ phi
                action = 0 if q0 >= q1 else 1
            next_state, reward, done = env.step(action)
            total += reward
            if done:
                td_target = reward
                next_phi = None
            else:
                next_phi = featurizer.transform(next_state)
                td_target = reward + config.discount * max(w0 @ next_phi, w1 @ next_phi)
            apply_td_update(w0, w1, phi, action, td_target, config.learning_rate)
            if config.l1_shrinkage > 0:
                # truncated-gradient L1 step on the vector the update touched
                w = w0 if action == 0 else w1
                t = config.learning_rate * config.l1_shrinkage
                np.multiply(np.sign(w), np.maximum(np.abs(w) - t, 0.0), out=w)
            if next_phi is not None:
                phi = next_phi

        rewards.append(total)
        peak = max(np.max(np.abs(w0)), np.max(np.abs(w1)))
        if peak > DIVERGENCE_LIMIT:
            raise TrainingDiverged(
                f"weight magnitude {peak:.3g} exceeded {DIVERGENCE_LIMIT:.0e} at "
                f"episode {episode}; try a smaller learning rate"
            )
        if stop_reward is not None and len(rewards) >= 100:
            if float(np.mean(rewards[-100:])) >= stop_reward:
                solved_at = episode
                break

    return LinearTrainResult(
        weights=WeightStack(w0, w1), episode_rewards=rewards, solved_at=solved_at
    )
