"""CartPole physics simulator, deterministic given a reset seed.

State layout is a float64 array of shape (4,):

    [cart_position (m), cart_velocity (m/s),
     pole_angle (rad), pole_angular_velocity (rad/s)]

Dynamics follow the classic benchmark: gravity 9.8, cart mass 1.0, pole mass
0.1, pole half-length 0.5, +/-10 N force, explicit Euler with tau = 0.02 where
positions are advanced with the pre-update velocities. Episodes terminate when
|position| > 2.4, |angle| > 12 degrees, or after 200 steps. Reward is 1.0 per
step, including the terminating one, so episodic return equals episode length.

Reset states are drawn uniformly from [-0.05, 0.05]^4 with numpy's PCG64
(``np.random.default_rng``); the same seed always yields the same state.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
POLE_HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * POLE_HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02

POSITION_LIMIT = 2.4
ANGLE_LIMIT = 12 * 2 * math.pi / 360  # 0.2095 rad
MAX_EPISODE_STEPS = 200

RESET_BOUND = 0.05

STATE_DIM = 4
ACTIONS = (0, 1)


class StepResult(NamedTuple):
    state: np.ndarray
    reward: float
    done: bool


def _require_valid_state(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (STATE_DIM,):
        raise ValueError(f"state must have shape ({STATE_DIM},), got {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ValueError(f"state contains non-finite components: {state}")
    return state


def physics_step(state: np.ndarray, action: int) -> np.ndarray:
    """One Euler step of the cart-pole equations; pure, no termination logic.

    Action 1 pushes the cart right (+10 N), action 0 left (-10 N).
    """
    state = _require_valid_state(state)
    if action not in ACTIONS:
        raise ValueError(f"action must be 0 or 1, got {action!r}")

    x, x_dot, theta, theta_dot = state
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    sin_theta = math.sin(theta)
    cos_theta = math.cos(theta)

    temp = (force + POLE_MASS_LENGTH * theta_dot**2 * sin_theta) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_theta - cos_theta * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS

    # Positions advance with pre-update velocities (semi-explicit Euler).
    return np.array(
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    )


def out_of_bounds(state: np.ndarray) -> bool:
    """Whether the cart position or pole angle exceeds the failure limits."""
    return bool(abs(state[0]) > POSITION_LIMIT or abs(state[2]) > ANGLE_LIMIT)


class CartPoleEnv:
    """Single-threaded cart-pole state machine.

    Instances share no mutable state, so independent copies may be stepped in
    parallel for evaluation.
    """

    def __init__(self, max_episode_steps: int = MAX_EPISODE_STEPS):
        self.max_episode_steps = max_episode_steps
        self.state: np.ndarray | None = None
        self.steps = 0
        self.episode_done = True

    def reset(self, seed: int) -> np.ndarray:
        """Start a new episode from a state uniform in [-0.05, 0.05]^4."""
        rng = np.random.default_rng(seed)
        self.state = rng.uniform(-RESET_BOUND, RESET_BOUND, size=STATE_DIM)
        self.steps = 0
        self.episode_done = False
        return self.state.copy()

    def set_state(self, state: np.ndarray) -> np.ndarray:
        """Start a new episode from an explicit state (used for probes)."""
        self.state = _require_valid_state(state).copy()
        self.steps = 0
        self.episode_done = out_of_bounds(self.state)
        return self.state.copy()

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if self.episode_done:
            raise RuntimeError("episode has terminated; call reset()")

        self.state = physics_step(self.state, action)
        self.steps += 1
        done = out_of_bounds(self.state) or self.steps >= self.max_episode_steps
        self.episode_done = done
        return StepResult(self.state.copy(), 1.0, done)
