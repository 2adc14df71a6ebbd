"""Random-Fourier cosine expansion of the 4-dim cart-pole state.

The feature map standardizes the state componentwise, then concatenates five
cosine blocks, one per kernel bandwidth. Block ``b`` with bandwidth gamma and
``m`` components maps a standardized state ``z`` to

    sqrt(2/m) * cos(W_b @ z + b_b)

with ``W_b`` drawn from N(0, 2*gamma) and offsets uniform on [0, 2*pi). Inner
products of one block's features then approximate the Gaussian kernel
exp(-gamma * ||z - z'||^2). Five blocks of 100 components give the 500-dim
representation used throughout.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cartpole

DEFAULT_BANDWIDTHS = (5.0, 2.0, 1.0, 0.5, 0.1)
COMPONENTS_PER_BLOCK = 100

# Sampling box around the reachable state region, used to draw fitting samples:
# position +/-2.4, velocity +/-3, angle +/-0.21, angular velocity +/-3.
STATE_BOX_LOW = np.array([-cartpole.POSITION_LIMIT, -3.0, -0.21, -3.0])
STATE_BOX_HIGH = -STATE_BOX_LOW


def sample_state_box(n: int, seed: int) -> np.ndarray:
    """Draw `n` states uniformly from the documented state box, shape (n, 4)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(STATE_BOX_LOW, STATE_BOX_HIGH, size=(n, cartpole.STATE_DIM))


@dataclass(frozen=True)
class RFFBlock:
    """One cosine block: N(0, 2*gamma) frequencies plus uniform phase offsets."""

    bandwidth: float
    frequencies: np.ndarray  # (components, state_dim)
    offsets: np.ndarray  # (components,)

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.frequencies.shape[0] != self.offsets.shape[0]:
            raise ValueError("frequencies and offsets disagree on component count")


@dataclass(frozen=True)
class RBFFeaturizer:
    """Fitted feature map; immutable, safe to share across threads."""

    scaler_mean: np.ndarray
    scaler_scale: np.ndarray
    blocks: tuple[RFFBlock, ...]
    # Stacked copies of the per-block arrays so transform is a single matvec.
    _frequencies: np.ndarray = field(init=False, repr=False)
    _offsets: np.ndarray = field(init=False, repr=False)
    _amplitudes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if np.any(self.scaler_scale <= 0):
            raise ValueError("scaler_scale components must be strictly positive")
        object.__setattr__(
            self, "_frequencies", np.vstack([b.frequencies for b in self.blocks])
        )
        object.__setattr__(
            self, "_offsets", np.concatenate([b.offsets for b in self.blocks])
        )
        amps = np.concatenate(
            [
                np.full(b.frequencies.shape[0], np.sqrt(2.0 / b.frequencies.shape[0]))
                for b in self.blocks
            ]
        )
        object.__setattr__(self, "_amplitudes", amps)

    @property
    def dim(self) -> int:
        return self._offsets.shape[0]

    def transform(self, state: np.ndarray) -> np.ndarray:
        """Feature vector for one state; components bounded by sqrt(2/m)."""
        state = np.asarray(state, dtype=float)
        if state.shape != (cartpole.STATE_DIM,):
            raise ValueError(f"expected a 4-dim state, got shape {state.shape}")
        if not np.all(np.isfinite(state)):
            raise ValueError(f"state contains non-finite components: {state}")
        z = (state - self.scaler_mean) / self.scaler_scale
        return self._amplitudes * np.cos(self._frequencies @ z + self._offsets)

    def transform_batch(self, states: np.ndarray) -> np.ndarray:
        """Feature matrix for states of shape (n, 4), result (n, dim)."""
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[1] != cartpole.STATE_DIM:
            raise ValueError(f"expected shape (n, 4), got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ValueError("states contain non-finite components")
        z = (states - self.scaler_mean) / self.scaler_scale
        return self._amplitudes * np.cos(z @ self._frequencies.T + self._offsets)

    def to_json(self) -> str:
        doc = {
            "scaler_mean": self.scaler_mean.tolist(),
            "scaler_scale": self.scaler_scale.tolist(),
            "blocks": [
                {
                    "bandwidth": b.bandwidth,
                    "frequencies": b.frequencies.tolist(),  # row-major
                    "offsets": b.offsets.tolist(),
                }
                for b in self.blocks
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RBFFeaturizer":
        doc = json.loads(text)
        blocks = tuple(
            RFFBlock(
                bandwidth=float(b["bandwidth"]),
                frequencies=np.asarray(b["frequencies"], dtype=float),
                offsets=np.asarray(b["offsets"], dtype=float),
            )
            for b in doc["blocks"]
        )
        return cls(
            scaler_mean=np.asarray(doc["scaler_mean"], dtype=float),
            scaler_scale=np.asarray(doc["scaler_scale"], dtype=float),
            blocks=blocks,
        )


def fit_featurizer(
    samples: np.ndarray,
    bandwidths: tuple[float, ...] = DEFAULT_BANDWIDTHS,
    seed: int = 0,
    components_per_block: int = COMPONENTS_PER_BLOCK,
) -> RBFFeaturizer:
    """Fit the standardizer to `samples` and draw frequencies/offsets once.

    Zero-variance components get their scale clamped to 1 with a warning.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != cartpole.STATE_DIM:
        raise ValueError(f"samples must have shape (n, 4), got {samples.shape}")
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 samples to fit the standardizer")
    if any(g <= 0 for g in bandwidths):
        raise ValueError(f"bandwidths must be positive, got {bandwidths}")

    mean = samples.mean(axis=0)
    scale = samples.std(axis=0)
    # constant columns come out as ~1e-17 rather than exactly 0
    degenerate = scale < 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(degenerate):
        warnings.warn("zero-variance state component; clamping its scale to 1")
        scale = np.where(degenerate, 1.0, scale)

    rng = np.random.default_rng(seed)
    blocks = []
    for gamma in bandwidths:
        freqs = rng.normal(
            0.0, np.sqrt(2.0 * gamma), size=(components_per_block, cartpole.STATE_DIM)
        )
        offsets = rng.uniform(0.0, 2.0 * np.pi, size=components_per_block)
        blocks.append(RFFBlock(bandwidth=gamma, frequencies=freqs, offsets=offsets))
    return RBFFeaturizer(scaler_mean=mean, scaler_scale=scale, blocks=tuple(blocks))
