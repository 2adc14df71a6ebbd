"""Named random substreams derived from a single root seed.

Every stochastic component (environment resets, featurizer draws, solver
targets, evaluation episodes, ...) pulls its generator from here so that
components can be re-seeded independently while the whole pipeline stays
reproducible from one integer. Generators are numpy PCG64 via
``numpy.random.default_rng``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(root_seed: int, name: str) -> int:
    """Derive a stable 63-bit seed for the substream `name`."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def substream(root_seed: int, name: str) -> np.random.Generator:
    """A fresh PCG64 generator for the named substream."""
    return np.random.default_rng(substream_seed(root_seed, name))
