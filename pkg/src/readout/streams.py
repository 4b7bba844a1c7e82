"""
Random streams for the Monte-Carlo estimators.

Every stream is a Philox generator keyed by a SeedSequence built from
(master_seed, purpose, initial_state, index). Blocks of trials, single
trajectories and preparation runs each get their own key, so results do not
depend on how work is split across processes.
"""

import numpy as np
from scipy.stats import norm

RNG_ALGORITHM = "numpy.random.Philox keyed by SeedSequence(master_seed, purpose, state, index)"

BLOCK_SIZE = 65536

PURPOSES = {
    "trajectory": 1,
    "counts": 2,
    "tm_mc": 3,
    "mlm": 4,
    "prep": 5,
}

_STATE_KEYS = {None: 0, "F1": 1, "F2": 2}


def stream(master_seed: int, purpose: str, state: str | None = None, index: int = 0) -> np.random.Generator:
    """
    Independent generator for one (purpose, state, index) slot.

    Raises:
        ValueError: On a negative seed or index.
        KeyError: On an unknown purpose.
    """
    if master_seed < 0 or index < 0:
        raise ValueError(f"seed and index must be non-negative, got {master_seed}, {index}")
    if purpose not in PURPOSES:
        raise KeyError(f"Unknown stream purpose '{purpose}'. Known purposes: {', '.join(PURPOSES)}")
    key = [int(master_seed), PURPOSES[purpose], _STATE_KEYS[None if state is None else str(state)], int(index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def blocks(n_trials: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """Split n_trials into (block_index, size) pairs."""
    if n_trials < 0:
        raise ValueError(f"n_trials must be >= 0, got {n_trials}")
    full, rest = divmod(n_trials, block_size)
    out = [(i, block_size) for i in range(full)]
    if rest:
        out.append((full, rest))
    return out


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    z = float(norm.ppf(0.5 + confidence / 2))
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return (max(0.0, float(center - half)), min(1.0, float(center + half)))
