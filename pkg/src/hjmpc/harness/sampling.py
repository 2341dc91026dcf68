"""Seeded initial states: uniform over the state box, kept only where the safety value clears a margin."""

from __future__ import annotations

import numpy as np

from ..valuefn import SafetyOracle, interpolate

MAX_DRAWS = 1_000_000
MIN_ACCEPTANCE = 1e-3
_CHUNK = 256


class ScenarioInfeasibleError(RuntimeError):
    """Almost no sampled state clears the start margin."""


def trial_generator(seed: int) -> np.random.Generator:
    """Counter-based stream for one trial (Philox: fixed algorithm, no OS entropy)."""
    return np.random.Generator(np.random.Philox(seed))


def _box(model):
    return np.asarray(model.state_lo, dtype=float), np.asarray(model.state_hi, dtype=float)


def sample_initial_states(scenario, oracle: SafetyOracle, n: int, seed: int,
                          margin: float | None = None) -> np.ndarray:
    """Start state for trials ``seed, seed + 1, ..., seed + n - 1``.

    Trial ``s`` takes the first draw from its own stream ``trial_generator(s)``
    whose safety value is at least ``margin`` (default: the scenario's start
    margin).  Returns an ``(n, state_dim)`` array.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    margin = scenario.start_margin if margin is None else margin
    lo, hi = _box(scenario.model)
    starts = np.empty((n, len(lo)))
    draws = 0
    for i in range(n):
        gen = trial_generator(seed + i)
        while True:
            batch = gen.uniform(lo, hi, size=(_CHUNK, len(lo)))
            ok = np.ones(_CHUNK, dtype=bool) if margin == -np.inf else interpolate(oracle.field, batch) >= margin
            hit = np.flatnonzero(ok)
            if hit.size:
                draws += int(hit[0]) + 1
                starts[i] = batch[hit[0]]
                break
            draws += _CHUNK
            if draws >= MAX_DRAWS and i / draws < MIN_ACCEPTANCE:
                raise ScenarioInfeasibleError(
                    f"{draws} draws yielded {i} starts with V_s >= {margin}; "
                    "the safe set is too small to sample")
    return starts
