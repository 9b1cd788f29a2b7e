"""Pure numpy implementation of the sampling kernels.

Mirrors ``_kernels.pyx`` function-for-function. Random draws come from a
SplitMix64 counter scheme, so both backends see identical draws:

* trajectory seed for index ``i`` under master seed ``m``: ``m XOR mix64((i + 1) * GOLDEN)``
* draw ``k`` of the stream seeded by ``s``: ``unit(mix64(s + (k + 1) * GOLDEN))``
* ``unit(z) = (z >> 11) * 2**-53``, a double in ``[0, 1)``

All arithmetic is modulo 2**64.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z) -> np.ndarray:
    """SplitMix64 output finalizer on a uint64 array."""
    z = np.array(z, dtype=np.uint64, ndmin=1)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def to_unit(z) -> np.ndarray:
    return (np.asarray(z, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def trajectory_seeds(master_seed: int, indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.uint64)
    return np.uint64(master_seed & _MASK) ^ mix64((idx + np.uint64(1)) * GOLDEN)


def stream_draws(seeds, n_steps: int) -> np.ndarray:
    """Draws of shape ``(len(seeds), n_steps)``."""
    seeds = np.array(seeds, dtype=np.uint64, ndmin=1)
    k = np.arange(1, n_steps + 1, dtype=np.uint64)
    return to_unit(mix64(seeds[:, None] + k[None, :] * GOLDEN))


def _select(probs: np.ndarray, draws: np.ndarray, eps: float):
    """Inverse-CDF selection over the eligible branches, rows independent."""
    eligible = probs >= eps
    masked = np.where(eligible, probs, 0.0)
    cum = np.cumsum(masked, axis=1)
    total = cum[:, -1]
    u = draws * total
    hit = eligible & (u[:, None] <= cum)
    # fall back to the last eligible branch if rounding leaves u above every bin
    last = probs.shape[1] - 1 - np.argmax(eligible[:, ::-1], axis=1)
    idx = np.where(hit.any(axis=1), np.argmax(hit, axis=1), last)
    idx = np.where(total >= eps, idx, -1)
    return idx, total


def sample_branch(eff: np.ndarray, psi: np.ndarray, draw: float, eps: float):
    """Returns ``(index, probability, total, post_state)``; index is -1 if every branch is below ``eps``."""
    phi = eff @ psi
    probs = np.sum(phi.real**2 + phi.imag**2, axis=1)
    idx, total = _select(probs[None, :], np.array([draw]), eps)
    i = int(idx[0])
    if i < 0:
        return -1, 0.0, float(total[0]), psi.copy()
    return i, float(probs[i]), float(total[0]), phi[i] / np.sqrt(probs[i])


def run_batch(eff: np.ndarray, psi0: np.ndarray, seeds: np.ndarray, n_steps: int, eps: float):
    """Run ``len(seeds)`` independent trajectories.

    Returns ``(final_states, branch_indices, probabilities, max_total_dev, failed)``
    where ``failed`` counts steps with no eligible branch.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    n = seeds.size
    states = np.tile(np.asarray(psi0, dtype=np.complex128), (n, 1))
    branches = np.zeros((n, n_steps), dtype=np.int64)
    probs_out = np.zeros((n, n_steps), dtype=np.float64)
    max_dev = 0.0
    failed = 0
    if n_steps == 0 or n == 0:
        return states, branches, probs_out, max_dev, failed
    draws = stream_draws(seeds, n_steps)
    rows = np.arange(n)
    for k in range(n_steps):
        phi = np.einsum("bij,nj->nbi", eff, states)
        probs = np.sum(phi.real**2 + phi.imag**2, axis=2)
        idx, total = _select(probs, draws[:, k], eps)
        bad = idx < 0
        failed += int(bad.sum())
        idx = np.where(bad, 0, idx)
        max_dev = max(max_dev, float(np.max(np.abs(total - 1.0))))
        p = probs[rows, idx]
        chosen = phi[rows, idx]
        safe = np.where(bad, 1.0, p)
        states = np.where(bad[:, None], states, chosen / np.sqrt(safe)[:, None])
        branches[:, k] = np.where(bad, -1, idx)
        probs_out[:, k] = np.where(bad, 0.0, p)
    return states, branches, probs_out, max_dev, failed
