"""Stochastic pure-state trajectories and Monte Carlo ensemble estimates.

A step picks branch ``i`` with probability ``w_i ||K_i psi||^2`` and moves to
``K_i psi`` renormalized. Draws are counter-based (see ``kernels``), so a
trajectory is a pure function of ``(family, psi0, n_steps, seed)`` and the
``n``-step branch sequence is a prefix of the ``n + m``-step one.
"""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .linops import DensityOperator, StateVector, as_density, as_state, trace_distance
from .semigroup import KrausFamily, _require_complete, apply_channel

ZERO_BRANCH_EPSILON = 1e-14
PROBABILITY_TOL = 1e-9


class InconsistencyError(RuntimeError):
    """Internal inconsistency detected mid-computation (e.g. branch probabilities do not sum to 1)."""


@dataclass(frozen=True)
class Step:
    branch_index: int
    probability: float
    post_state: StateVector


@dataclass(frozen=True)
class TrajectoryRecord:
    seed: int
    steps: tuple
    initial_state: StateVector

    @property
    def branch_indices(self) -> list[int]:
        return [s.branch_index for s in self.steps]

    @property
    def final_state(self) -> StateVector:
        return self.steps[-1].post_state if self.steps else self.initial_state

    def to_json(self) -> str:
        psi = self.final_state.amplitudes
        return json.dumps(
            {
                "seed": self.seed,
                "branch_indices": self.branch_indices,
                "final_state": {"re": psi.real.tolist(), "im": psi.imag.tolist()},
            }
        )


@dataclass(frozen=True)
class SamplerConfig:
    master_seed: int
    n_trajectories: int
    zero_branch_epsilon: float = ZERO_BRANCH_EPSILON
    workers: int = 1

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _check_inputs(f: KrausFamily, psi: StateVector) -> None:
    _require_complete(f)
    if psi.dim != f.dim:
        raise ValueError(f"state dim {psi.dim} does not match family dim {f.dim}")


def sample_branch(f: KrausFamily, psi, random_draw: float, eps: float = ZERO_BRANCH_EPSILON):
    """One stochastic update. Returns ``(branch_index, probability, post_state)``."""
    psi = as_state(psi)
    _check_inputs(f, psi)
    if not 0.0 <= random_draw < 1.0:
        raise ValueError(f"random_draw must be in [0, 1), got {random_draw!r}")
    idx, prob, total, out = kernels.sample_branch(f.effective, psi.amplitudes, random_draw, eps)
    if idx < 0:
        raise InconsistencyError(f"no branch of {f.label!r} has probability >= {eps:g}")
    if abs(total - 1.0) > PROBABILITY_TOL:
        raise InconsistencyError(f"branch probabilities sum to {total!r}, not 1")
    return idx, prob, StateVector.normalized(out)


def branch_probabilities(f: KrausFamily, psi) -> np.ndarray:
    phi = f.effective @ as_state(psi).amplitudes
    return np.sum(np.abs(phi) ** 2, axis=1)


def _batch(f: KrausFamily, psi0: StateVector, seeds: np.ndarray, n_steps: int, eps: float):
    finals, branches, probs, max_dev, failed = kernels.run_batch(f.effective, psi0.amplitudes, seeds, n_steps, eps)
    if failed:
        raise InconsistencyError(f"{failed} step(s) had no branch with probability >= {eps:g}")
    if max_dev > PROBABILITY_TOL:
        raise InconsistencyError(f"branch probabilities deviated from 1 by {max_dev:.3e}")
    return finals, branches, probs


def run_trajectory(f: KrausFamily, psi0, n_steps: int, seed: int, eps: float = ZERO_BRANCH_EPSILON) -> TrajectoryRecord:
    """Sequential trajectory with per-step records; uses the same draws as the batch kernel."""
    psi0 = as_state(psi0)
    _check_inputs(f, psi0)
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    draws = kernels.stream_draws(np.array([seed], dtype=np.uint64), n_steps)[0] if n_steps else ()
    steps = []
    psi = psi0
    for u in draws:
        idx, p, psi = sample_branch(f, psi, float(u), eps)
        steps.append(Step(idx, p, psi))
    return TrajectoryRecord(seed, tuple(steps), psi0)


def trajectory_seeds(cfg: SamplerConfig) -> np.ndarray:
    return kernels.trajectory_seeds(cfg.master_seed, np.arange(cfg.n_trajectories, dtype=np.uint64))


def run_ensemble(f: KrausFamily, psi0, n_steps: int, cfg: SamplerConfig, chunk: int = 65536):
    """Final states and branch sequences for every trajectory, ordered by trajectory index."""
    psi0 = as_state(psi0)
    _check_inputs(f, psi0)
    seeds = trajectory_seeds(cfg)
    chunks = [seeds[i : i + chunk] for i in range(0, seeds.size, chunk)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(lambda s: _batch(f, psi0, s, n_steps, cfg.zero_branch_epsilon), chunks))
    else:
        parts = [_batch(f, psi0, s, n_steps, cfg.zero_branch_epsilon) for s in chunks]
    finals = np.concatenate([p[0] for p in parts])
    branches = np.concatenate([p[1] for p in parts])
    return seeds, finals, branches


def _mean_projector(finals: np.ndarray) -> np.ndarray:
    # chunked, index-ordered reduction: identical bytes for any worker count
    n, d = finals.shape
    acc = np.zeros((d, d), dtype=np.complex128)
    for i in range(0, n, 4096):
        blk = finals[i : i + 4096]
        acc += blk.T @ blk.conj()
    return acc / n


def estimate_ensemble(f: KrausFamily, psi0, n_steps: int, cfg: SamplerConfig) -> DensityOperator:
    psi0 = as_state(psi0)
    _, finals, _ = run_ensemble(f, psi0, n_steps, cfg)
    m = _mean_projector(finals)
    m = 0.5 * (m + m.conj().T)
    return DensityOperator(m / np.trace(m).real)


def exact_ensemble(f: KrausFamily, psi0, n_steps: int) -> DensityOperator:
    rho = as_density(as_state(psi0))
    for _ in range(n_steps):
        rho = apply_channel(f, rho)
    return rho


def ensemble_consistency(f: KrausFamily, psi0, n_steps: int, cfg: SamplerConfig) -> float:
    return trace_distance(estimate_ensemble(f, psi0, n_steps, cfg), exact_ensemble(f, psi0, n_steps))


def sequence_probabilities(f: KrausFamily, psi0, n_steps: int) -> dict:
    """Exact probability of every branch sequence of length ``n_steps`` (enumeration; small cases only)."""
    psi = as_state(psi0).amplitudes
    out = {}
    for seq in itertools.product(range(len(f)), repeat=n_steps):
        v = psi
        for i in seq:
            v = f.effective[i] @ v
        out[seq] = float(np.vdot(v, v).real)
    return out
