"""Seeded Monte Carlo rollouts for the closed forms and solved policies.

Rollouts use numpy's PCG64 generator, one independent stream per call,
so a given seed reproduces a report bit for bit. Standard errors come
from batch means over contiguous batches because consecutive blocks are
autocorrelated through the pool and the model state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, SolverError
from .models import ModelParams

BATCHES = 100


@dataclass(frozen=True)
class SimReport:
    """Rollout tallies: block count, whale rate, revenue rate, errors.

    ``q_hat``/``q_se`` are only meaningful for honest rollouts, where
    whale inclusion is observable; policy rollouts report them as NaN.
    """

    blocks: int
    q_hat: float
    rho_hat: float
    q_se: float
    rho_se: float
    batches: int
    seed: int

    def __post_init__(self) -> None:
        assert self.blocks > 0
        assert math.isnan(self.q_se) or self.q_se >= 0.0
        assert self.rho_se >= 0.0


def _batch_se(series: np.ndarray) -> tuple[float, int]:
    """Standard error of the mean via batch means."""
    n = series.size
    b = min(BATCHES, n)
    if b < 2:
        return 0.0, b
    size = n // b
    means = series[: b * size].reshape(b, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(b)), b


def simulate_honest(params: ModelParams, n_blocks: int, seed: int) -> SimReport:
    """Roll all-honest mining and tally whale inclusion and miner revenue.

    The pool follows the event race between whale arrivals and block
    creations: before each block a geometric number of arrivals lands
    (each event is an arrival with probability delta/(1+delta)), excess
    arrivals at a full pool are discarded, and the block claims one
    pending transaction when any is available. Each block belongs to
    the miner with probability alpha.
    """
    if n_blocks < 1:
        raise ValueError(f"n_blocks must be at least 1, got {n_blocks}")
    rng = np.random.Generator(np.random.PCG64(seed))
    # Trials until the first block event; draws - 1 arrivals precede it.
    arrivals = rng.geometric(1.0 / (1.0 + params.delta), size=n_blocks) - 1
    mine = rng.random(n_blocks) < params.alpha

    whale = np.zeros(n_blocks, dtype=bool)
    pool = 0
    cap = params.max_pool
    for i, k in enumerate(arrivals):
        pool = min(pool + int(k), cap)
        if pool:
            whale[i] = True
            pool -= 1

    per_block = mine * (
        1.0 + params.guaranteed_fee + params.whale_fee * whale
    )
    q_se, batches = _batch_se(whale.astype(float))
    rho_se, _ = _batch_se(per_block)
    return SimReport(
        blocks=n_blocks,
        q_hat=float(whale.mean()),
        rho_hat=float(per_block.mean()),
        q_se=q_se,
        rho_se=rho_se,
        batches=batches,
        seed=seed,
    )


def simulate_policy(mdp: Mdp, policy, n_steps: int, seed: int) -> SimReport:
    """Roll ``mdp`` under ``policy`` and report revenue per difficulty.

    The rollout runs on the original (untransformed) model from its
    initial state, accumulating rewards and difficulty along the chosen
    rows; the revenue rate is their overall ratio. A policy that never
    accumulates difficulty is reported as an error. Standard errors use
    batch ratios over contiguous step ranges; batches without settled
    difficulty are left out of the error estimate.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    pol = np.asarray(policy, dtype=np.int64)[: mdp.n_states]
    if pol.shape != (mdp.n_states,):
        raise ValueError("policy does not cover every state")
    rows = mdp.chosen_rows(pol)
    row_ptr = mdp.row_ptr
    # Per-row cumulative transition mass, for inverse-CDF sampling.
    cum = np.cumsum(mdp.probs)
    base = np.where(row_ptr[:-1] > 0, cum[row_ptr[:-1] - 1], 0.0)

    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.random(n_steps)

    batch = max(n_steps // BATCHES, 1)
    rewards = mdp.rewards
    diffs = mdp.diffs
    cols = mdp.cols
    state = mdp.initial
    total_r = total_d = 0.0
    batch_r: list[float] = []
    batch_d: list[float] = []
    cur_r = cur_d = 0.0
    for i in range(n_steps):
        row = rows[state]
        lo, hi = row_ptr[row], row_ptr[row + 1]
        mass = cum[hi - 1] - base[row]
        u = base[row] + draws[i] * mass
        idx = lo + int(np.searchsorted(cum[lo:hi], u, side="right"))
        idx = min(idx, hi - 1)
        cur_r += rewards[idx]
        cur_d += diffs[idx]
        state = int(cols[idx])
        if (i + 1) % batch == 0:
            batch_r.append(cur_r)
            batch_d.append(cur_d)
            total_r += cur_r
            total_d += cur_d
            cur_r = cur_d = 0.0
    total_r += cur_r
    total_d += cur_d
    if total_d <= 0.0:
        raise SolverError(
            f"policy accumulated zero difficulty over {n_steps} steps"
        )
    ratios = np.array(
        [r / d for r, d in zip(batch_r, batch_d) if d > 0.0], dtype=float
    )
    if ratios.size >= 2:
        rho_se = float(ratios.std(ddof=1) / math.sqrt(ratios.size))
    else:
        rho_se = 0.0
    return SimReport(
        blocks=n_steps,
        q_hat=math.nan,
        rho_hat=float(total_r / total_d),
        q_se=math.nan,
        rho_se=rho_se,
        batches=int(ratios.size),
        seed=seed,
    )
