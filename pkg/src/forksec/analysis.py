"""Honest-mining baseline, optimal revenue, and security thresholds.

The honest baseline is closed-form: whale inclusion follows a birth-death
chain over the pending pool, and honest utility is the miner's power times
the per-block income. Optimal revenue runs the full pipeline (build the
model, transform the ratio objective into a terminating shortest-path
problem, run policy iteration) and the security threshold bisects the
miner's power until the profitable and unprofitable brackets meet.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

from .mdp import (
    ModelError,
    SolveResult,
    SolverConfig,
    SolverError,
    policy_iteration,
    pto_transform,
    ratio_value_oracle,
)
from .models import MODEL_BUILDERS, ModelParams, rebind_miner_power

# Strict profitability margin: below the threshold the optimum coincides
# with honest mining, so equality up to solver noise must not count.
PROFIT_EPSILON = 1.0e-6


@dataclass(frozen=True)
class HonestBaseline:
    """Closed-form whale inclusion rate and honest utility.

    ``q`` is the long-run average of whale transactions per block and
    ``p_0`` the complementary steady-state probability of an empty pool.
    """

    q: float
    p_0: float
    utility: float


@dataclass(frozen=True)
class ThresholdResult:
    """Bisection outcome: threshold, final half-bracket, probe history."""

    threshold: float
    bracket: float
    probes: tuple[tuple[float, float, float], ...]
    note: str | None = None


def whale_inclusion_rate(delta: float, max_pool: int) -> float:
    """Average whale transactions per block under honest mining.

    Each block claims one pending transaction when the pool is nonempty
    and a new one arrives with probability ``delta``, capped at
    ``max_pool`` pending; the steady state of that birth-death chain
    leaves the pool nonempty with probability
    (delta - delta^(max_pool+1)) / (1 - delta^(max_pool+1)).
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    if not isinstance(max_pool, int) or max_pool < 1:
        raise ValueError(f"max_pool must be a positive integer, got {max_pool!r}")
    if delta == 0.0:
        return 0.0
    top = delta ** (max_pool + 1)
    return (delta - top) / (1.0 - top)


def honest_baseline(params: ModelParams) -> HonestBaseline:
    """Whale rate, empty-pool probability, and honest utility for ``params``."""
    q = whale_inclusion_rate(params.delta, params.max_pool)
    utility = params.alpha * (1.0 + params.guaranteed_fee + q * params.whale_fee)
    return HonestBaseline(q=q, p_0=1.0 - q, utility=utility)


def honest_utility(params: ModelParams) -> float:
    """alpha * (1 + guaranteed_fee + q * whale_fee)."""
    return honest_baseline(params).utility


def _param_vector(model: str, params: ModelParams) -> tuple:
    return (
        model,
        params.alpha,
        params.gamma,
        params.delta,
        params.whale_fee,
        params.guaranteed_fee,
        params.fork_sensitivity,
        params.max_fork,
        params.max_pool,
        params.tie_break.value,
        params.difficulty_source.value,
        params.ledger.value,
    )


def _with_params(err: Exception, model: str, params: ModelParams) -> Exception:
    vector = _param_vector(model, params)
    out = type(err)(f"{err} [params {vector}]")
    out.params = vector
    return out


def optimal_revenue(
    params: ModelParams,
    model: str = "bitcoin_fee",
    cfg: SolverConfig = SolverConfig(),
) -> SolveResult:
    """Solve ``model`` at ``params`` for the optimal revenue ratio.

    The returned result carries the optimal ratio (revenue per unit of
    difficulty over the solver horizon) and the policy achieving it.
    Solver failures propagate with the offending parameter vector
    attached.
    """
    try:
        builder = MODEL_BUILDERS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}") from None
    try:
        return policy_iteration(pto_transform(builder(params), cfg), cfg)
    except (ModelError, SolverError) as err:
        raise _with_params(err, model, params) from err


# Probes are memoized on the full parameter vector so concurrent sweeps
# and repeated bisections reuse solves; insertion is lock-guarded.
_PROBE_LOCK = threading.Lock()
_PROBE_CACHE: dict[tuple, float] = {}


def clear_probe_cache() -> None:
    with _PROBE_LOCK:
        _PROBE_CACHE.clear()


def _cached_ratio(model: str, params: ModelParams, cfg: SolverConfig, solve) -> float:
    key = _param_vector(model, params) + (cfg.horizon, cfg.precision)
    with _PROBE_LOCK:
        if key in _PROBE_CACHE:
            return _PROBE_CACHE[key]
    ratio = solve()
    with _PROBE_LOCK:
        _PROBE_CACHE[key] = ratio
    return ratio


def security_threshold(
    params: ModelParams,
    model: str = "bitcoin_fee",
    tol: float = 1.0e-3,
    cfg: SolverConfig = SolverConfig(),
) -> ThresholdResult:
    """Minimum miner power at which deviating beats honest mining.

    Bisects the power over [0, 0.5], reusing one state-space build and
    rebinding the transition probabilities per probe. A probe counts as
    profitable only when the exact stationary ratio of the solved
    optimal policy strictly exceeds the honest utility by
    PROFIT_EPSILON; evaluating the policy exactly keeps the verdict
    clear of the transformed solver's value noise, which is of the same
    order as the epsilon. When even power 0.5 - tol is not profitable
    the threshold is reported as 0.5 with an explanatory note.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    try:
        builder = MODEL_BUILDERS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}") from None
    try:
        base = builder(params)
    except ModelError as err:
        raise _with_params(err, model, params) from err

    probes: list[tuple[float, float, float]] = []

    def profitable(alpha: float) -> bool:
        probe_params = replace(params, alpha=alpha)

        def solve() -> float:
            try:
                bound = rebind_miner_power(base, alpha)
                solved = policy_iteration(pto_transform(bound, cfg), cfg)
                # The transformed values carry noise of the order of the
                # profit epsilon, so the verdict rests on the exact
                # stationary ratio of the policy the solver settled on.
                return ratio_value_oracle(
                    bound, solved.policy[: bound.n_states]
                )
            except (ModelError, SolverError) as err:
                raise _with_params(err, model, probe_params) from err

        ratio = _cached_ratio(model, probe_params, cfg, solve)
        honest = honest_utility(probe_params)
        probes.append((alpha, ratio, honest))
        return ratio > honest + PROFIT_EPSILON

    hi = 0.5 - tol
    if not profitable(hi):
        return ThresholdResult(
            threshold=0.5,
            bracket=0.0,
            probes=tuple(probes),
            note="no profitable deviation found below 0.5",
        )
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if profitable(mid):
            hi = mid
        else:
            lo = mid
    return ThresholdResult(
        threshold=0.5 * (lo + hi),
        bracket=0.5 * (hi - lo),
        probes=tuple(probes),
    )
