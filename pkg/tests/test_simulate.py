"""Monte Carlo harness versus the closed forms and the solver.

Statistical comparisons use batch-mean standard errors from the report
itself; a 3 to 4 sigma band keeps false alarms rare without letting a
biased implementation through.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from forksec.analysis import honest_utility, optimal_revenue, whale_inclusion_rate
from forksec.mdp import SolverConfig, SolverError, from_tables, policy_iteration, pto_transform
from forksec.models import MODEL_BUILDERS, ModelParams
from forksec.simulate import SimReport, simulate_honest, simulate_policy

WHALE_PARAMS = ModelParams(alpha=0.25, delta=0.01, whale_fee=2.0,
                           guaranteed_fee=0.1, max_pool=2)


def test_honest_sim_no_whales_is_exact():
    rep = simulate_honest(ModelParams(alpha=0.3), 50_000, seed=7)
    assert rep.q_hat == 0.0
    assert rep.q_se == 0.0
    assert rep.rho_hat == pytest.approx(0.3, abs=4 * rep.rho_se)


def test_honest_sim_matches_closed_forms():
    rep = simulate_honest(WHALE_PARAMS, 200_000, seed=11)
    q = whale_inclusion_rate(0.01, 2)
    assert abs(rep.q_hat - q) <= 3 * rep.q_se
    assert abs(rep.rho_hat - honest_utility(WHALE_PARAMS)) <= 3 * rep.rho_se
    assert rep.blocks == 200_000
    assert rep.batches == 100


def test_honest_sim_is_reproducible():
    a = simulate_honest(WHALE_PARAMS, 30_000, seed=3)
    b = simulate_honest(WHALE_PARAMS, 30_000, seed=3)
    c = simulate_honest(WHALE_PARAMS, 30_000, seed=4)
    assert (a.q_hat, a.rho_hat, a.q_se, a.rho_se) == (
        b.q_hat, b.rho_hat, b.q_se, b.rho_se
    )
    assert a.rho_hat != c.rho_hat


def test_policy_sim_reproducible_and_seeded():
    mdp = MODEL_BUILDERS["bitcoin_fee"](ModelParams(alpha=0.3, max_fork=4))
    a = simulate_policy(mdp, mdp.honest, 20_000, seed=5)
    b = simulate_policy(mdp, mdp.honest, 20_000, seed=5)
    c = simulate_policy(mdp, mdp.honest, 20_000, seed=6)
    assert a.rho_hat == b.rho_hat and a.rho_se == b.rho_se
    assert a.rho_hat != c.rho_hat
    assert math.isnan(a.q_hat) and math.isnan(a.q_se)


@pytest.mark.parametrize("model", sorted(MODEL_BUILDERS))
def test_honest_policy_rollout_agrees_with_formula(model):
    p = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, guaranteed_fee=0.1,
                    fork_sensitivity=5,
                    max_fork=3 if model == "chain_colordag" else 4, max_pool=2)
    mdp = MODEL_BUILDERS[model](p)
    rep = simulate_policy(mdp, mdp.honest, 150_000, seed=17)
    assert abs(rep.rho_hat - honest_utility(p)) <= 3 * rep.rho_se


def test_optimal_policy_rollout_tracks_solver():
    cfg = SolverConfig()
    for params, model in [
        (ModelParams(alpha=0.35, tie_break="worst_case", max_fork=6),
         "bitcoin_fee"),
        (ModelParams(alpha=0.4, gamma=0.5, delta=0.01, whale_fee=2.0,
                     max_fork=5, max_pool=2), "bitcoin_fee"),
    ]:
        res = optimal_revenue(params, model, cfg)
        mdp = MODEL_BUILDERS[model](params)
        rep = simulate_policy(mdp, res.policy, 200_000, seed=29)
        assert abs(rep.rho_hat - res.ratio) <= 4 * rep.rho_se


def test_toy_cycle_simulates_to_known_ratio():
    table = {"s": {"X": [("s", 1.0, 1.0, 1.0)], "Y": [("s", 1.0, 1.5, 2.0)]}}
    mdp, _ = from_tables(table, initial="s")
    cfg = SolverConfig()
    res = policy_iteration(pto_transform(mdp, cfg), cfg)
    rep = simulate_policy(mdp, res.policy, 5_000, seed=1)
    assert rep.rho_hat == pytest.approx(1.0, abs=1e-12)
    assert rep.rho_se == pytest.approx(0.0, abs=1e-12)


def test_zero_difficulty_rollout_is_an_error():
    table = {"s": {"X": [("s", 1.0, 1.0, 0.0)]}}
    mdp, _ = from_tables(table, initial="s")
    policy = np.zeros(mdp.n_states, dtype=np.int64)
    with pytest.raises(SolverError, match="zero difficulty"):
        simulate_policy(mdp, policy, 1_000, seed=0)


def test_report_rejects_impossible_fields():
    with pytest.raises(AssertionError):
        SimReport(blocks=0, q_hat=0.0, rho_hat=0.0, q_se=0.0, rho_se=0.0,
                  batches=1, seed=0)
    with pytest.raises(AssertionError):
        SimReport(blocks=10, q_hat=0.0, rho_hat=0.0, q_se=-1.0, rho_se=0.0,
                  batches=1, seed=0)
