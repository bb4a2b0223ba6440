"""Solver-layer tests: PTO transform arithmetic, policy/value iteration on
hand-solvable MDPs, the evaluation oracle, and termination safety checks."""

from __future__ import annotations

import numpy as np
import pytest

from forksec.mdp import (
    ModelError,
    SolverConfig,
    SolverError,
    evaluate_policy,
    from_tables,
    policy_iteration,
    pto_transform,
    ratio_value_oracle,
    value_iteration,
    zero_difficulty_cycle,
    zero_difficulty_end_component,
)
from oracles import dense_evaluate, dense_ratio, random_proper_mdp

CFG = SolverConfig()


def toy_xy():
    """One state, two self-loops: X (r=1, d=1) and Y (r=1.5, d=2)."""
    table = {"s": {"X": [("s", 1.0, 1.0, 1.0)], "Y": [("s", 1.0, 1.5, 2.0)]}}
    mdp, _ = from_tables(table, initial="s")
    return mdp


def three_step_chain():
    table = {
        "s1": {"go": [("s2", 1.0, 1.0, 1.0)]},
        "s2": {"go": [("s3", 1.0, 2.0, 1.0)]},
        "s3": {"go": [("end", 1.0, 3.0, 1.0)]},
        "end": {"stay": [("end", 1.0, 0.0, 1.0)]},
    }
    mdp, _ = from_tables(table, initial="s1")
    return mdp


# ----------------------------------------------------------- pto transform


def test_pto_zero_difficulty_branch_unchanged():
    table = {
        "a": {"go": [("b", 1.0, 1.0, 0.0)]},
        "b": {"go": [("a", 1.0, 0.0, 1.0)]},
    }
    mdp, idx = from_tables(table, initial="a")
    ssp = pto_transform(mdp, CFG)
    (t,) = ssp.transitions(idx["a"], 0)
    assert (t.next, t.prob, t.reward, t.difficulty) == (idx["b"], 1.0, 1.0, 0.0)


def test_pto_unit_difficulty_split():
    table = {"a": {"go": [("a", 1.0, 1.0, 1.0)]}}
    mdp, idx = from_tables(table, initial="a")
    ssp = pto_transform(mdp, SolverConfig(horizon=1.0e5))
    cont, term = ssp.transitions(idx["a"], 0)
    assert cont.next == idx["a"] and term.next == ssp.terminal
    assert cont.prob == pytest.approx(0.99999, abs=1e-15)
    assert term.prob == pytest.approx(0.00001, abs=1e-15)
    assert cont.reward == term.reward == 1.0


def test_pto_preserves_expected_reward_and_difficulty():
    rng = np.random.default_rng(7)
    for _ in range(20):
        mdp = random_proper_mdp(rng, n_states=6)
        ssp = pto_transform(mdp, CFG)
        er0, ed0 = mdp.row_expected()
        er1, ed1 = ssp.row_expected()
        np.testing.assert_allclose(er0, er1, rtol=0, atol=1e-15)
        np.testing.assert_allclose(ed0, ed1, rtol=0, atol=1e-15)
        sums = np.add.reduceat(ssp.probs, ssp.row_ptr[:-1])
        np.testing.assert_allclose(sums, 1.0, rtol=0, atol=1e-12)


def test_pto_rejects_zero_difficulty_end_component():
    table = {"a": {"loop": [("a", 1.0, 1.0, 0.0)]}}
    mdp, _ = from_tables(table, initial="a")
    assert zero_difficulty_cycle(mdp)
    assert zero_difficulty_end_component(mdp)
    with pytest.raises(ModelError, match="zero-difficulty"):
        pto_transform(mdp, CFG)


def test_zero_difficulty_cycle_without_end_component_is_accepted():
    # a->b->a has zero difficulty, but b's only action can also leak to c
    # with positive difficulty, so no policy can avoid difficulty forever.
    table = {
        "a": {"go": [("b", 1.0, 0.0, 0.0)]},
        "b": {"go": [("a", 0.5, 0.0, 0.0), ("c", 0.5, 0.0, 1.0)]},
        "c": {"stay": [("c", 1.0, 1.0, 1.0)]},
    }
    mdp, _ = from_tables(table, initial="a")
    assert zero_difficulty_cycle(mdp)
    assert not zero_difficulty_end_component(mdp)
    ssp = pto_transform(mdp, CFG)
    result = policy_iteration(ssp, CFG)
    assert result.ratio == pytest.approx(1.0, abs=1e-3)


def test_acyclic_zero_difficulty_is_clean():
    mdp = three_step_chain()
    assert not zero_difficulty_cycle(mdp)
    assert not zero_difficulty_end_component(mdp)


# ------------------------------------------------------------- evaluation


def test_evaluate_single_jump_to_terminal():
    table = {"s": {"go": [("T", 1.0, 5.0, 0.0)]}}
    mdp, idx = from_tables(table, initial="s", terminal="T")
    values = evaluate_policy(mdp, np.zeros(2, dtype=int))
    assert values[idx["s"]] == pytest.approx(5.0, abs=1e-9)


def test_evaluate_geometric_series():
    table = {"s": {"go": [("s", 0.5, 1.0, 0.0), ("T", 0.5, 1.0, 0.0)]}}
    mdp, idx = from_tables(table, initial="s", terminal="T")
    values = evaluate_policy(mdp, np.zeros(2, dtype=int))
    assert values[idx["s"]] == pytest.approx(2.0, abs=1e-8)


def test_evaluate_matches_dense_solve():
    rng = np.random.default_rng(11)
    for _ in range(15):
        mdp = random_proper_mdp(rng, n_states=9)
        ssp = pto_transform(mdp, SolverConfig(horizon=100.0))
        policy = rng.integers(0, 3, size=ssp.n_states)
        got = evaluate_policy(ssp, policy, SolverConfig(linear_tol=1e-13))
        want = dense_evaluate(ssp, policy)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-8)


def test_evaluate_failure_carries_residual():
    # Singular system: recurrent class with no terminal leakage.
    table = {"s": {"loop": [("s", 1.0, 1.0, 0.0)]}, "t": {"go": [("T", 1.0, 0.0, 0.0)]}}
    mdp, _ = from_tables(table, initial="s", terminal="T")
    with pytest.raises(SolverError, match="residual"):
        evaluate_policy(mdp, np.zeros(3, dtype=int))


# -------------------------------------------------------- policy iteration


def test_toy_xy_policy_iteration():
    ssp = pto_transform(toy_xy(), CFG)
    result = policy_iteration(ssp, CFG)
    assert result.policy[0] == 0  # X
    assert result.values[0] == pytest.approx(1.0e5, abs=1.0)
    assert result.ratio == pytest.approx(1.0, abs=1e-4)


def test_three_step_chain_value():
    ssp = pto_transform(three_step_chain(), CFG)
    result = policy_iteration(ssp, CFG)
    assert result.values[0] == pytest.approx(6.0, rel=1e-4)


def test_policy_iteration_requires_terminal():
    with pytest.raises(ModelError):
        policy_iteration(toy_xy(), CFG)


# --------------------------------------------------------- value iteration


def test_value_iteration_agrees_on_toy():
    ssp = pto_transform(toy_xy(), CFG)
    pi = policy_iteration(ssp, CFG)
    vi = value_iteration(ssp, SolverConfig(precision=1e-5))
    assert np.array_equal(vi.policy, pi.policy)
    assert vi.ratio == pytest.approx(pi.ratio, abs=1e-4)


def test_value_iteration_three_step_chain():
    ssp = pto_transform(three_step_chain(), CFG)
    vi = value_iteration(ssp, CFG)
    assert vi.values[0] == pytest.approx(6.0, rel=1e-4)


def test_value_iteration_sweep_cap():
    ssp = pto_transform(toy_xy(), CFG)
    with pytest.raises(SolverError, match="sweeps"):
        value_iteration(ssp, SolverConfig(vi_max_sweeps=3))


# ----------------------------------------------------------------- oracle


def test_oracle_single_self_loop():
    table = {"s": {"go": [("s", 1.0, 1.0, 2.0)]}}
    mdp, _ = from_tables(table, initial="s")
    assert ratio_value_oracle(mdp, [0]) == pytest.approx(0.5, abs=1e-12)


def test_oracle_toy_xy_policies():
    mdp = toy_xy()
    assert ratio_value_oracle(mdp, [0]) == pytest.approx(1.0, abs=1e-12)
    assert ratio_value_oracle(mdp, [1]) == pytest.approx(0.75, abs=1e-12)


def test_oracle_matches_dense_power_iteration():
    rng = np.random.default_rng(3)
    for _ in range(5):
        mdp = random_proper_mdp(rng, n_states=7)
        policy = rng.integers(0, 3, size=mdp.n_states)
        assert ratio_value_oracle(mdp, policy) == pytest.approx(
            dense_ratio(mdp, policy), abs=2e-4
        )


def test_oracle_rejects_zero_difficulty_chain():
    table = {"s": {"go": [("s", 1.0, 1.0, 0.0)]}}
    mdp, _ = from_tables(table, initial="s")
    with pytest.raises(ModelError, match="difficulty"):
        ratio_value_oracle(mdp, [0])


def test_oracle_rejects_multichain():
    table = {
        "s": {"split": [("a", 0.5, 0.0, 1.0), ("b", 0.5, 0.0, 1.0)]},
        "a": {"stay": [("a", 1.0, 1.0, 1.0)]},
        "b": {"stay": [("b", 1.0, 0.0, 1.0)]},
    }
    mdp, _ = from_tables(table, initial="s")
    with pytest.raises(ModelError, match="multichain"):
        ratio_value_oracle(mdp, [0, 0, 0])


def test_pto_solution_beats_random_policies():
    # The PTO pipeline's chosen policy must be near-optimal in the exact
    # ratio objective, confirmed against random policies via the oracle.
    rng = np.random.default_rng(23)
    for _ in range(5):
        mdp = random_proper_mdp(rng, n_states=8)
        ssp = pto_transform(mdp, CFG)
        solved = policy_iteration(ssp, CFG)
        best = ratio_value_oracle(mdp, solved.policy[:-1])
        for _ in range(100):
            policy = rng.integers(0, 3, size=mdp.n_states)
            assert best >= ratio_value_oracle(mdp, policy) - 1e-3


def test_pto_selects_higher_ratio_action():
    # Solving the transformed toy MDP must pick X (ratio 1.0 over 0.75).
    ssp = pto_transform(toy_xy(), CFG)
    assert policy_iteration(ssp, CFG).policy[0] == 0
