"""Protocol model builders: transition anatomy, closed forms, invariants.

Transition-level cases are hand-evaluated from the builder rules; the
honest-mining ratio has an exact closed form that every model family
must reproduce, which pins down reward, difficulty, and whale-pool
bookkeeping at once.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from forksec.analysis import security_threshold, whale_inclusion_rate
from forksec.mdp import (
    SolverConfig,
    policy_iteration,
    pto_transform,
    ratio_value_oracle,
    zero_difficulty_cycle,
    zero_difficulty_end_component,
)
from forksec.models import (
    CONST,
    MINER,
    MODEL_BUILDERS,
    ModelParams,
    OTHERS,
    action_label,
    canonicalize_state,
    code_values,
    fulldag,
    merge_settlement,
    nakamoto,
    rebind_miner_power,
    upperbound,
    whale_arrival_expansion,
)
from forksec.models.compile import Arc

CFG = SolverConfig()

EXPLORERS = {
    "bitcoin_fee": nakamoto.explore,
    "simplified_colordag": upperbound.explore,
    "chain_colordag": fulldag.explore,
}


def state_index(keys: np.ndarray, key: int) -> int:
    i = int(np.searchsorted(keys, np.uint64(key)))
    assert i < len(keys) and keys[i] == key, f"state {key:#x} not reachable"
    return i


def action_of(mdp, state: int, label: int) -> int:
    for a in range(mdp.n_actions(state)):
        if mdp.action_label(state, a) == label:
            return a
    raise AssertionError(f"state {state} offers no action {label}")


# ------------------------------------------------------ NC transitions


def test_nc_wait_from_initial():
    p = ModelParams(alpha=0.3, max_fork=3)
    mdp, keys = nakamoto.explore(p)
    s0 = state_index(keys, nakamoto.pack_state(0, 0, 0, 0, nakamoto.IRRELEVANT, 0))
    wait = action_of(mdp, s0, action_label(nakamoto.WAIT))
    got = {
        int(keys[t.next]): t.prob for t in mdp.transitions(s0, wait)
    }
    mine = nakamoto.pack_state(1, 0, 0, 0, nakamoto.IRRELEVANT, 0)
    # The honest block lands as "relevant", whose stored representative
    # collapses the flag while the selfish chain is shorter.
    extend = canonicalize_state(
        "bitcoin_fee", nakamoto.pack_state(0, 0, 1, 0, nakamoto.RELEVANT, 0), p
    )
    assert got == {mine: pytest.approx(0.3), extend: pytest.approx(0.7)}


def test_nc_adopt_single_honest_block():
    p = ModelParams(alpha=0.3, max_fork=3)
    mdp, keys = nakamoto.explore(p)
    s = state_index(keys, nakamoto.pack_state(0, 0, 1, 0, nakamoto.IRRELEVANT, 0))
    adopt = action_of(mdp, s, action_label(nakamoto.ADOPT, 1))
    (t,) = mdp.transitions(s, adopt)
    assert t.prob == 1.0
    assert t.reward == 0.0
    assert t.difficulty == 1.0
    assert int(keys[t.next]) == nakamoto.pack_state(0, 0, 0, 0, nakamoto.IRRELEVANT, 0)


def test_nc_reveal_two_claims_whale_and_fees():
    # Secret chain [whale, plain] over a one-block public chain: revealing
    # both pays 2 subsidies, 2 guaranteed fees, one whale fee, and the
    # claim leaves the pool.
    p = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, guaranteed_fee=0.25,
                    max_fork=4, max_pool=2)
    b = nakamoto._Builder(p)
    key = nakamoto.pack_state(2, 0b01, 1, 0, nakamoto.IRRELEVANT, 1)
    arcs = dict(b.actions(key))[action_label(nakamoto.REVEAL, 2)]
    (arc,) = arcs
    assert arc.reward == pytest.approx(2.0 * (1.0 + 0.25) + 2.0)
    assert arc.difficulty == 2.0
    _, _, _, _, _, pool = nakamoto.unpack_state(arc.state)
    assert pool == 0


def test_nc_reveal_tie_requires_fresh_honest_block():
    # Under first-heard rushing a tie publication is legal only right
    # after an honest block; it stages the active fork and settles on
    # the next block via the three-way split.
    p = ModelParams(alpha=0.3, gamma=0.6, max_fork=4)
    b = nakamoto._Builder(p)
    relevant = nakamoto.pack_state(1, 0, 1, 0, nakamoto.RELEVANT, 0)
    stale = nakamoto.pack_state(2, 0, 1, 0, nakamoto.IRRELEVANT, 0)
    tie = action_label(nakamoto.REVEAL, 1)
    assert tie in dict(b.actions(relevant))
    assert tie not in dict(b.actions(stale))
    (arc,) = dict(b.actions(relevant))[tie]
    assert nakamoto.unpack_state(arc.state)[4] == nakamoto.ACTIVE


def test_nc_active_fork_three_way_split():
    p = ModelParams(alpha=0.3, gamma=0.6, max_fork=4)
    mdp, keys = nakamoto.explore(p)
    s = state_index(keys, nakamoto.pack_state(1, 0, 1, 0, nakamoto.ACTIVE, 0))
    wait = action_of(mdp, s, action_label(nakamoto.WAIT))
    probs = sorted(t.prob for t in mdp.transitions(s, wait))
    expected = sorted([0.3, (1 - 0.6) * 0.7, 0.6 * 0.7])
    assert probs == pytest.approx(expected)


def test_nc_wait_omitted_at_cap():
    p = ModelParams(alpha=0.3, max_fork=3)
    b = nakamoto._Builder(p)
    at_cap = nakamoto.pack_state(3, 0, 1, 0, nakamoto.IRRELEVANT, 0)
    labels = [label for label, _ in b.actions(at_cap)]
    assert action_label(nakamoto.WAIT) not in labels
    assert labels, "capped state keeps adopt/reveal moves"


# ------------------------------------------------ upper-bound transitions


def test_ub_adopt_zero_dispute_mad_canonical():
    p = ModelParams(alpha=0.3, max_fork=4, fork_sensitivity=5,
                    ledger="mad", difficulty_source="canonical")
    b = upperbound._Builder(p)
    key = upperbound.pack_state(0, 0, 0, 2, 0, upperbound.IRRELEVANT, 0, 0, 1)
    acts = dict(b.actions(key))
    for length in (1, 2):
        (arc,) = acts[action_label(upperbound.ADOPT, length)]
        assert arc.reward == 0.0
        assert arc.difficulty == float(length)


def test_ub_reveal_longer_settles_when_potential_lost():
    # With the acceptability potential already spent, revealing a longer
    # chain settles immediately: reward and difficulty equal the shifted
    # dispute count, fees ride on top.
    p = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, guaranteed_fee=0.5,
                    max_fork=4, fork_sensitivity=5, max_pool=2)
    b = upperbound._Builder(p)
    key = upperbound.pack_state(0, 2, 0, 0, 0, upperbound.IRRELEVANT, 0, 1, 0)
    (arc,) = dict(b.actions(key))[action_label(upperbound.REVEAL, 2)]
    claimed = 1  # pool holds a single pending whale
    assert arc.reward == pytest.approx(2.0 + 0.5 * 2 + 2.0 * claimed)
    assert arc.difficulty == 2.0
    a_d, a_c, h_d, *_ , pool, pending = upperbound.unpack_state(arc.state)
    assert (a_d, a_c, h_d, pool, pending) == (0, 0, 0, 0, 0)


def test_ub_mine_active_split_first_heard():
    p = ModelParams(alpha=0.3, gamma=0.6, max_fork=4, fork_sensitivity=5)
    b = upperbound._Builder(p)
    key = upperbound.pack_state(0, 1, 0, 1, 0, upperbound.ACTIVE, 0, 0, 1)
    arcs = dict(b.actions(key))[action_label(upperbound.MINE)]
    weights = sorted(code_values(0.3)[a.code] * a.scale for a in arcs)
    assert weights == pytest.approx(sorted([0.3, 0.4 * 0.7, 0.6 * 0.7]))


# ------------------------------------------------- full-model settlement


def test_full_merge_contested_difficulty_sources():
    a = ((0, 0),)
    h = ((0, 0, 0), (0, 0, 0))
    p = ModelParams(alpha=0.3, fork_sensitivity=15, max_fork=4)
    reward, difficulty, pool = merge_settlement(p, a, h, 1, 0)
    assert (reward, difficulty, pool) == (0.0, 1.0, 0)
    p = ModelParams(alpha=0.3, fork_sensitivity=15, max_fork=4,
                    difficulty_source="canonical")
    reward, difficulty, pool = merge_settlement(p, a, h, 1, 0)
    assert (reward, difficulty, pool) == (0.0, 2.0, 0)


def test_full_merge_mad_destructs_tied_fee_content():
    # Two whale-bearing selfish blocks win a two-vs-two tie through a
    # hooking honest block; the destructive ledger voids their fee
    # content and the claims return to the pool, while the longest-chain
    # ledger pays both whale fees.
    a = ((1, 0), (1, 0))
    h = ((0, 0, 0), (0, 0, 0), (0, 2, 1))
    mad = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, fork_sensitivity=15,
                      max_fork=4, max_pool=2, ledger="mad")
    keep = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, fork_sensitivity=15,
                       max_fork=4, max_pool=2, ledger="canonical")
    assert merge_settlement(mad, a, h, 2, 2) == (0.0, 1.0, 2)
    assert merge_settlement(keep, a, h, 2, 2) == (4.0, 1.0, 0)


# --------------------------------------------------- arrival expansion


def test_arrival_expansion_examples():
    block = Arc(10, CONST, 1.0, creates_block=True)
    assert whale_arrival_expansion([block], 0.0, 2, pool=0, interrupt=99) == [block]

    out = whale_arrival_expansion([block], 0.01, 2, pool=0, interrupt=99)
    by_state = {arc.state: arc.scale for arc in out}
    assert by_state[10] == pytest.approx(1.0 / 1.01)
    assert by_state[99] == pytest.approx(0.01 / 1.01)

    out = whale_arrival_expansion([block], 0.01, 2, pool=2, interrupt=99)
    assert out == [block]


# ------------------------------------------------------- canonicalize


def test_canonicalize_rejects_overdrawn_public_whales():
    p = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, max_fork=4, max_pool=2)
    key = nakamoto.pack_state(0, 0, 2, 0b11, nakamoto.IRRELEVANT, 1)
    assert canonicalize_state("bitcoin_fee", key, p) is None


def test_canonicalize_merges_moot_fork_flag():
    p = ModelParams(alpha=0.3, max_fork=4)
    rel = nakamoto.pack_state(1, 0, 2, 0, nakamoto.RELEVANT, 0)
    irr = nakamoto.pack_state(1, 0, 2, 0, nakamoto.IRRELEVANT, 0)
    assert canonicalize_state("bitcoin_fee", rel, p) == irr
    assert canonicalize_state("bitcoin_fee", irr, p) == irr


def test_canonicalize_fixes_initial_state():
    p = ModelParams(alpha=0.3, max_fork=3, fork_sensitivity=5)
    initials = {
        "bitcoin_fee": nakamoto._Builder(p).initial(),
        "simplified_colordag": upperbound._Builder(p).initial(),
        "chain_colordag": fulldag._Builder(p).initial(),
    }
    for model, key in initials.items():
        assert canonicalize_state(model, key, p) == key


@pytest.mark.parametrize("tie_break,ledger", [
    ("first_heard", "mad"),
    ("random", "canonical"),
    ("worst_case", "mad"),
])
def test_reachable_states_closed_under_canonicalize(tie_break, ledger):
    p = ModelParams(alpha=0.3, gamma=0.6, delta=0.01, whale_fee=2.0,
                    guaranteed_fee=0.1, fork_sensitivity=5, max_fork=3,
                    max_pool=2, tie_break=tie_break, ledger=ledger)
    for model, explore in EXPLORERS.items():
        _, keys = explore(p)
        for key in keys:
            assert canonicalize_state(model, int(key), p) == int(key)


# ------------------------------------------------ model-wide invariants


MODE_GRID = [
    ("first_heard", "uncontested", "canonical", 0.0),
    ("first_heard", "canonical", "mad", 0.01),
    ("random", "uncontested", "mad", 0.01),
    ("worst_case", "canonical", "canonical", 0.01),
]


@pytest.mark.parametrize("tie_break,source,ledger,delta", MODE_GRID)
@pytest.mark.parametrize("model", sorted(MODEL_BUILDERS))
def test_models_pass_core_invariants(model, tie_break, source, ledger, delta):
    p = ModelParams(alpha=0.32, gamma=0.55, delta=delta, whale_fee=2.0,
                    guaranteed_fee=0.1, fork_sensitivity=5,
                    max_fork=3 if model == "chain_colordag" else 4,
                    max_pool=2, tie_break=tie_break,
                    difficulty_source=source, ledger=ledger)
    mdp = MODEL_BUILDERS[model](p)
    mdp.check()
    assert not zero_difficulty_end_component(mdp)
    if source == "canonical":
        assert not zero_difficulty_cycle(mdp)


@pytest.mark.parametrize("tie_break,source,ledger,delta", MODE_GRID)
@pytest.mark.parametrize("model", sorted(MODEL_BUILDERS))
def test_honest_policy_earns_fair_share(model, tie_break, source, ledger, delta):
    p = ModelParams(alpha=0.32, gamma=0.55, delta=delta, whale_fee=2.0,
                    guaranteed_fee=0.1, fork_sensitivity=5,
                    max_fork=3 if model == "chain_colordag" else 4,
                    max_pool=2, tie_break=tie_break,
                    difficulty_source=source, ledger=ledger)
    mdp = MODEL_BUILDERS[model](p)
    q = whale_inclusion_rate(delta, p.max_pool)
    expected = 0.32 * (1.0 + 0.1 + q * 2.0)
    assert ratio_value_oracle(mdp, mdp.honest) == pytest.approx(expected, abs=1e-6)


def test_classic_regime_below_threshold():
    # Constant-reward regime: at 10% power with no rushing the optimum
    # is honest mining.
    p = ModelParams(alpha=0.1, gamma=0.0, max_fork=10)
    res = policy_iteration(pto_transform(MODEL_BUILDERS["bitcoin_fee"](p), CFG), CFG)
    assert res.ratio == pytest.approx(0.1, abs=1e-3)


def test_upper_bound_dominates_full_model_smoke():
    for ledger in ("canonical", "mad"):
        p = ModelParams(alpha=0.35, gamma=0.5, fork_sensitivity=5, max_fork=2,
                        max_pool=1, ledger=ledger)
        full = policy_iteration(
            pto_transform(MODEL_BUILDERS["chain_colordag"](p), CFG), CFG
        ).ratio
        ub = policy_iteration(
            pto_transform(MODEL_BUILDERS["simplified_colordag"](p), CFG), CFG
        ).ratio
        assert ub >= full - 1e-4


def test_rebind_matches_fresh_build():
    base = ModelParams(alpha=0.3, gamma=0.5, delta=0.01, whale_fee=2.0,
                       fork_sensitivity=5, max_fork=3, max_pool=2)
    for model in sorted(MODEL_BUILDERS):
        built = MODEL_BUILDERS[model](base)
        for alpha in (0.05, 0.22, 0.45):
            fresh = MODEL_BUILDERS[model](replace(base, alpha=alpha))
            rebound = rebind_miner_power(built, alpha)
            assert np.array_equal(rebound.probs, fresh.probs)
            assert np.array_equal(rebound.cols, fresh.cols)


def test_build_is_deterministic():
    p = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0, fork_sensitivity=5,
                    max_fork=3, max_pool=2, ledger="mad")
    for model in sorted(MODEL_BUILDERS):
        a = MODEL_BUILDERS[model](p)
        b = MODEL_BUILDERS[model](p)
        for name in ("state_ptr", "row_ptr", "labels", "cols", "probs",
                     "rewards", "diffs"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_reachable_counts_grow_with_cap():
    counts = []
    for cap in (1, 2, 3):
        p = ModelParams(alpha=0.3, delta=0.01, whale_fee=2.0,
                        fork_sensitivity=5, max_fork=cap, max_pool=2)
        mdp, keys = fulldag.explore(p)
        assert mdp.n_states == len(keys)
        counts.append(mdp.n_states)
    assert counts == sorted(counts) and counts[0] < counts[-1]
    print(f"full-model reachable states by cap: {counts}")


def test_solved_ratio_monotone_in_power_and_fee():
    ratios = []
    for alpha in (0.1, 0.2, 0.3, 0.4):
        p = ModelParams(alpha=alpha, gamma=0.5, delta=0.01, whale_fee=2.0,
                        max_fork=4, max_pool=2)
        m = MODEL_BUILDERS["bitcoin_fee"](p)
        ratios.append(policy_iteration(pto_transform(m, CFG), CFG).ratio)
    assert all(b >= a - 1e-9 for a, b in zip(ratios, ratios[1:]))

    by_fee = []
    for fee in (0.0, 2.0, 4.0):
        p = ModelParams(alpha=0.35, gamma=0.5, delta=0.01, whale_fee=fee,
                        max_fork=4, max_pool=2)
        m = MODEL_BUILDERS["bitcoin_fee"](p)
        by_fee.append(policy_iteration(pto_transform(m, CFG), CFG).ratio)
    assert all(b >= a - 1e-9 for a, b in zip(by_fee, by_fee[1:]))


def test_threshold_not_increasing_in_cap():
    thresholds = []
    for cap in (3, 5, 8):
        p = ModelParams(alpha=0.3, gamma=0.5, max_fork=cap)
        thresholds.append(
            security_threshold(p, "bitcoin_fee").threshold
        )
    assert all(b <= a + 2e-3 for a, b in zip(thresholds, thresholds[1:]))
