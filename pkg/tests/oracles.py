"""Independent oracles used across the test suite.

Everything here is deliberately written against the public transition API
(`Mdp.transitions`) rather than the solver's internal flat arrays, so the
solver and its oracle cannot share a bug in the vectorized plumbing.
"""

from __future__ import annotations

import numpy as np

from forksec.mdp import Mdp


def dense_evaluate(ssp: Mdp, policy) -> np.ndarray:
    """Direct dense solve of v = r + P v with the terminal column dropped."""
    states = [s for s in range(ssp.n_states) if s != ssp.terminal]
    pos = {s: i for i, s in enumerate(states)}
    n = len(states)
    p_mat = np.zeros((n, n))
    b = np.zeros(n)
    for s in states:
        for t in ssp.transitions(s, int(policy[s])):
            b[pos[s]] += t.prob * t.reward
            if t.next != ssp.terminal:
                p_mat[pos[s], pos[t.next]] += t.prob
    v = np.linalg.solve(np.eye(n) - p_mat, b)
    out = np.zeros(ssp.n_states)
    for s, i in pos.items():
        out[s] = v[i]
    return out


def dense_ratio(mdp: Mdp, policy) -> float:
    """Stationary reward/difficulty ratio via dense power iteration.

    Runs the induced chain's distribution forward from the initial state
    with Cesaro averaging, avoiding the sparse linear-algebra path used by
    the library oracle.
    """
    n = mdp.n_states
    p_mat = np.zeros((n, n))
    er = np.zeros(n)
    ed = np.zeros(n)
    for s in range(n):
        for t in mdp.transitions(s, int(policy[s])):
            p_mat[s, t.next] += t.prob
            er[s] += t.prob * t.reward
            ed[s] += t.prob * t.difficulty
    dist = np.zeros(n)
    dist[mdp.initial] = 1.0
    acc = np.zeros(n)
    burn = 2000
    for _ in range(burn):
        dist = dist @ p_mat
    for _ in range(20000):
        dist = dist @ p_mat
        acc += dist
    acc /= acc.sum()
    return float(acc @ er) / float(acc @ ed)


def random_proper_mdp(rng: np.random.Generator, n_states: int = 8, n_actions: int = 3):
    """Random MDP where every transition carries positive difficulty and every
    action keeps a small reset branch to state 0, making every stationary
    policy proper and unichain."""
    from forksec.mdp import from_tables

    table: dict = {}
    names = [f"s{i}" for i in range(n_states)]
    for s, name in enumerate(names):
        actions = {}
        for a in range(n_actions):
            k = int(rng.integers(1, 3))
            targets = rng.integers(0, n_states, size=k)
            raw = rng.random(k) + 0.1
            raw = raw / raw.sum() * 0.9
            branches = [
                (
                    names[int(t)],
                    float(p),
                    float(rng.integers(0, 4)),
                    float(rng.integers(1, 4)),
                )
                for t, p in zip(targets, raw)
            ]
            branches.append(("s0", 0.1, float(rng.integers(0, 2)), 1.0))
            actions[f"a{a}"] = branches
        table[name] = actions
    mdp, _ = from_tables(table, initial="s0")
    return mdp
