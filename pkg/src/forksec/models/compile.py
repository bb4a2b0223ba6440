"""State-graph compiler shared by the protocol model builders.

Builders enumerate actions as symbolic arcs: each transition probability
is one of a small set of codes (constant, miner power, everyone else)
times a fixed multiplier, so a compiled model can be rebound to a new
miner power without re-exploring the state space. States are packed
integers; the compiler lays them out in ascending key order, which makes
the emitted tables independent of discovery order.
"""

from __future__ import annotations

import os
from array import array
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

from ..mdp import Mdp, ModelError, _segment_offsets

# Optional cap (in MiB) on the estimated size of a compiled model;
# exploration aborts early once the estimate crosses it.
MEMORY_ENV = "FORKSEC_MAX_MEMORY_MB"


def _memory_cap_bytes() -> float | None:
    raw = os.environ.get(MEMORY_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        cap = float(raw)
    except ValueError:
        raise ModelError(f"{MEMORY_ENV} must be a number, got {raw!r}") from None
    return cap * 2.0**20


def _estimated_bytes(n_states: int, n_arcs: int) -> float:
    # Compiled tables cost ~33 B per arc; the exploration index and
    # per-state tables add roughly 120 B per state. Doubled for the
    # transient copies made while materializing the arrays.
    return 2.0 * (33.0 * n_arcs + 120.0 * n_states)

# Probability codes. An arc's probability is code value times scale,
# where CONST is 1, MINER is alpha and OTHERS is 1 - alpha.
CONST = 0
MINER = 1
OTHERS = 2


def code_values(alpha: float) -> np.ndarray:
    """Numeric value of each probability code at miner power ``alpha``."""
    return np.array([1.0, alpha, 1.0 - alpha])


@dataclass(frozen=True)
class Arc:
    """One branch of an action: packed target state plus step effects."""

    state: int
    code: int = CONST
    scale: float = 1.0
    reward: float = 0.0
    difficulty: float = 0.0
    creates_block: bool = False


def action_label(op: int, arg: int = 0) -> int:
    """Encode an operation id and its argument as a single label."""
    if not 0 <= arg < 256:
        raise ModelError(f"action argument out of range: {arg}")
    return (op << 8) | arg


def split_label(label: int) -> tuple[int, int]:
    return label >> 8, label & 0xFF


def whale_arrival_expansion(
    transitions: list[Arc],
    delta: float,
    max_pool: int,
    *,
    pool: int = 0,
    interrupt: int | None = None,
) -> list[Arc]:
    """Split block-creating transitions with a whale-arrival twin.

    During block creation a whale transaction may arrive first; the twin
    carries that outcome, landing in ``interrupt`` (the source state with
    one more pooled whale) with no block, reward or difficulty. Arrivals
    beyond ``max_pool`` are dropped, so a full pool leaves the transitions
    unchanged, as does ``delta == 0``.
    """
    if delta == 0.0 or pool >= max_pool:
        return list(transitions)
    creating = [t for t in transitions if t.creates_block]
    if not creating:
        return list(transitions)
    if any(t.code != CONST for t in transitions):
        # Symbolic actions must be entirely block-creating, otherwise the
        # creating mass would depend on alpha and the twin could not keep
        # a fixed multiplier across rebinding.
        if not all(t.creates_block for t in transitions):
            raise ModelError(
                "cannot expand a partially block-creating symbolic action"
            )
        mass = 1.0
    else:
        mass = sum(t.scale for t in creating)
    if interrupt is None:
        raise ModelError("block-creating action without an interrupt target")
    norm = 1.0 + delta * mass
    out = [replace(t, scale=t.scale / norm) for t in transitions]
    out.append(Arc(interrupt, CONST, delta * mass / norm))
    return out


class ModelProvider(Protocol):
    """What a builder exposes to the compiler.

    States are packed integers fitting in an unsigned 64-bit key.
    ``actions`` returns the legal moves of a state as (label, arcs) pairs
    and must never be empty; ``honest_label`` names the move the honest
    policy takes there.
    """

    def initial(self) -> int: ...

    def actions(self, state: int) -> list[tuple[int, list[Arc]]]: ...

    def honest_label(self, state: int) -> int: ...


def compile_model(
    provider: ModelProvider, alpha: float
) -> tuple[Mdp, np.ndarray]:
    """Explore every reachable state and lay the graph out in key order.

    Returns the model and the packed state keys, sorted; row ``i`` of the
    model describes the state ``keys[i]``.
    """
    init = provider.initial()
    index: dict[int, int] = {init: 0}
    order: list[int] = [init]
    acts_per_state = array("q")
    honest = array("q")
    labels = array("q")
    arcs_per_row = array("q")
    tgt = array("q")
    code = array("b")
    scale = array("d")
    rew = array("d")
    dif = array("d")

    cap = _memory_cap_bytes()
    pos = 0
    while pos < len(order):
        if cap is not None and pos % 4096 == 0:
            estimate = _estimated_bytes(len(order), len(tgt))
            if estimate > cap:
                raise ModelError(
                    f"state space exceeds the memory budget: ~"
                    f"{estimate / 2.0**20:.0f} MiB estimated at "
                    f"{len(order)} states (cap {cap / 2.0**20:.0f} MiB "
                    f"via {MEMORY_ENV}); shrink max_fork or max_pool"
                )
        state = order[pos]
        pos += 1
        actions = provider.actions(state)
        if not actions:
            raise ModelError(f"state {state:#x} has no legal action")
        wanted = provider.honest_label(state)
        chosen = -1
        for k, (label, branches) in enumerate(actions):
            if label == wanted:
                chosen = k
            labels.append(label)
            arcs_per_row.append(len(branches))
            for arc in branches:
                nxt = index.get(arc.state)
                if nxt is None:
                    nxt = len(order)
                    index[arc.state] = nxt
                    order.append(arc.state)
                tgt.append(nxt)
                code.append(arc.code)
                scale.append(arc.scale)
                rew.append(arc.reward)
                dif.append(arc.difficulty)
        acts_per_state.append(len(actions))
        honest.append(chosen)

    n = len(order)
    try:
        keys = np.array(order, dtype=np.uint64)
    except OverflowError:
        # Wide packings (long explicit forks) exceed 64 bits.
        keys = np.array(order, dtype=object)
    perm = np.argsort(keys, kind="stable")
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n, dtype=np.int64)

    acts = np.frombuffer(acts_per_state, dtype=np.int64)
    row_lens = np.frombuffer(arcs_per_row, dtype=np.int64)
    first_row = np.concatenate(([0], np.cumsum(acts)))[:-1]
    first_arc = np.concatenate(([0], np.cumsum(row_lens)))[:-1]

    # Gather rows state by state in key order, then arcs row by row.
    sorted_acts = acts[perm]
    row_order = np.repeat(first_row[perm], sorted_acts) + _segment_offsets(
        sorted_acts
    )
    sorted_lens = row_lens[row_order]
    arc_order = np.repeat(first_arc[row_order], sorted_lens) + _segment_offsets(
        sorted_lens
    )

    codes = np.frombuffer(code, dtype=np.int8)[arc_order]
    scales = np.frombuffer(scale, dtype=np.float64)[arc_order]
    mdp = Mdp(
        state_ptr=np.concatenate(([0], np.cumsum(sorted_acts))),
        row_ptr=np.concatenate(([0], np.cumsum(sorted_lens))),
        labels=np.frombuffer(labels, dtype=np.int64)[row_order],
        cols=inv[np.frombuffer(tgt, dtype=np.int64)[arc_order]],
        probs=code_values(alpha)[codes] * scales,
        rewards=np.frombuffer(rew, dtype=np.float64)[arc_order],
        diffs=np.frombuffer(dif, dtype=np.float64)[arc_order],
        initial=int(inv[0]),
        honest=np.frombuffer(honest, dtype=np.int64)[perm],
        prob_code=codes,
        prob_scale=scales,
    )
    mdp.check()
    return mdp, keys[perm]


def rebind_miner_power(mdp: Mdp, alpha: float) -> Mdp:
    """Reweight transition probabilities for a new miner power.

    Shares every table with the input except the probabilities, so the
    result is cheap and exactly matches a fresh build at ``alpha``.
    """
    if mdp.prob_code is None or mdp.prob_scale is None:
        raise ModelError("model carries no probability codes to rebind")
    return Mdp(
        state_ptr=mdp.state_ptr,
        row_ptr=mdp.row_ptr,
        labels=mdp.labels,
        cols=mdp.cols,
        probs=code_values(alpha)[mdp.prob_code] * mdp.prob_scale,
        rewards=mdp.rewards,
        diffs=mdp.diffs,
        initial=mdp.initial,
        terminal=mdp.terminal,
        honest=mdp.honest,
        prob_code=mdp.prob_code,
        prob_scale=mdp.prob_scale,
    )
