"""Selfish-mining model of a longest-chain protocol with whale fees.

The miner keeps a secret chain next to the public honest chain. State
tracks both chain lengths, a whale flag per block, whether the latest
honest block is still rushable, and the number of pooled whale
transactions. Blocks and their fees settle when one side of the fork
wins: on adopt, on a successfully revealed longer chain, or when honest
miners extend one side of a published tie.
"""

from __future__ import annotations

from ..mdp import Mdp, ModelError
from .compile import (
    Arc,
    CONST,
    MINER,
    OTHERS,
    action_label,
    compile_model,
    whale_arrival_expansion,
)
from .params import ModelParams, TieBreak

WAIT, ADOPT, REVEAL = 0, 1, 2
OPS = {WAIT: "wait", ADOPT: "adopt", REVEAL: "reveal"}

# Fork flags: IRRELEVANT after a selfish block or a settlement, RELEVANT
# right after an honest block, ACTIVE while a published tie is unresolved.
IRRELEVANT, RELEVANT, ACTIVE = 0, 1, 2

_FLAG_BITS = 24
_LEN_SHIFT_A = _FLAG_BITS
_FLAG_SHIFT_H = _FLAG_BITS + 5
_LEN_SHIFT_H = 2 * _FLAG_BITS + 5
_FORK_SHIFT = 2 * _FLAG_BITS + 10
_POOL_SHIFT = 2 * _FLAG_BITS + 12


def pack_state(
    a_len: int, a_flags: int, h_len: int, h_flags: int, fork: int, pool: int
) -> int:
    return (
        a_flags
        | (a_len << _LEN_SHIFT_A)
        | (h_flags << _FLAG_SHIFT_H)
        | (h_len << _LEN_SHIFT_H)
        | (fork << _FORK_SHIFT)
        | (pool << _POOL_SHIFT)
    )


def unpack_state(key: int) -> tuple[int, int, int, int, int, int]:
    """(a_len, a_flags, h_len, h_flags, fork, pool) from a packed key."""
    mask = (1 << _FLAG_BITS) - 1
    return (
        (key >> _LEN_SHIFT_A) & 0x1F,
        key & mask,
        (key >> _LEN_SHIFT_H) & 0x1F,
        (key >> _FLAG_SHIFT_H) & mask,
        (key >> _FORK_SHIFT) & 0x3,
        key >> _POOL_SHIFT,
    )


class _Builder:
    def __init__(self, params: ModelParams) -> None:
        if params.max_fork > _FLAG_BITS:
            raise ModelError(f"max_fork above {_FLAG_BITS} does not fit the state key")
        if params.max_pool > 7:
            raise ModelError("max_pool above 7 does not fit the state key")
        self.p = params

    def initial(self) -> int:
        return pack_state(0, 0, 0, 0, IRRELEVANT, 0)

    def canonical(
        self, a_len: int, a_flags: int, h_len: int, h_flags: int, fork: int, pool: int
    ) -> int:
        # The relevant flag only matters while a first-heard tie publication
        # is still possible; otherwise it merges with irrelevant.
        if fork == RELEVANT and not (
            self.p.tie_break is TieBreak.FIRST_HEARD and a_len >= h_len >= 1
        ):
            fork = IRRELEVANT
        assert a_flags.bit_count() <= pool and h_flags.bit_count() <= pool
        return pack_state(a_len, a_flags, h_len, h_flags, fork, pool)

    def actions(self, key: int) -> list[tuple[int, list[Arc]]]:
        p = self.p
        a_len, a_flags, h_len, h_flags, fork, pool = unpack_state(key)
        out: list[tuple[int, list[Arc]]] = []
        if a_len < p.max_fork and h_len < p.max_fork:
            arcs = self._wait(a_len, a_flags, h_len, h_flags, fork, pool)
            arcs = whale_arrival_expansion(
                arcs,
                p.delta,
                p.max_pool,
                pool=pool,
                interrupt=self.canonical(a_len, a_flags, h_len, h_flags, fork, pool + 1),
            )
            out.append((action_label(WAIT), arcs))
        for length in range(1, h_len + 1):
            settled = (h_flags & ((1 << length) - 1)).bit_count()
            target = self.canonical(
                0, 0, h_len - length, h_flags >> length, IRRELEVANT, pool - settled
            )
            out.append(
                (action_label(ADOPT, length), [Arc(target, CONST, 1.0, 0.0, length)])
            )
        for length in range(max(h_len, 1), a_len + 1):
            if length == h_len:
                if fork == ACTIVE:
                    continue
                if p.tie_break is TieBreak.FIRST_HEARD and fork != RELEVANT:
                    continue
                target = pack_state(a_len, a_flags, h_len, h_flags, ACTIVE, pool)
                out.append((action_label(REVEAL, length), [Arc(target)]))
            else:
                claimed = (a_flags & ((1 << length) - 1)).bit_count()
                reward = length * (1.0 + p.guaranteed_fee) + p.whale_fee * claimed
                target = self.canonical(
                    a_len - length, a_flags >> length, 0, 0, IRRELEVANT, pool - claimed
                )
                out.append(
                    (
                        action_label(REVEAL, length),
                        [Arc(target, CONST, 1.0, reward, length)],
                    )
                )
        return out

    def _wait(
        self, a_len: int, a_flags: int, h_len: int, h_flags: int, fork: int, pool: int
    ) -> list[Arc]:
        p = self.p
        chain_whales = a_flags.bit_count() < pool
        mine = Arc(
            self.canonical(
                a_len + 1,
                a_flags | (int(chain_whales) << a_len),
                h_len,
                h_flags,
                IRRELEVANT,
                pool,
            ),
            MINER,
            creates_block=True,
        )
        honest_flag = int(h_flags.bit_count() < pool) << h_len
        extend = self.canonical(
            a_len, a_flags, h_len + 1, h_flags | honest_flag, RELEVANT, pool
        )
        if fork != ACTIVE:
            return [mine, Arc(extend, OTHERS, creates_block=True)]
        rush = {
            TieBreak.FIRST_HEARD: p.gamma,
            TieBreak.RANDOM: 0.5,
            TieBreak.WORST_CASE: 1.0,
        }[p.tie_break]
        arcs = [mine]
        if rush < 1.0:
            arcs.append(Arc(extend, OTHERS, 1.0 - rush, creates_block=True))
        if rush > 0.0:
            # Honest miners extend the published tie on the selfish side:
            # the tied prefix settles with its fees and an honest block
            # starts the next public chain.
            claimed = (a_flags & ((1 << h_len) - 1)).bit_count()
            reward = h_len * (1.0 + p.guaranteed_fee) + p.whale_fee * claimed
            pool2 = pool - claimed
            target = self.canonical(
                a_len - h_len, a_flags >> h_len, 1, int(pool2 > 0), RELEVANT, pool2
            )
            arcs.append(
                Arc(target, OTHERS, rush, reward, float(h_len), creates_block=True)
            )
        return arcs

    def honest_label(self, key: int) -> int:
        a_len, _a_flags, h_len, _h_flags, _fork, _pool = unpack_state(key)
        if a_len > h_len:
            return action_label(REVEAL, a_len)
        if h_len >= 1:
            return action_label(ADOPT, h_len)
        return action_label(WAIT)


def canonicalize_state(key: int, params: ModelParams) -> int | None:
    """Map a packed state description onto its stored representative.

    Returns ``None`` when no game history can produce the description:
    chain lengths beyond the fork cap, whale-claim flags outside the
    recorded chains or outnumbering the pool, a pool above its cap, or a
    published tie recorded without a publishable tie. Descriptions that
    differ only in a fork marker the dynamics never consult (a relevant
    flag with no first-heard tie to publish) collapse onto one key.
    """
    if key < 0:
        return None
    a_len, a_flags, h_len, h_flags, fork, pool = unpack_state(key)
    if a_len > params.max_fork or h_len > params.max_fork:
        return None
    if pool > params.max_pool:
        return None
    if a_flags >> a_len or h_flags >> h_len:
        return None
    if a_flags.bit_count() > pool or h_flags.bit_count() > pool:
        return None
    if fork > ACTIVE:
        return None
    if fork == ACTIVE and not a_len >= h_len >= 1:
        return None
    if fork == RELEVANT and not (
        params.tie_break is TieBreak.FIRST_HEARD and a_len >= h_len >= 1
    ):
        fork = IRRELEVANT
    return pack_state(a_len, a_flags, h_len, h_flags, fork, pool)


def build_nc_model(params: ModelParams) -> Mdp:
    """Compile the longest-chain selfish-mining MDP for ``params``."""
    mdp, _ = compile_model(_Builder(params), params.alpha)
    return mdp


def explore(params: ModelParams):
    """Model plus sorted packed state keys, for tests and diagnostics."""
    return compile_model(_Builder(params), params.alpha)
