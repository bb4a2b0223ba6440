"""Simplified DAG selfish-mining model that upper-bounds miner revenue.

Instead of tracking block references, the state splits each side into a
settled-but-contested prefix (pre-fork counts ``a_d``/``h_d`` whose
subsidies are still in dispute) and the post-fork chains. Ambiguity
carries across settlements until the fork-sensitivity bound forces a
resolution in the miner's favor, which is what makes the model an upper
bound: every real DAG history maps onto a state whose continuation value
here is at least as large.

Whale fees attach to post-fork blocks; under the destructive ledger a
published tie wipes the public chain's fee content, and ``c`` counts
tied miner blocks whose fees were already taken but whose subsidies
remain contested.
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
from .params import DifficultySource, Ledger, ModelParams, TieBreak

MINE, ADOPT, REVEAL = 0, 1, 2
OPS = {MINE: "mine", ADOPT: "adopt", REVEAL: "reveal"}

IRRELEVANT, RELEVANT, ACTIVE = 0, 1, 2

_FLAG_BITS = 24
# key layout, low to high: a_d(6) a_c(5) h_d(6) hc_len(5) hc_flags(24)
# fork(2) c(5) pool(3) pending(1)
_S_AC = 6
_S_HD = 11
_S_HCLEN = 17
_S_FLAGS = 22
_S_FORK = 46
_S_C = 48
_S_POOL = 53
_S_PENDING = 56


def pack_state(
    a_d: int,
    a_c: int,
    h_d: int,
    hc_len: int,
    hc_flags: int,
    fork: int,
    c: int,
    pool: int,
    pending: int,
) -> int:
    return (
        a_d
        | (a_c << _S_AC)
        | (h_d << _S_HD)
        | (hc_len << _S_HCLEN)
        | (hc_flags << _S_FLAGS)
        | (fork << _S_FORK)
        | (c << _S_C)
        | (pool << _S_POOL)
        | (pending << _S_PENDING)
    )


def unpack_state(key: int) -> tuple[int, int, int, int, int, int, int, int, int]:
    """(a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending)."""
    return (
        key & 0x3F,
        (key >> _S_AC) & 0x1F,
        (key >> _S_HD) & 0x3F,
        (key >> _S_HCLEN) & 0x1F,
        (key >> _S_FLAGS) & ((1 << _FLAG_BITS) - 1),
        (key >> _S_FORK) & 0x3,
        (key >> _S_C) & 0x1F,
        (key >> _S_POOL) & 0x7,
        key >> _S_PENDING,
    )


class _Builder:
    def __init__(self, params: ModelParams) -> None:
        if params.max_fork > _FLAG_BITS:
            raise ModelError(f"max_fork above {_FLAG_BITS} does not fit the state key")
        if params.max_pool > 7:
            raise ModelError("max_pool above 7 does not fit the state key")
        if params.fork_sensitivity > 63:
            raise ModelError("fork_sensitivity above 63 does not fit the state key")
        self.p = params

    def initial(self) -> int:
        return pack_state(0, 0, 0, 0, 0, IRRELEVANT, 0, 0, 1)

    def canonical(
        self,
        a_d: int,
        a_c: int,
        h_d: int,
        hc_len: int,
        hc_flags: int,
        fork: int,
        c: int,
        pool: int,
        pending: int,
    ) -> int:
        p = self.p
        assert a_d >= h_d and a_d + h_d <= p.fork_sensitivity
        assert c <= min(a_c, hc_len)
        assert hc_flags.bit_count() <= pool
        assert pending or (a_d == 0 and h_d == 0)
        # Relevant only matters while a first-heard tie is publishable.
        if fork == RELEVANT and not (
            p.tie_break is TieBreak.FIRST_HEARD and a_c >= hc_len >= 1 and hc_len > c
        ):
            fork = IRRELEVANT
        return pack_state(a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending)

    def actions(self, key: int) -> list[tuple[int, list[Arc]]]:
        p = self.p
        a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending = unpack_state(key)
        out: list[tuple[int, list[Arc]]] = []
        if a_c < p.max_fork and hc_len < p.max_fork:
            arcs = self._mine(a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending)
            arcs = whale_arrival_expansion(
                arcs,
                p.delta,
                p.max_pool,
                pool=pool,
                interrupt=self.canonical(
                    a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool + 1, pending
                ),
            )
            out.append((action_label(MINE), arcs))
        for length in range(max(a_c, 1), hc_len + 1):
            out.append(
                (
                    action_label(ADOPT, length),
                    self._adopt(a_d, a_c, h_d, hc_len, hc_flags, c, pool, length),
                )
            )
        for length in range(max(hc_len, c + 1, 1), a_c + 1):
            arcs = self._reveal(
                a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending, length
            )
            if arcs is not None:
                out.append((action_label(REVEAL, length), arcs))
        return out

    def _adopt(
        self,
        a_d: int,
        a_c: int,
        h_d: int,
        hc_len: int,
        hc_flags: int,
        c: int,
        pool: int,
        length: int,
    ) -> list[Arc]:
        p = self.p
        # Tied miner blocks whose fees were already claimed keep their
        # subsidy in dispute: once the adopted chain pushes the dispute
        # past the sensitivity bound, they settle for the miner.
        if (
            p.ledger is Ledger.MAD
            and c > 0
            and a_d + c + h_d + c > p.fork_sensitivity
        ):
            reward = float(a_d + c)
        else:
            reward = float(a_d - h_d)
        if p.difficulty_source is DifficultySource.UNCONTESTED:
            difficulty = reward + (length - a_c)
        else:
            difficulty = float(a_d + length)
        settled = (hc_flags & ((1 << length) - 1)).bit_count()
        target = self.canonical(
            0, 0, 0, hc_len - length, hc_flags >> length, IRRELEVANT, 0,
            pool - settled, 1,
        )
        return [Arc(target, CONST, 1.0, reward, difficulty)]

    def _reveal_longer(
        self,
        a_d: int,
        a_c: int,
        h_d: int,
        hc_len: int,
        fork: int,
        c: int,
        pool: int,
        pending: int,
        length: int,
    ) -> tuple[int, float, float]:
        """Shift a strictly longer revealed chain into the disputed prefix.

        Returns (target, reward, difficulty); the public chain is wiped,
        fees for the newly revealed blocks are collected now, and the
        subsidies settle once ambiguity cannot be carried any further.
        """
        p = self.p
        a_d2 = a_d + length
        h_d2 = h_d + hc_len
        claimed = min(length - c, pool)
        fee = p.guaranteed_fee * (length - c) + p.whale_fee * claimed
        pool2 = pool - claimed
        if not pending or a_d2 + h_d2 > p.fork_sensitivity:
            reward = a_d2 + fee
            difficulty = float(a_d2)
            a_d2, h_d2, pending2 = 0, 0, 0
        else:
            reward = fee
            difficulty = 0.0
            pending2 = pending
        target = self.canonical(
            a_d2, a_c - length, h_d2, 0, 0, IRRELEVANT if fork != ACTIVE else fork,
            0, pool2, pending2,
        )
        return target, reward, difficulty

    def _reveal(
        self,
        a_d: int,
        a_c: int,
        h_d: int,
        hc_len: int,
        hc_flags: int,
        fork: int,
        c: int,
        pool: int,
        pending: int,
        length: int,
    ) -> list[Arc] | None:
        p = self.p
        if length > hc_len:
            target, reward, difficulty = self._reveal_longer(
                a_d, a_c, h_d, hc_len, IRRELEVANT, c, pool, pending, length
            )
            return [Arc(target, CONST, 1.0, reward, difficulty)]
        # Destructive ledger: a secret chain at least as long voids the
        # public chain's fee content by mere threat, without an actual
        # publication race, so no rushing precondition applies.
        if (
            p.ledger is Ledger.MAD
            and p.tie_break is not TieBreak.WORST_CASE
            and hc_flags
        ):
            target = self.canonical(
                a_d, a_c, h_d, hc_len, 0, fork, c, pool, pending
            )
            return [Arc(target)]
        # Published tie. Never legal while one is already active, and under
        # first-heard rushing needs the honest block to be fresh.
        if fork == ACTIVE:
            return None
        if p.tie_break is TieBreak.FIRST_HEARD and fork != RELEVANT:
            return None
        if p.ledger is Ledger.CANONICAL:
            if p.tie_break is TieBreak.WORST_CASE:
                # Honest miners take the revealed chain outright.
                target, reward, difficulty = self._reveal_longer(
                    a_d, a_c, h_d, hc_len, IRRELEVANT, c, pool, pending, length
                )
                return [Arc(target, CONST, 1.0, reward, difficulty)]
            target = pack_state(
                a_d, a_c, h_d, hc_len, hc_flags, ACTIVE, c, pool, pending
            )
            return [Arc(target)]
        # Destructive ledger: publishing an equal-length chain voids the
        # public chain's fee content.
        if p.tie_break is TieBreak.WORST_CASE:
            claimed = min(length - c, pool)
            fee = p.guaranteed_fee * (length - c) + p.whale_fee * claimed
            target = self.canonical(
                a_d, a_c, h_d, hc_len, 0, fork, length, pool - claimed, pending
            )
            return [Arc(target, CONST, 1.0, fee, 0.0)]
        target = pack_state(a_d, a_c, h_d, hc_len, 0, ACTIVE, c, pool, pending)
        return [Arc(target)]

    def _mine(
        self,
        a_d: int,
        a_c: int,
        h_d: int,
        hc_len: int,
        hc_flags: int,
        fork: int,
        c: int,
        pool: int,
        pending: int,
    ) -> list[Arc]:
        p = self.p
        mine = Arc(
            self.canonical(
                a_d, a_c + 1, h_d, hc_len, hc_flags, IRRELEVANT, c, pool, pending
            ),
            MINER,
            creates_block=True,
        )
        new_flag = int(hc_flags.bit_count() < pool) << hc_len
        extend = self.canonical(
            a_d, a_c, h_d, hc_len + 1, hc_flags | new_flag, RELEVANT, c, pool, pending
        )
        if fork != ACTIVE:
            return [mine, Arc(extend, OTHERS, creates_block=True)]
        rush = p.gamma if p.tie_break is TieBreak.FIRST_HEARD else 0.5
        arcs = [mine]
        if rush < 1.0:
            arcs.append(Arc(extend, OTHERS, 1.0 - rush, creates_block=True))
        if rush > 0.0:
            arcs.append(self._rush_win(a_d, a_c, h_d, hc_len, c, pool, pending, rush))
        return arcs

    def _rush_win(
        self,
        a_d: int,
        a_c: int,
        h_d: int,
        hc_len: int,
        c: int,
        pool: int,
        pending: int,
        rush: float,
    ) -> Arc:
        """An honest block lands on the revealed side of an active tie."""
        p = self.p
        if p.ledger is Ledger.CANONICAL:
            target, reward, difficulty = self._reveal_longer(
                a_d, a_c, h_d, hc_len, ACTIVE, c, pool, pending, hc_len
            )
            ta = unpack_state(target)
            pool2, flag = ta[7], int(ta[7] > 0)
            target = self.canonical(
                ta[0], ta[1], ta[2], 1, flag, RELEVANT, 0, pool2, ta[8]
            )
            return Arc(
                target, OTHERS, rush, reward, difficulty, creates_block=True
            )
        # Destructive ledger: the tie stays in dispute, only its fee
        # content is taken; the new honest block starts a fresh chain on
        # top of the ambiguity.
        claimed = min(hc_len - c, pool)
        fee = p.guaranteed_fee * (hc_len - c) + p.whale_fee * claimed
        pool2 = pool - claimed
        flag = int(pool2 > 0) << hc_len
        target = self.canonical(
            a_d, a_c, h_d, hc_len + 1, flag, RELEVANT, hc_len, pool2, pending
        )
        return Arc(target, OTHERS, rush, fee, 0.0, creates_block=True)

    def honest_label(self, key: int) -> int:
        p = self.p
        a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending = unpack_state(key)
        if hc_len >= max(a_c, 1):
            return action_label(ADOPT, hc_len)
        if a_c >= 1 and a_c > hc_len:
            return action_label(REVEAL, a_c)
        return action_label(MINE)


def canonicalize_state(key: int, params: ModelParams) -> int | None:
    """Map a packed state description onto its stored representative.

    Returns ``None`` when no game history can produce the description:
    counts beyond the fork or sensitivity caps, disputed counts with the
    miner behind, claim flags outside the public chain or outnumbering
    the pool, contested fee credit without the destructive ledger, or a
    tie marker the reveal rules cannot stage. A relevant flag with no
    first-heard tie to publish collapses onto the irrelevant key.
    """
    if key < 0:
        return None
    a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending = unpack_state(key)
    if a_c > params.max_fork or hc_len > params.max_fork:
        return None
    if a_d < h_d or a_d + h_d > params.fork_sensitivity:
        return None
    if not pending and (a_d or h_d):
        return None
    if pending > 1 or pool > params.max_pool:
        return None
    if hc_flags >> hc_len or hc_flags.bit_count() > pool:
        return None
    if c > min(a_c, hc_len) or (c and params.ledger is not Ledger.MAD):
        return None
    if fork > ACTIVE:
        return None
    if fork == ACTIVE:
        if not (a_c >= hc_len >= 1 and hc_len > c):
            return None
        if params.tie_break is TieBreak.WORST_CASE:
            return None
        if params.ledger is Ledger.MAD and hc_flags:
            return None
    if fork == RELEVANT and not (
        params.tie_break is TieBreak.FIRST_HEARD and a_c >= hc_len >= 1 and hc_len > c
    ):
        fork = IRRELEVANT
    return pack_state(a_d, a_c, h_d, hc_len, hc_flags, fork, c, pool, pending)


def build_ub_model(params: ModelParams) -> Mdp:
    """Compile the revenue-upper-bound DAG MDP for ``params``."""
    mdp, _ = compile_model(_Builder(params), params.alpha)
    return mdp


def explore(params: ModelParams):
    """Model plus sorted packed state keys, for tests and diagnostics."""
    return compile_model(_Builder(params), params.alpha)
