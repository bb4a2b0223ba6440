"""Selfish-mining model over explicit block DAGs.

Every block's references are part of the state: the miner's blocks carry
an optional pointer into the public chain, honest blocks carry an
optional pointer at the last revealed miner block plus a bit recording
which parent they extend (set by the tie-break when both candidate
chains were equally long). Nothing settles until the miner merges;
settlement derives the canonical chain from the recorded structure and
prices it with the ledger rules.

The explicit structure makes the state space grow steeply with the
chain cap, so this model is only practical for small caps; the
simplified model bounds it from above for larger ones.
"""

from __future__ import annotations

from ..dagrules import (
    Block,
    BlockDag,
    HONEST,
    SELFISH,
    acceptable_blocks,
    canonical_chain,
    destructed_blocks,
    heights,
    uncontested_blocks,
)
from ..mdp import Mdp, ModelError
from .compile import (
    Arc,
    MINER,
    OTHERS,
    action_label,
    compile_model,
    whale_arrival_expansion,
)
from .params import DifficultySource, Ledger, ModelParams, TieBreak

MINE, REVEAL, MERGE = 0, 2, 3
OPS = {MINE: "mine", REVEAL: "reveal", MERGE: "merge"}

IRRELEVANT, RELEVANT = 0, 1

_L_MAX = 10
_A_LEN_SHIFT = 5 * _L_MAX
_H_SHIFT = _A_LEN_SHIFT + 4
_H_LEN_SHIFT = _H_SHIFT + 6 * _L_MAX
_FORK_SHIFT = _H_LEN_SHIFT + 4
_R_SHIFT = _FORK_SHIFT + 1
_POOL_SHIFT = _R_SHIFT + 4

MinerBlock = tuple[int, int]  # (whale flag, honest-block reference or 0)
HonestBlock = tuple[int, int, int]  # (whale flag, miner-block reference or 0, pref)


def pack_state(
    a: tuple[MinerBlock, ...],
    h: tuple[HonestBlock, ...],
    fork: int,
    r: int,
    pool: int,
) -> int:
    # Keys outgrow 64 bits near the length cap; they stay plain ints.
    key = 0
    for i, (whale, href) in enumerate(a):
        key |= (whale | (href << 1)) << (5 * i)
    key |= len(a) << _A_LEN_SHIFT
    for j, (whale, aref, pref) in enumerate(h):
        key |= (whale | (aref << 1) | (pref << 5)) << (_H_SHIFT + 6 * j)
    key |= (len(h) << _H_LEN_SHIFT) | (fork << _FORK_SHIFT)
    key |= (r << _R_SHIFT) | (pool << _POOL_SHIFT)
    return key


def unpack_state(
    key: int,
) -> tuple[tuple[MinerBlock, ...], tuple[HonestBlock, ...], int, int, int]:
    """(miner blocks, honest blocks, fork, revealed count, pool)."""
    key = int(key)
    a_len = (key >> _A_LEN_SHIFT) & 0xF
    h_len = (key >> _H_LEN_SHIFT) & 0xF
    a = tuple(
        ((key >> (5 * i)) & 1, (key >> (5 * i + 1)) & 0xF) for i in range(a_len)
    )
    h = tuple(
        (
            (key >> (_H_SHIFT + 6 * j)) & 1,
            (key >> (_H_SHIFT + 6 * j + 1)) & 0xF,
            (key >> (_H_SHIFT + 6 * j + 5)) & 1,
        )
        for j in range(h_len)
    )
    return a, h, (key >> _FORK_SHIFT) & 1, (key >> _R_SHIFT) & 0xF, key >> _POOL_SHIFT


def _whales(blocks) -> int:
    return sum(b[0] for b in blocks)


def build_dag(
    a: tuple[MinerBlock, ...], h: tuple[HonestBlock, ...]
) -> BlockDag:
    """Materialize the fork as an explicit DAG under a synthetic root.

    Emits blocks in an interleaving consistent with their references and
    applies the reference-validity reduction: a recorded pointer that is
    an ancestor of the block's own-chain parent is dropped, and the
    own-chain parent is dropped when the pointer already contains it.
    """
    blocks = [Block("g", HONEST, 0, ())]
    anc: dict[str, frozenset[str]] = {"g": frozenset()}

    def emit(bid: str, creator: str, whale: int, own: str, other: str | None) -> None:
        parents = [own]
        if other is not None:
            if other in anc[own]:
                pass  # pointer already inherited through the own-chain parent
            elif own in anc[other] or own == "g":
                parents = [other]
            else:
                parents.append(other)
        anc[bid] = frozenset().union(*({p} | anc[p] for p in parents))
        blocks.append(Block(bid, creator, whale, tuple(parents)))

    done_a = done_h = 0
    while done_a < len(a) or done_h < len(h):
        progress = False
        while done_a < len(a) and a[done_a][1] <= done_h:
            whale, href = a[done_a]
            done_a += 1
            emit(
                f"a{done_a}",
                SELFISH,
                whale,
                f"a{done_a - 1}" if done_a > 1 else "g",
                f"h{href}" if href else None,
            )
            progress = True
        while done_h < len(h) and h[done_h][1] <= done_a:
            whale, aref, _pref = h[done_h]
            done_h += 1
            emit(
                f"h{done_h}",
                HONEST,
                whale,
                f"h{done_h - 1}" if done_h > 1 else "g",
                f"a{aref}" if aref else None,
            )
            progress = True
        if not progress:
            raise ModelError("block references are not well founded")
    return BlockDag(tuple(blocks))


def _canonical_walk(
    dag: BlockDag, hts: dict[str, int], h: tuple[HonestBlock, ...]
) -> tuple[str, ...]:
    """Root-to-leaf canonical chain implied by the recorded preferences.

    Starts from the highest leaf (the public view keeps its own tip when
    the revealed chain merely ties it) and steps down through each
    block's preferred parent among those one height below.
    """
    leaves = [b.id for b in dag.blocks if not dag.children(b.id)]
    top = max(hts[x] for x in leaves)
    best = [x for x in leaves if hts[x] == top]
    cur = best[0] if len(best) == 1 else next(x for x in best if x.startswith("h"))
    path = [cur]
    while cur != "g":
        parents = dag.block(cur).parents
        eligible = [q for q in parents if hts[q] == hts[cur] - 1]
        if len(eligible) == 1:
            nxt = eligible[0]
        else:
            if cur.startswith("h"):
                want_selfish = bool(h[int(cur[1:]) - 1][2])
            else:
                want_selfish = True  # the miner extends their own chain
            nxt = next(q for q in eligible if q.startswith("a") == want_selfish)
        path.append(nxt)
        cur = nxt
    path.reverse()
    return tuple(path)


def merge_settlement(
    params: ModelParams,
    a: tuple[MinerBlock, ...],
    h: tuple[HonestBlock, ...],
    revealed: int,
    pool: int,
) -> tuple[float, float, int]:
    """Price the public view of the fork: (reward, difficulty, new pool).

    Builds the DAG of revealed miner blocks and the public chain, derives
    the canonical chain, classifies blocks, and pays the miner subsidies
    for their uncontested canonical blocks plus fees for their ledger
    blocks. Whale claims settle in chain order while the pool lasts;
    over-claimed duplicates are void. Destruction returns claims to the
    pool along with those of discarded blocks.
    """
    dag = build_dag(a[:revealed], h)
    if len(dag.blocks) == 1:
        raise ModelError("nothing to settle: the public view is empty")
    hts = heights(dag)
    walk = _canonical_walk(dag, hts, h)
    view = canonical_chain(dag, preference=lambda _candidates: walk)
    acceptable = acceptable_blocks(dag, view, params.fork_sensitivity)
    uncontested = uncontested_blocks(dag, view, acceptable)
    canon = [b for b in view.blocks if b != "g"]
    ledger = set(canon)
    if params.ledger is Ledger.MAD:
        ledger -= destructed_blocks(dag, view)
    subsidy = sum(
        1 for b in canon if b in uncontested and dag.block(b).creator == SELFISH
    )
    reward = float(subsidy)
    pool_left = pool
    for bid in canon:
        if bid not in ledger:
            continue
        block = dag.block(bid)
        mine = block.creator == SELFISH
        if mine:
            reward += params.guaranteed_fee
        if block.whale and pool_left > 0:
            pool_left -= 1
            if mine:
                reward += params.whale_fee
    if params.difficulty_source is DifficultySource.UNCONTESTED:
        difficulty = sum(1 for b in canon if b in uncontested)
    else:
        difficulty = len(canon)
    return reward, float(difficulty), pool_left


class _Builder:
    def __init__(self, params: ModelParams) -> None:
        if params.max_fork > _L_MAX:
            raise ModelError(
                f"max_fork above {_L_MAX} does not fit the reference encoding"
            )
        if params.max_pool > 7:
            raise ModelError("max_pool above 7 does not fit the state key")
        self.p = params

    def initial(self) -> int:
        return pack_state((), (), IRRELEVANT, 0, 0)

    def actions(self, key: int) -> list[tuple[int, list[Arc]]]:
        p = self.p
        a, h, fork, r, pool = unpack_state(key)
        out: list[tuple[int, list[Arc]]] = []
        if len(a) < p.max_fork and len(h) < p.max_fork:
            dag = build_dag(a, h)
            hts = heights(dag)
            honest_arcs = self._honest_arcs(a, h, fork, r, pool, dag, hts)
            tip = f"a{len(a)}" if a else "g"
            whale = int(_whales(a) < pool)
            interrupt = pack_state(a, h, fork, r, pool + 1)
            for ref in range(0, len(h) + 1):
                if ref and f"h{ref}" in dag.ancestors(tip):
                    continue  # the reference would be redundant
                a2 = a + ((whale, ref),)
                arcs = [
                    Arc(pack_state(a2, h, IRRELEVANT, r, pool), MINER, creates_block=True)
                ]
                arcs.extend(honest_arcs)
                arcs = whale_arrival_expansion(
                    arcs, p.delta, p.max_pool, pool=pool, interrupt=interrupt
                )
                out.append((action_label(MINE, ref), arcs))
        for length in range(r + 1, len(a) + 1):
            target = pack_state(a, h, fork, length, pool)
            out.append((action_label(REVEAL, length), [Arc(target)]))
        if r > 0 or h:
            reward, difficulty, pool2 = merge_settlement(p, a, h, r, pool)
            target = pack_state((), (), IRRELEVANT, 0, pool2)
            out.append((action_label(MERGE), [Arc(target, reward=reward, difficulty=difficulty)]))
        return out

    def _honest_arcs(
        self,
        a: tuple[MinerBlock, ...],
        h: tuple[HonestBlock, ...],
        fork: int,
        r: int,
        pool: int,
        dag: BlockDag,
        hts: dict[str, int],
    ) -> list[Arc]:
        p = self.p
        whale = int(_whales(h) < pool)
        tip = f"h{len(h)}" if h else "g"
        aref = 0
        pick: int | None = 0
        if r >= 1 and f"a{r}" not in dag.ancestors(tip):
            aref = r
            if tip == "g" or tip in dag.ancestors(f"a{r}"):
                pick = 1  # the revealed block already extends the public tip
            elif hts[f"a{r}"] != hts[tip]:
                pick = int(hts[f"a{r}"] > hts[tip])
            else:
                pick = None  # equal-length candidates, tie-break decides

        def arc(pref: int, scale: float) -> Arc:
            target = pack_state(
                a, h + ((whale, aref, pref),), RELEVANT, r, pool
            )
            return Arc(target, OTHERS, scale, creates_block=True)

        if pick is not None:
            return [arc(pick, 1.0)]
        if p.tie_break is TieBreak.WORST_CASE:
            return [arc(1, 1.0)]
        if p.tie_break is TieBreak.RANDOM:
            return [arc(0, 0.5), arc(1, 0.5)]
        rushing = p.gamma if fork == RELEVANT else 0.0
        arcs = []
        if rushing < 1.0:
            arcs.append(arc(0, 1.0 - rushing))
        if rushing > 0.0:
            arcs.append(arc(1, rushing))
        return arcs

    def honest_label(self, key: int) -> int:
        a, h, _fork, r, _pool = unpack_state(key)
        if len(a) > r:
            return action_label(REVEAL, len(a))
        if r > 0 or h:
            return action_label(MERGE)
        return action_label(MINE, 0)


def canonicalize_state(key: int, params: ModelParams) -> int | None:
    """Map a packed state description onto its stored representative.

    Returns ``None`` when no game history can produce the description:
    chains beyond the fork cap, whale claims outnumbering the pool,
    references to unrevealed or nonexistent blocks, reference cycles, or
    a recorded chain preference the public tip rules contradict. A
    cross-reference that repeats what a block's own-chain parent already
    inherits collapses onto the bare description, as does a preference
    bit carried without a competing candidate.
    """
    if key < 0:
        return None
    a, h, fork, r, pool = unpack_state(key)
    if len(a) > params.max_fork or len(h) > params.max_fork:
        return None
    if r > len(a) or pool > params.max_pool:
        return None
    if fork == RELEVANT and not h:
        return None
    if _whales(a) > pool or _whales(h) > pool:
        return None
    if any(href > len(h) for _, href in a):
        return None
    if any(aref > r for _, aref, _ in h):
        return None
    try:
        dag = build_dag(a, h)
    except ModelError:
        return None
    hts = heights(dag)
    a2 = tuple(
        (w, 0)
        if href and f"h{href}" in dag.ancestors(f"a{i}" if i else "g")
        else (w, href)
        for i, (w, href) in enumerate(a)
    )
    h2 = []
    for j, (w, aref, pref) in enumerate(h):
        if not aref:
            h2.append((w, 0, 0))
            continue
        parent = f"h{j}" if j else "g"
        cand = f"a{aref}"
        if cand in dag.ancestors(parent):
            h2.append((w, 0, 0))
            continue
        if parent == "g" or parent in dag.ancestors(cand):
            forced: int | None = 1
        elif hts[cand] != hts[parent]:
            forced = int(hts[cand] > hts[parent])
        elif params.tie_break is TieBreak.WORST_CASE:
            forced = 1
        else:
            forced = None
        if forced is not None and pref != forced:
            return None
        h2.append((w, aref, pref))
    return pack_state(a2, tuple(h2), fork, r, pool)


def build_full_model(params: ModelParams) -> Mdp:
    """Compile the reference-tracking DAG MDP for ``params``."""
    mdp, _ = compile_model(_Builder(params), params.alpha)
    return mdp


def explore(params: ModelParams):
    """Model plus sorted packed state keys, for tests and diagnostics."""
    return compile_model(_Builder(params), params.alpha)
