"""Ledger rules over explicit block DAGs.

Blocks carry ordered references to earlier blocks; the first reference marks
which parent the block prefers to extend. The canonical chain is a
maximum-height root-to-leaf path, with caller-supplied tie-breaking among
equal-height candidates. On top of the canonical chain three block classes
drive rewards and ledger content:

- acceptable: on some root-to-leaf chain within a bounded symmetric
  difference of the canonical chain (the fork-sensitivity window),
- uncontested: acceptable and alone at their height, the only blocks that
  earn a subsidy when they are also canonical,
- destructed: canonical blocks excluded by some other chain of equal
  length, whose contents a mutual-assured-destruction ledger drops.

All functions are pure and operate on immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

SELFISH = "selfish"
HONEST = "honest"

Chain = tuple[str, ...]
Preference = Callable[[list[Chain]], Chain]


class DagError(ValueError):
    """Raised for malformed DAGs or unknown block references."""


@dataclass(frozen=True)
class Block:
    id: str
    creator: str
    whale: int
    parents: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.creator not in (SELFISH, HONEST):
            raise DagError(f"unknown creator {self.creator!r}")
        if self.whale not in (0, 1):
            raise DagError(f"whale flag must be 0 or 1, got {self.whale!r}")
        if len(set(self.parents)) != len(self.parents):
            raise DagError(f"block {self.id}: duplicate parent references")


@dataclass(frozen=True)
class BlockDag:
    """Immutable DAG with a unique root (the last block both sides agree on).

    Blocks are listed in creation order; references must point to earlier
    blocks, and referencing both a block and one of its ancestors is invalid.
    """

    blocks: tuple[Block, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise DagError("empty DAG")
        index: dict[str, Block] = {}
        ancestors: dict[str, frozenset[str]] = {}
        for pos, block in enumerate(self.blocks):
            if block.id in index:
                raise DagError(f"duplicate block id {block.id}")
            if pos == 0:
                if block.parents:
                    raise DagError("root block must have no parents")
            elif not block.parents:
                raise DagError(f"second root {block.id}: only the first block may lack parents")
            for ref in block.parents:
                if ref not in index:
                    raise DagError(f"block {block.id} references unknown or later block {ref}")
            anc: set[str] = set()
            for ref in block.parents:
                anc.add(ref)
                anc |= ancestors[ref]
            for ref in block.parents:
                if ancestors[ref] & set(block.parents):
                    raise DagError(
                        f"block {block.id} references {ref} together with one of its ancestors"
                    )
            index[block.id] = block
            ancestors[block.id] = frozenset(anc)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_ancestors", ancestors)

    @property
    def root(self) -> Block:
        return self.blocks[0]

    def block(self, block_id: str) -> Block:
        try:
            return self._index[block_id]  # type: ignore[attr-defined]
        except KeyError:
            raise DagError(f"unknown block {block_id}") from None

    def ancestors(self, block_id: str) -> frozenset[str]:
        self.block(block_id)
        return self._ancestors[block_id]  # type: ignore[attr-defined]

    def children(self, block_id: str) -> tuple[str, ...]:
        self.block(block_id)
        return tuple(b.id for b in self.blocks if block_id in b.parents)


@dataclass(frozen=True)
class ChainView:
    """A root-to-leaf chain; position in the chain equals DAG height."""

    blocks: Chain
    heights: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.heights != tuple(range(len(self.blocks))):
            raise DagError("chain heights must increase by 1 from 0")

    def __len__(self) -> int:
        return len(self.blocks)

    def __contains__(self, block_id: str) -> bool:
        return block_id in self.blocks


def validate_references(dag: BlockDag, refs: Sequence[str]) -> bool:
    """True iff no referenced block is an ancestor of another referenced block."""
    for ref in refs:
        dag.block(ref)
    if len(set(refs)) != len(refs):
        return False
    for ref in refs:
        if dag.ancestors(ref) & set(refs):
            return False
    return True


def heights(dag: BlockDag) -> dict[str, int]:
    """Height of every block: maximum distance from the root (longest-path DP)."""
    out: dict[str, int] = {}
    for block in dag.blocks:  # creation order is a topological order
        out[block.id] = 1 + max((out[p] for p in block.parents), default=-1)
    return out


def chains(dag: BlockDag) -> list[Chain]:
    """All maximal root-to-leaf chains, in depth-first child order."""
    children: dict[str, list[str]] = {b.id: [] for b in dag.blocks}
    for block in dag.blocks:
        for ref in block.parents:
            children[ref].append(block.id)
    out: list[Chain] = []
    stack: list[tuple[str, ...]] = [(dag.root.id,)]
    while stack:
        path = stack.pop()
        kids = children[path[-1]]
        if not kids:
            out.append(path)
            continue
        for kid in reversed(kids):
            stack.append(path + (kid,))
    return out


def canonical_chain(dag: BlockDag, preference: Preference | None = None) -> ChainView:
    """A maximum-height root-to-leaf chain; `preference` breaks ties.

    Without a preference the first candidate in depth-first child order wins
    (a deterministic default for tests and single-chain DAGs).
    """
    all_chains = chains(dag)
    best = max(len(c) for c in all_chains)
    candidates = [c for c in all_chains if len(c) == best]
    if preference is not None and len(candidates) > 1:
        chosen = preference(candidates)
        if chosen not in candidates:
            raise DagError("preference returned a chain that is not a candidate")
    else:
        chosen = candidates[0]
    return ChainView(blocks=chosen, heights=tuple(range(len(chosen))))


def acceptable_blocks(dag: BlockDag, canonical: ChainView, fork_sensitivity: int) -> frozenset[str]:
    """Blocks on some root-to-leaf chain within `fork_sensitivity` symmetric
    difference of the canonical chain. Canonical blocks always qualify."""
    canon = set(canonical.blocks)
    out = set(canon)
    for chain in chains(dag):
        if len(set(chain) ^ canon) <= fork_sensitivity:
            out.update(chain)
    return frozenset(out)


def uncontested_blocks(
    dag: BlockDag, canonical: ChainView, acceptable: frozenset[str]
) -> frozenset[str]:
    """Acceptable blocks that are alone at their height among acceptable blocks."""
    hts = heights(dag)
    at_height: dict[int, int] = {}
    for block_id in acceptable:
        at_height[hts[block_id]] = at_height.get(hts[block_id], 0) + 1
    return frozenset(b for b in acceptable if at_height[hts[b]] == 1)


def destructed_blocks(dag: BlockDag, canonical: ChainView) -> frozenset[str]:
    """Canonical blocks excluded by some other root-to-leaf chain of equal length."""
    rivals = [set(c) for c in chains(dag) if len(c) == len(canonical) and c != canonical.blocks]
    return frozenset(b for b in canonical.blocks if any(b not in rival for rival in rivals))


def parse_dag(text: str) -> BlockDag:
    """Parse the textual fixture format: one block per line,
    `id creator whale parent-ids...`; `#` starts a comment."""
    blocks: list[Block] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 3:
            raise DagError(f"line {lineno}: expected `id creator whale parent-ids...`")
        try:
            whale = int(fields[2])
        except ValueError:
            raise DagError(f"line {lineno}: whale flag must be an integer") from None
        blocks.append(
            Block(id=fields[0], creator=fields[1], whale=whale, parents=tuple(fields[3:]))
        )
    return BlockDag(blocks=tuple(blocks))
