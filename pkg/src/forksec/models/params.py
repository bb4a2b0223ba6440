"""Shared parameter set and mode vocabulary for the protocol models."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..mdp import ModelError


class TieBreak(enum.Enum):
    """How honest miners pick between equal-height tips."""

    FIRST_HEARD = "first_heard"
    RANDOM = "random"
    WORST_CASE = "worst_case"


class DifficultySource(enum.Enum):
    """Which blocks count toward difficulty adjustment."""

    UNCONTESTED = "uncontested"
    CANONICAL = "canonical"


class Ledger(enum.Enum):
    """How settled content is read off the canonical chain."""

    CANONICAL = "canonical"
    MAD = "mad"


# CLI/CSV vocabulary (left) for each mode value (right).
TIE_BREAK_NAMES = {
    "first_heard": TieBreak.FIRST_HEARD,
    "random": TieBreak.RANDOM,
    "attacker": TieBreak.WORST_CASE,
}
DIFFICULTY_NAMES = {
    "uncontested": DifficultySource.UNCONTESTED,
    "main": DifficultySource.CANONICAL,
}
LEDGER_NAMES = {
    "longest": Ledger.CANONICAL,
    "mad": Ledger.MAD,
}

TIE_BREAK_LABELS = {v: k for k, v in TIE_BREAK_NAMES.items()}
DIFFICULTY_LABELS = {v: k for k, v in DIFFICULTY_NAMES.items()}
LEDGER_LABELS = {v: k for k, v in LEDGER_NAMES.items()}


@dataclass(frozen=True)
class ModelParams:
    """Attacker and protocol parameters shared by every model builder.

    Fees are in block-subsidy units. ``gamma`` is the rushing factor and
    only matters under the first-heard tie-break. ``fork_sensitivity``
    bounds the symmetric difference an acceptable fork may have from the
    canonical chain, ``max_fork`` caps tracked chain lengths, and
    ``max_pool`` caps simultaneously available whale transactions.
    """

    alpha: float
    gamma: float = 0.0
    delta: float = 0.0
    whale_fee: float = 0.0
    guaranteed_fee: float = 0.0
    fork_sensitivity: int = 15
    max_fork: int = 10
    max_pool: int = 2
    tie_break: TieBreak = TieBreak.FIRST_HEARD
    difficulty_source: DifficultySource = DifficultySource.UNCONTESTED
    ledger: Ledger = Ledger.CANONICAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        object.__setattr__(
            self, "difficulty_source", DifficultySource(self.difficulty_source)
        )
        object.__setattr__(self, "ledger", Ledger(self.ledger))
        if not 0.0 < self.alpha <= 0.5:
            raise ModelError(f"alpha must be in (0, 0.5], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ModelError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.delta < 0.0:
            raise ModelError(f"delta must be nonnegative, got {self.delta}")
        if self.whale_fee < 0.0:
            raise ModelError(f"whale_fee must be nonnegative, got {self.whale_fee}")
        if self.guaranteed_fee < 0.0:
            raise ModelError(
                f"guaranteed_fee must be nonnegative, got {self.guaranteed_fee}"
            )
        for name in ("fork_sensitivity", "max_fork", "max_pool"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ModelError(f"{name} must be a positive integer, got {value!r}")
