"""Mining-game MDP builders and shared model vocabulary."""

from .compile import (
    Arc,
    CONST,
    MEMORY_ENV,
    MINER,
    OTHERS,
    action_label,
    code_values,
    compile_model,
    rebind_miner_power,
    split_label,
    whale_arrival_expansion,
)
from .fulldag import build_full_model, merge_settlement
from .nakamoto import build_nc_model
from . import fulldag, nakamoto, upperbound
from .params import (
    DIFFICULTY_LABELS,
    DIFFICULTY_NAMES,
    LEDGER_LABELS,
    LEDGER_NAMES,
    TIE_BREAK_LABELS,
    TIE_BREAK_NAMES,
    DifficultySource,
    Ledger,
    ModelParams,
    TieBreak,
)
from .upperbound import build_ub_model

MODEL_BUILDERS = {
    "bitcoin_fee": build_nc_model,
    "simplified_colordag": build_ub_model,
    "chain_colordag": build_full_model,
}

CANONICALIZERS = {
    "bitcoin_fee": nakamoto.canonicalize_state,
    "simplified_colordag": upperbound.canonicalize_state,
    "chain_colordag": fulldag.canonicalize_state,
}


def canonicalize_state(model: str, key: int, params: ModelParams) -> int | None:
    """Canonical representative of ``key`` under ``model``, None if infeasible."""
    try:
        fn = CANONICALIZERS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}") from None
    return fn(key, params)

__all__ = [
    "Arc",
    "CANONICALIZERS",
    "CONST",
    "MEMORY_ENV",
    "MINER",
    "OTHERS",
    "MODEL_BUILDERS",
    "DIFFICULTY_LABELS",
    "DIFFICULTY_NAMES",
    "LEDGER_LABELS",
    "LEDGER_NAMES",
    "TIE_BREAK_LABELS",
    "TIE_BREAK_NAMES",
    "DifficultySource",
    "Ledger",
    "ModelParams",
    "TieBreak",
    "action_label",
    "build_full_model",
    "build_nc_model",
    "build_ub_model",
    "canonicalize_state",
    "code_values",
    "compile_model",
    "merge_settlement",
    "rebind_miner_power",
    "split_label",
    "whale_arrival_expansion",
]
