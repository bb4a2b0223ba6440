"""Ratio-objective MDPs and their stochastic-shortest-path solution.

A model is a finite MDP whose transitions carry a reward and a difficulty
contribution. The objective is the long-run ratio of accumulated reward to
accumulated difficulty (the miner's revenue per unit of difficulty). The
probabilistic-termination transformation turns this into a stochastic
shortest path problem: every transition with difficulty d continues with
probability (1 - 1/H)^d and otherwise jumps to a fresh terminal state, so
an expected difficulty budget of H elapses before termination and the
optimal SSP value at the initial state divided by H approximates the
optimal ratio.

Storage is flat: states own contiguous action rows, rows own contiguous
transition entries. Everything downstream (policy iteration, value
iteration, greedy improvement) is vectorized over these arrays, which keeps
million-state models tractable in pure numpy/scipy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph


class SolverError(RuntimeError):
    """Raised when linear solves fail or iteration caps are exceeded."""


class ModelError(ValueError):
    """Raised for MDPs that violate structural requirements."""


@dataclass(frozen=True)
class Transition:
    """One outcome branch of an action."""

    next: int
    prob: float
    reward: float
    difficulty: float


@dataclass(frozen=True)
class SolverConfig:
    """Termination horizon and solver tolerances.

    horizon is the expected difficulty spent before the transformed process
    terminates; precision stops policy/value iteration on the max value
    change. Linear solves default to tolerance 1e-9 with at most
    10*sqrt(state count) iterations.
    """

    horizon: float = 1.0e5
    precision: float = 1.0e-5
    linear_tol: float = 1.0e-9
    linear_maxiter: int | None = None
    max_rounds: int = 500
    vi_max_sweeps: int | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1.0:
            raise ValueError("horizon must be >= 1")
        if self.precision <= 0.0:
            raise ValueError("precision must be positive")

    def lin_maxiter(self, n_states: int) -> int:
        if self.linear_maxiter is not None:
            return self.linear_maxiter
        return max(50, int(10.0 * math.sqrt(max(n_states, 1))))

    def vi_sweeps(self) -> int:
        if self.vi_max_sweeps is not None:
            return self.vi_max_sweeps
        # Sup-norm contraction is roughly (1 - 1/H) per unit of difficulty;
        # this budget shrinks any plausible value scale below precision.
        return int(40.0 * self.horizon) + 1000


@dataclass
class SolveResult:
    """Optimal policy, its value vector, and the implied revenue ratio."""

    policy: np.ndarray  # per-state local action index (row within the state)
    labels: np.ndarray  # per-state encoded label of the chosen action
    values: np.ndarray
    ratio: float
    rounds: int
    backend: str

    def action(self, state: int) -> int:
        return int(self.labels[state])


class Mdp:
    """Sparse MDP over integer states.

    Per-state action rows live in ``[state_ptr[s], state_ptr[s+1])``; the
    transition entries of row k live in ``[row_ptr[k], row_ptr[k+1])``.
    ``labels`` holds one encoded action label per row (model-specific
    integers, informational to the solver). ``honest`` optionally marks one
    row per state as the honest-mimicking action used to seed policy
    iteration. ``prob_code``/``prob_scale`` optionally record a symbolic
    factorization of each probability so builders can rebind the
    miner-power parameter without re-expanding the state space. A terminal
    state, when present, is always the last state and has no action rows.
    """

    def __init__(
        self,
        *,
        state_ptr: np.ndarray,
        row_ptr: np.ndarray,
        labels: np.ndarray,
        cols: np.ndarray,
        probs: np.ndarray,
        rewards: np.ndarray,
        diffs: np.ndarray,
        initial: int,
        terminal: int | None = None,
        honest: np.ndarray | None = None,
        prob_code: np.ndarray | None = None,
        prob_scale: np.ndarray | None = None,
    ) -> None:
        self.state_ptr = np.asarray(state_ptr, dtype=np.int64)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.probs = np.asarray(probs, dtype=np.float64)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.diffs = np.asarray(diffs, dtype=np.float64)
        self.initial = int(initial)
        self.terminal = None if terminal is None else int(terminal)
        self.honest = None if honest is None else np.asarray(honest, dtype=np.int64)
        self.prob_code = None if prob_code is None else np.asarray(prob_code, dtype=np.int8)
        self.prob_scale = (
            None if prob_scale is None else np.asarray(prob_scale, dtype=np.float64)
        )

    # ------------------------------------------------------------ shape

    @property
    def n_states(self) -> int:
        return len(self.state_ptr) - 1

    @property
    def n_rows(self) -> int:
        return len(self.row_ptr) - 1

    def n_actions(self, state: int) -> int:
        return int(self.state_ptr[state + 1] - self.state_ptr[state])

    def action_label(self, state: int, action: int) -> int:
        return int(self.labels[self.row_of(state, action)])

    def row_of(self, state: int, action: int) -> int:
        if not 0 <= action < self.n_actions(state):
            raise IndexError(f"state {state} has no action {action}")
        return int(self.state_ptr[state] + action)

    def transitions(self, state: int, action: int) -> list[Transition]:
        row = self.row_of(state, action)
        lo, hi = int(self.row_ptr[row]), int(self.row_ptr[row + 1])
        return [
            Transition(int(self.cols[i]), float(self.probs[i]), float(self.rewards[i]),
                       float(self.diffs[i]))
            for i in range(lo, hi)
        ]

    def nonterminal_states(self) -> np.ndarray:
        if self.terminal is None:
            return np.arange(self.n_states, dtype=np.int64)
        return np.arange(self.n_states - 1, dtype=np.int64)

    def chosen_rows(self, policy: np.ndarray) -> np.ndarray:
        states = self.nonterminal_states()
        return self.state_ptr[states] + np.asarray(policy, dtype=np.int64)[states]

    def chosen_labels(self, policy: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_states, dtype=np.int64)
        states = self.nonterminal_states()
        out[states] = self.labels[self.chosen_rows(policy)]
        return out

    # -------------------------------------------------------- validation

    def check(self, tol: float = 1.0e-12) -> None:
        """Validate structural invariants; raises ModelError on violation."""
        if self.n_states == 0:
            raise ModelError("MDP has no states")
        if not 0 <= self.initial < self.n_states:
            raise ModelError("initial state out of range")
        if self.terminal is not None and self.terminal != self.n_states - 1:
            raise ModelError("terminal state must be the last state")
        if np.any(np.diff(self.state_ptr) < 0) or np.any(np.diff(self.row_ptr) < 0):
            raise ModelError("pointer arrays must be nondecreasing")
        actions_per_state = np.diff(self.state_ptr)
        for s in np.flatnonzero(actions_per_state == 0):
            if self.terminal is None or int(s) != self.terminal:
                raise ModelError(f"state {int(s)} has no legal action")
        lens = np.diff(self.row_ptr)
        if np.any(lens == 0):
            raise ModelError("action row with no transitions")
        if len(self.cols):
            if self.cols.min() < 0 or self.cols.max() >= self.n_states:
                raise ModelError("transition target out of range")
        if np.any(self.probs < -tol) or np.any(self.probs > 1.0 + tol):
            raise ModelError("transition probability outside [0, 1]")
        if np.any(self.rewards < 0.0) or np.any(self.diffs < 0.0):
            raise ModelError("rewards and difficulties must be nonnegative")
        if self.n_rows:
            sums = np.add.reduceat(self.probs, self.row_ptr[:-1])
            if np.max(np.abs(sums - 1.0)) > tol:
                worst = int(np.argmax(np.abs(sums - 1.0)))
                raise ModelError(
                    f"row {worst} probabilities sum to {sums[worst]!r}, expected 1"
                )
        if self.honest is not None:
            if np.any((self.honest >= actions_per_state) & (self.honest >= 0)):
                raise ModelError("honest action index out of range")

    def row_expected(self) -> tuple[np.ndarray, np.ndarray]:
        """Expected reward and difficulty of every action row."""
        er = np.add.reduceat(self.probs * self.rewards, self.row_ptr[:-1])
        ed = np.add.reduceat(self.probs * self.diffs, self.row_ptr[:-1])
        return er, ed


def from_tables(
    table: dict,
    initial,
    terminal=None,
    honest: dict | None = None,
) -> tuple[Mdp, dict]:
    """Build a small Mdp from nested dicts, for tests and toy models.

    ``table`` maps state name -> {action name -> [(next name, p, r, d), ...]}.
    A terminal state, if named, is appended last with no actions. Returns
    the Mdp and the state-name -> index mapping.
    """
    names = [n for n in table.keys() if n != terminal]
    if terminal is not None:
        names.append(terminal)
    index = {name: i for i, name in enumerate(names)}
    state_ptr = [0]
    row_ptr = [0]
    labels: list[int] = []
    cols: list[int] = []
    probs: list[float] = []
    rewards: list[float] = []
    diffs: list[float] = []
    honest_rows = np.full(len(names), -1, dtype=np.int64)
    for name in names:
        actions = table.get(name, {}) if name != terminal else {}
        for j, branches in enumerate(actions.values()):
            labels.append(j)
            for nxt, p, r, d in branches:
                cols.append(index[nxt])
                probs.append(float(p))
                rewards.append(float(r))
                diffs.append(float(d))
            row_ptr.append(len(cols))
        if honest and name in honest:
            honest_rows[index[name]] = list(actions.keys()).index(honest[name])
        state_ptr.append(len(labels))
    mdp = Mdp(
        state_ptr=np.array(state_ptr),
        row_ptr=np.array(row_ptr),
        labels=np.array(labels, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        probs=np.array(probs),
        rewards=np.array(rewards),
        diffs=np.array(diffs),
        initial=index[initial],
        terminal=None if terminal is None else index[terminal],
        honest=honest_rows if honest else None,
    )
    return mdp, index


def _segment_offsets(lengths: np.ndarray) -> np.ndarray:
    """[0..l0), [0..l1), ... flattened; every length must be positive."""
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    out[0] = 0
    resets = np.cumsum(lengths)[:-1]
    out[resets] = -(lengths[:-1] - 1)
    return np.cumsum(out)


def _row_owner(mdp: Mdp) -> np.ndarray:
    counts = np.diff(mdp.state_ptr)
    return np.repeat(np.arange(mdp.n_states, dtype=np.int64), counts)


# ------------------------------------------------------------ zero-difficulty


def zero_difficulty_cycle(mdp: Mdp) -> bool:
    """True iff the subgraph of zero-difficulty transitions contains a cycle."""
    mask = (mdp.diffs == 0.0) & (mdp.probs > 0.0)
    if not np.any(mask):
        return False
    owner = _row_owner(mdp)
    src = np.repeat(owner, np.diff(mdp.row_ptr))[mask]
    dst = mdp.cols[mask]
    if np.any(src == dst):
        return True
    graph = sp.csr_matrix(
        (np.ones(len(src), dtype=np.int8), (src, dst)), shape=(mdp.n_states, mdp.n_states)
    )
    n_comp, _ = csgraph.connected_components(graph, directed=True, connection="strong")
    return n_comp < mdp.n_states  # some strong component holds >= 2 states


def zero_difficulty_end_component(mdp: Mdp) -> bool:
    """True iff some policy can stay on zero-difficulty transitions forever.

    This is the exact condition under which the transformed process could
    fail to terminate: a closed state set where every state keeps an action
    whose branches all have zero difficulty and all stay inside the set.
    Computed by iteratively discarding states lacking such an action.
    """
    branch_row = np.repeat(np.arange(mdp.n_rows, dtype=np.int64), np.diff(mdp.row_ptr))
    rows_with_positive = np.unique(branch_row[mdp.diffs > 0.0])
    all_zero_row = np.ones(mdp.n_rows, dtype=bool)
    all_zero_row[rows_with_positive] = False
    if not np.any(all_zero_row):
        return False
    owner = _row_owner(mdp)
    zrows = np.flatnonzero(all_zero_row)
    zstarts = mdp.row_ptr[zrows]
    zlens = (mdp.row_ptr[zrows + 1] - zstarts).astype(np.int64)
    gather = np.repeat(zstarts, zlens) + _segment_offsets(zlens)
    seg_ptr = np.concatenate(([0], np.cumsum(zlens)))
    zcols = mdp.cols[gather]
    zowner = owner[zrows]
    keep = np.zeros(mdp.n_states, dtype=bool)
    keep[zowner] = True
    while True:
        inside = keep[zcols].astype(np.int8)
        row_closed = np.minimum.reduceat(inside, seg_ptr[:-1]) == 1
        new_keep = np.zeros(mdp.n_states, dtype=bool)
        new_keep[zowner[row_closed]] = True
        new_keep &= keep
        if np.array_equal(new_keep, keep):
            return bool(np.any(keep))
        keep = new_keep
        if not np.any(keep):
            return False


# ------------------------------------------------------------------- PTO


def pto_transform(mdp: Mdp, cfg: SolverConfig) -> Mdp:
    """Append a terminal state and split every positive-difficulty branch.

    A branch (p, r, d) becomes: continue with p*(1-1/H)^d carrying reward r,
    or terminate with the complementary probability, also carrying reward r,
    so per-action expected reward and difficulty are preserved exactly.
    Zero-difficulty branches pass through unchanged. Rejects models where
    some policy could avoid positive difficulty forever.
    """
    if mdp.terminal is not None:
        raise ModelError("MDP already has a terminal state")
    mdp.check()
    if zero_difficulty_end_component(mdp):
        raise ModelError(
            "zero-difficulty end component: the transformed process would "
            "not terminate under every policy"
        )
    h = float(cfg.horizon)
    log_keep = math.log1p(-1.0 / h)
    factor = np.where(
        mdp.diffs == 0.0,
        1.0,
        np.where(mdp.diffs == 1.0, 1.0 - 1.0 / h, np.exp(mdp.diffs * log_keep)),
    )
    terminal = mdp.n_states
    splits = factor < 1.0
    n_out = len(mdp.probs) + int(np.count_nonzero(splits))
    cols = np.empty(n_out, dtype=np.int64)
    probs = np.empty(n_out)
    rewards = np.empty(n_out)
    diffs = np.empty(n_out)
    has_codes = mdp.prob_code is not None
    src_code = mdp.prob_code if has_codes else np.zeros(len(mdp.probs), dtype=np.int8)
    src_scale = mdp.prob_scale if has_codes else mdp.probs
    code = np.empty(n_out, dtype=np.int8)
    scale = np.empty(n_out)
    # each split branch contributes (continue, terminate) adjacently
    sizes = np.where(splits, 2, 1)
    dst = np.cumsum(sizes) - sizes
    cols[dst] = mdp.cols
    probs[dst] = mdp.probs * factor
    rewards[dst] = mdp.rewards
    diffs[dst] = mdp.diffs
    code[dst] = src_code
    scale[dst] = src_scale * factor
    tdst = dst[splits] + 1
    cols[tdst] = terminal
    probs[tdst] = mdp.probs[splits] * (1.0 - factor[splits])
    rewards[tdst] = mdp.rewards[splits]
    diffs[tdst] = mdp.diffs[splits]
    code[tdst] = src_code[splits]
    scale[tdst] = src_scale[splits] * (1.0 - factor[splits])
    extra = np.add.reduceat(splits.astype(np.int64), mdp.row_ptr[:-1])
    row_ptr = np.concatenate(([0], np.cumsum(np.diff(mdp.row_ptr) + extra)))
    state_ptr = np.concatenate((mdp.state_ptr, [mdp.state_ptr[-1]]))
    honest = None if mdp.honest is None else np.concatenate((mdp.honest, [-1]))
    return Mdp(
        state_ptr=state_ptr,
        row_ptr=row_ptr,
        labels=mdp.labels.copy(),
        cols=cols,
        probs=probs,
        rewards=rewards,
        diffs=diffs,
        initial=mdp.initial,
        terminal=terminal,
        honest=honest,
        prob_code=code if has_codes else None,
        prob_scale=scale if has_codes else None,
    )


# ------------------------------------------------------------- evaluation


def _krylov(method, a_mat, b, x0, rtol: float, maxiter: int):
    try:
        return method(a_mat, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter)
    except TypeError:  # older scipy spells the tolerance `tol`
        return method(a_mat, b, x0=x0, tol=rtol, atol=0.0, maxiter=maxiter)


def _policy_system(ssp: Mdp, policy: np.ndarray):
    """Sparse (I - P_pi) over non-terminal states plus the reward vector.

    Relies on the terminal state being last, so non-terminal states keep
    their indices in the reduced system.
    """
    states = ssp.nonterminal_states()
    n = len(states)
    rows = ssp.chosen_rows(policy)
    starts = ssp.row_ptr[rows]
    lens = (ssp.row_ptr[rows + 1] - starts).astype(np.int64)
    gather = np.repeat(starts, lens) + _segment_offsets(lens)
    seg_ptr = np.concatenate(([0], np.cumsum(lens)))
    cols = ssp.cols[gather]
    probs = ssp.probs[gather]
    b = np.add.reduceat(probs * ssp.rewards[gather], seg_ptr[:-1])
    keep = cols != ssp.terminal if ssp.terminal is not None else np.ones(len(cols), bool)
    src = np.repeat(np.arange(n, dtype=np.int64), lens)[keep]
    p_mat = sp.csr_matrix((probs[keep], (src, cols[keep])), shape=(n, n))
    a_mat = sp.eye(n, format="csr") - p_mat
    return a_mat, b


def evaluate_policy(
    ssp: Mdp,
    policy: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Solve v = r_pi + P_pi v (terminal excluded) with biconjugate-gradient
    iteration, retrying once with the stabilized variant; returns per-state
    values with the terminal fixed at zero."""
    a_mat, b = _policy_system(ssp, policy)
    n = len(b)
    out = np.zeros(ssp.n_states)
    if n == 0 or not np.any(b):
        return out
    bnorm = float(np.linalg.norm(b))
    guess = None
    if x0 is not None:
        guess = np.asarray(x0, dtype=np.float64)[ssp.nonterminal_states()]
        # An exact-enough warm start breaks down Krylov iterations (zero
        # residual), so accept it directly instead.
        if float(np.linalg.norm(b - a_mat @ guess)) <= cfg.linear_tol * bnorm:
            out[ssp.nonterminal_states()] = guess
            return out
    else:
        # A zero start can leave the residual aligned with a left eigenvector
        # of the system (rho breakdown in both Krylov variants); two Jacobi
        # sweeps produce a generic, deterministic starting vector.
        diag = a_mat.diagonal()
        if np.all(np.abs(diag) > 1e-300):
            guess = np.zeros(n)
            for _ in range(2):
                guess = guess + (b - a_mat @ guess) / diag
            if not np.all(np.isfinite(guess)):
                guess = None
    maxiter = cfg.lin_maxiter(n)
    last_residual = math.inf
    for method in (spla.bicg, spla.bicgstab):
        x, info = _krylov(method, a_mat, b, guess, cfg.linear_tol, maxiter)
        usable = isinstance(x, np.ndarray) and np.issubdtype(x.dtype, np.floating)
        if not usable:
            continue
        if info == 0 and np.all(np.isfinite(x)):
            out[ssp.nonterminal_states()] = x
            return out
        if np.all(np.isfinite(x)):
            last_residual = float(np.linalg.norm(b - a_mat @ x))
            guess = x
    # Krylov breakdowns (stagnation near the PTO absorption scale) leave the
    # system well-posed; a direct factorization settles it.
    x = spla.spsolve(a_mat.tocsc(), b)
    if np.all(np.isfinite(x)):
        residual = float(np.linalg.norm(b - a_mat @ x))
        if residual <= cfg.linear_tol * max(bnorm, 1.0) * 10.0:
            out[ssp.nonterminal_states()] = x
            return out
        last_residual = min(last_residual, residual)
    raise SolverError(
        f"policy evaluation failed to converge (residual {last_residual:.3e})"
    )


def _full_matrix(ssp: Mdp):
    """CSR of every action row against non-terminal columns, with expected rewards."""
    n = len(ssp.nonterminal_states())
    keep = ssp.cols != ssp.terminal if ssp.terminal is not None else np.ones(len(ssp.cols), bool)
    src = np.repeat(np.arange(ssp.n_rows, dtype=np.int64), np.diff(ssp.row_ptr))[keep]
    p_all = sp.csr_matrix((ssp.probs[keep], (src, ssp.cols[keep])), shape=(ssp.n_rows, n))
    er, _ = ssp.row_expected()
    return p_all, er


def _greedy(ssp: Mdp, q: np.ndarray) -> np.ndarray:
    """Per-state argmax over action rows; lowest action index wins ties.

    Requires the terminal (the only rowless state) to be last, so state row
    segments tile q contiguously.
    """
    states = ssp.nonterminal_states()
    starts = ssp.state_ptr[states]
    counts = (ssp.state_ptr[states + 1] - starts).astype(np.int64)
    best = np.maximum.reduceat(q, starts)
    local = _segment_offsets(counts)
    is_best = q == np.repeat(best, counts)
    cand = np.where(is_best, local, np.iinfo(np.int64).max)
    seg_ptr = np.concatenate(([0], np.cumsum(counts)))
    pick = np.minimum.reduceat(cand, seg_ptr[:-1])
    policy = np.zeros(ssp.n_states, dtype=np.int64)
    policy[states] = pick
    return policy


def initial_policy(ssp: Mdp) -> np.ndarray:
    """Honest-mimicking action where marked, first legal action otherwise."""
    if ssp.honest is None:
        return np.zeros(ssp.n_states, dtype=np.int64)
    return np.maximum(ssp.honest, 0).astype(np.int64)


def policy_iteration(ssp: Mdp, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Evaluate-then-greedy-improve until the policy is stable or the value
    vector moves less than the configured precision."""
    if ssp.terminal is None:
        raise ModelError("policy_iteration expects a PTO-transformed MDP")
    p_all, er = _full_matrix(ssp)
    policy = initial_policy(ssp)
    values = np.zeros(ssp.n_states)
    prev: np.ndarray | None = None
    for round_no in range(1, cfg.max_rounds + 1):
        try:
            values = evaluate_policy(ssp, policy, cfg, x0=prev)
        except SolverError as exc:
            raise SolverError(f"policy iteration round {round_no}: {exc}") from exc
        q = er + p_all @ values[ssp.nonterminal_states()]
        new_policy = _greedy(ssp, q)
        settled = prev is not None and float(np.max(np.abs(values - prev))) < cfg.precision
        if np.array_equal(new_policy, policy) or settled:
            return SolveResult(
                policy=policy,
                labels=ssp.chosen_labels(policy),
                values=values,
                ratio=float(values[ssp.initial]) / cfg.horizon,
                rounds=round_no,
                backend="policy-iteration/bicg",
            )
        policy = new_policy
        prev = values
    raise SolverError(f"policy iteration did not stabilize in {cfg.max_rounds} rounds")


def value_iteration(ssp: Mdp, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Jacobi sweeps of the Bellman operator with sup-norm stopping."""
    if ssp.terminal is None:
        raise ModelError("value_iteration expects a PTO-transformed MDP")
    p_all, er = _full_matrix(ssp)
    states = ssp.nonterminal_states()
    starts = ssp.state_ptr[states]
    v = np.zeros(len(states))
    sweeps = cfg.vi_sweeps()
    for sweep in range(1, sweeps + 1):
        q = er + p_all @ v
        v_new = np.maximum.reduceat(q, starts)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < cfg.precision:
            q = er + p_all @ v
            policy = _greedy(ssp, q)
            values = np.zeros(ssp.n_states)
            values[states] = v
            return SolveResult(
                policy=policy,
                labels=ssp.chosen_labels(policy),
                values=values,
                ratio=float(values[ssp.initial]) / cfg.horizon,
                rounds=sweep,
                backend="value-iteration",
            )
    raise SolverError(f"value iteration exceeded {sweeps} sweeps")


# ---------------------------------------------------------------- oracle


def ratio_value_oracle(mdp: Mdp, policy: np.ndarray) -> float:
    """Exact long-run reward/difficulty ratio of a policy on the original
    (untransformed) MDP via the stationary distribution of its chain.

    Requires a single recurrent class reachable from the initial state and
    positive expected difficulty on it; intended for small instances.
    """
    if mdp.terminal is not None:
        raise ModelError("ratio_value_oracle expects the untransformed MDP")
    rows = mdp.state_ptr[:-1] + np.asarray(policy, dtype=np.int64)
    starts = mdp.row_ptr[rows]
    lens = (mdp.row_ptr[rows + 1] - starts).astype(np.int64)
    gather = np.repeat(starts, lens) + _segment_offsets(lens)
    seg_ptr = np.concatenate(([0], np.cumsum(lens)))
    cols = mdp.cols[gather]
    probs = mdp.probs[gather]
    er = np.add.reduceat(probs * mdp.rewards[gather], seg_ptr[:-1])
    ed = np.add.reduceat(probs * mdp.diffs[gather], seg_ptr[:-1])
    src = np.repeat(np.arange(mdp.n_states, dtype=np.int64), lens)
    p_mat = sp.csr_matrix((probs, (src, cols)), shape=(mdp.n_states, mdp.n_states))
    order = csgraph.breadth_first_order(p_mat, mdp.initial, return_predecessors=False)
    reach = np.zeros(mdp.n_states, dtype=bool)
    reach[order] = True
    sub = p_mat[reach][:, reach].tocsr()
    n_comp, comp = csgraph.connected_components(sub, directed=True, connection="strong")
    coo = sub.tocoo()
    escaping = comp[coo.row] != comp[coo.col]
    transient = np.unique(comp[coo.row[escaping]])
    recurrent = np.setdiff1d(np.arange(n_comp), transient)
    if len(recurrent) != 1:
        raise ModelError(
            f"induced chain is multichain ({len(recurrent)} recurrent classes)"
        )
    in_class = comp == recurrent[0]
    p_c = sp.csr_matrix(sub[in_class][:, in_class])
    m = p_c.shape[0]
    a_mat = (p_c - sp.eye(m, format="csr")).T.tolil()
    a_mat[m - 1, :] = 1.0
    b = np.zeros(m)
    b[m - 1] = 1.0
    mu = spla.spsolve(a_mat.tocsc(), b)
    mu = np.clip(mu, 0.0, None)
    total = mu.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ModelError("stationary distribution solve failed")
    mu /= total
    class_states = np.flatnonzero(reach)[in_class]
    num = float(mu @ er[class_states])
    den = float(mu @ ed[class_states])
    if den <= 1.0e-14:
        raise ModelError("zero expected difficulty per step on the recurrent class")
    return num / den
