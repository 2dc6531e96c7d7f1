"""Open-ended learning engine.

Populations of mixed strategies per player, empirical meta-games, meta-Nash
via fictitious play, and the population-update rules for the three variants:

* ``vanilla_psro``   - append the exact best response to the opponent's
                       aggregated meta-Nash strategy.
* ``diversity_psro`` - append the expected-cardinality argmax (diversity
                       baseline; the advantage term is off by default).
* ``sc_psro``        - the full update: a diversity branch taken with
                       probability ``lambda_d`` (expected cardinality plus a
                       weighted advantage term, replace-then-score), otherwise
                       a lookahead branch hill-climbing the advantage with a
                       randomly drawn step size.  The updated strategy
                       replaces the population's last member; a fresh random
                       member is appended only when the improvement ratio
                       against the opponent's aggregate falls short of ``im``.

Each member carries a confirming cache: the opponent population member that
best-responds to it (its expected response) and the payoff against that
member (the self-confirming advantage), which drives population clipping.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .games import BimatrixGame, GameError, payoff
from .solvers import (TIE_ATOL, MetaSolution, advantage, advantage_many,
                      best_response, ec_of_gram, exploitability,
                      fictitious_play, own_matrix)

VARIANTS = ("vanilla_psro", "diversity_psro", "sc_psro")
MODES = ("self_play", "stackelberg_player", "prosocial")

# Below this magnitude the improvement-ratio denominator is degenerate (or
# negative, which inverts the inequality) and an additive test is used.
DEN_ATOL = 1e-9


class EngineError(RuntimeError):
    pass


@dataclass
class AlgorithmConfig:
    variant: str = "sc_psro"
    lambda_d: float = 0.5          # probability of the diversity branch
    lambda_1: float = 1.0          # advantage weight inside the diversity score
    lr: float = 0.5                # base simplex step size
    im: float = 0.03               # relative improvement bound
    clip_fraction: float = 0.8     # fraction of the population retained (s)
    clipping_enabled: bool = True
    use_restricted_lookahead: bool = False
    keep_old_on_reject: bool = False
    fp_max_iters: int = 2000
    fp_tol: float = 1e-3
    fp_random_init: bool = False
    max_iterations: int = 100
    init_pop_size: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise GameError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.lambda_d <= 1.0:
            raise GameError("lambda_d must be in [0, 1]")
        if not 0.0 <= self.clip_fraction <= 1.0:
            raise GameError("clip_fraction must be in [0, 1]")
        if self.lr <= 0 or self.lambda_1 < 0:
            raise GameError("lr must be > 0 and lambda_1 >= 0")
        if not -1.0 <= self.im:
            # im < 0 tolerates bounded regressions, keeping a refinement run
            # alive; im <= -1 would accept arbitrary losses.
            raise GameError("im must be >= -1")
        if self.init_pop_size < 1 or self.max_iterations < 0:
            raise GameError("init_pop_size >= 1 and max_iterations >= 0 required")
        if self.fp_max_iters < 1 or self.fp_tol < 0:
            raise GameError("fp_max_iters >= 1 and fp_tol >= 0 required")


@dataclass
class Population:
    """Ordered strategy list plus per-member confirming caches.

    ``mu_index[i]`` is the opponent population member best-responding to
    member i; ties are resolved pessimistically (the tied response minimizing
    member i's own payoff, lowest index among those).  ``mu_value`` keeps the
    opponent's payoff at that response so cache invalidation can test whether
    a changed opponent member could enter the tie set.
    """

    members: list = field(default_factory=list)
    mu_index: list = field(default_factory=list)
    mu_value: list = field(default_factory=list)
    sc_advantage: list = field(default_factory=list)
    stale: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    def append(self, strategy: np.ndarray) -> None:
        self.members.append(np.asarray(strategy, dtype=float))
        self.mu_index.append(-1)
        self.mu_value.append(math.nan)
        self.sc_advantage.append(math.nan)
        self.stale.append(True)

    def replace(self, index: int, strategy: np.ndarray) -> None:
        self.members[index] = np.asarray(strategy, dtype=float)
        self.stale[index] = True

    def matrix(self) -> np.ndarray:
        return np.vstack(self.members)


@dataclass
class EmpiricalGame:
    m_row: np.ndarray
    m_col: np.ndarray
    row_index_map: np.ndarray  # empirical index -> population index
    col_index_map: np.ndarray


@dataclass
class IterationReport:
    iteration: int
    theta: MetaSolution
    exploitability: float
    reward_row: float
    reward_col: float
    pop_sizes: tuple
    clipped_sizes: tuple
    oracle_branch_taken: tuple
    wall_ms: float


@dataclass
class EngineState:
    game: BimatrixGame
    config: AlgorithmConfig
    mode: str
    pop_row: Population
    pop_col: Population
    rng: np.random.Generator
    iteration: int = 0

    def pop(self, player: int) -> Population:
        return self.pop_row if player == 0 else self.pop_col


# ---------------------------------------------------------------------------
# Construction

def init_state(game: BimatrixGame, config: AlgorithmConfig,
               mode: str = "self_play") -> EngineState:
    config.validate()
    if mode not in MODES:
        raise GameError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(config.seed)
    state = EngineState(game, config, mode, Population(), Population(), rng)
    for _ in range(config.init_pop_size):
        state.pop_row.append(rng.dirichlet(np.ones(game.n_rows)))
        state.pop_col.append(rng.dirichlet(np.ones(game.n_cols)))
    if mode == "stackelberg_player":
        # The column side is a pure best responder, not a learner: its
        # "population" is the set of pure replies met so far, seeded with the
        # reply to the leader's initial members.
        agg = np.mean(state.pop_row.members, axis=0)
        state.pop_col = Population()
        state.pop_col.append(br_oracle(game, 1, agg))
    refresh_confirming(state.pop_row, state.pop_col, game, 0)
    refresh_confirming(state.pop_col, state.pop_row, game, 1)
    return state


# ---------------------------------------------------------------------------
# Confirming caches

def refresh_confirming(pop: Population, opponent_pop: Population,
                       game: BimatrixGame, player: int) -> None:
    """Recompute the expected response and self-confirming advantage of every
    stale member.  Idempotent once all flags are clear."""
    if len(opponent_pop) == 0:
        raise EngineError("cannot confirm against an empty opponent population")
    if not any(pop.stale):
        return
    m_self = own_matrix(game, player)
    m_opp = own_matrix(game, 1 - player)
    O = opponent_pop.matrix()
    for i, flag in enumerate(pop.stale):
        if not flag:
            continue
        p = pop.members[i]
        opp_vals = O @ (m_opp @ p)       # opponent payoff per opponent member
        self_vals = O @ (m_self.T @ p)   # own payoff per opponent member
        best = opp_vals.max()
        tied = np.flatnonzero(opp_vals >= best - TIE_ATOL)
        j = int(tied[int(np.argmin(self_vals[tied]))])
        pop.mu_index[i] = j
        pop.mu_value[i] = float(best)
        pop.sc_advantage[i] = float(self_vals[j])
        pop.stale[i] = False


def _invalidate_for_change(own_pop: Population, opp_pop: Population,
                           game: BimatrixGame, player: int,
                           changed: list, old_reply_values: dict) -> None:
    """Mark opponent-side confirming caches stale after members of
    ``own_pop`` (owned by ``player``) at indices ``changed`` were replaced or
    appended.

    An opponent entry can only be affected if the changed member was its
    cached response, sat in (or near) its tie set before the change, or the
    new strategy reaches the tie set now.  ``old_reply_values`` maps a
    replaced index to the opponent-side payoff vector of the old strategy.
    """
    if len(opp_pop) == 0 or not changed:
        return
    # Cached mu_value of an opponent entry is the best payoff achievable by
    # members of own_pop responding to it, so reply values use player's matrix.
    m_player = own_matrix(game, player)
    O = opp_pop.matrix()
    n_opp = len(opp_pop)
    mu_vals = np.array([v if not math.isnan(v) else np.inf for v in opp_pop.mu_value])
    affected = np.zeros(n_opp, dtype=bool)
    for c in changed:
        new_vals = O @ (m_player.T @ own_pop.members[c])
        affected |= new_vals >= mu_vals - TIE_ATOL
        if c in old_reply_values:
            affected |= old_reply_values[c] >= mu_vals - TIE_ATOL
        affected |= np.array([mu == c for mu in opp_pop.mu_index])
    for s in np.flatnonzero(affected):
        opp_pop.stale[int(s)] = True


# ---------------------------------------------------------------------------
# Empirical game and meta-Nash

def _retained_indices(pop: Population, clip: bool, s: float) -> np.ndarray:
    n = len(pop)
    if not clip:
        return np.arange(n)
    if any(pop.stale):
        raise EngineError("stale confirming cache encountered during clipping")
    floor = 2 if n >= 2 else 1
    k = max(min(math.ceil(s * n), n), floor)
    order = sorted(range(n), key=lambda i: (-pop.sc_advantage[i], i))
    return np.asarray(sorted(order[:k]), dtype=int)


def build_empirical(game: BimatrixGame, pop_row: Population, pop_col: Population,
                    clip: bool = False, s: float = 1.0) -> EmpiricalGame:
    """Payoff matrices over the (optionally clipped) populations.

    Clipping keeps each population's top ceil(s*n) members by self-confirming
    advantage (ties by lower index, at least two members where possible) and
    never mutates the populations themselves.
    """
    if len(pop_row) == 0 or len(pop_col) == 0:
        raise EngineError("populations must be nonempty")
    ri = _retained_indices(pop_row, clip, s)
    ci = _retained_indices(pop_col, clip, s)
    R = pop_row.matrix()[ri]
    C = pop_col.matrix()[ci]
    return EmpiricalGame(R @ game.u_row @ C.T, R @ game.u_col @ C.T, ri, ci)


def meta_nash(empirical: EmpiricalGame, pop_row_size: int, pop_col_size: int,
              fp_max_iters: int, fp_tol: float, rng=None,
              random_init: bool = False) -> MetaSolution:
    """Meta-Nash of the empirical game by fictitious play, with the weights
    lifted back from clipped empirical indices to population indices."""
    sol = fictitious_play(empirical.m_row, empirical.m_col, fp_max_iters, fp_tol,
                          init="random" if random_init else "uniform", rng=rng)
    theta_row = np.zeros(pop_row_size)
    theta_row[empirical.row_index_map] = sol.theta_row
    theta_col = np.zeros(pop_col_size)
    theta_col[empirical.col_index_map] = sol.theta_col
    return MetaSolution(theta_row, theta_col, sol.residual, sol.iterations_used)


def aggregate(pop: Population, theta: np.ndarray) -> np.ndarray:
    """Game-level mixed strategy induced by meta-weights over the population."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != len(pop):
        raise GameError("meta-weight length does not match population size")
    return theta @ pop.matrix()


def br_oracle(game: BimatrixGame, player: int, opponent_aggregate) -> np.ndarray:
    """Exact pure best response to the opponent's aggregate, as a one-hot."""
    res = best_response(game, player, opponent_aggregate)
    out = np.zeros(game.dims(player))
    out[res.index] = 1.0
    return out


# ---------------------------------------------------------------------------
# New-strategy steps

def normalize_abs(v) -> np.ndarray:
    """Elementwise absolute value followed by L1 normalization; degenerate
    all-zero inputs map to the uniform distribution."""
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise GameError("normalize_abs requires finite input")
    a = np.abs(v)
    s = a.sum()
    if s < 1e-15:
        return np.full(v.shape, 1.0 / v.shape[0])
    return a / s


def _candidates(pi_t: np.ndarray, step: float) -> np.ndarray:
    """One candidate per signed pure direction: |pi_t +/- step * e_a|,
    normalized.  Negative directions shift mass away from a coordinate, which
    the absolute-value normalization keeps on the simplex; without them the
    hill climb can only concentrate mass, never refine a mixture."""
    n = pi_t.shape[0]
    V = np.empty((2 * n, n))
    V[:n] = np.abs(pi_t[None, :] + step * np.eye(n))
    V[n:] = np.abs(pi_t[None, :] - step * np.eye(n))
    sums = V.sum(axis=1, keepdims=True)
    np.maximum(sums, 1e-15, out=sums)
    return V / sums


def _ec_scores(cand_rows: np.ndarray, fixed_rows) -> np.ndarray:
    """Expected cardinality of the meta-matrix made of ``fixed_rows`` plus one
    candidate row, for every candidate.  Only the candidate row varies, so the
    fixed Gram block is computed once."""
    ncand = cand_rows.shape[0]
    scores = np.empty(ncand)
    if fixed_rows is None or fixed_rows.shape[0] == 0:
        for i in range(ncand):
            r = cand_rows[i]
            scores[i] = ec_of_gram(np.array([[r @ r]]))
        return scores
    G = fixed_rows @ fixed_rows.T
    cross = cand_rows @ fixed_rows.T
    k = G.shape[0]
    L = np.empty((k + 1, k + 1))
    L[:k, :k] = G
    for i in range(ncand):
        L[:k, k] = cross[i]
        L[k, :k] = cross[i]
        L[k, k] = cand_rows[i] @ cand_rows[i]
        scores[i] = ec_of_gram(L)
    return scores


def diversity_step(game: BimatrixGame, player: int, pi_t: np.ndarray,
                   pop_row: Population, pop_col: Population,
                   lr: float, lambda_1: float) -> np.ndarray:
    """Replace-then-score diversity update: candidates are pure-direction
    steps from the population's last member; each is scored by the expected
    cardinality of the population with its last member swapped for the
    candidate, plus ``lambda_1`` times the candidate's advantage."""
    own_pop = pop_row if player == 0 else pop_col
    opp_pop = pop_col if player == 0 else pop_row
    return _diversity_argmax(game, player, pi_t, own_pop.matrix()[:-1],
                             opp_pop.matrix(), lr, lambda_1)


def _diversity_argmax(game: BimatrixGame, player: int, pi_t: np.ndarray,
                      fixed_members: np.ndarray, opp_members: np.ndarray,
                      lr: float, lambda_1: float) -> np.ndarray:
    m_self = own_matrix(game, player)
    C = _candidates(pi_t, lr)
    cand_rows = C @ (m_self @ opp_members.T)
    fixed_rows = None
    if fixed_members is not None and fixed_members.shape[0] > 0:
        fixed_rows = fixed_members @ (m_self @ opp_members.T)
    scores = _ec_scores(cand_rows, fixed_rows)
    if lambda_1 > 0:
        scores = scores + lambda_1 * advantage_many(game, player, C)
    return C[int(np.argmax(scores))]


def _restricted_advantage_many(game: BimatrixGame, player: int,
                               C: np.ndarray, opp_members: np.ndarray) -> np.ndarray:
    """Self-confirming advantage of each candidate against an opponent
    population: payoff at the opponent's restricted best response, pessimistic
    over ties."""
    m_self = own_matrix(game, player)
    m_opp = own_matrix(game, 1 - player)
    W = C @ m_opp.T @ opp_members.T      # opponent payoff per opponent member
    S = C @ m_self @ opp_members.T       # own payoff per opponent member
    best = W.max(axis=1, keepdims=True)
    tied = W >= best - TIE_ATOL
    return np.where(tied, S, np.inf).min(axis=1)


def lookahead_step(game: BimatrixGame, player: int, pi_t: np.ndarray,
                   opponent_pop: Population, theta_self: np.ndarray,
                   lr_base: float, rng: np.random.Generator,
                   restricted: bool = False) -> np.ndarray:
    """Advantage hill-climb: sample a step size bounded by the max-norm of the
    player's own meta-weights, enumerate pure-direction candidates, and return
    the one with the highest (full or population-restricted) advantage."""
    bound = min(lr_base, float(np.abs(theta_self).max()))
    step = rng.uniform(0.0, bound)
    C = _candidates(pi_t, step)
    if restricted:
        scores = _restricted_advantage_many(game, player, C, opponent_pop.matrix())
    else:
        scores = advantage_many(game, player, C)
    return C[int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# Population update (the sc_psro rule)

def population_update(game: BimatrixGame, player: int, state: EngineState,
                      theta: MetaSolution, opp_members=None) -> str:
    """One update of ``player``'s population: pick the diversity or lookahead
    branch at random, replace the last member with the branch's argmax, and
    append a fresh random member when the improvement ratio against the
    opponent's aggregate stays below the bound.  Returns the branch taken."""
    cfg = state.config
    pop = state.pop(player)
    opp_pop = state.pop(1 - player)
    if opp_members is None:
        opp_members = list(opp_pop.members)
    theta_self = theta.theta_row if player == 0 else theta.theta_col
    theta_opp = theta.theta_col if player == 0 else theta.theta_row
    pi_t = pop.members[-1]
    last = len(pop) - 1

    rd = state.rng.uniform()
    if rd <= cfg.lambda_d:
        branch = "diversity"
        pi_star = _diversity_argmax(game, player, pi_t, pop.matrix()[:-1],
                                    np.vstack(opp_members), cfg.lr, cfg.lambda_1)
    else:
        branch = "lookahead"
        opp_snapshot = Population()
        for mbr in opp_members:
            opp_snapshot.append(mbr)
        pi_star = lookahead_step(game, player, pi_t, opp_snapshot, theta_self,
                                 cfg.lr, state.rng,
                                 restricted=cfg.use_restricted_lookahead)

    m_self = own_matrix(game, player)
    agg_opp = np.asarray(theta_opp) @ np.vstack(opp_members)
    num = float(pi_star @ m_self @ agg_opp)
    den = float(pi_t @ m_self @ agg_opp)
    if den < DEN_ATOL:
        # Ratio test is ill-posed at zero or negative baselines; fall back to
        # an additive test scaled by the payoff range.
        scale = float(np.abs(m_self).max()) or 1.0
        improved = (num - den) >= cfg.im * scale
    else:
        improved = (num / den - 1.0) >= cfg.im

    old_vals = {last: opp_pop.matrix() @ (m_self.T @ pi_t)} if len(opp_pop) else {}
    changed = []
    if improved:
        pop.replace(last, pi_star)
        changed.append(last)
    else:
        if not cfg.keep_old_on_reject:
            pop.replace(last, pi_star)
            changed.append(last)
        pop.append(state.rng.dirichlet(np.ones(game.dims(player))))
        changed.append(len(pop) - 1)
    _invalidate_for_change(pop, opp_pop, game, player, changed, old_vals)
    return branch


# ---------------------------------------------------------------------------
# Iteration and run loop

def _append_member(game: BimatrixGame, player: int, state: EngineState,
                   strategy: np.ndarray, dedupe: bool = False) -> None:
    pop = state.pop(player)
    if dedupe and any(np.array_equal(m, strategy) for m in pop.members):
        return
    pop.append(strategy)
    _invalidate_for_change(pop, state.pop(1 - player), game, player,
                           [len(pop) - 1], {})


def run_iteration(state: EngineState) -> IterationReport:
    """One full engine iteration: refresh confirming caches, build the
    (clipped) empirical game, solve the meta-Nash, apply each learner's
    new-strategy step, and measure full-game metrics at the aggregates."""
    t0 = time.perf_counter()
    game, cfg, mode = state.game, state.config, state.mode
    refresh_confirming(state.pop_row, state.pop_col, game, 0)
    refresh_confirming(state.pop_col, state.pop_row, game, 1)

    clip = cfg.clipping_enabled and cfg.variant == "sc_psro"
    emp = build_empirical(game, state.pop_row, state.pop_col, clip, cfg.clip_fraction)
    theta = meta_nash(emp, len(state.pop_row), len(state.pop_col),
                      cfg.fp_max_iters, cfg.fp_tol, rng=state.rng,
                      random_init=cfg.fp_random_init)
    agg_row = aggregate(state.pop_row, theta.theta_row)
    agg_col = aggregate(state.pop_col, theta.theta_col)

    snapshot = {0: list(state.pop_row.members), 1: list(state.pop_col.members)}
    learners = (0,) if mode == "stackelberg_player" else (0, 1)
    branches = ["best_response", "best_response"]
    for player in learners:
        opp_members = snapshot[1 - player]
        if cfg.variant == "vanilla_psro":
            agg_opp = agg_col if player == 0 else agg_row
            _append_member(game, player, state, br_oracle(game, player, agg_opp))
        elif cfg.variant == "diversity_psro":
            pop = state.pop(player)
            cand = _diversity_argmax(game, player, pop.members[-1], pop.matrix(),
                                     np.vstack(opp_members), cfg.lr, cfg.lambda_1)
            branches[player] = "diversity"
            _append_member(game, player, state, cand)
        else:
            branches[player] = population_update(game, player, state, theta,
                                                 opp_members)

    if mode == "stackelberg_player":
        # The follower is an exact best responder; remember each pure reply
        # it has used so the meta-game can mix over them.
        follower_play = br_oracle(game, 1, agg_row)
        _append_member(game, 1, state, follower_play, dedupe=True)
        expl = exploitability(game, agg_row, follower_play)
        reward_row = advantage(game, 0, agg_row)
        reward_col = payoff(game, agg_row, follower_play)[1]
    else:
        expl = exploitability(game, agg_row, agg_col)
        reward_row, reward_col = payoff(game, agg_row, agg_col)

    report = IterationReport(
        iteration=state.iteration,
        theta=theta,
        exploitability=expl,
        reward_row=reward_row,
        reward_col=reward_col,
        pop_sizes=(len(state.pop_row), len(state.pop_col)),
        clipped_sizes=(len(emp.row_index_map), len(emp.col_index_map)),
        oracle_branch_taken=tuple(branches),
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )
    state.iteration += 1
    return report


def run(game: BimatrixGame, config: AlgorithmConfig,
        mode: str = "self_play") -> list:
    """Execute ``config.max_iterations`` iterations and return the full
    trajectory of per-iteration reports.  Deterministic in the config seed."""
    state = init_state(game, config, mode)
    return [run_iteration(state) for _ in range(config.max_iterations)]


# ---------------------------------------------------------------------------
# Checkpointing

def state_to_dict(state: EngineState) -> dict:
    def pop_doc(pop: Population) -> dict:
        return {
            "members": [m.tolist() for m in pop.members],
            "mu_index": list(pop.mu_index),
            "mu_value": list(pop.mu_value),
            "sc_advantage": list(pop.sc_advantage),
            "stale": list(pop.stale),
        }

    return {
        "mode": state.mode,
        "iteration": state.iteration,
        "config": state.config.__dict__.copy(),
        "pop_row": pop_doc(state.pop_row),
        "pop_col": pop_doc(state.pop_col),
        "rng_state": state.rng.bit_generator.state,
    }


def state_from_dict(game: BimatrixGame, doc: dict) -> EngineState:
    def pop_load(d: dict) -> Population:
        pop = Population()
        pop.members = [np.asarray(m, dtype=float) for m in d["members"]]
        pop.mu_index = list(d["mu_index"])
        pop.mu_value = list(d["mu_value"])
        pop.sc_advantage = list(d["sc_advantage"])
        pop.stale = list(d["stale"])
        return pop

    config = AlgorithmConfig(**doc["config"])
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    return EngineState(game, config, doc["mode"], pop_load(doc["pop_row"]),
                       pop_load(doc["pop_col"]), rng, doc["iteration"])
