"""Bimatrix games: types, benchmark generators, serialization, diagnostics.

Games are immutable after construction and safe to share between workers.
All generators are pure functions of their parameters: the same (dim, noise,
seed) always produces bit-identical matrices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Tolerance used when auto-detecting the symmetric zero-sum structure and
# when validating simplex vectors after normalization.
STRUCT_ATOL = 1e-12

BUILTIN_NAMES = ("stackelberg_table1", "stag_hunt_table2", "rps", "matching_pennies")


class GameError(ValueError):
    """Malformed game data: shape mismatch, non-finite entries, bad schema."""


class StrategyError(ValueError):
    """A vector that is not a valid mixed strategy for the given game."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BimatrixGame:
    """Two-player normal-form game with one payoff matrix per player.

    u_row[i, j] is the row player's payoff when row plays pure strategy i and
    column plays pure strategy j; u_col[i, j] is the column player's payoff at
    the same profile.
    """

    u_row: np.ndarray
    u_col: np.ndarray
    name: str = "game"
    symmetric_zero_sum: bool = False

    @property
    def n_rows(self) -> int:
        return self.u_row.shape[0]

    @property
    def n_cols(self) -> int:
        return self.u_row.shape[1]

    def dims(self, player: int) -> int:
        return self.n_rows if player == 0 else self.n_cols


def new_game(u_row, u_col, name: str = "game") -> BimatrixGame:
    """Validate payoff matrices and build a game.

    The symmetric zero-sum flag is set automatically when u_col == -u_row and
    u_row is antisymmetric (both within 1e-12).
    """
    u_row = np.asarray(u_row, dtype=float)
    u_col = np.asarray(u_col, dtype=float)
    if u_row.ndim != 2 or u_row.size == 0:
        raise GameError("u_row must be a nonempty 2-D matrix")
    if u_row.shape != u_col.shape:
        raise GameError(f"payoff shape mismatch: {u_row.shape} vs {u_col.shape}")
    if not (np.isfinite(u_row).all() and np.isfinite(u_col).all()):
        raise GameError("payoff matrices must be finite")
    flag = bool(
        u_row.shape[0] == u_row.shape[1]
        and np.abs(u_col + u_row).max() <= STRUCT_ATOL
        and np.abs(u_row + u_row.T).max() <= STRUCT_ATOL
    )
    return BimatrixGame(_freeze(u_row), _freeze(u_col), name, flag)


# ---------------------------------------------------------------------------
# Mixed strategies (plain 1-D probability vectors)

def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = v.sum()
    if not np.isfinite(s) or s <= 0 or (v < 0).any():
        raise StrategyError("cannot normalize to a probability vector")
    return v / s


def validate_strategy(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] != n:
        raise StrategyError(f"strategy length {p.shape} does not match {n} actions")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise StrategyError("strategy is not on the probability simplex")
    return p


def pure(n: int, index: int) -> np.ndarray:
    p = np.zeros(n)
    p[index] = 1.0
    return p


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def payoff(game: BimatrixGame, pi_row, pi_col) -> tuple[float, float]:
    """Expected utilities (row_value, col_value) of a mixed-strategy profile."""
    p = validate_strategy(pi_row, game.n_rows)
    q = validate_strategy(pi_col, game.n_cols)
    return float(p @ game.u_row @ q), float(p @ game.u_col @ q)


# ---------------------------------------------------------------------------
# Generators

def _check_dim(dim: int) -> None:
    if dim < 2:
        raise GameError("dim must be >= 2")


def gen_symmetric_zero_sum(dim: int, seed: int) -> BimatrixGame:
    """Random symmetric zero-sum game: U = A - A^T, A with iid N(0,1) entries."""
    _check_dim(dim)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim))
    u = a - a.T
    return BimatrixGame(_freeze(u), _freeze(-u), f"symzs_d{dim}_s{seed}", True)


def gen_transitive(dim: int, seed: int) -> BimatrixGame:
    """Purely transitive game: sorted strengths f, U[i,j] = tanh(f_i - f_j).

    tanh keeps payoffs bounded and odd in the strength difference, so the
    beat relation follows the strength order exactly.  The explicit
    antisymmetrization only cancels rounding noise.
    """
    _check_dim(dim)
    rng = np.random.default_rng(seed)
    f = np.sort(rng.standard_normal(dim))
    b = np.tanh(f[:, None] - f[None, :])
    u = (b - b.T) / 2.0
    return BimatrixGame(_freeze(u), _freeze(-u), f"transitive_d{dim}_s{seed}", True)


def gen_elo(dim: int, noise: float, seed: int) -> BimatrixGame:
    """Elo-style game: win-probability payoffs plus Gaussian noise.

    Base payoff 2*sigmoid(r_i - r_j) - 1 from iid N(0,1) ratings; the noisy
    matrix is antisymmetrized so the zero-sum contract survives the noise.
    """
    _check_dim(dim)
    if noise < 0:
        raise GameError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(dim)
    d = r[:, None] - r[None, :]
    b = 2.0 / (1.0 + np.exp(-d)) - 1.0
    if noise > 0:
        b = b + rng.normal(0.0, noise, size=(dim, dim))
    u = (b - b.T) / 2.0
    return BimatrixGame(_freeze(u), _freeze(-u), f"elo_d{dim}_n{noise:g}_s{seed}", True)


def gen_general_sum(dim: int, seed: int) -> BimatrixGame:
    """Random general-sum game, both matrices iid uniform on [0, 10]."""
    _check_dim(dim)
    rng = np.random.default_rng(seed)
    u_row = rng.uniform(0.0, 10.0, size=(dim, dim))
    u_col = rng.uniform(0.0, 10.0, size=(dim, dim))
    return new_game(u_row, u_col, f"gensum_d{dim}_s{seed}")


def builtin(name: str) -> BimatrixGame:
    """Small named games used throughout the test and experiment suites."""
    if name == "stackelberg_table1":
        return new_game([[1.0, 3.0], [2.0, 4.0]], [[0.0, 2.0], [1.0, 0.0]], name)
    if name == "stag_hunt_table2":
        m = [[30.0, -10.0], [-10.0, 20.0]]
        return new_game(m, m, name)
    if name == "rps":
        u = [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]]
        return new_game(u, -np.asarray(u), name)
    if name == "matching_pennies":
        u = [[1.0, -1.0], [-1.0, 1.0]]
        return new_game(u, -np.asarray(u), name)
    raise GameError(f"unknown builtin game {name!r}")


@dataclass(frozen=True)
class GameGenSpec:
    """Parametrization of a generated (or builtin / file-loaded) game."""

    kind: str  # symmetric_zero_sum | transitive | elo | general_sum_random | builtin
    dim: int = 0
    noise: float = 0.0
    seed: int = 0
    builtin_name: str = ""

    def build(self) -> BimatrixGame:
        if self.kind == "symmetric_zero_sum":
            return gen_symmetric_zero_sum(self.dim, self.seed)
        if self.kind == "transitive":
            return gen_transitive(self.dim, self.seed)
        if self.kind == "elo":
            return gen_elo(self.dim, self.noise, self.seed)
        if self.kind == "general_sum_random":
            return gen_general_sum(self.dim, self.seed)
        if self.kind == "builtin":
            return builtin(self.builtin_name)
        raise GameError(f"unknown game kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Serialization (JSON, row-major nested arrays, full-precision floats)

def save_game(game: BimatrixGame, path) -> None:
    doc = {
        "name": game.name,
        "n_rows": game.n_rows,
        "n_cols": game.n_cols,
        "U_row": game.u_row.tolist(),
        "U_col": game.u_col.tolist(),
        "symmetric_zero_sum": game.symmetric_zero_sum,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_game(path) -> BimatrixGame:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"malformed game file {path}: {exc}") from exc
    for key in ("name", "n_rows", "n_cols", "U_row", "U_col"):
        if key not in doc:
            raise GameError(f"game file {path} missing field {key!r}")
    game = new_game(doc["U_row"], doc["U_col"], str(doc["name"]))
    if game.n_rows != doc["n_rows"] or game.n_cols != doc["n_cols"]:
        raise GameError(f"game file {path}: declared shape does not match matrices")
    return game


# ---------------------------------------------------------------------------
# Structural diagnostics for symmetric zero-sum games

def _require_zero_sum(game: BimatrixGame) -> None:
    if not game.symmetric_zero_sum:
        raise GameError(f"{game.name} is not flagged symmetric zero-sum")


def transitivity_violation_rate(game: BimatrixGame, samples: int, seed: int) -> float:
    """Fraction of sampled pure triples (i,j,k) where i beats-or-ties j and
    j beats-or-ties k but i loses to k.  Triples are drawn uniformly from the
    full index cube; payoff exactly 0 counts as "beats-or-ties"."""
    _require_zero_sum(game)
    if samples < 1:
        raise GameError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = game.n_rows
    i, j, k = rng.integers(0, n, size=(3, samples))
    u = game.u_row
    bad = (u[i, j] >= 0) & (u[j, k] >= 0) & (u[i, k] < 0)
    return float(bad.mean())


def cyclic_balance(game: BimatrixGame, row_index: int) -> float:
    """Mean payoff of a pure strategy against the uniform pure opponent; zero
    means the strategy sits on a balanced cycle under the uniform measure."""
    _require_zero_sum(game)
    if not 0 <= row_index < game.n_rows:
        raise GameError(f"row index {row_index} out of range")
    return float(game.u_row[row_index].mean())
