"""Two-party nonlocal games and score (frequency) distributions.

A game is stored as dense tables so that it serializes deterministically:
``mu[x, y]`` is the question distribution and ``rule[a, b, x, y]`` the score
index awarded for answers ``(a, b)`` on questions ``(x, y)``.  Score vectors
are always ordered as ``score_names``; the abort symbol, when present, is
appended as the final entry.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .behaviour import Behaviour

PERP = "perp"


@dataclass(frozen=True, eq=False)
class Game:
    """Nonlocal game with question distribution and deterministic scoring.

    Parameters
    ----------
    mu : ndarray of shape (x_size, y_size)
        Question distribution.
    rule : ndarray of int, shape (a_size, b_size, x_size, y_size)
        Score index for each answer/question tuple.  Entries where
        ``mu[x, y] == 0`` are never used.
    score_names : tuple of str
        Ordered, distinct score labels.
    name : str
        Free-form identifier used in reports.
    """

    mu: np.ndarray
    rule: np.ndarray
    score_names: tuple[str, ...]
    name: str = "custom"

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        rule = np.array(self.rule, dtype=np.int64)
        if mu.ndim != 2 or rule.ndim != 4 or rule.shape[2:] != mu.shape:
            raise ValueError("mu must be (X, Y) and rule (A, B, X, Y)")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu must be a probability table")
        names = tuple(str(s) for s in self.score_names)
        if len(set(names)) != len(names) or PERP in names:
            raise ValueError("score names must be distinct and not 'perp'")
        support = mu > 0
        used = rule[:, :, support]
        if used.size and (used.min() < 0 or used.max() >= len(names)):
            raise ValueError("score rule refers to an unknown score")
        mu.setflags(write=False)
        rule.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "rule", rule)
        object.__setattr__(self, "score_names", names)

    @property
    def x_size(self) -> int:
        return self.mu.shape[0]

    @property
    def y_size(self) -> int:
        return self.mu.shape[1]

    @property
    def a_size(self) -> int:
        return self.rule.shape[0]

    @property
    def b_size(self) -> int:
        return self.rule.shape[1]

    @property
    def n_scores(self) -> int:
        return len(self.score_names)

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return self.x_size, self.y_size, self.a_size, self.b_size

    def score_of(self, a: int, b: int, x: int, y: int) -> int:
        return int(self.rule[a, b, x, y])

    def score_matrix(self) -> np.ndarray:
        """Linear map W with ``W @ p.ravel() = omega`` for behaviour tables p.

        Shape ``(n_scores, A*B*X*Y)``; column order matches a C-ordered
        ``(a, b, x, y)`` array.
        """
        W = np.zeros((self.n_scores,) + self.rule.shape)
        for a, b, x, y in np.ndindex(self.rule.shape):
            if self.mu[x, y] > 0:
                W[self.rule[a, b, x, y], a, b, x, y] += self.mu[x, y]
        return W.reshape(self.n_scores, -1)

    def to_dict(self) -> dict:
        entries = [
            [a, b, x, y, int(self.rule[a, b, x, y])]
            for a, b, x, y in np.ndindex(self.rule.shape)
            if self.mu[x, y] > 0
        ]
        return {
            "name": self.name,
            "x_size": self.x_size,
            "y_size": self.y_size,
            "a_size": self.a_size,
            "b_size": self.b_size,
            "mu": self.mu.tolist(),
            "scores": list(self.score_names),
            "rule": entries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Game":
        shape = (d["a_size"], d["b_size"], d["x_size"], d["y_size"])
        mu = np.array(d["mu"], dtype=float).reshape(shape[2:])
        rule = np.zeros(shape, dtype=np.int64)
        seen = np.zeros(shape, dtype=bool)
        for a, b, x, y, s in d["rule"]:
            rule[a, b, x, y] = s
            seen[a, b, x, y] = True
        if not np.all(seen[:, :, mu > 0]):
            raise ValueError("score rule must cover every question pair in supp(mu)")
        return cls(mu, rule, tuple(d["scores"]), name=d.get("name", "custom"))


@dataclass(frozen=True)
class ScoreDistribution:
    """Distribution over the scores of a game, optionally with the abort symbol."""

    values: np.ndarray
    includes_perp: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or np.any(v < 0):
            raise ValueError("score distribution entries must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.values.sum() - 1.0) <= tol

    def with_perp(self, gamma: float) -> "ScoreDistribution":
        """Protocol-respecting form ``(gamma * omega, 1 - gamma)``."""
        if self.includes_perp:
            raise ValueError("already includes the abort symbol")
        return ScoreDistribution(np.append(gamma * self.values, 1.0 - gamma), True)


def as_vector(omega) -> np.ndarray:
    if isinstance(omega, ScoreDistribution):
        return omega.values
    return np.asarray(omega, dtype=float)


def expected_score_distribution(game: Game, p: "Behaviour") -> ScoreDistribution:
    """Score distribution induced by playing ``game`` with behaviour ``p``."""
    table = p.table if hasattr(p, "table") else np.asarray(p)
    if table.shape != game.rule.shape:
        raise ValueError(f"behaviour shape {table.shape} does not match game {game.rule.shape}")
    omega = game.score_matrix() @ table.ravel()
    return ScoreDistribution(np.clip(omega, 0.0, None))


def frequency_distribution(score_counts: Sequence[int], n: int) -> ScoreDistribution:
    """Empirical frequencies of a transcript; the last count is the abort symbol."""
    counts = np.asarray(score_counts)
    if np.any(counts < 0) or int(counts.sum()) != int(n) or n <= 0:
        raise ValueError(f"counts sum to {int(counts.sum())}, expected n={n}")
    return ScoreDistribution(counts / float(n), includes_perp=True)


def make_chsh_extended() -> Game:
    """CHSH played on inputs {0,1}x{0,1} plus an alignment test on (0, 2)."""
    mu = np.zeros((2, 3))
    mu[:2, :2] = 1 / 8
    mu[0, 2] = 1 / 2
    rule = np.full((2, 2, 2, 3), 2, dtype=np.int64)
    for a, b, x, y in itertools.product(range(2), range(2), range(2), range(3)):
        if y < 2 and (x * y) == (a ^ b):
            rule[a, b, x, y] = 0
        elif (x, y) == (0, 2) and a == b:
            rule[a, b, x, y] = 1
    return Game(mu, rule, ("c_chsh", "c_align", "c_0"), name="chsh")


def eb_reduced_tuples(x_size: int, y_size: int, a_size: int = 2, b_size: int = 2):
    """Tuples kept by the empirical-behaviour game, in score order.

    Joint terms ``(a, b, x, y)`` with ``a < A-1`` and ``b < B-1`` for every
    question pair, then Alice's marginal row read off at ``y = 0`` and Bob's
    at ``x = 0`` through the dropped outcome of the other party.
    """
    la, lb = a_size - 1, b_size - 1
    tuples = [
        (a, b, x, y)
        for x in range(x_size)
        for y in range(y_size)
        for a in range(la)
        for b in range(lb)
    ]
    tuples += [(a, lb, x, 0) for x in range(x_size) for a in range(la)]
    tuples += [(la, b, 0, y) for y in range(y_size) for b in range(lb)]
    return tuples


def make_empirical_behaviour_game(x_size: int, y_size: int, mu=None, a_size: int = 2, b_size: int = 2) -> Game:
    """Game whose scores are the free parameters of the behaviour plus a catch-all."""
    mu = np.full((x_size, y_size), 1.0 / (x_size * y_size)) if mu is None else np.asarray(mu, float)
    if mu.shape != (x_size, y_size) or np.any(mu <= 0):
        raise ValueError("empirical behaviour game needs mu with full support")
    tuples = eb_reduced_tuples(x_size, y_size, a_size, b_size)
    catch_all = len(tuples)
    rule = np.full((a_size, b_size, x_size, y_size), catch_all, dtype=np.int64)
    for s, t in enumerate(tuples):
        rule[t] = s
    names = tuple(f"p{a}{b}|{x}{y}" for a, b, x, y in tuples) + ("rest",)
    return Game(mu, rule, names, name=f"eb{x_size}{y_size}")


def behaviour_from_eb_scores(game: Game, omega) -> np.ndarray:
    """Rebuild the full no-signalling behaviour table from empirical-behaviour scores."""
    omega = as_vector(omega)
    X, Y, A, B = game.sizes
    la, lb = A - 1, B - 1
    tuples = eb_reduced_tuples(X, Y, A, B)
    prob = {t: omega[s] / game.mu[t[2], t[3]] for s, t in enumerate(tuples)}
    pa = np.zeros((la, X))
    pb = np.zeros((lb, Y))
    for x in range(X):
        for a in range(la):
            pa[a, x] = prob[(a, lb, x, 0)] + sum(prob[(a, b, x, 0)] for b in range(lb))
    for y in range(Y):
        for b in range(lb):
            pb[b, y] = prob[(la, b, 0, y)] + sum(prob[(a, b, 0, y)] for a in range(la))
    p = np.zeros((A, B, X, Y))
    for x, y in itertools.product(range(X), range(Y)):
        for a, b in itertools.product(range(la), range(lb)):
            p[a, b, x, y] = prob[(a, b, x, y)]
        for a in range(la):
            p[a, lb, x, y] = pa[a, x] - p[a, :lb, x, y].sum()
        for b in range(lb):
            p[la, b, x, y] = pb[b, y] - p[:la, b, x, y].sum()
        p[la, lb, x, y] = 1.0 - p[:, :, x, y].sum()
    return p


def make_correlator_game(x_size: int, y_size: int) -> Game:
    """Game rewarding agreement on each question pair with its own score."""
    mu = np.full((x_size, y_size), 1.0 / (x_size * y_size))
    norm = x_size * y_size
    rule = np.full((2, 2, x_size, y_size), norm, dtype=np.int64)
    for x, y in itertools.product(range(x_size), range(y_size)):
        for a in range(2):
            rule[a, a, x, y] = x * y_size + y
    names = tuple(f"c{x}{y}" for x in range(x_size) for y in range(y_size)) + ("c_norm",)
    return Game(mu, rule, names, name=f"ab{x_size}{y_size}")


def builtin_game(name: str) -> Game:
    """Look up a game by its config name (``chsh``, ``ebXY``, ``abXY``)."""
    if name == "chsh":
        return make_chsh_extended()
    if len(name) == 4 and name[:2] in ("eb", "ab") and name[2:].isdigit():
        x, y = int(name[2]), int(name[3])
        return make_empirical_behaviour_game(x, y) if name[:2] == "eb" else make_correlator_game(x, y)
    raise ValueError(f"unknown builtin game {name!r}")


def deterministic_score_vectors(game: Game) -> np.ndarray:
    """Score vectors of every local deterministic strategy (rows)."""
    X, Y, A, B = game.sizes
    out = []
    for fa in itertools.product(range(A), repeat=X):
        for fb in itertools.product(range(B), repeat=Y):
            omega = np.zeros(game.n_scores)
            for x, y in itertools.product(range(X), range(Y)):
                if game.mu[x, y] > 0:
                    omega[game.rule[fa[x], fb[y], x, y]] += game.mu[x, y]
            out.append(omega)
    return np.unique(np.array(out), axis=0)
