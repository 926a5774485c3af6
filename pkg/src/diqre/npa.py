"""Moment-matrix relaxations of the two-party quantum set.

Operators are projectors ``A_{a|x}`` and ``B_{b|y}`` for every outcome except
the last one of each input.  A symbol is ``(party, input, outcome)`` with
party 0 for Alice and 1 for Bob, and a word is a tuple of symbols.  Words are
kept in canonical form: Alice's symbols first (the parties commute),
idempotency applied, and any word containing two orthogonal projectors next to
each other is the zero word (``None``).

Moment matrices are taken real symmetric, so a word and its adjoint share a
moment variable.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

Symbol = tuple[int, int, int]
Word = tuple[Symbol, ...]


def _reduce_party(word: list[Symbol]) -> list[Symbol] | None:
    out: list[Symbol] = []
    for s in word:
        if out and out[-1] == s:
            continue
        if out and out[-1][1] == s[1]:
            return None
        out.append(s)
    return out


def reduce_word(word: Iterable[Symbol]) -> Word | None:
    """Canonical form of a product of projectors, or ``None`` if it vanishes."""
    word = list(word)
    alice = _reduce_party([s for s in word if s[0] == 0])
    bob = _reduce_party([s for s in word if s[0] == 1])
    if alice is None or bob is None:
        return None
    return tuple(alice + bob)


def adjoint(word: Word) -> Word:
    alice = [s for s in word if s[0] == 0]
    bob = [s for s in word if s[0] == 1]
    return tuple(alice[::-1] + bob[::-1])


def moment_key(word: Word) -> Word:
    """Representative shared by a word and its adjoint."""
    return min(word, adjoint(word))


def generators(x_size: int, y_size: int, a_size: int, b_size: int) -> list[Symbol]:
    gens = [(0, x, a) for x in range(x_size) for a in range(a_size - 1)]
    gens += [(1, y, b) for y in range(y_size) for b in range(b_size - 1)]
    return gens


def parse_level(level) -> tuple[int, tuple[str, ...]]:
    """Split a level such as ``2`` or ``"1+AB"`` into base and extra patterns."""
    if isinstance(level, (int, np.integer)):
        base, extras = int(level), ()
    else:
        parts = str(level).replace(" ", "").split("+")
        base, extras = int(parts[0]), tuple(p.upper() for p in parts[1:])
        if any(not e or set(e) - {"A", "B"} for e in extras):
            raise ValueError(f"bad level {level!r}")
    if base < 1:
        raise ValueError("level must be at least 1")
    return base, extras


def enumerate_monomials(gens: list[Symbol], level) -> list[Word]:
    base, extras = parse_level(level)
    found: set[Word] = {()}
    for length in range(1, base + 1):
        for prod in itertools.product(gens, repeat=length):
            w = reduce_word(prod)
            if w is not None:
                found.add(w)
    for pattern in extras:
        pools = [[g for g in gens if g[0] == (0 if c == "A" else 1)] for c in pattern]
        for prod in itertools.product(*pools):
            w = reduce_word(prod)
            if w is not None:
                found.add(w)
    return sorted(found, key=lambda w: (len(w), w))


@dataclass(frozen=True, eq=False)
class Relaxation:
    """Index basis and moment classes of a moment matrix.

    Attributes
    ----------
    cell_class : ndarray of int, shape (d, d)
        Moment-variable index of each cell, ``-1`` for cells that vanish.
    classes : list of Word
        Representative word of each moment variable; index 0 is the identity.
    class_cells : list of list of (int, int)
        Upper-triangular cells of each class in row-major order.
    """

    sizes: tuple[int, int, int, int]
    level: object
    monomials: tuple[Word, ...]
    cell_class: np.ndarray
    classes: tuple[Word, ...]
    class_cells: tuple[tuple[tuple[int, int], ...], ...]
    zero_cells: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return len(self.monomials)

    @functools.cached_property
    def class_index(self) -> dict[Word, int]:
        return {w: i for i, w in enumerate(self.classes)}

    def index_of(self, word: Iterable[Symbol]) -> int:
        """Moment-variable index of a (not necessarily reduced) word; -1 if zero."""
        w = reduce_word(word)
        if w is None:
            return -1
        try:
            return self.class_index[moment_key(w)]
        except KeyError:
            raise KeyError(f"word {w} is not a moment of this relaxation") from None

    def representative_cell(self, k: int) -> tuple[int, int]:
        return self.class_cells[k][0]

    def probability_expression(self, a: int, b: int, x: int, y: int) -> dict[int, float]:
        """``p(a, b|x, y)`` as a linear combination of moment variables.

        The last outcome of each input is eliminated through
        ``A_{last|x} = 1 - sum_a A_{a|x}`` (and likewise for Bob).
        """
        _, _, A, B = self.sizes

        def expand(party, inp, out, last):
            if out < last:
                return [(1.0, ((party, inp, out),))]
            return [(1.0, ())] + [(-1.0, ((party, inp, o),)) for o in range(last)]

        expr: dict[int, float] = {}
        for ca, wa in expand(0, x, a, A - 1):
            for cb, wb in expand(1, y, b, B - 1):
                k = self.index_of(wa + wb)
                if k >= 0:
                    expr[k] = expr.get(k, 0.0) + ca * cb
        return {k: c for k, c in expr.items() if c != 0.0}

    def dump(self) -> str:
        """Text table of monomials and cell classes, for diffing."""
        def fmt(w):
            return "1" if not w else " ".join(f"{'AB'[p]}{o}|{i}" for p, i, o in w)

        lines = [f"level {self.level} size {self.size} classes {len(self.classes)}"]
        lines += [f"m{i}: {fmt(w)}" for i, w in enumerate(self.monomials)]
        lines += [f"c{k}: {fmt(w)} cells {list(c)}" for k, (w, c) in enumerate(zip(self.classes, self.class_cells))]
        lines.append(f"zero: {list(self.zero_cells)}")
        return "\n".join(lines)


@functools.lru_cache(maxsize=64)
def _build(sizes: tuple[int, int, int, int], level) -> Relaxation:
    gens = generators(*sizes)
    monos = enumerate_monomials(gens, level)
    d = len(monos)
    cell_class = np.full((d, d), -1, dtype=np.int64)
    index: dict[Word, int] = {(): 0}
    classes: list[Word] = [()]
    cells: list[list[tuple[int, int]]] = [[]]
    zeros = []
    for i in range(d):
        left = adjoint(monos[i])
        for j in range(i, d):
            w = reduce_word(left + monos[j])
            if w is None:
                zeros.append((i, j))
                continue
            key = moment_key(w)
            k = index.get(key)
            if k is None:
                k = index[key] = len(classes)
                classes.append(key)
                cells.append([])
            cells[k].append((i, j))
            cell_class[i, j] = cell_class[j, i] = k
    cell_class.setflags(write=False)
    return Relaxation(
        sizes=sizes,
        level=level,
        monomials=tuple(monos),
        cell_class=cell_class,
        classes=tuple(classes),
        class_cells=tuple(tuple(c) for c in cells),
        zero_cells=tuple(zeros),
    )


def build_relaxation(x_size: int, y_size: int, a_size: int, b_size: int, level=2) -> Relaxation:
    """Moment-matrix relaxation indexed by all reduced words up to ``level``."""
    if min(x_size, y_size) < 1 or min(a_size, b_size) < 2:
        raise ValueError("need at least one input and two outcomes per party")
    parse_level(level)
    return _build((x_size, y_size, a_size, b_size), level)


def behaviour_cells(r: Relaxation) -> dict[tuple, tuple[int, int]]:
    """Representative cells of the one-outcome-dropped behaviour parametrization.

    Keys are ``("AB", a, b, x, y)``, ``("A", a, x)``, ``("B", b, y)`` and
    ``("1",)`` for the normalization moment.
    """
    X, Y, A, B = r.sizes
    out: dict[tuple, tuple[int, int]] = {("1",): (0, 0)}
    for x, a in itertools.product(range(X), range(A - 1)):
        out[("A", a, x)] = r.representative_cell(r.index_of(((0, x, a),)))
    for y, b in itertools.product(range(Y), range(B - 1)):
        out[("B", b, y)] = r.representative_cell(r.index_of(((1, y, b),)))
    for x, y, a, b in itertools.product(range(X), range(Y), range(A - 1), range(B - 1)):
        out[("AB", a, b, x, y)] = r.representative_cell(r.index_of(((0, x, a), (1, y, b))))
    return out


def moment_matrix(r: Relaxation, values: np.ndarray) -> np.ndarray:
    """Fill the moment matrix from one value per moment variable."""
    values = np.asarray(values, dtype=float)
    M = np.where(r.cell_class >= 0, values[np.maximum(r.cell_class, 0)], 0.0)
    return M
