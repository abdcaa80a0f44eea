"""Symbolic dynamics substrate.

Full shifts and aperiodic subshifts of finite type over the symbols
``0..alphabet_size-1``, finite words, eventually periodic points and the
``theta``-metric.  Points are always eventually periodic, which gives every
point an exact finite encoding ``preperiod . period^inf``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

Word = Tuple[int, ...]


@dataclass(frozen=True)
class ShiftSpace:
    """Sequence space over ``alphabet_size`` symbols.

    ``transition`` is an optional 0/1 matrix; ``transition[a][b] == 1`` means
    the symbol ``b`` may follow ``a``.  ``None`` is the full shift.
    """

    alphabet_size: int
    theta: float = 0.5
    transition: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self):
        if int(self.alphabet_size) != self.alphabet_size or self.alphabet_size < 2:
            raise ValueError(f"alphabet_size must be an integer >= 2, got {self.alphabet_size!r}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie strictly inside (0, 1), got {self.theta!r}")
        if self.transition is not None:
            mat = tuple(tuple(int(v) for v in row) for row in self.transition)
            object.__setattr__(self, "transition", mat)
            arr = np.array(mat, dtype=np.int64)
            d = self.alphabet_size
            if arr.shape != (d, d) or not np.isin(arr, (0, 1)).all():
                raise ValueError(f"transition must be a {d}x{d} 0/1 matrix")
            if not _is_primitive(arr):
                raise ValueError("transition matrix is not aperiodic (no strictly positive power)")

    @property
    def is_full(self) -> bool:
        return self.transition is None

    @property
    def matrix(self) -> np.ndarray:
        if self.transition is None:
            return np.ones((self.alphabet_size, self.alphabet_size), dtype=np.int64)
        return np.array(self.transition, dtype=np.int64)

    def allows(self, a: int, b: int) -> bool:
        return self.transition is None or self.transition[a][b] == 1

    def is_admissible(self, word: Sequence[int]) -> bool:
        if any(not 0 <= s < self.alphabet_size for s in word):
            return False
        return all(self.allows(a, b) for a, b in zip(word, word[1:]))

    def admits(self, p: "EPPoint") -> bool:
        return self.is_admissible(p.pre + p.period + p.period)

    def enumerate_words(self, k: int) -> list:
        """All admissible words of length ``k`` in lexicographic order."""
        return [tuple(int(s) for s in row) for row in word_array(self, k)]

    def count_words(self, k: int) -> int:
        return int(np.linalg.matrix_power(self.matrix, k - 1).sum())


def _is_primitive(arr: np.ndarray) -> bool:
    # Repeated boolean squaring until the exponent passes the Wielandt bound.
    d = arr.shape[0]
    power = (arr > 0).astype(np.int64)
    exponent = 1
    while exponent < (d - 1) ** 2 + 1:
        power = (power @ power > 0).astype(np.int64)
        exponent *= 2
    return bool((power > 0).all())


@lru_cache(maxsize=64)
def word_array(space: ShiftSpace, k: int) -> np.ndarray:
    """Admissible words of length ``k`` as an ``(n, k)`` integer array, lexicographic."""
    if k < 1:
        raise ValueError(f"word length must be >= 1, got {k}")
    d = space.alphabet_size
    words = np.arange(d, dtype=np.int64)[:, None]
    mat = space.matrix.astype(bool)
    for _ in range(k - 1):
        last = words[:, -1]
        rows = []
        for a in range(d):
            ok = mat[last, a]
            ext = np.concatenate([words[ok], np.full((int(ok.sum()), 1), a)], axis=1)
            rows.append(ext)
        words = np.concatenate(rows, axis=0)
        words = words[np.lexsort(words.T[::-1])]
    words.setflags(write=False)
    return words


def word_codes(words: np.ndarray, d: int) -> np.ndarray:
    """Base-``d`` integer code of each row of ``words``."""
    words = np.atleast_2d(words)
    k = words.shape[1]
    weights = d ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return words @ weights


@lru_cache(maxsize=64)
def code_index(space: ShiftSpace, k: int) -> np.ndarray:
    """Lookup table from base-``d`` code to position in ``word_array``; -1 if inadmissible."""
    words = word_array(space, k)
    table = np.full(space.alphabet_size ** k, -1, dtype=np.int64)
    table[word_codes(words, space.alphabet_size)] = np.arange(len(words))
    table.setflags(write=False)
    return table


def word_index(space: ShiftSpace, word: Sequence[int]) -> int:
    """Position of ``word`` in ``enumerate_words(len(word))``; -1 if inadmissible."""
    if not space.is_admissible(word):
        return -1
    code = int(word_codes(np.asarray(word, dtype=np.int64)[None, :], space.alphabet_size)[0])
    return int(code_index(space, len(word))[code])


def enumerate_words(space: ShiftSpace, k: int) -> list:
    return space.enumerate_words(k)


def _primitive_root(period: Word) -> Word:
    n = len(period)
    for m in range(1, n + 1):
        if n % m == 0 and period[:m] * (n // m) == period:
            return period[:m]
    return period


@dataclass(frozen=True)
class EPPoint:
    """Eventually periodic point ``pre . period period period ...``.

    The stored form is canonical: the period is primitive and the preperiod
    is as short as possible, so equality of points is equality of fields.
    """

    pre: Word
    period: Word

    def __post_init__(self):
        pre = tuple(int(s) for s in self.pre)
        period = tuple(int(s) for s in self.period)
        if not period:
            raise ValueError("period must be non-empty")
        period = _primitive_root(period)
        while pre and pre[-1] == period[-1]:
            period = period[-1:] + period[:-1]
            pre = pre[:-1]
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "period", period)

    @classmethod
    def periodic(cls, period: Iterable[int]) -> "EPPoint":
        return cls((), tuple(period))

    @classmethod
    def parse(cls, text: str) -> "EPPoint":
        """Parse ``"01(1)"``-style notation: preperiod digits, period in parentheses.

        Symbols may be comma separated (``"1,10(3)"``) for alphabets above ten.
        """
        m = re.fullmatch(r"\s*([0-9,]*)\(([0-9,]+)\)\s*", text)
        if m is None:
            raise ValueError(f"cannot parse eventually periodic point {text!r}")
        return cls(_parse_symbols(m.group(1)), _parse_symbols(m.group(2)))

    @property
    def is_periodic(self) -> bool:
        return not self.pre

    @property
    def first(self) -> int:
        return (self.pre + self.period)[0]

    def head(self, n: int) -> Word:
        """First ``n`` symbols."""
        out = list(self.pre[:n])
        while len(out) < n:
            out.extend(self.period)
        return tuple(out[:n])

    def tail(self) -> "EPPoint":
        """The purely periodic point reached after the preperiod."""
        return EPPoint((), self.period)

    def __str__(self) -> str:
        sep = "," if max(self.pre + self.period) >= 10 else ""
        return sep.join(map(str, self.pre)) + "(" + sep.join(map(str, self.period)) + ")"


def _parse_symbols(text: str) -> Word:
    if not text:
        return ()
    if "," in text:
        return tuple(int(t) for t in text.split(",") if t)
    return tuple(int(ch) for ch in text)


def parse_word(text: str) -> Word:
    """Parse ``"[0010]"`` or ``"0010"`` (comma separated also accepted)."""
    body = text.strip().strip("[]")
    word = _parse_symbols(body)
    if not word:
        raise ValueError(f"empty word {text!r}")
    return word


def shift(p: EPPoint) -> EPPoint:
    if p.pre:
        return EPPoint(p.pre[1:], p.period)
    return EPPoint((), p.period[1:] + p.period[:1])


def preimages(p: EPPoint, space: ShiftSpace) -> list:
    """Points ``a.p`` for every symbol ``a`` that may precede ``p``, ordered by symbol."""
    return [EPPoint((a,) + p.pre, p.period)
            for a in range(space.alphabet_size) if space.allows(a, p.first)]


def first_disagreement(p: EPPoint, q: EPPoint) -> Optional[int]:
    """1-based index of the first differing symbol, ``None`` if the points coincide."""
    if p == q:
        return None
    n = max(len(p.pre), len(q.pre)) + math.lcm(len(p.period), len(q.period))
    hp, hq = p.head(n), q.head(n)
    for i, (x, y) in enumerate(zip(hp, hq), start=1):
        if x != y:
            return i
    return None


def metric(p: EPPoint, q: EPPoint, space: ShiftSpace) -> float:
    i = first_disagreement(p, q)
    return 0.0 if i is None else space.theta ** i


def full_shift(alphabet_size: int = 2, theta: float = 0.5) -> ShiftSpace:
    return ShiftSpace(alphabet_size, theta)


@dataclass(frozen=True, eq=False)
class EdgeStructure:
    """Preimage graph on depth-``k`` states.

    Edge ``i`` is the ``i``-th admissible ``(k+1)``-word ``e``; it runs from
    state ``e[:k]`` to state ``e[1:]``.  ``by_target``/``target_starts`` and
    ``by_source``/``source_starts`` group edge ids for segment reductions.
    """

    space: ShiftSpace
    depth: int
    words: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    n_states: int
    by_target: np.ndarray
    target_starts: np.ndarray
    by_source: np.ndarray
    source_starts: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def states(self) -> np.ndarray:
        return word_array(self.space, self.depth)


@lru_cache(maxsize=32)
def edge_structure(space: ShiftSpace, k: int) -> EdgeStructure:
    d = space.alphabet_size
    words = word_array(space, k + 1)
    codes = word_codes(words, d)
    index = code_index(space, k)
    src = index[codes // d]
    tgt = index[codes % d ** k]
    by_target = np.argsort(tgt, kind="stable")
    by_source = np.argsort(src, kind="stable")
    n = len(word_array(space, k))
    target_starts = np.searchsorted(tgt[by_target], np.arange(n))
    source_starts = np.searchsorted(src[by_source], np.arange(n))
    for arr in (src, tgt, by_target, by_source, target_starts, source_starts):
        arr.setflags(write=False)
    return EdgeStructure(space, k, words, src, tgt, n, by_target, target_starts,
                         by_source, source_starts)


def state_of(space: ShiftSpace, word: Sequence[int]) -> int:
    """Index of a depth-``len(word)`` state; raises for inadmissible words."""
    idx = word_index(space, word)
    if idx < 0:
        raise ValueError(f"inadmissible word {tuple(word)}")
    return idx


def prefix_mask(space: ShiftSpace, k: int, word: Sequence[int]) -> np.ndarray:
    """Boolean mask over depth-``k`` states that extend ``word``."""
    word = tuple(word)
    if len(word) > k:
        raise ValueError(f"word of length {len(word)} exceeds depth {k}")
    states = word_array(space, k)
    return np.all(states[:, : len(word)] == np.asarray(word, dtype=np.int64), axis=1)


def point_edges(space: ShiftSpace, k: int, p: "EPPoint", n: int) -> np.ndarray:
    """Edge ids visited by ``p, sigma p, ..., sigma^{n-1} p`` at depth ``k``."""
    head = np.asarray(p.head(n + k), dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(head, k + 1)[:n]
    ids = code_index(space, k + 1)[word_codes(windows, space.alphabet_size)]
    if (ids < 0).any():
        raise ValueError(f"point {p} is not admissible")
    return ids
