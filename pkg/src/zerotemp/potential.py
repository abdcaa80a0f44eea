"""Potentials: the binary run-class family with geometric tails, and locally
constant tables used by the transfer and tropical modules."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from .shift_space import EPPoint, ShiftSpace, Word, code_index, word_array, word_codes


@dataclass(frozen=True)
class GeometricTailSequence:
    """Sequence ``s_n`` for ``n >= start_index``.

    The first ``len(prefix)`` values are listed explicitly; afterwards
    ``s_n = tail_coeff * tail_ratio**n``.  Indices below ``start_index``
    contribute zero to every sum.
    """

    tail_coeff: float
    tail_ratio: float
    prefix: Tuple[float, ...] = ()
    start_index: int = 2

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(v) for v in self.prefix))
        object.__setattr__(self, "tail_coeff", float(self.tail_coeff))
        object.__setattr__(self, "tail_ratio", float(self.tail_ratio))
        if not 0.0 < self.tail_ratio < 1.0:
            raise ValueError(f"tail_ratio must lie in (0, 1), got {self.tail_ratio!r}")
        if not all(math.isfinite(v) for v in self.prefix + (self.tail_coeff,)):
            raise ValueError("sequence values must be finite")

    @property
    def tail_start(self) -> int:
        """First index served by the geometric formula."""
        return self.start_index + len(self.prefix)

    def value(self, n: int) -> float:
        if n < self.start_index:
            return 0.0
        if n < self.tail_start:
            return self.prefix[n - self.start_index]
        return self.tail_coeff * self.tail_ratio ** n

    def values(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64)
        out = self.tail_coeff * self.tail_ratio ** ns.astype(float)
        if self.prefix:
            pre = np.asarray(self.prefix)
            inside = (ns >= self.start_index) & (ns < self.tail_start)
            out = np.where(inside, pre[np.clip(ns - self.start_index, 0, len(pre) - 1)], out)
        return np.where(ns < self.start_index, 0.0, out)

    def tail_sum(self, q: int) -> float:
        """Exact ``sum_{j>=1} s_{q+j}``."""
        lo = max(q + 1, self.start_index)
        head = [self.prefix[n - self.start_index] for n in range(lo, self.tail_start)]
        m = max(lo, self.tail_start)
        geo = self.tail_coeff * self.tail_ratio ** m / (1.0 - self.tail_ratio)
        return math.fsum(head + [geo])

    def partial_sum(self, lo: int, hi: int) -> float:
        """``s_lo + ... + s_hi`` (zero when ``hi < lo``)."""
        if hi < lo:
            return 0.0
        return math.fsum(self.value(n) for n in range(lo, hi + 1))

    def sup_abs_from(self, n: int) -> float:
        """``max_{m >= n} |s_m|``."""
        vals = [abs(self.value(m)) for m in range(max(n, self.start_index), self.tail_start)]
        m = max(n, self.tail_start, self.start_index)
        vals.append(abs(self.tail_coeff) * self.tail_ratio ** m)
        return max(vals)

    def scaled(self, factor: float) -> "GeometricTailSequence":
        return GeometricTailSequence(self.tail_coeff * factor, self.tail_ratio,
                                     tuple(v * factor for v in self.prefix), self.start_index)


class ClassKind(enum.Enum):
    ZERO_FIX = "ZeroFix"
    ONE_FIX = "OneFix"
    ZERO_RUN = "ZeroRun"
    ONE_RUN = "OneRun"


@dataclass(frozen=True)
class PointClass:
    """Run class of a binary point: a fixed point, or an initial run of length ``n``."""

    kind: ClassKind
    n: int = 0

    def __post_init__(self):
        runs = (ClassKind.ZERO_RUN, ClassKind.ONE_RUN)
        if self.kind in runs and self.n < 1:
            raise ValueError("run classes need n >= 1")
        if self.kind not in runs and self.n != 0:
            raise ValueError("fixed classes carry n = 0")

    @property
    def symbol(self) -> int:
        return 0 if self.kind in (ClassKind.ZERO_FIX, ClassKind.ZERO_RUN) else 1

    @property
    def is_fixed(self) -> bool:
        return self.n == 0

    def __str__(self) -> str:
        return self.kind.value if self.is_fixed else f"{self.kind.value}({self.n})"


ZERO_FIX = PointClass(ClassKind.ZERO_FIX)
ONE_FIX = PointClass(ClassKind.ONE_FIX)


def zero_run(n: int) -> PointClass:
    return PointClass(ClassKind.ZERO_RUN, n)


def one_run(n: int) -> PointClass:
    return PointClass(ClassKind.ONE_RUN, n)


def classify(p: EPPoint) -> PointClass:
    """Run class of ``p``; only defined on the binary alphabet."""
    if max(p.pre + p.period) > 1:
        raise ValueError(f"classify needs a binary point, got {p}")
    if not p.pre and len(p.period) == 1:
        return ZERO_FIX if p.period[0] == 0 else ONE_FIX
    head = p.head(len(p.pre) + len(p.period) + 1)
    n = next(i for i, s in enumerate(head) if s != head[0])
    return zero_run(n) if head[0] == 0 else one_run(n)


@dataclass(frozen=True)
class WaltersPotential:
    """Binary potential fixed by its initial run.

    ``f = b`` on [01], ``coeff_d`` on [10], ``a_n`` on [0^n 1] and ``c_n`` on
    [1^n 0] for ``n >= 2``, and 0 at both fixed points.  With ``strict`` the
    coefficients must all be negative; ``strict=False`` admits degenerate
    members such as the zero potential.
    """

    coeff_b: float
    coeff_d: float
    a_seq: GeometricTailSequence
    c_seq: GeometricTailSequence
    space: ShiftSpace = field(default_factory=lambda: ShiftSpace(2, 0.5))
    strict: bool = True

    def __post_init__(self):
        if self.space.alphabet_size != 2 or not self.space.is_full:
            raise ValueError("run-class potentials live on the full binary shift")
        for name, seq in (("a_seq", self.a_seq), ("c_seq", self.c_seq)):
            if seq.start_index != 2:
                raise ValueError(f"{name} must start at index 2")
        if self.strict:
            if not (self.coeff_b < 0 and self.coeff_d < 0):
                raise ValueError("coefficients b and d must be negative")
            for name, seq in (("a_seq", self.a_seq), ("c_seq", self.c_seq)):
                if seq.tail_coeff >= 0 or any(v >= 0 for v in seq.prefix):
                    raise ValueError(f"{name} values must be negative")

    def class_value(self, cls: PointClass) -> float:
        if cls.is_fixed:
            return 0.0
        if cls.n == 1:
            return self.coeff_b if cls.symbol == 0 else self.coeff_d
        seq = self.a_seq if cls.symbol == 0 else self.c_seq
        return seq.value(cls.n)

    def run_seq(self, symbol: int) -> GeometricTailSequence:
        return self.a_seq if symbol == 0 else self.c_seq

    def scaled(self, factor: float) -> "WaltersPotential":
        return WaltersPotential(self.coeff_b * factor, self.coeff_d * factor,
                                self.a_seq.scaled(factor), self.c_seq.scaled(factor),
                                self.space, self.strict)

    def mirrored(self) -> "WaltersPotential":
        """Swap the roles of the symbols 0 and 1."""
        return WaltersPotential(self.coeff_d, self.coeff_b, self.c_seq, self.a_seq,
                                self.space, self.strict)

    @property
    def sum_a(self) -> float:
        return self.a_seq.tail_sum(1)

    @property
    def sum_c(self) -> float:
        return self.c_seq.tail_sum(1)


def eval_walters(f: WaltersPotential, p: EPPoint) -> float:
    return f.class_value(classify(p))


def tail_sum(seq: GeometricTailSequence, q: int) -> float:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    return seq.tail_sum(q)


@dataclass(frozen=True, eq=False)
class LocallyConstantPotential:
    """Potential depending on the first ``depth`` symbols.

    ``values[i]`` belongs to the ``i``-th word of ``space.enumerate_words(depth)``.
    ``variation_bound`` bounds the sup distance to the function it approximates
    (zero for an exact table).
    """

    space: ShiftSpace
    depth: int
    values: Tuple[float, ...]
    variation_bound: float = 0.0

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        expected = len(word_array(self.space, self.depth))
        if len(vals) != expected:
            raise ValueError(f"depth {self.depth} needs {expected} values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("potential values must be finite")

    @cached_property
    def array(self) -> np.ndarray:
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        return arr

    def _key(self):
        return (self.space, self.depth, self.values, self.variation_bound)

    def __eq__(self, other):
        return isinstance(other, LocallyConstantPotential) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def value(self, word: Sequence[int]) -> float:
        word = tuple(word)[: self.depth]
        code = int(word_codes(np.asarray(word)[None, :], self.space.alphabet_size)[0])
        idx = int(code_index(self.space, self.depth)[code])
        if idx < 0:
            raise ValueError(f"inadmissible word {word}")
        return self.values[idx]

    def values_on(self, words: np.ndarray) -> np.ndarray:
        """Vectorized lookup on the first ``depth`` columns of ``words``."""
        codes = word_codes(np.asarray(words)[:, : self.depth], self.space.alphabet_size)
        return self.array[code_index(self.space, self.depth)[codes]]


def run_lengths(words: np.ndarray) -> np.ndarray:
    """Length of the initial constant run of each row; the row length if constant."""
    neq = words != words[:, :1]
    has = neq.any(axis=1)
    return np.where(has, neq.argmax(axis=1), words.shape[1])


def walters_on_words(f: WaltersPotential, words: np.ndarray) -> np.ndarray:
    """Value at the representative ``w . (last symbol of w)^inf`` of each row."""
    words = np.asarray(words, dtype=np.int64)
    k = words.shape[1]
    n = run_lengths(words)
    first = words[:, 0]
    out = np.where(first == 0, f.a_seq.values(n), f.c_seq.values(n))
    out = np.where(n == 1, np.where(first == 0, f.coeff_b, f.coeff_d), out)
    return np.where(n == k, 0.0, out)


def projection_error(f: WaltersPotential, k: int) -> float:
    """Exact sup distance between ``f`` and its depth-``k`` run-extension projection.

    Only constant words are ambiguous: [0^k] holds 0^inf and every [0^n 1], n >= k.
    """
    return max(f.a_seq.sup_abs_from(k), f.c_seq.sup_abs_from(k))


def project(f: WaltersPotential, k: int) -> LocallyConstantPotential:
    if k < 2:
        raise ValueError(f"projection depth must be >= 2, got {k}")
    vals = walters_on_words(f, word_array(f.space, k))
    return LocallyConstantPotential(f.space, k, tuple(vals), projection_error(f, k))


def lipschitz_bound(f: WaltersPotential) -> float:
    """Exact d_theta-Lipschitz constant of ``f`` (``inf`` if the tails decay too slowly)."""
    theta = f.space.theta
    for seq in (f.a_seq, f.c_seq):
        if seq.tail_coeff != 0 and seq.tail_ratio > theta:
            return math.inf
    families = []
    for sym in (0, 1):
        seq = f.run_seq(sym)
        m_top = seq.tail_start + 1
        vals = [f.coeff_b if sym == 0 else f.coeff_d] + [seq.value(n) for n in range(2, m_top + 1)]
        families.append(vals)
    best = 0.0
    for vals in families:
        # Points with runs n < m first differ at index n + 1; values past the
        # listed range lie between vals[-1] and the fixed-point value 0.
        for i, v in enumerate(vals):
            n = i + 1
            gaps = [abs(v - w) for w in vals[i + 1:]] + [abs(v), abs(v - vals[-1])]
            best = max(best, max(gaps) / theta ** (n + 1))
    lo0, hi0 = min(families[0] + [0.0]), max(families[0] + [0.0])
    lo1, hi1 = min(families[1] + [0.0]), max(families[1] + [0.0])
    best = max(best, max(hi0 - lo1, hi1 - lo0) / theta)
    return best


def locally_constant(space: ShiftSpace, depth: int, values: Sequence[float]) -> LocallyConstantPotential:
    return LocallyConstantPotential(space, depth, tuple(values))


def zero_potential(space: ShiftSpace = None, depth: int = 1) -> LocallyConstantPotential:
    space = space or ShiftSpace(2, 0.5)
    return LocallyConstantPotential(space, depth, (0.0,) * len(word_array(space, depth)))


def class_of_word(word: Word) -> PointClass:
    """Run class of the representative ``word . (last symbol)^inf``."""
    return classify(EPPoint(tuple(word), (word[-1],)))
