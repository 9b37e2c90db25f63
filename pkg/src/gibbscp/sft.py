"""Subshifts of finite type given by an order-1 transition matrix."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

DEFAULT_WORD_CAP = 10**7


class DeadSymbol(ValueError):
    """A symbol has no allowed successor or no allowed predecessor."""

    def __init__(self, index: int, kind: str = "successor"):
        self.index = index
        self.kind = kind
        super().__init__(f"symbol {index} has no allowed {kind}")


class WordCapExceeded(MemoryError):
    pass


class DisallowedWord(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Sft:
    """One-sided subshift of finite type on ``symbol_count`` symbols.

    ``allowed[u, v]`` is true iff symbol ``v`` may follow symbol ``u``.
    """

    allowed: np.ndarray
    word_cap: int = field(default=DEFAULT_WORD_CAP, compare=False)

    def __post_init__(self):
        a = np.array(self.allowed, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"allowed must be a nonempty square matrix, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "allowed", a)

    @property
    def symbol_count(self) -> int:
        return self.allowed.shape[0]

    def __eq__(self, other):
        return isinstance(other, Sft) and np.array_equal(self.allowed, other.allowed)

    def __hash__(self):
        return hash(self.allowed.tobytes()) ^ self.symbol_count

    def __repr__(self):
        return f"Sft(symbol_count={self.symbol_count}, allowed={self.allowed.astype(int).tolist()})"

    @classmethod
    def full(cls, k: int) -> "Sft":
        return cls(np.ones((k, k), dtype=bool))

    @classmethod
    def golden_mean(cls) -> "Sft":
        return cls(np.array([[1, 1], [1, 0]], dtype=bool))

    def to_json(self) -> dict:
        return {"symbols": self.symbol_count, "allowed": self.allowed.astype(int).tolist()}

    # -- checks -----------------------------------------------------------

    def is_allowed(self, word) -> bool:
        w = list(word)
        if any(not 0 <= s < self.symbol_count for s in w):
            return False
        return all(self.allowed[u, v] for u, v in zip(w, w[1:]))

    def check_word(self, word) -> tuple[int, ...]:
        w = tuple(int(s) for s in word)
        if not self.is_allowed(w):
            raise DisallowedWord(f"word {w} is not allowed")
        return w


def validate(sft: Sft) -> None:
    """Raise :class:`DeadSymbol` if some symbol has no successor or predecessor."""
    rows = sft.allowed.any(axis=1)
    cols = sft.allowed.any(axis=0)
    for i in range(sft.symbol_count):
        if not rows[i]:
            raise DeadSymbol(i, "successor")
        if not cols[i]:
            raise DeadSymbol(i, "predecessor")


def reachability(allowed: np.ndarray) -> np.ndarray:
    """Boolean matrix R with R[u, v] iff v is reachable from u in one or more steps."""
    a = np.asarray(allowed, dtype=bool)
    reach = a.copy()
    # transitive closure by repeated squaring
    while True:
        nxt = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


def is_transitive(sft: Sft) -> bool:
    """True iff the transition graph is strongly connected."""
    return bool(reachability(sft.allowed).all())


def count_words(sft: Sft, length: int) -> int:
    if length < 1:
        raise ValueError("length must be >= 1")
    a = sft.allowed.astype(object)
    v = np.ones(sft.symbol_count, dtype=object)
    for _ in range(length - 1):
        v = a.dot(v)
    return int(sum(v))


def enumerate_words(sft: Sft, length: int, cap: int | None = None) -> list[tuple[int, ...]]:
    """All allowed words of ``length`` in lexicographic order."""
    cap = sft.word_cap if cap is None else cap
    total = count_words(sft, length)
    if total > cap:
        raise WordCapExceeded(f"{total} words of length {length} exceed cap {cap}")
    succ = [np.flatnonzero(sft.allowed[u]).tolist() for u in range(sft.symbol_count)]
    words: list[tuple[int, ...]] = [(s,) for s in range(sft.symbol_count)]
    for _ in range(length - 1):
        words = [w + (v,) for w in words for v in succ[w[-1]]]
    return words


def words_array(sft: Sft, length: int, cap: int | None = None) -> np.ndarray:
    words = enumerate_words(sft, length, cap)
    return np.array(words, dtype=np.int64).reshape(len(words), length)


@dataclass(frozen=True)
class ProductAlphabet:
    """Pairs (i, j) with i < m, j < n, encoded as i*n + j."""

    m: int
    n: int

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError("both alphabets need at least two symbols")

    @property
    def size(self) -> int:
        return self.m * self.n

    def encode(self, i, j):
        return i * self.n + j

    def decode(self, s):
        if np.ndim(s):
            return np.divmod(np.asarray(s), self.n)
        return divmod(int(s), self.n)

    def x_of(self, s):
        return np.asarray(s) // self.n

    def y_of(self, s):
        return np.asarray(s) % self.n

    def pairs(self):
        return list(itertools.product(range(self.m), range(self.n)))
