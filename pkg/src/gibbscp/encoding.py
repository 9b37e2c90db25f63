"""Mixed-radix geometry on the torus: digit encodings, boxes and the eccentricity rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

MAX_STEP = 10**6
BOUNDARY_GUARD = 1e-9


class MultiplicativeDependence(ValueError):
    pass


class PrefixTooShort(ValueError):
    pass


def check_multiplicative_independence(m: int, n: int, max_exp: int = 64) -> bool:
    """False iff m**q == n**p for some 1 <= p, q <= max_exp (exact integers)."""
    if m < 2 or n < 2:
        raise ValueError("bases must be >= 2")
    # m**q == n**p forces q*log m == p*log n; only test the matching exponent pairs
    for q in range(1, max_exp + 1):
        p = round(q * math.log(m) / math.log(n))
        if 1 <= p <= max_exp and m**q == n**p:
            return False
    return True


@dataclass(frozen=True)
class AdicParams:
    """Bases with m < n. ``swapped`` records that the caller gave them in the other order."""

    m: int
    n: int
    swapped: bool = False

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError("bases must be >= 2")
        if self.m == self.n:
            raise MultiplicativeDependence(f"m = n = {self.m}")

    @classmethod
    def make(cls, m: int, n: int, require_independent: bool = True) -> "AdicParams":
        swapped = m > n
        if swapped:
            m, n = n, m
        if require_independent and not check_multiplicative_independence(m, n):
            raise MultiplicativeDependence(
                f"log {m} / log {n} is rational; the bases must be multiplicatively independent"
            )
        return cls(m, n, swapped)

    @property
    def alpha(self) -> float:
        return math.log(self.m) / math.log(self.n)

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n}


def _floor_exact(t: float, k: int, m: int, n: int) -> int:
    with mpmath.workdps(60):
        val = mpmath.mpf(t) + k * mpmath.log(m) / mpmath.log(n)
        return int(mpmath.floor(val))


def l_k(t: float, k: int, params: AdicParams) -> int:
    """Number of n-adic refinements after k steps: floor(t + k alpha)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > MAX_STEP:
        raise ValueError(f"k is capped at {MAX_STEP}")
    if k == 0:
        return int(math.floor(t))
    v = t + k * params.alpha
    if abs(v - round(v)) <= BOUNDARY_GUARD:
        return _floor_exact(t, k, params.m, params.n)
    return int(math.floor(v))


def l_k_array(t: float, ks, params: AdicParams) -> np.ndarray:
    """Vectorized ``l_k`` with the same near-integer guard."""
    ks = np.asarray(ks, dtype=np.int64)
    if ks.size and (ks.min() < 0 or ks.max() > MAX_STEP):
        raise ValueError(f"k must lie in [0, {MAX_STEP}]")
    v = t + ks * params.alpha
    out = np.floor(v).astype(np.int64)
    out[ks == 0] = int(math.floor(t))
    risky = np.flatnonzero((np.abs(v - np.round(v)) <= BOUNDARY_GUARD) & (ks > 0))
    for i in risky:
        out[i] = _floor_exact(t, int(ks[i]), params.m, params.n)
    return out


def angle(t: float, k: int, params: AdicParams) -> float:
    """Rotation state after k steps: frac(t + k alpha)."""
    v = t + k * params.alpha
    return v - l_k(t, k, params)


def angles(t: float, ks, params: AdicParams) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.int64)
    return t + ks * params.alpha - l_k_array(t, ks, params)


def radix_value(digits, base: int) -> Fraction:
    """Exact sum of d_i base**-i."""
    num = 0
    for d in digits:
        num = num * base + int(d)
    return Fraction(num, base ** len(digits))


def xi_point(x_digits, y_digits, depth: int, params: AdicParams) -> tuple[float, float]:
    """Truncated encoding of a pair of digit sequences."""
    if len(x_digits) < depth or len(y_digits) < depth:
        raise PrefixTooShort(f"need at least {depth} digits in each coordinate")
    return float(radix_value(x_digits[:depth], params.m)), float(radix_value(y_digits[:depth], params.n))


@dataclass(frozen=True)
class Box:
    """Half-open mixed-radix rectangle [x0, x0 + m^-k) x [y0, y0 + n^-l) in unit-square coordinates."""

    x_digits: tuple[int, ...]
    y_digits: tuple[int, ...]
    params: AdicParams

    @property
    def x0(self) -> Fraction:
        return radix_value(self.x_digits, self.params.m)

    @property
    def y0(self) -> Fraction:
        return radix_value(self.y_digits, self.params.n)

    @property
    def width(self) -> Fraction:
        return Fraction(1, self.params.m ** len(self.x_digits))

    @property
    def height(self) -> Fraction:
        return Fraction(1, self.params.n ** len(self.y_digits))

    @property
    def volume(self) -> Fraction:
        return self.width * self.height

    def eccentricity(self, t: float = 0.0) -> float:
        """Height / width once the y-axis is stretched by n^t (the level-0 box is [0,1) x [0, n^t))."""
        lw = -len(self.x_digits) * math.log(self.params.m)
        lh = (t - len(self.y_digits)) * math.log(self.params.n)
        return math.exp(lh - lw)

    def contains(self, x, y) -> bool:
        return self.x0 <= x < self.x0 + self.width and self.y0 <= y < self.y0 + self.height

    def contains_box(self, other: "Box") -> bool:
        return (
            self.x0 <= other.x0
            and other.x0 + other.width <= self.x0 + self.width
            and self.y0 <= other.y0
            and other.y0 + other.height <= self.y0 + self.height
        )

    def to_json(self) -> dict:
        return {"x": "".join(map(str, self.x_digits)), "y": "".join(map(str, self.y_digits))}


def box_of(x_digits, y_digits, k: int, t: float, params: AdicParams) -> Box:
    """The depth-(k, l_k(t)) box containing the encoded point.

    Coordinates are those of the unit square; the level-0 box is taken to be
    [0,1) x [0, n^t), which only rescales the y-axis, so ``eccentricity(t)``
    of the result lies in [1, n).
    """
    l = l_k(t, k, params)
    if len(x_digits) < k or len(y_digits) < l:
        raise PrefixTooShort(f"need {k} x-digits and {l} y-digits")
    return Box(tuple(int(d) for d in x_digits[:k]), tuple(int(d) for d in y_digits[:l]), params)


def box_eccentricity(k: int, t: float, params: AdicParams) -> float:
    """Height / width of the step-k box inside the level-0 box R_t: n^(frac(t + k alpha))."""
    return float(params.n ** angle(t, k, params))
