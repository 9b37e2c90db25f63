"""Conditional cylinder probabilities and scenery orbits for pair-symbol Gibbs chains.

A pair chain is a Gibbs model whose symbols encode pairs (x, y) as ``x * n + y``.
Observing the first coordinate to depth k and the second to depth l turns the
chain into a partially observed Markov chain, so every conditional probability
is a ratio of two forward sums with position-wise masks.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .encoding import AdicParams, angles, l_k
from .thermo import GibbsModel, sample_paths

CHUNK = 8  # paths per batch; fixed so results never depend on the worker count
CHECKPOINT = 256


class ZeroProbabilityWindow(ValueError):
    pass


class DisallowedQuery(ValueError):
    pass


@dataclass(frozen=True)
class QueryCylinder:
    """Product cylinder [a] x [b]: first coordinate word ``a``, second coordinate word ``b``."""

    a: tuple[int, ...] = ()
    b: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(int(s) for s in self.a))
        object.__setattr__(self, "b", tuple(int(s) for s in self.b))

    @property
    def label(self) -> str:
        return f"{''.join(map(str, self.a)) or '*'}|{''.join(map(str, self.b)) or '*'}"

    def to_json(self) -> dict:
        return {"a": "".join(map(str, self.a)), "b": "".join(map(str, self.b))}


@dataclass(frozen=True)
class ObservationWindow:
    x_obs: tuple[int, ...]
    y_obs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "x_obs", tuple(int(s) for s in self.x_obs))
        object.__setattr__(self, "y_obs", tuple(int(s) for s in self.y_obs))
        if len(self.y_obs) > len(self.x_obs):
            raise ValueError("the second coordinate cannot be observed deeper than the first")

    @property
    def k(self) -> int:
        return len(self.x_obs)

    @property
    def l(self) -> int:
        return len(self.y_obs)

    @classmethod
    def from_path(cls, path, k: int, l: int, n: int) -> "ObservationWindow":
        path = np.asarray(path)
        return cls(tuple(path[:k] // n), tuple(path[:l] % n))


def default_test_set(m: int, n: int, depth: int = 2) -> list[QueryCylinder]:
    """All [a] x [b] with 1 <= |a|, |b| <= depth."""
    xs = [w for L in range(1, depth + 1) for w in itertools.product(range(m), repeat=L)]
    ys = [w for L in range(1, depth + 1) for w in itertools.product(range(n), repeat=L)]
    return [QueryCylinder(a, b) for a in xs for b in ys]


@dataclass(frozen=True, eq=False)
class PairChain:
    """A Gibbs model over the pair alphabet together with the bases."""

    model: GibbsModel
    params: AdicParams

    def __post_init__(self):
        m, n = self.params.m, self.params.n
        if self.model.symbol_count != m * n:
            raise ValueError(f"pair chains need {m * n} symbols, model has {self.model.symbol_count}")
        syms = np.array(self.model.states, dtype=np.int64)
        object.__setattr__(self, "state_x", syms // n)
        object.__setattr__(self, "state_y", syms % n)
        last = self.model.last_symbol
        object.__setattr__(self, "last_x", last // n)
        object.__setattr__(self, "last_y", last % n)
        # column masks by pinned value; index m (or n) means "free"
        mx = np.vstack([self.last_x[None, :] == c for c in range(m)] + [np.ones((1, len(last)), bool)])
        my = np.vstack([self.last_y[None, :] == c for c in range(n)] + [np.ones((1, len(last)), bool)])
        object.__setattr__(self, "mask_x", mx)
        object.__setattr__(self, "mask_y", my)

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def order(self) -> int:
        return self.model.order

    def check_query(self, query: QueryCylinder) -> None:
        if not query.a and not query.b:
            raise DisallowedQuery("query cylinder must constrain at least one coordinate")
        if any(not 0 <= s < self.m for s in query.a) or any(not 0 <= s < self.n for s in query.b):
            raise DisallowedQuery(f"query {query.label} uses symbols outside the alphabets")

    def sample(self, length: int, seeds) -> np.ndarray:
        return sample_paths(self.model, length, seeds)


# -- exact masked forward sums ---------------------------------------------------


def _pins(rows: int, length: int) -> np.ndarray:
    return np.full((rows, length), -1, dtype=np.int64)


def masked_log_mass(chain: PairChain, xpin: np.ndarray, ypin: np.ndarray) -> np.ndarray:
    """log mu(x_p = xpin[p], y_p = ypin[p] wherever the pin is >= 0), one row per instance."""
    xpin = np.atleast_2d(np.asarray(xpin, dtype=np.int64))
    ypin = np.atleast_2d(np.asarray(ypin, dtype=np.int64))
    rows, T = xpin.shape
    r1 = chain.order
    if T < r1:
        xpin = np.concatenate([xpin, _pins(rows, r1 - T)], axis=1)
        ypin = np.concatenate([ypin, _pins(rows, r1 - T)], axis=1)
        T = r1
    m, n = chain.m, chain.n
    xi = np.where(xpin < 0, m, xpin)
    yi = np.where(ypin < 0, n, ypin)
    model = chain.model
    ok = np.ones((rows, model.n_states), dtype=bool)
    for j in range(r1):
        ok &= (xpin[:, j : j + 1] < 0) | (chain.state_x[None, :, j] == xpin[:, j : j + 1])
        ok &= (ypin[:, j : j + 1] < 0) | (chain.state_y[None, :, j] == ypin[:, j : j + 1])
    v = model.stationary[None, :] * ok
    logscale = np.zeros(rows)
    K = model.kernel
    for p in range(r1, T):
        v = (v @ K) * chain.mask_x[xi[:, p]] * chain.mask_y[yi[:, p]]
        s = v.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            logscale += np.log(s)
            v = v / np.where(s > 0, s, 1.0)[:, None]
    with np.errstate(divide="ignore"):
        return logscale + np.log(v.sum(axis=1))


def _query_pins(window: ObservationWindow, query: QueryCylinder):
    k, l = window.k, window.l
    T = max(k + len(query.a), l + len(query.b), 1)
    xd, yd = _pins(1, T), _pins(1, T)
    xd[0, :k] = window.x_obs
    yd[0, :l] = window.y_obs
    xn, yn = xd.copy(), yd.copy()
    xn[0, k : k + len(query.a)] = query.a
    yn[0, l : l + len(query.b)] = query.b
    return xn, yn, xd, yd


def conditional_prob(chain: PairChain, window: ObservationWindow, query: QueryCylinder) -> float:
    """mu(x_{k+1..k+|a|} = a, y_{l+1..l+|b|} = b | x_{1..k}, y_{1..l})."""
    chain.check_query(query)
    if any(not 0 <= s < chain.m for s in window.x_obs) or any(not 0 <= s < chain.n for s in window.y_obs):
        raise ZeroProbabilityWindow("window uses symbols outside the alphabets")
    xn, yn, xd, yd = _query_pins(window, query)
    den = masked_log_mass(chain, xd, yd)[0]
    if not np.isfinite(den):
        raise ZeroProbabilityWindow("the observation window has probability zero")
    num = masked_log_mass(chain, xn, yn)[0]
    return float(np.exp(num - den)) if np.isfinite(num) else 0.0


def cylinder_prob(chain: PairChain, query: QueryCylinder) -> float:
    """Unconditioned mu([a] x [b]) with both words starting at position 1."""
    return conditional_prob(chain, ObservationWindow((), ()), query)


# -- scenery orbits ------------------------------------------------------------------


def _normalize(A: np.ndarray) -> np.ndarray:
    s = A.reshape(A.shape[0], -1).max(axis=1)
    return A / s[:, None, None]


class _WindowProduct:
    """Product of per-position matrices over a sliding window [left, right].

    Two-stack queue: pushes multiply into a running back product; pops walk a
    front stack of suffix products.  The front stack keeps only every
    ``CHECKPOINT``-th suffix and rebuilds one segment at a time, so memory stays
    proportional to sqrt(window) rather than to the window length.
    Every stored product is max-normalized per path; only ratios are used.
    """

    def __init__(self, make):
        self.make = make
        self.front_pos: list[int] = []
        self.front_head = 0
        self.checkpoints: dict[int, np.ndarray] = {}
        self.segment: dict[int, np.ndarray] = {}
        self.back_pos: list[int] = []
        self.back: np.ndarray | None = None

    def push(self, pos: int) -> None:
        B = self.make(pos)
        self.back = B if self.back is None else _normalize(self.back @ B)
        self.back_pos.append(pos)

    def _transfer(self) -> None:
        self.front_pos = self.back_pos
        self.front_head = 0
        self.back_pos, self.back = [], None
        self.checkpoints, self.segment = {}, {}
        acc = None
        for i in range(len(self.front_pos) - 1, -1, -1):
            B = self.make(self.front_pos[i])
            acc = B if acc is None else _normalize(B @ acc)
            if i % CHECKPOINT == 0:
                self.checkpoints[i] = acc

    def _suffix(self, i: int) -> np.ndarray:
        if i in self.checkpoints:
            return self.checkpoints[i]
        if i not in self.segment:
            start = (i // CHECKPOINT) * CHECKPOINT
            stop = min(start + CHECKPOINT, len(self.front_pos))
            acc = self.checkpoints.get(stop)
            self.segment = {}
            for j in range(stop - 1, start, -1):
                B = self.make(self.front_pos[j])
                acc = B if acc is None else _normalize(B @ acc)
                self.segment[j] = acc
        return self.segment[i]

    def pop(self) -> None:
        if self.front_head >= len(self.front_pos):
            self._transfer()
        self.front_head += 1
        self.checkpoints.pop(self.front_head - 1, None)

    def product(self) -> np.ndarray:
        has_front = self.front_head < len(self.front_pos)
        if has_front and self.back is not None:
            return _normalize(self._suffix(self.front_head) @ self.back)
        if has_front:
            return self._suffix(self.front_head)
        if self.back is None:
            raise RuntimeError("empty window product")
        return self.back


def _orbit_chunk(chain: PairChain, paths: np.ndarray, steps: np.ndarray, t0: float, tests: list[QueryCylinder]) -> np.ndarray:
    """Feature values (paths, len(steps), len(tests)) along fixed sampled paths."""
    P = paths.shape[0]
    m, n = chain.m, chain.n
    model = chain.model
    K = model.kernel
    S = model.n_states
    r1 = chain.order
    px, py = paths // n, paths % n
    out = np.empty((P, len(steps), len(tests)))
    record = {int(k): i for i, k in enumerate(steps)}
    k_max = int(steps.max())

    a_words = sorted({q.a for q in tests})
    b_words = sorted({q.b for q in tests})
    D = max(len(b) for b in b_words)
    a_idx = np.array([a_words.index(q.a) for q in tests])
    b_idx = np.array([b_words.index(q.b) for q in tests])

    # path-independent right vectors: mu(future x-block | state at k)
    W = np.ones((S, len(a_words) + 1))
    for j, a in enumerate(a_words):
        w = np.ones(S)
        for sym in reversed(a):
            w = K @ (chain.mask_x[sym] * w)
        W[:, j] = w
    # y-masks per b word and offset (free beyond |b|)
    ymask = np.ones((len(b_words) + 1, max(D, 1), S), dtype=bool)
    for j, b in enumerate(b_words):
        for i, sym in enumerate(b):
            ymask[j, i] = chain.mask_y[sym]

    def x_only(pos):  # matrix for 1-based position pos, first coordinate pinned
        return K[None, :, :] * chain.mask_x[px[:, pos - 1]][:, None, :]

    def direct(k, l):
        idx = record[k]
        for ti, q in enumerate(tests):
            T = max(k + len(q.a), l + len(q.b), 1)
            xd, yd = _pins(P, T), _pins(P, T)
            xd[:, :k] = px[:, :k]
            yd[:, :l] = py[:, :l]
            xn, yn = xd.copy(), yd.copy()
            xn[:, k : k + len(q.a)] = q.a
            yn[:, l : l + len(q.b)] = q.b
            out[:, idx, ti] = np.exp(masked_log_mass(chain, xn, yn) - masked_log_mass(chain, xd, yd))

    fast = False
    f = queue = V = None
    l_prev = None
    for k in range(1, k_max + 1):
        l = l_k(t0, k, chain.params)
        if not fast and l >= r1 and k - l >= D + 1:
            fast = True
            # forward filter over the fully observed prefix 1..l
            ok = np.ones((P, S), dtype=bool)
            for j in range(r1):
                ok &= (chain.state_x[None, :, j] == px[:, j : j + 1]) & (chain.state_y[None, :, j] == py[:, j : j + 1])
            f = model.stationary[None, :] * ok
            f /= f.sum(axis=1, keepdims=True)
            for pos in range(r1 + 1, l + 1):
                f = (f @ K) * chain.mask_x[px[:, pos - 1]] * chain.mask_y[py[:, pos - 1]]
                f /= f.sum(axis=1, keepdims=True)
            queue = _WindowProduct(x_only)
            for pos in range(l + D + 1, k + 1):
                queue.push(pos)
            V = None
        elif fast:
            queue.push(k)
            if l > l_prev:
                f = (f @ K) * chain.mask_x[px[:, l - 1]] * chain.mask_y[py[:, l - 1]]
                f /= f.sum(axis=1, keepdims=True)
                queue.pop()
                V = None
        l_prev = l
        if k not in record:
            continue
        if not fast:
            direct(k, l)
            continue
        if V is None:
            # left vectors through the D positions after l, one row per b word plus the free row
            V = np.broadcast_to(f[:, None, :], (P, len(b_words) + 1, S)).copy()
            for i in range(D):
                xm = chain.mask_x[px[:, l + i]]
                V = (V @ K) * xm[:, None, :] * ymask[None, :, i, :]
        Q = queue.product()
        QW = Q @ W  # (P, S, na + 1)
        num = np.einsum("pbs,psa->pba", V, QW)
        den = num[:, -1, -1]
        out[:, record[k], :] = num[:, b_idx, a_idx] / den[:, None]
    return out


@dataclass
class SceneryOrbit:
    """Feature values of one path at steps q, 2q, ..., Nq."""

    steps: np.ndarray
    t: np.ndarray
    values: np.ndarray
    tests: list
    q: int
    path: np.ndarray = field(repr=False)

    def features(self) -> list["SceneryFeatures"]:
        return [SceneryFeatures(float(t), int(k), v) for t, k, v in zip(self.t, self.steps, self.values)]


@dataclass(frozen=True)
class SceneryFeatures:
    t: float
    k: int
    values: np.ndarray


def derive_seeds(master: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master).spawn(count)


def path_length_for(chain: PairChain, steps_max: int, tests) -> int:
    a = max((len(q.a) for q in tests), default=0)
    b = max((len(q.b) for q in tests), default=0)
    return steps_max + a + b + chain.order + 2


def orbit_values(
    chain: PairChain, paths: np.ndarray, steps: np.ndarray, t0: float, tests, threads: int = 1
) -> np.ndarray:
    """Feature values for many paths; chunks are fixed-size so output ignores ``threads``."""
    for q in tests:
        chain.check_query(q)
    chunks = [paths[i : i + CHUNK] for i in range(0, len(paths), CHUNK)]
    run = lambda c: _orbit_chunk(chain, c, steps, t0, list(tests))  # noqa: E731
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def scenery_orbits(
    chain: PairChain,
    seed: int,
    N: int,
    paths: int = 1,
    t0: float = 0.0,
    tests=None,
    q: int = 1,
    threads: int = 1,
) -> list[SceneryOrbit]:
    if N < 1 or q < 1:
        raise ValueError("N and q must be positive")
    tests = list(tests) if tests is not None else default_test_set(chain.m, chain.n)
    steps = q * np.arange(1, N + 1)
    length = path_length_for(chain, int(steps[-1]), tests)
    sampled = chain.sample(length, derive_seeds(seed, paths))
    values = orbit_values(chain, sampled, steps, t0, tests, threads)
    t = angles(t0, steps, chain.params)
    return [SceneryOrbit(steps, t, values[i], tests, q, sampled[i]) for i in range(paths)]


def scenery_orbit(chain: PairChain, seed: int, N: int, t0: float = 0.0, tests=None, q: int = 1) -> SceneryOrbit:
    return scenery_orbits(chain, seed, N, 1, t0, tests, q)[0]


@dataclass
class EmpiricalCpDistribution:
    t: np.ndarray
    values: np.ndarray
    q: int

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self.t), 1.0 / len(self.t))

    def __len__(self) -> int:
        return len(self.t)

    def ks_uniform(self) -> float:
        """Kolmogorov-Smirnov distance of the angle marginal from Lebesgue on [0, 1)."""
        return float(stats.kstest(self.t, "uniform").statistic)


def empirical_distribution(orbits: list[SceneryOrbit]) -> EmpiricalCpDistribution:
    if not orbits:
        raise ValueError("need at least one orbit")
    q = orbits[0].q
    t = np.concatenate([o.t for o in orbits])
    values = np.concatenate([o.values for o in orbits], axis=0)
    return EmpiricalCpDistribution(t, values, q)


def deep_features(
    chain: PairChain, seed: int, N: int, paths: int, depth: int, q: int = 1, threads: int = 1, t0: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional measures on all depth-(depth, l_depth(t)) sub-boxes along scenery orbits.

    Returns angles ``t`` (samples,) and masses (samples, m**depth, n**Lb) where
    Lb = ceil(depth * alpha); when l_depth(t) < Lb the trailing y-digit is only
    a finer split of the same sub-box.
    """
    m, n = chain.m, chain.n
    Lb = math.ceil(depth * chain.params.alpha)
    xs = list(itertools.product(range(m), repeat=depth))
    ys = list(itertools.product(range(n), repeat=Lb))
    tests = [QueryCylinder(a, b) for a in xs for b in ys]
    steps = q * np.arange(1, N + 1)
    length = path_length_for(chain, int(steps[-1]), tests)
    sampled = chain.sample(length, derive_seeds(seed, paths))
    values = orbit_values(chain, sampled, steps, t0, tests, threads)
    t = np.tile(angles(t0, steps, chain.params), paths)
    return t, values.reshape(paths * N, len(xs), len(ys))
