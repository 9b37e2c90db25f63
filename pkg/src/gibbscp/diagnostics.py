"""Ergodic-average, genericity and mixing diagnostics along scenery orbits."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .encoding import angles, l_k_array
from .scenery import (
    PairChain,
    QueryCylinder,
    cylinder_prob,
    derive_seeds,
    orbit_values,
    path_length_for,
)

MIN_PATHS = 2
MIN_STEPS = 1000


def _clean_intervals(intervals) -> tuple[tuple[float, float], ...]:
    out = []
    for lo, hi in intervals:
        lo, hi = float(lo), float(hi)
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"interval [{lo}, {hi}) must lie in [0, 1]")
        if hi > lo:
            out.append((lo, hi))
    out.sort()
    for (_, h1), (l2, _) in zip(out, out[1:]):
        if l2 < h1:
            raise ValueError("intervals must be disjoint")
    return tuple(out)


def interval_length(intervals) -> float:
    return float(sum(hi - lo for lo, hi in _clean_intervals(intervals)))


def in_intervals(t: np.ndarray, intervals) -> np.ndarray:
    t = np.asarray(t)
    hit = np.zeros(t.shape, dtype=bool)
    for lo, hi in _clean_intervals(intervals):
        hit |= (t >= lo) & (t < hi)
    return hit


def block_match(seq: np.ndarray, word, offsets: np.ndarray) -> np.ndarray:
    """seq[..., off + j] == word[j] for all j; seq is (paths, length), offsets 0-based."""
    hit = np.ones((seq.shape[0], len(offsets)), dtype=bool)
    for j, s in enumerate(word):
        hit &= seq[:, offsets + j] == s
    return hit


def cylinder_match(chain: PairChain, paths: np.ndarray, cyl: QueryCylinder, offsets: np.ndarray) -> np.ndarray:
    """Pair-path block starting after ``offsets`` symbols lies in [a] x [b]."""
    return block_match(paths // chain.n, cyl.a, offsets) & block_match(paths % chain.n, cyl.b, offsets)


def cylinder_measure(chain: PairChain, cyl: QueryCylinder) -> float:
    if not cyl.a and not cyl.b:
        return 1.0
    return cylinder_prob(chain, cyl)


@dataclass
class AverageReport:
    target: float
    per_path_means: list
    pooled_mean: float
    stderr: float
    steps: int
    paths: int
    z_score: float
    passed: bool
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _report(target: float, per_path: np.ndarray, steps: int, sigmas: float = 3.0) -> AverageReport:
    paths = len(per_path)
    pooled = float(per_path.mean())
    se = float(per_path.std(ddof=1) / np.sqrt(paths)) if paths > 1 else float("nan")
    warnings = []
    if paths < MIN_PATHS or steps < MIN_STEPS:
        warnings.append(f"insufficient samples (paths={paths}, N={steps}); standard error is unreliable")
    diff = pooled - target
    if se > 0:
        z = diff / se
    else:
        z = 0.0 if abs(diff) <= 1e-12 else float("inf")
    passed = bool(np.isfinite(z) and abs(z) <= sigmas) if np.isfinite(se) else abs(diff) <= 1e-12
    return AverageReport(target, per_path.tolist(), pooled, se, steps, paths, float(z), passed, warnings)


def _sample(chain: PairChain, length: int, seed: int, paths: int) -> np.ndarray:
    return chain.sample(length, derive_seeds(seed, paths))


def single_average_diagnostic(
    chain: PairChain, F: QueryCylinder, intervals, t: float, N: int, paths: int, seed: int
) -> AverageReport:
    """Averages of 1_I(frac(t + k alpha)) * [block after l_k(t) lies in F] over k = 1..N."""
    ks = np.arange(1, N + 1)
    ls = l_k_array(t, ks, chain.params)
    length = int(ls.max()) + max(len(F.a), len(F.b), 1) + 1
    sampled = _sample(chain, length, seed, paths)
    ind = in_intervals(angles(t, ks, chain.params), intervals)
    vals = ind[None, :] & cylinder_match(chain, sampled, F, ls)
    target = interval_length(intervals) * cylinder_measure(chain, F)
    return _report(target, vals.mean(axis=1), N)


def double_average_diagnostic(
    chain: PairChain, F: QueryCylinder, G: QueryCylinder, intervals, t: float, N: int, paths: int, seed: int
) -> AverageReport:
    """Averages of 1_I * [block after l_k(t) in F] * [block after k in G]; target |I| mu(F) mu(G)."""
    ks = np.arange(1, N + 1)
    ls = l_k_array(t, ks, chain.params)
    length = N + max(len(F.a), len(F.b), len(G.a), len(G.b), 1) + 1
    sampled = _sample(chain, length, seed, paths)
    ind = in_intervals(angles(t, ks, chain.params), intervals)
    vals = ind[None, :] & cylinder_match(chain, sampled, F, ls) & cylinder_match(chain, sampled, G, ks)
    target = interval_length(intervals) * cylinder_measure(chain, F) * cylinder_measure(chain, G)
    return _report(target, vals.mean(axis=1), N)


# -- test functionals on the CP chain -------------------------------------------


@dataclass(frozen=True)
class TestFunctional:
    """f(t, omega, nu) = 1_I(t) 1_[c](first coordinate) 1_[d](second coordinate) prod_i nu([a_i] x [b_i]).

    Along an orbit the first coordinate is read after k symbols, the second
    after l_k symbols, and nu is the conditional measure of the current box.
    """

    __test__ = False  # not a pytest class

    intervals: tuple = ((0.0, 1.0),)
    c: tuple = ()
    d: tuple = ()
    cylinders: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", _clean_intervals(self.intervals))
        object.__setattr__(self, "c", tuple(int(s) for s in self.c))
        object.__setattr__(self, "d", tuple(int(s) for s in self.d))
        object.__setattr__(
            self, "cylinders", tuple(q if isinstance(q, QueryCylinder) else QueryCylinder(*q) for q in self.cylinders)
        )

    def depth(self) -> int:
        return max([len(self.c), len(self.d)] + [max(len(q.a), len(q.b)) for q in self.cylinders] + [1])

    def to_json(self) -> dict:
        return {
            "intervals": [list(i) for i in self.intervals],
            "c": "".join(map(str, self.c)),
            "d": "".join(map(str, self.d)),
            "cylinders": [q.to_json() for q in self.cylinders],
        }


def functional_series(
    chain: PairChain, functionals, sampled: np.ndarray, N: int, t0: float = 0.0, threads: int = 1
) -> np.ndarray:
    """Values (len(functionals), paths, N) of each functional at steps k = 1..N."""
    ks = np.arange(1, N + 1)
    ls = l_k_array(t0, ks, chain.params)
    t = angles(t0, ks, chain.params)
    tests = sorted({q for f in functionals for q in f.cylinders}, key=lambda q: (q.a, q.b))
    vals = orbit_values(chain, sampled, ks, t0, tests, threads) if tests else None
    out = np.empty((len(functionals), sampled.shape[0], N))
    for i, f in enumerate(functionals):
        series = np.broadcast_to(in_intervals(t, f.intervals)[None, :], (sampled.shape[0], N)).astype(float)
        series = series * block_match(sampled // chain.n, f.c, ks) * block_match(sampled % chain.n, f.d, ls)
        for q in f.cylinders:
            series = series * vals[:, :, tests.index(q)]
        out[i] = series
    return out


def closed_form_limit(pair_table, f: TestFunctional) -> float:
    """Limit of the scenery average of ``f`` when the pair symbols are iid with law ``pair_table``.

    With iid pairs the conditional measure of a box factors into the first
    coordinate marginal of the future (independent of everything observed) and
    the second coordinate conditional on the already observed first
    coordinates near l_k.  The two blocks decouple as k - l_k grows.
    """
    p = np.asarray(pair_table, dtype=float)
    if p.ndim != 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
        raise ValueError("pair table must be a probability matrix")
    px = p.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(px[:, None] > 0, p / px[:, None], 0.0)  # p(y | x)

    def word_prob(w):
        return float(np.prod([px[s] for s in w])) if w else 1.0

    g_part = word_prob(f.c) * np.prod([word_prob(q.a) for q in f.cylinders])
    depth = max([len(f.d)] + [len(q.b) for q in f.cylinders] + [0])
    f_part = 1.0
    for pos in range(depth):
        weight = px.copy()
        if pos < len(f.d):
            weight = weight * cond[:, f.d[pos]]
        for q in f.cylinders:
            if pos < len(q.b):
                weight = weight * cond[:, q.b[pos]]
        f_part *= weight.sum()
    return interval_length(f.intervals) * f_part * g_part


def pair_table_of(chain: PairChain) -> np.ndarray | None:
    """The iid pair law when the chain's symbols are independent, else None."""
    if not chain.model.is_iid():
        return None
    return chain.model.symbol_marginal().reshape(chain.m, chain.n)


@dataclass
class GenericityReport:
    target: float | None
    per_path_means: list
    pooled_mean: float
    stderr: float
    dispersion: float
    z_score: float | None
    passed: bool | None
    prefix_lengths: list
    prefix_dispersion: list
    dispersion_slope: float | None
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def dispersion_slope(lengths, dispersions) -> float:
    """Log-log slope of cross-path dispersion against N."""
    return float(np.polyfit(np.log(lengths), np.log(dispersions), 1)[0])


def genericity_check(
    chain: PairChain,
    f: TestFunctional,
    N: int,
    paths: int,
    seed: int,
    prefix_lengths=None,
    threads: int = 1,
) -> GenericityReport:
    """Cross-path averages of f along CP orbits started at t = 0.

    Prefix averages over the first n steps of the same orbits give the
    dispersion-vs-N curve.
    """
    length = path_length_for(chain, N, f.cylinders) + f.depth()
    sampled = _sample(chain, length, seed, paths)
    series = functional_series(chain, [f], sampled, N, 0.0, threads)[0]
    per_path = series.mean(axis=1)
    base = _report(0.0, per_path, N)
    table = pair_table_of(chain)
    target = closed_form_limit(table, f) if table is not None else None
    if target is not None:
        z = (base.pooled_mean - target) / base.stderr if base.stderr > 0 else 0.0
        passed = bool(abs(z) <= 3.0)
    else:
        z, passed = None, None
    prefix_lengths = sorted(int(n) for n in (prefix_lengths or []) if 0 < n <= N)
    disp = [float(series[:, :n].mean(axis=1).std(ddof=1)) for n in prefix_lengths] if paths > 1 else []
    slope = dispersion_slope(prefix_lengths, disp) if len(disp) >= 2 and min(disp) > 0 else None
    return GenericityReport(
        target,
        per_path.tolist(),
        base.pooled_mean,
        base.stderr,
        float(per_path.std(ddof=1)) if paths > 1 else float("nan"),
        None if z is None else float(z),
        passed,
        prefix_lengths,
        disp,
        slope,
        base.warnings,
    )


@dataclass
class MixingReport:
    lags: list
    gap_mean: list
    gap_stderr: list
    z_scores: list
    paths: int
    steps: int

    def to_json(self) -> dict:
        return asdict(self)


def lag_gaps(f: np.ndarray, g: np.ndarray, lags) -> np.ndarray:
    """Per path and lag: mean(f_k g_{k+h}) - mean(f_k) mean(g_{k+h}) over the overlapping range."""
    N = f.shape[1]
    out = np.empty((f.shape[0], len(lags)))
    for i, h in enumerate(lags):
        a, b = f[:, : N - h], g[:, h:]
        out[:, i] = (a * b).mean(axis=1) - a.mean(axis=1) * b.mean(axis=1)
    return out


def mixing_diagnostic(
    chain: PairChain, f: TestFunctional, f_star: TestFunctional, lags, N: int, paths: int, seed: int, threads: int = 1
) -> MixingReport:
    lags = [int(h) for h in lags]
    if min(lags) < 0 or max(lags) >= N:
        raise ValueError("lags must lie in [0, N)")
    length = path_length_for(chain, N, f.cylinders + f_star.cylinders) + max(f.depth(), f_star.depth())
    sampled = _sample(chain, length, seed, paths)
    fs, gs = functional_series(chain, [f, f_star], sampled, N, 0.0, threads)
    gaps = lag_gaps(fs, gs, lags)
    mean = gaps.mean(axis=0)
    se = gaps.std(axis=0, ddof=1) / np.sqrt(paths) if paths > 1 else np.full(len(lags), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, mean / se, 0.0)
    return MixingReport(lags, mean.tolist(), se.tolist(), z.tolist(), paths, N)
