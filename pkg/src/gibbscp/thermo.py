"""Gibbs measures of finite-range potentials on subshifts of finite type.

A range-``r`` potential assigns a value to every allowed word of length ``r``.
Its transfer operator acts on functions of the first ``r - 1`` symbols, so it
is an honest finite matrix and the Gibbs measure is a stationary Markov chain
of order ``r - 1``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from .sft import DisallowedWord, Sft, count_words, enumerate_words, is_transitive, reachability, validate

log = logging.getLogger(__name__)

CACHE_ENV = "GIBBSCP_CACHE_DIR"


class NonConvergence(RuntimeError):
    pass


class NonIrreducible(ValueError):
    pass


class InconsistentRange(ValueError):
    pass


def parse_word(text: str) -> tuple[int, ...]:
    """'0110' -> (0, 1, 1, 0); '10,3,2' -> (10, 3, 2)."""
    text = text.strip()
    if "," in text:
        return tuple(int(s) for s in text.split(","))
    return tuple(int(c) for c in text)


def format_word(word) -> str:
    w = [int(s) for s in word]
    if all(s < 10 for s in w):
        return "".join(str(s) for s in w)
    return ",".join(str(s) for s in w)


@dataclass(frozen=True, eq=False)
class Potential:
    """Finite-range potential: ``table[w]`` for each allowed word ``w`` of length ``range``."""

    sft: Sft
    range: int
    table: Mapping[tuple[int, ...], float]
    rho: float = 0.5

    def __post_init__(self):
        if self.range < 1:
            raise InconsistentRange("range must be >= 1")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        table = {tuple(int(s) for s in w): float(v) for w, v in self.table.items()}
        expected = set(enumerate_words(self.sft, self.range))
        if set(table) != expected:
            missing = sorted(expected - set(table))[:3]
            extra = sorted(set(table) - expected)[:3]
            raise InconsistentRange(
                f"potential table must cover exactly the allowed words of length {self.range}"
                f" (missing {missing}, unexpected {extra})"
            )
        if not all(np.isfinite(v) for v in table.values()):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "table", table)

    def __call__(self, word) -> float:
        return self.table[tuple(word)]

    # -- presets ----------------------------------------------------------

    @classmethod
    def constant(cls, sft: Sft, value: float = 0.0, range: int = 2, rho: float = 0.5) -> "Potential":
        return cls(sft, range, {w: value for w in enumerate_words(sft, range)}, rho)

    @classmethod
    def uniform(cls, sft: Sft, rho: float = 0.5) -> "Potential":
        return cls.constant(sft, 0.0, 2, rho)

    @classmethod
    def bernoulli(cls, sft: Sft, p, rho: float = 0.5) -> "Potential":
        """phi(w) = log p[w_1]; range 1."""
        p = np.asarray(p, dtype=float)
        if p.shape != (sft.symbol_count,) or np.any(p <= 0):
            raise ValueError("bernoulli weights must be positive, one per symbol")
        return cls(sft, 1, {(i,): float(np.log(p[i])) for i in range(sft.symbol_count)}, rho)

    @classmethod
    def markov(cls, sft: Sft, matrix, rho: float = 0.5) -> "Potential":
        """phi(x, y) = log P[x, y] on allowed pairs; range 2."""
        P = np.asarray(matrix, dtype=float)
        table = {}
        for w in enumerate_words(sft, 2):
            if P[w] <= 0:
                raise ValueError(f"markov weight for allowed pair {w} must be positive")
            table[w] = float(np.log(P[w]))
        return cls(sft, 2, table, rho)

    @classmethod
    def random(cls, sft: Sft, range: int, seed: int, amplitude: float = 1.0, rho: float = 0.5) -> "Potential":
        rng = np.random.default_rng(seed)
        words = enumerate_words(sft, range)
        vals = amplitude * rng.standard_normal(len(words))
        return cls(sft, range, dict(zip(words, vals.tolist())), rho)

    def lifted(self) -> "Potential":
        """Range-1 potentials become range 2 by ignoring the second symbol."""
        if self.range >= 2:
            return self
        table = {w: self.table[w[:1]] for w in enumerate_words(self.sft, 2)}
        return Potential(self.sft, 2, table, self.rho)

    def birkhoff_sum(self, seq, count: int) -> float:
        """S_count phi on a sequence prefix: sum of phi over the first ``count`` windows."""
        seq = tuple(seq)
        r = self.range
        if len(seq) < count + r - 1:
            raise ValueError("sequence too short for the requested Birkhoff sum")
        return float(sum(self.table[seq[j : j + r]] for j in range(count)))

    def to_json(self) -> dict:
        return {
            "range": self.range,
            "rho": self.rho,
            "table": {format_word(w): v for w, v in sorted(self.table.items())},
        }


# -- transfer operator -------------------------------------------------------


def transfer_matrix(sft: Sft, potential: Potential) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """States (allowed words of length r-1) and the matrix of the transfer operator.

    Entry ``(u, u')`` is ``exp(phi(x u))`` where ``u'`` is the first ``r - 1``
    symbols of ``x u``; the operator prepends a symbol.
    """
    if potential.sft != sft:
        raise InconsistentRange("potential was built for a different subshift")
    pot = potential.lifted()
    r = pot.range
    states = enumerate_words(sft, r - 1)
    index = {s: i for i, s in enumerate(states)}
    M = np.zeros((len(states), len(states)))
    for w, v in pot.table.items():
        u, u2 = w[1:], w[: r - 1]
        M[index[u], index[u2]] += np.exp(v)
    return states, M


def _perron_vector(A: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray]:
    """Leading eigenpair of an irreducible nonnegative matrix by shifted power iteration.

    The shift makes the iteration matrix primitive, so periodic SFTs converge too.
    Stops when the Collatz-Wielandt bounds agree to ``tol`` relative.
    """
    n = A.shape[0]
    shift = float(A.sum(axis=1).mean())
    v = np.ones(n)
    lam = 0.0
    for it in range(1, max_iter + 1):
        Av = A @ v
        ratios = Av / v
        lo, hi = ratios.min(), ratios.max()
        lam = 0.5 * (lo + hi)
        if hi - lo <= 0.25 * tol * lam:
            return float(lam), v / v.max()
        v = Av + shift * v
        v /= v.max()
        if not np.all(v > 0):
            raise NonIrreducible("power iteration produced a vanishing component")
    Av = A @ v
    ratios = Av / v
    raise NonConvergence(
        f"power iteration did not converge in {max_iter} steps (CW gap {ratios.max() - ratios.min():.3e})"
    )


class RpfSolution(NamedTuple):
    pressure: float
    psi: np.ndarray
    nu: np.ndarray


def rpf_solve(matrix: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> RpfSolution:
    """Pressure and Perron data: M psi = e^P psi, nu^T M = e^P nu^T, sum(nu) = 1, nu.psi = 1."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("transfer matrix must be square")
    if np.any(M < 0):
        raise ValueError("transfer matrix must be nonnegative")
    if not reachability(M > 0).all():
        raise NonIrreducible("transfer matrix is reducible")
    lam_r, psi = _perron_vector(M, tol, max_iter)
    lam_l, nu = _perron_vector(M.T, tol, max_iter)
    if abs(lam_r - lam_l) > 10 * tol * lam_r:
        raise NonConvergence(f"left/right Perron values disagree: {lam_r} vs {lam_l}")
    nu = nu / nu.sum()
    psi = psi / float(nu @ psi)
    return RpfSolution(float(np.log(lam_r)), psi, nu)


def perron_residuals(M: np.ndarray, sol: RpfSolution) -> tuple[float, float]:
    lam = np.exp(sol.pressure)
    right = float(np.max(np.abs(M @ sol.psi - lam * sol.psi)) / lam)
    left = float(np.max(np.abs(sol.nu @ M - lam * sol.nu)) / lam)
    return right, left


# -- the Gibbs measure as a Markov chain ----------------------------------------


@dataclass(frozen=True, eq=False)
class GibbsModel:
    """Invariant Gibbs measure of a finite-range potential.

    ``kernel`` is the forward-time transition matrix between consecutive
    windows of ``r - 1`` symbols; ``backward_kernel`` is the Doob transform of
    the transfer matrix itself (which runs right to left).
    """

    sft: Sft
    range: int
    states: list
    transfer: np.ndarray
    pressure: float
    psi: np.ndarray
    nu: np.ndarray
    kernel: np.ndarray
    stationary: np.ndarray
    rho: float = 0.5
    potential: Potential | None = field(default=None, repr=False)

    def __post_init__(self):
        k = self.sft.symbol_count
        r1 = self.range - 1
        codes = np.array([_code(s, k) for s in self.states], dtype=np.int64)
        lookup = np.full(k**r1, -1, dtype=np.int64)
        lookup[codes] = np.arange(len(self.states))
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "last_symbol", np.array([s[-1] for s in self.states], dtype=np.int64))
        object.__setattr__(self, "first_symbol", np.array([s[0] for s in self.states], dtype=np.int64))
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "log_kernel", np.log(self.kernel))
            object.__setattr__(self, "log_stationary", np.log(self.stationary))

    @property
    def symbol_count(self) -> int:
        return self.sft.symbol_count

    @property
    def order(self) -> int:
        return self.range - 1

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def backward_kernel(self) -> np.ndarray:
        lam = np.exp(self.pressure)
        return self.transfer * self.psi[None, :] / (lam * self.psi[:, None])

    def state_index(self, window) -> int:
        w = tuple(int(s) for s in window)
        if len(w) != self.order:
            raise ValueError(f"state windows have length {self.order}")
        if any(not 0 <= s < self.symbol_count for s in w):
            raise DisallowedWord(f"{w} is not a state")
        i = int(self._lookup[_code(w, self.symbol_count)])
        if i < 0:
            raise DisallowedWord(f"{w} is not an allowed state")
        return i

    def state_indices(self, words: np.ndarray) -> np.ndarray:
        """Vectorized: rows of ``words`` (length r-1) -> state indices (-1 if disallowed)."""
        words = np.asarray(words, dtype=np.int64)
        k = self.symbol_count
        code = np.zeros(words.shape[:-1], dtype=np.int64)
        for j in range(words.shape[-1]):
            code = code * k + words[..., j]
        return self._lookup[code]

    def path_states(self, path) -> np.ndarray:
        """State index at each position p >= r-1 (1-based) of a symbol path."""
        path = np.asarray(path, dtype=np.int64)
        r1 = self.order
        windows = np.lib.stride_tricks.sliding_window_view(path, r1)
        return self.state_indices(windows)

    def is_iid(self, tol: float = 1e-12) -> bool:
        """True when consecutive symbols are independent under the measure."""
        if self.order != 1:
            return False
        return bool(np.all(np.abs(self.kernel - self.stationary[None, :]) <= tol))

    def symbol_marginal(self) -> np.ndarray:
        out = np.zeros(self.symbol_count)
        np.add.at(out, self.last_symbol, self.stationary)
        return out

    def summary(self) -> dict:
        right, left = perron_residuals(self.transfer, RpfSolution(self.pressure, self.psi, self.nu))
        return {
            "symbols": self.symbol_count,
            "range": self.range,
            "states": self.n_states,
            "pressure": self.pressure,
            "residual_right": right,
            "residual_left": left,
            "kernel_row_error": float(np.max(np.abs(self.kernel.sum(axis=1) - 1.0))),
            "stationarity_error": float(np.max(np.abs(self.stationary @ self.kernel - self.stationary))),
        }


def _code(word, k: int) -> int:
    c = 0
    for s in word:
        c = c * k + int(s)
    return c


def _kernel_from_eigendata(M: np.ndarray, sol: RpfSolution) -> tuple[np.ndarray, np.ndarray]:
    lam = np.exp(sol.pressure)
    # forward chain: K[s, s'] = M[s', s] nu(s') / (lam nu(s))
    K = M.T * sol.nu[None, :] / (lam * sol.nu[:, None])
    K /= K.sum(axis=1, keepdims=True)
    pi = sol.nu * sol.psi
    pi = pi / pi.sum()
    return K, pi


def build_gibbs(
    sft: Sft, potential: Potential, tol: float = 1e-12, max_iter: int = 100_000
) -> GibbsModel:
    validate(sft)
    if not is_transitive(sft):
        raise NonIrreducible("the subshift is not topologically transitive")
    states, M = transfer_matrix(sft, potential)
    sol = rpf_solve(M, tol, max_iter)
    return _assemble(sft, potential, states, M, sol)


def _assemble(sft, potential, states, M, sol) -> GibbsModel:
    K, pi = _kernel_from_eigendata(M, sol)
    return GibbsModel(
        sft=sft,
        range=potential.lifted().range,
        states=states,
        transfer=M,
        pressure=sol.pressure,
        psi=sol.psi,
        nu=sol.nu,
        kernel=K,
        stationary=pi,
        rho=potential.rho,
        potential=potential,
    )


def content_hash(sft: Sft, potential: Potential, tol: float) -> str:
    payload = json.dumps(
        {"sft": sft.to_json(), "potential": potential.to_json(), "tol": tol}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def cache_dir_default() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "gibbscp"))


def solve_cached(
    sft: Sft,
    potential: Potential,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    cache_dir: str | Path | None = None,
) -> tuple[GibbsModel, bool]:
    """Build the model, reusing eigendata cached on disk when it re-verifies.

    Returns ``(model, cache_hit)``.
    """
    validate(sft)
    if not is_transitive(sft):
        raise NonIrreducible("the subshift is not topologically transitive")
    cache_dir = Path(cache_dir) if cache_dir is not None else cache_dir_default()
    key = content_hash(sft, potential, tol)
    path = cache_dir / f"{key}.json"
    states, M = transfer_matrix(sft, potential)
    if path.exists():
        try:
            data = json.loads(path.read_text())
            sol = RpfSolution(float(data["pressure"]), np.array(data["psi"]), np.array(data["nu"]))
            right, left = perron_residuals(M, sol)
            if sol.psi.shape == (len(states),) and max(right, left) <= tol:
                return _assemble(sft, potential, states, M, sol), True
            log.warning("cached eigendata %s failed re-verification; recomputing", path.name)
        except (OSError, ValueError, KeyError) as exc:
            log.warning("unreadable cache entry %s (%s); recomputing", path.name, exc)
    sol = rpf_solve(M, tol, max_iter)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(
        json.dumps({"pressure": sol.pressure, "psi": sol.psi.tolist(), "nu": sol.nu.tolist()})
    )
    tmp.replace(path)
    return _assemble(sft, potential, states, M, sol), False


# -- cylinder measures -----------------------------------------------------------


def gibbs_cylinder(model: GibbsModel, a) -> float:
    """mu([a]) for an allowed word ``a``."""
    a = model.sft.check_word(a)
    if not a:
        raise ValueError("cylinder word must be nonempty")
    r1 = model.order
    if len(a) < r1:
        ext = [s for s in model.states if s[: len(a)] == a]
        return float(sum(model.stationary[model.state_index(s)] for s in ext))
    idx = [model.state_index(a[i : i + r1]) for i in range(len(a) - r1 + 1)]
    p = model.stationary[idx[0]]
    for u, v in zip(idx, idx[1:]):
        p *= model.kernel[u, v]
    return float(p)


def log_cylinders(model: GibbsModel, words: np.ndarray) -> np.ndarray:
    """Vectorized log mu([w]) for the rows of ``words`` (each of length >= r-1)."""
    words = np.asarray(words, dtype=np.int64)
    r1 = model.order
    if words.shape[1] < r1:
        raise ValueError("words must be at least r-1 symbols long")
    windows = np.lib.stride_tricks.sliding_window_view(words, r1, axis=1)
    idx = model.state_indices(windows)
    bad = (idx < 0).any(axis=1)
    idx = np.where(idx < 0, 0, idx)
    out = model.log_stationary[idx[:, 0]].copy()
    if idx.shape[1] > 1:
        out += model.log_kernel[idx[:, :-1], idx[:, 1:]].sum(axis=1)
    out[bad] = -np.inf
    return out


def cylinder_by_eigendata(model: GibbsModel, a) -> float:
    """mu([a]) = e^{-|a|P} sum_s nu(s) psi(head(a s)) exp(S_|a| phi(a s)); independent of the kernel.

    ``head`` is the first r-1 symbols; this is the conformality of nu applied
    |a| times to the density psi restricted to [a].
    """
    pot = model.potential.lifted()
    a = tuple(a)
    r1 = model.order
    total = 0.0
    for i, s in enumerate(model.states):
        seq = a + s
        if not model.sft.is_allowed(seq):
            continue
        head = model.state_index(seq[:r1])
        total += model.nu[i] * model.psi[head] * np.exp(pot.birkhoff_sum(seq, len(a)))
    return float(np.exp(-len(a) * model.pressure) * total)


# -- sampling ---------------------------------------------------------------------


def sample_path(model: GibbsModel, length: int, seed) -> np.ndarray:
    """A stationary sample of ``length`` symbols, deterministic in ``seed``."""
    return sample_paths(model, length, [seed])[0]


def sample_paths(model: GibbsModel, length: int, seeds) -> np.ndarray:
    """One path per seed; path i depends only on seeds[i]."""
    if length < 1:
        raise ValueError("length must be >= 1")
    r1 = model.order
    n_steps = max(length - r1, 0)
    U = np.stack([np.random.default_rng(s).random(n_steps + 1) for s in seeds])
    cum_pi = np.cumsum(model.stationary)
    cum_K = np.cumsum(model.kernel, axis=1)
    last = model.n_states - 1
    state = np.minimum(np.searchsorted(cum_pi, U[:, 0], side="right"), last)
    states = np.empty((len(seeds), n_steps + 1), dtype=np.int64)
    states[:, 0] = state
    for t in range(1, n_steps + 1):
        state = np.minimum((cum_K[state] <= U[:, t : t + 1]).sum(axis=1), last)
        states[:, t] = state
    first = np.array(model.states, dtype=np.int64)[states[:, 0]]
    rest = model.last_symbol[states[:, 1:]]
    return np.concatenate([first, rest], axis=1)[:, :length]


# -- Gibbs property ---------------------------------------------------------------


def _continuation(sft: Sft, word, length: int) -> tuple[int, ...]:
    """Lexicographically least allowed continuation by greedy smallest successor."""
    out = []
    cur = word[-1]
    for _ in range(length):
        cur = int(np.flatnonzero(sft.allowed[cur])[0])
        out.append(cur)
    return tuple(out)


def gibbs_ratio(model: GibbsModel, a) -> float:
    """mu([a]) / (e^{-|a| P} e^{S_|a| phi(a c)}) with c the fixed continuation."""
    pot = model.potential.lifted()
    a = model.sft.check_word(a)
    seq = a + _continuation(model.sft, a, pot.range - 1)
    return gibbs_cylinder(model, a) / np.exp(-len(a) * model.pressure + pot.birkhoff_sum(seq, len(a)))


def gibbs_bound_profile(model: GibbsModel, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Per length n = r..L, the min and max Gibbs ratio over all allowed words of length n.

    The log ratio is a sum of edge weights along the state path plus boundary
    terms, so the extremes over all words come from a max-plus / min-plus
    dynamic program over (first state, current state).
    """
    pot = model.potential.lifted()
    r = pot.range
    if L < r:
        raise ValueError("L must be at least the potential range")
    S = model.n_states
    P = model.pressure
    states = model.states
    # edge weight log K(s, s') - phi(w) + P for w = s + last(s')
    E = np.full((S, S), np.nan)
    for i, s in enumerate(states):
        for j, s2 in enumerate(states):
            if model.kernel[i, j] > 0:
                w = s + (s2[-1],)
                E[i, j] = np.log(model.kernel[i, j]) - pot.table[w] + P
    tail = np.empty(S)
    for j, s in enumerate(states):
        seq = s + _continuation(model.sft, s, r - 1)
        tail[j] = (r - 1) * P - pot.birkhoff_sum(seq, r - 1)
    hi = np.full((S, S), -np.inf)
    lo = np.full((S, S), np.inf)
    np.fill_diagonal(hi, model.log_stationary)
    np.fill_diagonal(lo, model.log_stationary)
    Ehi = np.where(np.isnan(E), -np.inf, E)
    Elo = np.where(np.isnan(E), np.inf, E)
    mins, maxs = [], []
    for n in range(r - 1 + 1, L + 1):
        hi = np.max(hi[:, :, None] + Ehi[None, :, :], axis=1)
        lo = np.min(lo[:, :, None] + Elo[None, :, :], axis=1)
        if n >= r:
            maxs.append(np.max(hi + tail[None, :]))
            mins.append(np.min(lo + tail[None, :]))
    return np.exp(np.array(mins)), np.exp(np.array(maxs))


def gibbs_bound(model: GibbsModel, L: int) -> tuple[float, float]:
    """(min, max) of the Gibbs ratio over all allowed words with r <= |a| <= L."""
    mins, maxs = gibbs_bound_profile(model, L)
    return float(mins.min()), float(maxs.max())


# -- memory loss --------------------------------------------------------------------


def query_given_state(model: GibbsModel, queries: np.ndarray) -> np.ndarray:
    """P(next symbols = query | current state) for every state and query row.

    Products of kernel entries along the state path; two pasts ending in the
    same state therefore get bitwise identical conditionals.
    """
    queries = np.asarray(queries, dtype=np.int64)
    r1 = model.order
    states = np.array(model.states, dtype=np.int64)
    out = np.empty((model.n_states, len(queries)))
    for j, q in enumerate(queries):
        seqs = np.concatenate([states, np.broadcast_to(q, (len(states), len(q)))], axis=1)
        windows = np.lib.stride_tricks.sliding_window_view(seqs, r1, axis=1)
        idx = model.state_indices(windows)
        valid = (idx >= 0).all(axis=1)
        idx = np.where(idx < 0, 0, idx)
        steps = model.kernel[idx[:, :-1], idx[:, 1:]]
        out[:, j] = np.where(valid, np.prod(steps, axis=1), 0.0)
    return out


def memory_loss(
    model: GibbsModel,
    depth_max: int,
    query_len: int,
    enumerate_cap: int = 10_000,
    seed: int = 0,
) -> np.ndarray:
    """gamma_d for d = 1..depth_max.

    gamma_d is the largest ``|P(A | p1) / P(A | p2) - 1|`` over query words A of
    length ``query_len`` and pasts p1, p2 of length d + r that agree in their
    last d symbols.  Pasts are enumerated when there are at most
    ``enumerate_cap`` of them; otherwise suffixes are drawn from the chain and
    every allowed prefix of length r is tried against each suffix.
    """
    if not 1 <= query_len <= 6 or not 1 <= depth_max <= 20:
        raise ValueError("memory_loss supports 1 <= query_len <= 6 and 1 <= depth_max <= 20")
    sft = model.sft
    r = model.range
    queries = np.array(enumerate_words(sft, query_len), dtype=np.int64)
    cond_by_state = query_given_state(model, queries)
    rng = np.random.default_rng(seed)
    prefixes = np.array(enumerate_words(sft, r), dtype=np.int64)
    out = np.zeros(depth_max)
    for d in range(1, depth_max + 1):
        T = d + r
        if count_words(sft, T) <= enumerate_cap:
            pasts = np.array(enumerate_words(sft, T), dtype=np.int64)
        else:
            n_suffix = max(1, enumerate_cap // len(prefixes))
            suffixes = sample_paths(model, d, rng.integers(0, 2**63, size=n_suffix))
            suffixes = np.unique(suffixes, axis=0)
            pasts = np.concatenate(
                [np.repeat(prefixes, len(suffixes), axis=0), np.tile(suffixes, (len(prefixes), 1))], axis=1
            )
            pasts = pasts[sft.allowed[pasts[:, r - 1], pasts[:, r]]]
        last = model.state_indices(pasts[:, T - model.order :])
        cond = cond_by_state[last]
        _, group = np.unique(pasts[:, T - d :], axis=0, return_inverse=True)
        group = group.ravel()
        n_groups = group.max() + 1
        hi = np.full((n_groups, len(queries)), -np.inf)
        lo = np.full((n_groups, len(queries)), np.inf)
        np.maximum.at(hi, group, cond)
        np.minimum.at(lo, group, cond)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(hi == 0, 1.0, hi / lo)
        out[d - 1] = float(np.max(ratio) - 1.0)
    return out


def distortion(potential: Potential, a, b, tail1, tail2) -> float:
    """|exp(S_|a| phi(a b tail1) - S_|a| phi(a b tail2)) - 1|: how much the far tail moves the weight of a."""
    pot = potential.lifted()
    head = tuple(a) + tuple(b)
    s1 = pot.birkhoff_sum(head + tuple(tail1), len(a))
    s2 = pot.birkhoff_sum(head + tuple(tail2), len(a))
    return float(abs(np.expm1(s1 - s2)))
