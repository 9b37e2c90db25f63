"""Dimension estimators for the torus pushforward of a pair chain and its projections."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoding import AdicParams, check_multiplicative_independence, l_k, MultiplicativeDependence
from .scenery import PairChain, _pins, deep_features, derive_seeds, masked_log_mass

log = logging.getLogger(__name__)

EXCLUSION_BAND = 1e-9


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else float("nan")
    return float(values.mean()), se


# -- local dimension of the pushforward ----------------------------------------------


def box_log_measure(chain: PairChain, paths: np.ndarray, K: int, t: float = 0.0) -> np.ndarray:
    """log of the measure of the depth-(K, l_K(t)) box around each path's encoded point."""
    l = l_k(t, K, chain.params)
    xpin, ypin = _pins(len(paths), K), _pins(len(paths), K)
    xpin[:, :K] = paths[:, :K] // chain.n
    ypin[:, :l] = paths[:, :l] % chain.n
    return masked_log_mass(chain, xpin, ypin)


def measure_local_dimension(chain: PairChain, num_samples: int, K: int, seed: int) -> tuple[float, float]:
    """Mean and standard error of log mu'(box_K) / log(m^-K) over sampled points."""
    if K < 1:
        raise ValueError("K must be >= 1")
    paths = chain.sample(K, derive_seeds(seed, num_samples))
    d = box_log_measure(chain, paths, K) / (-K * math.log(chain.m))
    return _mean_se(d)


def marginal_dimension(chain: PairChain, coordinate: str, length: int, num_samples: int, seed: int) -> tuple[float, float]:
    """Entropy rate of one coordinate's hidden-Markov marginal over log of its base."""
    if coordinate not in ("x", "y"):
        raise ValueError("coordinate must be 'x' or 'y'")
    paths = chain.sample(length, derive_seeds(seed, num_samples))
    free = _pins(num_samples, length)
    if coordinate == "x":
        logp = masked_log_mass(chain, paths // chain.n, free)
        base = chain.m
    else:
        logp = masked_log_mass(chain, free, paths % chain.n)
        base = chain.n
    return _mean_se(-logp / (length * math.log(base)))


# -- projected scenery measures --------------------------------------------------------


@dataclass(frozen=True)
class GridMeasure:
    """Masses on consecutive cells [ (offset + i) pitch, (offset + i + 1) pitch )."""

    offset: int
    masses: np.ndarray
    pitch: float

    @property
    def total(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True)
class Projection:
    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")

    @property
    def exceptional(self) -> str | None:
        """'pi1' or 'pi2' for the coordinate projections, else None."""
        r = math.remainder(self.theta, math.pi)
        if abs(r) <= EXCLUSION_BAND:
            return "pi1"
        if abs(abs(r) - math.pi / 2) <= EXCLUSION_BAND:
            return "pi2"
        return None


def sub_box_centers(params: AdicParams, t: float, depth: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Centers of the depth-(depth, l_depth(t)) sub-boxes of [0,1) x [0, n^t)."""
    l = l_k(t, depth, params)
    xs = (np.arange(params.m**depth) + 0.5) / params.m**depth
    ys = params.n**t * (np.arange(params.n**l) + 0.5) / params.n**l
    return xs, ys, l


def project_scenery_measure(masses: np.ndarray, t: float, theta: float, q: int, params: AdicParams, depth: int) -> GridMeasure:
    """Push the sub-box masses through x cos(theta) + y sin(theta) onto a grid of pitch m^-q.

    ``masses`` is (m**depth, n**Lb) with Lb >= l_depth(t); surplus trailing
    y-digits are summed out first.
    """
    xs, ys, l = sub_box_centers(params, t, depth)
    masses = np.asarray(masses, dtype=float)
    Lb = round(math.log(masses.shape[1], params.n))
    if Lb < l:
        raise ValueError(f"masses resolve {Lb} y-digits, need {l}")
    if Lb > l:
        masses = masses.reshape(len(xs), params.n**l, params.n ** (Lb - l)).sum(axis=2)
    pitch = float(params.m) ** -q
    proj = xs[:, None] * math.cos(theta) + ys[None, :] * math.sin(theta)
    cells = np.floor(proj / pitch).astype(np.int64).ravel()
    lo = int(cells.min())
    grid = np.bincount(cells - lo, weights=masses.ravel())
    return GridMeasure(lo, grid, pitch)


def r_entropy(grid: GridMeasure, r: float) -> float:
    """-sum mass(cell) log mass(neighbourhood of radius r around the cell)."""
    if r < grid.pitch * (1 - 1e-12):
        raise ValueError("r must be at least the grid pitch")
    w = int(round(r / grid.pitch))
    mass = grid.masses
    near = np.convolve(mass, np.ones(2 * w + 1))[w : w + len(mass)]
    keep = mass > 0
    return float(max(0.0, -np.sum(mass[keep] * np.log(near[keep]))))


def E_q_values(t: np.ndarray, masses: np.ndarray, theta: float, q: int, params: AdicParams, depth: int) -> np.ndarray:
    """Per-sample normalized entropy H_{m^-q}(projection) / (q log m)."""
    if not 1 <= q <= depth:
        raise ValueError(f"q = {q} needs feature depth >= q (have {depth})")
    pitch = float(params.m) ** -q
    return np.array(
        [r_entropy(project_scenery_measure(mm, tt, theta, q, params, depth), pitch) for tt, mm in zip(t, masses)]
    ) / (q * math.log(params.m))


def E_q_estimate(t: np.ndarray, masses: np.ndarray, theta: float, q: int, params: AdicParams, depth: int) -> tuple[float, float]:
    return _mean_se(E_q_values(t, masses, theta, q, params, depth))


@dataclass
class Extrapolation:
    E: float
    slope: float
    E_full: float
    residuals: list
    max_E: float


def _fit_inverse_q(qs: np.ndarray, values: np.ndarray) -> tuple[float, float, np.ndarray]:
    A = np.column_stack([np.ones_like(qs), -1.0 / qs])
    (E, c), *_ = np.linalg.lstsq(A, values, rcond=None)
    return float(E), float(c), values - A @ np.array([E, c])


def E_extrapolate(qs, values, tail: int = 2) -> Extrapolation:
    """Fit E_q = E - c / q and return the large-q limit E.

    The 1/q law is only the leading term: coarse grids add higher-order
    corrections, so ``E`` comes from the ``tail`` largest q values while
    ``E_full`` and ``residuals`` describe the fit over every q.
    """
    qs = np.asarray(qs, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(qs) < 2:
        raise ValueError("need at least two values of q")
    order = np.argsort(qs)
    qs, values = qs[order], values[order]
    tail = max(2, min(tail, len(qs)))
    E, c, _ = _fit_inverse_q(qs[-tail:], values[-tail:])
    E_full, _, resid = _fit_inverse_q(qs, values)
    return Extrapolation(E, c, E_full, resid.tolist(), float(values.max()))


def direct_projection_estimate(
    chain: PairChain, theta: float, paths: int, length: int, seed: int, scales=range(3, 10), digits: int = 40
) -> float:
    """Slope of histogram entropy of projected sample points against log(1/scale), scale 2^-j.

    Points are the encodings of the shifts of a few long sampled paths.
    """
    sampled = chain.sample(length + digits, derive_seeds(seed, paths))
    wx = float(chain.m) ** -np.arange(1, digits + 1)
    wy = float(chain.n) ** -np.arange(1, digits + 1)
    win_x = np.lib.stride_tricks.sliding_window_view(sampled // chain.n, digits, axis=1)[:, :length]
    win_y = np.lib.stride_tricks.sliding_window_view(sampled % chain.n, digits, axis=1)[:, :length]
    proj = (win_x @ wx) * math.cos(theta) + (win_y @ wy) * math.sin(theta)
    proj = proj.ravel()
    js = np.array(list(scales))
    H = []
    for j in js:
        _, counts = np.unique(np.floor(proj * 2.0**j).astype(np.int64), return_counts=True)
        p = counts / counts.sum()
        H.append(-np.sum(p * np.log(p)))
    return float(np.polyfit(js * math.log(2), H, 1)[0])


# -- boundary mass ------------------------------------------------------------------------


@dataclass
class BoundaryMass:
    depth: int
    x_zero_mass: float
    y_zero_mass: float
    degenerate: bool


def boundary_mass_check(chain: PairChain, depth: int, threshold: float = 0.5) -> BoundaryMass:
    """Measure of a run of ``depth`` zero digits in each coordinate (left edge of the unit square)."""
    free = _pins(1, depth)
    zeros = np.zeros((1, depth), dtype=np.int64)
    mx = float(np.exp(masked_log_mass(chain, zeros, free)[0]))
    my = float(np.exp(masked_log_mass(chain, free, zeros)[0]))
    degenerate = mx > threshold or my > threshold
    if degenerate:
        log.warning("the measure concentrates on zero digits (x %.3g, y %.3g at depth %d)", mx, my, depth)
    return BoundaryMass(depth, mx, my, degenerate)


# -- conservation harness -------------------------------------------------------------------


@dataclass
class DimensionConfig:
    seed: int = 0
    depth_K: int = 1000
    local_samples: int = 64
    feature_depth: int = 4
    cp_paths: int = 8
    cp_N: int = 250
    cp_stride: int = 3
    q_list: tuple = (1, 2, 3, 4)
    marginal_length: int = 10_000
    marginal_samples: int = 8
    direct_paths: int = 4
    direct_length: int = 20_000
    boundary_depth: int = 10
    tolerance: float = 0.05
    threads: int = 1


@dataclass
class ProjectionResult:
    theta: float
    exceptional: str | None
    E_q: list = field(default_factory=list)
    E_q_stderr: list = field(default_factory=list)
    E_extrapolated: float | None = None
    E_full_fit: float | None = None
    fit_residuals: list = field(default_factory=list)
    E_max: float | None = None
    direct_estimate: float | None = None
    dim_pi: float | None = None
    marginal_dimension: float | None = None
    marginal_stderr: float | None = None
    gap: float | None = None


@dataclass
class DimensionReport:
    m: int
    n: int
    dim_mu: float
    dim_mu_stderr: float
    target_dim_pi: float
    projections: list
    boundary: dict
    tolerance: float
    max_gap: float
    passed: bool
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def conservation_check(chain: PairChain, thetas, cfg: DimensionConfig | None = None) -> DimensionReport:
    """Compare the projected dimension at each angle with min(1, dim mu)."""
    cfg = cfg or DimensionConfig()
    params = chain.params
    if not check_multiplicative_independence(params.m, params.n):
        raise MultiplicativeDependence(
            f"log {params.m} / log {params.n} is rational; the conservation law needs independent bases"
        )
    dim_mu, dim_se = measure_local_dimension(chain, cfg.local_samples, cfg.depth_K, cfg.seed)
    target = min(1.0, dim_mu)
    projections = [Projection(float(th)) for th in thetas]
    regular = [p for p in projections if p.exceptional is None]
    features = None
    if regular:
        features = deep_features(
            chain, cfg.seed + 1, cfg.cp_N, cfg.cp_paths, cfg.feature_depth, cfg.cp_stride, cfg.threads
        )
    results = []
    for i, p in enumerate(projections):
        res = ProjectionResult(p.theta, p.exceptional)
        if p.exceptional:
            coord = "x" if p.exceptional == "pi1" else "y"
            res.marginal_dimension, res.marginal_stderr = marginal_dimension(
                chain, coord, cfg.marginal_length, cfg.marginal_samples, cfg.seed + 2
            )
        else:
            t, masses = features
            for q in cfg.q_list:
                mean, se = E_q_estimate(t, masses, p.theta, q, params, cfg.feature_depth)
                res.E_q.append(mean)
                res.E_q_stderr.append(se)
            fit = E_extrapolate(cfg.q_list, res.E_q)
            res.E_extrapolated, res.E_full_fit = fit.E, fit.E_full
            res.fit_residuals, res.E_max = fit.residuals, fit.max_E
            res.direct_estimate = direct_projection_estimate(
                chain, p.theta, cfg.direct_paths, cfg.direct_length, cfg.seed + 3 + i
            )
            res.dim_pi = float(np.clip(fit.E, 0.0, 1.0))
            res.gap = abs(res.dim_pi - target)
        results.append(res)
    gaps = [r.gap for r in results if r.gap is not None]
    max_gap = max(gaps) if gaps else 0.0
    boundary = boundary_mass_check(chain, cfg.boundary_depth)
    notes = ["projected dimension is a 1/q extrapolation of E_q; no convergence rate is known"]
    if boundary.degenerate:
        notes.append("measure concentrates on a digit boundary; box counts may be unreliable")
    return DimensionReport(
        params.m,
        params.n,
        dim_mu,
        dim_se,
        target,
        [asdict(r) for r in results],
        asdict(boundary),
        cfg.tolerance,
        max_gap,
        bool(max_gap <= cfg.tolerance),
        notes,
    )
