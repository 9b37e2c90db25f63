"""JSON run configuration: presets, validation and default materialization."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np

from .encoding import AdicParams
from .sft import DeadSymbol, Sft, validate
from .thermo import Potential, parse_word


class ConfigError(ValueError):
    """A configuration problem; the message names the offending field."""


DEFAULTS = {
    "adic": {"m": 2, "n": 3},
    "sft": "full",
    "potential": "uniform",
    "rho": 0.5,
    "tol": 1e-12,
    "sim": {"paths": 32, "N": 100_000, "q": 1, "test_depth": 2, "feature_depth": 4, "threads": 1},
    "sample": {"paths": 4, "length": 1000},
    "scenery": {"paths": 1, "N": 10_000, "ks_max": 0.02},
    "diagnostics": {
        "t": 0.0,
        "intervals": [[0.2, 0.7]],
        "F": {"a": "", "b": "0"},
        "G": {"a": "1", "b": ""},
        "sigmas": 3.0,
        "functional": {
            "intervals": [[0.1, 0.6]],
            "c": "1",
            "d": "2",
            "cylinders": [{"a": "0", "b": "1"}, {"a": "1", "b": "20"}],
        },
        "prefix_lengths": [1000, 10_000, 100_000],
        "slope_target": -0.5,
        "slope_tolerance": 0.15,
        "mixing": {"f": {"c": "1"}, "f_star": {"c": "0"}, "lags": [0, 1, 2, 5, 10, 20]},
    },
    "projections": [0.5235987755982988, 0.7853981633974483, 1.0471975511965976, 1.0],
    "q_list": [1, 2, 3, 4],
    "dimension": {
        "depth_K": 1000,
        "local_samples": 64,
        "cp_paths": 8,
        "cp_N": 250,
        "cp_stride": 3,
        "marginal_length": 10_000,
        "marginal_samples": 8,
        "direct_paths": 4,
        "direct_length": 20_000,
        "boundary_depth": 10,
        "tolerance": 0.05,
    },
    "output_dir": "gibbscp-out",
}

PRESET_SFTS = ("full", "golden_mean")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict) and key not in ("potential", "sft"):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _require(cond: bool, field: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def load_config(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return materialize(raw)


def materialize(raw: dict) -> dict:
    """Fill defaults and validate; the result is echoed verbatim into every report."""
    _require(isinstance(raw, dict), "config", "top level must be a JSON object")
    unknown = set(raw) - set(DEFAULTS) - {"seed"}
    _require(not unknown, "config", f"unknown fields {sorted(unknown)}")
    _require("seed" in raw, "seed", "a seed is required (no implicit entropy)")
    _require(isinstance(raw["seed"], int) and raw["seed"] >= 0, "seed", "must be a nonnegative integer")
    cfg = _merge(DEFAULTS, raw)
    m, n = cfg["adic"].get("m"), cfg["adic"].get("n")
    _require(isinstance(m, int) and m >= 2, "adic.m", "must be an integer >= 2")
    _require(isinstance(n, int) and n >= 2, "adic.n", "must be an integer >= 2")
    _require(m != n, "adic", "m and n must differ")
    sim = cfg["sim"]
    for key in ("paths", "N", "q", "test_depth", "feature_depth", "threads"):
        _require(isinstance(sim[key], int) and sim[key] >= 1, f"sim.{key}", "must be a positive integer")
    _require(isinstance(cfg["q_list"], list) and len(cfg["q_list"]) >= 2, "q_list", "needs at least two values")
    for q in cfg["q_list"]:
        _require(isinstance(q, int) and 1 <= q <= sim["feature_depth"], "q_list", f"q = {q} must lie in [1, sim.feature_depth]")
    _require(all(isinstance(t, (int, float)) for t in cfg["projections"]), "projections", "must be a list of angles")
    _require(0.0 < float(cfg["rho"]) < 1.0, "rho", "must lie in (0, 1)")
    model_inputs(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def adic_params(cfg: dict) -> AdicParams:
    return AdicParams.make(cfg["adic"]["m"], cfg["adic"]["n"], require_independent=False)


def _pair_permutation(m: int, n: int) -> np.ndarray:
    """Symbol map for swapped bases: pair (i, j) coded i*n + j becomes (j, i) coded j*m + i."""
    s = np.arange(m * n)
    return (s % n) * m + s // n


def build_sft(cfg: dict) -> Sft:
    spec = cfg["sft"]
    m, n = cfg["adic"]["m"], cfg["adic"]["n"]
    if isinstance(spec, str):
        _require(spec in PRESET_SFTS, "sft", f"unknown preset {spec!r}; choose from {PRESET_SFTS}")
        sft = Sft.full(m * n) if spec == "full" else Sft.golden_mean()
    else:
        _require(isinstance(spec, dict) and "allowed" in spec, "sft", "needs an 'allowed' matrix or a preset name")
        try:
            allowed = np.array(spec["allowed"], dtype=int)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sft.allowed: {exc}") from exc
        _require(allowed.ndim == 2 and allowed.shape[0] == allowed.shape[1], "sft.allowed", "must be square")
        _require(np.isin(allowed, (0, 1)).all(), "sft.allowed", "entries must be 0 or 1")
        k = spec.get("symbols", allowed.shape[0])
        _require(k == allowed.shape[0], "sft.symbols", f"{k} does not match the matrix side {allowed.shape[0]}")
        sft = Sft(allowed.astype(bool))
    try:
        validate(sft)
    except DeadSymbol as exc:
        raise ConfigError(f"sft.allowed: {exc}") from exc
    return sft


def _probabilities(value, field: str, size: int | None = None) -> np.ndarray:
    try:
        p = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{field}: {exc}") from exc
    _require(np.all(p > 0), field, "weights must be positive")
    if size is not None:
        _require(p.size == size, field, f"expected {size} weights, got {p.size}")
    return p


def build_potential(cfg: dict, raw_sft: Sft) -> Potential:
    """Potential in the caller's symbol order."""
    spec = cfg["potential"]
    m, n = cfg["adic"]["m"], cfg["adic"]["n"]
    rho = float(cfg["rho"])
    k = raw_sft.symbol_count
    try:
        if spec == "uniform" or spec == {"uniform": {}}:
            pot = Potential.uniform(raw_sft, rho)
        elif isinstance(spec, dict) and "bernoulli" in spec:
            pot = Potential.bernoulli(raw_sft, _probabilities(spec["bernoulli"], "potential.bernoulli", k), rho)
        elif isinstance(spec, dict) and "product" in spec:
            _require(k == m * n, "potential.product", f"needs the {m * n}-symbol pair alphabet")
            px = _probabilities(spec["product"].get("x"), "potential.product.x", m)
            py = _probabilities(spec["product"].get("y"), "potential.product.y", n)
            pot = Potential.bernoulli(raw_sft, np.outer(px, py).ravel(), rho)
        elif isinstance(spec, dict) and "pairs" in spec:
            _require(k == m * n, "potential.pairs", f"needs the {m * n}-symbol pair alphabet")
            table = _probabilities(spec["pairs"], "potential.pairs", m * n)
            _require(np.shape(spec["pairs"]) == (m, n), "potential.pairs", f"must be an {m} x {n} table")
            pot = Potential.bernoulli(raw_sft, table.ravel(), rho)
        elif isinstance(spec, dict) and "markov" in spec:
            P = np.asarray(spec["markov"], dtype=float)
            _require(P.shape == (k, k), "potential.markov", f"must be a {k} x {k} matrix")
            pot = Potential.markov(raw_sft, P, rho)
        elif isinstance(spec, dict) and "random_range2" in spec:
            opts = spec["random_range2"]
            _require(isinstance(opts.get("seed"), int), "potential.random_range2.seed", "integer required")
            pot = Potential.random(raw_sft, 2, opts["seed"], float(opts.get("amplitude", 1.0)), rho)
        elif isinstance(spec, dict) and "random" in spec:
            opts = spec["random"]
            _require(isinstance(opts.get("seed"), int), "potential.random.seed", "integer required")
            _require(isinstance(opts.get("range"), int) and opts["range"] >= 1, "potential.random.range", "integer >= 1")
            pot = Potential.random(raw_sft, opts["range"], opts["seed"], float(opts.get("amplitude", 1.0)), rho)
        elif isinstance(spec, dict) and "table" in spec:
            r = spec.get("range")
            _require(isinstance(r, int) and r >= 1, "potential.range", "integer >= 1 required")
            table = {}
            for word, value in spec["table"].items():
                try:
                    w = parse_word(word)
                except ValueError as exc:
                    raise ConfigError(f"potential.table[{word!r}]: not a digit string") from exc
                _require(len(w) == r, f"potential.table[{word!r}]", f"word length must equal range {r}")
                table[w] = value
            pot = Potential(raw_sft, r, table, rho)
        else:
            raise ConfigError(f"potential: unknown specification {spec!r}")
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"potential: {exc}") from exc
    return pot


def model_inputs(cfg: dict) -> tuple[Sft, Potential]:
    """Subshift and potential with pair symbols coded for the sorted bases m < n.

    Tables are written in the caller's (m, n) order; if the bases were given
    with m > n the pair symbols are relabelled (i, j) -> (j, i).
    """
    m, n = cfg["adic"]["m"], cfg["adic"]["n"]
    sft = build_sft(cfg)
    pot = build_potential(cfg, sft)
    if m < n or sft.symbol_count != m * n:
        return sft, pot
    perm = _pair_permutation(m, n)
    allowed = np.zeros_like(sft.allowed)
    allowed[np.ix_(perm, perm)] = sft.allowed
    swapped = Sft(allowed)
    table = {tuple(int(perm[s]) for s in w): v for w, v in pot.table.items()}
    return swapped, Potential(swapped, pot.range, table, pot.rho)


def parse_cylinder(spec: dict, field: str):
    from .scenery import QueryCylinder

    _require(isinstance(spec, dict), field, "must be an object with 'a' and 'b' digit strings")
    try:
        a = parse_word(spec.get("a", "")) if spec.get("a", "") else ()
        b = parse_word(spec.get("b", "")) if spec.get("b", "") else ()
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc
    return QueryCylinder(a, b)


def parse_functional(spec: dict, field: str):
    from .diagnostics import TestFunctional

    _require(isinstance(spec, dict), field, "must be an object")
    cyls = tuple(parse_cylinder(c, f"{field}.cylinders[{i}]") for i, c in enumerate(spec.get("cylinders", [])))
    try:
        return TestFunctional(
            tuple(tuple(i) for i in spec.get("intervals", [[0.0, 1.0]])),
            parse_word(spec["c"]) if spec.get("c") else (),
            parse_word(spec["d"]) if spec.get("d") else (),
            cyls,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{field}: {exc}") from exc
