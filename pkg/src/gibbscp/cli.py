"""Command line entry point: ``gibbscp <command> --config run.json``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, adic_params, config_hash, load_config, model_inputs, parse_cylinder, parse_functional
from .diagnostics import double_average_diagnostic, genericity_check, mixing_diagnostic, single_average_diagnostic
from .dimension import DimensionConfig, boundary_mass_check, conservation_check, marginal_dimension, measure_local_dimension
from .encoding import MultiplicativeDependence
from .plotting import angle_histogram_png, conservation_gnuplot, conservation_png, diagnostics_png
from .scenery import PairChain, default_test_set, derive_seeds, empirical_distribution, scenery_orbits
from .thermo import NonConvergence, NonIrreducible, content_hash, format_word, sample_paths, solve_cached

log = logging.getLogger("gibbscp")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
COMMANDS = ("solve", "sample", "scenery", "diagnostics", "dimension", "conserve", "all")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (format(v, ".12g") if isinstance(v, float) else v) for v in row])


class Run:
    """Shared state for one invocation: config, output directory, lazily solved model, timings."""

    def __init__(self, cfg: dict, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.hash = config_hash(cfg)
        self.timings: dict[str, float] = {}
        self._model = None
        out.mkdir(parents=True, exist_ok=True)

    def envelope(self, command: str, results) -> dict:
        return {"command": command, "config": self.cfg, "config_hash": self.hash, "version": __version__, "results": results}

    def timed(self, name: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    @property
    def model(self):
        if self._model is None:
            sft, pot = model_inputs(self.cfg)
            self._model, hit = self.timed("solve", solve_cached, sft, pot, self.cfg["tol"])
            self.timings["cache_hit"] = float(hit)
            log.info("eigendata %s", "loaded from cache" if hit else "computed")
        return self._model

    @property
    def chain(self) -> PairChain:
        params = adic_params(self.cfg)
        if self.model.symbol_count != params.m * params.n:
            raise ConfigError(
                f"sft: pair commands need {params.m * params.n} symbols for m={params.m}, n={params.n}, "
                f"got {self.model.symbol_count}"
            )
        return PairChain(self.model, params)


# -- commands -------------------------------------------------------------------


def cmd_solve(run: Run) -> int:
    model = run.model
    sft, pot = model_inputs(run.cfg)
    summary = model.summary()
    summary["eigendata_key"] = content_hash(sft, pot, run.cfg["tol"])
    summary["passed"] = bool(max(summary["residual_right"], summary["residual_left"]) <= run.cfg["tol"])
    write_json(run.out / "solve.json", run.envelope("solve", summary))
    print(json.dumps(_clean({"pressure": summary["pressure"], "states": summary["states"], "range": summary["range"]})))
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def cmd_sample(run: Run) -> int:
    opts = run.cfg["sample"]
    paths = run.timed(
        "sample", sample_paths, run.model, opts["length"], derive_seeds(run.cfg["seed"], opts["paths"])
    )
    write_csv(run.out / "samples.csv", ["path", "symbols"], [(i, format_word(p)) for i, p in enumerate(paths)])
    freq = np.bincount(paths.ravel(), minlength=run.model.symbol_count) / paths.size
    marginal = run.model.symbol_marginal()
    results = {
        "paths": opts["paths"],
        "length": opts["length"],
        "symbol_frequency": freq,
        "stationary_marginal": marginal,
        "max_deviation": float(np.abs(freq - marginal).max()),
    }
    write_json(run.out / "sample.json", run.envelope("sample", results))
    return EXIT_OK


def cmd_scenery(run: Run) -> int:
    chain = run.chain
    opts, sim = run.cfg["scenery"], run.cfg["sim"]
    tests = default_test_set(chain.m, chain.n, sim["test_depth"])
    orbits = run.timed(
        "scenery", scenery_orbits, chain, run.cfg["seed"], opts["N"], opts["paths"], 0.0, tests, sim["q"], run.threads
    )
    header = ["path", "k", "t"] + [q.label for q in tests]
    rows = (
        [i, int(k), float(t)] + [float(v) for v in vals]
        for i, o in enumerate(orbits)
        for k, t, vals in zip(o.steps, o.t, o.values)
    )
    write_csv(run.out / "scenery.csv", header, rows)
    cp = empirical_distribution(orbits)
    ks = cp.ks_uniform()
    results = {
        "samples": len(cp),
        "q": cp.q,
        "tests": [q.to_json() for q in tests],
        "ks_uniform": ks,
        "ks_max": opts["ks_max"],
        "feature_means": cp.values.mean(axis=0),
        "passed": bool(ks <= opts["ks_max"]),
    }
    write_json(run.out / "scenery.json", run.envelope("scenery", results))
    angle_histogram_png(cp.t, run.out / "scenery.png")
    return EXIT_OK if results["passed"] else EXIT_CHECK


def cmd_diagnostics(run: Run) -> int:
    chain = run.chain
    cfg, sim, d = run.cfg, run.cfg["sim"], run.cfg["diagnostics"]
    seed, N, paths = cfg["seed"], sim["N"], sim["paths"]
    intervals = [tuple(i) for i in d["intervals"]]
    F = parse_cylinder(d["F"], "diagnostics.F")
    G = parse_cylinder(d["G"], "diagnostics.G")
    single = run.timed("single_average", single_average_diagnostic, chain, F, intervals, d["t"], N, paths, seed)
    double = run.timed("double_average", double_average_diagnostic, chain, F, G, intervals, d["t"], N, paths, seed + 1)
    f = parse_functional(d["functional"], "diagnostics.functional")
    gen = run.timed(
        "genericity", genericity_check, chain, f, N, paths, seed + 2, d["prefix_lengths"], run.threads
    )
    mix_cfg = d["mixing"]
    f1 = parse_functional(mix_cfg["f"], "diagnostics.mixing.f")
    f2 = parse_functional(mix_cfg["f_star"], "diagnostics.mixing.f_star")
    mixing = run.timed("mixing", mixing_diagnostic, chain, f1, f2, mix_cfg["lags"], N, paths, seed + 3, run.threads)

    sig = d["sigmas"]
    checks = [
        ("single_average", single.pooled_mean, single.target, single.stderr, single.z_score, abs(single.z_score) <= sig),
        ("double_average", double.pooled_mean, double.target, double.stderr, double.z_score, abs(double.z_score) <= sig),
    ]
    if gen.target is not None:
        checks.append(("genericity", gen.pooled_mean, gen.target, gen.stderr, gen.z_score, abs(gen.z_score) <= sig))
    if gen.dispersion_slope is not None:
        ok = abs(gen.dispersion_slope - d["slope_target"]) <= d["slope_tolerance"]
        checks.append(("dispersion_slope", gen.dispersion_slope, d["slope_target"], d["slope_tolerance"], None, ok))
    last = int(np.argmax(mixing.lags))
    z_last = mixing.z_scores[last]
    checks.append(
        ("mixing_last_lag", mixing.gap_mean[last], 0.0, mixing.gap_stderr[last], z_last, abs(z_last) <= sig)
    )
    warnings = sorted(set(single.warnings + double.warnings + gen.warnings))
    for w in warnings:
        log.warning(w)
    failed = [c[0] for c in checks if not c[5]]
    results = {
        "single_average": single.to_json(),
        "double_average": double.to_json(),
        "genericity": gen.to_json(),
        "mixing": mixing.to_json(),
        "checks": {c[0]: bool(c[5]) for c in checks},
        "failed": failed,
        "warnings": warnings,
    }
    write_json(run.out / "diagnostics.json", run.envelope("diagnostics", results))
    write_csv(
        run.out / "diagnostics.csv",
        ["check", "value", "target", "stderr", "z", "passed"],
        [(c[0], float(c[1]), float(c[2]), float(c[3]), None if c[4] is None else float(c[4]), int(bool(c[5]))) for c in checks],
    )
    diagnostics_png(mixing.to_json(), gen.to_json(), run.out / "diagnostics.png")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


def _dimension_config(run: Run) -> DimensionConfig:
    d, sim = run.cfg["dimension"], run.cfg["sim"]
    return DimensionConfig(
        seed=run.cfg["seed"],
        feature_depth=sim["feature_depth"],
        q_list=tuple(run.cfg["q_list"]),
        threads=run.threads,
        **{k: d[k] for k in d},
    )


def cmd_dimension(run: Run) -> int:
    chain = run.chain
    dc = _dimension_config(run)
    dim, se = run.timed("local_dimension", measure_local_dimension, chain, dc.local_samples, dc.depth_K, dc.seed)
    mx = run.timed("marginal", marginal_dimension, chain, "x", dc.marginal_length, dc.marginal_samples, dc.seed + 2)
    my = run.timed("marginal", marginal_dimension, chain, "y", dc.marginal_length, dc.marginal_samples, dc.seed + 2)
    boundary = boundary_mass_check(chain, dc.boundary_depth)
    results = {
        "dim_mu": dim,
        "dim_mu_stderr": se,
        "depth_K": dc.depth_K,
        "marginal_x": {"dimension": mx[0], "stderr": mx[1]},
        "marginal_y": {"dimension": my[0], "stderr": my[1]},
        "boundary": vars(boundary),
    }
    write_json(run.out / "dimension.json", run.envelope("dimension", results))
    return EXIT_OK


def cmd_conserve(run: Run) -> int:
    chain = run.chain
    dc = _dimension_config(run)
    try:
        report = run.timed("conserve", conservation_check, chain, run.cfg["projections"], dc)
    except MultiplicativeDependence as exc:
        print(f"refusing to run: {exc} (the bases must satisfy log m / log n irrational)", file=sys.stderr)
        return EXIT_USAGE
    rep = report.to_json()
    write_json(run.out / "conserve.json", run.envelope("conserve", rep))
    qs = list(dc.q_list)
    header = ["theta", "kind"] + [f"E_{q}" for q in qs] + ["E_extrapolated", "direct_estimate", "marginal_dimension", "gap"]
    rows = []
    for p in rep["projections"]:
        kind = p["exceptional"] or "regular"
        E = p["E_q"] or [None] * len(qs)
        rows.append([p["theta"], kind] + E + [p["E_extrapolated"], p["direct_estimate"], p["marginal_dimension"], p["gap"]])
    write_csv(run.out / "conserve.csv", header, rows)
    conservation_gnuplot("conserve.csv", dc.tolerance, run.out / "conserve.gp")
    conservation_png(rep, run.out / "conserve.png")
    for p in rep["projections"]:
        if p["exceptional"]:
            print(f"theta={p['theta']:.6g}: exceptional ({p['exceptional']}), marginal dimension {p['marginal_dimension']:.4f}")
        else:
            print(f"theta={p['theta']:.6g}: dim_pi {p['dim_pi']:.4f}, gap {p['gap']:.4f}")
    print(f"dim_mu {rep['dim_mu']:.4f} +- {rep['dim_mu_stderr']:.2g}; max gap {rep['max_gap']:.4f}; "
          f"{'PASS' if rep['passed'] else 'FAIL'}")
    return EXIT_OK if rep["passed"] else EXIT_CHECK


HANDLERS = {
    "solve": cmd_solve,
    "sample": cmd_sample,
    "scenery": cmd_scenery,
    "diagnostics": cmd_diagnostics,
    "dimension": cmd_dimension,
    "conserve": cmd_conserve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbscp", description="Gibbs measures, CP-chain sceneries and projected dimension")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for Monte Carlo fan-out")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else cfg["sim"]["threads"]
        if threads < 1:
            raise ConfigError("--threads: must be >= 1")
        run = Run(cfg, Path(args.out or cfg["output_dir"]), threads)
        names = [c for c in COMMANDS if c != "all"] if args.command == "all" else [args.command]
        code = EXIT_OK
        for name in names:
            code = max(code, HANDLERS[name](run))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonIrreducible, NonConvergence) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    write_json(run.out / "timings.json", run.timings)
    return code


if __name__ == "__main__":
    sys.exit(main())
