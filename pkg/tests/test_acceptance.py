"""End-to-end acceptance criteria; each test records one PASS/FAIL line."""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from gibbscp.cli import main
from gibbscp.diagnostics import (
    TestFunctional,
    closed_form_limit,
    double_average_diagnostic,
    genericity_check,
    mixing_diagnostic,
    pair_table_of,
)
from gibbscp.encoding import AdicParams
from gibbscp.scenery import ObservationWindow, PairChain, QueryCylinder, conditional_prob, empirical_distribution, scenery_orbits
from gibbscp.sft import Sft
from gibbscp.thermo import Potential, build_gibbs, gibbs_bound, log_cylinders, memory_loss

from conftest import COUPLED, pair_chain

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS: list[str] = []


def record(label: str, ok: bool, detail: str, elapsed: float) -> None:
    line = f"ACCEPTANCE {label} {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.1f} s)"
    RESULTS.append(line)
    print(line)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start

    @property
    def now(self) -> float:
        return time.perf_counter() - self.start


def run_conserve(config: Path, out: Path) -> tuple[int, dict]:
    code = main(["conserve", "--config", str(config), "--out", str(out)])
    return code, json.loads((out / "conserve.json").read_text())["results"]


# 1 ------------------------------------------------------------------------------


def test_rpf_exactness():
    with Timer() as tm:
        golden = build_gibbs(Sft.golden_mean(), Potential.uniform(Sft.golden_mean()))
        root = max(r.real for r in np.roots([1, -1, -1]))
        err_g = abs(golden.pressure - math.log(root))
        errs = [abs(build_gibbs(Sft.full(q), Potential.uniform(Sft.full(q))).pressure - math.log(q)) for q in range(2, 9)]
    ok = err_g <= 1e-10 and max(errs) <= 1e-12 and tm.elapsed < 1.0
    record("1", ok, f"golden-mean error {err_g:.1e}, full-shift max error {max(errs):.1e}", tm.elapsed)
    assert ok


# 2 ------------------------------------------------------------------------------


def test_gibbs_property():
    changes = []
    with Timer() as tm:
        for sft in (Sft.golden_mean(), Sft.full(6)):
            for seed in range(20):
                model = build_gibbs(sft, Potential.random(sft, 2, seed))
                lo10, hi10 = gibbs_bound(model, 10)
                lo12, hi12 = gibbs_bound(model, 12)
                assert 0 < lo12 <= hi12 < np.inf
                changes.append(abs((hi12 / lo12) / (hi10 / lo10) - 1))
    ok = max(changes) < 0.05 and tm.elapsed < 30
    record("2", ok, f"40 potentials, max spread change L=10->12 {max(changes):.2e}", tm.elapsed)
    assert ok


# 3 ------------------------------------------------------------------------------


def completion_mass(model, xs, ys, m, n, T):
    """Sum of mu over every pair word of length T whose coordinates extend xs and ys."""
    choices = []
    for p in range(T):
        xo = [xs[p]] if p < len(xs) else range(m)
        yo = [ys[p]] if p < len(ys) else range(n)
        choices.append([x * n + y for x in xo for y in yo])
    words = np.array(list(itertools.product(*choices)), dtype=np.int64)
    return float(np.exp(log_cylinders(model, words)).sum())


def test_conditional_probability_oracle():
    rng = np.random.default_rng(2024)
    params = AdicParams.make(2, 3)
    models = [
        Potential.random(Sft.full(6), 1, 1),
        Potential.random(Sft.full(6), 2, 2),
        Potential.random(Sft.full(6), 3, 3, 0.7),
    ]
    allowed = np.ones((6, 6), bool)
    allowed[[0, 2, 5], [4, 2, 5]] = False
    models.append(Potential.random(Sft(allowed), 2, 4))
    chains = [PairChain(build_gibbs(p.sft, p), params) for p in models]
    worst, checked = 0.0, 0
    with Timer() as tm:
        while checked < 1000:
            chain = chains[checked % len(chains)]
            k = int(rng.integers(0, 7))
            l = int(rng.integers(0, k + 1))
            window = ObservationWindow(rng.integers(0, 2, k), rng.integers(0, 3, l))
            la, lb = int(rng.integers(0, 4)), int(rng.integers(0, 4))
            if la + lb == 0:
                continue
            query = QueryCylinder(rng.integers(0, 2, la), rng.integers(0, 3, lb))
            T = max(k + la, l + lb, chain.order)
            den = completion_mass(chain.model, window.x_obs, window.y_obs, 2, 3, T)
            if den == 0.0:
                continue
            num = completion_mass(chain.model, window.x_obs + query.a, window.y_obs + query.b, 2, 3, T)
            worst = max(worst, abs(conditional_prob(chain, window, query) - num / den))
            checked += 1
    ok = worst <= 1e-12 and tm.elapsed < 60
    record("3", ok, f"{checked} instances, worst error {worst:.1e}", tm.elapsed)
    assert ok


# 4 ------------------------------------------------------------------------------


def test_memory_loss_markov_exact_zero():
    with Timer() as tm:
        gammas = [memory_loss(build_gibbs(Sft.full(6), Potential.random(Sft.full(6), 2, s)), 12, 2) for s in range(5)]
        gammas += [memory_loss(build_gibbs(Sft.golden_mean(), Potential.random(Sft.golden_mean(), 2, 9)), 12, 3)]
    ok = all(np.all(g == 0.0) for g in gammas) and tm.elapsed < 60
    record("4a", ok, f"range-2 models, max gamma_d over d=1..12: {max(g.max() for g in gammas):.1e}", tm.elapsed)
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="a range-3 Gibbs measure is an order-2 Markov chain, so gamma_d is exactly 0 for d >= 2 and "
    "log gamma_d has no slope to fit over d = 2..12",
)
def test_memory_loss_range3_slope():
    with Timer() as tm:
        pot = Potential.random(Sft.full(6), 3, 5, 0.7)
        gamma = memory_loss(build_gibbs(pot.sft, pot), 12, 2, enumerate_cap=20_000)
        d = np.arange(2, 13)
        g = gamma[1:]
        positive = g > 0
        if positive.sum() >= 2:
            slope = float(np.polyfit(d[positive], np.log(g[positive]), 1)[0])
            ok = abs(slope - math.log(pot.rho)) <= 0.15 * abs(math.log(pot.rho))
            detail = f"slope {slope:.3f} vs log rho {math.log(pot.rho):.3f}"
        else:
            ok = False
            detail = f"gamma_1 = {gamma[0]:.3g}, gamma_d = 0 exactly for d = 2..12 ({int(positive.sum())} positive points): slope undefined"
    record("4b", ok, detail, tm.elapsed)
    assert ok


# 5 ------------------------------------------------------------------------------


@pytest.mark.slow
def test_double_ergodic_average():
    F, G = QueryCylinder((1,), (2,)), QueryCylinder((0,), (0,))
    details, ok = [], True
    with Timer() as tm:
        for name, pot in (
            ("uniform", Potential.uniform(Sft.full(6))),
            ("coupled", Potential.bernoulli(Sft.full(6), COUPLED.ravel())),
        ):
            rep = double_average_diagnostic(pair_chain(pot), F, G, [[0.2, 0.7]], 0.0, 100_000, 32, 11)
            ok &= rep.passed
            details.append(f"{name} z={rep.z_score:+.2f}")
    ok = bool(ok) and tm.elapsed < 300
    record("5", ok, ", ".join(details), tm.elapsed)
    assert ok


# 6 ------------------------------------------------------------------------------


@pytest.mark.slow
def test_genericity_closed_form(coupled_chain):
    f = TestFunctional(((0.1, 0.6),), (1,), (2,), (QueryCylinder((0,), (1,)), QueryCylinder((1,), (2, 0))))
    with Timer() as tm:
        rep = genericity_check(coupled_chain, f, 100_000, 32, 17, prefix_lengths=[1000, 10_000, 100_000])
    target = closed_form_limit(pair_table_of(coupled_chain), f)
    slope_ok = rep.dispersion_slope is not None and abs(rep.dispersion_slope + 0.5) <= 0.15
    ok = bool(rep.passed) and slope_ok and tm.elapsed < 600
    record("6", ok, f"target {target:.6f}, z={rep.z_score:+.2f}, dispersion slope {rep.dispersion_slope:.3f}", tm.elapsed)
    assert ok


# 7 ------------------------------------------------------------------------------


def test_angle_marginal_uniform(coupled_chain):
    with Timer() as tm:
        dist = empirical_distribution(scenery_orbits(coupled_chain, 5, 10_000, tests=[QueryCylinder((0,), (1,))]))
        ks = dist.ks_uniform()
    ok = len(dist) == 10_000 and ks <= 0.02 and tm.elapsed < 60
    record("7", ok, f"KS {ks:.4f} at {len(dist)} samples", tm.elapsed)
    assert ok


# 8 ------------------------------------------------------------------------------

REGULAR = [math.pi / 6, math.pi / 4, math.pi / 3, 1.0]


def _regular(rep):
    rows = {round(p["theta"], 9): p for p in rep["projections"]}
    return [rows[round(th, 9)] for th in REGULAR]


@pytest.mark.slow
def test_conservation_uniform(tmp_path):
    with Timer() as tm:
        code, rep = run_conserve(CONFIGS / "uniform.json", tmp_path)
    rows = _regular(rep)
    ok = (
        abs(rep["dim_mu"] - 2.0) <= 0.01
        and all(p["E_extrapolated"] >= 0.9 and p["gap"] <= 0.05 for p in rows)
        and code == 0
    )
    detail = f"dim_mu {rep['dim_mu']:.4f}, E " + " ".join(f"{p['E_extrapolated']:.3f}" for p in rows)
    record("8a", ok, detail + f", max gap {rep['max_gap']:.4f}", tm.elapsed)
    assert ok


@pytest.mark.slow
def test_conservation_bernoulli(tmp_path):
    with Timer() as tm:
        code, rep = run_conserve(CONFIGS / "bernoulli.json", tmp_path)
    rows = _regular(rep)
    ok_b = abs(rep["dim_mu"] - 1.469) <= 0.03 and all(p["dim_pi"] >= 0.95 for p in rows)
    record("8b", ok_b, f"dim_mu {rep['dim_mu']:.4f}, dim_pi " + " ".join(f"{p['dim_pi']:.3f}" for p in rows), tm.elapsed)
    (zero,) = [p for p in rep["projections"] if p["theta"] == 0.0]
    ok_c = zero["exceptional"] == "pi1" and zero["gap"] is None and abs(zero["marginal_dimension"] - 0.47) <= 0.03
    record("8c", ok_c, f"theta=0 {zero['exceptional']}, marginal dimension {zero['marginal_dimension']:.4f}", 0.0)
    assert ok_b and ok_c and code == 0


# 9 ------------------------------------------------------------------------------


def test_mixing_uniform(uniform_chain):
    f = TestFunctional(c=(1,), cylinders=(QueryCylinder((0,), (1,)),))
    f_star = TestFunctional(((0.0, 0.5),), d=(2,))
    with Timer() as tm:
        rep = mixing_diagnostic(uniform_chain, f, f_star, [0, 1, 5, 20], 20_000, 32, 23)
    i = rep.lags.index(20)
    gap, se = rep.gap_mean[i], rep.gap_stderr[i]
    ok = abs(gap) <= 3 * se and tm.elapsed < 120
    record("9", ok, f"lag 20 gap {gap:+.2e} with stderr {se:.2e}", tm.elapsed)
    assert ok


# 10 -----------------------------------------------------------------------------


def test_conserve_deterministic(tmp_path):
    with Timer() as tm:
        main(["conserve", "--config", str(CONFIGS / "gibbs_range2.json"), "--out", str(tmp_path / "a")])
        main(["conserve", "--config", str(CONFIGS / "gibbs_range2.json"), "--out", str(tmp_path / "b"), "--threads", "4"])
    names = ["conserve.json", "conserve.csv", "conserve.gp", "conserve.png"]
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = all(same)
    record("10", ok, f"{sum(same)}/{len(names)} report files byte-identical", tm.elapsed)
    assert ok
