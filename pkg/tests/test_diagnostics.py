import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbscp.diagnostics import (
    TestFunctional,
    closed_form_limit,
    double_average_diagnostic,
    functional_series,
    genericity_check,
    in_intervals,
    interval_length,
    lag_gaps,
    mixing_diagnostic,
    pair_table_of,
    single_average_diagnostic,
)
from gibbscp.scenery import ObservationWindow, QueryCylinder, conditional_prob, derive_seeds
from gibbscp.sft import Sft
from gibbscp.thermo import Potential

from conftest import COUPLED, pair_chain


def enumerated_limit(chain, f, k=6):
    """Expectation of f at a step where the y-window is empty and k x-digits are observed.

    Enumerates the pair symbols at positions 1..D; with iid pairs the x-digits
    between D and k do not affect anything, so they are fixed to 0.
    """
    D = max([len(f.d)] + [len(q.b) for q in f.cylinders] + [1])
    px = pair_table_of(chain).sum(axis=1)
    p_c = float(np.prod([px[s] for s in f.c]))
    total = 0.0
    for w in itertools.product(range(6), repeat=D):
        weight = float(np.prod([chain.model.stationary[s] for s in w]))
        xs, ys = tuple(s // 3 for s in w), tuple(s % 3 for s in w)
        if ys[: len(f.d)] != f.d:
            continue
        window = ObservationWindow(xs + (0,) * (k - D), ())
        val = 1.0
        for q in f.cylinders:
            val *= conditional_prob(chain, window, q)
        total += weight * val
    return interval_length(f.intervals) * p_c * total


def test_intervals():
    assert interval_length([[0.1, 0.3], [0.5, 0.5], [0.6, 1.0]]) == pytest.approx(0.6)
    assert in_intervals(np.array([0.0, 0.1, 0.3, 0.99]), [[0.1, 0.3]]).tolist() == [False, True, False, False]
    with pytest.raises(ValueError):
        interval_length([[0.1, 0.5], [0.4, 0.6]])
    with pytest.raises(ValueError):
        interval_length([[0.5, 0.2]])


def test_empty_interval_gives_zero(coupled_chain):
    F, G = QueryCylinder((0,), ()), QueryCylinder((), (1,))
    rep = double_average_diagnostic(coupled_chain, F, G, [[0.3, 0.3]], 0.0, 2000, 4, 0)
    assert rep.target == 0.0 and rep.pooled_mean == 0.0 and rep.passed


def test_full_interval_empty_cylinders_give_one(coupled_chain):
    rep = single_average_diagnostic(coupled_chain, QueryCylinder(), [[0.0, 1.0]], 0.0, 2000, 4, 0)
    assert rep.pooled_mean == 1.0 and rep.target == 1.0 and rep.passed


def test_single_average_small_sample_warns(coupled_chain):
    rep = single_average_diagnostic(coupled_chain, QueryCylinder((1,), ()), [[0.0, 0.5]], 0.0, 200, 1, 0)
    assert rep.warnings


def test_double_average_matches_product_target(coupled_chain):
    F, G = QueryCylinder((0,), (1,)), QueryCylinder((1,), ())
    rep = double_average_diagnostic(coupled_chain, F, G, [[0.2, 0.7]], 0.0, 20_000, 16, 3)
    assert rep.target == pytest.approx(0.5 * 0.1 * 0.5)
    assert rep.passed, rep.z_score


functionals = st.builds(
    TestFunctional,
    intervals=st.sampled_from([((0.0, 1.0),), ((0.1, 0.6),), ((0.0, 0.2), (0.5, 0.9))]),
    c=st.lists(st.integers(0, 1), max_size=2).map(tuple),
    d=st.lists(st.integers(0, 2), max_size=2).map(tuple),
    cylinders=st.lists(
        st.tuples(st.lists(st.integers(0, 1), max_size=2).map(tuple), st.lists(st.integers(0, 2), max_size=2).map(tuple))
        .filter(lambda q: q[0] or q[1])
        .map(lambda q: QueryCylinder(*q)),
        max_size=2,
    ).map(tuple),
)


@given(functionals)
def test_closed_form_matches_enumeration(coupled_chain, f):
    table = pair_table_of(coupled_chain)
    assert closed_form_limit(table, f) == pytest.approx(enumerated_limit(coupled_chain, f), abs=1e-13)


def test_closed_form_uniform_is_volume():
    f = TestFunctional(((0.0, 0.5),), (1,), (2,), (QueryCylinder((0,), (1, 1)),))
    assert closed_form_limit(np.full((2, 3), 1 / 6), f) == pytest.approx(0.5 * 0.5 / 3 * (0.5 / 9))


def test_pair_table_none_for_markov():
    chain = pair_chain(Potential.random(Sft.full(6), 2, 0))
    assert pair_table_of(chain) is None


def test_genericity_coupled(coupled_chain):
    f = TestFunctional(((0.1, 0.6),), (1,), (2,), (QueryCylinder((0,), (1,)), QueryCylinder((1,), (2, 0))))
    rep = genericity_check(coupled_chain, f, 4000, 12, 7, prefix_lengths=[500, 1000, 2000, 4000])
    assert rep.target == pytest.approx(closed_form_limit(COUPLED, f))
    assert rep.passed, rep.z_score
    assert -0.8 < rep.dispersion_slope < -0.2


def test_constant_functional_has_no_mixing_gap(coupled_chain):
    f = TestFunctional(cylinders=(QueryCylinder((1,), (0,)),))
    one = TestFunctional()
    rep = mixing_diagnostic(coupled_chain, f, one, [0, 1, 5], 500, 4, 2)
    assert np.allclose(rep.gap_mean, 0.0, atol=1e-15)


def test_zero_lag_gap_is_variance(coupled_chain):
    f = TestFunctional(c=(1,))
    rep = mixing_diagnostic(coupled_chain, f, f, [0, 3], 2000, 8, 4)
    assert rep.gap_mean[0] >= 0
    assert rep.gap_mean[0] == pytest.approx(0.5 * 0.5, abs=0.02)
    assert abs(rep.gap_mean[1]) < 0.02


def test_lag_gaps_example():
    f = np.array([[1.0, 0.0, 1.0, 0.0]])
    # lag 1 compares (1, 0, 1) with (0, 1, 0)
    assert np.allclose(lag_gaps(f, f, [0, 1]), [[0.25, -2 / 9]])


def test_functional_series_reads_blocks(uniform_chain):
    sampled = uniform_chain.sample(60, derive_seeds(0, 2))
    f = TestFunctional(c=(1,), d=(2,))
    series = functional_series(uniform_chain, [f], sampled, 20)[0]
    ks = np.arange(1, 21)
    from gibbscp.encoding import l_k_array

    ls = l_k_array(0.0, ks, uniform_chain.params)
    expected = (sampled[:, ks] // 3 == 1) & (sampled[:, ls] % 3 == 2)
    assert np.array_equal(series, expected.astype(float))
