import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbscp.encoding import AdicParams, l_k
from gibbscp.scenery import (
    DisallowedQuery,
    ObservationWindow,
    PairChain,
    QueryCylinder,
    ZeroProbabilityWindow,
    conditional_prob,
    cylinder_prob,
    deep_features,
    default_test_set,
    empirical_distribution,
    orbit_values,
    scenery_orbit,
    scenery_orbits,
)
from gibbscp.sft import Sft
from gibbscp.thermo import Potential, build_gibbs, gibbs_cylinder

from conftest import pair_chain

N3 = 3


def brute_mass(chain, xs, ys):
    """Sum of mu over all pair words agreeing with the x and y prefixes."""
    T = max(len(xs), len(ys), 1)
    total = 0.0
    for w in itertools.product(range(chain.model.symbol_count), repeat=T):
        if all(w[i] // N3 == v for i, v in enumerate(xs)) and all(w[i] % N3 == v for i, v in enumerate(ys)):
            if chain.model.sft.is_allowed(w):
                total += gibbs_cylinder(chain.model, w)
    return total


def brute_conditional(chain, window, query):
    den = brute_mass(chain, window.x_obs, window.y_obs)
    num = brute_mass(chain, window.x_obs + query.a, window.y_obs + query.b)
    return num / den


@pytest.fixture(scope="module")
def range3_chain():
    return pair_chain(Potential.random(Sft.full(6), 3, 21, 0.7))


@pytest.fixture(scope="module")
def restricted_chain():
    allowed = np.ones((6, 6), bool)
    allowed[5, 5] = allowed[0, 3] = False
    sft = Sft(allowed)
    return pair_chain(Potential.random(sft, 2, 4))


windows = st.integers(0, 3).flatmap(
    lambda k: st.tuples(
        st.lists(st.integers(0, 1), min_size=k, max_size=k),
        st.integers(0, k).flatmap(lambda l: st.lists(st.integers(0, 2), min_size=l, max_size=l)),
    )
)
queries = st.tuples(st.lists(st.integers(0, 1), max_size=1), st.lists(st.integers(0, 2), max_size=2)).filter(
    lambda q: q[0] or q[1]
)


@given(windows, queries)
def test_conditional_matches_brute_force(range3_chain, window, query):
    w = ObservationWindow(*window)
    q = QueryCylinder(*query)
    assert conditional_prob(range3_chain, w, q) == pytest.approx(brute_conditional(range3_chain, w, q), abs=1e-12)


@given(windows, queries)
def test_conditional_brute_force_restricted_sft(restricted_chain, window, query):
    w = ObservationWindow(*window)
    q = QueryCylinder(*query)
    try:
        got = conditional_prob(restricted_chain, w, q)
    except ZeroProbabilityWindow:
        assert brute_mass(restricted_chain, w.x_obs, w.y_obs) == 0.0
        return
    assert got == pytest.approx(brute_conditional(restricted_chain, w, q), abs=1e-12)


@given(windows)
def test_conditionals_normalize(range3_chain, window):
    w = ObservationWindow(*window)
    total_x = sum(conditional_prob(range3_chain, w, QueryCylinder(a, ())) for a in itertools.product(range(2), repeat=2))
    total_xy = sum(conditional_prob(range3_chain, w, QueryCylinder((a,), (b,))) for a in range(2) for b in range(3))
    assert total_x == pytest.approx(1.0, abs=1e-12)
    assert total_xy == pytest.approx(1.0, abs=1e-12)


@given(windows, st.integers(0, 1), st.integers(0, 1))
def test_conditionals_are_consistent(range3_chain, window, a1, a2):
    w = ObservationWindow(*window)
    parent = conditional_prob(range3_chain, w, QueryCylinder((a1,), ()))
    children = sum(conditional_prob(range3_chain, w, QueryCylinder((a1, a2), (b,))) for b in range(3))
    child = conditional_prob(range3_chain, w, QueryCylinder((a1, a2), ()))
    assert children == pytest.approx(child, abs=1e-12)
    assert child <= parent + 1e-12


def test_iid_product_closed_form(product_chain):
    # x ~ Bernoulli(0.9, 0.1), y uniform, independent: conditionals ignore the past
    w = ObservationWindow((1, 0, 0), (2,))
    assert conditional_prob(product_chain, w, QueryCylinder((0, 1), (1,))) == pytest.approx(0.9 * 0.1 / 3, abs=1e-14)
    assert cylinder_prob(product_chain, QueryCylinder((1,), (0, 0))) == pytest.approx(0.1 / 9, abs=1e-14)


def test_iid_coupled_closed_form(coupled_chain):
    from conftest import COUPLED

    p = COUPLED
    px = p.sum(axis=1)
    # window x = (0, 1), y = (2,): position 2 has x pinned and y free, query continues x at 3 and y at 2
    w = ObservationWindow((0, 1), (2,))
    q = QueryCylinder((1,), (0,))
    # y_2 = 0 given x_2 = 1, times P(x_3 = 1)
    expected = p[1, 0] / px[1] * px[1]
    assert conditional_prob(coupled_chain, w, q) == pytest.approx(expected, abs=1e-14)


def test_query_validation(uniform_chain):
    with pytest.raises(DisallowedQuery):
        conditional_prob(uniform_chain, ObservationWindow((), ()), QueryCylinder((), ()))
    with pytest.raises(DisallowedQuery):
        conditional_prob(uniform_chain, ObservationWindow((), ()), QueryCylinder((2,), ()))
    with pytest.raises(ValueError):
        ObservationWindow((0,), (0, 1))


def test_zero_probability_window(restricted_chain):
    # pair symbol 5 = (1, 2) cannot follow itself
    with pytest.raises(ZeroProbabilityWindow):
        conditional_prob(restricted_chain, ObservationWindow((1, 1), (2, 2)), QueryCylinder((0,), ()))


def test_default_test_set_size():
    assert len(default_test_set(2, 3, 2)) == (2 + 4) * (3 + 9)


def test_uniform_orbit_values_are_unconditioned(uniform_chain):
    tests = default_test_set(2, 3, 2)
    orbit = scenery_orbit(uniform_chain, 3, 200, tests=tests)
    expected = [2.0 ** -len(q.a) * 3.0 ** -len(q.b) for q in tests]
    assert np.allclose(orbit.values, np.array(expected)[None, :], atol=1e-13)


@pytest.mark.parametrize("fixture", ["range3_chain", "restricted_chain", "coupled_chain"])
def test_orbit_matches_direct_evaluation(fixture, request):
    chain = request.getfixturevalue(fixture)
    tests = [QueryCylinder((0,), (1,)), QueryCylinder((1, 0), ()), QueryCylinder((), (2, 0))]
    t0 = 0.37
    orbit = scenery_orbit(chain, 11, 300, t0=t0, tests=tests)
    for k in [1, 2, 3, 5, 8, 40, 299, 300]:
        w = ObservationWindow.from_path(orbit.path, k, l_k(t0, k, chain.params), 3)
        for j, q in enumerate(tests):
            assert orbit.values[k - 1, j] == pytest.approx(conditional_prob(chain, w, q), rel=1e-9, abs=1e-13)


def test_orbit_long_window_stays_exact(range3_chain):
    # exercises the checkpointed window product well past its rebuild interval
    tests = [QueryCylinder((1,), (0,))]
    orbit = scenery_orbit(range3_chain, 5, 700, tests=tests)
    for k in [256, 257, 513, 700]:
        w = ObservationWindow.from_path(orbit.path, k, l_k(0.0, k, range3_chain.params), 3)
        assert orbit.values[k - 1, 0] == pytest.approx(conditional_prob(range3_chain, w, tests[0]), rel=1e-9)


def test_coarser_step_subsamples_states(range3_chain):
    tests = [QueryCylinder((0,), (0,))]
    o1 = scenery_orbit(range3_chain, 8, 40, tests=tests, q=1)
    o2 = scenery_orbit(range3_chain, 8, 20, tests=tests, q=2)
    assert np.array_equal(o2.steps, o1.steps[1::2])
    # same seed, same path prefix, so the shared steps agree
    L = min(len(o1.path), len(o2.path))
    assert np.array_equal(o1.path[:L], o2.path[:L])
    assert np.allclose(o2.values, o1.values[1::2], rtol=1e-12)


def test_orbits_independent_of_thread_count(range3_chain):
    tests = [QueryCylinder((1,), (2,))]
    a = scenery_orbits(range3_chain, 2, 100, paths=20, tests=tests, threads=1)
    b = scenery_orbits(range3_chain, 2, 100, paths=20, tests=tests, threads=4)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))


def test_angle_marginal_uniform(coupled_chain):
    orbits = scenery_orbits(coupled_chain, 0, 10_000, tests=[QueryCylinder((0,), ())])
    dist = empirical_distribution(orbits)
    assert len(dist) == 10_000
    assert dist.ks_uniform() < 0.02


def test_deep_features_are_measures(coupled_chain):
    t, masses = deep_features(coupled_chain, 1, 30, 2, depth=3)
    assert masses.shape == (60, 8, 9)
    assert np.allclose(masses.sum(axis=(1, 2)), 1.0, atol=1e-12)
    assert t.shape == (60,)


def test_pair_chain_requires_pair_alphabet():
    with pytest.raises(ValueError):
        PairChain(build_gibbs(Sft.full(4), Potential.uniform(Sft.full(4))), AdicParams.make(2, 3))
