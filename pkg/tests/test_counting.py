import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_chain
from qfatou.counting import (SampledSolution, carleson_average, counting_all, counting_function,
                             doubly_truncated_counting, longest_chain)
from qfatou.errors import ParameterError, PointOffBoundaryError

node_lists = st.lists(st.tuples(st.integers(0, 5), st.floats(-1, 1)), min_size=0, max_size=9)


@settings(max_examples=150, deadline=None)
@given(node_lists, st.floats(0.01, 1.5))
def test_longest_chain_matches_enumeration(nodes, eps):
    lv = [n[0] for n in nodes]
    val = [n[1] for n in nodes]
    assert longest_chain(lv, val, eps) == brute_force_chain(lv, val, eps)


@settings(max_examples=80, deadline=None)
@given(node_lists, st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_monotone_in_eps(nodes, eps, extra):
    lv = [n[0] for n in nodes]
    val = [n[1] for n in nodes]
    assert longest_chain(lv, val, eps + extra) <= longest_chain(lv, val, eps)


def test_path_witness_is_valid():
    lv = [0, 1, 2, 3, 3]
    val = [0.0, 1.0, 0.0, 1.0, 0.5]
    n, path = longest_chain(lv, val, 0.6, return_path=True)
    assert n == 3
    assert all(lv[a] < lv[b] and abs(val[a] - val[b]) > 0.6 for a, b in zip(path, path[1:]))


def _fixture(grid, rng, max_samples=2):
    vals = {}
    for Q in grid.cubes():
        vals[(int(Q.flat), 0)] = rng.uniform(-1, 1, rng.integers(1, max_samples + 1))
    return SampledSolution(vals), np.zeros(grid.n_cubes, dtype=np.int64)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_counting_function_matches_enumeration(hp_grid6, seed):
    rng = np.random.default_rng(seed)
    u, cat = _fixture(hp_grid6, rng)
    Q0 = hp_grid6.cube(2, 1)
    x = int(rng.integers(Q0.nodes.start, Q0.nodes.stop))
    lv, val = [], []
    for k, j in hp_grid6.chain_of_node(x, Q0.k):
        v = u.get(hp_grid6.cube(k, j).flat, 0)
        lv += [k] * len(v)
        val += list(v)
    assert counting_function(u, hp_grid6, cat, x, 0.3, Q0) == brute_force_chain(lv, val, 0.3)


def test_counting_all_matches_pointwise(hp_grid6):
    rng = np.random.default_rng(7)
    u, cat = _fixture(hp_grid6, rng, 3)
    Q0 = hp_grid6.root_cubes()[0]
    res = counting_all(u, hp_grid6, cat, 0.25, Q0, k_lasts=hp_grid6.generations)
    for kl, r in res.items():
        for x, n in zip(r.nodes[::7], r.N[::7]):
            assert n == counting_function(u, hp_grid6, cat, int(x), 0.25, Q0, k_last=kl)
    # truncation monotonicity
    Ns = [res[k].N for k in hp_grid6.generations]
    assert all(np.all(a <= b) for a, b in zip(Ns, Ns[1:]))


def test_doubly_truncated_is_bounded_by_full(hp_grid6):
    rng = np.random.default_rng(2)
    u, cat = _fixture(hp_grid6, rng, 2)
    Q0 = hp_grid6.root_cubes()[0]
    x = 17
    low = hp_grid6.cube(*hp_grid6.chain_of_node(x)[4])
    assert doubly_truncated_counting(u, hp_grid6, cat, x, 0.2, low, Q0) <= counting_function(
        u, hp_grid6, cat, x, 0.2, Q0)


def test_constant_solution_counts_zero(hp_grid6):
    vals = {(int(Q.flat), 0): np.full(3, 0.4) for Q in hp_grid6.cubes()}
    u = SampledSolution(vals)
    cat = np.zeros(hp_grid6.n_cubes, dtype=np.int64)
    res = counting_all(u, hp_grid6, cat, 0.01, hp_grid6.root_cubes()[0])
    assert res[hp_grid6.k_max].N.max() == 0


def test_errors(hp_grid6):
    u = SampledSolution({})
    with pytest.raises(ParameterError):
        longest_chain([0], [0.0], 0.0)
    with pytest.raises(PointOffBoundaryError):
        counting_function(u, hp_grid6, [], 10**9, 0.1, hp_grid6.root_cubes()[0])


def test_carleson_average_weights():
    assert carleson_average([1, 3], [0.25, 0.75]) == pytest.approx(2.5)
