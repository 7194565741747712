import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfatou.dyadic import build_grid, dilate_nodes, verify_grid_axioms
from qfatou.scene import FourCornerCantor, Hyperplane


def test_axioms_on_half_plane(hp_grid6):
    rep = verify_grid_axioms(hp_grid6)
    assert rep.all_pass, rep.as_dict()
    assert rep.a0 >= 1 / 8


def test_depth_counts_generations(hp_grid6):
    assert hp_grid6.k_max - hp_grid6.k_min + 1 == 6


def test_hyperplane_cubes_are_dyadic_intervals(hp_grid6):
    g = hp_grid6
    for Q in g.cubes(3):
        assert Q.sigma == pytest.approx(2.0 ** -3)


def test_cantor_children_partition_parent():
    g = build_grid(FourCornerCantor(4), depth=6)
    for k in g.generations[:-1]:
        for j in range(g.count(k)):
            lo, hi = g.child_range(k - g.k_min, j)
            s = sum(g.cube(k + 1, c).sigma for c in range(lo, hi))
            assert s == pytest.approx(g.cube(k, j).sigma)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_chain_is_nested(seed):
    g = build_grid(Hyperplane(), depth=6)
    i = seed % len(g.points)
    chain = g.chain_of_node(i)
    for (k, j), (k2, j2) in zip(chain, chain[1:]):
        assert k2 == k + 1
        assert g.ancestor(k2, j2, k) == j
        assert g.cube(k2, j2).nodes.start >= g.cube(k, j).nodes.start


def test_dilate_contains_cube_and_grows(hp_grid6):
    Q = hp_grid6.cube(3, 2)
    m2 = dilate_nodes(hp_grid6, Q, 2)
    m3 = dilate_nodes(hp_grid6, Q, 3)
    assert m2[Q.nodes].all()
    assert np.all(m3 >= m2)
    assert m3.sum() > m2.sum()


def test_grid_is_deterministic():
    a = build_grid(Hyperplane(), depth=5, seed=3)
    b = build_grid(Hyperplane(), depth=5, seed=3)
    assert np.array_equal(a.points, b.points)
