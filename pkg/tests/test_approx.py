import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import disk_delta_integral, poisson_step_gradient_integral
from qfatou.approx import (Approximant, build_approximant, carleson_gradient_norm, cell_faces,
                           cone_gradient_functional, fubini_collapse_check)
from qfatou.corona import bilateral_corona
from qfatou.dyadic import build_grid
from qfatou.errors import ParameterError
from qfatou.harmonic import halfplane_solution
from qfatou.scene import Hyperplane, Sphere
from qfatou.whitney import CollarWarning, build_regions, whitney_decompose


@pytest.fixture(scope="module")
def setting():
    g = build_grid(Hyperplane(), depth=5)
    regions = build_regions(g, eta=1 / 16, K=16)
    corona = bilateral_corona(g)
    return g, regions, corona


@pytest.fixture(scope="module")
def box_cells():
    sc = Hyperplane()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollarWarning)
        cells = whitney_decompose(sc, (np.array([0.0, 0.0]), np.array([1.0, 1.0])), 1 / 64)
    return sc, cells, cell_faces(cells, sc)


def _phi(sc, cells, faces, values):
    dom = np.arange(len(cells))
    return Approximant(cells, sc, 0.1, dom, np.asarray(values, dtype=float), np.asarray(values, dtype=float),
                       [], faces)


def test_step_gradient_matches_closed_form():
    wide = Hyperplane(window=(-8.0, 8.0))
    u = lambda X: halfplane_solution(X, [(0.0, np.inf)])  # noqa: E731
    rep = carleson_gradient_norm(u, wide, [((0.0, 0.0), 1.0)], levels=10)
    assert rep.value == pytest.approx(poisson_step_gradient_integral(1.0), rel=1e-2)
    assert rep.value == pytest.approx(2 / math.pi**2, rel=1e-2)


def test_step_gradient_is_scale_invariant():
    wide = Hyperplane(window=(-8.0, 8.0))
    u = lambda X: halfplane_solution(X, [(0.0, np.inf)])  # noqa: E731
    rep = carleson_gradient_norm(u, wide, [((0.0, 0.0), r) for r in (1.0, 2.0, 4.0)])
    assert max(rep.per_ball) / min(rep.per_ball) - 1 <= 0.05


@pytest.mark.parametrize("x,r", [((0.7, 0.0), 0.2), ((0.9, 0.0), 0.2), ((0.0, 0.0), 0.5)])
def test_linear_function_on_disk(x, r):
    rep = carleson_gradient_norm(lambda X: X[:, 0], Sphere(), [(x, r)])
    assert rep.value == pytest.approx(disk_delta_integral(x, r), rel=3e-2)


def test_fd_ratio_validated():
    with pytest.raises(ParameterError):
        carleson_gradient_norm(lambda X: X[:, 0], Sphere(), [((0, 0), 0.5)], fd_ratio=0)


def test_faces_have_positive_area_and_one_owner(box_cells):
    _, cells, f = box_cells
    assert np.all(f.area > 0)
    assert np.all(cells.side[f.owner] <= cells.side[f.other])
    pairs = set(zip(np.minimum(f.owner, f.other), np.maximum(f.owner, f.other)))
    assert len(pairs) == len(f.owner)


def test_constant_phi_has_no_jumps(box_cells):
    sc, cells, f = box_cells
    phi = _phi(sc, cells, f, np.full(len(cells), 0.7))
    assert cone_gradient_functional(phi, np.arange(len(cells))) == 0.0


def test_vertical_step_matches_face_sum(box_cells):
    sc, cells, f = box_cells
    a = 0.37
    phi = _phi(sc, cells, f, np.where(cells.centers[:, 0] > 0.5, a, 0.0))
    # half-plane Whitney cells depend only on height, so cells meet x = 1/2 in full faces
    left = np.isclose(cells.hi[:, 0], 0.5)
    expect = a * np.sum(cells.side[left] / (0.5 * (cells.lo[left, 1] + cells.hi[left, 1])))
    assert cone_gradient_functional(phi, np.arange(len(cells))) == pytest.approx(expect, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_tv_additive_and_monotone(box_cells, seed):
    sc, cells, f = box_cells
    rng = np.random.default_rng(seed)
    phi = _phi(sc, cells, f, rng.normal(size=len(cells)))
    part = rng.integers(0, 3, len(cells))
    pieces = [np.nonzero(part == i)[0] for i in range(3)]
    total = cone_gradient_functional(phi, np.arange(len(cells)))
    parts = [cone_gradient_functional(phi, p) for p in pieces]
    assert abs(sum(parts) - total) <= 1e-12 * max(1.0, total)
    assert cone_gradient_functional(phi, np.r_[pieces[0], pieces[1]]) >= parts[0] - 1e-12


def test_functional_needs_defined_cells(box_cells):
    sc, cells, f = box_cells
    v = np.zeros(len(cells))
    v[0] = np.nan
    with pytest.raises(ParameterError):
        cone_gradient_functional(_phi(sc, cells, f, v), [0, 1])


def test_approximant_of_constant(setting):
    g, regions, corona = setting
    phi = build_approximant(lambda X: np.full(len(X), 0.25), corona, 0.1, g, regions)
    assert phi.deviation == pytest.approx(0.0, abs=1e-15)
    assert np.all(phi.jumps() == 0)


def test_approximant_refinement_does_not_hurt(setting):
    g, regions, corona = setting
    u = lambda X: halfplane_solution(X, [(0.0, 1.0)])  # noqa: E731
    phi = build_approximant(u, corona, 0.1, g, regions)
    assert phi.history[-1] <= phi.history[0]
    assert np.all(np.isfinite(phi.values[phi.domain]))
    assert all(v >= 0 for v in phi.carleson_sums([(g.cube(k, 0).center, g.cube(k, 0).ell) for k in g.generations]))


def test_fubini_swap_is_exact(setting):
    g, regions, corona = setting
    u = lambda X: halfplane_solution(X, [(0.0, 1.0)])  # noqa: E731
    phi = build_approximant(u, corona, 0.1, g, regions)
    rep = fubini_collapse_check(phi, g, regions, g.root_cubes()[0])
    assert rep.ratio == pytest.approx(1.0, abs=1e-9)
    assert rep.within
