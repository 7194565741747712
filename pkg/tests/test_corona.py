import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from oracles import cantor_packing
from qfatou.corona import (CalibrationParams, StoppingRegime, augment_all, bilateral_corona, build_sawtooth,
                           check_coherency, construct_uQ, density_stopping, e_mask, flat_disk_potential,
                           flat_poles, sawtooth_cells, semi_coherent_subregime, verify_corona_hm, verify_packing)
from qfatou.dyadic import build_grid
from qfatou.errors import BracketViolationError, ParameterError
from qfatou.harmonic import HarmonicDomain, halfplane_measure, halfspace_poisson, single_layer_potential
from qfatou.scene import FourCornerCantor, Hyperplane, LipschitzGraph
from qfatou.whitney import build_regions


@pytest.fixture(scope="module")
def graph_corona(graph_grid6):
    return bilateral_corona(graph_grid6)


def test_hyperplane_is_one_regime(hp_grid6):
    c = bilateral_corona(hp_grid6)
    assert not c.bad
    assert len(c.regimes) == 1
    assert c.packing_constant == pytest.approx(1.0)


def test_cantor_is_all_bad():
    g = build_grid(FourCornerCantor(5), depth=5)
    c = bilateral_corona(g)
    assert not c.good and not c.regimes
    assert c.packing.constant == pytest.approx(cantor_packing(len(g.generations)))


def test_graph_regimes_are_coherent_and_flat(graph_grid6, graph_corona):
    c = graph_corona
    assert c.regimes
    for idx, S in enumerate(c.regimes):
        assert check_coherency(graph_grid6, S).coherent
        for q in S.cubes:
            assert c.labels[graph_grid6.cube(*q).flat] == idx
        for u, _, err in S.fits.values():
            assert abs(u[1] / u[0]) <= 0.05 + 1e-9
    assert c.packing_constant <= 1.5


def test_semi_coherent_subregime(graph_grid6, graph_corona):
    S = max(graph_corona.regimes, key=len)
    deeper = [q for q in S.cubes if q[0] == S.top[0] + 1]
    sub = semi_coherent_subregime(graph_grid6, S, deeper[:1])
    assert check_coherency(graph_grid6, sub).semi_coherent
    assert len(sub) < len(S) or len(deeper) == 0


def test_incoherent_family_is_flagged(hp_grid6):
    S = StoppingRegime((0, 0), [(0, 0), (2, 0)])
    rep = check_coherency(hp_grid6, S)
    assert not rep.interval_closed and rep.problems


@settings(max_examples=30, deadline=None)
@given(st.sets(st.integers(0, 62), max_size=20))
def test_packing_matches_direct_sum(hp_grid6, flats):
    fam = [(Q.k, Q.id) for Q in (hp_grid6.flat_to_cube(f) for f in sorted(flats))]
    rep = verify_packing(hp_grid6, fam, "all")
    for (k, j), r in rep.ratios.items():
        R = hp_grid6.cube(k, j)
        direct = sum(hp_grid6.cube(*q).sigma for q in fam
                     if q[0] >= k and hp_grid6.ancestor(q[0], q[1], k) == j) / R.sigma
        assert r == pytest.approx(direct)


def test_corona_rejects_bad_parameters(hp_grid6):
    with pytest.raises(ParameterError):
        bilateral_corona(hp_grid6, eta=1.5)
    with pytest.raises(ParameterError):
        bilateral_corona(hp_grid6, K=0.5)


def test_augmentation_and_sawtooth_on_hyperplane():
    g = build_grid(Hyperplane(), depth=5)
    c = bilateral_corona(g)
    cells = sawtooth_cells(g, 1 / 16, 16)
    regions = build_regions(g, cells, eta=1 / 16, K=16, strict=False)
    aug = augment_all(g, c, regions)
    assert not any(a.failed for a in aug.values())
    S = c.regimes[0]
    for sign in (1, -1):
        dom = build_sawtooth(g, S, aug, regions, sign)
        assert len(dom.cells)
        assert dom.max_harnack <= 3
        assert np.all(np.sign(cells.centers[dom.cells, 1]) == sign)


def test_corona_harmonic_measure_on_graph(graph_grid6, graph_corona):
    S = max(graph_corona.regimes, key=len)
    dom = HarmonicDomain(graph_grid6.scene, h=1e-4)
    rep = verify_corona_hm(graph_grid6, S, dom, n_walks=2048, seed=3)
    assert rep.pole_ok
    assert 0 < min(rep.ratios.values())


def test_density_stopping_against_closed_form(hp_grid6):
    R = hp_grid6.root_cubes()[0]
    p = np.array([0.2, 0.1])
    st_ = density_stopping(hp_grid6, R, p, delta=0.5, n_walks=4096, seed=0)
    dom_R = halfplane_measure(p[None, :], 0.0, 1.0)[0]

    def exact(q):
        a, b = hp_grid6.cube_segments(*q)
        Q = hp_grid6.cube(*q)
        return halfplane_measure(p[None, :], a[0, 0], b[0, 0])[0] / Q.sigma / dom_R

    assert st_.LD
    for q in st_.LD:
        assert exact(q) < 0.5 + 4 * st_.stderr[q] + 0.02
    for q, r in st_.ratio.items():
        assert abs(r - exact(q)) <= 4 * st_.stderr[q] + 0.02
    # LD cubes are maximal: no ancestor below R is low density
    for k, j in st_.LD:
        for kk in range(R.k + 1, k):
            assert (kk, hp_grid6.ancestor(k, j, kk)) not in st_.LD


def test_density_stopping_validates():
    g = build_grid(Hyperplane(), depth=3)
    R = g.root_cubes()[0]
    with pytest.raises(ParameterError):
        density_stopping(g, R, [0.5, 0.5], delta=1.2)
    with pytest.raises(ParameterError):
        density_stopping(g, R, [0.5, 0.5], A=0.5)


def test_e_mask_removes_stopped_nodes(hp_grid6):
    R = hp_grid6.root_cubes()[0]
    stop = [(2, 0), (3, 5)]
    m = e_mask(hp_grid6, (R.k, R.id), stop)
    assert m.sum() == R.nodes.stop - R.nodes.start - sum(
        len(range(*hp_grid6.cube(*q).nodes.indices(10**9))) for q in stop)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 200.0))
def test_calibration_brackets_hold(C):
    cal = CalibrationParams.from_constant(C)
    assert 2.0 ** -cal.M1 * C < cal.eps <= 2.0 ** (1 - cal.M1) * C
    assert cal.gamma < cal.a / 2
    assert cal.eps0 == pytest.approx(cal.c2 * cal.c3 / 16)


def test_calibration_rejects_out_of_bracket():
    with pytest.raises(BracketViolationError):
        CalibrationParams(2.0, 0.9, 0.01, 4, 8).check()


def test_flat_disk_potential_matches_quadrature():
    r = 0.3
    for s in (0.0, 0.1, 0.29, 0.5, 1.2):
        Y = np.array([[s, 0.0, 0.0]])
        ref = single_layer_potential(Y[0], [0, 0, 0], r, scale=1.0)
        assert flat_disk_potential(Y, [0, 0, 0], r)[0] == pytest.approx(ref, rel=1e-6)


def test_case_two_separation_in_three_dimensions():
    sc = Hyperplane(3, window=(0.0, 2**-0.5))
    cal = CalibrationParams.from_constant(2.0)
    ell = 2.0**-3
    x = np.array([0.3, 0.3, 0.0])
    p, s = flat_poles(x, ell, cal)
    dom = HarmonicDomain(sc, h=1e-5)
    inQ = lambda Y: np.all(np.abs(Y[:, :2] - x[:2]) <= ell / 2, axis=1)  # noqa: E731
    sol = construct_uQ(dom, (3, 0), x, p, s, inQ, inQ, cal, ell, n_walks=10_000, seed=0)
    assert sol.case == 2
    assert sol.separation >= cal.c2 - 3 * sol.stderr

    # u_Q(s) by quadrature of the Poisson kernel against the weight on Q
    def integrand(y2, y1):
        Y = np.array([[y1, y2, 0.0]])
        return halfspace_poisson(s, Y)[0] * sol.weight(Y)[0]

    h = 0.5 * cal.gamma * cal.eps * ell
    ref, _ = integrate.dblquad(integrand, x[0] - 20 * h, x[0] + 20 * h, x[1] - 20 * h, x[1] + 20 * h,
                               epsabs=1e-6)
    assert abs(sol.u_s - ref) <= 4 * sol.stderr + 5e-3


def test_case_two_needs_three_dimensions():
    sc = Hyperplane()
    cal = CalibrationParams.from_constant(2.0)
    x = np.array([0.5, 0.0])
    p, s = flat_poles(x, 0.25, cal)
    inQ = lambda Y: np.abs(Y[:, 0] - 0.5) <= 0.125  # noqa: E731
    sol = construct_uQ(HarmonicDomain(sc, h=1e-5), (2, 1), x, p, s, inQ, inQ, cal, 0.25, n_walks=2048,
                       seed=0, force_case=2)
    assert sol.case == 1 and sol.flags


def test_lipschitz_graph_scene_available():
    assert LipschitzGraph(0.05).ur_label
    assert math.isfinite(float(LipschitzGraph(0.05).distance(np.array([[0.3, 1.0]]))[0]))
