import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import point_segment_distance
from qfatou.errors import ParameterError
from qfatou.scene import (FourCornerCantor, Hyperplane, KochCurve, LipschitzGraph, Sphere, corkscrew_point,
                          scene_from_dict, surface_measure, verify_adr)

coords = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(coords, coords)
def test_koch_distance_matches_brute_force(x, y):
    sc = KochCurve(3)
    ch = sc.chain()
    want = min(point_segment_distance((x, y), a, b) for a, b in zip(ch.a, ch.b))
    assert sc.distance(np.array([[x, y]]))[0] == pytest.approx(want, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.5, 1.5), st.floats(0.01, 3.0))
def test_hyperplane_is_distance_to_line(x, t):
    sc = Hyperplane()
    assert sc.distance([[x, t]])[0] == pytest.approx(t)
    assert sc.in_omega(np.array([[x, t]]))[0]
    assert not sc.in_omega(np.array([[x, -t]]))[0]


def test_box_distance_never_exceeds_point_distance():
    sc = LipschitzGraph(0.5)
    rng = np.random.default_rng(3)
    lo = rng.uniform(-1, 1, (50, 2))
    hi = lo + rng.uniform(0.01, 0.3, (50, 2))
    db = sc.box_distance(lo, hi)
    for corner in (lo, hi, 0.5 * (lo + hi)):
        assert np.all(db <= sc.distance(corner) + 1e-12)


def test_hyperplane_ball_measure_is_chord_length():
    sc = Hyperplane()
    assert sc.ball_measure(np.array([[0.5, 0.3]]), 0.5)[0] == pytest.approx(2 * math.sqrt(0.25 - 0.09))
    assert surface_measure(sc, [0.5, 0.0], 0.25) == pytest.approx(0.5)


def test_adr_ratios_on_graph_are_bounded():
    sc = LipschitzGraph(0.5)
    centres = [[x, sc.height(x)] for x in np.linspace(0.05, 0.95, 7)]
    rep = verify_adr(sc, centres, [0.01, 0.05, 0.2])
    # a graph of slope <= 1 carries between 2r and 2 sqrt(2) r inside B(x, r)
    assert rep.lower_constant >= 2 - 1e-6
    assert rep.upper_constant <= 2 * math.sqrt(2) + 1e-6


def test_cantor_mass_and_scaling():
    sc = FourCornerCantor(4)
    assert sc.total_measure() == pytest.approx(1 / math.sqrt(2))
    assert sc.ur_label is False


def test_corkscrew_point_clearance():
    sc = LipschitzGraph(0.5)
    x = np.array([0.5, sc.height(0.5)])
    X, c = corkscrew_point(sc, x, 0.25)
    assert c >= 0.05
    assert np.linalg.norm(X - x) <= 0.25 * (1 - c) + 1e-9
    assert sc.distance(X[None, :])[0] >= c * 0.25 - 1e-9


def test_scene_json_round_trip():
    sc = scene_from_dict({"kind": "lipschitz_graph", "params": {"slope": 0.05}})
    again = scene_from_dict(sc.to_json())
    P = np.array([[0.3, 0.2], [0.7, -0.1]])
    assert np.array_equal(sc.distance(P), again.distance(P))


def test_bad_scene_spec_is_rejected():
    with pytest.raises(ParameterError):
        scene_from_dict({"kind": "mobius"})
    with pytest.raises(ParameterError):
        LipschitzGraph(1.5)


def test_sphere_distance():
    sc = Sphere(3)
    assert sc.distance([[0.0, 0.0, 0.5]])[0] == pytest.approx(0.5)
