import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import poisson_interval
from qfatou.harmonic import (HarmonicDomain, disk_arc_measure, evaluate_many, halfplane_measure,
                             halfspace_poisson, harmonic_measure, sample_exits, single_layer_potential)
from qfatou.scene import Hyperplane, Sphere


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(0.05, 2), st.floats(-2, 1), st.floats(0.01, 2))
def test_halfplane_measure_matches_quadrature(x, t, a, w):
    assert halfplane_measure([[x, t]], a, a + w)[0] == pytest.approx(poisson_interval(x, t, a, a + w), abs=1e-8)


def test_disk_arc_from_centre_is_normalised_length():
    assert disk_arc_measure([[0.0, 0.0]], 0.3, 1.3)[0] == pytest.approx(1 / (2 * math.pi))


def test_halfspace_poisson_integrates_to_one():
    from scipy import integrate

    X = np.array([0.0, 0.0, 0.7])
    val, _ = integrate.dblquad(lambda r, th: halfspace_poisson(X, np.array([[r * math.cos(th), r * math.sin(th),
                                                                              0.0]]))[0] * r,
                               0, 2 * math.pi, 0, 200)
    assert val == pytest.approx(1.0, abs=5e-3)


def test_walks_reproduce_halfplane_measure():
    dom = HarmonicDomain(Hyperplane(window=(-1, 1)), h=1e-4)
    X = np.array([0.2, 0.5])
    est = harmonic_measure(dom, X, lambda Y: (Y[:, 0] >= 0) & (Y[:, 0] < 1), 20_000, 1)
    exact = halfplane_measure(X[None, :], 0, 1)[0]
    assert abs(est.value - exact) <= 4 * est.stderr
    assert est.capped_fraction < 1e-3


def test_walks_reproduce_disk_measure():
    dom = HarmonicDomain(Sphere(), h=1e-4)
    X = np.array([0.3, -0.2])
    est = harmonic_measure(dom, X, lambda Y: np.mod(np.arctan2(Y[:, 1], Y[:, 0]), 2 * math.pi) <= 2.0, 20_000, 2)
    assert abs(est.value - disk_arc_measure(X[None, :], 0.0, 2.0)[0]) <= 4 * est.stderr


def test_exit_samples_are_deterministic_and_prefix_consistent():
    dom = HarmonicDomain(Sphere(), h=1e-3)
    a = sample_exits(dom, [0.1, 0.1], 2048, seed=5)
    b = sample_exits(dom, [0.1, 0.1], 2048, seed=5)
    c = sample_exits(dom, [0.1, 0.1], 4096, seed=5)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.points, c.points[:2048])


def test_shared_walks_make_additivity_exact():
    dom = HarmonicDomain(Sphere(), h=1e-3)
    left = lambda Y: (Y[:, 0] < 0).astype(float)  # noqa: E731
    right = lambda Y: (Y[:, 0] >= 0).astype(float)  # noqa: E731
    one = lambda Y: np.ones(len(Y))  # noqa: E731
    V, _, _ = evaluate_many(dom, [[0.2, 0.3]], [left, right, one], 2048, 0)
    assert V[0, 0] + V[1, 0] == pytest.approx(V[2, 0], abs=1e-12)


def test_single_layer_far_field():
    r, d = 0.01, 1.0
    v = single_layer_potential([0, 0, d], [0, 0, 0], r, scale=1.0)
    assert v == pytest.approx(math.pi * r * r / (4 * math.pi) / d, rel=1e-3)
