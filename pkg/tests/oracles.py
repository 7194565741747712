"""Independent reference implementations used by the tests.

Nothing here imports the package's algorithms; each oracle recomputes a
quantity from its definition, by brute force or in closed form.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def brute_force_chain(levels, values, eps):
    """Longest eps-jump sequence over nodes of strictly increasing level, by enumeration.

    Returns the number of jumps (sequence length minus one, 0 for the empty
    or single-point sequence).
    """
    n = len(levels)
    best = 0
    for r in range(2, n + 1):
        for sub in itertools.combinations(range(n), r):
            lv = [levels[i] for i in sub]
            order = np.argsort(lv, kind="stable")
            seq = [sub[i] for i in order]
            if any(levels[a] >= levels[b] for a, b in zip(seq, seq[1:])):
                continue
            if all(abs(values[a] - values[b]) > eps for a, b in zip(seq, seq[1:])):
                best = max(best, r - 1)
    return best


def poisson_step_gradient_integral(r):
    """(1/r) * integral over the upper half-disk of radius r of |grad u|^2 t,
    u the Poisson extension of 1_{[0, inf)}: |grad u|^2 = 1 / (pi^2 rho^2).

    In polar coordinates the integrand is sin(theta) / pi^2."""
    val, _ = integrate.dblquad(lambda rho, th: math.sin(th) / math.pi**2, 0.0, math.pi, 0.0, r)
    return val / r


def disk_delta_integral(x, r):
    """(1/r) * integral over B(x, r) cap unit disk of (1 - |Y|) dY.

    On the circle of radius rho about the origin the ball occupies the arc
    |theta - arg x| <= arccos((rho^2 + |x|^2 - r^2) / (2 rho |x|)).
    """
    a = float(np.linalg.norm(np.asarray(x, dtype=float)))

    def arc(rho):
        if a == 0.0:
            return 2 * math.pi if rho <= r else 0.0
        c = (rho * rho + a * a - r * r) / (2 * rho * a)
        return 2 * math.acos(min(1.0, max(-1.0, c)))

    brk = [v for v in (abs(a - r), a + r) if 0 < v < 1]
    val, _ = integrate.quad(lambda rho: (1 - rho) * rho * arc(rho), 0.0, 1.0, points=brk or None, limit=200)
    return val / r


def halfplane_poisson_kernel(x, t, y):
    return t / (math.pi * ((x - y) ** 2 + t * t))


def poisson_interval(x, t, a, b):
    """Half-plane harmonic measure of [a, b] by quadrature of the Poisson kernel."""
    val, _ = integrate.quad(lambda y: halfplane_poisson_kernel(x, t, y), a, b, limit=200)
    return val


def point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    L2 = float(d @ d)
    s = 0.0 if L2 == 0 else min(max(float((p - a) @ d) / L2, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + s * d)))


def cantor_packing(depth):
    """Bad-cube packing sum of the four-corner Cantor grid when every cube is bad.

    Each generation partitions the root, so each contributes sigma(root).
    """
    return float(depth)
