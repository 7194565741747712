"""Boundary scenes: closed n-sets E with exact distance and measure oracles.

Every scene exposes the same small vocabulary:

* ``distance(X)``: delta(X) = dist(X, E), vectorised over rows of ``X``.
* ``walk_radius(X)``: a cheap lower bound for delta used by random walks.
* ``project(X)``: a nearest (or near-nearest, within the walk shell) point on E.
* ``box_distance(lo, hi)``: exact distance from closed boxes to E.
* ``ball_measure(X, r)``: sigma(E cap B(X, r)) with open balls.
* ``side(X)`` / ``in_omega(X)``: which complementary component a point sits in.

Planar scenes made of segments additionally expose a *chain*: the segments in
a fixed order with cumulative arclength ``tau``.  Dyadic cubes on such scenes
are tau-intervals, see :mod:`qfatou.dyadic`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSceneError,
    EmptySampleError,
    NoCorkscrewError,
    ParameterError,
    PointOffBoundaryError,
)
from .geometry import SegmentIndex, box_segment_distance, disk_segment_length

SCHEMA = "qfatou.scene/1"


def _rows(X, d):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[-1] != d:
        raise ParameterError(f"expected points with {d} coordinates, got shape {X.shape}")
    return X


def unit_ball_volume(m):
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


class BoundaryScene:
    """Common interface.  Subclasses fill in the geometry."""

    kind = "abstract"
    ur_label = True
    bounded = False
    measure_rtol = 1e-6
    tol = 1e-9

    def __init__(self, ambient_dim, params, omega):
        if ambient_dim < 2:
            raise ParameterError("ambient_dim must be at least 2")
        self.ambient_dim = int(ambient_dim)
        self.params = dict(params)
        self.omega = omega

    # -- oracles -----------------------------------------------------------
    def distance(self, X):
        raise NotImplementedError

    def walk_radius(self, X):
        return self.distance(X)

    def project(self, X):
        raise NotImplementedError

    def box_distance(self, lo, hi):
        raise NotImplementedError

    def ball_measure(self, X, r):
        raise NotImplementedError

    def side(self, X):
        """Integer label of the complementary component containing each row."""
        X = _rows(X, self.ambient_dim)
        return np.zeros(len(X), dtype=np.int64)

    def in_omega(self, X):
        X = _rows(X, self.ambient_dim)
        ok = self.distance(X) > 0
        if self.omega in ("both", "complement"):
            return ok
        return ok & (self.side(X) == self._omega_label())

    def _omega_label(self):
        return 0

    @property
    def diameter(self):
        return math.inf

    @property
    def extent(self):
        """Bounding box (lo, hi) of the gridded part of E."""
        raise NotImplementedError

    def far_field(self):
        """``(centre, radius)`` of a disk containing E, for bounded planar scenes."""
        return None

    def total_measure(self):
        """sigma of the gridded part of E."""
        raise NotImplementedError

    def on_boundary(self, x):
        return self.distance(x) <= self.tol

    def to_json(self):
        lo, hi = self.extent
        return {
            "schema": SCHEMA,
            "kind": self.kind,
            "params": self.params,
            "ambient_dim": self.ambient_dim,
            "extent": [list(map(float, lo)), list(map(float, hi))],
            "ur_label": bool(self.ur_label),
            "omega": self.omega,
        }


# ---------------------------------------------------------------------------
# hyperplane


class Hyperplane(BoundaryScene):
    """E = {x_d = 0} in R^d.  The gridded window is [w0, w1)^(d-1)."""

    kind = "hyperplane"

    def __init__(self, ambient_dim=2, omega="upper", window=(0.0, 1.0)):
        if omega not in ("upper", "lower", "both"):
            raise ParameterError(f"omega must be upper, lower or both, not {omega!r}")
        super().__init__(ambient_dim, {"window": list(window)}, omega)
        self.window = (float(window[0]), float(window[1]))
        if not self.window[1] > self.window[0]:
            raise ParameterError("empty window")

    def distance(self, X):
        X = _rows(X, self.ambient_dim)
        return np.abs(X[:, -1])

    def project(self, X):
        X = _rows(X, self.ambient_dim).copy()
        X[:, -1] = 0.0
        return X

    def box_distance(self, lo, hi):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        return np.maximum(np.maximum(lo[:, -1], -hi[:, -1]), 0.0)

    def ball_measure(self, X, r):
        X = _rows(X, self.ambient_dim)
        h = np.abs(X[:, -1])
        rho2 = np.maximum(np.asarray(r, dtype=float) ** 2 - h**2, 0.0)
        return unit_ball_volume(self.ambient_dim - 1) * rho2 ** ((self.ambient_dim - 1) / 2)

    def side(self, X):
        X = _rows(X, self.ambient_dim)
        return np.where(X[:, -1] > 0, 0, 1)

    def _omega_label(self):
        return 0 if self.omega == "upper" else 1

    def in_omega(self, X):
        if self.omega == "both":
            return self.distance(X) > 0
        return super().in_omega(X)

    @property
    def extent(self):
        m = self.ambient_dim - 1
        lo = np.r_[np.full(m, self.window[0]), 0.0]
        hi = np.r_[np.full(m, self.window[1]), 0.0]
        return lo, hi

    def total_measure(self):
        return (self.window[1] - self.window[0]) ** (self.ambient_dim - 1)

    def chain(self):
        if self.ambient_dim != 2:
            return None
        w0, w1 = self.window
        a = np.array([[w0, 0.0]])
        b = np.array([[w1, 0.0]])
        return Chain(a, b, tau0=w0, rays=[((w0, 0.0), (-1.0, 0.0)), ((w1, 0.0), (1.0, 0.0))])

    def segment_view(self):
        """The planar line as a :class:`SegmentScene` (window segment plus rays)."""
        if self.ambient_dim != 2:
            raise ParameterError("segment view exists only in the plane")
        if not hasattr(self, "_segview"):
            self._segview = SegmentScene(self.chain(), self.params, self.omega)
        return self._segview


# ---------------------------------------------------------------------------
# a unit sphere (interior domain), used for harmonic validation


class Sphere(BoundaryScene):
    kind = "sphere"
    bounded = True

    def __init__(self, ambient_dim=2, radius=1.0, omega="interior"):
        if omega not in ("interior", "exterior"):
            raise ParameterError("omega must be interior or exterior")
        super().__init__(ambient_dim, {"radius": float(radius)}, omega)
        self.radius = float(radius)

    def distance(self, X):
        X = _rows(X, self.ambient_dim)
        return np.abs(self.radius - np.linalg.norm(X, axis=1))

    def project(self, X):
        X = _rows(X, self.ambient_dim)
        n = np.linalg.norm(X, axis=1, keepdims=True)
        n = np.where(n > 0, n, 1.0)
        return self.radius * X / n

    def box_distance(self, lo, hi):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        g = np.maximum(np.maximum(lo, -hi), 0.0)
        near = np.linalg.norm(g, axis=1)
        far = np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)), axis=1)
        return np.where(far < self.radius, self.radius - far, np.maximum(near - self.radius, 0.0))

    def ball_measure(self, X, r):
        # spherical cap cut out by the ball; closed form in d = 2 and d = 3
        X = _rows(X, self.ambient_dim)
        R = self.radius
        s = np.linalg.norm(X, axis=1)
        r = np.broadcast_to(np.asarray(r, dtype=float), s.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (R**2 + s**2 - r**2) / (2 * R * s)
        c = np.where(s > 0, c, np.where(r > R, -1.0, 1.0))
        c = np.clip(c, -1.0, 1.0)
        if self.ambient_dim == 2:
            return 2 * R * np.arccos(c)
        if self.ambient_dim == 3:
            return 2 * math.pi * R**2 * (1 - c)
        raise ParameterError("sphere measure implemented for ambient dimension 2 and 3")

    def side(self, X):
        X = _rows(X, self.ambient_dim)
        return np.where(np.linalg.norm(X, axis=1) < self.radius, 0, 1)

    def _omega_label(self):
        return 0 if self.omega == "interior" else 1

    @property
    def diameter(self):
        return 2 * self.radius

    @property
    def extent(self):
        return np.full(self.ambient_dim, -self.radius), np.full(self.ambient_dim, self.radius)

    def total_measure(self):
        d = self.ambient_dim
        return d * unit_ball_volume(d) * self.radius ** (d - 1)

    def far_field(self):
        return np.zeros(self.ambient_dim), self.radius


# ---------------------------------------------------------------------------
# planar segment scenes


@dataclass
class Chain:
    """Ordered planar segments with cumulative arclength.

    ``rays`` are unbounded pieces of E outside the chain, each given by an
    origin and a unit direction.  They never belong to a dyadic cube.
    """

    a: np.ndarray
    b: np.ndarray
    tau0: float = 0.0
    rays: list = field(default_factory=list)

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=float)
        self.b = np.ascontiguousarray(self.b, dtype=float)
        self.length = np.hypot(*(self.b - self.a).T)
        self.tau = self.tau0 + np.r_[0.0, np.cumsum(self.length)]

    @property
    def tau_end(self):
        return float(self.tau[-1])

    def point_at(self, t):
        """Map arclength parameters to points on the chain."""
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.tau, t, side="right") - 1, 0, len(self.a) - 1)
        s = (t - self.tau[i]) / np.where(self.length[i] > 0, self.length[i], 1.0)
        s = np.clip(s, 0.0, 1.0)
        return self.a[i] + s[..., None] * (self.b[i] - self.a[i])

    def clip(self, t0, t1):
        """Sub-segments of the chain covering tau in [t0, t1]."""
        i0 = max(int(np.searchsorted(self.tau, t0, side="right")) - 1, 0)
        i1 = min(int(np.searchsorted(self.tau, t1, side="left")), len(self.a))
        idx = np.arange(i0, i1)
        if len(idx) == 0:
            return np.empty((0, 2)), np.empty((0, 2))
        lo = np.maximum(self.tau[idx], t0)
        hi = np.minimum(self.tau[idx + 1], t1)
        # tau values from different sums agree only to rounding; drop slivers
        keep = hi - lo > 1e-12 * max(1.0, abs(t0), abs(t1))
        idx, lo, hi = idx[keep], lo[keep], hi[keep]
        return self.point_at_segment(idx, lo), self.point_at_segment(idx, hi)

    def point_at_segment(self, idx, t):
        s = (t - self.tau[idx]) / np.where(self.length[idx] > 0, self.length[idx], 1.0)
        return self.a[idx] + s[:, None] * (self.b[idx] - self.a[idx])


def _ray_segments(rays, lo, hi, pad=1.0):
    """Replace rays by segments long enough to reach past the given boxes."""
    reach = float(np.max(np.abs(np.r_[np.ravel(lo), np.ravel(hi)]))) if np.size(lo) else 0.0
    out = []
    for o, u in rays:
        o = np.asarray(o, dtype=float)
        u = np.asarray(u, dtype=float)
        L = reach + float(np.abs(o).max()) + pad
        out.append((o, o + L * u))
    return out


class SegmentScene(BoundaryScene):
    """A planar scene that is a finite union of segments, possibly plus rays."""

    kind = "polyline"
    bounded = True

    def __init__(self, chain: Chain, params=None, omega="complement", ur_label=True):
        super().__init__(2, params or {}, omega)
        if len(chain.a) == 0:
            raise DegenerateSceneError("scene has no segments")
        self._chain = chain
        self.index = SegmentIndex(chain.a, chain.b)
        self.ur_label = ur_label
        self.bounded = not chain.rays
        pts = np.r_[chain.a, chain.b]
        self._lo = pts.min(axis=0)
        self._hi = pts.max(axis=0)
        if self.bounded and self.diameter <= 0:
            raise DegenerateSceneError("scene has zero diameter")

    def chain(self):
        return self._chain

    def segment_view(self):
        return self

    def _ray_distance(self, X):
        d = np.full(len(X), np.inf)
        for o, u in self._chain.rays:
            o = np.asarray(o, dtype=float)
            u = np.asarray(u, dtype=float)
            t = np.maximum((X - o) @ u, 0.0)
            d = np.minimum(d, np.hypot(*(X - o - t[:, None] * u).T))
        return d

    def distance(self, X):
        X = _rows(X, 2)
        d = self.index.distance(X)
        if self._chain.rays:
            d = np.minimum(d, self._ray_distance(X))
        return d

    def project(self, X):
        X = _rows(X, 2)
        d, i, t = self.index.nearest(X)
        P = self._chain.a[i] + t[:, None] * (self._chain.b[i] - self._chain.a[i])
        for o, u in self._chain.rays:
            o = np.asarray(o, dtype=float)
            u = np.asarray(u, dtype=float)
            s = np.maximum((X - o) @ u, 0.0)
            R = o + s[:, None] * u
            dr = np.hypot(*(X - R).T)
            better = dr < d
            P = np.where(better[:, None], R, P)
            d = np.minimum(d, dr)
        return P

    def box_distance(self, lo, hi):
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        d = self.index.box_distance(lo, hi)
        for o, e in _ray_segments(self._chain.rays, lo, hi):
            A = np.repeat(o[None, :], len(lo), axis=0)
            B = np.repeat(e[None, :], len(lo), axis=0)
            d = np.minimum(d, box_segment_distance(lo, hi, A, B))
        return d

    def ball_measure(self, X, r):
        X = _rows(X, 2)
        r = np.broadcast_to(np.asarray(r, dtype=float), (len(X),))
        out = np.zeros(len(X))
        lists = self.index.tree.query_ball_point(X, r + self.index.h)
        for i, cand in enumerate(lists):
            if not cand:
                continue
            cand = np.asarray(cand, dtype=np.int64)
            out[i] = disk_segment_length(X[i], r[i], self._chain.a[cand], self._chain.b[cand]).sum()
        for o, e in _ray_segments(self._chain.rays, X - r[:, None], X + r[:, None]):
            A = np.repeat(o[None, :], len(X), axis=0)
            B = np.repeat(e[None, :], len(X), axis=0)
            out += disk_segment_length(X, r, A, B)
        return out

    @property
    def diameter(self):
        if not self.bounded:
            return math.inf
        from scipy.spatial import ConvexHull
        from scipy.spatial.distance import pdist

        pts = np.unique(np.r_[self._chain.a, self._chain.b], axis=0)
        if len(pts) > 3:
            try:
                pts = pts[ConvexHull(pts).vertices]
            except Exception:  # collinear input
                pass
        return float(pdist(pts).max()) if len(pts) > 1 else 0.0

    @property
    def extent(self):
        c = self._chain
        lo = np.minimum(c.a.min(axis=0), c.b.min(axis=0))
        hi = np.maximum(c.a.max(axis=0), c.b.max(axis=0))
        return lo, hi

    def total_measure(self):
        return float(self._chain.length.sum())

    def far_field(self):
        if not self.bounded:
            return None
        lo, hi = self._lo, self._hi
        c = 0.5 * (lo + hi)
        pts = np.r_[self._chain.a, self._chain.b]
        return c, float(np.max(np.hypot(*(pts - c).T)))


class LipschitzGraph(SegmentScene):
    """Graph of f(x) = (s / w) (1 - cos(w x)) on [-W, W], flat outside.

    The profile has Lipschitz constant ``slope`` and is C^1 where it meets the
    flat rays.  Between ``-W`` and ``W`` it is sampled at ``resolution``
    vertices per unit length; the scene *is* that polyline, so every oracle is
    exact for it.  Arclength ``tau`` is measured from x = 0, and the gridded
    window is tau in [0, window).
    """

    kind = "lipschitz_graph"

    def __init__(self, slope=0.5, omega="upper", frequency=2 * math.pi, half_width=4.0,
                 resolution=400, window=1.0):
        if not 0 < slope <= 1:
            raise ParameterError("slope must lie in (0, 1]")
        if omega not in ("upper", "lower", "both"):
            raise ParameterError("omega must be upper, lower or both")
        self.slope = float(slope)
        self.frequency = float(frequency)
        self.half_width = float(half_width)
        n = int(round(2 * half_width * resolution))
        x = np.linspace(-half_width, half_width, n + 1)
        y = self.profile(x)
        pts = np.column_stack([x, y])
        a, b = pts[:-1], pts[1:]
        seg_len = np.hypot(*(b - a).T)
        # shift tau so that tau(0) = 0
        i0 = n // 2
        tau0 = -float(seg_len[:i0].sum())
        rays = [((x[0], y[0]), (-1.0, 0.0)), ((x[-1], y[-1]), (1.0, 0.0))]
        chain = Chain(a, b, tau0=tau0, rays=rays)
        params = {"slope": self.slope, "frequency": self.frequency, "half_width": self.half_width,
                  "resolution": resolution, "window": window}
        super().__init__(chain, params, omega, ur_label=True)
        self.window = float(window)
        self._x = x
        self._y = y
        self._lip = float(np.max(np.abs(np.diff(y) / np.diff(x))))

    def profile(self, x):
        x = np.asarray(x, dtype=float)
        w = self.frequency
        inside = np.abs(x) <= self.half_width
        return np.where(inside, self.slope / w * (1 - np.cos(w * x)), self.slope / w * (1 - np.cos(w * self.half_width)))

    def height(self, x):
        """Height of the polyline graph over ``x``."""
        return np.interp(x, self._x, self._y)

    def walk_radius(self, X):
        X = _rows(X, 2)
        return np.abs(X[:, 1] - self.height(X[:, 0])) / math.sqrt(1 + self._lip**2)

    def project_vertical(self, X):
        X = _rows(X, 2)
        return np.column_stack([X[:, 0], self.height(X[:, 0])])

    def side(self, X):
        X = _rows(X, 2)
        return np.where(X[:, 1] > self.height(X[:, 0]), 0, 1)

    def _omega_label(self):
        return 0 if self.omega == "upper" else 1

    def in_omega(self, X):
        if self.omega == "both":
            return self.distance(X) > 0
        return BoundaryScene.in_omega(self, X)

    @property
    def extent(self):
        c = self._chain
        p = c.point_at(np.linspace(0.0, self.window, 257))
        return p.min(axis=0), p.max(axis=0)

    def total_measure(self):
        return self.window

    def far_field(self):
        return None


class Polyline(SegmentScene):
    """An open or closed polygonal path; Omega is the whole complement."""

    kind = "polyline"

    def __init__(self, vertices, ur_label=True, scale_to_dyadic=False):
        v = np.asarray(vertices, dtype=float)
        if len(v) < 2:
            raise DegenerateSceneError("polyline needs at least two vertices")
        if scale_to_dyadic:
            v = _scale_length_to_power_of_two(v)
        super().__init__(Chain(v[:-1], v[1:]), {"vertices": v.tolist()}, "complement", ur_label)


def _scale_length_to_power_of_two(v):
    L = float(np.hypot(*np.diff(v, axis=0).T).sum())
    target = 2.0 ** round(math.log2(L))
    return v[0] + (v - v[0]) * (target / L)


def koch_vertices(level, angle_deg=60.0, chord=1.0):
    """Vertices of the level-``level`` Koch prefractal with spike angle ``angle_deg``.

    Each segment is replaced by four of relative length
    ``r = 1 / (2 (1 + cos angle))``, the middle pair tilted by +-angle.
    """
    th = math.radians(angle_deg)
    if not 0 < th < math.pi / 2:
        raise ParameterError("koch angle must lie strictly between 0 and 90 degrees")
    r = 1.0 / (2.0 * (1.0 + math.cos(th)))
    z = np.array([0.0 + 0.0j, chord + 0.0j])
    rot = complex(math.cos(th), math.sin(th))
    for _ in range(level):
        a, b = z[:-1], z[1:]
        d = b - a
        p1 = a + r * d
        p2 = p1 + r * d * rot
        p3 = b - r * d
        out = np.empty(4 * len(a) + 1, dtype=complex)
        out[0:-1:4] = a
        out[1::4] = p1
        out[2::4] = p2
        out[3::4] = p3
        out[-1] = z[-1]
        z = out
    return np.column_stack([z.real, z.imag])


class KochCurve(Polyline):
    """Koch prefractal, rescaled so its arclength is an exact power of two."""

    kind = "koch_curve"

    def __init__(self, level=4, angle=45.0):
        v = koch_vertices(level, angle)
        r = 1.0 / (2.0 * (1.0 + math.cos(math.radians(angle))))
        L = (4 * r) ** level
        target = 2.0 ** round(math.log2(L))
        v = v * (target / L)
        super().__init__(v, ur_label=True)
        self.params = {"level": level, "angle": angle}
        self.level = level
        self.angle = angle


class Slit(Polyline):
    """The segment [0, 1] x {0}; its complement is the slit plane."""

    kind = "segment"

    def __init__(self, length=1.0):
        super().__init__([[0.0, 0.0], [float(length), 0.0]])
        self.params = {"length": float(length)}


class FourCornerCantor(SegmentScene):
    """Level-L prefractal of the four-corner Cantor set, built from midlines.

    Start from the square [0, s0]^2 with s0 = 1/sqrt(2); each square keeps
    its four corner squares of a quarter of the side.  At level L each square
    of side s_L = s0 4^-L is replaced by its horizontal midline, so sigma(E)
    = s0 and each level-j piece carries 4^-j of the mass.  Segments are
    listed in piece-tree order (digits 0:BL, 1:BR, 2:TL, 3:TR), so every piece
    is a contiguous tau-range.
    """

    kind = "four_corner_cantor"
    s0 = 1.0 / math.sqrt(2.0)

    def __init__(self, level=6):
        if level < 0:
            raise ParameterError("level must be nonnegative")
        self.level = int(level)
        corners = self.piece_corners(self.level)
        sL = self.square_side(self.level)
        a = corners + np.array([0.0, sL / 2])
        b = corners + np.array([sL, sL / 2])
        super().__init__(Chain(a, b), {"level": self.level}, "complement", ur_label=False)

    @classmethod
    def square_side(cls, j):
        return cls.s0 * 4.0 ** (-j)

    @classmethod
    def piece_corners(cls, j):
        """Lower-left corners of the level-j squares in tree order."""
        c = np.zeros((1, 2))
        offs = np.array([[0, 0], [3, 0], [0, 3], [3, 3]], dtype=float)
        for i in range(j):
            s = cls.square_side(i + 1)
            c = (c[:, None, :] + offs[None, :, :] * s).reshape(-1, 2)
        return c

    def piece_index(self, points, j):
        """Index (tree order) of the level-j piece containing each point."""
        P = _rows(points, 2)
        idx = np.zeros(len(P), dtype=np.int64)
        base = np.zeros((len(P), 2))
        for i in range(j):
            s = self.square_side(i + 1)
            qx = (P[:, 0] - base[:, 0] >= 2 * s).astype(np.int64)
            qy = (P[:, 1] - base[:, 1] >= 2 * s).astype(np.int64)
            digit = qx + 2 * qy
            idx = 4 * idx + digit
            base = base + 3 * s * np.column_stack([qx, qy])
        return idx


# ---------------------------------------------------------------------------
# measure operations


def surface_measure(scene: BoundaryScene, x, r):
    """sigma(Delta(x, r)) for a boundary point ``x``.  Vectorised over rows."""
    X = _rows(x, scene.ambient_dim)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ParameterError("radius must be positive")
    off = scene.distance(X)
    if np.any(off > scene.tol):
        raise PointOffBoundaryError(f"point at distance {off.max():.3g} from E")
    out = scene.ball_measure(X, r)
    return out if out.shape != (1,) or np.ndim(x) > 1 else float(out[0])


@dataclass
class AdrReport:
    ratios: np.ndarray
    lower_constant: float
    upper_constant: float
    scales_tested: np.ndarray
    n: int

    def as_dict(self):
        return {
            "lower_constant": self.lower_constant,
            "upper_constant": self.upper_constant,
            "scales_tested": self.scales_tested.tolist(),
            "n_centers": int(self.ratios.shape[0]),
        }


def verify_adr(scene: BoundaryScene, centers, scales):
    """Sampled Ahlfors-David ratios sigma(Delta(x, r)) / r^n."""
    C = np.asarray(centers, dtype=float)
    s = np.asarray(scales, dtype=float).ravel()
    if C.size == 0 or s.size == 0:
        raise EmptySampleError("need at least one centre and one scale")
    C = _rows(C, scene.ambient_dim)
    if np.any(s <= 0) or np.any(s >= scene.diameter):
        raise ParameterError("scales must lie in (0, diam E)")
    n = scene.ambient_dim - 1
    ratios = np.empty((len(C), len(s)))
    for j, r in enumerate(s):
        ratios[:, j] = surface_measure(scene, C, np.full(len(C), r)) / r**n
    return AdrReport(ratios, float(ratios.min()), float(ratios.max()), s, n)


# ---------------------------------------------------------------------------
# corkscrew points


def _clearance(scene, x, r, P):
    """Largest c with B(P, c r) inside B(x, r) cap Omega."""
    d = scene.distance(P)
    inside = scene.in_omega(P)
    rad = np.minimum(d, r - np.linalg.norm(P - x, axis=1))
    return np.where(inside, rad / r, -np.inf)


def corkscrew_point(scene: BoundaryScene, x, r, c_min=0.05, min_cell_ratio=1 / 64):
    """Search Whitney cells inside B(x, r) for the point of largest clearance.

    Returns ``(X, c)`` with B(X, c r) contained in B(x, r) cap Omega.  Cell
    centres seed a short Nelder-Mead polish of the clearance.
    """
    from scipy.optimize import minimize

    from .whitney import whitney_decompose

    x = np.asarray(x, dtype=float).ravel()
    if r <= 0:
        raise ParameterError("radius must be positive")
    lo = x - r
    hi = x + r
    cells = whitney_decompose(scene, (lo, hi), min_cell=r * min_cell_ratio)
    P = cells.centers
    if len(P):
        P = P[np.linalg.norm(P - x, axis=1) < r]
    # axis-aligned probes guard against coarse tilings of small balls
    probes = x + r * np.array(
        [[0.0] * (len(x) - 1) + [0.5], [0.0] * (len(x) - 1) + [-0.5]]
    )
    P = np.r_[P, probes] if len(P) else probes
    c = _clearance(scene, x, r, P)
    order = np.argsort(-c)[:4]

    def neg(p):
        return -float(_clearance(scene, x, r, p[None, :])[0])

    best_p, best_c = P[order[0]], c[order[0]]
    for i in order:
        if not np.isfinite(c[i]):
            continue
        res = minimize(neg, P[i], method="Nelder-Mead",
                       options={"xatol": 1e-10 * r, "fatol": 1e-12, "maxiter": 400})
        if -res.fun > best_c:
            best_p, best_c = res.x, -res.fun
    if not best_c >= c_min:
        raise NoCorkscrewError(f"best clearance {best_c:.3g} below c_min={c_min}")
    return np.asarray(best_p), float(best_c)


# ---------------------------------------------------------------------------
# JSON description files

_KINDS = {}


def _register(kind, factory):
    _KINDS[kind] = factory


_register("hyperplane", lambda p, d, o: Hyperplane(d, omega=o or "upper", window=p.get("window", (0.0, 1.0))))
_register("sphere", lambda p, d, o: Sphere(d, p.get("radius", 1.0), omega=o or "interior"))
_register(
    "lipschitz_graph",
    lambda p, d, o: LipschitzGraph(
        p.get("slope", 0.5), omega=o or "upper", frequency=p.get("frequency", 2 * math.pi),
        half_width=p.get("half_width", 4.0), resolution=p.get("resolution", 400), window=p.get("window", 1.0)),
)
_register("koch_curve", lambda p, d, o: KochCurve(p.get("level", 4), p.get("angle", 45.0)))
_register("four_corner_cantor", lambda p, d, o: FourCornerCantor(p.get("level", 6)))
_register("segment", lambda p, d, o: Slit(p.get("length", 1.0)))
_register("polyline", lambda p, d, o: Polyline(p["vertices"]))


def scene_from_dict(spec):
    if spec.get("schema", SCHEMA) != SCHEMA:
        raise ParameterError(f"unsupported scene schema {spec.get('schema')!r}")
    kind = spec.get("kind")
    if kind not in _KINDS:
        raise ParameterError(f"unknown scene kind {kind!r}; choose from {sorted(_KINDS)}")
    d = int(spec.get("ambient_dim", 2))
    if kind != "hyperplane" and kind != "sphere" and d != 2:
        raise ParameterError(f"{kind} scenes are planar (ambient_dim = 2)")
    scene = _KINDS[kind](dict(spec.get("params", {})), d, spec.get("omega"))
    if "ur_label" in spec and bool(spec["ur_label"]) != scene.ur_label:
        raise ParameterError(f"ur_label of a {kind} scene is fixed to {scene.ur_label}")
    return scene


def load_scene(path):
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def save_scene(scene, path):
    with open(path, "w") as fh:
        json.dump(scene.to_json(), fh, indent=2, sort_keys=True)
