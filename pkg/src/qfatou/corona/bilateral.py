"""Bilateral corona decomposition, augmented regions and sawtooth domains.

A cube Q is *good* when one line L approximates E inside B*_Q = B(x_Q, K l(Q))
from both sides:

    sup_{y in E cap B*_Q} dist(y, L) < eta l(Q)  and
    sup_{y in L cap B*_Q} dist(y, E) < eta l(Q).

The line is the total-least-squares fit to the arclength measure of E in the
ball.  Its first error is exact (the distance to a line is largest at segment
endpoints), the second is evaluated on a fine sampling of the chord.

Regimes grow top down.  The children of a cube in regime S join S when all
of them are good and each admits a fit within angle arctan(eta) of the
direction of S; otherwise every good child opens a regime of its own.  This
keeps each regime coherent.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..errors import ParameterError
from ..harmonic import HarmonicDomain, sample_exits
from ..scene import Hyperplane, _ray_segments, corkscrew_point
from .density import binomial_stderr, exit_nodes
from .regimes import PackingReport, StoppingRegime, check_coherency, verify_packing

CHORD_SAMPLES = 257
PURPOSE_CORONA = 15


# ---------------------------------------------------------------------------
# local fits


def ball_pieces(scene, x, rho):
    """Pieces of E inside the closed disk B(x, rho) as segment endpoint arrays."""
    sv = scene.segment_view()
    chain = sv.chain()
    idx = sv.index
    cand = np.asarray(idx.tree.query_ball_point(x, rho + idx.h), dtype=np.int64)
    a, b = chain.a[cand], chain.b[cand]
    rays = _ray_segments(chain.rays, (x - rho)[None, :], (x + rho)[None, :])
    if rays:
        a = np.r_[a, np.array([o for o, _ in rays])]
        b = np.r_[b, np.array([e for _, e in rays])]
    d = b - a
    L = np.hypot(d[:, 0], d[:, 1])
    u = d / np.where(L > 0, L, 1.0)[:, None]
    w = a - x
    proj = np.einsum("ij,ij->i", w, u)
    disc = rho**2 - (np.einsum("ij,ij->i", w, w) - proj**2)
    half = np.sqrt(np.maximum(disc, 0.0))
    s0 = np.clip(-proj - half, 0.0, L)
    s1 = np.clip(-proj + half, 0.0, L)
    keep = (disc > 0) & (s1 > s0)
    return a[keep] + s0[keep, None] * u[keep], a[keep] + s1[keep, None] * u[keep]


def _orient(v):
    v = v / np.linalg.norm(v)
    return v if (v[0] > 0 or (v[0] == 0 and v[1] > 0)) else -v


def tls_fit(A, B, reference=None, max_angle=None):
    """Line fit to the arclength measure of segments ``[A_i, B_i]``.

    Returns ``(direction, centroid)``.  With a ``reference`` direction the
    fitted direction is clamped to within ``max_angle`` of it.
    """
    d = B - A
    L = np.hypot(d[:, 0], d[:, 1])
    if L.sum() <= 0:
        raise ParameterError("no arclength to fit")
    m = 0.5 * (A + B)
    c = (L[:, None] * m).sum(axis=0) / L.sum()
    mc = m - c
    M = np.einsum("i,ij,ik->jk", L, mc, mc) + np.einsum("i,ij,ik->jk", L / 12.0, d, d)
    w, V = np.linalg.eigh(M)
    u = _orient(V[:, -1])
    if reference is not None:
        ref = _orient(np.asarray(reference, dtype=float))
        phi = math.atan2(ref[0] * u[1] - ref[1] * u[0], ref @ u)
        # directions are defined mod pi
        if phi > math.pi / 2:
            phi -= math.pi
        elif phi < -math.pi / 2:
            phi += math.pi
        if abs(phi) > max_angle:
            t = math.copysign(max_angle, phi)
            R = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
            u = _orient(R @ ref)
    return u, c


def bilateral_errors(scene, A, B, u, c, x, rho, samples=CHORD_SAMPLES):
    """(set-to-line, line-to-set) sup distances inside B(x, rho)."""
    n = np.array([-u[1], u[0]])
    e1 = float(np.max(np.abs(np.r_[A, B] @ n - c @ n))) if len(A) else 0.0
    # chord of the line inside the disk
    w = c - x
    p = w @ u
    disc = rho**2 - (w @ w - p * p)
    if disc <= 0:
        return e1, math.inf
    h = math.sqrt(disc)
    t = np.linspace(-p - h, -p + h, samples)
    P = c + t[:, None] * u
    e2 = float(np.max(scene.distance(P)))
    return e1, e2


@dataclass
class CubeFit:
    direction: np.ndarray
    centroid: np.ndarray
    err_set: float
    err_line: float

    @property
    def error(self):
        return max(self.err_set, self.err_line)


def fit_cube(scene, grid, k, j, K, reference=None, max_angle=None):
    x = np.asarray(grid.center[k - grid.k_min][j], dtype=float)
    rho = K * 2.0 ** (-k)
    A, B = ball_pieces(scene, x, rho)
    u, c = tls_fit(A, B, reference, max_angle)
    e1, e2 = bilateral_errors(scene, A, B, u, c, x, rho)
    return CubeFit(u, c, e1, e2)


# ---------------------------------------------------------------------------
# the decomposition


@dataclass
class CoronaDecomposition:
    eta: float
    K: float
    good: set
    bad: list
    regimes: list
    fits: dict
    labels: np.ndarray  # flat cube id -> regime index, -1 for bad
    packing: PackingReport
    packing_all: PackingReport
    notes: list = field(default_factory=list)

    @property
    def packing_constant(self):
        """sup over all cubes R of the packing sum over R, divided by sigma(R)."""
        return self.packing_all.constant

    def regime_of(self, grid, q):
        lab = int(self.labels[grid.cube(*q).flat])
        return self.regimes[lab] if lab >= 0 else None

    def as_dict(self):
        return {"eta": self.eta, "K": self.K, "n_good": len(self.good), "n_bad": len(self.bad),
                "n_regimes": len(self.regimes), "packing_constant": self.packing_constant,
                "packing_per_root": self.packing.as_dict()["per_root"],
                "regimes": [r.as_dict() for r in self.regimes], "notes": list(self.notes)}


def bilateral_corona(grid, scene=None, eta=0.3, K=1.0):
    """Good/bad partition, coherent regimes and packing sums."""
    scene = grid.scene if scene is None else scene
    if not 0 < eta < 1:
        raise ParameterError("eta must lie in (0, 1)")
    if not K >= 1:
        raise ParameterError("K must be at least 1")
    max_angle = math.atan(eta)
    flat_plane = isinstance(scene, Hyperplane) and scene.ambient_dim > 2
    fits = {}
    for k in grid.generations:
        for j in range(grid.count(k)):
            if flat_plane:
                fits[(k, j)] = CubeFit(np.eye(scene.ambient_dim)[0], np.zeros(scene.ambient_dim), 0.0, 0.0)
            else:
                fits[(k, j)] = fit_cube(scene, grid, k, j, K)
    good = {q for q, f in fits.items() if f.error < eta * 2.0 ** (-q[0])}
    labels = np.full(grid.n_cubes, -1, dtype=np.int64)
    regimes = []

    def open_regime(q):
        f = fits[q]
        n = np.array([-f.direction[1], f.direction[0]]) if len(f.direction) == 2 else None
        off = float(n @ f.centroid) if n is not None else 0.0
        regimes.append(StoppingRegime(q, [q], f.direction, off, {q: (f.direction, f.centroid, f.error)}))
        labels[grid.cube(*q).flat] = len(regimes) - 1

    for j in range(grid.count(grid.k_min)):
        if (grid.k_min, j) in good:
            open_regime((grid.k_min, j))
    for k in grid.generations[:-1]:
        g = k - grid.k_min
        for j in range(grid.count(k)):
            lo, hi = grid.child_range(g, j)
            kids = [(k + 1, c) for c in range(lo, hi)]
            lab = int(labels[grid.cube(k, j).flat])
            joined = False
            if lab >= 0 and all(c in good for c in kids):
                S = regimes[lab]
                cfits = {}
                for c in kids:
                    if flat_plane:
                        cfits[c] = fits[c]
                        continue
                    cf = fit_cube(scene, grid, c[0], c[1], K, S.direction, max_angle)
                    if cf.error >= eta * 2.0 ** (-c[0]):
                        break
                    cfits[c] = cf
                else:
                    for c in kids:
                        S.cubes.append(c)
                        S.fits[c] = (cfits[c].direction, cfits[c].centroid, cfits[c].error)
                        labels[grid.cube(*c).flat] = lab
                    joined = True
            if not joined:
                for c in kids:
                    if c in good:
                        open_regime(c)
    bad = sorted(q for q in fits if q not in good)
    family = bad + [S.top for S in regimes]
    packing = verify_packing(grid, family, "grid")
    packing_all = verify_packing(grid, family, "all")
    for S in regimes:
        rep = check_coherency(grid, S)
        if not rep.coherent:
            raise AssertionError(f"regime at {S.top} is not coherent: {rep.problems[:3]}")
    return CoronaDecomposition(eta, K, good, bad, regimes, fits, labels, packing, packing_all)


# ---------------------------------------------------------------------------
# augmented regions and sawtooth domains


@dataclass
class AugmentedRegion:
    cube: tuple
    base: np.ndarray  # W_Q^0
    plus: np.ndarray | None
    minus: np.ndarray | None
    connectors: int = 0
    failed: bool = False
    diagnostics: list = field(default_factory=list)


def _side(cells, idx, u, c):
    n = np.array([-u[1], u[0]])
    return np.sign((cells.centers[idx] - c) @ n)


def _connected(adj, idx):
    if len(idx) <= 1:
        return True
    ncomp, _ = connected_components(adj[idx][:, idx], directed=False)
    return ncomp == 1


def _shortest_path(adj, allowed, src, dst):
    """Cells of a shortest adjacency path from ``src`` to ``dst`` inside ``allowed``."""
    allowed = set(map(int, allowed)) | set(map(int, src)) | set(map(int, dst))
    target = set(map(int, dst))
    prev = {int(s): -1 for s in src}
    dq = deque(prev)
    indptr, indices = adj.indptr, adj.indices
    while dq:
        v = dq.popleft()
        if v in target:
            path = []
            while v != -1:
                path.append(v)
                v = prev[v]
            return path[::-1]
        for w in indices[indptr[v]:indptr[v + 1]]:
            w = int(w)
            if w in allowed and w not in prev:
                prev[w] = v
                dq.append(w)
    return None


def sawtooth_cells(grid, eta, K):
    """Two-sided Whitney cells covering every window the augmentation searches.

    The focus used for W_Q^0 alone prunes cells that belong to no W_Q^0,
    which leaves holes between the windows of consecutive generations.
    Connector cells may be as small as eta^(1/2) l / 2, so the focus here
    is the W_Q^0 focus with eta replaced by eta^2 and the smallest cube
    halved.
    """
    from ..whitney import Focus, grid_extent, whitney_decompose

    lo, hi = grid_extent(grid)
    focus = Focus(lo, hi, 2.0 ** (-grid.k_max) / 2, 2.0 ** (-grid.k_min), eta**2, K)
    reach = math.sqrt(K) * 2.0 ** (-grid.k_min) * (2 + math.sqrt(grid.scene.ambient_dim))
    min_cell = math.sqrt(eta) * 2.0 ** (-grid.k_max) / 4
    return whitney_decompose(grid.scene, (lo - reach, hi + reach), min_cell, focus=focus, omega_only=False)


def augment_and_split(grid, corona: CoronaDecomposition, regions, q, eta_w=None, K_w=None):
    """W*_Q with its split by the regime line into the two sides.

    For a bad cube the region is W_Q^0 unchanged.  For a good cube, cells of
    W_Q^0 are split by the side of the regime line through the cube's fitted
    centroid; for every child in the same regime and each side, a shortest
    cell path joins the two sides' cell sets when their union is not
    connected.  Path cells must have side at least eta^(1/2) l(child) / 2
    and lie within K^(1/2) l(Q) of Q.  A cube whose connector search fails
    is reported with ``failed`` set.
    """
    cells = regions.cells
    eta_w = regions.eta if eta_w is None else eta_w
    K_w = regions.K if K_w is None else K_w
    Q = grid.cube(*q)
    base = regions.by_cube[Q.flat].members
    S = corona.regime_of(grid, q)
    if S is None:
        return AugmentedRegion(tuple(q), base, None, None)
    adj = cells.adjacency
    u = S.direction
    c = S.fits[tuple(q)][1]
    sides = _side(cells, base, u, c)
    out = {1: list(base[sides > 0]), -1: list(base[sides < 0])}
    res = AugmentedRegion(tuple(q), base, None, None)
    kids = [ch for ch in ((ch.k, ch.id) for ch in Q.children) if ch in S]
    reach = math.sqrt(K_w) * Q.ell
    from ..whitney import _cube_box_distance

    cache = {}
    tree = cells.tree()
    outer = grid.outer[Q.g][Q.id]
    half_diag = 0.5 * float(cells.diam.max())
    window = None
    for ch in kids:
        cQ = grid.cube(*ch)
        cbase = regions.by_cube[cQ.flat].members
        csides = _side(cells, cbase, u, c)
        for sgn in (1, -1):
            mine = np.asarray(out[sgn], dtype=np.int64)
            theirs = cbase[csides == sgn]
            if len(theirs) == 0 or len(mine) == 0:
                if len(theirs) != len(mine):
                    res.diagnostics.append(f"side {sgn:+d} empty for one of {q}, {ch}")
                continue
            union = np.union1d(mine, theirs)
            if _connected(adj, union):
                continue
            if window is None:
                window = np.asarray(tree.query_ball_point(Q.center, reach + outer + half_diag), dtype=np.int64)
                window = window[cells.side[window] >= math.sqrt(eta_w) * cQ.ell / 2]
                if len(window):
                    dist = _cube_box_distance(grid, Q, cells.lo[window], cells.hi[window], cache)
                    window = window[dist <= reach]
                wside = _side(cells, window, u, c)
            near = window[wside == sgn]
            path = _shortest_path(adj, near, mine, theirs)
            if path is None:
                res.failed = True
                res.diagnostics.append(f"augmentation failed between {q} and {ch} on side {sgn:+d}")
                continue
            mine_set = set(map(int, mine))
            add = [p for p in path if p not in mine_set]
            res.connectors += len(add)
            out[sgn].extend(add)
            assert _connected(adj, np.union1d(np.asarray(out[sgn], dtype=np.int64), theirs))
    res.plus = np.unique(np.asarray(out[1], dtype=np.int64))
    res.minus = np.unique(np.asarray(out[-1], dtype=np.int64))
    return res


def augment_all(grid, corona: CoronaDecomposition, regions):
    """Augmented regions of every good cube; failures are listed in ``corona.notes``."""
    out = {}
    for S in corona.regimes:
        for q in S.cubes:
            a = augment_and_split(grid, corona, regions, q)
            out[tuple(q)] = a
            if a.failed:
                corona.notes.append({"cube": list(q), "demoted": True, "diagnostics": a.diagnostics})
    return out


@dataclass
class SawtoothDomain:
    regime: tuple
    sign: int
    cells: np.ndarray
    harnack: dict  # (parent, child) -> path length in cell steps
    clearance: dict  # cube -> inscribed radius over l(Q)
    comparability: float  # max dist(X, E) / dist(X, boundary of the sawtooth) over cell centres

    @property
    def max_harnack(self):
        return max(self.harnack.values(), default=0)

    def as_dict(self):
        return {"regime": list(self.regime), "sign": self.sign, "cells": int(len(self.cells)),
                "max_harnack": self.max_harnack, "min_clearance": min(self.clearance.values(), default=0.0),
                "comparability": self.comparability}


def _bfs_steps(adj, allowed, src, dst):
    if len(np.intersect1d(src, dst)):
        return 0
    path = _shortest_path(adj, allowed, src, dst)
    return math.inf if path is None else len(path) - 1


def build_sawtooth(grid, regime: StoppingRegime, augmented: dict, regions, sign=1):
    """Union of the one-sided augmented regions of a (semi-)coherent regime."""
    cells = regions.cells
    adj = cells.adjacency
    part = {}
    for q in regime.cubes:
        a = augmented[tuple(q)]
        part[tuple(q)] = a.plus if sign > 0 else a.minus
    allc = np.unique(np.concatenate([p for p in part.values() if p is not None and len(p)] or
                                    [np.zeros(0, dtype=np.int64)]))
    harn = {}
    for q in regime.cubes:
        Q = grid.cube(*q)
        for ch in Q.children:
            cq = (ch.k, ch.id)
            if cq in part and len(part[cq]) and len(part[tuple(q)]):
                harn[(tuple(q), cq)] = _bfs_steps(adj, allc, part[tuple(q)], part[cq])
    # inscribed radius: distance from a cell centre to the complement of the union
    member = np.zeros(len(cells), dtype=bool)
    member[allc] = True
    others = np.nonzero(~member)[0]
    clear = {}
    comp = 0.0
    if len(allc):
        from scipy.spatial import cKDTree

        X = cells.centers[allc]
        dE = cells.dist[allc] + 0.5 * cells.diam[allc]
        if len(others):
            t = cKDTree(cells.centers[others])
            kq = min(32, len(others))
            _, nb = t.query(X, k=kq)
            nb = np.atleast_2d(nb).reshape(len(X), -1)
            lo, hi = cells.lo[others][nb], cells.hi[others][nb]
            g = np.maximum(np.maximum(lo - X[:, None, :], X[:, None, :] - hi), 0.0)
            dO = np.linalg.norm(g, axis=2).min(axis=1)
        else:
            dO = np.full(len(X), np.inf)
        inner = np.minimum(dE, dO)
        comp = float(np.max(dE / np.maximum(inner, 1e-300)))
        pos = {int(c): i for i, c in enumerate(allc)}
        for q, p in part.items():
            if p is not None and len(p):
                clear[q] = float(max(inner[pos[int(c)]] for c in p) / grid.cube(*q).ell)
    return SawtoothDomain(tuple(regime.top), int(sign), allc, harn, clear, comp)


# ---------------------------------------------------------------------------
# harmonic measure along regimes


@dataclass
class CoronaHMReport:
    regime: tuple
    pole: np.ndarray
    pole_distance: float  # dist(pole, Q(S)) / l(Q(S))
    pole_ok: bool
    ratios: dict  # member -> omega(3R) sigma(Q(S)) / sigma(R)
    stderr: dict
    n_walks: int

    @property
    def spread(self):
        v = np.array([r for r in self.ratios.values() if r > 0])
        return float(v.max() / v.min()) if len(v) else math.inf

    def as_dict(self):
        vals = list(self.ratios.values())
        return {"regime": list(self.regime), "pole_distance": self.pole_distance, "pole_ok": self.pole_ok,
                "min": min(vals), "max": max(vals), "spread": self.spread, "n_walks": self.n_walks}


def verify_corona_hm(grid, regime: StoppingRegime, domain: HarmonicDomain, n_walks=10_000, seed=0, pole=None,
                     c_pole=16.0):
    """Pole condition and omega^{p}(3R) sigma(Q(S)) / sigma(R) for every member R."""
    from ..dyadic import dilate_nodes

    top = grid.cube(*regime.top)
    if pole is None:
        pole, _ = corkscrew_point(grid.scene, np.asarray(top.center, dtype=float), top.ell)
    pole = np.asarray(pole, dtype=float)
    dist = float(grid.distance_to_cube(top.k, top.id, pole[None, :])[0]) / top.ell
    ok = 1.0 / c_pole <= dist <= c_pole
    ex = sample_exits(domain, pole, n_walks, seed, PURPOSE_CORONA, top.flat)
    good = ~(ex.capped | ex.escaped)
    nodes = exit_nodes(grid, ex.points[good])
    counts = np.bincount(nodes[nodes >= 0], minlength=len(grid.points))
    n = len(ex.capped)
    ratios, se = {}, {}
    for q in sorted(regime.cubes):
        R = grid.cube(*q)
        mask = dilate_nodes(grid, R, 3)
        m = counts[mask].sum() / n
        ratios[q] = float(m * top.sigma / R.sigma)
        se[q] = float(binomial_stderr(m, n) * top.sigma / R.sigma)
    return CoronaHMReport(tuple(regime.top), pole, dist, bool(ok), ratios, se, n)

