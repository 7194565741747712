"""Christ-David dyadic grids on boundary scenes.

A grid stores, per generation ``k``, the cubes as contiguous ranges of a
global array of boundary quadrature *nodes*.  Children ranges nest inside
parent ranges, so membership of a node in a cube is a range test and the
ancestor at any generation is a ``searchsorted``.

Three constructions are provided.

``tau``
    Planar chain scenes: cubes are intervals of the arclength parameter with
    lengths halving each generation.  Diameter never exceeds length, which
    gives axiom (iv) for free.  On the four-corner Cantor scene the length
    schedule follows the self-similar pieces, each level-j piece appearing at
    two consecutive generations.
``box``
    Hyperplanes in ambient dimension >= 3: dyadic squares of side
    2^-k / sqrt(n), so the diameter is exactly 2^-k.
``net``
    Greedy maximal 2^-(k+1)-separated nets over the nodes with nearest-point
    assignment inside the parent, for chain scenes.  Kept as an alternative;
    it is slower and has worse inner-ball constants.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .errors import DegenerateSceneError, DepthCapError, ParameterError
from .geometry import point_segment_distance
from .scene import BoundaryScene, FourCornerCantor, Hyperplane

DEPTH_CAP = 12


@dataclass(frozen=True)
class DyadicCube:
    """Read-only view of one cube of a grid."""

    grid: "DyadicGrid"
    k: int
    id: int

    @property
    def g(self):
        return self.k - self.grid.k_min

    @property
    def ell(self):
        return 2.0 ** (-self.k)

    @property
    def center(self):
        return self.grid.center[self.g][self.id]

    @property
    def sigma(self):
        return float(self.grid.sigma[self.g][self.id])

    @property
    def nodes(self):
        g = self.g
        return slice(int(self.grid.start[g][self.id]), int(self.grid.end[g][self.id]))

    @property
    def parent(self):
        if self.g == 0:
            return None
        return DyadicCube(self.grid, self.k - 1, int(self.grid.parent[self.g][self.id]))

    @property
    def children(self):
        if self.k == self.grid.k_max:
            return []
        c0, c1 = self.grid.child_range(self.g, self.id)
        return [DyadicCube(self.grid, self.k + 1, j) for j in range(c0, c1)]

    @property
    def inner_radius(self):
        return float(self.grid.inner[self.g][self.id])

    @property
    def ball_radius(self):
        """Radius r of B_Q = B(x_Q, r): the inner radius capped at l(Q)."""
        return min(self.inner_radius, self.ell)

    @property
    def flat(self):
        return self.grid.offset[self.g] + self.id

    def contains(self, other: "DyadicCube"):
        """Tree containment: ``other`` is this cube or one of its descendants."""
        if other.k < self.k:
            return False
        return self.grid.ancestor(other.k, other.id, self.k) == self.id

    def __repr__(self):
        return f"DyadicCube(k={self.k}, id={self.id})"


class DyadicGrid:
    """Nested partitions of the gridded part of a scene.

    Per-generation arrays are indexed by ``g = k - k_min``.
    """

    def __init__(self, scene, k_min, k_max, points, weights, start, end, parent, method,
                 node_tau=None, node_cell=None, boxes=None, seed=0, schedule=None):
        self.scene = scene
        self.k_min = int(k_min)
        self.k_max = int(k_max)
        self.points = points
        self.weights = weights
        self.start = start
        self.end = end
        self.parent = parent
        self.method = method
        self.node_tau = node_tau
        self.node_cell = node_cell
        self.boxes = boxes
        self.seed = seed
        self.schedule = schedule
        self.sigma = [np.add.reduceat(weights, s) if len(s) else np.zeros(0) for s in start]
        counts = [len(s) for s in start]
        self.offset = np.r_[0, np.cumsum(counts)][:-1]
        self.n_cubes = int(sum(counts))
        self._segments_cache = {}
        self.center = [None] * self.n_gen
        self.inner = [None] * self.n_gen
        self.outer = [None] * self.n_gen
        self._node_tree = None

    # -- basic shape -------------------------------------------------------
    @property
    def n_gen(self):
        return self.k_max - self.k_min + 1

    @property
    def depth(self):
        return self.n_gen

    @property
    def generations(self):
        return range(self.k_min, self.k_max + 1)

    def count(self, k):
        return len(self.start[k - self.k_min])

    def cube(self, k, j):
        return DyadicCube(self, int(k), int(j))

    def cubes(self, k=None):
        ks = self.generations if k is None else [k]
        for kk in ks:
            for j in range(self.count(kk)):
                yield DyadicCube(self, kk, j)

    def root_cubes(self):
        return list(self.cubes(self.k_min))

    def flat_to_cube(self, f):
        g = int(np.searchsorted(self.offset, f, side="right") - 1)
        return DyadicCube(self, self.k_min + g, int(f - self.offset[g]))

    def child_range(self, g, j):
        par = self.parent[g + 1]
        return int(np.searchsorted(par, j, side="left")), int(np.searchsorted(par, j, side="right"))

    def leaf_of_node(self, i):
        """Leaf cube index for node indices ``i``."""
        return np.searchsorted(self.start[-1], i, side="right") - 1

    def ancestor(self, k, j, k_anc):
        """Index at generation ``k_anc`` of the ancestor of cube (k, j)."""
        g = k - self.k_min
        i = int(self.start[g][j])
        ga = k_anc - self.k_min
        return int(np.searchsorted(self.start[ga], i, side="right") - 1)

    def node_cube(self, k, nodes):
        g = k - self.k_min
        return np.searchsorted(self.start[g], nodes, side="right") - 1

    def chain_of_node(self, i, k_top=None):
        """Cube ids containing node ``i`` from generation ``k_top`` down to the leaf."""
        k_top = self.k_min if k_top is None else k_top
        return [(k, int(self.node_cube(k, i))) for k in range(k_top, self.k_max + 1)]

    def nearest_node(self, x):
        """``(distance, node index)`` of the nearest boundary node."""
        if self._node_tree is None:
            self._node_tree = cKDTree(self.points)
        return self._node_tree.query(np.atleast_2d(x))

    def locate(self, x):
        """Leaf cube containing each boundary point (by nearest node)."""
        if self._node_tree is None:
            self._node_tree = cKDTree(self.points)
        _, i = self._node_tree.query(np.atleast_2d(x))
        return self.leaf_of_node(i)

    # -- geometry of a cube ------------------------------------------------
    def cube_segments(self, k, j):
        """Closed pieces of E making up the cube, as segments (planar grids)."""
        key = (k, j)
        if key in self._segments_cache:
            return self._segments_cache[key]
        g = k - self.k_min
        chain = self.scene.chain()
        s, e = int(self.start[g][j]), int(self.end[g][j])
        cells = self.node_cell[s:e]
        order = np.argsort(cells[:, 0], kind="stable")
        cells = cells[order]
        runs = []
        t0, t1 = cells[0]
        for a, b in cells[1:]:
            if a <= t1 + 1e-15:
                t1 = max(t1, b)
            else:
                runs.append((t0, t1))
                t0, t1 = a, b
        runs.append((t0, t1))
        A, B = [], []
        for a, b in runs:
            pa, pb = chain.clip(a, b)
            A.append(pa)
            B.append(pb)
        out = (np.concatenate(A), np.concatenate(B))
        if len(self._segments_cache) < 20000:
            self._segments_cache[key] = out
        return out

    def cube_box(self, k, j):
        """Boundary square (as a flat box in R^d) for box grids."""
        g = k - self.k_min
        return self.boxes[g][0][j], self.boxes[g][1][j]

    def distance_to_cube(self, k, j, P):
        """Exact distance from points to the closed cube."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.method == "box":
            lo, hi = self.cube_box(k, j)
            g = np.maximum(np.maximum(lo - P, P - hi), 0.0)
            return np.linalg.norm(g, axis=1)
        a, b = self.cube_segments(k, j)
        out = np.full(len(P), np.inf)
        for i in range(len(a)):
            d, _ = point_segment_distance(P, np.broadcast_to(a[i], P.shape), np.broadcast_to(b[i], P.shape))
            out = np.minimum(out, d)
        return out

    def cube_diameter(self, k, j):
        if self.method == "box":
            lo, hi = self.cube_box(k, j)
            return float(np.linalg.norm(hi - lo))
        a, b = self.cube_segments(k, j)
        pts = np.unique(np.r_[a, b], axis=0)
        return float(pdist(pts).max()) if len(pts) > 1 else 0.0

    def cube_measure(self, k, j):
        return float(self.sigma[k - self.k_min][j])

    def dump_csv(self, path):
        dump_grid_csv(self, path)


# ---------------------------------------------------------------------------
# construction


def build_grid(scene: BoundaryScene, k_min=None, k_max=None, seed=0, depth=None,
               method="auto", nodes_per_leaf=4, depth_cap=DEPTH_CAP):
    """Build a dyadic grid on ``scene`` for generations ``k_min .. k_max``.

    When ``k_max`` is omitted, ``depth`` counts generations:
    ``k_max = k_min + depth - 1``.  ``k_min`` defaults to the coarsest
    generation whose cubes have diameter at most 2^-k.
    """
    if nodes_per_leaf < 4:
        raise ParameterError("leaves carry at least four nodes")
    if method == "auto":
        if isinstance(scene, Hyperplane) and scene.ambient_dim >= 3:
            method = "box"
        elif hasattr(scene, "chain") and scene.chain() is not None:
            method = "tau"
        else:
            raise DegenerateSceneError(f"no boundary sample generator for scene kind {scene.kind!r}")
    if method == "box":
        k0 = _box_root_generation(scene)
    else:
        if not hasattr(scene, "chain") or scene.chain() is None:
            raise DegenerateSceneError(f"no boundary sample generator for scene kind {scene.kind!r}")
        k0 = _tau_root_generation(scene)
    k_min = k0 if k_min is None else max(int(k_min), k0)
    if k_max is None:
        k_max = k_min + (8 if depth is None else int(depth)) - 1
    k_max = int(k_max)
    if k_max < k_min:
        raise ParameterError("k_max must be at least k_min")
    if k_max - k_min > depth_cap:
        raise DepthCapError(f"k_max - k_min = {k_max - k_min} exceeds the depth cap {depth_cap}")
    if method == "tau":
        grid = _build_tau(scene, k0, k_min, k_max, nodes_per_leaf, seed)
    elif method == "box":
        grid = _build_box(scene, k0, k_min, k_max, nodes_per_leaf, seed)
    elif method == "net":
        grid = _build_net(scene, k_min, k_max, nodes_per_leaf, seed)
    else:
        raise ParameterError(f"unknown grid method {method!r}")
    _compute_centers(grid)
    return grid


def _tau_window(scene):
    chain = scene.chain()
    if isinstance(scene, Hyperplane):
        return scene.window
    w = getattr(scene, "window", None)
    if w is not None and not isinstance(w, tuple):
        return 0.0, float(w)
    return float(chain.tau[0]), chain.tau_end


def _tau_root_generation(scene):
    t0, t1 = _tau_window(scene)
    if isinstance(scene, FourCornerCantor):
        return 0
    L = t1 - t0
    return int(math.floor(-math.log2(L) + 1e-12))


def _tau_schedule(scene, k0, k):
    """Length of a generation-k cube in the tau parameter."""
    t0, t1 = _tau_window(scene)
    if isinstance(scene, FourCornerCantor):
        L = scene.level
        if k <= 2 * L:
            return scene.s0 * 4.0 ** (-math.ceil(k / 2))
        return scene.s0 * 4.0 ** (-L) * 2.0 ** (-(k - 2 * L))
    return (t1 - t0) * 2.0 ** (k0 - k)


def _build_tau(scene, k0, k_min, k_max, m, seed):
    t0, t1 = _tau_window(scene)
    chain = scene.chain()
    lam_leaf = _tau_schedule(scene, k0, k_max)
    n_leaf = int(round((t1 - t0) / lam_leaf))
    leaf_edges = t0 + lam_leaf * np.arange(n_leaf + 1)
    leaf_edges[-1] = t1
    # m equal sub-cells per leaf, node at each sub-cell midpoint
    sub = leaf_edges[:-1, None] + (leaf_edges[1:] - leaf_edges[:-1])[:, None] * (np.arange(m + 1) / m)[None, :]
    cell_lo = sub[:, :-1].ravel()
    cell_hi = sub[:, 1:].ravel()
    tau = 0.5 * (cell_lo + cell_hi)
    points = chain.point_at(tau)
    weights = cell_hi - cell_lo
    start, end, parent = [], [], []
    for k in range(k_min, k_max + 1):
        lam = _tau_schedule(scene, k0, k)
        n = int(round((t1 - t0) / lam))
        per = n_leaf // n
        s = np.arange(n) * per * m
        start.append(s)
        end.append(s + per * m)
        if k == k_min:
            parent.append(np.full(n, -1, dtype=np.int64))
        else:
            ratio = n // len(start[-2])
            parent.append(np.arange(n) // ratio)
    grid = DyadicGrid(scene, k_min, k_max, points, weights, start, end, parent, "tau",
                      node_tau=tau, node_cell=np.column_stack([cell_lo, cell_hi]), seed=seed,
                      schedule={k: _tau_schedule(scene, k0, k) for k in range(k_min, k_max + 1)})
    return grid


def _box_root_generation(scene):
    w0, w1 = scene.window
    n = scene.ambient_dim - 1
    k = -math.log2((w1 - w0) * math.sqrt(n))
    kr = round(k)
    if abs(k - kr) > 1e-9:
        raise ParameterError(
            f"hyperplane window width must be 2^-k / sqrt({n}) for a box grid, got {w1 - w0}")
    return int(kr)


def _morton(ix, bits):
    code = np.zeros(len(ix), dtype=np.int64)
    n = ix.shape[1]
    for b in range(bits):
        for a in range(n):
            code |= ((ix[:, a] >> b) & 1) << (b * n + (n - 1 - a))
    return code


def _build_box(scene, k0, k_min, k_max, m, seed):
    n = scene.ambient_dim - 1
    w0, w1 = scene.window
    W = w1 - w0
    per_axis = max(2, int(math.ceil(m ** (1.0 / n))))
    bits = k_max - k0
    N = 2**bits
    grid_ix = np.stack(np.meshgrid(*[np.arange(N)] * n, indexing="ij"), -1).reshape(-1, n)
    order = np.argsort(_morton(grid_ix, bits), kind="stable")
    grid_ix = grid_ix[order]
    leaf_side = W / N
    sub = (np.arange(per_axis) + 0.5) / per_axis
    offs = np.stack(np.meshgrid(*[sub] * n, indexing="ij"), -1).reshape(-1, n)
    P = w0 + leaf_side * (grid_ix[:, None, :] + offs[None, :, :])
    P = P.reshape(-1, n)
    points = np.column_stack([P, np.zeros(len(P))])
    npl = len(offs)
    weights = np.full(len(points), leaf_side**n / npl)
    start, end, parent, boxes = [], [], [], []
    for k in range(k_min, k_max + 1):
        levels_below = k_max - k
        per = (2**n) ** levels_below
        count = len(grid_ix) // per
        s = np.arange(count) * per * npl
        start.append(s)
        end.append(s + per * npl)
        parent.append(np.full(count, -1, dtype=np.int64) if k == k_min else np.arange(count) // 2**n)
        first = grid_ix[np.arange(count) * per] >> levels_below
        side = W * 2.0 ** (k0 - k)
        lo = np.column_stack([w0 + first * side, np.zeros(count)])
        hi = np.column_stack([w0 + (first + 1) * side, np.zeros(count)])
        boxes.append((lo, hi))
    return DyadicGrid(scene, k_min, k_max, points, weights, start, end, parent, "box",
                      boxes=boxes, seed=seed)


def _build_net(scene, k_min, k_max, m, seed):
    """Greedy nets on a fine tau sampling, refined top-down inside parents."""
    base = _build_tau(scene, _tau_root_generation(scene), k_min, k_max, m, seed)
    P = base.points
    tau = base.node_tau
    cells = base.node_cell
    W = base.weights
    rng = np.random.default_rng(seed)
    order = np.arange(len(P))
    ranges = [(0, len(P))]
    start, end, parent = [], [], []
    for k in range(k_min, k_max + 1):
        rho = 2.0 ** (-(k + 1))
        new_ranges, new_parent = [], []
        new_order = order.copy()
        for pi, (s, e) in enumerate(ranges):
            idx = order[s:e]
            if k == k_min:
                pts = P[idx]
                labels = _net_labels(pts, rho, rng)
            else:
                labels = _net_labels(P[idx], rho, rng)
            # children sorted by first tau, nodes stable inside each child
            firsts = np.array([tau[idx[labels == c]].min() for c in range(labels.max() + 1)])
            rank = np.argsort(np.argsort(firsts))
            lab = rank[labels]
            perm = np.lexsort((tau[idx], lab))
            new_order[s:e] = idx[perm]
            counts = np.bincount(lab, minlength=lab.max() + 1)
            edges = s + np.r_[0, np.cumsum(counts)]
            for c in range(len(counts)):
                new_ranges.append((int(edges[c]), int(edges[c + 1])))
                new_parent.append(pi if k > k_min else -1)
        if k == k_min and len(new_ranges) > 1:
            pass
        order = new_order
        ranges = new_ranges
        start.append(np.array([r[0] for r in ranges]))
        end.append(np.array([r[1] for r in ranges]))
        parent.append(np.array(new_parent, dtype=np.int64))
    grid = DyadicGrid(scene, k_min, k_max, P[order], W[order], start, end, parent, "net",
                      node_tau=tau[order], node_cell=cells[order], seed=seed)
    return grid


def _net_labels(pts, rho, rng):
    """Greedy farthest-point maximal rho-net; label = nearest net point."""
    n = len(pts)
    first = int(rng.integers(n)) if n > 1 else 0
    centers = [first]
    d = np.hypot(*(pts - pts[first]).T)
    while True:
        i = int(np.argmax(d))
        if d[i] <= rho:
            break
        centers.append(i)
        d = np.minimum(d, np.hypot(*(pts - pts[i]).T))
    C = pts[centers]
    _, lab = cKDTree(C).query(pts)
    return np.asarray(lab, dtype=np.int64)


# ---------------------------------------------------------------------------
# centres and inner balls


def _outside_distance_chain(grid, k, j, P, cap):
    """Exact distance from points to E minus cube (k, j), capped at ``cap``."""
    scene = grid.scene.segment_view()
    chain = scene.chain()
    idx_tree = scene.index
    g = k - grid.k_min
    s, e = int(grid.start[g][j]), int(grid.end[g][j])
    cells = grid.node_cell[s:e]
    out = np.full(len(P), cap)
    lists = idx_tree.tree.query_ball_point(P, cap + idx_tree.h)
    cand = np.unique(np.fromiter((c for li in lists for c in li), dtype=np.int64))
    if len(cand):
        # a tau-cube covers the single parameter interval [t0, t1]; keep the
        # parts of candidate segments on either side of it
        t0, t1 = cells[0, 0], cells[-1, 1]
        lo_t = chain.tau[cand]
        hi_t = chain.tau[cand + 1]
        eps = 1e-12 * max(1.0, float(np.abs(chain.tau).max()))
        left = lo_t < t0 - eps
        right = hi_t > t1 + eps
        seg = np.r_[cand[left], cand[right]]
        ta = np.r_[lo_t[left], np.maximum(lo_t[right], t1)]
        tb = np.r_[np.minimum(hi_t[left], t0), hi_t[right]]
        if len(seg):
            A = chain.point_at_segment(seg, ta)
            B = chain.point_at_segment(seg, tb)
            AB = B - A
            L2 = np.maximum(np.einsum("ij,ij->i", AB, AB), 1e-300)
            W = P[:, None, :] - A[None, :, :]
            t = np.clip(np.einsum("pij,ij->pi", W, AB) / L2, 0.0, 1.0)
            D = np.linalg.norm(W - t[:, :, None] * AB[None, :, :], axis=2)
            out = np.minimum(out, D.min(axis=1))
    # grid window may be a proper part of the chain: the rest counts as outside
    if chain.rays:
        out = np.minimum(out, scene._ray_distance(P))
    return out


def _compute_centers(grid):
    """Choose x_Q as the candidate with the largest inner ball; record radii."""
    fr = np.array([0.5, 0.25, 0.75, 0.375, 0.625, 0.125, 0.875])
    for g, k in enumerate(grid.generations):
        n = len(grid.start[g])
        ell = 2.0 ** (-k)
        cap = 4.0 * ell
        centers = np.zeros((n, grid.scene.ambient_dim))
        inner = np.zeros(n)
        outer = np.zeros(n)
        whole = n == 1 and g == 0 and grid.scene.bounded
        for j in range(n):
            s, e = int(grid.start[g][j]), int(grid.end[g][j])
            if g > 0:
                pj = int(grid.parent[g][j])
                if int(grid.start[g - 1][pj]) == s and int(grid.end[g - 1][pj]) == e:
                    # same node set as the parent (a repeated Cantor piece)
                    centers[j] = grid.center[g - 1][pj]
                    inner[j] = min(grid.inner[g - 1][pj], cap)
                    outer[j] = grid.outer[g - 1][pj]
                    continue
            if grid.method == "box":
                lo, hi = grid.cube_box(k, j)
                c = 0.5 * (lo + hi)
                centers[j] = c
                inner[j] = 0.5 * float(np.min((hi - lo)[:-1]))
                outer[j] = 0.5 * float(np.linalg.norm(hi - lo))
                continue
            if grid.method == "tau":
                t0, t1 = grid.node_cell[s, 0], grid.node_cell[e - 1, 1]
                cand = grid.scene.chain().point_at(t0 + fr * (t1 - t0))
            else:
                sel = np.linspace(s, e - 1, min(e - s, 9)).astype(int)
                cand = grid.points[sel]
            if whole:
                dist = np.full(len(cand), np.inf)
            else:
                dist = _outside_distance_chain(grid, k, j, cand, cap)
            b = int(np.argmax(dist))
            centers[j] = cand[b]
            inner[j] = dist[b]
            a, bb = grid.cube_segments(k, j)
            pts = np.r_[a, bb]
            outer[j] = float(np.hypot(*(pts - cand[b]).T).max())
        grid.center[g] = centers
        grid.inner[g] = inner
        grid.outer[g] = outer


# ---------------------------------------------------------------------------
# axioms


@dataclass
class AxiomReport:
    passed: dict
    witnesses: dict
    a0: float
    c1: float
    max_diam_ratio: float
    details: dict

    @property
    def all_pass(self):
        return all(self.passed.values())

    def as_dict(self):
        return {"passed": self.passed, "a0": self.a0, "C1": self.c1,
                "max_diam_ratio": self.max_diam_ratio,
                "witnesses": {k: [list(map(int, w)) for w in v[:5]] for k, v in self.witnesses.items()},
                **self.details}


def verify_grid_axioms(grid: DyadicGrid, rtol=1e-9) -> AxiomReport:
    """Check axioms (i)-(v).  Reports failures with witnesses, never raises."""
    passed, wit, details = {}, {}, {}
    N = len(grid.points)
    total = float(grid.weights.sum())
    # (i) every node in exactly one cube per generation; masses add up
    w = []
    for g, k in enumerate(grid.generations):
        s, e = grid.start[g], grid.end[g]
        ok = len(s) > 0 and s[0] == 0 and e[-1] == N and np.all(s[1:] == e[:-1]) and np.all(e > s)
        if not ok:
            w.append((k, -1))
        if abs(grid.sigma[g].sum() - total) > rtol * max(total, 1.0):
            w.append((k, -2))
    expect = grid.scene.total_measure()
    details["sigma_total"] = total
    details["sigma_expected"] = float(expect)
    if abs(total - expect) > 1e-6 * max(expect, 1.0):
        w.append((grid.k_min, -3))
    passed["i"] = not w
    wit["i"] = w
    # (ii) nesting: a child range lies inside its parent's range
    w = []
    for g in range(1, grid.n_gen):
        p = grid.parent[g]
        bad = (grid.start[g] < grid.start[g - 1][p]) | (grid.end[g] > grid.end[g - 1][p])
        for j in np.nonzero(bad)[0]:
            w.append((grid.k_min + g, int(j), grid.k_min + g - 1, int(p[j])))
    passed["ii"] = not w
    wit["ii"] = w
    # (iii) unique ancestor: exactly one cube of the previous generation meets the child
    w = []
    for g in range(1, grid.n_gen):
        s, e = grid.start[g], grid.end[g]
        ps, pe = grid.start[g - 1], grid.end[g - 1]
        first = np.searchsorted(ps, s, side="right") - 1
        last = np.searchsorted(ps, e - 1, side="right") - 1
        bad = (first != last) | (first != grid.parent[g])
        for j in np.nonzero(bad)[0]:
            w.append((grid.k_min + g, int(j)))
    passed["iii"] = not w
    wit["iii"] = w
    # (iv) diam(Q) <= 2^-k
    w = []
    worst = 0.0
    for g, k in enumerate(grid.generations):
        for j in range(len(grid.start[g])):
            r = grid.cube_diameter(k, j) * 2.0**k
            worst = max(worst, r)
            if r > 1 + 1e-12:
                w.append((k, j))
    passed["iv"] = not w
    wit["iv"] = w
    # (v) inner surface balls, checked again on nodes outside each cube
    w = []
    a0 = math.inf
    c1 = 0.0
    for g, k in enumerate(grid.generations):
        ell = 2.0 ** (-k)
        inner = grid.inner[g]
        for j in range(len(inner)):
            # B_Q radius: the inner radius, but never above l(Q)
            r = min(inner[j], ell)
            c1 = max(c1, grid.outer[g][j] / r) if r > 0 else math.inf
            if np.isfinite(inner[j]):
                a0 = min(a0, inner[j] / ell)
        fin = np.isfinite(inner)
        if not fin.any():
            continue
        tree = cKDTree(grid.points)
        for j in np.nonzero(fin)[0]:
            s, e = int(grid.start[g][j]), int(grid.end[g][j])
            near = tree.query_ball_point(grid.center[g][j], inner[j] * (1 - 1e-12))
            near = np.asarray(near, dtype=np.int64)
            if np.any((near < s) | (near >= e)):
                w.append((k, int(j)))
    passed["v"] = bool(not w and a0 > 0)
    wit["v"] = w
    return AxiomReport(passed, wit, float(a0), float(c1), float(worst), details)


# ---------------------------------------------------------------------------
# dilates


def dilate(grid: DyadicGrid, Q: DyadicCube, lam):
    """Predicate for lam Q = {x in E : dist(x, Q) <= (lam - 1) l(Q)}."""
    if not lam > 1:
        raise ParameterError("dilation factor must exceed 1")
    r = (lam - 1) * Q.ell

    def predicate(x):
        return grid.distance_to_cube(Q.k, Q.id, x) <= r

    return predicate


def dilate_nodes(grid, Q, lam):
    """Boolean mask over grid nodes for lam Q."""
    if not lam > 1:
        raise ParameterError("dilation factor must exceed 1")
    r = (lam - 1) * Q.ell
    if grid._node_tree is None:
        grid._node_tree = cKDTree(grid.points)
    rad = r + (grid.outer[Q.g][Q.id] if grid.outer[Q.g] is not None else Q.ell)
    cand = np.asarray(grid._node_tree.query_ball_point(Q.center, rad), dtype=np.int64)
    mask = np.zeros(len(grid.points), dtype=bool)
    if len(cand):
        d = grid.distance_to_cube(Q.k, Q.id, grid.points[cand])
        mask[cand[d <= r]] = True
    mask[Q.nodes] = True
    return mask


# ---------------------------------------------------------------------------
# CSV


def dump_grid_csv(grid, path):
    d = grid.scene.ambient_dim
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "id", "parent_id"] + [f"center_{i}" for i in range(d)] + ["ell", "sigma_weight"])
        for g, k in enumerate(grid.generations):
            for j in range(len(grid.start[g])):
                wr.writerow([k, j, int(grid.parent[g][j])] + [repr(float(v)) for v in grid.center[g][j]]
                            + [repr(2.0 ** (-k)), repr(float(grid.sigma[g][j]))])


def load_grid_csv(path):
    """Load a grid dump as a list of records (dicts with parsed values)."""
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            rec = {"k": int(row["k"]), "id": int(row["id"]), "parent_id": int(row["parent_id"])}
            rec["center"] = tuple(float(row[c]) for c in rd.fieldnames if c.startswith("center_"))
            rec["ell"] = float(row["ell"])
            rec["sigma_weight"] = float(row["sigma_weight"])
            out.append(rec)
    return out


def write_records_csv(records, path):
    d = len(records[0]["center"]) if records else 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "id", "parent_id"] + [f"center_{i}" for i in range(d)] + ["ell", "sigma_weight"])
        for r in records:
            wr.writerow([r["k"], r["id"], r["parent_id"]] + [repr(v) for v in r["center"]]
                        + [repr(r["ell"]), repr(r["sigma_weight"])])
