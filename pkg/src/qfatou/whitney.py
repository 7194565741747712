"""Whitney cells, the collections W_Q^0, the regions U_Q and subcatalogs.

Cells are closed dyadic cubes ``[lo, lo + 2^p]^d``.  The decomposition is the
classical halving scheme: a cube is kept as soon as
``4 diam(J) <= dist(4J, E)`` and split otherwise.  A kept cube whose parent was
split automatically satisfies ``dist(J, E) <= 40 diam(J)``.

Because W_Q^0 only uses cells between ``eta^(1/4) l(Q)`` and ``K^(1/2) l(Q)``,
within ``K^(1/2) l(Q)`` of Q, a *focus* may be passed to stop refining cubes
that cannot contain a member of any W_Q^0.  The membership test stays exact.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyRegionError, ParameterError
from .geometry import SegmentIndex, box_segment_distance
from .scene import unit_ball_volume

TAU0 = 1.0 / 8.0
DEFAULT_ETA = 1e-4
DEFAULT_K = 1e4


class CollarWarning(UserWarning):
    """Refinement stopped at ``min_cell`` with parts of the box untiled."""


@dataclass
class Focus:
    """Parameters that decide which non-Whitney cubes are worth refining."""

    lo: np.ndarray
    hi: np.ndarray
    ell_min: float
    ell_max: float
    eta: float
    K: float

    @classmethod
    def for_grid(cls, grid, eta, K):
        lo, hi = grid_extent(grid)
        return cls(lo, hi, 2.0 ** (-grid.k_max), 2.0 ** (-grid.k_min), eta, K)

    def keep_refining(self, lo, side):
        child = side / 2
        small = child >= self.eta**0.25 * self.ell_min
        g = np.maximum(np.maximum(self.lo - (lo + side[:, None]), lo - self.hi), 0.0)
        d = np.linalg.norm(g, axis=1)
        near = d <= math.sqrt(self.K) * np.minimum(child / self.eta**0.25, self.ell_max)
        return small & near


@dataclass
class BallFocus:
    """Refine near a few balls only, each with its own smallest useful cell."""

    centres: np.ndarray
    radii: np.ndarray
    min_sizes: np.ndarray

    def keep_refining(self, lo, side):
        child = side / 2
        need = np.full(len(lo), np.inf)
        for c, r, m in zip(self.centres, self.radii, self.min_sizes):
            g = np.maximum(np.maximum(lo - c, c - (lo + side[:, None])), 0.0)
            near = np.linalg.norm(g, axis=1) <= r
            need = np.where(near, np.minimum(need, m), need)
        return child >= need


def grid_extent(grid):
    """Bounding box of all nodes and cube centres of a grid."""
    P = np.concatenate([grid.points] + [c for c in grid.center if c is not None])
    return P.min(axis=0), P.max(axis=0)


@dataclass
class WhitneyCells:
    lo: np.ndarray
    level: np.ndarray
    dist: np.ndarray
    dist4: np.ndarray
    label: np.ndarray
    in_omega: np.ndarray
    collar_volume: float = 0.0
    collar_count: int = 0
    dropped: int = 0
    adjacency: sparse.csr_matrix | None = None
    min_cell: float = 0.0
    _tree: cKDTree | None = field(default=None, repr=False)

    @cached_property
    def side(self):
        return np.ldexp(1.0, self.level)

    @cached_property
    def hi(self):
        return self.lo + self.side[:, None]

    @cached_property
    def centers(self):
        return self.lo + 0.5 * self.side[:, None]

    @cached_property
    def diam(self):
        return self.side * math.sqrt(self.lo.shape[1])

    @property
    def dim(self):
        return self.lo.shape[1]

    def __len__(self):
        return len(self.level)

    def dilated(self, idx, tau):
        s = self.side[idx]
        c = self.lo[idx] + 0.5 * s[:, None]
        h = 0.5 * (1 + tau) * s[:, None]
        return c - h, c + h

    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.centers)
        return self._tree

    def whitney_ratios(self):
        """(dist(4J,E)/diam J, dist(J,E)/diam J) per cell."""
        return self.dist4 / self.diam, self.dist / self.diam


def _aligned_roots(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ext = hi - lo
    if np.any(ext <= 0):
        raise ParameterError("box must have positive extent in every coordinate")
    p = int(math.floor(math.log2(ext.min())))
    s = 2.0**p
    a = np.floor(lo / s) * s
    b = np.ceil(hi / s) * s
    axes = [np.arange(a[i], b[i], s) for i in range(len(lo))]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))
    return g, p


def whitney_decompose(scene, box, min_cell, focus: Focus | None = None, omega_only=True,
                      max_cells=5_000_000):
    """Whitney cells of Omega inside ``box`` (cubes meeting the box).

    Cubes that fail the Whitney test and are too small, or outside the focus,
    form the untiled *collar*; its volume is recorded and a
    :class:`CollarWarning` is issued when the box itself is left untiled near E.
    """
    if min_cell <= 0:
        raise ParameterError("min_cell must be positive")
    lo, hi = box
    roots, p = _aligned_roots(lo, hi)
    d = roots.shape[1]
    sq = math.sqrt(d)
    cur_lo = roots
    cur_p = np.full(len(roots), p, dtype=np.int64)
    out_lo, out_p, out_d, out_d4 = [], [], [], []
    collar_vol = 0.0
    collar_n = 0
    dropped = 0
    total = 0
    first = True
    while len(cur_lo):
        side = np.ldexp(1.0, cur_p)
        c = cur_lo + 0.5 * side[:, None]
        d4 = scene.box_distance(c - 2 * side[:, None], c + 2 * side[:, None])
        ok = 4 * side * sq <= d4
        if np.any(ok):
            dj = scene.box_distance(cur_lo[ok], cur_lo[ok] + side[ok, None])
            good = dj <= 40 * side[ok] * sq
            if first:
                # root cubes have no split parent to vouch for the upper bound
                dropped += int((~good).sum())
            else:
                good[:] = True
            idx = np.nonzero(ok)[0][good]
            if omega_only:
                keep = scene.in_omega(c[idx])
                idx = idx[keep]
                dj = dj[good][keep]
            else:
                dj = dj[good]
            out_lo.append(cur_lo[idx])
            out_p.append(cur_p[idx])
            out_d.append(dj)
            out_d4.append(d4[idx])
            total += len(idx)
        rest = np.nonzero(~ok)[0]
        if omega_only and len(rest):
            # a cube that misses E lies in one component; drop it if not in Omega
            dj = scene.box_distance(cur_lo[rest], cur_lo[rest] + side[rest, None])
            away = (dj > 0) & ~scene.in_omega(c[rest])
            rest = rest[~away]
        can = side[rest] / 2 >= min_cell
        if focus is not None:
            can &= focus.keep_refining(cur_lo[rest], side[rest])
        stop = rest[~can]
        collar_vol += float(np.sum(side[stop] ** d))
        collar_n += len(stop)
        split = rest[can]
        if total + 2**d * len(split) > max_cells:
            raise ParameterError(f"Whitney decomposition exceeds {max_cells} cells; raise min_cell or narrow the box")
        half = side[split] / 2
        offs = np.stack(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij"), -1).reshape(-1, d)
        cur_lo = (cur_lo[split][:, None, :] + offs[None, :, :] * half[:, None, None]).reshape(-1, d)
        cur_p = np.repeat(cur_p[split] - 1, 2**d)
        first = False
    if out_lo:
        L = np.concatenate(out_lo)
        P = np.concatenate(out_p)
        D = np.concatenate(out_d)
        D4 = np.concatenate(out_d4)
    else:
        L = np.zeros((0, d))
        P = np.zeros(0, dtype=np.int64)
        D = np.zeros(0)
        D4 = np.zeros(0)
    order = np.lexsort(tuple(L[:, i] for i in range(d - 1, -1, -1)) + (-P,))
    L, P, D, D4 = L[order], P[order], D[order], D4[order]
    C = L + 0.5 * np.ldexp(1.0, P)[:, None]
    label = scene.side(C) if len(C) else np.zeros(0, dtype=np.int64)
    inom = scene.in_omega(C) if len(C) else np.zeros(0, dtype=bool)
    cells = WhitneyCells(L, P, D, D4, label, inom, collar_vol, collar_n, dropped, min_cell=min_cell)
    cells.adjacency = touching_pairs(cells)
    if collar_n and focus is None:
        warnings.warn(f"{collar_n} cubes left untiled near E (volume {collar_vol:.3g})", CollarWarning,
                      stacklevel=2)
    return cells


def touching_pairs(cells: WhitneyCells, max_ratio_log2=4):
    """Sparse symmetric adjacency of cells sharing at least a boundary point."""
    n = len(cells)
    if n == 0:
        return sparse.csr_matrix((0, 0), dtype=bool)
    d = cells.dim
    levels = np.unique(cells.level)
    by_level = {p: np.nonzero(cells.level == p)[0] for p in levels}
    trees = {p: cKDTree(cells.centers[idx]) for p, idx in by_level.items()}
    rows, cols = [], []
    lo, hi = cells.lo, cells.hi
    for p in levels:
        for q in levels:
            if q < p or q - p > max_ratio_log2:
                continue
            r = 0.5 * (2.0**p + 2.0**q) * math.sqrt(d) * (1 + 1e-12)
            pairs = trees[p].query_ball_tree(trees[q], r)
            I = np.repeat(by_level[p], [len(x) for x in pairs])
            J = by_level[q][np.fromiter((j for x in pairs for j in x), dtype=np.int64, count=len(I))]
            keep = I != J
            I, J = I[keep], J[keep]
            touch = np.all((lo[I] <= hi[J]) & (lo[J] <= hi[I]), axis=1)
            rows.append(I[touch])
            cols.append(J[touch])
    R = np.concatenate(rows)
    Cc = np.concatenate(cols)
    A = sparse.coo_matrix((np.ones(len(R), dtype=bool), (R, Cc)), shape=(n, n)).tocsr()
    return (A + A.T).astype(bool).tocsr()


def dilates_meet(cells, i, j, tau):
    lo_i, hi_i = cells.dilated(np.atleast_1d(i), tau)
    lo_j, hi_j = cells.dilated(np.atleast_1d(j), tau)
    # interiors of the dilates intersect
    return np.all((lo_i < hi_j) & (lo_j < hi_i), axis=1)


# ---------------------------------------------------------------------------
# W_Q^0


def wq0_test(ell_J, dist_JQ, ell_Q, eta, K):
    """The three inequalities defining membership in W_Q^0, exactly."""
    lo = eta**0.25 * ell_Q
    hi = math.sqrt(K) * ell_Q
    return (lo <= ell_J) & (ell_J <= hi) & (dist_JQ <= hi)


def packing_bound(eta, K, d):
    """Volume bound N(eta, K) on #W_Q^0 (cells are disjoint, large and nearby)."""
    R = 1 + math.sqrt(K) * (1 + math.sqrt(d))
    return int(math.floor(unit_ball_volume(d) * R**d / eta ** (d / 4)))


def _cube_box_distance(grid, Q, lo, hi, seg_index_cache):
    if grid.method == "box":
        qlo, qhi = grid.cube_box(Q.k, Q.id)
        g = np.maximum(np.maximum(qlo - hi, lo - qhi), 0.0)
        return np.linalg.norm(g, axis=1)
    key = (Q.k, Q.id)
    idx = seg_index_cache.get(key)
    if idx is None:
        a, b = grid.cube_segments(Q.k, Q.id)
        idx = SegmentIndex(a, b)
        if len(seg_index_cache) < 4096:
            seg_index_cache[key] = idx
    if len(idx) <= 8:
        out = np.full(len(lo), np.inf)
        for s in range(len(idx)):
            A = np.broadcast_to(idx.a[s], lo.shape)
            B = np.broadcast_to(idx.b[s], lo.shape)
            out = np.minimum(out, box_segment_distance(lo, hi, A, B))
        return out
    return idx.box_distance(lo, hi)


def collect_WQ0(grid, cells: WhitneyCells, eta=DEFAULT_ETA, K=DEFAULT_K, strict=True):
    """Map flat cube id -> sorted cell indices of W_Q^0.

    Raises :class:`EmptyRegionError` naming the first cube with an empty
    collection when ``strict``.
    """
    if not (0 < eta < 1 and K > 1):
        raise ParameterError("need 0 < eta < 1 < K")
    out = {}
    tree = cells.tree()
    side = cells.side
    hd = 0.5 * cells.diam
    cache = {}
    for Q in grid.cubes():
        ell = Q.ell
        R = math.sqrt(K) * ell
        outer = grid.outer[Q.g][Q.id]
        reach = R + outer + 0.5 * math.sqrt(cells.dim) * R
        cand = np.asarray(tree.query_ball_point(Q.center, reach), dtype=np.int64)
        if len(cand):
            cand = cand[(side[cand] >= eta**0.25 * ell) & (side[cand] <= R)]
        if len(cand):
            # cheap certificates first, exact box distance for the undecided
            dc = np.linalg.norm(cells.centers[cand] - Q.center, axis=1)
            surely_out = dc - hd[cand] - outer > R
            cand = cand[~surely_out]
        if len(cand):
            dist = _cube_box_distance(grid, Q, cells.lo[cand], cells.hi[cand], cache)
            cand = cand[wq0_test(side[cand], dist, ell, eta, K)]
        members = np.sort(cand)
        if strict and len(members) == 0:
            raise EmptyRegionError((Q.k, Q.id))
        out[int(Q.flat)] = members
    return out


# ---------------------------------------------------------------------------
# U_Q


@dataclass
class WhitneyRegion:
    cube: tuple
    eta: float
    K: float
    tau: float
    members: np.ndarray
    component: np.ndarray  # component label per member, 0-based in canonical order

    @property
    def n_components(self):
        return int(self.component.max() + 1) if len(self.component) else 0

    def component_cells(self, i):
        return self.members[self.component == i]


def build_UQ(cells: WhitneyCells, members, tau=TAU0 / 2, cube=None, eta=DEFAULT_ETA, K=DEFAULT_K):
    """Connected components of U_Q = union of interiors of J*(tau), J in W_Q^0."""
    if not 0 < tau <= TAU0 / 2:
        raise ParameterError(f"tau must lie in (0, {TAU0 / 2}]")
    members = np.asarray(members, dtype=np.int64)
    if len(members) == 0:
        return WhitneyRegion(cube, eta, K, tau, members, np.zeros(0, dtype=np.int64))
    sub = cells.adjacency[members][:, members]
    ncomp, lab = connected_components(sub, directed=False)
    # canonical order: lexicographic min corner of each component's smallest-index cell
    first = np.full(ncomp, len(members))
    np.minimum.at(first, lab, np.arange(len(members)))
    corners = cells.lo[members[first]]
    order = np.lexsort(tuple(corners[:, i] for i in range(corners.shape[1] - 1, -1, -1)))
    rank = np.empty(ncomp, dtype=np.int64)
    rank[order] = np.arange(ncomp)
    return WhitneyRegion(cube, eta, K, tau, members, rank[lab])


@dataclass
class Regions:
    """All U_Q of a grid, keyed by flat cube id."""

    grid: object
    cells: WhitneyCells
    eta: float
    K: float
    tau: float
    by_cube: dict

    def region(self, Q):
        return self.by_cube[int(Q.flat)]

    def sample_cells(self, Q, i, s_max=8):
        """Up to ``s_max`` cells of component i: largest first, then by index."""
        reg = self.by_cube[int(Q.flat) if hasattr(Q, "flat") else int(Q)]
        c = reg.component_cells(i)
        order = np.lexsort((c, -self.cells.level[c]))
        return c[order][:s_max]

    def constants(self):
        """Measured C_{eta,K}: ratios of |y - X| to l(Q) over y in Q, X in U_Q."""
        worst = 1.0
        dmin_ratio = math.inf
        dmax_ratio = 0.0
        cache = {}
        for f, reg in self.by_cube.items():
            Q = self.grid.flat_to_cube(f)
            if len(reg.members) == 0:
                continue
            lo, hi = self.cells.dilated(reg.members, self.tau)
            near = _cube_box_distance(self.grid, Q, lo, hi, cache).min()
            far = _far_distance(self.grid, Q, lo, hi)
            worst = max(worst, Q.ell / max(near, 1e-300), far / Q.ell)
            dl = (self.cells.dist[reg.members] - 0.5 * self.tau * self.cells.diam[reg.members])
            dh = self.cells.dist[reg.members] + self.cells.diam[reg.members] * (1 + self.tau)
            dmin_ratio = min(dmin_ratio, dl.min() / Q.ell)
            dmax_ratio = max(dmax_ratio, dh.max() / Q.ell)
        return {"C_eta_K": worst, "delta_over_ell_min": dmin_ratio, "delta_over_ell_max": dmax_ratio}


def _far_distance(grid, Q, lo, hi):
    if grid.method == "box":
        qlo, qhi = grid.cube_box(Q.k, Q.id)
        pts = np.array([qlo, qhi])
    else:
        a, b = grid.cube_segments(Q.k, Q.id)
        pts = np.r_[a, b]
    far = 0.0
    d = lo.shape[1]
    corners = np.stack(np.meshgrid(*[[0, 1]] * d, indexing="ij"), -1).reshape(-1, d)
    for cmask in corners:
        C = np.where(cmask[None, :] == 1, hi, lo)
        D = np.linalg.norm(C[:, None, :] - pts[None, :, :], axis=2)
        far = max(far, float(D.max()))
    return far


def build_regions(grid, cells=None, eta=DEFAULT_ETA, K=DEFAULT_K, tau=TAU0 / 2, strict=True,
                  margin_cells=None):
    """W_Q^0 and U_Q components for every cube of ``grid``."""
    if not 0 < tau <= TAU0 / 2:
        raise ParameterError(f"tau must lie in (0, {TAU0 / 2}]")
    if cells is None:
        cells = decompose_for_grid(grid, eta, K)
    wq = collect_WQ0(grid, cells, eta, K, strict=strict)
    by = {}
    for f, mem in wq.items():
        Q = grid.flat_to_cube(f)
        by[f] = build_UQ(cells, mem, tau, (Q.k, Q.id), eta, K)
    return Regions(grid, cells, eta, K, tau, by)


def decompose_for_grid(grid, eta=DEFAULT_ETA, K=DEFAULT_K, omega_only=True):
    """A focused decomposition covering every W_Q^0 of ``grid``."""
    focus = Focus.for_grid(grid, eta, K)
    reach = math.sqrt(K) * 2.0 ** (-grid.k_min) * (2 + math.sqrt(grid.scene.ambient_dim))
    lo = focus.lo - reach
    hi = focus.hi + reach
    min_cell = eta**0.25 * 2.0 ** (-grid.k_max) / 2
    return whitney_decompose(grid.scene, (lo, hi), min_cell, focus=focus, omega_only=omega_only)


# ---------------------------------------------------------------------------
# subcatalogs


@dataclass
class Subcatalog:
    strategy: str
    seed: int | None
    choice: np.ndarray  # flat cube id -> component index

    def __getitem__(self, flat):
        return int(self.choice[int(flat)])

    def __len__(self):
        return len(self.choice)


def select_subcatalog(regions: Regions, strategy="interior-first", seed=None):
    """Fix one component per cube."""
    n = regions.grid.n_cubes
    choice = np.full(n, -1, dtype=np.int64)
    cells = regions.cells
    if strategy.startswith("adversarial-random"):
        if seed is None:
            raise ParameterError("adversarial-random needs a seed")
        ss = np.random.SeedSequence(seed)
        rng = np.random.Generator(np.random.Philox(ss))
        draws = rng.random(n)
    for f in range(n):
        reg = regions.by_cube.get(f)
        if reg is None or reg.n_components == 0:
            continue
        if strategy == "lowest-index":
            choice[f] = 0
        elif strategy == "interior-first":
            for i in range(reg.n_components):
                if np.all(cells.in_omega[reg.component_cells(i)]):
                    choice[f] = i
                    break
            else:
                raise EmptyRegionError(reg.cube, f"no component of U_Q inside Omega for cube {reg.cube}")
        elif strategy.startswith("adversarial-random"):
            choice[f] = int(draws[f] * reg.n_components)
        else:
            raise ParameterError(f"unknown subcatalog strategy {strategy!r}")
    return Subcatalog(strategy, seed, choice)


def dump_regions_csv(regions: Regions, catalog: Subcatalog | None, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "id", "cells", "components", "chosen"])
        for f in sorted(regions.by_cube):
            reg = regions.by_cube[f]
            k, j = reg.cube
            comps = ";".join(" ".join(str(c) for c in reg.component_cells(i)) for i in range(reg.n_components))
            chosen = catalog[f] if catalog is not None else ""
            wr.writerow([k, j, " ".join(map(str, reg.members)), comps, chosen])


# ---------------------------------------------------------------------------
# single cubes outside a grid


@dataclass
class LocalCube:
    """A dyadic cube given by its geometry rather than by a grid slot.

    ``box`` is ``(lo, hi)`` for flat cubes of a hyperplane, ``segments`` is
    ``(a, b)`` for planar chain cubes.
    """

    k: int
    center: np.ndarray
    box: tuple | None = None
    segments: tuple | None = None

    @property
    def ell(self):
        return 2.0 ** (-self.k)

    def distance(self, lo, hi):
        if self.box is not None:
            qlo, qhi = self.box
            g = np.maximum(np.maximum(qlo - hi, lo - qhi), 0.0)
            return np.linalg.norm(g, axis=1)
        idx = SegmentIndex(*self.segments)
        return idx.box_distance(lo, hi)

    def points(self):
        if self.box is not None:
            lo, hi = self.box
            d = len(lo)
            corners = np.stack(np.meshgrid(*[[0, 1]] * d, indexing="ij"), -1).reshape(-1, d)
            return np.where(corners == 1, hi, lo)
        a, b = self.segments
        return np.r_[a, b]

    @property
    def outer(self):
        return float(np.max(np.linalg.norm(self.points() - self.center, axis=1)))


def cube_region(scene, cube: LocalCube, eta=DEFAULT_ETA, K=DEFAULT_K, tau=TAU0 / 2):
    """Whitney cells, W_Q^0 and U_Q components of one cube.

    Returns ``(cells, region)``; the decomposition is local to the cube.
    """
    ell = cube.ell
    d = scene.ambient_dim
    reach = math.sqrt(K) * ell * (2 + math.sqrt(d)) + cube.outer
    lo = cube.center - reach
    hi = cube.center + reach
    min_cell = eta**0.25 * ell / 2
    focus = BallFocus(cube.center[None, :], np.array([reach]), np.array([eta**0.25 * ell]))
    cells = whitney_decompose(scene, (lo, hi), min_cell, focus=focus)
    side = cells.side
    cand = np.nonzero((side >= eta**0.25 * ell) & (side <= math.sqrt(K) * ell))[0]
    dist = cube.distance(cells.lo[cand], cells.hi[cand])
    members = np.sort(cand[wq0_test(side[cand], dist, ell, eta, K)])
    if len(members) == 0:
        raise EmptyRegionError((cube.k, -1))
    return cells, build_UQ(cells, members, tau, (cube.k, -1), eta, K)


def region_constant(cells, region, cube):
    """C with C^-1 l <= |y - X| <= C l for y in the cube and X in U_Q."""
    lo, hi = cells.dilated(region.members, region.tau)
    near = cube.distance(lo, hi).min()
    P = cube.points()
    d = lo.shape[1]
    corners = np.stack(np.meshgrid(*[[0, 1]] * d, indexing="ij"), -1).reshape(-1, d)
    far = 0.0
    for cm in corners:
        Cn = np.where(cm[None, :] == 1, hi, lo)
        far = max(far, float(np.linalg.norm(Cn[:, None, :] - P[None, :, :], axis=2).max()))
    return max(1.0, cube.ell / max(near, 1e-300), far / cube.ell)
