"""Carleson gradient estimates, a stopping-time approximant and cone functionals.

The approximant phi is piecewise constant on Whitney cells, so its gradient
is the jump measure on cell faces: a face F between cells with values a and b
carries |a - b| area(F).  All functionals below are sums over faces.

A face is attributed to exactly one of its two cells (the smaller cell, ties
broken by index), and a cell family "contains" a face when it contains the
owning cell and phi is defined on the other one.  With this convention the
cone functional is additive over any partition of a cone's cells.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .counting import build_cone
from .errors import ParameterError
from .whitney import CollarWarning, whitney_decompose

FD_RATIO = 1e-2
BALL_LEVELS = 8


# ---------------------------------------------------------------------------
# Carleson gradient norm of a solution


@dataclass
class CarlesonGradientReport:
    value: float  # sup over balls
    per_ball: list
    n_cells: list
    flagged: int  # cells whose FD step exceeded FD_RATIO * delta
    richardson: float  # relative change of |grad u|^2 when the step is halved, at one probe cell

    def as_dict(self):
        return {"value": self.value, "per_ball": list(self.per_ball), "n_cells": list(self.n_cells),
                "flagged": self.flagged, "richardson": self.richardson}


def _fd_gradient(u, X, h):
    n, d = X.shape
    P = np.concatenate([X + s * h[:, None] * e for e in np.eye(d) for s in (1.0, -1.0)])
    v = np.asarray(u(P), dtype=float).reshape(2 * d, n)
    return ((v[0::2] - v[1::2]) / (2 * h)).T


def carleson_gradient_norm(u, scene, balls, fd_ratio=FD_RATIO, levels=BALL_LEVELS):
    """sup over balls of (1/r^n) sum_J |grad u(c_J)|^2 delta(c_J) vol(J).

    ``u`` maps an ``(N, d)`` array of interior points to values.  The cells
    are the Whitney cells of Omega in the box around each ball, refined down
    to r 2^-levels, and a cell counts when its centre lies in the ball.
    Gradients are central differences with step ``fd_ratio * delta``.
    """
    if not fd_ratio > 0:
        raise ParameterError("the FD step ratio must be positive")
    n = scene.ambient_dim - 1
    per, counts = [], []
    flagged = 0
    richardson = 0.0
    for x, r in balls:
        x = np.asarray(x, dtype=float)
        r = float(r)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CollarWarning)
            cells = whitney_decompose(scene, (x - r, x + r), r * 2.0**-levels)
        C = cells.centers
        inside = np.linalg.norm(C - x, axis=1) <= r
        inside &= cells.in_omega
        C = C[inside]
        vol = cells.side[inside] ** scene.ambient_dim
        delta = scene.distance(C)
        h = fd_ratio * delta
        if fd_ratio > FD_RATIO:
            flagged += len(C)
        if len(C) == 0:
            per.append(0.0)
            counts.append(0)
            continue
        g = _fd_gradient(u, C, h)
        g2 = np.einsum("ij,ij->i", g, g)
        per.append(float(np.sum(g2 * delta * vol) / r**n))
        counts.append(int(len(C)))
        if richardson == 0.0:
            i = int(np.argmax(g2 * delta * vol))
            gh = _fd_gradient(u, C[i:i + 1], h[i:i + 1] / 2)[0]
            richardson = float(abs(gh @ gh - g2[i]) / max(g2[i], 1e-300))
    return CarlesonGradientReport(max(per, default=0.0), per, counts, flagged, richardson)


# ---------------------------------------------------------------------------
# faces


@dataclass
class Faces:
    """Touching cell pairs with a face of positive area.

    ``owner`` is the cell the face is attributed to, ``other`` its neighbour.
    """

    owner: np.ndarray
    other: np.ndarray
    area: np.ndarray
    mid: np.ndarray
    delta: np.ndarray


def cell_faces(cells, scene):
    A = cells.adjacency.tocoo()
    keep = A.row < A.col
    i, j = A.row[keep].astype(np.int64), A.col[keep].astype(np.int64)
    lo = np.maximum(cells.lo[i], cells.lo[j])
    hi = np.minimum(cells.hi[i], cells.hi[j])
    ext = hi - lo
    d = cells.dim
    # a face has exactly one degenerate extent; corners and edges touch in more
    flat = np.isclose(ext, 0.0, atol=1e-12 * np.maximum(cells.side[i], cells.side[j])[:, None])
    face = flat.sum(axis=1) == 1
    i, j, lo, hi, ext = i[face], j[face], lo[face], hi[face], ext[face]
    area = np.prod(np.where(flat[face], 1.0, ext), axis=1)
    mid = 0.5 * (lo + hi)
    small_i = (cells.side[i] < cells.side[j]) | ((cells.side[i] == cells.side[j]) & (i < j))
    owner = np.where(small_i, i, j)
    other = np.where(small_i, j, i)
    return Faces(owner, other, area, mid, scene.distance(mid) if len(mid) else np.zeros(0))


# ---------------------------------------------------------------------------
# the approximant


@dataclass
class Approximant:
    cells: object  # WhitneyCells
    scene: object
    eps: float
    domain: np.ndarray  # cell indices where phi is defined
    values: np.ndarray  # phi per cell of ``cells`` (nan off the domain)
    u_values: np.ndarray  # u per cell (nan off the domain)
    pieces: list  # (anchor cube, member cubes) per constant piece
    faces: Faces
    refined: int = 0
    history: list = field(default_factory=list)  # deviation before and after refinement

    @property
    def deviation(self):
        d = np.abs(self.u_values[self.domain] - self.values[self.domain])
        return float(d.max()) if len(d) else 0.0

    def jumps(self):
        v = self.values
        j = np.abs(v[self.faces.owner] - v[self.faces.other])
        return np.where(np.isnan(j), 0.0, j)

    def carleson_sums(self, balls):
        """(1/r^n) sum of |jump| area over faces with midpoint in B(x, r), per ball."""
        n = self.scene.ambient_dim - 1
        tv = self.jumps() * self.faces.area
        out = []
        for x, r in balls:
            m = np.linalg.norm(self.faces.mid - np.asarray(x, dtype=float), axis=1) <= r
            out.append(float(tv[m].sum() / r**n))
        return out

    def as_dict(self):
        return {"eps": self.eps, "deviation": self.deviation, "n_cells": int(len(self.domain)),
                "n_pieces": len(self.pieces), "refined": self.refined, "history": list(self.history)}


def _evaluate(u, cells, idx):
    if callable(u):
        return np.asarray(u(cells.centers[idx]), dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (len(cells),):
        raise ParameterError("u values must be given per Whitney cell")
    return u[idx]


def _anchor_cell(regions, grid, q):
    reg = regions.by_cube[grid.cube(*q).flat]
    if len(reg.members) == 0:
        return -1
    return int(regions.sample_cells(grid.cube(*q), 0, 1)[0])


def build_approximant(u, corona, eps, grid, regions, refine=True):
    """Piecewise constant phi: one value per regime, one per bad cube.

    The value of a piece is u at the first sample cell of its top cube's
    region.  Each cell takes the value of the deepest cube whose region holds
    it.  With ``refine`` one round splits every regime whose cells deviate by
    more than eps into its top cube and the subtrees of the top's children,
    and keeps the split only if the regime's own deviation does not grow.
    """
    if not eps > 0:
        raise ParameterError("eps must be positive")
    cells = regions.cells
    pieces = []
    for S in corona.regimes:
        pieces.append((tuple(S.top), sorted(map(tuple, S.cubes))))
    for q in corona.bad:
        pieces.append((tuple(q), [tuple(q)]))
    # deepest cube wins
    n = len(cells)
    owner_gen = np.full(n, -1, dtype=np.int64)
    piece_of = np.full(n, -1, dtype=np.int64)

    def assign(pi, cubes):
        for q in cubes:
            mem = regions.by_cube[grid.cube(*q).flat].members
            take = mem[owner_gen[mem] <= q[0]]
            owner_gen[take] = q[0]
            piece_of[take] = pi

    for pi, (_, cubes) in enumerate(pieces):
        assign(pi, cubes)
    domain = np.nonzero(piece_of >= 0)[0]
    uval = np.full(n, np.nan)
    uval[domain] = _evaluate(u, cells, domain)
    anchors = [_anchor_cell(regions, grid, top) for top, _ in pieces]
    need = np.array(sorted({a for a in anchors if a >= 0 and np.isnan(uval[a])}), dtype=np.int64)
    if len(need):
        uval[need] = _evaluate(u, cells, need)

    def piece_values():
        vals = np.full(n, np.nan)
        av = np.array([uval[a] if a >= 0 else 0.0 for a in anchors])
        vals[domain] = av[piece_of[domain]]
        return vals

    values = piece_values()
    phi = Approximant(cells, grid.scene, float(eps), domain, values, uval, pieces, cell_faces(cells, grid.scene))
    phi.history.append(phi.deviation)
    if not refine:
        return phi
    split = 0
    for pi in range(len(pieces)):
        top, cubes = pieces[pi]
        mine = domain[piece_of[domain] == pi]
        if len(mine) == 0 or len(cubes) == 1:
            continue
        before = np.abs(uval[mine] - values[mine]).max()
        if before <= eps:
            continue
        # candidate split: the top alone, and one piece per child subtree
        subs = {}
        for q in cubes:
            if q == top:
                continue
            child = (top[0] + 1, grid.ancestor(q[0], q[1], top[0] + 1))
            subs.setdefault(child, []).append(q)
        trial_piece = piece_of.copy()
        trial_gen = owner_gen.copy()
        new = [(top, [top])] + [(c, sorted(v)) for c, v in sorted(subs.items())]
        new_ids = [pi] + list(range(len(pieces), len(pieces) + len(new) - 1))
        new_anchor = [_anchor_cell(regions, grid, t) for t, _ in new]
        for a in new_anchor:
            if a >= 0 and np.isnan(uval[a]):
                uval[a] = _evaluate(u, cells, np.array([a]))[0]
        trial_gen[mine] = -1
        for nid, (_, cs) in zip(new_ids, new):
            for q in cs:
                mem = regions.by_cube[grid.cube(*q).flat].members
                mem = mem[np.isin(mem, mine)]
                take = mem[trial_gen[mem] <= q[0]]
                trial_gen[take] = q[0]
                trial_piece[take] = nid
        av = {nid: (uval[a] if a >= 0 else 0.0) for nid, a in zip(new_ids, new_anchor)}
        after = max(abs(uval[c] - av[int(trial_piece[c])]) for c in mine)
        if after <= before:
            piece_of, owner_gen = trial_piece, trial_gen
            pieces[pi] = new[0]
            anchors[pi] = new_anchor[0]
            for (t, cs), a in zip(new[1:], new_anchor[1:]):
                pieces.append((t, cs))
                anchors.append(a)
            values = piece_values()
            split += 1
    phi.values = values
    phi.pieces = pieces
    phi.refined = split
    phi.history.append(phi.deviation)
    return phi


# ---------------------------------------------------------------------------
# cone functionals


def cone_gradient_functional(phi: Approximant, cone):
    """sum over faces owned by cone cells of |jump| area delta_face^-n."""
    cells = np.asarray(cone.cells if hasattr(cone, "cells") else cone, dtype=np.int64)
    if len(cells) and np.any(np.isnan(phi.values[cells])):
        raise ParameterError("the cone has cells on which phi is not defined")
    n = phi.scene.ambient_dim - 1
    inside = np.zeros(len(phi.values), dtype=bool)
    inside[cells] = True
    f = phi.faces
    sel = inside[f.owner]
    w = phi.jumps()[sel] * f.area[sel] * f.delta[sel] ** (-float(n))
    return float(np.sum(w))


@dataclass
class FubiniReport:
    lhs: float  # sum_x w(x) functional(Gamma(x))
    rhs_exact: float  # sum over faces of the region, weighted by the sigma-mass of nodes whose cone owns them
    rhs_collapsed: float  # integral of |grad phi| over the union region, weighted by delta^-n * delta^n = 1
    overlap_min: float
    overlap_max: float
    n_nodes: int
    n_faces: int

    @property
    def ratio(self):
        return self.lhs / self.rhs_exact if self.rhs_exact > 0 else (1.0 if self.lhs == 0 else math.inf)

    @property
    def collapsed_ratio(self):
        return self.lhs / self.rhs_collapsed if self.rhs_collapsed > 0 else (0.0 if self.lhs == 0 else math.inf)

    @property
    def within(self):
        r = self.collapsed_ratio
        return self.rhs_collapsed == 0 or self.overlap_min * (1 - 1e-9) <= r <= self.overlap_max * (1 + 1e-9)

    def as_dict(self):
        return {"lhs": self.lhs, "rhs_exact": self.rhs_exact, "ratio": self.ratio,
                "rhs_collapsed": self.rhs_collapsed, "collapsed_ratio": self.collapsed_ratio,
                "overlap_min": self.overlap_min, "overlap_max": self.overlap_max, "within": self.within,
                "n_nodes": self.n_nodes, "n_faces": self.n_faces}


def fubini_collapse_check(phi: Approximant, grid, regions, Q0, tau=None, weights=None):
    """Swap the boundary integral and the cone sums over the nodes of Q0.

    The weighted multiplicity m(F) of a face is the total weight of the nodes
    whose cone owns it.  Then lhs equals sum_F TV(F) delta^-n m(F) exactly,
    and lhs / sum_F TV(F) lies between the extremes of m(F) delta^-n, the
    measured overlap constants.
    """
    nodes = np.arange(Q0.nodes.start, Q0.nodes.stop)
    w = grid.weights[nodes] if weights is None else np.asarray(weights, dtype=float)
    if len(w) != len(nodes):
        raise ParameterError("one weight per node of Q0")
    f = phi.faces
    n = phi.scene.ambient_dim - 1
    tv = phi.jumps() * f.area
    mult = np.zeros(len(tv))
    lhs = 0.0
    nv = len(phi.values)
    for x, wx in zip(nodes, w):
        cone = build_cone(grid, regions, ("point", int(x), Q0), tau)
        lhs += wx * cone_gradient_functional(phi, cone)
        inside = np.zeros(nv, dtype=bool)
        inside[cone.cells] = True
        mult += wx * inside[f.owner]
    hit = mult > 0
    dn = f.delta ** (-float(n))
    rhs = float(np.sum(tv[hit] * dn[hit] * mult[hit]))
    collapsed = float(np.sum(tv[hit]))
    active = hit & (tv > 0)
    ov = mult[active] * dn[active]
    return FubiniReport(float(lhs), rhs, collapsed, float(ov.min()) if len(ov) else 0.0,
                        float(ov.max()) if len(ov) else 0.0, int(len(nodes)), int(hit.sum()))
