"""Planar segment geometry: distances, clipping and disk intersections.

Everything here works on arrays of segments given by endpoints ``a`` and ``b``
of shape ``(m, 2)``.  Routines come in two flavours: *paired* (point ``i``
against segment ``i``) and *nearest* (each point against a whole segment set,
through :class:`SegmentIndex`).
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def point_segment_distance(p, a, b):
    """Paired distance from points ``p[i]`` to segments ``[a[i], b[i]]``."""
    p = np.asarray(p, dtype=float)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", p - a, d) / np.where(dd > 0, dd, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.hypot(*(p - proj).T), t


def segment_box_intersects(a, b, lo, hi):
    """Paired Liang-Barsky test: does segment ``[a, b]`` meet the closed box?"""
    t0 = np.zeros(len(a))
    t1 = np.ones(len(a))
    ok = np.ones(len(a), dtype=bool)
    d = b - a
    for ax in range(2):
        for p, q in ((-d[:, ax], a[:, ax] - lo[:, ax]), (d[:, ax], hi[:, ax] - a[:, ax])):
            par = p == 0
            ok &= ~(par & (q < 0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = q / p
            neg = (~par) & (p < 0)
            pos = (~par) & (p > 0)
            t0 = np.where(neg, np.maximum(t0, r), t0)
            t1 = np.where(pos, np.minimum(t1, r), t1)
    return ok & (t0 <= t1)


def point_box_distance(p, lo, hi):
    """Paired Euclidean distance from points to closed axis-aligned boxes."""
    g = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return np.sqrt(np.einsum("ij,ij->i", g, g))


def box_segment_distance(lo, hi, a, b):
    """Paired exact distance between closed boxes and segments in the plane.

    Two disjoint convex polygons realise their distance between a vertex of
    one and an edge of the other, so the minimum over segment endpoints
    against the box and box corners against the segment is exact.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = np.minimum(point_box_distance(a, lo, hi), point_box_distance(b, lo, hi))
    for cx, cy in ((lo[:, 0], lo[:, 1]), (lo[:, 0], hi[:, 1]), (hi[:, 0], lo[:, 1]), (hi[:, 0], hi[:, 1])):
        dc, _ = point_segment_distance(np.column_stack([cx, cy]), a, b)
        d = np.minimum(d, dc)
    return np.where(segment_box_intersects(a, b, lo, hi), 0.0, d)


def disk_segment_length(c, r, a, b):
    """Paired length of ``[a, b]`` inside the closed disk ``B(c, r)``."""
    d = b - a
    L = np.hypot(d[:, 0], d[:, 1])
    u = d / np.where(L > 0, L, 1.0)[:, None]
    w = a - c
    proj = np.einsum("ij,ij->i", w, u)
    perp2 = np.einsum("ij,ij->i", w, w) - proj**2
    disc = r**2 - perp2
    half = np.sqrt(np.maximum(disc, 0.0))
    s0 = np.clip(-proj - half, 0.0, L)
    s1 = np.clip(-proj + half, 0.0, L)
    return np.where(disc > 0, s1 - s0, 0.0)


class SegmentIndex:
    """Exact nearest-segment queries backed by a k-d tree over midpoints.

    A segment with midpoint at distance ``m`` from ``p`` is at distance at
    least ``m - h`` where ``h`` is the largest half-length, which lets the
    k nearest midpoints certify the answer.
    """

    def __init__(self, a, b):
        self.a = np.ascontiguousarray(a, dtype=float)
        self.b = np.ascontiguousarray(b, dtype=float)
        self.mid = 0.5 * (self.a + self.b)
        self.half = 0.5 * np.hypot(*(self.b - self.a).T)
        self.h = float(self.half.max()) if len(self.half) else 0.0
        self.tree = cKDTree(self.mid)
        self.k = min(4, len(self.a))
        self._bvh = None

    def __len__(self):
        return len(self.a)

    def nearest(self, p):
        """Return ``(distance, segment index, parameter t)`` for each point."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        n = len(p)
        k = self.k
        md, mi = self.tree.query(p, k=k)
        if k == 1:
            md = md[:, None]
            mi = mi[:, None]
        A = self.a[mi]
        AB = self.b[mi] - A
        W = p[:, None, :] - A
        L2 = np.einsum("nkd,nkd->nk", AB, AB)
        t = np.clip(np.einsum("nkd,nkd->nk", W, AB) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        D = W - t[:, :, None] * AB
        dist = np.sqrt(np.einsum("nkd,nkd->nk", D, D))
        j = np.argmin(dist, axis=1)
        r = np.arange(n)
        best, bidx, bt = dist[r, j], mi[r, j].astype(np.int64), t[r, j]
        if k < len(self.a):
            unsure = np.nonzero(md[:, -1] - self.h < best)[0]
            if len(unsure):
                rows, cand = self.ball_pairs(p[unsure], best[unsure] + self.h)
                dj, tj = point_segment_distance(p[unsure][rows], self.a[cand], self.b[cand])
                order = np.lexsort((dj, rows))
                rows, cand, dj, tj = rows[order], cand[order], dj[order], tj[order]
                first = np.r_[True, rows[1:] != rows[:-1]]
                r0, c0, d0, t0 = unsure[rows[first]], cand[first], dj[first], tj[first]
                better = d0 < best[r0]
                r0, c0, d0, t0 = r0[better], c0[better], d0[better], t0[better]
                best[r0], bidx[r0], bt[r0] = d0, c0, t0
        return best, bidx, bt

    def distance(self, p):
        return self.nearest(p)[0]

    def ball_pairs(self, p, r):
        """All (row, segment) pairs with midpoint distance <= r[row].

        Queries are bucketed by radius so each bucket is one C-level
        sparse distance call.
        """
        p = np.atleast_2d(p)
        r = np.asarray(r, dtype=float)
        rows_out, cand_out = [], []
        if len(p) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        b = np.floor(np.log2(np.maximum(r, 1e-300))).astype(np.int64)
        for key in np.unique(b):
            sel = np.nonzero(b == key)[0]
            rmax = float(r[sel].max())
            qt = cKDTree(p[sel])
            m = qt.sparse_distance_matrix(self.tree, rmax, output_type="ndarray")
            i = m["i"].astype(np.int64)
            j = m["j"].astype(np.int64)
            keep = m["v"] <= r[sel][i]
            rows_out.append(sel[i[keep]])
            cand_out.append(j[keep])
        rows = np.concatenate(rows_out)
        cand = np.concatenate(cand_out)
        # points at exactly zero distance are not reported as matrix entries
        zero_r = np.nonzero(r >= 0)[0]
        md, mi = self.tree.query(p[zero_r], k=1)
        z = md == 0
        if np.any(z):
            rows = np.r_[rows, zero_r[z]]
            cand = np.r_[cand, mi[z]]
        return rows, cand

    def box_distance(self, lo, hi):
        """Exact distance from each closed box to the segment union."""
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        c = 0.5 * (lo + hi)
        ub = self.distance(c)
        # a box containing the disc B(c, dc) certainly meets the set
        inscribed = 0.5 * np.min(hi - lo, axis=1)
        out = np.where(ub <= inscribed, 0.0, ub)
        todo = np.nonzero(ub > inscribed)[0]
        if len(todo):
            if self._bvh is None:
                self._bvh = SegmentBVH(self.a, self.b)
            out[todo] = self._bvh.box_distance(lo[todo], hi[todo], ub[todo])
        return out


class SegmentBVH:
    """Bounding-volume hierarchy over segments for exact box queries.

    Queries run breadth first over all boxes at once.  A node survives while
    its bounding box is no farther than the best distance found so far, so
    the segment realising the minimum is never pruned.
    """

    def __init__(self, a, b, leaf_size=8):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        mid = 0.5 * (self.a + self.b)
        perm = np.arange(len(self.a))
        starts, ends, kids = [], [], []
        stack = [(0, len(perm), -1, 0)]
        # nodes are numbered in creation order; children recorded on the parent
        while stack:
            s, e, parent, slot = stack.pop()
            node = len(starts)
            starts.append(s)
            ends.append(e)
            kids.append([-1, -1])
            if parent >= 0:
                kids[parent][slot] = node
            if e - s > leaf_size:
                seg = perm[s:e]
                ext = mid[seg].max(axis=0) - mid[seg].min(axis=0)
                order = np.argsort(mid[seg, int(np.argmax(ext))], kind="stable")
                perm[s:e] = seg[order]
                m = (s + e) // 2
                stack.append((m, e, node, 1))
                stack.append((s, m, node, 0))
        self.perm = perm
        self.start = np.asarray(starts)
        self.end = np.asarray(ends)
        self.kids = np.asarray(kids, dtype=np.int64)
        pa, pb = self.a[perm], self.b[perm]
        lo_s = np.minimum(pa, pb)
        hi_s = np.maximum(pa, pb)
        self.lo = np.array([lo_s[s:e].min(axis=0) for s, e in zip(starts, ends)])
        self.hi = np.array([hi_s[s:e].max(axis=0) for s, e in zip(starts, ends)])
        self.first = pa[self.start]

    def box_distance(self, lo, hi, ub):
        """Exact box-to-union distances given valid upper bounds ``ub``."""
        ub = np.array(ub, dtype=float)
        q = np.arange(len(lo))
        node = np.zeros(len(lo), dtype=np.int64)
        while len(q):
            g = np.maximum(np.maximum(self.lo[node] - hi[q], lo[q] - self.hi[node]), 0.0)
            lb = np.sqrt(np.einsum("ij,ij->i", g, g))
            keep = lb <= ub[q]
            q, node = q[keep], node[keep]
            np.minimum.at(ub, q, point_box_distance(self.first[node], lo[q], hi[q]))
            leaf = self.kids[node, 0] < 0
            ql, nl = q[leaf], node[leaf]
            if len(ql):
                cnt = self.end[nl] - self.start[nl]
                rows = np.repeat(ql, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                seg = self.perm[np.repeat(self.start[nl], cnt) + offs]
                dd = box_segment_distance(lo[rows], hi[rows], self.a[seg], self.b[seg])
                np.minimum.at(ub, rows, dd)
            qi, ni = q[~leaf], node[~leaf]
            q = np.repeat(qi, 2)
            node = self.kids[ni].reshape(-1)
        return ub
