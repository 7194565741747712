"""Harmonic-measure density stopping and the low-density iteration.

For a cube R with pole p_R the low-density cubes LD(R) are the maximal
Q in R with

    omega^{p_R}(Q) / sigma(Q) <= delta * omega^{p_R}(R) / sigma(R),

and the high-density cubes HD(R) the maximal Q with the dilate 2Q above
A times the density of 2R.  All masses come from one exit sample from the
pole, so every comparison inside a tree shares its random numbers.

A comparison is accepted when the estimate clears its threshold by two
standard errors.  Otherwise the walk budget doubles, at most twice, and the
cube is then recorded as indeterminate.  Indeterminate cubes are neither
stopped nor descended into.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dyadic import dilate_nodes
from ..errors import ParameterError
from ..harmonic import CHUNK, HarmonicDomain, sample_exits
from .calibration import CalibrationParams, place_poles

PURPOSE_DENSITY = 11
MARGIN = 2.0
DOUBLINGS = 2


def exit_nodes(grid, points, tol=None):
    """Nearest grid node of each exit point, or -1 beyond ``tol``.

    ``tol`` defaults to the side of a leaf, so exits off the gridded part of
    the boundary (outside a window, say) are not attributed to any cube.
    """
    points = np.atleast_2d(points)
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    tol = 2.0 ** (-grid.k_max) if tol is None else tol
    d, i = grid.nearest_node(points)
    return np.where(d <= tol, i, -1).astype(np.int64)


def binomial_stderr(p, n):
    """Standard error of a hit frequency, floored so that p = 0 is not exact."""
    p = np.asarray(p, dtype=float)
    return np.sqrt((p * (1 - p) + 1.0 / n) / n)


class NodeHits:
    """Exit counts per grid node from one start point, at growing budgets."""

    def __init__(self, grid, domain, X, n_walks, seed, key):
        if n_walks % CHUNK:
            raise ParameterError(f"walk budgets are multiples of {CHUNK} so that doubling reuses walks")
        self.grid, self.domain, self.X = grid, domain, np.asarray(X, dtype=float)
        self.seed, self.key = seed, key
        self.base = int(n_walks)
        self._levels = {}

    def level(self, i):
        """``(cumulative hits, n)`` at budget base * 2^i."""
        if i not in self._levels:
            n = self.base * 2**i
            ex = sample_exits(self.domain, self.X, n, self.seed, PURPOSE_DENSITY, self.key)
            ok = ~(ex.capped | ex.escaped)
            nodes = exit_nodes(self.grid, ex.points[ok])
            nodes = nodes[nodes >= 0]
            counts = np.bincount(nodes, minlength=len(self.grid.points))
            cum = np.r_[0, np.cumsum(counts)]
            self._levels[i] = (cum, counts, n, int(ex.capped.sum()))
        cum, counts, n, _ = self._levels[i]
        return cum, counts, n

    def mass(self, sl, i=0):
        cum, _, n = self.level(i)
        return (cum[sl.stop] - cum[sl.start]) / n, n

    def mass_of_mask(self, mask, i=0):
        _, counts, n = self.level(i)
        return counts[mask].sum() / n, n

    @property
    def budgets(self):
        return sorted(self.base * 2**i for i in self._levels)

    @property
    def capped(self):
        return sum(v[3] for v in self._levels.values())


@dataclass
class DensityStoppingState:
    root: tuple
    pole: np.ndarray
    A: float
    delta: float
    LD: list
    HD: list
    ratio: dict  # (k, j) -> measured density ratio against the root
    stderr: dict
    indeterminate: list
    budgets: list
    max_generation: int
    too_deep: list = field(default_factory=list)
    hits: NodeHits | None = field(default=None, repr=False)

    def as_dict(self):
        return {"root": list(self.root), "pole": self.pole.tolist(), "A": self.A, "delta": self.delta,
                "LD": [list(q) for q in self.LD], "HD": [list(q) for q in self.HD],
                "indeterminate": [list(q) for q in self.indeterminate], "budgets": self.budgets,
                "max_generation": self.max_generation}


def _decide(get, threshold, below):
    """Compare a mass with its threshold at growing budgets.

    ``get(i)`` returns ``(mass, n)``.  Result is True/False when decisive at
    MARGIN standard errors and None when still undecided after DOUBLINGS.
    """
    for i in range(DOUBLINGS + 1):
        m, n = get(i)
        se = float(binomial_stderr(m, n))
        if abs(m - threshold) >= MARGIN * se:
            return (m < threshold) if below else (m > threshold), m, se
    return None, m, se


def density_stopping(grid, R, p_R, A=math.inf, delta=0.1, domain: HarmonicDomain | None = None,
                     n_walks=4096, seed=0, max_generation=None):
    """HD(R) and LD(R) by top-down traversal from the pole ``p_R``.

    The traversal stops on the first qualifying cube of every branch.
    ``max_generation`` bounds how deep the search goes (default: the leaves).
    """
    if not A > 1:
        raise ParameterError("the high-density threshold A must exceed 1")
    if not 0 < delta < 1:
        raise ParameterError("the low-density threshold must lie in (0, 1)")
    domain = domain or HarmonicDomain(grid.scene, h=1e-2 * 2.0 ** (-grid.k_max))
    max_generation = grid.k_max if max_generation is None else min(int(max_generation), grid.k_max)
    hits = NodeHits(grid, domain, p_R, n_walks, seed, R.flat)
    mR, _ = hits.mass(R.nodes)
    dens_R = mR / R.sigma
    if A < math.inf:
        mask2R = dilate_nodes(grid, R, 2)
        dens_2R = hits.mass_of_mask(mask2R)[0] / grid.weights[mask2R].sum()
    LD, HD, indet = [], [], []
    ratio, stderr = {}, {}
    frontier = list(R.children)
    while frontier:
        nxt = []
        for Q in frontier:
            key = (Q.k, Q.id)
            t_low = delta * dens_R * Q.sigma
            low, m, se = _decide(lambda i, Q=Q: hits.mass(Q.nodes, i), t_low, below=True)
            ratio[key] = (m / Q.sigma) / dens_R if dens_R > 0 else math.inf
            stderr[key] = (se / Q.sigma) / dens_R if dens_R > 0 else math.inf
            if low:
                LD.append(key)
                continue
            if A < math.inf:
                mask = dilate_nodes(grid, Q, 2)
                t_high = A * dens_2R * grid.weights[mask].sum()
                high, _, _ = _decide(lambda i, mask=mask: hits.mass_of_mask(mask, i), t_high, below=False)
                if high:
                    HD.append(key)
                    continue
                if high is None:
                    indet.append(key)
                    continue
            if low is None:
                indet.append(key)
                continue
            if Q.k < max_generation:
                nxt.extend(Q.children)
        frontier = nxt
    return DensityStoppingState((R.k, R.id), np.asarray(p_R, dtype=float), float(A), float(delta), sorted(LD),
                                sorted(HD), ratio, stderr, sorted(indet), hits.budgets, max_generation, hits=hits)


# ---------------------------------------------------------------------------
# the iteration


@dataclass
class LDForest:
    root: tuple
    m: int
    levels: list  # levels[k] = LD^k as sorted (k, j) lists; levels[0] = [root]
    states: dict  # cube -> DensityStoppingState of its own LD search
    poles: dict  # cube -> Poles
    F1: list
    F2: list
    E: dict  # cube in F1 -> boolean node mask of E_Q
    dropped: list  # LD cubes too deep to carry poles
    mass_check: dict = field(default_factory=dict)

    def sigma_ratio(self, grid):
        """sum_{F1} sigma / sum_{F2} sigma (1 when both are empty)."""
        s1 = sum(grid.cube(*q).sigma for q in self.F1)
        s2 = sum(grid.cube(*q).sigma for q in self.F2)
        return s1 / s2 if s2 > 0 else (1.0 if s1 == 0 else math.inf)

    def labels(self, grid):
        """Node labels: index into F2 of the E_Q holding the node, else -1."""
        lab = np.full(len(grid.points), -1, dtype=np.int64)
        for i, q in enumerate(self.F2):
            mask = self.E[q]
            if np.any(lab[mask] >= 0):
                raise AssertionError(f"E sets overlap at cube {q}")
            lab[mask] = i
        return lab

    def as_dict(self):
        return {"root": list(self.root), "m": self.m,
                "levels": [[list(q) for q in lv] for lv in self.levels],
                "F1": [list(q) for q in self.F1], "F2": [list(q) for q in self.F2],
                "dropped": [list(q) for q in self.dropped],
                "mass_check": {f"{k[0]}:{k[1]}": v for k, v in sorted(self.mass_check.items())}}


def separate(grid, F1, M2):
    """Largest-first thinning: keep Q, drop every Q' in Q at most M2 generations below.

    Ties in size are broken by cube id.
    """
    remaining = sorted(set(F1))
    kept = []
    while remaining:
        Q = remaining[0]
        kept.append(Q)
        rest = []
        for q in remaining[1:]:
            inside = q[0] >= Q[0] and grid.ancestor(q[0], q[1], Q[0]) == Q[1]
            if not (inside and q[0] - Q[0] <= M2):
                rest.append(q)
        remaining = rest
    return sorted(kept)


def e_mask(grid, Q, stopped):
    """Nodes of Q outside every cube of ``stopped``."""
    mask = np.zeros(len(grid.points), dtype=bool)
    cube = grid.cube(*Q)
    mask[cube.nodes] = True
    for q in stopped:
        mask[grid.cube(*q).nodes] = False
    return mask


def iterate_LD(grid, R, calib: CalibrationParams, m, delta=0.1, domain=None, n_walks=4096, seed=0,
               eta=1 / 256, K=4, tau=1 / 16, strategy="interior-first"):
    """LD^0 .. LD^m from the root R, the families F_{1,m} and F_{2,m} and the sets E_Q.

    Cubes that need a pole are limited to generations whose Q(little)
    still lies in the grid; deeper low-density cubes are listed as
    ``dropped`` (they still carve E of their parent).
    """
    if m < 1:
        raise ParameterError("m must be at least 1")
    if delta > calib.eps:
        raise ParameterError("the low-density threshold may not exceed eps")
    g_max = grid.k_max - calib.M1 - calib.M2
    if R.k > g_max:
        raise ParameterError(f"root generation {R.k} leaves no room for M1 + M2 generations")
    poles = {(R.k, R.id): place_poles(grid, R, calib, eta, K, tau, strategy)}
    states = {}
    levels = [[(R.k, R.id)]]
    dropped = []

    def stop_from(q):
        if q not in states:
            states[q] = density_stopping(grid, grid.cube(*q), poles[q].p, math.inf, delta, domain, n_walks,
                                         seed)
        return states[q]

    for _ in range(m):
        nxt = []
        for q in levels[-1]:
            for c in stop_from(q).LD:
                if c[0] > g_max:
                    dropped.append(c)
                    continue
                poles[c] = place_poles(grid, grid.cube(*c), calib, eta, K, tau, strategy)
                nxt.append(c)
        levels.append(sorted(nxt))
    for q in levels[-1]:
        stop_from(q)
    F1 = sorted(q for lv in levels[1:] for q in lv)
    F2 = separate(grid, F1, calib.M2)
    E = {q: e_mask(grid, q, states[q].LD) for q in F1}
    forest = LDForest((R.k, R.id), m, levels, states, poles, F1, F2, E, sorted(dropped))
    forest.labels(grid)  # asserts disjointness
    for q in F2:
        hits = states[q].hits
        mq, n = hits.mass(grid.cube(*q).nodes)
        me, _ = hits.mass_of_mask(E[q])
        se = float(math.hypot(binomial_stderr(mq, n), binomial_stderr(me, n)))
        forest.mass_check[q] = {"omega_E": float(me), "omega_Q": float(mq), "stderr": se,
                                "holds": bool(me >= (1 - delta) * mq - 3 * se)}
    return forest
