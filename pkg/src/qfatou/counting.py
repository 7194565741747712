"""Dyadic oscillation counting functions and their Carleson averages.

For a boundary node x and a root cube Q0 the admissible sequences run down
the chain of cubes containing x.  Each cube contributes the sample values of
its chosen region component, and the count is the longest path in the DAG
whose edges join a sample of a cube to a sample of a strictly deeper cube
with a jump larger than eps.

Strict nesting is read off the generation.  A cube and its only child can
be equal as sets (the four-corner Cantor grid repeats every piece for one
generation), and are still treated as distinct steps of the chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySampleError, ParameterError, PointOffBoundaryError

# ---------------------------------------------------------------------------
# sampled solutions


@dataclass
class SampledSolution:
    """Values of u at the sample points of region components.

    Keys are ``(flat cube id, component)``; every array is indexed by sample
    slot.  ``provenance`` records where the values came from.
    """

    values: dict
    stderr: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    partial: bool = False  # cubes without samples contribute no nodes

    def get(self, flat, comp):
        try:
            return self.values[(int(flat), int(comp))]
        except KeyError:
            if self.partial:
                return np.zeros(0)
            raise EmptySampleError(f"no samples for cube {flat}, component {comp}") from None

    def max_abs_excess(self):
        """max(|u| - 1 - 3 stderr) over all samples (<= 0 when normalised)."""
        worst = -math.inf
        for key, v in self.values.items():
            se = self.stderr.get(key, np.zeros_like(v))
            worst = max(worst, float(np.max(np.abs(v) - 1 - 3 * se)))
        return worst

    def combine(self, coeffs, others):
        """Linear combination ``sum c_i u_i`` on a shared sample layout."""
        vals = {k: sum(c * o.values[k] for c, o in zip(coeffs, others)) for k in self.values}
        se = {}
        if all(o.stderr for o in others):
            se = {k: np.sqrt(sum((c * o.stderr[k]) ** 2 for c, o in zip(coeffs, others))) for k in self.values}
        return SampledSolution(vals, se, self.points, {"combination": list(map(float, coeffs))})


def sample_points(regions, catalog, s_max=8, all_components=False):
    """Sample points keyed like :class:`SampledSolution` (cell centres)."""
    out = {}
    centres = regions.cells.centers
    for f, reg in regions.by_cube.items():
        comps = range(reg.n_components) if all_components else [catalog[f]]
        for i in comps:
            if i < 0:
                continue
            cells = regions.sample_cells(f, i, s_max)
            out[(int(f), int(i))] = centres[cells]
    return out


def sample_solution(points, evaluator, provenance=None):
    """Evaluate ``evaluator(P) -> (values, stderr)`` on every sample set at once."""
    keys = sorted(points)
    if not keys:
        raise EmptySampleError("no sample points")
    P = np.concatenate([points[k] for k in keys])
    v, se = evaluator(P)
    v = np.asarray(v, dtype=float)
    se = np.zeros_like(v) if se is None else np.asarray(se, dtype=float)
    cuts = np.cumsum([len(points[k]) for k in keys])[:-1]
    vals = dict(zip(keys, np.split(v, cuts)))
    ses = dict(zip(keys, np.split(se, cuts)))
    return SampledSolution(vals, ses, dict(points), dict(provenance or {}))


# ---------------------------------------------------------------------------
# the longest-path core


def longest_chain(levels, values, eps, return_path=False):
    """Longest eps-jump path through nodes ordered by strictly increasing level.

    ``levels[i]`` is the generation of node i and ``values[i]`` its sample
    value.  Returns the number of edges (and the node path if asked).
    """
    levels = np.asarray(levels)
    values = np.asarray(values, dtype=float)
    if not eps > 0:
        raise ParameterError("eps must be positive")
    n = len(levels)
    if n == 0:
        return (0, []) if return_path else 0
    order = np.argsort(levels, kind="stable")
    lv, val = levels[order], values[order]
    best = np.zeros(n, dtype=np.int64)
    prev = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        cand = np.nonzero((lv < lv[i]) & (np.abs(val - val[i]) > eps))[0]
        if len(cand):
            j = cand[np.argmax(best[cand])]
            best[i] = best[j] + 1
            prev[i] = j
    if not return_path:
        return int(best.max())
    end = int(np.argmax(best))
    path = []
    while end >= 0:
        path.append(int(order[end]))
        end = prev[end]
    return int(best.max()), path[::-1]


def _chain_nodes(u, grid, catalog, chain):
    levels, values, owners = [], [], []
    for k, j in chain:
        f = grid.cube(k, j).flat
        v = u.get(f, _choice(catalog, f, u.partial))
        levels.extend([k] * len(v))
        values.extend(v.tolist())
        owners.extend([(k, j, s) for s in range(len(v))])
    return np.asarray(levels), np.asarray(values), owners


def _choice(catalog, f, partial):
    try:
        return catalog[f]
    except (KeyError, IndexError):
        if partial:
            return -1
        raise


def _check_node_in(grid, x, Q0):
    if not 0 <= int(x) < len(grid.points):
        raise PointOffBoundaryError(f"node {x} is not a boundary node of the grid")
    if int(grid.node_cube(Q0.k, int(x))) != Q0.id:
        raise PointOffBoundaryError(f"node {x} is not in cube {(Q0.k, Q0.id)}")


def counting_function(u: SampledSolution, grid, catalog, x, eps, Q0, k_last=None, return_path=False):
    """N^{Q0} u(x, eps, I) for the boundary node ``x``.

    ``k_last`` truncates the chain at a generation (default: the leaves).
    """
    _check_node_in(grid, x, Q0)
    k_last = grid.k_max if k_last is None else min(int(k_last), grid.k_max)
    chain = [(k, j) for k, j in grid.chain_of_node(int(x), Q0.k) if k <= k_last]
    lv, val, owners = _chain_nodes(u, grid, catalog, chain)
    if not return_path:
        return longest_chain(lv, val, eps)
    n, path = longest_chain(lv, val, eps, return_path=True)
    return n, [owners[i] for i in path]


def doubly_truncated_counting(u: SampledSolution, grid, catalog, x, eps, Q_low, Q_top):
    """Count restricted to chains between ``Q_low`` and ``Q_top``.

    ``Q_low`` is either a cube inside ``Q_top`` or a boundary node index; in
    the second case this is :func:`counting_function` with root ``Q_top``.
    """
    if isinstance(Q_low, (int, np.integer)):
        return counting_function(u, grid, catalog, int(Q_low), eps, Q_top)
    if Q_low.k < Q_top.k or grid.ancestor(Q_low.k, Q_low.id, Q_top.k) != Q_top.id:
        raise ParameterError(f"cube {(Q_low.k, Q_low.id)} is not inside {(Q_top.k, Q_top.id)}")
    chain = [(k, grid.ancestor(Q_low.k, Q_low.id, k)) for k in range(Q_top.k, Q_low.k + 1)]
    lv, val, _ = _chain_nodes(u, grid, catalog, chain)
    return longest_chain(lv, val, eps)


@dataclass
class CountingResult:
    nodes: np.ndarray
    N: np.ndarray
    eps: float
    root: tuple
    subcatalog: str
    k_last: int
    weights: np.ndarray
    sigma_root: float

    @property
    def average(self):
        return carleson_average(self.N, self.weights, self.sigma_root)

    def rows(self):
        return [{"x": int(i), "eps": self.eps, "depth": self.k_last, "N": int(n)} for i, n in zip(self.nodes, self.N)]


def counting_all(u: SampledSolution, grid, catalog, eps, Q0, k_lasts=None):
    """N at every node of Q0 for several truncation generations at once.

    Top-down: the best path ending at a sample of cube Q depends only on the
    ancestors of Q, so it is computed once per cube and shared by every node
    below.  Returns ``{k_last: CountingResult}``.
    """
    if not eps > 0:
        raise ParameterError("eps must be positive")
    k_lasts = [grid.k_max] if k_lasts is None else sorted(set(int(k) for k in k_lasts))
    if any(k < Q0.k or k > grid.k_max for k in k_lasts):
        raise ParameterError("truncation generation outside the grid below Q0")
    best_upto = {}  # (k, j) -> max over the chain from Q0 to (k, j) inclusive
    anc_vals = {}  # (k, j) -> (values, best) over samples strictly above, within Q0
    ends_vals = {}  # (k, j) -> (values, best path ending at each sample)
    frontier = [(Q0.k, Q0.id)]
    while frontier:
        nxt = []
        for k, j in frontier:
            f = grid.cube(k, j).flat
            v = u.get(f, _choice(catalog, f, u.partial))
            if k == Q0.k:
                av, ab = np.zeros(0), np.zeros(0, dtype=np.int64)
            else:
                pk, pj = k - 1, grid.ancestor(k, j, k - 1)
                av = np.concatenate([anc_vals[(pk, pj)][0], ends_vals[(pk, pj)][0]])
                ab = np.concatenate([anc_vals[(pk, pj)][1], ends_vals[(pk, pj)][1]])
            jump = np.abs(av[None, :] - v[:, None]) > eps
            b = np.where(jump, ab[None, :] + 1, 0).max(axis=1) if len(av) else np.zeros(len(v), dtype=np.int64)
            anc_vals[(k, j)] = (av, ab)
            ends_vals[(k, j)] = (v, b)
            top = best_upto[(k - 1, grid.ancestor(k, j, k - 1))] if k > Q0.k else 0
            best_upto[(k, j)] = max(top, int(b.max()) if len(b) else 0)
            if k < grid.k_max:
                g = k - grid.k_min
                lo, hi = grid.child_range(g, j)
                nxt.extend((k + 1, c) for c in range(lo, hi))
        frontier = nxt
    sl = Q0.nodes
    nodes = np.arange(sl.start, sl.stop)
    w = grid.weights[sl]
    out = {}
    for kl in k_lasts:
        cubes = grid.node_cube(kl, nodes)
        N = np.array([best_upto[(kl, int(c))] for c in cubes], dtype=np.int64)
        out[kl] = CountingResult(nodes, N, float(eps), (Q0.k, Q0.id), getattr(catalog, "strategy", ""), kl, w,
                                 float(Q0.sigma))
    return out


def carleson_average(N, weights, sigma_root=None):
    """(1 / sigma(Q0)) sum_x N(x) w(x)."""
    N = np.asarray(N, dtype=float)
    w = np.asarray(weights, dtype=float)
    if len(N) == 0:
        raise EmptySampleError("no boundary nodes")
    if len(N) != len(w):
        raise ParameterError("counts and weights differ in length")
    s = float(w.sum()) if sigma_root is None else float(sigma_root)
    return float(np.dot(N, w) / s)


# ---------------------------------------------------------------------------
# cones


@dataclass
class DyadicCone:
    spec: tuple
    tau: float
    cells: np.ndarray  # deduplicated Whitney cell indices
    owner: np.ndarray  # flat id of the smallest contributing cube per cell
    cubes: list

    def __len__(self):
        return len(self.cells)


def _region_cells(regions, f, augmented):
    if augmented is not None and int(f) in augmented:
        return np.asarray(augmented[int(f)], dtype=np.int64)
    return regions.by_cube[int(f)].members


def build_cone(grid, regions, spec, tau=None, augmented=None):
    """Truncated dyadic cone as a cell list.

    ``spec`` is ``("point", x, Q0)`` for Gamma^{Q0}(x) or ``("cubes", Q_low,
    Q_top)`` for the cone between two nested cubes.  ``augmented`` may map
    flat ids to augmented cell lists; missing cubes fall back to W_Q^0.
    """
    from .whitney import TAU0

    tau = regions.tau if tau is None else tau
    if not 0 < 2 * tau <= TAU0:
        raise ParameterError("the cone fattening 2 tau must lie in (0, tau_0]")
    kind = spec[0]
    if kind == "point":
        _, x, Q0 = spec
        _check_node_in(grid, x, Q0)
        chain = grid.chain_of_node(int(x), Q0.k)
    elif kind == "cubes":
        _, Q_low, Q_top = spec
        if Q_low.k < Q_top.k or grid.ancestor(Q_low.k, Q_low.id, Q_top.k) != Q_top.id:
            raise ParameterError("cone spec: lower cube is not inside the top cube")
        chain = [(k, grid.ancestor(Q_low.k, Q_low.id, k)) for k in range(Q_top.k, Q_low.k + 1)]
    else:
        raise ParameterError(f"unknown cone spec {kind!r}")
    cells, owner = [], []
    for k, j in chain:  # top down, so later (smaller) cubes overwrite
        f = grid.cube(k, j).flat
        c = _region_cells(regions, f, augmented)
        cells.append(c)
        owner.append(np.full(len(c), f, dtype=np.int64))
    if not cells:
        return DyadicCone(spec, tau, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), [])
    C = np.concatenate(cells)
    O = np.concatenate(owner)
    # keep the last occurrence, i.e. the deepest contributing cube
    rev = len(C) - 1 - np.unique(C[::-1], return_index=True)[1]
    return DyadicCone(spec, tau, C[rev], O[rev], chain)


def cone_overlap(regions, augmented=None):
    """Multiplicity of every Whitney cell across all regions of the grid."""
    n = len(regions.cells)
    mult = np.zeros(n, dtype=np.int64)
    for f in regions.by_cube:
        np.add.at(mult, _region_cells(regions, f, augmented), 1)
    return mult


# ---------------------------------------------------------------------------
# the three-sum decomposition


@dataclass
class ClaimReport:
    x: int
    eps: float
    lhs: int
    sigma1: int
    sigma2: int
    sigma3: int
    witness: list

    @property
    def rhs(self):
        return self.sigma1 + self.sigma2 + self.sigma3

    @property
    def holds(self):
        return self.lhs <= self.rhs

    def as_dict(self):
        return {"x": self.x, "eps": self.eps, "lhs": self.lhs, "sigma1": self.sigma1, "sigma2": self.sigma2,
                "sigma3": self.sigma3, "holds": self.holds}


def claim_421_check(u: SampledSolution, grid, catalog, x, eps, Q0, labels):
    """Compare N^{Q0}u(x) with the regime-wise split of its jumps.

    ``labels[flat]`` is the regime index of a good cube and -1 for a bad
    cube.  Sigma_1 sums, over regimes met by the chain of x inside Q0, the
    doubly truncated count between the top and bottom chain cubes of the
    regime; Sigma_2 counts the bad chain cubes; Sigma_3 counts the regimes
    met.
    """
    lhs, witness = counting_function(u, grid, catalog, x, eps, Q0, return_path=True)
    chain = grid.chain_of_node(int(x), Q0.k)
    lab = [int(labels[grid.cube(k, j).flat]) for k, j in chain]
    s2 = sum(1 for t in lab if t < 0)
    s1 = 0
    regimes = sorted(set(t for t in lab if t >= 0))
    for r in regimes:
        idx = [i for i, t in enumerate(lab) if t == r]
        top = grid.cube(*chain[idx[0]])
        low = grid.cube(*chain[idx[-1]])
        s1 += doubly_truncated_counting(u, grid, catalog, x, eps, low, top)
    return ClaimReport(int(x), float(eps), int(lhs), int(s1), int(s2), len(regimes), witness)
