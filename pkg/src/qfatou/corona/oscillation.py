"""Oscillating solutions u_Q and the random-sign experiment.

u_Q is bounded by 0 and 1 and has boundary data supported in E_Q.  Case 1
takes u_Q = omega(E_Q).  Case 2, available from three dimensions on, puts
data g_Q 1_{E_Q} with g_Q the single layer potential of a small flat
surface ball around x_Q normalised to sup 1, so that u_Q is large near x_Q
and small at the farther pole.

The random-sign experiment evaluates u_b = sum_Q b_Q u_Q at the poles of
every cube of the separated family on common walks.  Since the E_Q are
disjoint, one exit sample per pole gives the whole matrix
U[X, Q] = u_Q(X), and u_b = U b for every sign vector b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ellipe, ellipk

from ..counting import SampledSolution, longest_chain
from ..errors import DimensionError, ParameterError
from ..harmonic import HarmonicDomain, point_key, sample_exits, stream
from ..scene import Hyperplane
from .calibration import CalibrationParams
from .density import exit_nodes

PURPOSE_OSC = 12
PURPOSE_SIGNS = 13
PURPOSE_POLES = 14


def flat_disk_potential(Y, centre, radius):
    """Newtonian potential of unit density on a flat disk, at points of its plane.

    Three dimensions, kernel 1/(4 pi |x - y|).  With s the distance to the
    centre and m the elliptic parameter,

        s < r:   (r / pi) E(s^2 / r^2)
        s >= r:  (1 / pi) [s E(r^2 / s^2) - (s^2 - r^2) / s K(r^2 / s^2)].
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    c = np.asarray(centre, dtype=float).reshape(-1)
    if Y.shape[1] != 3:
        raise DimensionError("the closed form is for disks in three dimensions")
    s = np.linalg.norm(Y[:, :2] - c[:2], axis=1)
    r = float(radius)
    out = np.empty(len(Y))
    inside = s < r
    out[inside] = r / math.pi * ellipe((s[inside] / r) ** 2)
    so = s[~inside]
    m = (r / so) ** 2
    out[~inside] = (so * ellipe(m) - (so**2 - r * r) / so * ellipk(m)) / math.pi
    return out


@dataclass
class OscillatingSolution:
    owner: tuple
    p: np.ndarray
    s: np.ndarray
    case: int
    u_p: float
    u_s: float
    stderr: float
    omega_p_E: float
    omega_s_E: float
    omega_p_Q: float
    calib: CalibrationParams
    flags: list = field(default_factory=list)
    disk: tuple | None = None  # (centre, radius) of the Case 2 surface ball

    @property
    def separation(self):
        return abs(self.u_p - self.u_s)

    @property
    def meets_target(self):
        """Separation at least c2 within three standard errors."""
        return self.separation + 3 * self.stderr >= self.calib.c2

    def weight(self, Y):
        """Boundary weight g_Q on E_Q (1 in Case 1)."""
        Y = np.atleast_2d(Y)
        if self.case == 1:
            return np.ones(len(Y))
        centre, radius = self.disk
        return np.minimum(flat_disk_potential(Y, centre, radius) / (radius / 2), 1.0)

    def as_dict(self):
        return {"owner": list(self.owner), "case": self.case, "u_p": self.u_p, "u_s": self.u_s,
                "separation": self.separation, "stderr": self.stderr, "c2": self.calib.c2,
                "meets_target": bool(self.meets_target), "omega_p_E": self.omega_p_E,
                "omega_s_E": self.omega_s_E, "omega_p_Q": self.omega_p_Q, "flags": list(self.flags)}


def _paired(ex_p, ex_s, f):
    a = ex_p.values(f)
    b = ex_s.values(f)
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    return float(a.mean()), float(b.mean()), se


def construct_uQ(domain: HarmonicDomain, owner, x_Q, p, s, in_E, in_Q, calib: CalibrationParams, ell,
                 n_walks=None, seed=0, force_case=None):
    """Build u_Q from its poles and the boundary indicator of E_Q.

    ``in_E`` and ``in_Q`` map boundary points to booleans.  Raises
    :class:`ParameterError` when omega^{p}(E_Q) < (1 - eps) omega^{p}(Q)
    beyond three standard errors.
    """
    key = point_key(np.asarray(owner, dtype=float)) & (2**62 - 1)
    ex_p = sample_exits(domain, p, n_walks, seed, PURPOSE_OSC, key)
    ex_s = sample_exits(domain, s, n_walks, seed, PURPOSE_OSC, key + 1)
    ind_E = lambda y: np.asarray(in_E(y), dtype=float)  # noqa: E731
    ind_Q = lambda y: np.asarray(in_Q(y), dtype=float)  # noqa: E731
    wp, ws, se_w = _paired(ex_p, ex_s, ind_E)
    wq = float(ex_p.values(ind_Q).mean())
    if wp < (1 - calib.eps) * wq - 3 * se_w:
        raise ParameterError(f"omega^p(E_Q) = {wp:.4g} falls short of (1 - eps) omega^p(Q) = "
                             f"{(1 - calib.eps) * wq:.4g}")
    flags = []
    case = 1 if ws <= (1 - calib.eps**calib.alpha) * wp else 2
    if force_case is not None:
        case = int(force_case)
    d = domain.dim
    if case == 2 and d < 3:
        flags.append("dichotomy unverified: ambient dimension 2 uses Case 1")
        case = 1
    disk = None
    if case == 2:
        if not isinstance(domain.scene, Hyperplane):
            raise ParameterError("Case 2 needs a flat boundary for the surface ball potential")
        disk = (np.asarray(x_Q, dtype=float), calib.gamma * calib.eps * ell)
        sol = OscillatingSolution(tuple(owner), np.asarray(p), np.asarray(s), 2, 0.0, 0.0, 0.0, wp, ws, wq,
                                  calib, flags, disk)
        up, us, se = _paired(ex_p, ex_s, lambda y: sol.weight(y) * ind_E(y))
        sol.u_p, sol.u_s, sol.stderr = up, us, se
    else:
        sol = OscillatingSolution(tuple(owner), np.asarray(p), np.asarray(s), 1, wp, ws, se_w, wp, ws, wq,
                                  calib, flags)
    if not (-1e-12 <= min(sol.u_p, sol.u_s) and max(sol.u_p, sol.u_s) <= 1 + 1e-12):
        raise AssertionError("u_Q left [0, 1]")
    if not sol.meets_target:
        sol.flags.append(f"separation {sol.separation:.4g} below c2 = {calib.c2:.4g}")
    return sol


# ---------------------------------------------------------------------------
# random signs


@dataclass
class KhintchineReport:
    n_cubes: int
    B: int
    pairs: int
    failures: int
    witness_failures: int
    max_excess: float  # max |u_b| - 1 - 3 stderr over all b and poles
    frequency: dict  # cube -> fraction of b with |u_b(p) - u_b(s)| > c4/4
    prediction: float
    per_b_pass: list
    max_j0: int
    max_N: int
    calib: dict
    samples: list = field(default_factory=list)

    @property
    def pass_rate(self):
        return 1.0 - self.failures / self.pairs if self.pairs else 1.0

    @property
    def bounded(self):
        return self.max_excess <= 0

    def as_dict(self):
        return {"n_cubes": self.n_cubes, "B": self.B, "pairs": self.pairs, "failures": self.failures,
                "witness_failures": self.witness_failures, "pass_rate": self.pass_rate,
                "max_excess": self.max_excess, "bounded": self.bounded,
                "frequency": {f"{k[0]}:{k[1]}": v for k, v in sorted(self.frequency.items())},
                "prediction": self.prediction, "max_j0": self.max_j0, "max_N": self.max_N,
                "per_b_pass": self.per_b_pass, "calib": self.calib}


def pole_matrix(domain, grid, points, labels, n_labels, weights=None, n_walks=None, seed=0):
    """U[i, l] = mean over walks from point i of w(y) 1{label(y) = l}, plus second moments.

    ``labels`` gives the label of every grid node (-1 for none); exits are
    attributed to their nearest node.
    """
    U = np.zeros((len(points), n_labels))
    W2 = np.zeros_like(U)
    n = np.zeros(len(points))
    for i, X in enumerate(points):
        ex = sample_exits(domain, X, n_walks, seed, PURPOSE_POLES, i)
        ok = ~(ex.capped | ex.escaped)
        Y = ex.points[ok]
        nodes = exit_nodes(grid, Y)
        lab = np.where(nodes >= 0, labels[np.maximum(nodes, 0)], -1)
        w = np.ones(len(Y)) if weights is None else weights(Y, lab)
        hit = lab >= 0
        cnt = int(ok.sum()) + int((ex.escaped & ~ex.capped).sum())
        np.add.at(U[i], lab[hit], w[hit])
        np.add.at(W2[i], lab[hit], w[hit] ** 2)
        n[i] = cnt
    return U / n[:, None], W2 / n[:, None], n


def _intervals(R, slices):
    cuts = sorted({R.nodes.start, R.nodes.stop, *[s.start for s in slices], *[s.stop for s in slices]})
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if R.nodes.start <= a < R.nodes.stop]


def khintchine_experiment(grid, forest, calib: CalibrationParams, domain: HarmonicDomain, B=256, seed=1,
                          n_walks=4096, solutions=None, keep_samples=0):
    """Check sum_Q 1_{F(Q,b)}(x) <= N^R u_b(x, eps0) for sampled sign vectors b.

    Samples of u_b exist only at the poles of the separated family: p_Q in
    the slot of Q(big) and s_Q in that of Q(little).  Cubes without poles
    contribute nothing to the chain, so the count used is a lower bound for
    the count over full regions and the check is conservative.
    """
    if B < 64:
        raise ParameterError("use at least 64 sign vectors")
    F2 = list(forest.F2)
    R = grid.cube(*forest.root)
    c4, eps0 = calib.c4, calib.eps0
    base = dict(n_cubes=len(F2), B=B, prediction=c4 / 8, calib=calib.as_dict())
    if not F2:
        return KhintchineReport(pairs=0, failures=0, witness_failures=0, max_excess=-1.0, frequency={},
                                per_b_pass=[True] * B, max_j0=0, max_N=0, **base)
    labels = forest.labels(grid)
    poles = [forest.poles[q] for q in F2]
    if any(P.big is None or P.little is None for P in poles):
        raise ParameterError("every separated cube needs Q(big) and Q(little) inside the grid")
    pts = np.array([X for P in poles for X in (P.p, P.s)])
    weights = None
    if solutions is not None and any(solutions[q].case == 2 for q in F2):
        def weights(Y, lab):
            w = np.ones(len(Y))
            for l in np.unique(lab[lab >= 0]):
                sel = lab == l
                w[sel] = solutions[F2[l]].weight(Y[sel])
            return w
    U, W2, nw = pole_matrix(domain, grid, pts, labels, len(F2), weights, n_walks, seed)
    signs = stream(seed, PURPOSE_SIGNS, R.flat, 0).choice(np.array([-1.0, 1.0]), size=(B, len(F2)))

    # sampled cubes and the elementary node intervals they cut R into
    cubes = {}
    for i, P in enumerate(poles):
        cubes.setdefault(P.big, []).append(2 * i)
        cubes.setdefault(P.little, []).append(2 * i + 1)
    keys = sorted(cubes)
    slices = [grid.cube(*c).nodes for c in keys]
    ivals = _intervals(R, slices)
    inside = [[c for c, sl in zip(keys, slices) if sl.start <= a < sl.stop] for a, _ in ivals]
    little_in = [[i for i, P in enumerate(poles) if P.little in ins] for ins in inside]
    size = [b - a for a, b in ivals]

    failures = wfail = 0
    pairs = 0
    max_excess = -math.inf
    per_b = []
    freq = np.zeros(len(F2))
    max_j0 = max_N = 0
    samples = []
    for bi, b in enumerate(signs):
        ub = U @ b
        var = np.maximum(W2.sum(axis=1) - ub**2, 0.0)
        se = np.sqrt(var / np.maximum(nw - 1, 1))
        max_excess = max(max_excess, float(np.max(np.abs(ub) - 1 - 3 * se)))
        jump = np.abs(ub[1::2] - ub[0::2])
        inF = jump > c4 / 4
        freq += inF
        ok_b = True
        for ins, lit, nsz in zip(inside, little_in, size):
            lv = [c[0] for c in ins for _ in cubes[c]]
            vals = [ub[t] for c in ins for t in cubes[c]]
            N = longest_chain(lv, vals, eps0)
            members = sorted((i for i in lit if inF[i]), key=lambda i: (F2[i][0], F2[i][1]))
            j0 = len(members)
            if j0:
                chain_lv = [poles[members[0]].big[0], poles[members[0]].little[0]]
                chain_v = [ub[2 * members[0]], ub[2 * members[0] + 1]]
                for i in members[1:]:
                    for t, lvl in ((2 * i, poles[i].big[0]), (2 * i + 1, poles[i].little[0])):
                        if abs(ub[t] - chain_v[-1]) > eps0:
                            chain_lv.append(lvl)
                            chain_v.append(ub[t])
                            break
                good = (len(chain_v) == j0 + 1 and all(np.diff(chain_lv) > 0)
                        and all(np.abs(np.diff(chain_v)) > eps0))
                if not good:
                    wfail += nsz
            pairs += nsz
            if j0 > N:
                failures += nsz
                ok_b = False
            max_j0, max_N = max(max_j0, j0), max(max_N, N)
            if bi < keep_samples:
                samples.append({"b": bi, "nodes": nsz, "j0": j0, "N": N})
        per_b.append(ok_b)
    frequency = {q: float(f / B) for q, f in zip(F2, freq)}
    return KhintchineReport(pairs=pairs, failures=failures, witness_failures=wfail, max_excess=max_excess,
                            frequency=frequency, per_b_pass=per_b, max_j0=max_j0, max_N=max_N,
                            samples=samples, **base)


def pole_solution(grid, forest, U, b):
    """u_b at the poles as a partial :class:`SampledSolution` and its catalog.

    Feeds the general counting code, which must agree with the interval
    computation above.
    """
    ub = U @ b
    vals = {}
    for i, q in enumerate(forest.F2):
        P = forest.poles[q]
        for t, c in ((2 * i, P.big), (2 * i + 1, P.little)):
            vals.setdefault(grid.cube(*c).flat, []).append(ub[t])
    values = {(f, 0): np.asarray(v) for f, v in vals.items()}
    return SampledSolution(values, partial=True), {f: 0 for f in vals}
