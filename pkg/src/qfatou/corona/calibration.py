"""Constants of the oscillation construction and placement of the poles.

Given the region constant C (with C^-1 l(Q) <= |y - X| <= C l(Q) for y in
Q and X in U_Q) the scales are fixed by dyadic brackets:

    2^-M1 C < eps <= 2^(1-M1) C,        2^-M2 C < gamma <= 2^(1-M2) C.

Q(big) is the descendant of Q containing x_Q that is M1 generations down,
Q(little) the one M2 generations below Q(big).  Poles taken in their
regions then satisfy a eps l(Q) <= |p_Q - x_Q| <= eps l(Q) and
|s_Q - x_Q| <= gamma eps l(Q) with a = C^-2 / 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import BracketViolationError, InsufficientDepthError, ParameterError
from ..scene import Hyperplane
from ..whitney import DEFAULT_ETA, DEFAULT_K, TAU0, LocalCube, cube_region, region_constant


def bracket_exponent(C, value):
    """The integer M with 2^-M C < value <= 2^(1-M) C."""
    if not (C > 0 and value > 0):
        raise ParameterError("bracket needs positive C and value")
    M = math.floor(math.log2(C / value)) + 1
    # guard the floor against rounding at exact powers of two
    while not 2.0 ** (-M) * C < value:
        M += 1
    while not value <= 2.0 ** (1 - M) * C:
        M -= 1
    return M


@dataclass
class CalibrationParams:
    C: float
    eps: float
    gamma: float
    M1: int
    M2: int
    alpha: float = 0.5
    strict_gamma: bool = True
    notes: list = field(default_factory=list)

    @property
    def a(self):
        return self.C**-2 / 4

    @property
    def c2(self):
        return self.eps**self.alpha / 2

    @property
    def c3(self):
        return 2**-0.5

    @property
    def c4(self):
        return self.c2 * self.c3

    @property
    def eps0(self):
        return self.c4 / 16

    def check(self):
        """Raise if a bracket or the gamma bound fails."""
        if not (2.0 ** -self.M1 * self.C < self.eps <= 2.0 ** (1 - self.M1) * self.C):
            raise BracketViolationError(f"eps={self.eps} outside the M1={self.M1} bracket for C={self.C}")
        if not (2.0 ** -self.M2 * self.C < self.gamma <= 2.0 ** (1 - self.M2) * self.C):
            raise BracketViolationError(f"gamma={self.gamma} outside the M2={self.M2} bracket for C={self.C}")
        if self.strict_gamma and not self.gamma < self.a / 2:
            raise BracketViolationError(f"gamma={self.gamma} is not below a/2={self.a / 2}")
        if not 0 < self.alpha < 1:
            raise ParameterError("alpha must lie in (0, 1)")
        return self

    @classmethod
    def from_constant(cls, C, eps=None, gamma=None, alpha=0.5, eps_max=0.5, strict_gamma=True,
                      gamma_max=0.5):
        """Calibrate from a measured region constant.

        Missing eps (gamma) is taken at the top of the first bracket strictly
        below ``eps_max`` (below a/2 when ``strict_gamma``, else below
        ``gamma_max``).
        """
        if C < 1:
            raise ParameterError("the region constant is at least 1")
        notes = []
        if eps is None:
            M1 = max(1, math.ceil(math.log2(2 * C / eps_max)))
            while not 2.0 ** (1 - M1) * C < eps_max:
                M1 += 1
            eps = 2.0 ** (1 - M1) * C
        else:
            M1 = bracket_exponent(C, eps)
        cap = C**-2 / 8 if strict_gamma else gamma_max
        if gamma is None:
            M2 = max(1, math.ceil(math.log2(2 * C / cap)))
            while not 2.0 ** (1 - M2) * C < cap:
                M2 += 1
            gamma = 2.0 ** (1 - M2) * C
        else:
            M2 = bracket_exponent(C, gamma)
        if not strict_gamma:
            notes.append("gamma < a/2 not enforced (Case 1 only)")
        return cls(float(C), float(eps), float(gamma), int(M1), int(M2), alpha, strict_gamma, notes).check()

    def as_dict(self):
        return {"C": self.C, "a": self.a, "eps": self.eps, "gamma": self.gamma, "M1": self.M1, "M2": self.M2,
                "alpha": self.alpha, "c2": self.c2, "c3": self.c3, "c4": self.c4, "eps0": self.eps0,
                "strict_gamma": self.strict_gamma}


# ---------------------------------------------------------------------------
# cubes as geometry


def local_cube(grid, k, j):
    """Geometry of grid cube (k, j) as a :class:`LocalCube`."""
    c = np.asarray(grid.center[k - grid.k_min][j], dtype=float)
    if grid.method == "box":
        return LocalCube(k, c, box=grid.cube_box(k, j))
    return LocalCube(k, c, segments=grid.cube_segments(k, j))


def hyperplane_descendant(scene: Hyperplane, x, k):
    """The generation-k dyadic cube of a hyperplane grid containing ``x``."""
    from ..dyadic import _box_root_generation, _tau_root_generation

    d = scene.ambient_dim
    w0, w1 = scene.window
    k0 = _box_root_generation(scene) if d > 2 else _tau_root_generation(scene)
    side = (w1 - w0) * 2.0 ** (k0 - k)
    x = np.asarray(x, dtype=float)
    idx = np.floor((x[:-1] - w0) / side)
    # a point on the far edge belongs to the last closed cube
    idx = np.minimum(idx, (w1 - w0) / side - 1)
    lo = np.r_[w0 + idx * side, 0.0]
    hi = np.r_[w0 + (idx + 1) * side, 0.0]
    c = 0.5 * (lo + hi)
    if d == 2:
        return LocalCube(k, c, segments=(lo[None, :], hi[None, :]))
    return LocalCube(k, c, box=(lo, hi))


def descendant_containing(grid, Q, x, k):
    """Generation-k descendant of Q whose closure contains x_Q-like point x."""
    if k <= grid.k_max:
        sl = Q.nodes
        P = grid.points[sl]
        i = sl.start + int(np.argmin(np.linalg.norm(P - x, axis=1)))
        j = int(grid.node_cube(k, i))
        return local_cube(grid, k, j), (k, j)
    if isinstance(grid.scene, Hyperplane):
        return hyperplane_descendant(grid.scene, x, k), None
    raise InsufficientDepthError(f"generation {k} below the grid (k_max={grid.k_max})")


@dataclass
class Poles:
    cube: tuple
    x: np.ndarray
    p: np.ndarray
    s: np.ndarray
    big: tuple | None
    little: tuple | None
    dist_p: float
    dist_s: float
    brackets: dict
    big_region: object = None
    little_region: object = None

    def as_dict(self):
        return {"cube": list(self.cube), "x": self.x.tolist(), "p": self.p.tolist(), "s": self.s.tolist(),
                "dist_p": self.dist_p, "dist_s": self.dist_s, **self.brackets}


def _component(region, cells, strategy):
    for i in range(region.n_components):
        c = region.component_cells(i)
        if strategy != "interior-first" or np.all(cells.in_omega[c]):
            return i
    raise BracketViolationError("no admissible component")


def place_poles(grid, Q, calib: CalibrationParams, eta=DEFAULT_ETA, K=DEFAULT_K, tau=TAU0 / 2,
                strategy="interior-first", strict=True):
    """p_Q in U_{Q(big)} and s_Q in U_{Q(little)} with the bracket checks.

    The points are Whitney cell centres of the chosen components.  Among
    them the first one (largest cell first) meeting the bracket is used.
    """
    x = np.asarray(grid.center[Q.k - grid.k_min][Q.id], dtype=float)
    ell = Q.ell
    kb = Q.k + calib.M1
    kl = kb + calib.M2
    if kl > grid.k_max and not isinstance(grid.scene, Hyperplane):
        raise InsufficientDepthError(
            f"cube at generation {Q.k} needs generation {kl}; grid stops at {grid.k_max}")
    big, big_id = descendant_containing(grid, Q, x, kb)
    little, little_id = descendant_containing(grid, Q, x, kl)
    scene = grid.scene
    out = []
    for cube, lo_b, hi_b in ((big, calib.a * calib.eps * ell, calib.eps * ell),
                             (little, 0.0, calib.gamma * calib.eps * ell)):
        cells, reg = cube_region(scene, cube, eta, K, tau)
        comp = _component(reg, cells, strategy)
        cand = reg.component_cells(comp)
        cand = cand[np.lexsort((cand, -cells.level[cand]))]
        P = cells.centers[cand]
        dist = np.linalg.norm(P - x, axis=1)
        ok = np.nonzero((dist >= lo_b) & (dist <= hi_b))[0]
        if len(ok) == 0:
            if strict:
                raise BracketViolationError(
                    f"no point of U at generation {cube.k} within [{lo_b:.3g}, {hi_b:.3g}] of x_Q "
                    f"(observed {dist.min():.3g}..{dist.max():.3g})")
            ok = np.array([int(np.argmin(np.abs(dist - 0.5 * (lo_b + hi_b))))])
        out.append((P[ok[0]], float(dist[ok[0]]), (cells, reg, comp, region_constant(cells, reg, cube))))
    (p, dp, breg), (s, ds, lreg) = out
    br = {"a_eps_ell": calib.a * calib.eps * ell, "eps_ell": calib.eps * ell,
          "gamma_eps_ell": calib.gamma * calib.eps * ell,
          "p_ok": bool(calib.a * calib.eps * ell <= dp <= calib.eps * ell),
          "s_ok": bool(ds <= calib.gamma * calib.eps * ell),
          "C_big": breg[3], "C_little": lreg[3]}
    return Poles((Q.k, Q.id), x, p, s, big_id, little_id, dp, ds, br, breg, lreg)


def flat_poles(x, ell, calib: CalibrationParams):
    """Poles for a flat boundary, on the normal through ``x``.

    p sits at height eps * ell and s at height gamma * eps * ell / 2; both
    heights fall inside their brackets, and the points lie in the Whitney
    cells that make up U for a half-space.
    """
    x = np.asarray(x, dtype=float)
    up = np.zeros_like(x)
    up[-1] = 1.0
    return x + calib.eps * ell * up, x + 0.5 * calib.gamma * calib.eps * ell * up


def measure_constant(grid, cubes, eta=DEFAULT_ETA, K=DEFAULT_K, tau=TAU0 / 2):
    """Largest region constant over the given grid cubes (local regions)."""
    C = 1.0
    for Q in cubes:
        cube = local_cube(grid, Q.k, Q.id)
        cells, reg = cube_region(grid.scene, cube, eta, K, tau)
        C = max(C, region_constant(cells, reg, cube))
    return C
