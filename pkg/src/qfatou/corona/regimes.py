"""Stopping-time regimes, their coherency and Carleson packing sums."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError


@dataclass
class StoppingRegime:
    """A family of grid cubes with a unique maximal cube.

    ``direction`` and ``offset`` describe the fitted graph when the regime
    comes from the bilateral corona: the line ``{y : n . y = offset}`` with
    unit tangent ``direction`` and n its normal.
    """

    top: tuple
    cubes: list
    direction: np.ndarray | None = None
    offset: float | None = None
    fits: dict = field(default_factory=dict)  # cube -> (direction, centroid, error)

    def __contains__(self, q):
        return tuple(q) in self._set

    @property
    def _set(self):
        s = getattr(self, "_cache", None)
        if s is None or len(s) != len(self.cubes):
            s = set(map(tuple, self.cubes))
            object.__setattr__(self, "_cache", s)
        return s

    def __len__(self):
        return len(self.cubes)

    def as_dict(self):
        out = {"top": list(self.top), "cubes": [list(q) for q in sorted(self.cubes)]}
        if self.direction is not None:
            out["direction"] = [float(v) for v in self.direction]
            out["offset"] = float(self.offset)
        return out


@dataclass
class CoherencyReport:
    unique_max: bool
    interval_closed: bool
    all_or_none: bool
    problems: list

    @property
    def coherent(self):
        return self.unique_max and self.interval_closed and self.all_or_none

    @property
    def semi_coherent(self):
        return self.unique_max and self.interval_closed


def check_coherency(grid, regime: StoppingRegime):
    """Conditions (a) unique maximal cube, (b) closure under intermediate cubes,
    (c) all or none of the children of a member."""
    S = regime._set
    top = tuple(regime.top)
    problems = []
    a = top in S and all(q[0] >= top[0] and grid.ancestor(q[0], q[1], top[0]) == top[1] for q in S)
    if not a:
        problems.append("a: some member is not inside the top cube")
    b = True
    for k, j in S:
        for kk in range(top[0], k):
            if (kk, grid.ancestor(k, j, kk)) not in S:
                b = False
                problems.append(f"b: ({k}, {j}) is in but its ancestor at generation {kk} is not")
                break
    c = True
    for k, j in S:
        if k == grid.k_max:
            continue
        lo, hi = grid.child_range(k - grid.k_min, j)
        inside = [(k + 1, i) in S for i in range(lo, hi)]
        if any(inside) and not all(inside):
            c = False
            problems.append(f"c: ({k}, {j}) keeps only some children")
    return CoherencyReport(a, b, c, problems)


def semi_coherent_subregime(grid, regime: StoppingRegime, stop_below):
    """The members of ``regime`` not strictly below any cube of ``stop_below``."""
    stops = set(map(tuple, stop_below))
    keep = []
    for k, j in regime.cubes:
        if any((kk, grid.ancestor(k, j, kk)) in stops for kk in range(regime.top[0], k)):
            continue
        keep.append((k, j))
    return StoppingRegime(regime.top, sorted(keep), regime.direction, regime.offset,
                          {q: regime.fits[q] for q in keep if q in regime.fits})


# ---------------------------------------------------------------------------
# packing


@dataclass
class PackingReport:
    sums: dict  # (k, j) -> sum of sigma over family cubes inside it
    ratios: dict  # (k, j) -> sums / sigma
    roots: list

    @property
    def constant(self):
        """sup over the roots considered."""
        return max((self.ratios[r] for r in self.roots), default=0.0)

    def per_root(self):
        return {r: self.ratios[r] for r in self.roots}

    def as_dict(self):
        return {"constant": self.constant,
                "per_root": {f"{k}:{j}": v for (k, j), v in sorted(self.per_root().items())}}


def verify_packing(grid, family, roots="grid", weights=None):
    """(1 / sigma(R)) sum_{Q in family, Q in R} sigma(Q) for every R in ``roots``.

    ``roots`` is ``"grid"`` (the top generation), ``"all"`` (every cube) or an
    explicit list of cubes.  ``weights`` may replace sigma(Q) per family
    member.
    """
    fam = [tuple(q) for q in family]
    if len(set(fam)) != len(fam):
        raise ParameterError("family lists a cube twice")
    acc = [np.zeros(grid.count(k)) for k in grid.generations]
    for i, (k, j) in enumerate(fam):
        w = grid.cube(k, j).sigma if weights is None else float(weights[i])
        jj = j
        for kk in range(k, grid.k_min - 1, -1):
            acc[kk - grid.k_min][jj] += w
            if kk > grid.k_min:
                jj = int(grid.parent[kk - grid.k_min][jj])
    if isinstance(roots, str):
        if roots == "grid":
            roots = [(grid.k_min, j) for j in range(grid.count(grid.k_min))]
        elif roots == "all":
            roots = [(k, j) for k in grid.generations for j in range(grid.count(k))]
        else:
            raise ParameterError(f"unknown root selection {roots!r}")
    roots = [tuple(r) for r in roots]
    sums, ratios = {}, {}
    for k, j in roots:
        s = float(acc[k - grid.k_min][j])
        sums[(k, j)] = s
        ratios[(k, j)] = s / grid.cube(k, j).sigma
    return PackingReport(sums, ratios, roots)
