"""Experiment pipelines behind the command line runner.

Every pipeline takes an :class:`ExperimentConfig` and returns a
:class:`Report` made of plain numbers, so identical configs give identical
reports.  Verdict keys name the acceptance criterion they decide.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import ParameterError
from .scene import FourCornerCantor, Hyperplane, KochCurve, LipschitzGraph, Sphere, scene_from_dict
from .whitney import DEFAULT_ETA, DEFAULT_K, TAU0

KINDS = ("fatou-carleson", "ld-packing", "khintchine", "corona-dichotomy", "approx-quality", "validation-battery")
SCHEMA = 1

KHINTCHINE_EXTRA_DEPTH = 4


@dataclass
class ExperimentConfig:
    kind: str = "validation-battery"
    scene: object = "hyperplane"
    depth: object = 6  # int or list of ints
    eta: float = DEFAULT_ETA
    K: float = DEFAULT_K
    tau: float = TAU0 / 2
    eps: object = 0.1  # float or list
    seed: int = 0
    walks: int = 4096
    strategy: str = "interior-first"
    params: dict = field(default_factory=dict)  # kind-specific extras
    schema: int = SCHEMA

    @property
    def depths(self):
        return [int(d) for d in (self.depth if isinstance(self.depth, (list, tuple)) else [self.depth])]

    @property
    def eps_list(self):
        return [float(e) for e in (self.eps if isinstance(self.eps, (list, tuple)) else [self.eps])]

    def validate(self):
        """Raise :class:`ParameterError` naming the offending field."""
        from .dyadic import DEPTH_CAP

        if self.schema != SCHEMA:
            raise ParameterError(f"schema: unsupported config schema {self.schema!r}")
        if self.kind not in KINDS:
            raise ParameterError(f"kind: {self.kind!r} is not one of {', '.join(KINDS)}")
        if not 0 < self.eta < 1:
            raise ParameterError("eta: must lie in (0, 1)")
        if not self.K > 1:
            raise ParameterError("kk: K must exceed 1")
        if not self.eta * self.K <= 1 + 1e-9:
            raise ParameterError("eta, kk: eta may not exceed 1/K")
        if not 0 < self.tau <= TAU0 / 2:
            raise ParameterError(f"tau: must lie in (0, {TAU0 / 2}]")
        # poles sit M1 + M2 generations below the stopped cubes, so khintchine grids go deeper
        cap = DEPTH_CAP + 1 + (KHINTCHINE_EXTRA_DEPTH if self.kind == "khintchine" else 0)
        for d in self.depths:
            if not 1 <= d <= cap:
                raise ParameterError(f"depth: {d} outside 1..{cap}")
        for e in self.eps_list:
            if not e > 0:
                raise ParameterError("eps: must be positive")
        if self.walks < 1024 or self.walks % 1024:
            raise ParameterError("walks: a positive multiple of 1024")
        if self.strategy not in ("interior-first", "boundary-first") and not self.strategy.startswith(
                "adversarial-random"):
            raise ParameterError(f"strategy: unknown subcatalog strategy {self.strategy!r}")
        resolve_scene(self.scene)
        return self

    def as_dict(self):
        return asdict(self)


@dataclass
class Table:
    columns: list
    rows: list
    x: str | None = None
    group: str | None = None


@dataclass
class Report:
    config: dict
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    indeterminate: list = field(default_factory=list)

    @property
    def passed(self):
        return all(self.verdicts.values())

    def as_dict(self):
        return {"config": self.config, "summary": self.summary, "verdicts": self.verdicts,
                "indeterminate": self.indeterminate,
                "tables": {k: {"columns": t.columns, "rows": t.rows} for k, t in self.tables.items()},
                "provenance": {"version": __version__, "seed": self.config.get("seed"),
                               "walks": self.config.get("walks")}}


SHORT_SCENES = {
    "hyperplane": lambda: Hyperplane(),
    "halfspace3": lambda: Hyperplane(3, window=(0.0, 2**-0.5)),
    "graph-0.05": lambda: LipschitzGraph(0.05),
    "graph-0.5": lambda: LipschitzGraph(0.5),
    "cantor": lambda: FourCornerCantor(6),
    "cantor8": lambda: FourCornerCantor(8),
    "koch": lambda: KochCurve(4),
    "disk": lambda: Sphere(),
}


def resolve_scene(spec):
    if isinstance(spec, dict):
        return scene_from_dict(spec)
    if spec in SHORT_SCENES:
        return SHORT_SCENES[spec]()
    raise ParameterError(f"scene: unknown scene {spec!r}; use a scene JSON object or one of {sorted(SHORT_SCENES)}")


def _f(x):
    return float(x) if x is not None and np.isfinite(x) else (None if x is None else str(x))


# ---------------------------------------------------------------------------
# fatou-carleson


def dyadic_indicator_data(rng, n_functions, level, window=(0.0, 1.0)):
    """Random unions of the 2^level dyadic intervals of ``window``."""
    a, b = window
    h = (b - a) / 2**level
    out = []
    for _ in range(n_functions):
        keep = rng.random(2**level) < 0.5
        out.append([(a + i * h, a + (i + 1) * h) for i in np.nonzero(keep)[0]])
    return out


def _indicator(intervals):
    lo = np.array([iv[0] for iv in intervals])
    hi = np.array([iv[1] for iv in intervals])

    def f(Y):
        x = Y[:, 0]
        return np.any((x[:, None] >= lo[None, :]) & (x[:, None] < hi[None, :]), axis=1).astype(float)

    return f


def fatou_carleson(cfg: ExperimentConfig):
    """Carleson averages of N^{Q0} u at every truncation depth, u harmonic extensions of random dyadic data."""
    from .counting import SampledSolution, counting_all, sample_points
    from .dyadic import build_grid
    from .harmonic import HarmonicDomain, evaluate_many, halfplane_solution
    from .whitney import build_regions, select_subcatalog

    scene = resolve_scene(cfg.scene)
    depths = sorted(cfg.depths)
    p = cfg.params
    n_functions = int(p.get("n_functions", 10))
    level = int(p.get("data_level", 7))
    s_max = int(p.get("s_max", 8))
    grid = build_grid(scene, depth=max(depths))
    regions = build_regions(grid, eta=cfg.eta, K=cfg.K, tau=cfg.tau)
    catalog = select_subcatalog(regions, cfg.strategy, cfg.seed)
    pts = sample_points(regions, catalog, s_max)
    data = dyadic_indicator_data(np.random.default_rng(cfg.seed), n_functions, level)
    keys = sorted(pts)
    P = np.concatenate([pts[k] for k in keys])
    U, inv = np.unique(P, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    if isinstance(scene, Hyperplane) and scene.ambient_dim == 2:
        V = np.array([halfplane_solution(U, iv) for iv in data])
        S = np.zeros_like(V)
        source = "closed form"
    else:
        dom = HarmonicDomain(scene, h=1e-3 * 2.0 ** (-grid.k_max))
        V, S, _ = evaluate_many(dom, U, [_indicator(iv) for iv in data], cfg.walks, cfg.seed)
        source = f"walk on spheres, {cfg.walks} walks per point"
    cuts = np.cumsum([len(pts[k]) for k in keys])[:-1]
    k_lasts = [grid.k_min + d - 1 for d in depths]
    rows, per_fn = [], []
    roots = grid.root_cubes()
    sigma = sum(Q.sigma for Q in roots)
    for e in cfg.eps_list:
        acc = np.zeros((n_functions, len(depths)))
        for i in range(n_functions):
            vals = dict(zip(keys, np.split(V[i][inv], cuts)))
            ses = dict(zip(keys, np.split(S[i][inv], cuts)))
            u = SampledSolution(vals, ses, pts, {"source": source})
            for Q0 in roots:
                res = counting_all(u, grid, catalog, e, Q0, k_lasts)
                for jd, kl in enumerate(k_lasts):
                    acc[i, jd] += res[kl].average * Q0.sigma / sigma
        for jd, d in enumerate(depths):
            rows.append({"eps": e, "depth": d, "carleson_mean": float(acc[:, jd].mean()),
                         "carleson_max": float(acc[:, jd].max()), "carleson_min": float(acc[:, jd].min())})
        per_fn.append({"eps": e, "averages": acc.tolist()})
    rep = Report(cfg.as_dict())
    rep.tables["carleson"] = Table(["eps", "depth", "carleson_mean", "carleson_max", "carleson_min"], rows, "depth",
                                   "eps")
    rep.summary = {"per_function": per_fn, "source": source, "n_functions": n_functions, "data_level": level,
                   "cells": int(len(regions.cells)), "sample_points": int(len(U))}
    if 7 in depths and 10 in depths:
        ok, growth = True, {}
        for e in cfg.eps_list:
            a7 = next(r["carleson_mean"] for r in rows if r["eps"] == e and r["depth"] == 7)
            a10 = next(r["carleson_mean"] for r in rows if r["eps"] == e and r["depth"] == 10)
            g = (a10 - a7) / a7 if a7 > 0 else (0.0 if a10 == 0 else math.inf)
            growth[str(e)] = _f(g)
            ok &= g < 0.25
        rep.summary["growth_7_to_10"] = growth
        rep.verdicts["A5"] = bool(ok)
    return rep


# ---------------------------------------------------------------------------
# ld-packing


def ld_packing(cfg: ExperimentConfig):
    """Packing of LD^1 .. LD^m below the root, for m = 1 .. m_max."""
    from .corona.calibration import CalibrationParams, measure_constant
    from .corona.density import iterate_LD
    from .corona.regimes import verify_packing
    from .dyadic import build_grid

    scene = resolve_scene(cfg.scene)
    p = cfg.params
    m_max = int(p.get("m", 3))
    delta = float(p.get("delta", 0.25))
    Kp = float(p.get("K_poles", 16.0))
    grid = build_grid(scene, depth=max(cfg.depths), depth_cap=max(cfg.depths))
    C = p.get("C")
    if C is None:
        C = measure_constant(grid, [grid.cube(k, 0) for k in grid.generations[:4]], cfg.eta, Kp)
    cal = CalibrationParams.from_constant(float(C), eps_max=float(p.get("eps_max", 0.75)), strict_gamma=False,
                                          gamma_max=float(p.get("gamma_max", 0.75)))
    R = grid.root_cubes()[0]
    forest = iterate_LD(grid, R, cal, m_max, delta=delta, n_walks=cfg.walks, seed=cfg.seed, eta=cfg.eta, K=Kp)
    rows = []
    for m in range(1, m_max + 1):
        fam = sorted(q for lv in forest.levels[1:m + 1] for q in lv)
        rep = verify_packing(grid, fam, "all") if fam else None
        rows.append({"m": m, "n_cubes": len(fam), "packing": rep.constant if rep else 0.0})
    out = Report(cfg.as_dict())
    out.tables["ld_packing"] = Table(["m", "n_cubes", "packing"], rows, "m", None)
    out.summary = {"calibration": cal.as_dict(), "forest": forest.as_dict()}
    out.indeterminate = [{"root": list(q), "cubes": [list(c) for c in s.indeterminate], "budgets": s.budgets}
                         for q, s in sorted(forest.states.items()) if s.indeterminate]
    return out


# ---------------------------------------------------------------------------
# khintchine


def khintchine(cfg: ExperimentConfig):
    """LD iteration from the root, then the sign-randomised chain inequality."""
    from .corona.calibration import CalibrationParams, measure_constant
    from .corona.density import iterate_LD
    from .corona.oscillation import khintchine_experiment
    from .dyadic import build_grid
    from .harmonic import HarmonicDomain

    scene = resolve_scene(cfg.scene)
    p = cfg.params
    depth = max(cfg.depths)
    Kp = float(p.get("K_poles", 16.0))
    grid = build_grid(scene, depth=depth, depth_cap=depth - 1)
    C = p.get("C")
    if C is None:
        C = measure_constant(grid, [grid.cube(k, 0) for k in grid.generations[:4]], cfg.eta, Kp)
    cal = CalibrationParams.from_constant(float(C), eps_max=float(p.get("eps_max", 0.75)), strict_gamma=False,
                                          gamma_max=float(p.get("gamma_max", 0.75)))
    R = grid.root_cubes()[0]
    forest = iterate_LD(grid, R, cal, int(p.get("m", 3)), delta=float(p.get("delta", 0.25)), n_walks=cfg.walks,
                        seed=cfg.seed, eta=cfg.eta, K=Kp)
    dom = HarmonicDomain(scene, h=1e-2 * 2.0 ** (-grid.k_max))
    kr = khintchine_experiment(grid, forest, cal, dom, B=int(p.get("B", 256)), seed=cfg.seed + 1,
                               n_walks=cfg.walks)
    d = kr.as_dict()
    out = Report(cfg.as_dict())
    rows = [{"cube": k, "frequency": v} for k, v in sorted(d["frequency"].items())]
    out.tables["khintchine"] = Table(["cube", "frequency"], rows, "cube", None)
    out.summary = {"report": {k: v for k, v in d.items() if k != "per_b_pass"}, "forest": forest.as_dict()}
    out.indeterminate = [{"root": list(q), "cubes": [list(c) for c in s.indeterminate], "budgets": s.budgets}
                         for q, s in sorted(forest.states.items()) if s.indeterminate]
    out.verdicts["A7"] = bool(d["pass_rate"] == 1.0 and d["bounded"] and d["pairs"] > 0)
    return out


# ---------------------------------------------------------------------------
# corona-dichotomy


def corona_dichotomy(cfg: ExperimentConfig):
    """Bilateral corona packing constant against depth."""
    from .corona.bilateral import bilateral_corona
    from .dyadic import build_grid

    scene = resolve_scene(cfg.scene)
    eta = float(cfg.params.get("eta_corona", 0.3))
    Kc = float(cfg.params.get("K_corona", 1.0))
    rows = []
    for d in sorted(cfg.depths):
        grid = build_grid(scene, depth=d)
        c = bilateral_corona(grid, eta=eta, K=Kc)
        rows.append({"depth": d, "packing": c.packing_constant, "n_bad": len(c.bad), "n_good": len(c.good),
                     "n_regimes": len(c.regimes)})
    out = Report(cfg.as_dict())
    out.tables["corona"] = Table(["depth", "packing", "n_bad", "n_good", "n_regimes"], rows, "depth", None)
    vals = [r["packing"] for r in rows]
    if len(rows) >= 2:
        if scene.ur_label:
            out.verdicts["A6"] = bool(max(vals) <= 1.5 and max(vals) <= 1.25 * min(vals))
        else:
            out.verdicts["A6"] = bool(vals[-1] >= 2 * vals[0])
    out.summary = {"eta": eta, "K": Kc, "ur_label": bool(scene.ur_label)}
    return out


# ---------------------------------------------------------------------------
# approx-quality


def approx_quality(cfg: ExperimentConfig):
    """Scale invariance of the gradient estimate, approximant quality and the Fubini collapse."""
    from .approx import build_approximant, carleson_gradient_norm, cone_gradient_functional, fubini_collapse_check
    from .corona.bilateral import bilateral_corona
    from .dyadic import build_grid
    from .harmonic import halfplane_solution
    from .whitney import build_regions

    scene = resolve_scene(cfg.scene)
    if not (isinstance(scene, Hyperplane) and scene.ambient_dim == 2):
        raise ParameterError("scene: approx-quality uses the closed-form half-plane fixture")
    wide = Hyperplane(window=(-8.0, 8.0))
    u_step = lambda X: halfplane_solution(X, [(0.0, np.inf)])  # noqa: E731
    cg = carleson_gradient_norm(u_step, wide, [((0.0, 0.0), r) for r in (1.0, 2.0, 4.0)])
    spread = max(cg.per_ball) / min(cg.per_ball) - 1
    rows = [{"r": r, "carleson": v} for r, v in zip((1.0, 2.0, 4.0), cg.per_ball)]
    grid = build_grid(scene, depth=max(cfg.depths))
    eta_w, K_w = float(cfg.params.get("eta_regions", 1 / 16)), float(cfg.params.get("K_regions", 16.0))
    regions = build_regions(grid, eta=eta_w, K=K_w, tau=cfg.tau)
    corona = bilateral_corona(grid)
    u = lambda X: halfplane_solution(X, [(0.0, 1.0)])  # noqa: E731
    eps = cfg.eps_list[0]
    phi = build_approximant(u, corona, eps, grid, regions)
    fub = fubini_collapse_check(phi, grid, regions, grid.root_cubes()[0])
    # the cone functional over the whole domain against the sum over its partition by generation of the cell
    whole = cone_gradient_functional(phi, phi.domain)
    lv = regions.cells.level[phi.domain]
    split = sum(cone_gradient_functional(phi, phi.domain[lv == v]) for v in np.unique(lv))
    tv_err = abs(whole - split) / max(1.0, abs(whole))
    balls = [(grid.cube(k, 0).center, grid.cube(k, 0).ell) for k in grid.generations]
    out = Report(cfg.as_dict())
    out.tables["gradient"] = Table(["r", "carleson"], rows, "r", None)
    out.tables["approximant"] = Table(["k", "carleson_tv"], [{"k": k, "carleson_tv": v} for k, v in
                                                             zip(grid.generations, phi.carleson_sums(balls))], "k", None)
    out.summary = {"gradient": cg.as_dict(), "scale_spread": spread, "approximant": phi.as_dict(),
                   "fubini": fub.as_dict(), "tv_consistency": tv_err}
    out.verdicts["A10"] = bool(spread <= 0.05 and fub.within and abs(fub.ratio - 1) <= 1e-9 and tv_err <= 1e-12
                               and phi.history[-1] <= phi.history[0])
    return out


# ---------------------------------------------------------------------------
# validation-battery


def harmonic_battery(n_cases=100, n_walks=100_000, seed=0):
    """Walk-on-spheres against closed-form harmonic measures.

    Half the cases are intervals seen from points of the upper half-plane,
    half are arcs seen from points of the unit disk.
    """
    from .harmonic import HarmonicDomain, disk_arc_measure, halfplane_measure, harmonic_measure

    rng = np.random.default_rng(seed)
    hp = HarmonicDomain(Hyperplane(window=(-1.0, 1.0)), h=1e-4)
    dk = HarmonicDomain(Sphere(), h=1e-4)
    rows = []
    for i in range(n_cases):
        if i % 2 == 0:
            X = np.array([rng.uniform(-1, 1), rng.uniform(0.05, 1.0)])
            a = rng.uniform(-1.5, 1.0)
            b = a + rng.uniform(0.1, 1.5)
            exact = float(halfplane_measure(X[None, :], a, b)[0])
            est = harmonic_measure(hp, X, lambda Y, a=a, b=b: (Y[:, 0] >= a) & (Y[:, 0] < b), n_walks, seed + i)
            case = "half-plane"
        else:
            rad = rng.uniform(0.0, 0.9)
            th = rng.uniform(0, 2 * math.pi)
            X = rad * np.array([math.cos(th), math.sin(th)])
            t0 = rng.uniform(0, 2 * math.pi)
            t1 = t0 + rng.uniform(0.2, 3.0)
            exact = float(disk_arc_measure(X[None, :], t0, t1)[0])
            est = harmonic_measure(
                dk, X, lambda Y, t0=t0, t1=t1: np.mod(np.arctan2(Y[:, 1], Y[:, 0]) - t0, 2 * math.pi) <= t1 - t0,
                n_walks, seed + i)
            case = "disk"
        z = (est.value - exact) / max(est.stderr, 1e-12)
        rows.append({"case": i, "domain": case, "exact": exact, "estimate": est.value, "stderr": est.stderr,
                     "z": z, "capped": est.capped_fraction, "within": bool(abs(z) <= 3)})
    return rows


def validation_battery(cfg: ExperimentConfig):
    """Grid axioms, Whitney bounds and a harmonic battery on one scene."""
    from .dyadic import build_grid, verify_grid_axioms
    from .whitney import decompose_for_grid

    scene = resolve_scene(cfg.scene)
    out = Report(cfg.as_dict())
    rows = []
    for d in cfg.depths:
        grid = build_grid(scene, depth=d)
        ax = verify_grid_axioms(grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cells = decompose_for_grid(grid, cfg.eta, cfg.K)
        lo, hi = cells.whitney_ratios()
        viol = int(np.sum((cells.dist4 < 4 * cells.diam) | (cells.dist > 40 * cells.diam)))
        rows.append({"depth": d, "axioms": bool(ax.all_pass), "a0": ax.a0, "cells": int(len(cells)),
                     "whitney_violations": viol})
    out.tables["grid"] = Table(["depth", "axioms", "a0", "cells", "whitney_violations"], rows, "depth", None)
    out.verdicts["A1"] = all(r["axioms"] and r["a0"] >= 1 / 8 for r in rows)
    out.verdicts["A2"] = all(r["whitney_violations"] == 0 for r in rows)
    n_cases = int(cfg.params.get("n_cases", 20))
    hb = harmonic_battery(n_cases, cfg.walks, cfg.seed)
    out.tables["harmonic"] = Table(list(hb[0].keys()), hb, "case", "domain")
    within = sum(r["within"] for r in hb)
    capped = max(r["capped"] for r in hb)
    out.summary = {"harmonic_within": within, "harmonic_cases": len(hb), "max_capped_fraction": capped}
    out.verdicts["A3"] = bool(within >= math.ceil(0.95 * len(hb)) and capped < 1e-3)
    return out


RUNNERS = {
    "fatou-carleson": fatou_carleson,
    "ld-packing": ld_packing,
    "khintchine": khintchine,
    "corona-dichotomy": corona_dichotomy,
    "approx-quality": approx_quality,
    "validation-battery": validation_battery,
}


def run(cfg: ExperimentConfig) -> Report:
    cfg.validate()
    return RUNNERS[cfg.kind](cfg)
