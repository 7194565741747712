"""Acceptance suite A1 to A11.

Every test prints one ``A<n> PASS`` or ``A<n> FAIL`` line with its key
numbers before asserting, so the verdicts are visible in ``pytest -v``
output even when a criterion fails.
"""
import json
import math
import time
import warnings

import numpy as np
import pytest

from oracles import brute_force_chain
from qfatou.cli import emit
from qfatou.corona import CalibrationParams, bilateral_corona, construct_uQ, flat_poles
from qfatou.counting import SampledSolution, claim_421_check, counting_all, counting_function, longest_chain
from qfatou.dyadic import build_grid, verify_grid_axioms
from qfatou.experiments import ExperimentConfig, harmonic_battery, resolve_scene, run
from qfatou.harmonic import HarmonicDomain
from qfatou.whitney import build_regions, decompose_for_grid, select_subcatalog

FIXTURE_SCENES = ["hyperplane", "graph-0.05", "graph-0.5", "cantor", "koch"]


@pytest.fixture
def verdict(capsys):
    def say(name, ok, detail):
        with capsys.disabled():
            print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
        assert ok, f"{name}: {detail}"

    return say


@pytest.fixture(scope="module")
def depth10():
    out = {}
    for name in FIXTURE_SCENES:
        t = time.perf_counter()
        g = build_grid(resolve_scene(name), depth=10)
        ax = verify_grid_axioms(g)
        out[name] = (g, ax, time.perf_counter() - t)
    return out


def test_A1_grid_axioms(depth10, verdict):
    rows = {n: (ax.all_pass, ax.a0, t) for n, (_, ax, t) in depth10.items()}
    ok = all(p and a0 >= 1 / 8 and t < 60 for p, a0, t in rows.values())
    verdict("A1", ok, ", ".join(f"{n}: axioms={p} a0={a0:.3f} {t:.1f}s" for n, (p, a0, t) in rows.items()))


def test_A2_whitney_bounds(depth10, verdict):
    parts, total = [], 0
    for name, (g, _, _) in depth10.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cells = decompose_for_grid(g, 1 / 16, 16)
        bad = int(np.sum((cells.dist4 < 4 * cells.diam) | (cells.dist > 40 * cells.diam)))
        total += bad
        parts.append(f"{name}: {len(cells)} cells, {bad} violations")
    verdict("A2", total == 0, "; ".join(parts))


def test_A3_harmonic_battery(verdict):
    t = time.perf_counter()
    rows = harmonic_battery(100, 100_000, seed=0)
    dt = time.perf_counter() - t
    within = sum(r["within"] for r in rows)
    capped = max(r["capped"] for r in rows)
    ok = within >= 95 and capped < 1e-3 and dt < 300
    verdict("A3", ok, f"{within}/100 within 3 stderr, max capped fraction {capped:.2e}, {dt:.0f}s")


def test_A4_counting_oracle(verdict):
    rng = np.random.default_rng(4)
    mismatch = eps_viol = trunc_viol = 0
    for _ in range(500):
        n = int(rng.integers(0, 13))
        lv = sorted(rng.integers(0, 6, n).tolist())
        val = rng.uniform(-1, 1, n).tolist()
        eps = float(rng.uniform(0.01, 1.0))
        got = longest_chain(lv, val, eps)
        mismatch += got != brute_force_chain(lv, val, eps)
        eps_viol += longest_chain(lv, val, eps * 1.5) > got
        cut = int(rng.integers(0, 6))
        keep = [i for i in range(n) if lv[i] <= cut]
        trunc_viol += longest_chain([lv[i] for i in keep], [val[i] for i in keep], eps) > got
    # the grid DP against the per-point DP and enumeration on a real chain
    g = build_grid(resolve_scene("hyperplane"), depth=4)
    for _ in range(20):
        vals = {(int(Q.flat), 0): rng.uniform(-1, 1, int(rng.integers(1, 3))) for Q in g.cubes()}
        u = SampledSolution(vals)
        cat = np.zeros(g.n_cubes, dtype=np.int64)
        Q0 = g.root_cubes()[0]
        eps = float(rng.uniform(0.05, 0.8))
        res = counting_all(u, g, cat, eps, Q0)[g.k_max]
        for x, N in zip(res.nodes, res.N):
            chain = g.chain_of_node(int(x), Q0.k)
            lv = [k for k, j in chain for _ in vals[(int(g.cube(k, j).flat), 0)]]
            val = [v for k, j in chain for v in vals[(int(g.cube(k, j).flat), 0)]]
            mismatch += N != brute_force_chain(lv, val, eps)
            mismatch += N != counting_function(u, g, cat, int(x), eps, Q0)
    ok = mismatch == eps_viol == trunc_viol == 0
    verdict("A4", ok, f"500 fixtures + 20 grid chains: {mismatch} mismatches, {eps_viol} eps and "
                      f"{trunc_viol} truncation monotonicity violations")


@pytest.mark.parametrize("scene", ["hyperplane", "graph-0.05"])
def test_A5_fatou_plateau(scene, verdict):
    cfg = ExperimentConfig(kind="fatou-carleson", scene=scene, depth=list(range(4, 11)), eta=1e-4, K=1e4,
                           eps=0.1, seed=0, walks=4096)
    rep = run(cfg)
    means = [r["carleson_mean"] for r in rep.tables["carleson"].rows]
    growth = rep.summary["growth_7_to_10"]["0.1"]
    verdict(f"A5[{scene}]", rep.verdicts["A5"],
            f"mean Carleson average by depth 4..10: {[round(m, 3) for m in means]}, growth 7->10 {growth:.3f} "
            f"(limit 0.25)")


def test_A6_corona_dichotomy(verdict):
    t = time.perf_counter()
    parts, ok = [], True
    for scene in ("graph-0.05", "graph-0.5", "cantor"):
        rep = run(ExperimentConfig(kind="corona-dichotomy", scene=scene, depth=list(range(5, 11)), eta=1 / 16,
                                   K=16))
        vals = [r["packing"] for r in rep.tables["corona"].rows]
        ok &= rep.verdicts["A6"]
        parts.append(f"{scene}: packing {vals[0]:.3f}..{vals[-1]:.3f}")
    dt = time.perf_counter() - t
    verdict("A6", ok and dt < 300, "; ".join(parts) + f"; {dt:.0f}s")


def test_A7_khintchine(verdict):
    cfg = ExperimentConfig(kind="khintchine", scene="cantor8", depth=17, eta=1 / 256, K=16, walks=2048, seed=0,
                           params={"C": 5.7, "m": 3, "delta": 0.25, "B": 256, "K_poles": 16.0})
    rep = run(cfg)
    r = rep.summary["report"]
    verdict("A7", rep.verdicts["A7"],
            f"{r['pairs']} (x, b) pairs, {r['failures']} failures, pass rate {r['pass_rate']}, "
            f"max |u_b| excess {r['max_excess']:.3f}, F2 = {r['n_cubes']} cubes")


def test_A8_case_two_separation(verdict):
    sc = resolve_scene("halfspace3")
    cal = CalibrationParams.from_constant(2.0)
    ell = 2.0**-3
    x = np.array([0.3, 0.3, 0.0])
    p, s = flat_poles(x, ell, cal)
    inQ = lambda Y: np.all(np.abs(Y[:, :2] - x[:2]) <= ell / 2, axis=1)  # noqa: E731
    sol = construct_uQ(HarmonicDomain(sc, h=1e-5), (3, 0), x, p, s, inQ, inQ, cal, ell, n_walks=20_000, seed=0)
    # Case 1 in the plane, reported with its diagnostics
    sc2 = resolve_scene("hyperplane")
    x2 = np.array([0.5, 0.0])
    p2, s2 = flat_poles(x2, 0.25, cal)
    in2 = lambda Y: np.abs(Y[:, 0] - 0.5) <= 0.125  # noqa: E731
    sol1 = construct_uQ(HarmonicDomain(sc2, h=1e-5), (2, 1), x2, p2, s2, in2, in2, cal, 0.25, n_walks=20_000,
                        seed=0)
    ok = sol.case == 2 and sol.meets_target
    verdict("A8", ok, f"Case {sol.case}: |u(p) - u(s)| = {sol.separation:.4f} +- {sol.stderr:.4f} vs "
                      f"c2 = {cal.c2:.4f}; planar Case {sol1.case} diagnostics {json.dumps(sol1.as_dict())}")


def _log_solutions(grid, pts, rng, n):
    """Normalised sums of log|X - z| with poles z on E, harmonic in Omega."""
    keys = sorted(pts)
    out = []
    for _ in range(n):
        z = grid.points[rng.integers(0, len(grid.points), 4)]
        c = rng.normal(size=4)
        vals = {k: sum(ci * np.log(np.linalg.norm(pts[k] - zi, axis=1)) for ci, zi in zip(c, z)) for k in keys}
        allv = np.concatenate(list(vals.values()))
        lo, hi = allv.min(), allv.max()
        out.append(SampledSolution({k: (v - lo) / (hi - lo) for k, v in vals.items()}, points=pts, partial=True))
    return out


def test_A9_claim_decomposition(verdict):
    from qfatou.counting import sample_points

    rng = np.random.default_rng(9)
    parts, fails = [], 0
    for name in FIXTURE_SCENES:
        g = build_grid(resolve_scene(name), depth=7)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            regions = build_regions(g, eta=1 / 16, K=16, strict=False)
        cat = select_subcatalog(regions, "interior-first")
        pts = sample_points(regions, cat, 4)
        corona = bilateral_corona(g)
        sols = _log_solutions(g, pts, rng, 10)
        roots = g.root_cubes()
        f = 0
        for _ in range(1000):
            u = sols[rng.integers(len(sols))]
            Q0 = roots[rng.integers(len(roots))]
            x = int(rng.integers(Q0.nodes.start, Q0.nodes.stop))
            r = claim_421_check(u, g, cat, x, float(rng.uniform(0.02, 0.3)), Q0, corona.labels)
            f += not r.holds
        fails += f
        parts.append(f"{name}: {1000 - f}/1000")
    verdict("A9", fails == 0, ", ".join(parts))


def test_A10_approx_machinery(verdict):
    rep = run(ExperimentConfig(kind="approx-quality", scene="hyperplane", depth=6, eta=1 / 16, K=16, eps=0.1))
    s = rep.summary
    fub = s["fubini"]
    verdict("A10", rep.verdicts["A10"],
            f"scale spread {s['scale_spread']:.4f}, fubini ratio {fub['ratio']:.15f}, collapsed ratio "
            f"{fub['collapsed_ratio']:.3f} in [{fub['overlap_min']:.3f}, {fub['overlap_max']:.3f}], deviation "
            f"{s['approximant']['history']}, TV consistency error {s['tv_consistency']:.1e}")


@pytest.mark.parametrize("kind,scene,extra", [
    ("validation-battery", "koch", {"depth": 6, "params": {"n_cases": 10}}),
    ("corona-dichotomy", "cantor", {"depth": [3, 5]}),
    ("fatou-carleson", "hyperplane", {"depth": [4, 5], "eps": [0.1, 0.2], "params": {"n_functions": 3}}),
])
def test_A11_determinism(kind, scene, extra, tmp_path, verdict):
    def once(d):
        cfg = ExperimentConfig(kind=kind, scene=scene, eta=1 / 16, K=16, walks=4096, seed=3, **extra)
        emit(run(cfg), d)
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    a, b = once(tmp_path / "a"), once(tmp_path / "b")
    verdict(f"A11[{kind}]", a == b and len(a) > 1, f"{len(a)} files, byte-identical: {a == b}")


def test_A7_calibration_is_consistent():
    cal = CalibrationParams.from_constant(5.7, eps_max=0.75, strict_gamma=False, gamma_max=0.75)
    assert (cal.M1, cal.M2) == (4, 4)
    assert math.isclose(cal.eps0, cal.c4 / 16)
