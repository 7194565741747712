"""Bounded harmonic functions on scene complements by Walk-on-Spheres.

The estimator is deterministic given ``(seed, n_walks)`` and the start point:
walks are grouped in fixed chunks, and each chunk owns a Philox stream keyed
by ``(seed, purpose, point key, chunk)``.  Evaluating many functionals on the
same exit sample gives common random numbers for free.

Closed-form oracles for the half-plane, half-space and disk live at the
bottom, together with a finite-difference solver used only to cross-check
rectangles.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import spsolve
from scipy.special import gamma as gamma_fn

from .errors import DimensionError, NoWalksError, ParameterError
from .scene import BoundaryScene, Hyperplane

CHUNK = 1024
DEFAULT_MAX_STEPS = 100_000
PURPOSE_EXIT = 1


@dataclass(frozen=True)
class HarmonicDomain:
    """Omega together with its Walk-on-Spheres parameters.

    ``h`` is the absorption shell: a walk whose radius drops below ``h`` is
    absorbed at the nearest boundary point.
    """

    scene: BoundaryScene
    h: float = 1e-3
    max_steps: int = DEFAULT_MAX_STEPS
    n_walks: int = 10_000
    safety: float = 1e-3
    far_factor: float = 2.0

    def __post_init__(self):
        if not self.h > 0:
            raise ParameterError("shell thickness h must be positive")
        if self.max_steps < 1 or self.n_walks < 1:
            raise ParameterError("max_steps and n_walks must be positive")
        if not 0 <= self.safety < 1:
            raise ParameterError("safety must lie in [0, 1)")

    @property
    def dim(self):
        return self.scene.ambient_dim

    def at_scale(self, ell, factor=1e-3):
        """Copy with the shell tied to a local length scale."""
        return replace(self, h=factor * ell)


@dataclass
class MeasureEstimate:
    value: float
    stderr: float
    n_walks: int
    seed: int | None
    capped: int = 0
    escaped: int = 0
    requested: int = 0

    @property
    def capped_fraction(self):
        return self.capped / self.requested if self.requested else 0.0

    def as_dict(self):
        return {"value": self.value, "stderr": self.stderr, "n_walks": self.n_walks, "seed": self.seed,
                "capped_fraction": self.capped_fraction, "escaped": self.escaped}


@dataclass
class ExitSample:
    """Exit points of ``n`` walks from one start point.

    ``escaped`` walks left a bounded scene for good (possible only when the
    ambient dimension is at least 3) and carry boundary value 0.
    """

    X: np.ndarray
    points: np.ndarray
    steps: np.ndarray
    capped: np.ndarray
    escaped: np.ndarray
    seed: int | None
    requested: int = field(default=0)

    def values(self, f):
        ok = ~self.capped
        v = np.zeros(int(ok.sum()))
        hit = ~self.escaped[ok]
        if np.any(hit):
            v[hit] = np.asarray(f(self.points[ok][hit]), dtype=float)
        return v

    def integrate(self, f, bounds=None):
        v = self.values(f)
        if len(v) == 0:
            raise NoWalksError("every walk hit the step cap")
        if bounds is not None and (np.any(v < bounds[0] - 1e-12) or np.any(v > bounds[1] + 1e-12)):
            raise ParameterError(f"boundary data leaves [{bounds[0]}, {bounds[1]}]")
        n = len(v)
        se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return MeasureEstimate(float(v.mean()), se, n, self.seed, int(self.capped.sum()),
                               int(self.escaped.sum()), self.requested)

    def measure(self, target):
        return self.integrate(lambda y: np.asarray(target(y), dtype=float), bounds=(0.0, 1.0))


# ---------------------------------------------------------------------------
# random streams


def point_key(X):
    """Stable 64-bit key of a start point (its float64 bytes)."""
    b = np.ascontiguousarray(np.asarray(X, dtype=np.float64)).tobytes()
    return int.from_bytes(hashlib.blake2b(b, digest_size=8).digest(), "little")


def stream(seed, purpose, key, chunk):
    """Philox generator for one chunk of walks."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(key) & (2**63 - 1), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# the walk kernel


def _uniform_directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1)[:, None]


def _far_jump(X, centre, R, U, d):
    """Hitting point on the sphere |y - c| = R from |X - c| > R.

    Returns ``(points, escaped)``.  In the plane the exterior Poisson kernel
    is sampled exactly by inversion in the circle followed by the disk
    automorphism that carries 0 to the inverted point.  From three
    dimensions on a walk escapes with probability ``1 - R/|X - c|``; the
    others land by rejection from the uniform law.
    """
    Y = X - centre
    if d == 2:
        z = (Y[:, 0] + 1j * Y[:, 1]) / R
        a = 1.0 / np.conj(z)  # inversion, lies in the unit disk
        w = np.exp(2j * math.pi * U[:, 0])
        # for the interior disk from a, exp(i theta) uniform maps to (w + a)/(1 + conj(a) w)
        q = (w + a) / (1 + np.conj(a) * w)
        out = centre + R * np.column_stack([q.real, q.imag])
        return out, np.zeros(len(X), dtype=bool)
    raise AssertionError("higher dimensions use _far_jump_nd")


def _far_jump_nd(X, centre, R, rng, d):
    Y = X - centre
    r = np.linalg.norm(Y, axis=1)
    n = len(X)
    escaped = rng.random(n) >= R / r
    out = np.empty_like(X)
    todo = np.nonzero(~escaped)[0]
    # density on the sphere proportional to |X - y|^{-d}; accept against its maximum
    while len(todo):
        v = _uniform_directions(rng, len(todo), d)
        y = centre + R * v
        dist = np.linalg.norm(X[todo] - y, axis=1)
        acc = rng.random(len(todo)) < ((r[todo] - R) / dist) ** d
        out[todo[acc]] = y[acc]
        todo = todo[~acc]
    return out, escaped


def _run_chunk(domain: HarmonicDomain, X, n, rng):
    """Walk ``n`` copies of X; returns points, steps, capped, escaped."""
    scene = domain.scene
    d = domain.dim
    P = np.repeat(np.atleast_2d(np.asarray(X, dtype=float)), n, axis=0)
    steps = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    escaped = np.zeros(n, dtype=bool)
    capped = np.zeros(n, dtype=bool)
    out = np.zeros_like(P)
    ff = scene.far_field() if scene.bounded else None
    if ff is not None:
        fc, fr = np.asarray(ff[0], dtype=float), float(ff[1]) * domain.far_factor
    while np.any(alive):
        idx = np.nonzero(alive)[0]
        Y = P[idx]
        rad = scene.walk_radius(Y)
        done = rad < domain.h
        if np.any(done):
            j = idx[done]
            out[j] = scene.project(Y[done])
            alive[j] = False
        idx, Y, rad = idx[~done], Y[~done], rad[~done]
        # a fresh draw for the whole chunk every step keeps streams aligned
        dirs = _uniform_directions(rng, n, d)[idx]
        U = rng.random((n, 1))[idx]
        newp = Y + (rad * (1 - domain.safety))[:, None] * dirs
        if ff is not None and len(idx):
            fi = np.nonzero(np.linalg.norm(Y - fc, axis=1) > 2 * fr)[0]
            if len(fi):
                if d == 2:
                    jump, esc = _far_jump(Y[fi], fc, fr, U[fi], d)
                else:
                    jump, esc = _far_jump_nd(Y[fi], fc, fr, rng, d)
                newp[fi] = jump
                escaped[idx[fi[esc]]] = True
                alive[idx[fi[esc]]] = False
        P[idx] = newp
        steps[idx] += 1
        over = alive & (steps >= domain.max_steps)
        capped |= over
        alive &= ~over
    return out, steps, capped, escaped


def _check_start(domain, X):
    X = np.asarray(X, dtype=float).reshape(-1)
    if X.shape[0] != domain.dim:
        raise DimensionError(f"point has dimension {X.shape[0]}, scene has {domain.dim}")
    if not (domain.scene.distance(X[None])[0] > 0 and domain.scene.in_omega(X[None])[0]):
        raise ParameterError(f"start point {X.tolist()} is not in Omega")
    return X


def wos_exit_sample(domain: HarmonicDomain, X, rng):
    """One sample of the exit point from ``X`` (``None`` if the walk capped)."""
    X = _check_start(domain, X)
    pts, _, capped, escaped = _run_chunk(domain, X, 1, rng)
    if capped[0] or escaped[0]:
        return None
    return pts[0]


def sample_exits(domain: HarmonicDomain, X, n_walks=None, seed=0, purpose=PURPOSE_EXIT, key=None):
    """All exit points of ``n_walks`` walks from ``X``, chunk by chunk."""
    X = _check_start(domain, X)
    n_walks = domain.n_walks if n_walks is None else int(n_walks)
    if n_walks < 1:
        raise ParameterError("n_walks must be positive")
    key = point_key(X) if key is None else key
    parts = []
    for c in range(0, (n_walks + CHUNK - 1) // CHUNK):
        m = min(CHUNK, n_walks - c * CHUNK)
        parts.append(_run_chunk(domain, X, m, stream(seed, purpose, key, c)))
    pts, steps, capped, escaped = (np.concatenate(z) for z in zip(*parts))
    return ExitSample(X, pts, steps, capped, escaped, seed, n_walks)


def harmonic_measure(domain: HarmonicDomain, X, target, n_walks=None, seed=0):
    """omega^X(target) where ``target`` maps boundary points to booleans."""
    return sample_exits(domain, X, n_walks, seed).measure(target)


def evaluate_solution(domain: HarmonicDomain, X, f, n_walks=None, seed=0):
    """Monte Carlo value of the solution with boundary data ``f`` (|f| <= 1)."""
    est = sample_exits(domain, X, n_walks, seed).integrate(f, bounds=(-1.0, 1.0))
    assert abs(est.value) <= 1 + 3 * est.stderr + 1e-12
    return est


def evaluate_many(domain: HarmonicDomain, points, fs, n_walks=None, seed=0):
    """Values of several boundary data at several points on shared walks.

    Returns ``(values, stderr, capped)`` with shapes ``(len(fs), m)``,
    ``(len(fs), m)`` and ``(m,)``.  The same exit sample feeds every data
    function, so differences between them carry common random numbers.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    V = np.zeros((len(fs), len(points)))
    S = np.zeros_like(V)
    capped = np.zeros(len(points))
    for i, X in enumerate(points):
        ex = sample_exits(domain, X, n_walks, seed)
        for j, f in enumerate(fs):
            e = ex.integrate(f, bounds=(-1.0, 1.0))
            V[j, i], S[j, i] = e.value, e.stderr
        capped[i] = ex.capped.mean()
    return V, S, capped


# ---------------------------------------------------------------------------
# single layer potential


def laplace_constant(d):
    """c_d with E(X) = c_d |X|^{2-d} the Laplace fundamental solution, d >= 3."""
    if d < 3:
        raise DimensionError("the fundamental solution is logarithmic in the plane; use the Case 1 path")
    area = 2 * math.pi ** (d / 2) / gamma_fn(d / 2)
    return 1.0 / ((d - 2) * area)


def _radial(rho0, rho1, z, d):
    """Integral of rho^{d-2} (rho^2 + z^2)^{(2-d)/2} over [rho0, rho1]."""
    if d == 3:
        return math.hypot(rho1, z) - math.hypot(rho0, z)
    val, _ = integrate.quad(lambda p: p ** (d - 2) * (p * p + z * z) ** ((2 - d) / 2), rho0, rho1)
    return val


def single_layer_potential(X, centre, radius, scale=None, scene: BoundaryScene | None = None, rtol=1e-10):
    """scale^{-1} times the potential of surface measure on a flat surface ball.

    The surface ball is the (d-1)-disk of ``radius`` about ``centre`` inside
    the hyperplane {x_d = 0}.  In polar coordinates about the foot of X the
    radial integral is elementary in three dimensions; the angular one is
    done by adaptive quadrature with a break at the tangent angle.
    """
    X = np.asarray(X, dtype=float).reshape(-1)
    c = np.asarray(centre, dtype=float).reshape(-1)
    d = len(X)
    if scene is not None and scene.ambient_dim != d:
        raise DimensionError("point and scene dimensions differ")
    if scene is not None and not isinstance(scene, Hyperplane):
        raise ParameterError("single layer potentials are implemented on flat boundaries only")
    if d < 3:
        raise DimensionError("the fundamental solution is logarithmic in the plane; use the Case 1 path")
    if not radius > 0:
        raise ParameterError("surface ball radius must be positive")
    if abs(c[-1]) > 1e-12:
        raise ParameterError("surface ball centre must lie on {x_d = 0}")
    scale = radius if scale is None else scale
    z = X[-1]
    p = X[:-1]
    s = float(np.linalg.norm(c[:-1] - p))
    r = float(radius)
    # sphere S^{d-2} of directions, parametrised by the angle psi to the axis p -> c
    if d == 3:
        wmeasure = 2.0
    else:
        wmeasure = 2 * math.pi ** ((d - 2) / 2) / gamma_fn((d - 2) / 2)

    def weight(psi):
        return wmeasure * math.sin(psi) ** (d - 3) if d > 3 else wmeasure

    def inner(psi):
        cs = math.cos(psi)
        disc = r * r - s * s * (1 - cs * cs)
        if disc <= 0:
            return 0.0
        root = math.sqrt(disc)
        lo = max(s * cs - root, 0.0)
        hi = s * cs + root
        if hi <= 0:
            return 0.0
        return _radial(lo, hi, abs(z), d)

    if s < r:
        val, _ = integrate.quad(lambda t: weight(t) * inner(t), 0.0, math.pi, epsrel=rtol, limit=200)
    else:
        tangent = math.asin(min(1.0, r / s)) if s > 0 else math.pi
        val, _ = integrate.quad(lambda t: weight(t) * inner(t), 0.0, tangent, epsrel=rtol, limit=200)
    return laplace_constant(d) * val / scale


def single_layer_sup(radius, d=3, scale=None):
    """Supremum of :func:`single_layer_potential`, attained at the centre."""
    c = np.zeros(d)
    return single_layer_potential(c, c, radius, scale)


# ---------------------------------------------------------------------------
# closed forms


def halfplane_measure(X, a, b):
    """omega^X([a, b] x {0}) in the upper half-plane (endpoints may be infinite)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, y = X[:, 0], X[:, 1]
    return (np.arctan((b - x) / y) - np.arctan((a - x) / y)) / math.pi


def halfplane_solution(X, intervals, values=None):
    """Poisson extension of a step function given on disjoint intervals."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(len(X))
    values = np.ones(len(intervals)) if values is None else values
    for (a, b), v in zip(intervals, values):
        out += v * halfplane_measure(X, a, b)
    return out


def halfspace_poisson(X, y):
    """Poisson kernel of {x_d > 0} at boundary points ``y`` (last coordinate ignored)."""
    X = np.asarray(X, dtype=float).reshape(-1)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = len(X)
    cd = gamma_fn(d / 2) / math.pi ** (d / 2)
    diff = y[:, :-1] - X[:-1]
    return cd * X[-1] / (np.einsum("ij,ij->i", diff, diff) + X[-1] ** 2) ** (d / 2)


def disk_arc_measure(X, theta0, theta1, radius=1.0, centre=(0.0, 0.0)):
    """omega^X of the counterclockwise arc [theta0, theta1] of a circle, from inside.

    The disk automorphism carrying X to the centre turns harmonic measure
    into normalised arclength.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = ((X[:, 0] - centre[0]) + 1j * (X[:, 1] - centre[1])) / radius
    span = theta1 - theta0
    if span >= 2 * math.pi:
        return np.ones(len(X))

    def phi(t):
        w = np.exp(1j * t)
        return (w - z) / (1 - np.conj(z) * w)

    ang = np.mod(np.angle(phi(theta1)) - np.angle(phi(theta0)), 2 * math.pi)
    return ang / (2 * math.pi)


def fd_rectangle(g, width=1.0, height=1.0, n=64):
    """Five-point Dirichlet solve on a rectangle; returns ``(xs, ys, U)``.

    Only used to cross-check the walk estimator on a domain without a
    convenient closed form.
    """
    if n < 3:
        raise ParameterError("need at least 3 grid points per side")
    xs = np.linspace(0, width, n)
    ys = np.linspace(0, height, n)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    m = n - 2
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    B = np.asarray(g(np.column_stack([XX.ravel(), YY.ravel()])), dtype=float).reshape(n, n)
    ex = np.ones(m)
    Tx = sparse.diags([ex[:-1], -2 * ex, ex[:-1]], [-1, 0, 1]) / hx**2
    Ty = sparse.diags([ex[:-1], -2 * ex, ex[:-1]], [-1, 0, 1]) / hy**2
    A = sparse.kron(Tx, sparse.eye(m)) + sparse.kron(sparse.eye(m), Ty)
    rhs = np.zeros((m, m))
    rhs[0, :] -= B[0, 1:-1] / hx**2
    rhs[-1, :] -= B[-1, 1:-1] / hx**2
    rhs[:, 0] -= B[1:-1, 0] / hy**2
    rhs[:, -1] -= B[1:-1, -1] / hy**2
    U = B.copy()
    U[1:-1, 1:-1] = spsolve(A.tocsc(), rhs.ravel()).reshape(m, m)
    return xs, ys, U
