"""Critical points, CNC, basins and the low-dimensionality constant gamma.

A point ``p`` is critical when the differences of its active drifts span
the whole space; equivalently it is a vertex of some region.  The CNC is
half the smallest distance from a critical point to a region that does not
contain it.  ``U_r(x)`` collects the drifts whose regions meet the closed
``r``-ball around ``x``; gamma is a constant such that
``d(x, C) > gamma * r`` forces ``U_r(x)`` to be low-dimensional.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotCritical
from .geometry import (Polyhedron, affine_rank, distance, enumerate_vertices,
                       hoffman_constant)
from .system import ActiveSet, PwlPotential, _as_vector, integrate_unperturbed

log = logging.getLogger(__name__)

NEIGHBORHOOD_TOL = 1e-9
BASIN_TOL = 1e-9


def is_low_dimensional(points, dim: int | None = None) -> bool:
    """True iff the affine span of ``points`` is a proper subspace."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    n = P.shape[1] if dim is None else dim
    return affine_rank(P) < n


def _is_critical(phi: PwlPotential, p) -> bool:
    _, act = phi.evaluate(p)
    return not is_low_dimensional(act.drifts, phi.dim)


def find_critical_points(phi: PwlPotential) -> np.ndarray:
    """Critical points of ``phi`` as rows, lexicographically sorted.

    Candidates are the vertices of every region; each is kept only if its
    active drifts have full affine rank.
    """
    n = phi.dim
    found: list[np.ndarray] = []
    for R in phi.regions:
        for v in enumerate_vertices(R):
            if any(np.linalg.norm(v - u) <= 1e-8 * (1.0 + np.linalg.norm(v)) for u in found):
                continue
            if _is_critical(phi, v):
                found.append(v)
    if not found:
        return np.zeros((0, n))
    out = np.array(found)
    return out[np.lexsort(np.round(out, 9).T[::-1])]


def region_distances(phi: PwlPotential, x) -> np.ndarray:
    """``d(x, R_i)`` for every piece (``inf`` for pieces that are never active)."""
    x = _as_vector(x, phi.dim)
    return np.array([distance(R, x) for R in phi.regions])


def compute_cnc(phi: PwlPotential, C) -> float:
    """Half the smallest distance from a critical point to a region missing it."""
    best = math.inf
    for p in np.asarray(C, dtype=float).reshape(-1, phi.dim):
        _, act = phi.evaluate(p)
        inside = set(act.indices.tolist())
        for i, R in enumerate(phi.regions):
            if i not in inside:
                best = min(best, distance(R, p))
    return 0.5 * best


def diameter(C) -> float:
    C = np.asarray(C, dtype=float)
    if len(C) < 2:
        return 0.0
    diff = C[:, None, :] - C[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def drift_neighborhood(phi: PwlPotential, x, r: float,
                       tol: float = NEIGHBORHOOD_TOL) -> ActiveSet:
    """Pieces whose regions meet the closed ball of radius ``r`` around ``x``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    if r == 0:
        return phi.evaluate(x)[1]
    if math.isinf(r):
        idx = np.array([i for i, R in enumerate(phi.regions) if R.is_feasible()], dtype=np.intp)
    else:
        d = region_distances(phi, x)
        idx = np.flatnonzero(d <= r + tol * (1.0 + r))
    return ActiveSet(idx, phi.drifts[idx])


def verify_basin(phi: PwlPotential, p, rho: float, tol: float = BASIN_TOL) -> bool:
    """Check that the ball of radius ``rho`` around critical ``p`` is a basin.

    The condition ``xi . y >= |xi|^2`` is linear in ``y``, so testing the
    drifts of ``U_rho(p)`` covers their whole convex hull.
    """
    p = _as_vector(p, phi.dim)
    if not _is_critical(phi, p):
        raise NotCritical(f"{p.tolist()} is not a critical point")
    xi = phi.xi(p)
    U = drift_neighborhood(phi, p, rho)
    sq = float(xi @ xi)
    return bool(np.all(U.drifts @ xi >= sq - tol * (1.0 + sq)))


# ---------------------------------------------------------------------------
# gamma
# ---------------------------------------------------------------------------

def spanning_subsets(phi: PwlPotential) -> list[tuple[int, ...]]:
    """(n+1)-subsets of non-empty regions whose drifts have full affine span."""
    n = phi.dim
    live = [i for i, R in enumerate(phi.regions) if R.is_feasible()]
    return [D for D in itertools.combinations(live, n + 1)
            if affine_rank(phi.drifts[list(D)]) == n]


def _tie_system(phi: PwlPotential, D) -> Polyhedron:
    """Halfspaces ``-(mu_i - mu_j) . x + b_i - b_j >= 0`` for ordered pairs in ``D``."""
    rows, rhs = [], []
    for i, j in itertools.permutations(D, 2):
        rows.append(phi.drifts[i] - phi.drifts[j])
        rhs.append(phi.offsets[i] - phi.offsets[j])
    return Polyhedron(np.array(rows), np.array(rhs), phi.dim)


def _tie_point(phi: PwlPotential, D) -> np.ndarray:
    last = D[-1]
    A = phi.drifts[list(D[:-1])] - phi.drifts[last]
    c = phi.offsets[list(D[:-1])] - phi.offsets[last]
    return np.linalg.solve(A, c)


def gamma_bound(phi: PwlPotential, C, tol: float = 1e-9) -> float:
    """Provable gamma from per-subset Hoffman constants.

    For a spanning subset ``D`` with tie point ``p`` and Hoffman constant
    ``c`` of its pairwise halfspaces, ``max_{i in D} d(x, R_i) >= d(x, p)/c``
    and ``>= g - d(x, p)`` with ``g = max_i d(p, R_i)``.  This gives
    ``d(x, C) <= c * r`` when ``p`` is critical and
    ``d(x, C) <= (c + d(p, C)(c + 1)/g) * r`` otherwise.
    """
    C = np.asarray(C, dtype=float).reshape(-1, phi.dim)
    if len(C) == 0:
        return 1.0
    best = 1.0
    for D in spanning_subsets(phi):
        c = hoffman_constant(_tie_system(phi, D))
        p = _tie_point(phi, D)
        g = max(distance(phi.regions[i], p) for i in D)
        if g <= tol * (1.0 + np.linalg.norm(p)):
            best = max(best, c)
        else:
            dpc = float(np.linalg.norm(C - p, axis=1).min())
            best = max(best, c + dpc * (c + 1.0) / g)
    return float(best)


def neighborhood_radius(phi: PwlPotential, x, subsets=None) -> float:
    """Smallest ``r`` for which ``U_r(x)`` has full affine span (``inf`` if never)."""
    subsets = spanning_subsets(phi) if subsets is None else subsets
    if not subsets:
        return math.inf
    d = region_distances(phi, x)
    S = np.array(subsets, dtype=np.intp)
    return float(d[S].max(axis=1).min())


def _sample_points(C, n_samples, rng, scale):
    centers = C[rng.integers(0, len(C), size=n_samples)]
    dirs = rng.standard_normal((n_samples, C.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = scale * 10.0 ** rng.uniform(-2.0, 1.0, size=n_samples)
    return centers + radii[:, None] * dirs


def estimate_gamma(phi: PwlPotential, C, samples: int = 2000, seed: int = 0,
                   tol: float = 1e-9) -> tuple[float, float]:
    """``(gamma_bound, gamma_empirical)``, both at least 1.

    The empirical value is the largest sampled ``d(x, C) / r(x)``; samples
    are drawn around random critical points at log-uniform radii.
    """
    C = np.asarray(C, dtype=float).reshape(-1, phi.dim)
    if len(C) == 0:
        return 1.0, 1.0
    bound = gamma_bound(phi, C, tol)
    subsets = spanning_subsets(phi)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    scale = 1.0 + diameter(C) + float(np.abs(C).max())
    emp = 1.0
    for x in _sample_points(C, samples, rng, scale):
        dc = float(np.linalg.norm(C - x, axis=1).min())
        if dc <= tol:
            continue
        r = neighborhood_radius(phi, x, subsets)
        if r > 0:
            emp = max(emp, dc / r)
    return bound, float(emp)


# ---------------------------------------------------------------------------
# revisits
# ---------------------------------------------------------------------------

def _ball_interval(x, d, length, p, radius):
    """Sub-interval of ``[0, length]`` where ``|x + s d - p| <= radius``, or None."""
    w = x - p
    a, bq, c = float(d @ d), float(w @ d), float(w @ w) - radius * radius
    if a == 0.0:
        return (0.0, length) if c <= 0 else None
    disc = bq * bq - a * c
    if disc < 0:
        return None
    root = math.sqrt(disc)
    lo, hi = max(0.0, (-bq - root) / a), min(length, (-bq + root) / a)
    return (lo, hi) if lo <= hi else None


def no_revisit_check(phi: PwlPotential, p, rho: float, x0, horizon: float) -> bool:
    """True unless the path enters the ``rho/3`` ball, leaves the ``rho`` ball, then re-enters.

    Returns True with a log note when ``p`` is None (no critical point).
    """
    if p is None:
        log.info("no critical point given; revisit check is vacuous")
        return True
    p = _as_vector(p, phi.dim)
    traj = integrate_unperturbed(phi, x0, horizon)
    ends = np.append(traj.times[1:], traj.horizon)
    events = []
    for t0, t1, x, d in zip(traj.times, ends, traj.states, traj.drifts):
        L = t1 - t0
        inner = _ball_interval(x, d, L, p, rho / 3.0)
        if inner is not None:
            events.append((t0 + inner[0], 0))
        outer = _ball_interval(x, d, L, p, rho)
        if outer is None:
            events.append((t0, 1))
        else:
            if outer[0] > 0.0:
                events.append((t0, 1))
            if outer[1] < L:
                events.append((t0 + outer[1], 1))
    events.sort()
    state = 0  # 0: not yet near, 1: near, 2: left after being near
    for _, kind in events:
        if kind == 0:
            if state == 2:
                return False
            state = 1
        elif state == 1:
            state = 2
    return True


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasinCertificate:
    point: np.ndarray
    radius: float
    verified: bool


@dataclass(frozen=True)
class CriticalAnalysis:
    critical_points: np.ndarray
    cnc: float
    diameter: float
    basins: list = field(default_factory=list)
    gamma_bound: float = 1.0
    gamma_empirical: float = 1.0

    def to_dict(self) -> dict:
        def num(v):
            return "inf" if math.isinf(v) else v
        return {
            "critical_points": self.critical_points.tolist(),
            "cnc": num(self.cnc),
            "D_C": self.diameter,
            "basins": [{"point": b.point.tolist(), "radius": num(b.radius),
                        "verified": b.verified} for b in self.basins],
            "gamma_bound": self.gamma_bound,
            "gamma_empirical": self.gamma_empirical,
        }


def analyze(phi: PwlPotential, samples: int = 2000, seed: int = 0) -> CriticalAnalysis:
    """Run the full critical-point analysis of ``phi``.

    Each critical point is certified with the CNC as basin radius (the whole
    space when the CNC is infinite).
    """
    C = find_critical_points(phi)
    cnc = compute_cnc(phi, C)
    basins = [BasinCertificate(p, cnc, verify_basin(phi, p, cnc)) for p in C]
    gb, ge = estimate_gamma(phi, C, samples, seed)
    return CriticalAnalysis(C, cnc, diameter(C), basins, gb, ge)
