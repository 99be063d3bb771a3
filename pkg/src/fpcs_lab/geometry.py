"""Small dense polyhedral primitives.

Everything here works on desk-scale instances (a handful of dimensions, a
few dozen halfspaces) in double precision.  Polyhedra are stored in
``{x : A x <= c}`` form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from . import _backend
from .errors import (DimensionMismatch, EmptyIntersection, EmptyPolyhedron,
                     NoConvergence, NonFinite)

VERTEX_DEDUP_TOL = 1e-8
RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """The set ``{x : normals @ x <= offsets}`` in ``dim`` dimensions."""

    normals: np.ndarray
    offsets: np.ndarray
    dim: int

    def __post_init__(self):
        A = np.asarray(self.normals, dtype=float).reshape(-1, self.dim)
        c = np.asarray(self.offsets, dtype=float).reshape(-1)
        if A.shape[0] != c.shape[0]:
            raise DimensionMismatch(
                f"{A.shape[0]} normals but {c.shape[0]} offsets")
        if not (np.isfinite(A).all() and np.isfinite(c).all()):
            raise NonFinite("polyhedron data must be finite")
        object.__setattr__(self, "normals", A)
        object.__setattr__(self, "offsets", c)

    @classmethod
    def from_halfspaces(cls, normals, offsets):
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        return cls(A, offsets, A.shape[1])

    @property
    def n_constraints(self) -> int:
        return self.offsets.shape[0]

    def violation(self, x) -> float:
        """Largest constraint violation, measured with unit normals."""
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(self.offsets[norms == 0] < 0):
            return math.inf
        A, c = _unit_rows(self.normals, self.offsets)
        if A.shape[0] == 0:
            return 0.0
        return float(max(0.0, np.max(A @ x - c)))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.violation(np.asarray(x, dtype=float)) <= tol * (1.0 + np.linalg.norm(x))

    @cached_property
    def _chebyshev(self):
        """(point, slack) maximising the common slack, or None if infeasible."""
        A, c = self.normals, self.offsets
        n = self.dim
        if A.shape[0] == 0:
            return np.zeros(n), math.inf
        norms = np.linalg.norm(A, axis=1)
        zero = norms == 0
        if np.any(c[zero] < 0):
            return None
        A, c, norms = A[~zero], c[~zero], norms[~zero]
        if A.shape[0] == 0:
            return np.zeros(n), math.inf
        # maximise s subject to A x + s |a| <= c, s <= 1
        obj = np.zeros(n + 1)
        obj[-1] = -1.0
        res = linprog(obj, A_ub=np.hstack([A, norms[:, None]]), b_ub=c,
                      bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
        if res.status != 0:
            return None
        if res.x[-1] < -1e-9 * (1.0 + np.abs(c).max()):
            return None
        return res.x[:n], float(res.x[-1])

    def is_feasible(self) -> bool:
        return self._chebyshev is not None

    def feasible_point(self) -> np.ndarray:
        cheb = self._chebyshev
        if cheb is None:
            raise EmptyPolyhedron("polyhedron is empty")
        return cheb[0].copy()


class MinNormPoint(NamedTuple):
    point: np.ndarray
    weights: np.ndarray
    support: np.ndarray


def min_norm_point(points, tol: float = 1e-12) -> MinNormPoint:
    """Minimum-norm point of the convex hull of the rows of ``points``.

    Wolfe's algorithm; terminates once the duality gap (relative to the
    largest squared point norm) is below ``tol``.  ``support`` lists the
    rows carrying positive weight.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValueError("min_norm_point needs at least one point")
    if not np.isfinite(P).all():
        raise NonFinite("point set contains non-finite coordinates")
    v, w, _ = _backend.min_norm_point(P, tol)
    return MinNormPoint(v, w, np.flatnonzero(w > 0))


def _unit_rows(A, c):
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 0
    return A[keep] / norms[keep, None], c[keep] / norms[keep]


def project_onto_polyhedron(P: Polyhedron, x, tol: float = 1e-10, start=None,
                            max_iter: int = 500):
    """Euclidean projection of ``x`` onto ``P``; returns ``(point, distance)``.

    Primal active-set method on ``min |y - x|^2 / 2`` started from a feasible
    point of ``P`` (``start`` if given, else the cached Chebyshev point).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != P.dim:
        raise DimensionMismatch(f"point has dimension {x.shape[0]}, polyhedron {P.dim}")
    if not np.isfinite(x).all():
        raise NonFinite("point must be finite")
    norms = np.linalg.norm(P.normals, axis=1)
    if np.any(P.offsets[norms == 0] < 0):
        raise EmptyPolyhedron("polyhedron is empty")
    A, c = _unit_rows(P.normals, P.offsets)
    scale = 1.0 + np.linalg.norm(x)
    if A.shape[0] == 0 or np.all(A @ x - c <= tol * scale):
        return x.copy(), 0.0
    y = P.feasible_point() if start is None else np.asarray(start, dtype=float).copy()
    feas_tol = 1e-8 * (1.0 + np.abs(c).max() + np.linalg.norm(y))
    if np.max(A @ y - c) > feas_tol:
        y = P.feasible_point()

    work = []
    for i in np.flatnonzero(np.abs(A @ y - c) <= feas_tol):
        trial = work + [i]
        if np.linalg.matrix_rank(A[trial], tol=1e-10) == len(trial):
            work = trial

    lam = np.zeros(0)
    for _ in range(max_iter):
        g = y - x
        if work:
            Qw, Rw = np.linalg.qr(A[work].T)
            p = -(g - Qw @ (Qw.T @ g))
        else:
            p = -g
        if np.linalg.norm(p) <= 1e-13 * scale:
            if not work:
                break
            lam = np.linalg.solve(Rw, -(Qw.T @ g))
            i = int(np.argmin(lam))
            if lam[i] >= -tol:
                break
            del work[i]
            continue
        Ap = A @ p
        alpha, block = 1.0, -1
        for i in np.flatnonzero(Ap > 1e-14):
            if i in work:
                continue
            step = max(0.0, (c[i] - A[i] @ y) / Ap[i])
            if step < alpha:
                alpha, block = step, i
        y = y + alpha * p
        if block >= 0:
            work.append(int(block))
    else:
        raise NoConvergence("active-set projection did not converge")

    # KKT residual: primal feasibility and stationarity with the final multipliers
    resid = max(0.0, float(np.max(A @ y - c)))
    if work:
        lam = np.linalg.lstsq(A[work].T, x - y, rcond=None)[0]
        resid = max(resid, float(np.linalg.norm((y - x) + A[work].T @ lam)),
                    float(max(0.0, -lam.min())))
    if resid > max(tol, 1e-9) * scale * 10:
        raise NoConvergence(f"projection KKT residual {resid:.3g} above tolerance")
    return y, float(np.linalg.norm(x - y))


def distance(P: Polyhedron, x, tol: float = 1e-10) -> float:
    """Euclidean distance to ``P``; infinite when ``P`` is empty."""
    if not P.is_feasible():
        return math.inf
    return project_onto_polyhedron(P, x, tol)[1]


def enumerate_vertices(P: Polyhedron, tol: float = 1e-9) -> np.ndarray:
    """All basic feasible solutions of ``P`` as rows, lexicographically sorted."""
    n = P.dim
    norms = np.linalg.norm(P.normals, axis=1)
    if np.any(P.offsets[norms == 0] < 0):
        return np.zeros((0, n))
    A, c = _unit_rows(P.normals, P.offsets)
    k = A.shape[0]
    if n == 0:
        return np.zeros((1, 0))
    if k < n:
        return np.zeros((0, n))
    combos = np.array(list(itertools.combinations(range(k), n)), dtype=np.intp)
    As = A[combos]
    sv = np.linalg.svd(As, compute_uv=False)
    ok = sv[:, -1] > 1e-12 * sv[:, 0]
    if not ok.any():
        return np.zeros((0, n))
    sols = np.linalg.solve(As[ok], c[combos[ok]][..., None])[..., 0]
    slack = sols @ A.T - c
    feas = np.all(slack <= tol * (1.0 + np.abs(c))[None, :] * (
        1.0 + np.linalg.norm(sols, axis=1))[:, None], axis=1)
    verts: list[np.ndarray] = []
    for v in sols[feas]:
        if not any(np.linalg.norm(v - u) <= VERTEX_DEDUP_TOL * (1.0 + np.linalg.norm(v))
                   for u in verts):
            verts.append(v)
    if not verts:
        return np.zeros((0, n))
    out = np.array(verts) + 0.0  # drop negative zeros
    return out[np.lexsort(np.round(out, 9).T[::-1])]


def affine_rank(points, tol: float = RANK_TOL) -> int:
    """Dimension of the affine span of the rows of ``points``."""
    P = np.asarray(points, dtype=float)
    if P.shape[0] <= 1 or P.shape[1] == 0:
        return 0
    diffs = P[1:] - P[0]
    sv = np.linalg.svd(diffs, compute_uv=False)
    scale = max(1.0, float(np.abs(P).max()))
    return int(np.sum(sv > tol * scale))


def _canonical_directions(A):
    """Unit rows with a fixed sign (first nonzero entry positive), deduplicated."""
    out: list[np.ndarray] = []
    for a in A:
        nz = np.flatnonzero(np.abs(a) > 1e-12)
        if nz.size and a[nz[0]] < 0:
            a = -a
        if not any(np.linalg.norm(a - u) <= 1e-12 for u in out):
            out.append(a)
    return np.array(out).reshape(-1, A.shape[1])


def hoffman_constant(halfspaces: Polyhedron, tol: float = 1e-12) -> float:
    """Upper bound ``c`` with ``d(x, P) <= c * max_i d(x, W_i)`` for all ``x``.

    ``c = sqrt(r) * max 1/sigma_min(A_S)`` over linearly independent row
    subsets ``S`` of size ``r = rank(A)``, rows normalised to unit length.
    The bound may be loose; pair it with :func:`hoffman_ratio` samples.
    """
    if not halfspaces.is_feasible():
        raise EmptyIntersection("halfspaces have empty intersection")
    A, _ = _unit_rows(halfspaces.normals, halfspaces.offsets)
    if A.shape[0] == 0:
        return 1.0
    D = _canonical_directions(A)
    sv = np.linalg.svd(D, compute_uv=False)
    r = int(np.sum(sv > 1e-10 * sv[0]))
    worst = 0.0
    for S in itertools.combinations(range(D.shape[0]), r):
        s = np.linalg.svd(D[list(S)], compute_uv=False)
        if s[-1] > 1e-10:
            worst = max(worst, 1.0 / s[-1])
    return max(1.0, math.sqrt(r) * worst)


def hoffman_ratio(halfspaces: Polyhedron, x) -> float:
    """``d(x, P) / max_i d(x, W_i)``; zero when ``x`` lies in ``P``."""
    x = np.asarray(x, dtype=float)
    A, c = _unit_rows(halfspaces.normals, halfspaces.offsets)
    worst = float(np.max(np.maximum(A @ x - c, 0.0))) if A.shape[0] else 0.0
    if worst <= 0.0:
        return 0.0
    return distance(halfspaces, x) / worst


def sampled_hoffman_ratio(halfspaces: Polyhedron, samples: int = 10_000, seed: int = 0,
                          radius: float = 10.0) -> float:
    """Largest :func:`hoffman_ratio` over random points around the intersection."""
    rng = np.random.default_rng(seed)
    center = halfspaces.feasible_point()
    best = 0.0
    for _ in range(samples):
        x = center + radius * rng.standard_normal(halfspaces.dim) * rng.uniform()
        best = max(best, hoffman_ratio(halfspaces, x))
    return best
