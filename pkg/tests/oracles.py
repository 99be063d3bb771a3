"""Independent reference implementations used only by the tests.

None of these share code with ``fpcs_lab``: they are slow, direct and
easy to audit.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numba
import numpy as np


# ---------------------------------------------------------------------------
# explicit Euler
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _euler(mu, b, lam, x0, h, steps, every):
    n = x0.shape[0]
    m = mu.shape[0]
    out = np.empty((steps // every + 1, n))
    x = x0.copy()
    out[0] = x
    row = 1
    for k in range(1, steps + 1):
        best, arg = -np.inf, 0
        for i in range(m):
            v = b[i]
            for j in range(n):
                v -= mu[i, j] * x[j]
            if v > best:
                best, arg = v, i
        for j in range(n):
            x[j] += h * (mu[arg, j] + lam[j])
        if k % every == 0:
            out[row] = x
            row += 1
    return out


def euler_path(mu, b, lam, x0, horizon, h=1e-5, every=100):
    """States of explicit Euler with argmax drift selection on a coarse grid.

    Returns ``(times, states)`` sampled every ``every`` steps.
    """
    steps = int(round(horizon / h))
    states = _euler(np.ascontiguousarray(mu, dtype=float), np.asarray(b, dtype=float),
                    np.asarray(lam, dtype=float), np.asarray(x0, dtype=float).copy(),
                    h, steps, every)
    times = h * every * np.arange(states.shape[0])
    return times, states


def piecewise_linear_eval(times, states, drifts, t):
    """Evaluate a right-continuous piecewise-linear path at the points ``t``."""
    k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, None)
    return states[k] + (t - times[k])[:, None] * drifts[k]


# ---------------------------------------------------------------------------
# minimum-norm point
# ---------------------------------------------------------------------------

def min_norm_grid(points, grid=21, rounds=40):
    """Minimum-norm point of a hull of at most 4 points by zooming simplex grids.

    The objective is convex in the weights, so each round re-grids a box of
    two grid spacings around the best weight vector found so far.
    """
    P = np.asarray(points, dtype=float)
    k = P.shape[0]
    if k == 1:
        return P[0].copy()
    lo, hi = np.zeros(k - 1), np.ones(k - 1)
    best_w, best = None, np.inf
    for _ in range(rounds):
        axes = [np.linspace(l, u, grid) for l, u in zip(lo, hi)]
        W = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, k - 1)
        W = np.column_stack([W, 1.0 - W.sum(axis=1)])
        W = W[(W >= -1e-15).all(axis=1)]
        W = np.clip(W, 0.0, None)
        if best_w is not None:
            W = np.vstack([W, best_w])
        vals = np.linalg.norm(W @ P, axis=1)
        i = int(np.argmin(vals))
        best_w, best = W[i], vals[i]
        step = (hi - lo) / (grid - 1)
        lo = np.clip(best_w[:-1] - 2 * step, 0.0, 1.0)
        hi = np.clip(best_w[:-1] + 2 * step, 0.0, 1.0)
    return best_w @ P


def min_norm_subsets(points):
    """Minimum-norm point by trying every affinely independent support set."""
    P = np.asarray(points, dtype=float)
    k, n = P.shape
    best, best_v = np.inf, None
    for s in range(1, min(k, n + 1) + 1):
        for S in itertools.combinations(range(k), s):
            Q = P[list(S)]
            # min |Q^T w| s.t. sum w = 1  ->  KKT system
            G = Q @ Q.T
            K = np.block([[G, np.ones((s, 1))], [np.ones((1, s)), np.zeros((1, 1))]])
            rhs = np.zeros(s + 1)
            rhs[-1] = 1.0
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            w = sol[:s]
            if np.linalg.cond(K) > 1e12 or (w < -1e-12).any():
                continue
            v = w @ Q
            if np.linalg.norm(v) < best:
                best, best_v = np.linalg.norm(v), v
    return best_v


# ---------------------------------------------------------------------------
# polyhedra
# ---------------------------------------------------------------------------

def _solve_fraction(A, c):
    """Solve a square rational system; None if singular."""
    n = len(A)
    M = [list(map(Fraction, row)) + [Fraction(ci)] for row, ci in zip(A, c)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def vertices_exact(A, c):
    """Vertices of ``{x : A x <= c}`` for integer data, as a set of Fraction tuples."""
    A = [[int(v) for v in row] for row in A]
    c = [int(v) for v in c]
    n = len(A[0])
    out = set()
    for S in itertools.combinations(range(len(A)), n):
        x = _solve_fraction([A[i] for i in S], [c[i] for i in S])
        if x is None:
            continue
        if all(sum(a * xi for a, xi in zip(row, x)) <= ci for row, ci in zip(A, c)):
            out.add(tuple(x))
    return out


def project_faces(A, c, x):
    """Projection onto ``{A y <= c}`` by trying every face (subset of tight rows)."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    n = A.shape[1]
    if np.all(A @ x <= c + 1e-12):
        return x.copy()
    best, best_y = np.inf, None
    for s in range(1, n + 1):
        for S in itertools.combinations(range(A.shape[0]), s):
            B = A[list(S)]
            if np.linalg.matrix_rank(B) < s:
                continue
            # y = x - B^T nu with B y = c_S
            nu = np.linalg.solve(B @ B.T, B @ x - c[list(S)])
            y = x - B.T @ nu
            if np.all(A @ y <= c + 1e-9) and np.linalg.norm(y - x) < best:
                best, best_y = np.linalg.norm(y - x), y
    return best_y


# ---------------------------------------------------------------------------
# one-dimensional critical structure
# ---------------------------------------------------------------------------

def interval_cnc(slopes, offsets):
    """Critical points and CNC of ``max_i(-s_i x + b_i)`` on the real line, exactly.

    Works with rationals; each region is the interval where a piece is
    maximal, critical points are the interior breakpoints of the envelope.
    """
    s = [Fraction(v) for v in slopes]
    b = [Fraction(v) for v in offsets]
    m = len(s)

    def value(i, x):
        return -s[i] * x + b[i]

    def region(i):
        lo, hi = None, None
        for j in range(m):
            if j == i:
                continue
            # -s_i x + b_i >= -s_j x + b_j  <=>  (s_j - s_i) x >= b_j - b_i
            a, r = s[j] - s[i], b[j] - b[i]
            if a == 0:
                if r > 0:
                    return None
                continue
            bound = r / a
            if a > 0:
                lo = bound if lo is None else max(lo, bound)
            else:
                hi = bound if hi is None else min(hi, bound)
        if lo is not None and hi is not None and lo > hi:
            return None
        return lo, hi

    regions = [region(i) for i in range(m)]
    crit = set()
    for i in range(m):
        for j in range(i):
            if s[i] == s[j]:
                continue
            x = (b[i] - b[j]) / (s[i] - s[j])
            top = max(value(k, x) for k in range(m))
            if value(i, x) == top and value(j, x) == top:
                crit.add(x)

    def dist(x, reg):
        lo, hi = reg
        if lo is not None and x < lo:
            return lo - x
        if hi is not None and x > hi:
            return x - hi
        return Fraction(0)

    best = None
    for p in crit:
        top = max(value(k, p) for k in range(m))
        for i, reg in enumerate(regions):
            if reg is None or value(i, p) == top:
                continue
            d = dist(p, reg)
            best = d if best is None else min(best, d)
    cnc = None if best is None else best / 2
    return sorted(crit), cnc
