# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Wolfe min-norm point and the event-driven flow.

Mirrors ``_pykernels`` line for line; see that module for the contract.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

from .errors import DriftInconsistency, NoConvergence, NonFinite, ZenoGuard

cnp.import_array()

cdef double WEIGHT_TOL = 1e-12
cdef double PIVOT_TOL = 1e-14

HORIZON = 0
EQUILIBRIUM = 1


cdef class _Work:
    """Scratch buffers for one hull of at most ``k`` points in ``n`` dims."""
    cdef double[:, ::1] Q
    cdef double[:, ::1] cols
    cdef double[:, ::1] qm
    cdef double[:, ::1] upper
    cdef double[::1] lam
    cdef double[::1] alpha
    cdef double[::1] beta
    cdef double[::1] c
    cdef double[::1] v
    cdef double[::1] x
    cdef double[::1] dots
    cdef Py_ssize_t[::1] corral
    cdef Py_ssize_t kmax, n

    def __init__(self, Py_ssize_t kmax, Py_ssize_t n):
        self.kmax = kmax
        self.n = n
        self.Q = np.zeros((kmax, n))
        self.cols = np.zeros((kmax + 1, n))
        self.qm = np.zeros((kmax + 1, n))
        self.upper = np.zeros((kmax + 1, kmax + 1))
        self.lam = np.zeros(kmax + 1)
        self.alpha = np.zeros(kmax + 1)
        self.beta = np.zeros(kmax + 1)
        self.c = np.zeros(kmax + 1)
        self.v = np.zeros(n)
        self.x = np.zeros(n)
        self.dots = np.zeros(kmax)
        self.corral = np.zeros(kmax + 1, dtype=np.intp)


cdef inline double _dot(double[::1] a, double[::1] b, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += a[i] * b[i]
    return s


cdef bint _affine_min(_Work w, Py_ssize_t s) noexcept:
    """Fill ``w.alpha[:s]`` with affine weights over ``w.corral[:s]``; False if dependent."""
    cdef Py_ssize_t n = w.n
    cdef Py_ssize_t i, j, r
    cdef double acc, nv
    cdef Py_ssize_t base = w.corral[0]
    if s == 1:
        w.alpha[0] = 1.0
        return True
    for i in range(s - 1):
        for r in range(n):
            w.cols[i, r] = w.Q[w.corral[i + 1], r] - w.Q[base, r]
    for i in range(s - 1):
        for r in range(n):
            w.v[r] = w.cols[i, r]
        for j in range(i):
            acc = 0.0
            for r in range(n):
                acc += w.qm[j, r] * w.v[r]
            w.upper[j, i] = acc
            for r in range(n):
                w.v[r] -= acc * w.qm[j, r]
        nv = sqrt(_dot(w.v, w.v, n))
        if nv < PIVOT_TOL:
            return False
        w.upper[i, i] = nv
        for r in range(n):
            w.qm[i, r] = w.v[r] / nv
    for i in range(s - 1):
        acc = 0.0
        for r in range(n):
            acc += w.qm[i, r] * w.Q[base, r]
        w.c[i] = acc
    for i in range(s - 2, -1, -1):
        acc = -w.c[i]
        for j in range(i + 1, s - 1):
            acc -= w.upper[i, j] * w.beta[j]
        w.beta[i] = acc / w.upper[i, i]
    acc = 0.0
    for i in range(s - 1):
        acc += w.beta[i]
        w.alpha[i + 1] = w.beta[i]
    w.alpha[0] = 1.0 - acc
    return True


cdef int _wolfe(const double[:, ::1] P, Py_ssize_t[::1] rows, Py_ssize_t k, _Work w,
                double tol, int max_iter, double[::1] out, double[::1] weights) except -1:
    """Min-norm point of the rows ``rows[:k]`` of ``P``; weights indexed by position."""
    cdef Py_ssize_t n = w.n
    cdef Py_ssize_t i, r, j, s, q
    cdef double sq, best, scale, acc, xx, theta, lsum, denom
    cdef int it = 0
    cdef bint found, stalled, allpos
    best = INFINITY
    scale = 0.0
    j = 0
    for i in range(k):
        sq = 0.0
        for r in range(n):
            acc = P[rows[i], r]
            if acc != acc or acc == INFINITY or acc == -INFINITY:
                raise NonFinite("point set contains non-finite coordinates")
            sq += acc * acc
        if sq > scale:
            scale = sq
        if sq < best:
            best = sq
            j = i
        weights[i] = 0.0
    scale = sqrt(scale)
    if scale == 0.0 or n == 0:
        weights[0] = 1.0
        for r in range(n):
            out[r] = 0.0
        return 0
    for i in range(k):
        for r in range(n):
            w.Q[i, r] = P[rows[i], r] / scale
    s = 1
    w.corral[0] = j
    w.lam[0] = 1.0
    for r in range(n):
        w.x[r] = w.Q[j, r]
    while True:
        it += 1
        if it > max_iter:
            raise NoConvergence(f"Wolfe iteration cap {max_iter} reached")
        xx = _dot(w.x, w.x, n)
        best = INFINITY
        j = 0
        for i in range(k):
            acc = 0.0
            for r in range(n):
                acc += w.Q[i, r] * w.x[r]
            if acc < best:
                best = acc
                j = i
        if xx - best <= tol:
            break
        found = False
        for i in range(s):
            if w.corral[i] == j:
                found = True
        if found:
            break
        w.corral[s] = j
        w.lam[s] = 0.0
        s += 1
        stalled = False
        while True:
            if not _affine_min(w, s):
                s -= 1
                stalled = True
                break
            allpos = True
            for i in range(s):
                if w.alpha[i] <= WEIGHT_TOL:
                    allpos = False
            if allpos:
                for i in range(s):
                    w.lam[i] = w.alpha[i]
                break
            theta = 1.0
            for i in range(s):
                denom = w.lam[i] - w.alpha[i]
                if w.alpha[i] <= WEIGHT_TOL and denom > 0.0:
                    if w.lam[i] / denom < theta:
                        theta = w.lam[i] / denom
            for i in range(s):
                w.lam[i] = (1.0 - theta) * w.lam[i] + theta * w.alpha[i]
            allpos = True
            for i in range(s):
                if w.lam[i] <= WEIGHT_TOL:
                    allpos = False
            if allpos:
                q = 0
                for i in range(1, s):
                    if w.lam[i] < w.lam[q]:
                        q = i
                w.lam[q] = 0.0
            q = 0
            lsum = 0.0
            for i in range(s):
                if w.lam[i] > WEIGHT_TOL:
                    w.corral[q] = w.corral[i]
                    w.lam[q] = w.lam[i]
                    lsum += w.lam[i]
                    q += 1
            s = q
            for i in range(s):
                w.lam[i] /= lsum
        for r in range(n):
            acc = 0.0
            for i in range(s):
                acc += w.lam[i] * w.Q[w.corral[i], r]
            w.x[r] = acc
        if stalled:
            break
    for i in range(s):
        weights[w.corral[i]] = w.lam[i]
    for r in range(n):
        out[r] = w.x[r] * scale
    return it


def min_norm_point(points, double tol=1e-12, int max_iter=1000):
    """Compiled twin of ``_pykernels.min_norm_point``."""
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=float)
    if P.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-d array")
    cdef Py_ssize_t k = P.shape[0], n = P.shape[1]
    cdef _Work w = _Work(k, n)
    rows = np.arange(k, dtype=np.intp)
    out = np.zeros(n)
    weights = np.zeros(k)
    it = _wolfe(P, rows, k, w, tol, max_iter, out, weights)
    return out, weights, it


cdef class _Flow:
    """Buffers and state for repeated integration of one system."""
    cdef const double[:, ::1] M
    cdef const double[::1] B
    cdef double[:, ::1] S
    cdef Py_ssize_t m, n
    cdef _Work w
    cdef double[::1] x, seg_x, seg_d, d, dp, vals, rates, tc, wts
    cdef Py_ssize_t[::1] idx, persist
    cdef cnp.uint8_t[::1] act, forced, iscand
    cdef double active_tol, zero_tol, event_tol, merge_tol, consistency_tol, mn_tol

    def __init__(self, mu, b, lam, double active_tol, double zero_tol, double event_tol,
                 double merge_tol, double consistency_tol, double mn_tol):
        self.M = np.ascontiguousarray(mu, dtype=float)
        self.B = np.ascontiguousarray(b, dtype=float)
        self.m = self.M.shape[0]
        self.n = self.M.shape[1]
        m, n = self.m, self.n
        self.S = np.ascontiguousarray(np.asarray(mu, dtype=float) + np.asarray(lam, dtype=float))
        self.w = _Work(m, n)
        self.x = np.zeros(n)
        self.seg_x = np.zeros(n)
        self.seg_d = np.zeros(n)
        self.d = np.zeros(n)
        self.dp = np.zeros(n)
        self.vals = np.zeros(m)
        self.rates = np.zeros(m)
        self.tc = np.zeros(m)
        self.wts = np.zeros(m)
        self.idx = np.zeros(m, dtype=np.intp)
        self.persist = np.zeros(m, dtype=np.intp)
        self.act = np.zeros(m, dtype=np.uint8)
        self.forced = np.zeros(m, dtype=np.uint8)
        self.iscand = np.zeros(m, dtype=np.uint8)
        self.active_tol = active_tol
        self.zero_tol = zero_tol
        self.event_tol = event_tol
        self.merge_tol = merge_tol
        self.consistency_tol = consistency_tol
        self.mn_tol = mn_tol

    cdef int run(self, double t0, double t1, long max_segments, list times, list states,
                 list drifts) except -1:
        """Integrate from ``self.x`` at ``t0``; append segments; return the status."""
        cdef const double[:, ::1] M = self.M
        cdef const double[::1] B = self.B
        cdef double[:, ::1] S = self.S
        cdef Py_ssize_t m = self.m, n = self.n
        cdef _Work w = self.w
        cdef double[::1] x = self.x, seg_x = self.seg_x, seg_d = self.seg_d, d = self.d
        cdef double[::1] dp = self.dp, vals = self.vals, rates = self.rates, tc = self.tc
        cdef double[::1] wts = self.wts
        cdef Py_ssize_t[::1] idx = self.idx, persist = self.persist
        cdef cnp.uint8_t[::1] act = self.act, forced = self.forced, iscand = self.iscand
        cdef double active_tol = self.active_tol, event_tol = self.event_tol
        cdef Py_ssize_t i, r, k, kp
        cdef double t = t0, seg_t = t0, vmax, rp, vp, acc, dt, nd, diff
        cdef bint have_seg = False, at_rest, quick
        cdef long steps = 0
        cdef int status
        for i in range(m):
            forced[i] = 0
        for r in range(n):
            seg_d[r] = 0.0
        while True:
            steps += 1
            if steps > max_segments:
                raise ZenoGuard(f"more than {max_segments} events before t={t1}")
            vmax = -INFINITY
            for i in range(m):
                acc = B[i]
                for r in range(n):
                    acc -= M[i, r] * x[r]
                vals[i] = acc
                if acc > vmax:
                    vmax = acc
            for i in range(m):
                act[i] = 1 if (vals[i] >= vmax - active_tol * (1.0 + fabs(vmax)) or forced[i]) else 0
            at_rest = False
            while True:
                k = 0
                for i in range(m):
                    if act[i]:
                        idx[k] = i
                        k += 1
                _wolfe(S, idx, k, w, self.mn_tol, 1000, d, wts)
                if sqrt(_dot(d, d, n)) <= self.zero_tol:
                    for r in range(n):
                        d[r] = 0.0
                    at_rest = True
                    for i in range(m):
                        iscand[i] = 0
                    break
                rp = -INFINITY
                for i in range(m):
                    acc = 0.0
                    for r in range(n):
                        acc -= M[i, r] * d[r]
                    rates[i] = acc
                    if act[i] and acc > rp:
                        rp = acc
                kp = 0
                vp = -INFINITY
                for i in range(k):
                    if rates[idx[i]] >= rp - active_tol * (1.0 + fabs(rp)):
                        persist[kp] = idx[i]
                        kp += 1
                        if vals[idx[i]] > vp:
                            vp = vals[idx[i]]
                quick = False
                for i in range(m):
                    iscand[i] = 0
                    if not act[i] and rates[i] > rp:
                        iscand[i] = 1
                        tc[i] = (vp - vals[i]) / (rates[i] - rp)
                        if tc[i] <= event_tol:
                            quick = True
                if quick:
                    for i in range(m):
                        if iscand[i] and tc[i] <= event_tol:
                            act[i] = 1
                    continue
                break
            if not at_rest and kp < k:
                _wolfe(S, persist, kp, w, self.mn_tol, 1000, dp, wts)
                acc = 0.0
                for r in range(n):
                    acc += (dp[r] - d[r]) * (dp[r] - d[r])
                if sqrt(acc) > self.consistency_tol:
                    raise DriftInconsistency(
                        f"persisting-set drift differs from actual drift at t={t}")
            diff = 0.0
            nd = 0.0
            for r in range(n):
                diff += (d[r] - seg_d[r]) * (d[r] - seg_d[r])
                nd += seg_d[r] * seg_d[r]
            if not have_seg or sqrt(diff) > self.merge_tol * (1.0 + sqrt(nd)):
                times.append(t)
                for r in range(n):
                    states.append(x[r])
                    drifts.append(d[r])
                seg_t = t
                for r in range(n):
                    seg_x[r] = x[r]
                    seg_d[r] = d[r]
                have_seg = True
            if at_rest:
                status = EQUILIBRIUM
                break
            dt = INFINITY
            for i in range(m):
                if iscand[i] and tc[i] < dt:
                    dt = tc[i]
            if t + dt >= t1:
                status = HORIZON
                break
            t = t + dt
            for r in range(n):
                x[r] = seg_x[r] + (t - seg_t) * seg_d[r]
            for i in range(m):
                forced[i] = 1 if (iscand[i] and tc[i] <= dt + event_tol) else 0
        return status


def _pack(list times, list states, list drifts, Py_ssize_t n):
    return (np.array(times, dtype=float), np.array(states, dtype=float).reshape(-1, n),
            np.array(drifts, dtype=float).reshape(-1, n))


def flow(mu, b, lam, x0, double t0, double t1, double active_tol=1e-9,
         double zero_tol=1e-10, double event_tol=1e-12, double merge_tol=1e-9,
         double consistency_tol=1e-8, double mn_tol=1e-12, long max_segments=1_000_000):
    """Compiled twin of ``_pykernels.flow``."""
    cdef _Flow f = _Flow(mu, b, lam, active_tol, zero_tol, event_tol, merge_tol,
                         consistency_tol, mn_tol)
    cdef Py_ssize_t r
    x = np.ascontiguousarray(x0, dtype=float)
    for r in range(f.n):
        f.x[r] = x[r]
    times, states, drifts = [], [], []
    status = f.run(t0, t1, max_segments, times, states, drifts)
    T, X, D = _pack(times, states, drifts, f.n)
    return T, X, D, status


def flow_jumps(mu, b, lam, x0, bounds, increments, double active_tol=1e-9,
               double zero_tol=1e-10, double event_tol=1e-12, double merge_tol=1e-9,
               double consistency_tol=1e-8, double mn_tol=1e-12, long max_segments=1_000_000,
               long total_segments=10_000_000):
    """Compiled twin of ``_pykernels.flow_jumps``."""
    cdef _Flow f = _Flow(mu, b, lam, active_tol, zero_tol, event_tol, merge_tol,
                         consistency_tol, mn_tol)
    cdef Py_ssize_t n = f.n, r, j, nb, last
    cdef const double[::1] E = np.ascontiguousarray(bounds, dtype=float)
    cdef const double[:, ::1] I = np.ascontiguousarray(increments, dtype=float).reshape(-1, n)
    cdef double t = 0.0, e, ts
    cdef long used = 0, budget
    cdef list times = [], states = [], drifts = []
    x = np.ascontiguousarray(x0, dtype=float)
    for r in range(n):
        f.x[r] = x[r]
    nb = E.shape[0]
    starts = np.zeros(nb, dtype=np.intp)
    status = HORIZON
    for j in range(nb):
        budget = total_segments - used
        if budget <= 0:
            raise ZenoGuard(f"more than {total_segments} segments before t={E[nb - 1]}")
        starts[j] = len(times)
        e = E[j]
        status = f.run(t, e, min(budget, max_segments), times, states, drifts)
        used = len(times)
        if j == nb - 1:
            break
        last = len(times) - 1
        ts = times[last]
        for r in range(n):
            f.x[r] = states[last * n + r] + (e - ts) * drifts[last * n + r] + I[j, r]
        t = e
    T, X, D = _pack(times, states, drifts, n)
    return T, X, D, starts, status
