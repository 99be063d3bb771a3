"""Pure-Python reference kernels.

These are the fallback used when the compiled ``_ckernels`` extension is
missing or ``FPCS_LAB_PURE=1`` is set.  ``_ckernels.pyx`` implements the
same two routines step for step, so both backends agree to rounding.

``min_norm_point``
    Wolfe's algorithm for the minimum-norm point of a finite point set's
    convex hull.
``flow``
    Event-driven exact integration of ``dx/dt = min-norm(conv(M(x)) + lam)``
    on ``[t0, t1]``.
"""

import math

import numpy as np

from .errors import DriftInconsistency, NoConvergence, NonFinite, ZenoGuard

WEIGHT_TOL = 1e-12
PIVOT_TOL = 1e-14

HORIZON = 0
EQUILIBRIUM = 1


def _affine_min(R):
    """Affine weights of the min-norm point of aff(R), or None if dependent."""
    s = R.shape[0]
    if s == 1:
        return np.ones(1)
    r0 = R[0]
    cols = R[1:] - r0
    q = np.zeros_like(cols)
    upper = np.zeros((s - 1, s - 1))
    for i in range(s - 1):
        v = cols[i].copy()
        for j in range(i):
            upper[j, i] = q[j] @ v
            v -= upper[j, i] * q[j]
        nv = math.sqrt(v @ v)
        if nv < PIVOT_TOL:
            return None
        upper[i, i] = nv
        q[i] = v / nv
    c = q @ r0
    beta = np.zeros(s - 1)
    for i in range(s - 2, -1, -1):
        beta[i] = (-c[i] - upper[i, i + 1:] @ beta[i + 1:]) / upper[i, i]
    return np.concatenate(([1.0 - beta.sum()], beta))


def min_norm_point(points, tol=1e-12, max_iter=1000):
    """Return ``(v, weights, iterations)`` for the hull of the rows of ``points``.

    ``weights`` are convex weights over the rows (zero off the support).  The
    input is scaled by its largest row norm before iterating, so ``tol`` is a
    relative duality-gap threshold.
    """
    P = np.ascontiguousarray(points, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-d array")
    if not np.isfinite(P).all():
        raise NonFinite("point set contains non-finite coordinates")
    k, n = P.shape
    weights = np.zeros(k)
    sq = np.einsum("ij,ij->i", P, P)
    scale = math.sqrt(sq.max())
    if scale == 0.0 or n == 0:
        weights[0] = 1.0
        return np.zeros(n), weights, 0
    Q = P / scale
    j = int(np.argmin(sq))
    corral = [j]
    lam = np.ones(1)
    x = Q[j].copy()
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise NoConvergence(f"Wolfe iteration cap {max_iter} reached")
        dots = Q @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol or j in corral:
            break
        corral.append(j)
        lam = np.append(lam, 0.0)
        stalled = False
        while True:
            alpha = _affine_min(Q[corral])
            if alpha is None:
                # new point numerically inside the affine hull: keep current iterate
                corral.pop()
                lam = lam[:-1]
                stalled = True
                break
            if (alpha > WEIGHT_TOL).all():
                lam = alpha
                break
            theta = 1.0
            for i in range(len(corral)):
                if alpha[i] <= WEIGHT_TOL and lam[i] - alpha[i] > 0.0:
                    theta = min(theta, lam[i] / (lam[i] - alpha[i]))
            lam = (1.0 - theta) * lam + theta * alpha
            keep = lam > WEIGHT_TOL
            if keep.all():
                keep[int(np.argmin(lam))] = False
            corral = [c for c, kp in zip(corral, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ Q[corral]
        if stalled:
            break
    for c, w in zip(corral, lam):
        weights[c] = w
    return x * scale, weights, it


def flow(mu, b, lam, x0, t0, t1, active_tol=1e-9, zero_tol=1e-10, event_tol=1e-12,
         merge_tol=1e-9, consistency_tol=1e-8, mn_tol=1e-12, max_segments=1_000_000):
    """Integrate the unperturbed system from ``x0`` at ``t0`` up to ``t1``.

    Returns ``(times, states, drifts, status)``.  Segment ``k`` starts at
    ``times[k]`` in ``states[k]`` and moves with ``drifts[k]`` until the next
    start time (the last one until ``t1``).  ``status`` is ``EQUILIBRIUM`` if
    the drift vanished, else ``HORIZON``.
    """
    mu = np.ascontiguousarray(mu, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    shifted = mu + np.asarray(lam, dtype=float)
    m = mu.shape[0]
    times, states, drifts = [], [], []
    x = np.array(x0, dtype=float)
    t = float(t0)
    seg_t, seg_x, seg_d = t, x.copy(), None
    forced = np.zeros(m, dtype=bool)
    steps = 0
    while True:
        steps += 1
        if steps > max_segments:
            raise ZenoGuard(f"more than {max_segments} events before t={t1}")
        vals = b - mu @ x
        vmax = vals.max()
        act = (vals >= vmax - active_tol * (1.0 + abs(vmax))) | forced
        at_rest = False
        while True:
            idx = np.flatnonzero(act)
            d = min_norm_point(shifted[idx], mn_tol)[0]
            if math.sqrt(d @ d) <= zero_tol:
                d = np.zeros_like(d)
                at_rest = True
                cand = np.zeros(0, dtype=np.intp)
                tc = np.zeros(0)
                break
            rates = -(mu @ d)
            ra = rates[idx]
            rp = ra.max()
            persist = idx[ra >= rp - active_tol * (1.0 + abs(rp))]
            vp = vals[persist].max()
            cand = np.flatnonzero(~act & (rates > rp))
            tc = (vp - vals[cand]) / (rates[cand] - rp)
            quick = tc <= event_tol
            if quick.any():
                act[cand[quick]] = True
                continue
            break
        if not at_rest and persist.size < idx.size:
            dp = min_norm_point(shifted[persist], mn_tol)[0]
            if math.sqrt((dp - d) @ (dp - d)) > consistency_tol:
                raise DriftInconsistency(
                    f"persisting-set drift differs from actual drift at t={t}")
        if seg_d is None or math.sqrt((d - seg_d) @ (d - seg_d)) > merge_tol * (
                1.0 + math.sqrt(seg_d @ seg_d)):
            times.append(t)
            states.append(x.copy())
            drifts.append(d)
            seg_t, seg_x, seg_d = t, x.copy(), d
        if at_rest:
            status = EQUILIBRIUM
            break
        dt = tc.min() if tc.size else math.inf
        if t + dt >= t1:
            status = HORIZON
            break
        t = t + dt
        x = seg_x + (t - seg_t) * seg_d
        forced = np.zeros(m, dtype=bool)
        forced[cand[tc <= dt + event_tol]] = True
    return np.array(times), np.array(states), np.array(drifts), status


def flow_jumps(mu, b, lam, x0, bounds, increments, active_tol=1e-9, zero_tol=1e-10,
               event_tol=1e-12, merge_tol=1e-9, consistency_tol=1e-8, mn_tol=1e-12,
               max_segments=1_000_000, total_segments=10_000_000):
    """Flow from ``x0`` at time 0 through consecutive intervals ending at ``bounds``.

    At the end of interval ``j`` (except the last) the state is translated by
    ``increments[j]``.  Returns ``(times, states, drifts, starts, status)``
    where ``starts[j]`` is the index of the first segment of interval ``j``.
    """
    bounds = np.asarray(bounds, dtype=float)
    n = np.asarray(mu).shape[1]
    incs = np.asarray(increments, dtype=float).reshape(-1, n)
    T, X, D = [], [], []
    starts = np.zeros(len(bounds), dtype=np.intp)
    x = np.array(x0, dtype=float)
    t, used, status = 0.0, 0, HORIZON
    for j, e in enumerate(bounds):
        budget = total_segments - used
        if budget <= 0:
            raise ZenoGuard(f"more than {total_segments} segments before t={bounds[-1]}")
        starts[j] = used
        times, states, drifts, status = flow(
            mu, b, lam, x, t, float(e), active_tol, zero_tol, event_tol, merge_tol,
            consistency_tol, mn_tol, min(budget, max_segments))
        used += len(times)
        T.append(times)
        X.append(states)
        D.append(drifts)
        if j == len(bounds) - 1:
            break
        x = states[-1] + (e - times[-1]) * drifts[-1] + incs[j]
        t = float(e)
    return (np.concatenate(T), np.concatenate(X).reshape(-1, n),
            np.concatenate(D).reshape(-1, n), starts, status)
