"""Property sweeps over random systems, shared by the CLI and the test-suite."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constants import certify_kappa, compute_constants, decomposition_residual, project_subsystem
from .critical import (compute_cnc, drift_neighborhood, find_critical_points, gamma_bound,
                       is_low_dimensional, no_revisit_check, verify_basin)
from .geometry import affine_rank
from .random_systems import bounded_potential, fig1_potential, generator, random_potential
from .system import integrate_unperturbed


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    elapsed: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, msg: str):
        if len(self.failures) < 50:
            self.failures.append(msg)

    def to_dict(self) -> dict:
        return {"suite": self.name, "passed": self.passed, "checked": self.checked,
                "failures": self.failures, "stats": self.stats}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def lemma2(seed: int = 0, systems: int = 500, horizon: float = 10.0, tol: float = 1e-10):
    """Segment count at most 2^m - 1 and strictly decreasing drift norms."""
    res = SuiteResult("lemma2")
    margin = -math.inf
    for s in range(systems):
        rng = generator(seed, s)
        phi = random_potential(rng)
        x0 = rng.uniform(-3.0, 3.0, size=phi.dim)
        tr = integrate_unperturbed(phi, x0, horizon)
        res.checked += 1
        if tr.segment_count > 2 ** phi.n_pieces - 1:
            res.fail(f"system {s}: {tr.segment_count} segments for m={phi.n_pieces}")
        norms = np.linalg.norm(tr.drifts, axis=1)
        if len(norms) > 1:
            step = float(np.diff(norms).max())
            margin = max(margin, step)
            if step > -tol:
                res.fail(f"system {s}: drift norm step {step:.3g}")
    res.stats["largest_norm_step"] = margin
    return res


def _merged_distance(a, b):
    T = np.union1d(a.times, b.times)
    T = np.append(T, a.horizon)
    return np.array([np.linalg.norm(a.state_at(t) - b.state_at(t)) for t in T])


@_timed
def nonexpansive(seed: int = 0, systems: int = 100, pairs: int = 100,
                 horizon: float = 10.0, tol: float = 1e-9):
    """Distance between two unperturbed paths never increases."""
    res = SuiteResult("nonexpansive")
    worst = -math.inf
    for s in range(systems):
        rng = generator(seed, s, 1)
        phi = random_potential(rng)
        for k in range(pairs):
            a = integrate_unperturbed(phi, rng.uniform(-3.0, 3.0, size=phi.dim), horizon)
            b = integrate_unperturbed(phi, rng.uniform(-3.0, 3.0, size=phi.dim), horizon)
            d = _merged_distance(a, b)
            res.checked += 1
            inc = float(np.diff(d).max()) if len(d) > 1 else -math.inf
            worst = max(worst, inc)
            if inc > tol:
                res.fail(f"system {s} pair {k}: distance grew by {inc:.3g}")
    res.stats["largest_increase"] = worst
    return res


@_timed
def monotone(seed: int = 0, systems: int = 100, pairs: int = 20, tol: float = 1e-9):
    """``(xi(x1) - xi(x2)) . (x1 - x2) <= 0``."""
    res = SuiteResult("monotone")
    for s in range(systems):
        rng = generator(seed, s, 2)
        phi = random_potential(rng)
        for _ in range(pairs):
            x1, x2 = rng.uniform(-3.0, 3.0, size=(2, phi.dim))
            if rng.uniform() < 0.5:
                # put x1 on a tie so non-trivial hulls get exercised
                C = find_critical_points(phi)
                if len(C):
                    x1 = C[rng.integers(len(C))]
            v = float((phi.xi(x1) - phi.xi(x2)) @ (x1 - x2))
            res.checked += 1
            if v > tol:
                res.fail(f"system {s}: inner product {v:.3g}")
    return res


def _same_points(A, B, tol=1e-9):
    return A.shape == B.shape and (A.size == 0 or np.abs(A - B).max() <= tol)


@_timed
def critical(seed: int = 0, systems: int = 100, samples: int = 20):
    """Basin, CNC, field-invariance and low-dimensionality properties."""
    res = SuiteResult("critical")
    phis = [("fig1", fig1_potential())]
    for s in range(systems):
        rng = generator(seed, s, 3)
        n = int(rng.integers(1, 4))
        m = int(rng.integers(n + 1, 7))
        phi = bounded_potential(rng, n, m) if s % 2 == 0 else random_potential(rng, n, m)
        phis.append((f"system {s}", phi))
    for j, (label, phi) in enumerate(phis):
        rng = generator(seed, j, 4)
        C = find_critical_points(phi)
        cnc = compute_cnc(phi, C)
        res.checked += 1
        # every critical point has the CNC as basin radius
        for p in C:
            if not verify_basin(phi, p, cnc):
                res.fail(f"{label}: basin radius {cnc} fails at {p.tolist()}")
            # the actual drift at p is the shortest drift in the basin
            xi = phi.xi(p)
            U = drift_neighborhood(phi, p, cnc)
            if np.linalg.norm(U.drifts, axis=1).min() < np.linalg.norm(xi) - 1e-9:
                res.fail(f"{label}: drift shorter than xi inside basin of {p.tolist()}")
        # some critical point has all of space as basin
        if len(C) and not any(verify_basin(phi, p, math.inf) for p in C):
            res.fail(f"{label}: no critical point with global basin")
        # a constant field changes nothing
        shifted = phi.with_field(rng.uniform(-1.0, 1.0, size=phi.dim))
        C2 = find_critical_points(shifted)
        cnc2 = compute_cnc(shifted, C2)
        if not _same_points(C, C2) or not (cnc == cnc2 or abs(cnc - cnc2) <= 1e-9):
            res.fail(f"{label}: field shift changed the critical structure")
        if any(not (np.array_equal(a.normals, b.normals) and np.array_equal(a.offsets, b.offsets))
               for a, b in zip(phi.regions, shifted.regions)):
            res.fail(f"{label}: field shift changed a region")
        # far from C relative to gamma * r, U_r(x) is low-dimensional
        gb = gamma_bound(phi, C)
        for _ in range(samples):
            if len(C):
                c = C[rng.integers(len(C))]
                x = c + rng.standard_normal(phi.dim) * 10.0 ** rng.uniform(-2, 1)
                dc = float(np.linalg.norm(C - x, axis=1).min())
                r = rng.uniform(0.0, 1.0) * dc / gb
            else:
                x = rng.uniform(-3.0, 3.0, size=phi.dim)
                r = 10.0 ** rng.uniform(-2, 2)
            if r <= 0:
                continue
            if not is_low_dimensional(drift_neighborhood(phi, x, r, tol=0.0).drifts, phi.dim):
                res.fail(f"{label}: U_r(x) full-dimensional at x={x.tolist()}, r={r:.3g}")
    return res


@_timed
def norevisit(seed: int = 0, systems: int = 100, horizon: float = 20.0):
    """A path that came close to a critical point and left never comes back."""
    res = SuiteResult("norevisit")
    for s in range(systems):
        rng = generator(seed, s, 5)
        phi = bounded_potential(rng, 2, int(rng.integers(3, 7)))
        C = find_critical_points(phi)
        cnc = compute_cnc(phi, C)
        for p in C:
            if math.isinf(cnc):
                continue
            x0 = p + rng.uniform(-3.0, 3.0, size=2)
            res.checked += 1
            if not no_revisit_check(phi, p, cnc, x0, horizon):
                res.fail(f"system {s}: revisit near {p.tolist()}")
    return res


def tie_samples(phi, subset, rng, k: int = 8):
    """Points where every drift of ``subset`` ties (plus random points)."""
    idx = list(subset)
    pts = [rng.uniform(-3.0, 3.0, size=phi.dim) for _ in range(k)]
    if len(idx) > 1:
        A = phi.drifts[idx[1:]] - phi.drifts[idx[0]]
        c = phi.offsets[idx[1:]] - phi.offsets[idx[0]]
        x, *_ = np.linalg.lstsq(A, c, rcond=None)
        if np.abs(A @ x - c).max() <= 1e-12 * (1.0 + np.abs(c).max()):
            _, sv, Vt = np.linalg.svd(A)
            null = Vt[int(np.sum(sv > 1e-12)):]
            for _ in range(k):
                pts.append(x + null.T @ rng.uniform(-3.0, 3.0, size=null.shape[0]))
    return pts


@_timed
def decomposition(seed: int = 0, systems: int = 50, tol: float = 1e-9):
    """Drift splits as ``w + lift(child drift)`` wherever only subset pieces are active."""
    res = SuiteResult("decomposition")
    phis = [("fig1", fig1_potential())]
    for s in range(systems):
        rng = generator(seed, s, 6)
        n = int(rng.integers(2, 4))
        phis.append((f"system {s}", random_potential(rng, n, int(rng.integers(n + 1, 7)))))
    worst = 0.0
    for j, (label, phi) in enumerate(phis):
        rng = generator(seed, j, 7)
        hits = 0
        for size in range(1, phi.n_pieces + 1):
            for subset in itertools.combinations(range(phi.n_pieces), size):
                if affine_rank(phi.drifts[list(subset)]) >= phi.dim:
                    continue
                proj = project_subsystem(phi, subset)
                for x in tie_samples(phi, subset, rng):
                    active = set(phi.evaluate(x)[1].indices.tolist())
                    if not active <= set(subset):
                        continue
                    r = decomposition_residual(phi, proj, x)
                    worst = max(worst, r)
                    hits += 1
                    if r > tol:
                        res.fail(f"{label} subset {subset}: residual {r:.3g}")
        res.checked += hits
        if hits == 0:
            res.fail(f"{label}: no sample point with active set inside a subset")
    res.stats["largest_residual"] = worst
    return res


@_timed
def certify(seed: int = 0):
    """Observed deviation ratios stay below kappa for the two-queue example."""
    res = SuiteResult("certify")
    phi = fig1_potential()
    rep = compute_constants(phi, gamma_override=1.0)
    for lam in ([0.0, 0.0], [0.3, 0.3]):
        cert = certify_kappa(phi, rep, {"seed": seed, "fields": [np.array(lam)]})
        res.checked += cert.runs
        res.stats[f"max_ratio_field_{lam}"] = cert.max_ratio
        if not cert.ok:
            res.fail(f"field {lam}: ratio {cert.max_ratio} above kappa {rep.kappa}")
    return res


SUITES = {
    "lemma2": lemma2,
    "nonexpansive": nonexpansive,
    "monotone": monotone,
    "critical": critical,
    "norevisit": norevisit,
    "decomposition": decomposition,
    "certify": certify,
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed)
