"""Recursive sensitivity constant kappa.

Restricted to a low-dimensional drift subset ``U``, the dynamics split as
``F(x) = w + F_Y(x_Y)`` where ``w`` is the min-norm point of the affine
hull of ``U`` and ``Y`` is an (n-1)-dimensional subspace orthogonal to
``w``.  The constant for an n-dimensional system is assembled from the
constants of all such (n-1)-dimensional children:

    sigma = 4 + max child kappa
    eta   = m * 2**(m+1) * sigma
    theta = gamma_min / (40 (M+2) (gamma+1) eta)
    kappa = 4 D / theta + 5 (M+2) (gamma+1) eta

with ``kappa = eta`` when there are no critical points and
``kappa = 4 (gamma+1) eta + 1`` when the only critical structure is a
single point contained in every region.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .critical import compute_cnc, diameter, find_critical_points, gamma_bound, is_low_dimensional
from .errors import NotLowDimensional, ScaleLimit
from .geometry import affine_rank
from .system import PwlPotential, actual_drift

SUBSET_BUDGET = 2 ** 16
ONE_DIM_KAPPA = 1.0  # reproduces the worked example; sampled 1-D ratios reach 2
SPAN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProjectedSystem:
    """Child system of a low-dimensional drift subset.

    Attributes
    ----------
    subset : tuple of int
        Parent piece indices forming the subset.
    w : ndarray, shape (n,)
        Min-norm point of the affine hull of the subset drifts.
    basis : ndarray, shape (n-1, n)
        Orthonormal rows spanning ``Y``; each has its first nonzero entry positive.
    child : PwlPotential
        Drifts ``basis @ (mu - w)`` with the parent offsets.
    """

    subset: tuple
    w: np.ndarray
    basis: np.ndarray
    child: PwlPotential

    def coords(self, x) -> np.ndarray:
        return self.basis @ np.asarray(x, dtype=float)

    def lift(self, y) -> np.ndarray:
        return self.basis.T @ np.asarray(y, dtype=float)


def _sign_normalize(rows):
    out = rows.copy()
    for k, r in enumerate(out):
        nz = np.flatnonzero(np.abs(r) > 1e-12)
        if nz.size and r[nz[0]] < 0:
            out[k] = -r
    return out


def project_subsystem(phi: PwlPotential, subset) -> ProjectedSystem:
    """Split ``phi`` restricted to ``subset`` into a translation and a child system."""
    subset = tuple(int(i) for i in subset)
    U = phi.drifts[list(subset)]
    n = phi.dim
    if not is_low_dimensional(U, n):
        raise NotLowDimensional(f"drifts {subset} span the whole space")
    base = U[0]
    diffs = U[1:] - base
    if len(diffs):
        _, s, Vt = np.linalg.svd(diffs)
        k = int(np.sum(s > SPAN_TOL * max(1.0, float(np.abs(U).max()))))
        span = Vt[:k]
    else:
        k, span = 0, np.zeros((0, n))
    # min-norm point of base + span
    w = base - span.T @ (span @ base)
    w[np.abs(w) < 1e-15] = 0.0
    # complete span to an (n-1)-dim orthonormal basis inside w-perp
    wn = np.linalg.norm(w)
    fixed = [span] + ([w[None, :] / wn] if wn > 1e-12 else [])
    F = np.vstack(fixed) if fixed else np.zeros((0, n))
    extra = n - 1 - k
    if extra > 0:
        comp = np.linalg.svd(F)[2][F.shape[0]:] if F.shape[0] else np.eye(n)
        Y = np.vstack([span, comp[:extra]])
    else:
        Y = span
    Y = _sign_normalize(Y)
    child_drifts = (U - w) @ Y.T
    child_drifts[np.abs(child_drifts) < 1e-15] = 0.0
    child = PwlPotential(child_drifts, phi.offsets[list(subset)], None, phi.active_tol, dim=n - 1)
    resid = np.abs((U - w) @ w).max() if wn > 0 else 0.0
    if resid > 1e-9 * (1.0 + float(np.abs(U).max()) ** 2):
        raise NotLowDimensional("translation is not orthogonal to the subset differences")
    back = child_drifts @ Y
    if np.abs(back - (U - w)).max() > 1e-9 * (1.0 + float(np.abs(U).max())):
        raise NotLowDimensional("subset drifts do not lie in the child subspace")
    return ProjectedSystem(subset, w, Y, child)


def decomposition_residual(phi: PwlPotential, proj: ProjectedSystem, x) -> float:
    """``|xi(x) - (w + lift(xi_child(x_Y)))|``; meaningful when ``M(x)`` lies in the subset."""
    xi = actual_drift(phi.with_field(np.zeros(phi.dim)), x)
    child = proj.child
    inner = actual_drift(child, proj.coords(x)) if child.dim else np.zeros(0)
    return float(np.linalg.norm(xi - (proj.w + proj.lift(inner))))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ConstantsReport:
    """Recursion trace and final constant for one system."""

    n: int
    m: int
    kappa: float
    rule: str
    M: int | None = None
    D_C: float | None = None
    gamma: float | None = None
    gamma_source: str | None = None
    gamma_min: float | None = None
    sigma: float | None = None
    eta: float | None = None
    theta_star: float | None = None
    children: list = field(default_factory=list)  # (subset, ConstantsReport)

    def to_dict(self, depth: int | None = None) -> dict:
        def num(v):
            if v is None:
                return None
            if isinstance(v, float):
                if math.isinf(v):
                    return "inf"
                if v.is_integer() and abs(v) < 2 ** 53:
                    return int(v)
            return v
        out: dict[str, Any] = {
            "n": self.n, "m": self.m, "rule": self.rule, "M": self.M,
            "D_C": num(self.D_C), "gamma": num(self.gamma),
            "gamma_source": self.gamma_source, "gamma_min": num(self.gamma_min),
            "sigma": num(self.sigma), "eta": num(self.eta),
            "theta_star": num(self.theta_star), "kappa": num(self.kappa),
        }
        if depth is None or depth > 0:
            nxt = None if depth is None else depth - 1
            out["children"] = [{"subset": list(s), "report": r.to_dict(nxt)}
                               for s, r in self.children]
        return out


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    def spend(self, k):
        self.used += k
        if self.used > self.limit:
            raise ScaleLimit(f"subset enumeration exceeds budget of {self.limit}")


def _canonical_key(phi: PwlPotential):
    rows = np.column_stack([phi.drifts, phi.offsets])
    rows = np.round(rows, 9) + 0.0
    return (phi.dim,) + tuple(sorted(map(tuple, rows.tolist())))


def compute_constants(phi: PwlPotential, gamma_override: float | None = None,
                      subset_budget: int = SUBSET_BUDGET,
                      one_dim_kappa: float = ONE_DIM_KAPPA) -> ConstantsReport:
    """Compute kappa for ``phi`` with the full recursion trace.

    ``gamma_override`` replaces the Hoffman-based gamma at the top level
    only; children always use their own bound.  The result does not depend
    on the constant field of ``phi``.
    """
    budget = _Budget(subset_budget)
    memo: dict = {}
    return _constants(phi, gamma_override, budget, memo, one_dim_kappa)


def _constants(phi, gamma_override, budget, memo, one_dim_kappa):
    n, m = phi.dim, phi.n_pieces
    if n == 0:
        return ConstantsReport(n, m, 0.0, "dimension-0")
    if m == 1:
        return ConstantsReport(n, m, 1.0, "single-piece")
    if n == 1:
        return ConstantsReport(n, m, float(one_dim_kappa), "one-dimensional")

    budget.spend(2 ** m - 1)
    children = []
    worst = -math.inf
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            if affine_rank(phi.drifts[list(subset)]) >= n:
                continue
            proj = project_subsystem(phi, subset)
            key = _canonical_key(proj.child)
            rep = memo.get(key)
            if rep is None:
                rep = _constants(proj.child, None, budget, memo, one_dim_kappa)
                memo[key] = rep
            children.append((subset, rep))
            worst = max(worst, rep.kappa)
    sigma = 4.0 + worst
    eta = float(m * 2 ** (m + 1)) * sigma

    C = find_critical_points(phi)
    M = len(C)
    D_C = diameter(C)
    gamma_min = compute_cnc(phi, C)
    if gamma_override is not None:
        gamma, source = float(gamma_override), "override"
    else:
        gamma, source = gamma_bound(phi, C), "bound"

    if M == 0:
        kappa, theta, rule = eta, None, "no-critical-points"
    elif math.isinf(gamma_min) and D_C == 0.0:
        kappa, theta, rule = 4.0 * (gamma + 1.0) * eta + 1.0, 0.0, "single-basin"
    else:
        theta = gamma_min / (40.0 * (M + 2) * (gamma + 1.0) * eta)
        kappa = 4.0 * D_C / theta + 5.0 * (M + 2) * (gamma + 1.0) * eta
        rule = "general"
    return ConstantsReport(n, m, kappa, rule, M, D_C, gamma, source, gamma_min,
                           sigma, eta, theta, children)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Certification:
    ok: bool
    max_ratio: float
    runs: int
    kappa: float

    def __bool__(self):
        return self.ok


DEFAULT_SWEEP = {
    "thetas": [0.01, 0.1, 1.0],
    "runs": 4,
    "horizon": 20.0,
    "starts": 3,
    "fields": None,
    "seed": 0,
}


def certify_kappa(phi: PwlPotential, report: ConstantsReport,
                  sweep_params: Mapping[str, Any] | None = None) -> Certification:
    """Check ``sup|x~ - x| <= kappa sup|U|`` on a family of perturbed runs.

    Runs cover square-wave and Bernoulli paths at several amplitudes,
    several initial states (critical points first) and each constant field
    in ``sweep_params['fields']`` (default: the field of ``phi`` and a
    random shift).
    """
    from .perturbation import sensitivity_sweep

    p = dict(DEFAULT_SWEEP)
    p.update(sweep_params or {})
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([p["seed"], 17])))
    n = phi.dim
    starts = [c for c in find_critical_points(phi)][: p["starts"]]
    while len(starts) < p["starts"]:
        starts.append(rng.uniform(-3.0, 3.0, size=n))
    fields = p["fields"]
    if fields is None:
        fields = [phi.field, phi.field + rng.uniform(-0.3, 0.3, size=n)]
    H = float(p["horizon"])
    worst, total = 0.0, 0
    for lam in fields:
        sys_l = phi.with_field(lam)
        for k, x0 in enumerate(starts):
            for theta in p["thetas"]:
                fams = [
                    {"kind": "square_wave",
                     "params": {"amplitude": theta, "period": 2.0, "horizon": H, "dim": n}},
                    {"kind": "bernoulli_steps",
                     "params": {"theta": theta, "count": int(H) - 1, "dim": n}},
                ]
                for j, fam in enumerate(fams):
                    seed = np.random.SeedSequence([p["seed"], k, j, int(1e6 * theta)])
                    s = sensitivity_sweep(sys_l, x0, fam, p["runs"], H,
                                          seed=int(seed.generate_state(1)[0]))
                    worst = max(worst, s.max_ratio)
                    total += p["runs"]
    return Certification(worst <= report.kappa * (1.0 + 1e-9), worst, total, report.kappa)
