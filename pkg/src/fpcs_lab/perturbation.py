"""Piecewise-constant perturbations, perturbed trajectories and deviation sweeps.

A perturbed trajectory solves ``x~(t) = x0 + int_0^t f(s) ds + U(t)`` with
``f(s)`` an admissible drift at ``x~(s)``.  For a right-continuous step
function ``U`` this is the unperturbed flow restarted after each jump,
which is what :func:`integrate_perturbed` computes exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from . import _backend
from .errors import BadParams, DimensionMismatch, HorizonMismatch, NonFinite
from .system import (DEFAULT_TOLERANCES, PwlPotential, Tolerances, Trajectory,
                     _as_vector, integrate_unperturbed)

PERTURBED_SEGMENT_BUDGET = 10_000_000
PATH_KINDS = ("deterministic", "bernoulli_steps", "discretized_wiener", "square_wave")


class PerturbationPath:
    """Right-continuous step function ``U(t) = sum_{t_k <= t} dU_k`` with ``U(0-) = 0``.

    Jumps sharing a time stamp are merged at construction.
    """

    def __init__(self, times, increments, dim: int | None = None):
        t = np.asarray(times, dtype=float).reshape(-1)
        inc = np.asarray(increments, dtype=float)
        if dim is None:
            if inc.ndim != 2:
                raise DimensionMismatch("increments must be a 2-d array when dim is not given")
            dim = inc.shape[1]
        inc = inc.reshape(len(t), dim)
        if not (np.isfinite(t).all() and np.isfinite(inc).all()):
            raise NonFinite("perturbation data must be finite")
        if (t < 0).any():
            raise BadParams("jump times must be non-negative")
        order = np.argsort(t, kind="stable")
        t, inc = t[order], inc[order]
        if len(t):
            uniq, start = np.unique(t, return_index=True)
            inc = np.add.reduceat(inc, start, axis=0) if len(uniq) < len(t) else inc
            t = uniq
        self.times = t
        self.increments = inc
        self.dim = int(dim)
        self.levels = np.cumsum(inc, axis=0)  # U right after each jump
        for a in (self.times, self.increments, self.levels):
            a.setflags(write=False)

    @classmethod
    def zero(cls, dim: int) -> "PerturbationPath":
        return cls(np.zeros(0), np.zeros((0, dim)), dim)

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return f"PerturbationPath(dim={self.dim}, jumps={len(self)})"

    @property
    def jumps(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.increments))

    def value_at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.levels[k - 1].copy() if k else np.zeros(self.dim)

    def initial_value(self) -> np.ndarray:
        return self.value_at(0.0)

    def sup_norm(self, until: float = math.inf) -> float:
        """``sup_{0 <= s <= until} |U(s)|``, exact from the partial sums."""
        k = int(np.searchsorted(self.times, until, side="right"))
        if k == 0:
            return 0.0
        return float(np.linalg.norm(self.levels[:k], axis=1).max())

    def cumulative_abs(self, until: float = math.inf) -> float:
        """Total jump size ``sum |dU_k|`` up to ``until``."""
        k = int(np.searchsorted(self.times, until, side="right"))
        return float(np.linalg.norm(self.increments[:k], axis=1).sum())


# ---------------------------------------------------------------------------
# Path generators
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _need(params: Mapping, key: str, positive: bool = True):
    if key not in params:
        raise BadParams(f"missing parameter {key!r}")
    v = params[key]
    if positive and not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
        raise BadParams(f"parameter {key!r} must be a positive number, got {v!r}")
    return v


def make_path(kind: str, params: Mapping[str, Any], seed=0) -> PerturbationPath:
    """Build a perturbation path.

    Parameters
    ----------
    kind : {'deterministic', 'bernoulli_steps', 'discretized_wiener', 'square_wave'}
    params : mapping
        deterministic
            ``jumps``: list of ``[t, [dU...]]``.
        bernoulli_steps
            ``theta``, ``count``; optional ``dim`` (2), ``spacing`` (1).
            Jump ``k`` at time ``k * spacing`` moves one uniformly chosen
            coordinate by ``+-theta``.
        discretized_wiener
            ``volatility``, ``horizon``; optional ``step`` (1e-2), ``dim`` (2).
        square_wave
            ``amplitude``, ``period``, ``horizon``; optional ``dim`` (2),
            ``axis`` (0).  ``U`` alternates between ``+a e`` and ``-a e``
            every half period, starting at ``+a e`` at time 0.
    seed : int, sequence, SeedSequence or Generator
        Randomness for the stochastic kinds.
    """
    params = dict(params or {})
    if kind == "deterministic":
        jumps = params.get("jumps")
        if jumps is None:
            raise BadParams("deterministic path needs 'jumps'")
        dim = params.get("dim")
        if not jumps:
            if dim is None:
                raise BadParams("empty deterministic path needs 'dim'")
            return PerturbationPath.zero(int(dim))
        times = [float(j[0]) for j in jumps]
        incs = [np.asarray(j[1], dtype=float).reshape(-1) for j in jumps]
        if len({v.shape[0] for v in incs}) != 1 or (dim is not None and incs[0].shape[0] != dim):
            raise BadParams("jump increments have inconsistent dimensions")
        return PerturbationPath(times, np.array(incs))

    dim = int(params.get("dim", 2))
    if dim < 1:
        raise BadParams("dim must be at least 1")
    if kind == "bernoulli_steps":
        theta = _need(params, "theta")
        count = params.get("count")
        if not isinstance(count, int) or count < 0:
            raise BadParams("count must be a non-negative integer")
        spacing = _need(params, "spacing") if "spacing" in params else 1.0
        rng = _rng(seed)
        coords = rng.integers(0, dim, size=count)
        signs = rng.choice([-1.0, 1.0], size=count)
        inc = np.zeros((count, dim))
        inc[np.arange(count), coords] = theta * signs
        return PerturbationPath(spacing * np.arange(1, count + 1), inc, dim)
    if kind == "discretized_wiener":
        vol = _need(params, "volatility")
        horizon = _need(params, "horizon")
        h = _need(params, "step") if "step" in params else 1e-2
        n_steps = int(math.floor(horizon / h + 1e-9))
        rng = _rng(seed)
        inc = rng.normal(0.0, vol * math.sqrt(h), size=(n_steps, dim))
        return PerturbationPath(h * np.arange(1, n_steps + 1), inc, dim)
    if kind == "square_wave":
        amp = _need(params, "amplitude")
        period = _need(params, "period")
        horizon = _need(params, "horizon")
        axis = int(params.get("axis", 0))
        if not 0 <= axis < dim:
            raise BadParams("axis out of range")
        half = period / 2.0
        n_flips = int(math.ceil(horizon / half - 1e-9))
        times = half * np.arange(n_flips)
        inc = np.zeros((n_flips, dim))
        inc[0, axis] = amp
        inc[1:, axis] = 2.0 * amp * np.where(np.arange(1, n_flips) % 2 == 1, -1.0, 1.0)
        return PerturbationPath(times, inc, dim)
    raise BadParams(f"unknown perturbation kind {kind!r}")


# ---------------------------------------------------------------------------
# Perturbed integration
# ---------------------------------------------------------------------------

def integrate_perturbed(phi: PwlPotential, x0, U: PerturbationPath, horizon: float,
                        tol: Tolerances = DEFAULT_TOLERANCES,
                        max_segments: int = PERTURBED_SEGMENT_BUDGET) -> Trajectory:
    """Exact perturbed trajectory for a step perturbation.

    The path starts at ``x0 + U(0)``, follows the unperturbed flow between
    jump times and is translated by ``dU_k`` at each jump time ``t_k > 0``.
    Jumps start a new segment flagged in ``Trajectory.jumps``.
    """
    x0 = _as_vector(x0, phi.dim, "initial state")
    if U.dim != phi.dim:
        raise DimensionMismatch(f"perturbation has dimension {U.dim}, system {phi.dim}")
    if not horizon > 0 or not math.isfinite(horizon):
        raise ValueError("horizon must be positive and finite")
    if len(U) and U.times[-1] > horizon:
        raise HorizonMismatch(f"jump at t={U.times[-1]} beyond horizon {horizon}")
    kw = tol.flow_kwargs()
    kw["active_tol"] = phi.active_tol
    jt, dU = U.times, U.increments
    start_jump = bool(len(jt) and jt[0] == 0.0)
    x = x0 + dU[0] if start_jump else x0 + 0.0
    k = 1 if start_jump else 0
    bounds = np.append(jt[k:], float(horizon))
    times, states, drifts, starts, status = _backend.flow_jumps(
        phi.drifts, phi.offsets, phi.field, x, bounds, dU[k:], total_segments=max_segments, **kw)
    jumps = np.zeros(len(times), dtype=bool)
    jumps[starts[1:]] = True
    jumps[0] = start_jump
    return Trajectory(times, states, drifts, float(horizon),
                      "equilibrium" if status == _backend.EQUILIBRIUM else "horizon", jumps)


# ---------------------------------------------------------------------------
# Deviation measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationReport:
    """Deviation of a perturbed path from its unperturbed reference.

    ``deviation_samples`` holds ``(t, |x~(t) - x(t)|)`` at every merged
    breakpoint (right values).  ``sup_deviation`` also accounts for left
    limits; the norm of a difference of linear segments is convex in
    ``t``, so its supremum over each piece is attained at an end.
    """

    sup_deviation: float
    sup_perturbation: float
    ratio: float | None
    cumulative_abs: float
    deviation_samples: np.ndarray  # shape (k, 2)
    left_deviations: np.ndarray    # |x~(t-) - x(t-)| at the same times

    def running_sup(self, prefixes) -> np.ndarray:
        """``sup_{s <= T} |x~(s) - x(s)|`` for each ``T`` in ``prefixes``.

        Exact when every prefix is a sample time (pass them as
        ``extra_times`` to :func:`measure_deviation`).
        """
        t = self.deviation_samples[:, 0]
        both = np.maximum(self.deviation_samples[:, 1], self.left_deviations)
        run = np.maximum.accumulate(both)
        k = np.searchsorted(t, np.asarray(prefixes, dtype=float), side="right") - 1
        return run[np.clip(k, 0, None)]

    def to_dict(self) -> dict:
        return dict(sup_deviation=self.sup_deviation, sup_perturbation=self.sup_perturbation,
                    ratio=self.ratio, cumulative_abs=self.cumulative_abs)


def _eval_many(traj: Trajectory, t: np.ndarray, side: str) -> np.ndarray:
    k = np.searchsorted(traj.times, t, side=side) - 1
    k = np.clip(k, 0, None)
    return traj.states[k] + (t - traj.times[k])[:, None] * traj.drifts[k]


def measure_deviation(x: Trajectory, xt: Trajectory, U: PerturbationPath,
                      extra_times=()) -> DeviationReport:
    """Exact ``sup_t |x~(t) - x(t)|`` over ``[0, horizon]`` and related statistics.

    ``extra_times`` are added to the sample grid (e.g. growth-curve prefixes).
    """
    if x.dim != xt.dim or U.dim != x.dim:
        raise DimensionMismatch("trajectories and perturbation must share a dimension")
    if abs(x.horizon - xt.horizon) > 1e-12 * (1.0 + x.horizon):
        raise HorizonMismatch(f"horizons differ: {x.horizon} vs {xt.horizon}")
    H = x.horizon
    extra = np.asarray(extra_times, dtype=float)
    t = np.union1d(np.union1d(x.times, xt.times), U.times[U.times <= H])
    t = np.union1d(t, extra[(extra >= 0) & (extra <= H)])
    if t[-1] < H:
        t = np.append(t, H)
    right = np.linalg.norm(_eval_many(xt, t, "right") - _eval_many(x, t, "right"), axis=1)
    left = np.linalg.norm(_eval_many(xt, t, "left") - _eval_many(x, t, "left"), axis=1)
    left[0] = right[0]
    sup_dev = float(max(right.max(), left.max()))
    sup_pert = U.sup_norm(H)
    return DeviationReport(
        sup_deviation=sup_dev,
        sup_perturbation=sup_pert,
        ratio=sup_dev / sup_pert if sup_pert > 0 else None,
        cumulative_abs=U.cumulative_abs(H),
        deviation_samples=np.column_stack([t, right]),
        left_deviations=left,
    )


# ---------------------------------------------------------------------------
# Monte-Carlo sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSummary:
    """Aggregate of independent perturbed runs against one reference path."""

    runs: int
    ratios: np.ndarray             # nan where the perturbation was zero
    sup_deviations: np.ndarray
    sup_perturbations: np.ndarray
    cumulative_abs: np.ndarray
    prefixes: np.ndarray
    growth: np.ndarray             # (runs, len(prefixes)) running sup deviation

    @property
    def zero_perturbation_runs(self) -> int:
        return int(np.sum(self.sup_perturbations == 0))

    @property
    def max_ratio(self) -> float:
        r = self.ratios[~np.isnan(self.ratios)]
        return float(r.max()) if r.size else 0.0

    @property
    def mean_ratio(self) -> float:
        r = self.ratios[~np.isnan(self.ratios)]
        return float(r.mean()) if r.size else 0.0

    @property
    def max_sup_deviation(self) -> float:
        return float(self.sup_deviations.max())

    def growth_curve(self) -> np.ndarray:
        """Rows ``(T, max over runs, median over runs)`` of the running sup deviation."""
        return np.column_stack([self.prefixes, self.growth.max(axis=0),
                                np.median(self.growth, axis=0)])


def run_seed(seed: int, run: int) -> np.random.SeedSequence:
    """Per-run seed material; runs are independent of scheduling order."""
    return np.random.SeedSequence([int(seed), int(run)])


def _one_run(args):
    phi, x0, ref, family, horizon, seed, run, prefixes, tol = args
    U = make_path(family["kind"], family.get("params", {}), run_seed(seed, run))
    xt = integrate_perturbed(phi, x0, U, horizon, tol)
    rep = measure_deviation(ref, xt, U, prefixes)
    return (rep.ratio if rep.ratio is not None else math.nan, rep.sup_deviation,
            rep.sup_perturbation, rep.cumulative_abs, rep.running_sup(prefixes))


def sensitivity_sweep(phi: PwlPotential, x0, path_family: Mapping[str, Any], runs: int,
                      horizon: float, seed: int = 0, jobs: int = 1, prefixes=None,
                      tol: Tolerances = DEFAULT_TOLERANCES) -> SweepSummary:
    """Run ``runs`` perturbed simulations and summarise their deviations.

    ``path_family`` is ``{"kind": ..., "params": {...}}`` as accepted by
    :func:`make_path`.  Run ``r`` draws its path from ``run_seed(seed, r)``,
    so the result does not depend on ``jobs``.
    """
    if runs < 1:
        raise BadParams("runs must be at least 1")
    x0 = _as_vector(x0, phi.dim, "initial state")
    if prefixes is None:
        prefixes = np.unique(np.geomspace(min(1.0, horizon), horizon, 16))
    prefixes = np.asarray(prefixes, dtype=float)
    ref = integrate_unperturbed(phi, x0, horizon, tol)
    tasks = [(phi, x0, ref, dict(path_family), horizon, seed, r, prefixes, tol)
             for r in range(runs)]
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_one_run, tasks, chunksize=max(1, runs // (4 * jobs))))
    else:
        out = [_one_run(a) for a in tasks]
    cols = list(zip(*out))
    return SweepSummary(
        runs=runs,
        ratios=np.array(cols[0]),
        sup_deviations=np.array(cols[1]),
        sup_perturbations=np.array(cols[2]),
        cumulative_abs=np.array(cols[3]),
        prefixes=prefixes,
        growth=np.vstack(cols[4]),
    )
