"""Piecewise-linear potentials and the exact unperturbed integrator.

A potential is ``Phi(x) = max_i (-mu_i . x + b_i)``.  Its subgradient flow
``dx/dt in -dPhi(x) + lam`` moves with the minimum-norm element of the
convex hull of the active drifts (shifted by the constant field ``lam``),
which is constant between switching events.  The integrator computes those
events in closed form, so a trajectory is an exact piecewise-linear path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from . import _backend
from .errors import DimensionMismatch, NonFinite
from .geometry import Polyhedron, min_norm_point


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used by the integrator.

    Attributes
    ----------
    active : float
        Relative tie tolerance for the active set, ``active * (1 + |Phi(x)|)``.
    zero : float
        Drift norms at or below this are treated as equilibrium.
    event : float
        Event times at or below this are immediate reactivations.
    merge : float
        Consecutive segments whose drifts differ by less than
        ``merge * (1 + |d|)`` are merged.
    consistency : float
        Allowed gap between the drift over the persisting pieces and the
        drift over the whole active set.
    min_norm : float
        Relative duality gap for the min-norm-point solver.
    max_segments : int
        Segment budget per call before ``ZenoGuard`` is raised.
    """

    active: float = 1e-9
    zero: float = 1e-10
    event: float = 1e-12
    merge: float = 1e-9
    consistency: float = 1e-8
    min_norm: float = 1e-12
    max_segments: int = 1_000_000

    def flow_kwargs(self) -> dict:
        return dict(active_tol=self.active, zero_tol=self.zero, event_tol=self.event,
                    merge_tol=self.merge, consistency_tol=self.consistency,
                    mn_tol=self.min_norm, max_segments=self.max_segments)


DEFAULT_TOLERANCES = Tolerances()


class ActiveSet(NamedTuple):
    """Indices of the maximising pieces and their drift vectors."""

    indices: np.ndarray
    drifts: np.ndarray

    def __len__(self):
        return len(self.indices)


def _as_vector(x, n: int, what: str = "point") -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise DimensionMismatch(f"{what} has dimension {v.shape[0]}, expected {n}")
    if not np.isfinite(v).all():
        raise NonFinite(f"{what} must be finite")
    return v


class PwlPotential:
    """``Phi(x) = max_i (-mu_i . x + b_i)`` with an optional constant field.

    Parameters
    ----------
    drifts : array_like, shape (m, n)
        Drift vectors ``mu_i``.  Pieces whose drifts coincide within
        ``active_tol`` are merged, keeping the larger offset (the other
        piece is never active).
    offsets : array_like, shape (m,), optional
        Offsets ``b_i``; zero by default.
    field : array_like, shape (n,), optional
        Constant external field ``lam`` added to the dynamics.
    active_tol : float
        Relative tie tolerance used by :meth:`evaluate`.
    dim : int, optional
        Required only when ``n == 0`` cannot be inferred.
    """

    def __init__(self, drifts, offsets=None, field=None, active_tol: float = 1e-9,
                 dim: int | None = None):
        mu = np.asarray(drifts, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(-1, 1) if dim in (None, 1) else mu.reshape(-1, dim)
        if dim is not None and mu.shape[1] != dim:
            raise DimensionMismatch(f"drifts have dimension {mu.shape[1]}, expected {dim}")
        m, n = mu.shape
        if m < 1:
            raise ValueError("a potential needs at least one piece")
        b = np.zeros(m) if offsets is None else np.asarray(offsets, dtype=float).reshape(-1)
        if b.shape[0] != m:
            raise DimensionMismatch(f"{m} drifts but {b.shape[0]} offsets")
        lam = np.zeros(n) if field is None else np.asarray(field, dtype=float).reshape(-1)
        if lam.shape[0] != n:
            raise DimensionMismatch(f"field has dimension {lam.shape[0]}, expected {n}")
        if not (np.isfinite(mu).all() and np.isfinite(b).all() and np.isfinite(lam).all()):
            raise NonFinite("potential data must be finite")

        keep: list[int] = []
        for i in range(m):
            for slot, j in enumerate(keep):
                if np.linalg.norm(mu[i] - mu[j]) <= active_tol:
                    if b[i] > b[j]:
                        keep[slot] = i
                    break
            else:
                keep.append(i)
        self.drifts = mu[keep].copy()
        self.offsets = b[keep].copy()
        self.field = lam.copy()
        self.active_tol = float(active_tol)
        for a in (self.drifts, self.offsets, self.field):
            a.setflags(write=False)

    # -- basic shape ------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.drifts.shape[1]

    @property
    def n_pieces(self) -> int:
        return self.drifts.shape[0]

    def __repr__(self):
        return f"PwlPotential(n={self.dim}, m={self.n_pieces}, field={self.field.tolist()})"

    def with_field(self, field) -> "PwlPotential":
        """Same pieces, different constant field."""
        return PwlPotential(self.drifts, self.offsets, field, self.active_tol, dim=self.dim)

    # -- evaluation -------------------------------------------------------
    def values(self, x) -> np.ndarray:
        x = _as_vector(x, self.dim)
        return self.offsets - self.drifts @ x

    def evaluate(self, x) -> tuple[float, ActiveSet]:
        """Return ``(Phi(x), active set)``."""
        vals = self.values(x)
        top = float(vals.max())
        idx = np.flatnonzero(vals >= top - self.active_tol * (1.0 + abs(top)))
        return top, ActiveSet(idx, self.drifts[idx])

    def __call__(self, x) -> float:
        return float(self.values(x).max())

    def xi(self, x) -> np.ndarray:
        """Minimum-norm element of the hull of the active drifts (field ignored)."""
        _, act = self.evaluate(x)
        return min_norm_point(act.drifts).point

    # -- regions ----------------------------------------------------------
    @cached_property
    def regions(self) -> tuple[Polyhedron, ...]:
        """Region ``R_i = {x : piece i attains the max}`` for every piece."""
        out = []
        for i in range(self.n_pieces):
            others = np.arange(self.n_pieces) != i
            # -mu_j.x + b_j <= -mu_i.x + b_i
            A = self.drifts[i] - self.drifts[others]
            c = self.offsets[i] - self.offsets[others]
            out.append(Polyhedron(A, c, self.dim))
        return tuple(out)


def evaluate(phi: PwlPotential, x) -> tuple[float, ActiveSet]:
    return phi.evaluate(x)


def actual_drift(phi: PwlPotential, x) -> np.ndarray:
    """Right derivative of the unperturbed trajectory through ``x``.

    This is the minimum-norm element of ``conv(M(x)) + lam``.  With a zero
    field it is simply the min-norm point of the active drifts.
    """
    _, act = phi.evaluate(x)
    return min_norm_point(act.drifts + phi.field).point


def persisting_subset(phi: PwlPotential, active: ActiveSet, xi) -> ActiveSet:
    """Active pieces that stay maximal immediately along direction ``xi``.

    These maximise the growth rate ``-mu . xi`` among the active pieces.
    """
    rates = -(active.drifts @ np.asarray(xi, dtype=float))
    top = rates.max()
    keep = rates >= top - phi.active_tol * (1.0 + abs(top))
    return ActiveSet(active.indices[keep], active.drifts[keep])


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-linear path on ``[0, horizon]``.

    Segment ``k`` starts at ``times[k]`` in ``states[k]`` and moves with
    ``drifts[k]`` until ``times[k+1]`` (the last one until ``horizon``).
    ``jumps[k]`` marks segments that begin with a discontinuity, i.e. the
    left limit at ``times[k]`` differs from ``states[k]``.
    """

    times: np.ndarray
    states: np.ndarray
    drifts: np.ndarray
    horizon: float
    terminal: str = "horizon"
    jumps: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.jumps is None:
            object.__setattr__(self, "jumps", np.zeros(len(self.times), dtype=bool))
        for name in ("times", "states", "drifts", "jumps"):
            getattr(self, name).setflags(write=False)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def segment_count(self) -> int:
        return len(self.times)

    @property
    def breakpoints(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.states))

    def segment_ends(self) -> np.ndarray:
        """State at the end of every segment (left limit at the next start)."""
        ends = np.append(self.times[1:], self.horizon)
        return self.states + (ends - self.times)[:, None] * self.drifts

    def _at(self, t, k):
        return self.states[k] + (t - self.times[k]) * self.drifts[k]

    def state_at(self, t: float) -> np.ndarray:
        """Right-continuous evaluation ``x(t)``."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k < 0:
            raise ValueError(f"t={t} precedes the start of the trajectory")
        return self._at(t, k)

    def left_limit(self, t: float) -> np.ndarray:
        """``x(t-)``; equals ``x(t)`` wherever the path does not jump."""
        k = int(np.searchsorted(self.times, t, side="left")) - 1
        if k < 0:
            return self.state_at(t)
        return self._at(t, k)

    @property
    def final_state(self) -> np.ndarray:
        return self._at(self.horizon, len(self.times) - 1)


def integrate_unperturbed(phi: PwlPotential, x0, horizon: float,
                          tol: Tolerances = DEFAULT_TOLERANCES) -> Trajectory:
    """Exact trajectory of ``dx/dt in -dPhi(x) + lam`` from ``x0`` on ``[0, horizon]``.

    Raises
    ------
    DriftInconsistency
        If a tie cannot be resolved consistently within tolerance.
    ZenoGuard
        If more than ``tol.max_segments`` events occur.
    """
    x0 = _as_vector(x0, phi.dim, "initial state")
    if not horizon > 0 or not math.isfinite(horizon):
        raise ValueError("horizon must be positive and finite")
    kw = tol.flow_kwargs()
    kw["active_tol"] = phi.active_tol
    times, states, drifts, status = _backend.flow(
        phi.drifts, phi.offsets, phi.field, x0, 0.0, float(horizon), **kw)
    return Trajectory(times, states.reshape(-1, phi.dim), drifts.reshape(-1, phi.dim),
                      float(horizon),
                      "equilibrium" if status == _backend.EQUILIBRIUM else "horizon")


def stack_segments(parts: Sequence[Trajectory], horizon: float,
                   jump_flags: Sequence[bool]) -> Trajectory:
    """Concatenate consecutive trajectory pieces into one path."""
    times = np.concatenate([p.times for p in parts])
    states = np.concatenate([p.states for p in parts])
    drifts = np.concatenate([p.drifts for p in parts])
    jumps = np.zeros(len(times), dtype=bool)
    pos = 0
    for p, flag in zip(parts, jump_flags):
        jumps[pos] = flag
        pos += len(p.times)
    return Trajectory(times, states, drifts, float(horizon), parts[-1].terminal, jumps)
