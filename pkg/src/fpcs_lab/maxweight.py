"""Max-Weight scheduling fluid models as piecewise-linear potentials.

Max-Weight serves the schedule ``s`` maximising ``s . q`` for queue
lengths ``q``.  The fluid dynamics ``dq/dt = lam - s*(q)`` are the
subgradient flow of ``max_s s . q`` shifted by the arrival rate, i.e. a
potential with drifts ``-s`` and zero offsets plus the field ``lam``.
Queue lengths are allowed to go negative (the state lives in all of R^n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DuplicateVectors
from .perturbation import PerturbationPath
from .system import PwlPotential


@dataclass(frozen=True, eq=False)
class SchedulingScenario:
    """Queue count, feasible service vectors, arrival rates and idling option.

    ``weights`` (optional, per queue) gives weighted Max-Weight by scaling
    every service vector coordinate-wise.
    """

    services: np.ndarray
    arrival_rate: np.ndarray | None = None
    include_idle: bool = True
    weights: np.ndarray | None = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.services, dtype=float))
        n = S.shape[1]
        if n < 1:
            raise DimensionMismatch("need at least one queue")
        lam = np.zeros(n) if self.arrival_rate is None else np.asarray(self.arrival_rate, float)
        if lam.shape != (n,):
            raise DimensionMismatch(f"arrival rate has shape {lam.shape}, expected ({n},)")
        if (S < 0).any() or (lam < 0).any():
            raise ValueError("service vectors and arrival rates must be non-negative")
        object.__setattr__(self, "services", S)
        object.__setattr__(self, "arrival_rate", lam)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or (w <= 0).any():
                raise ValueError("weights must be positive, one per queue")
            object.__setattr__(self, "weights", w)

    @property
    def n_queues(self) -> int:
        return self.services.shape[1]


def to_fpcs(s: SchedulingScenario) -> PwlPotential:
    """Potential with drifts ``-service`` (plus ``0`` when idling is allowed)."""
    S = s.services if s.weights is None else s.services * s.weights
    if s.include_idle and not np.any(np.all(S == 0, axis=1)):
        S = np.vstack([S, np.zeros(s.n_queues)])
    for i in range(len(S)):
        for j in range(i):
            if np.array_equal(S[i], S[j]):
                raise DuplicateVectors(f"service vectors {j} and {i} coincide")
    return PwlPotential(-S, np.zeros(len(S)), s.arrival_rate, dim=s.n_queues)


def arrivals_to_perturbation(arrival_counts, lam) -> PerturbationPath:
    """Centred arrival noise: jump ``counts_k - lam`` at time ``k`` (slots start at 1)."""
    A = np.asarray(arrival_counts, dtype=float)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if A.ndim == 1:
        A = A.reshape(-1, lam.shape[0]) if A.size % max(lam.shape[0], 1) == 0 else A[None, :]
    if A.shape[1] != lam.shape[0]:
        raise DimensionMismatch(f"counts have {A.shape[1]} queues, rates {lam.shape[0]}")
    return PerturbationPath(np.arange(1, len(A) + 1, dtype=float), A - lam, lam.shape[0])
