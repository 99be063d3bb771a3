"""Random desk-scale instances for property sweeps."""

from __future__ import annotations

import numpy as np

from .system import PwlPotential


def generator(seed, *extra) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, extra)])))


def random_potential(rng: np.random.Generator, n: int | None = None, m: int | None = None,
                     field_scale: float = 0.0, integer: bool = False) -> PwlPotential:
    """Potential with ``m`` distinct random drifts in ``n`` dimensions.

    Drifts are uniform in ``[-2, 2]^n`` (small integers when ``integer``)
    and offsets uniform in ``[-1, 1]``.  ``n`` defaults to 1..3 and ``m``
    to 2..6.
    """
    n = int(rng.integers(1, 4)) if n is None else n
    m = int(rng.integers(2, 7)) if m is None else m
    while True:
        if integer:
            mu = rng.integers(-2, 3, size=(m, n)).astype(float)
            b = rng.integers(-2, 3, size=m).astype(float)
        else:
            mu = rng.uniform(-2.0, 2.0, size=(m, n))
            b = rng.uniform(-1.0, 1.0, size=m)
        if len(np.unique(mu, axis=0)) == m:
            break
    lam = rng.uniform(-field_scale, field_scale, size=n) if field_scale else None
    return PwlPotential(mu, b, lam)


def bounded_potential(rng: np.random.Generator, n: int, m: int) -> PwlPotential:
    """Random potential whose drift hull contains the origin in its interior.

    Such a potential is coercive, so it has critical points and an equilibrium.
    """
    if m <= n:
        raise ValueError("need more pieces than dimensions")
    while True:
        phi = random_potential(rng, n, m)
        dirs = rng.standard_normal((64, n))
        if (phi.drifts @ dirs.T).min(axis=0).max() < 0:
            return phi


def fig1_potential(field=None) -> PwlPotential:
    """``Phi(x) = max(x1, x2, 0)``: two parallel queues served by Max-Weight."""
    return PwlPotential([[-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]], [0.0, 0.0, 0.0], field)
