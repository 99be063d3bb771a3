import math

import numpy as np
import pytest
from hypothesis import given

from fpcs_lab import _backend, _pykernels
from fpcs_lab.critical import compute_cnc, find_critical_points
from fpcs_lab.errors import DimensionMismatch, NonFinite, ZenoGuard
from fpcs_lab.random_systems import bounded_potential, fig1_potential, generator
from fpcs_lab.system import (PwlPotential, Tolerances, actual_drift, evaluate,
                             integrate_unperturbed, persisting_subset)

from conftest import potentials, potentials_with_point
import oracles

try:
    from fpcs_lab import _ckernels
except ImportError:
    _ckernels = None


def test_potential_basics(fig1):
    assert fig1.dim == 2 and fig1.n_pieces == 3
    val, act = evaluate(fig1, [2.0, 1.0])
    assert val == 2.0 and act.indices.tolist() == [0]
    val, act = fig1.evaluate([0.0, 0.0])
    assert val == 0.0 and act.indices.tolist() == [0, 1, 2]
    assert fig1([-1.0, 3.0]) == 3.0


def test_potential_drops_duplicate_drifts():
    phi = PwlPotential([[1.0], [1.0], [-1.0]], [0.0, 2.0, 0.0])
    assert phi.n_pieces == 2
    assert phi.offsets.tolist() == [2.0, 0.0]


def test_potential_validation():
    with pytest.raises(DimensionMismatch):
        PwlPotential([[1.0, 0.0]], [0.0, 1.0])
    with pytest.raises(NonFinite):
        PwlPotential([[np.inf, 0.0]])
    with pytest.raises(DimensionMismatch):
        fig1_potential().xi([1.0, 2.0, 3.0])


def test_xi_and_actual_drift(fig1):
    np.testing.assert_allclose(fig1.xi([1.0, 1.0]), [-0.5, -0.5])
    np.testing.assert_allclose(fig1.xi([0.0, 0.0]), [0.0, 0.0])
    shifted = fig1.with_field([0.3, 0.3])
    # xi ignores the field, the actual drift does not
    np.testing.assert_allclose(shifted.xi([1.0, 1.0]), [-0.5, -0.5])
    np.testing.assert_allclose(actual_drift(shifted, [1.0, 1.0]), [-0.2, -0.2])
    np.testing.assert_allclose(actual_drift(shifted, [0.0, 0.0]), [0.0, 0.0], atol=1e-14)


def test_persisting_subset(fig1):
    _, act = fig1.evaluate([1.0, 1.0])
    keep = persisting_subset(fig1, act, fig1.xi([1.0, 1.0]))
    assert keep.indices.tolist() == [0, 1]


def test_regions_are_read_only(fig1):
    with pytest.raises(ValueError):
        fig1.drifts[0, 0] = 5.0
    R = fig1.regions[0]
    assert R.contains([2.0, 1.0]) and not R.contains([1.0, 2.0])


# ---------------------------------------------------------------------------
# worked trajectories
# ---------------------------------------------------------------------------

def test_fig1_trajectory(fig1):
    tr = integrate_unperturbed(fig1, [2.0, 1.0], 5.0)
    np.testing.assert_allclose(tr.times, [0.0, 1.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(tr.states, [[2, 1], [1, 1], [0, 0]], atol=1e-12)
    np.testing.assert_allclose(tr.drifts, [[-1, 0], [-0.5, -0.5], [0, 0]], atol=1e-12)
    assert tr.terminal == "equilibrium"
    np.testing.assert_allclose(tr.state_at(2.0), [0.5, 0.5])
    np.testing.assert_allclose(tr.final_state, [0.0, 0.0], atol=1e-12)


def test_fig1_with_arrivals(fig1):
    phi = fig1.with_field([0.3, 0.3])
    tr = integrate_unperturbed(phi, [1.0, 0.0], 5.0)
    np.testing.assert_allclose(tr.times, [0.0, 1.0, 2.5], atol=1e-12)
    np.testing.assert_allclose(tr.states, [[1, 0], [0.3, 0.3], [0, 0]], atol=1e-12)
    np.testing.assert_allclose(tr.drifts, [[-0.7, 0.3], [-0.2, -0.2], [0, 0]], atol=1e-12)
    assert tr.terminal == "equilibrium"
    t, E = oracles.euler_path(phi.drifts, phi.offsets, phi.field, [1.0, 0.0], 5.0)
    X = oracles.piecewise_linear_eval(tr.times, tr.states, tr.drifts, t)
    assert np.abs(X - E).max() <= 1e-4


def test_equilibrium_start(fig1):
    tr = integrate_unperturbed(fig1, [0.0, 0.0], 3.0)
    assert tr.segment_count == 1 and tr.terminal == "equilibrium"


def test_left_limit_equals_state_without_jumps(fig1):
    tr = integrate_unperturbed(fig1, [2.0, 1.0], 5.0)
    for t in (0.0, 1.0, 2.2, 3.0, 5.0):
        np.testing.assert_allclose(tr.left_limit(t), tr.state_at(t), atol=1e-12)
    with pytest.raises(ValueError):
        tr.state_at(-1.0)


def test_bad_horizon(fig1):
    with pytest.raises(ValueError):
        integrate_unperturbed(fig1, [0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        integrate_unperturbed(fig1, [0.0, 0.0], math.inf)


def test_zeno_guard(fig1):
    tight = Tolerances(max_segments=1)
    with pytest.raises(ZenoGuard):
        integrate_unperturbed(fig1, [2.0, 1.0], 5.0, tight)


def test_trajectory_is_immutable(fig1):
    tr = integrate_unperturbed(fig1, [2.0, 1.0], 5.0)
    with pytest.raises(ValueError):
        tr.states[0, 0] = 1.0


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

@given(potentials_with_point())
def test_segment_bound_and_norm_decrease(case):
    phi, x0 = case
    tr = integrate_unperturbed(phi, x0, 10.0)
    assert tr.segment_count <= 2 ** phi.n_pieces - 1
    norms = np.linalg.norm(tr.drifts, axis=1)
    assert np.all(np.diff(norms) < -1e-10)


@given(potentials_with_point())
def test_drift_is_actual_drift_at_segment_start(case):
    phi, x0 = case
    tr = integrate_unperturbed(phi, x0, 10.0)
    for x, d in zip(tr.states, tr.drifts):
        np.testing.assert_allclose(d, actual_drift(phi, x), atol=1e-8)


@given(potentials_with_point(field_scale=1.0))
def test_path_is_continuous(case):
    phi, x0 = case
    tr = integrate_unperturbed(phi, x0, 10.0)
    np.testing.assert_allclose(tr.states[0], x0)
    np.testing.assert_allclose(tr.segment_ends()[:-1], tr.states[1:], atol=1e-9)


@given(potentials(), potentials())
def test_monotone_map(phi, other):
    rng = generator(phi.n_pieces, other.n_pieces)
    x1, x2 = rng.uniform(-3.0, 3.0, size=(2, phi.dim))
    assert (phi.xi(x1) - phi.xi(x2)) @ (x1 - x2) <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_straight_line_from_critical_point(seed):
    rng = generator(seed, 90)
    phi = bounded_potential(rng, 2, int(rng.integers(3, 7)))
    C = find_critical_points(phi)
    rho = compute_cnc(phi, C)
    for p in C:
        xi = phi.xi(p)
        if np.linalg.norm(xi) == 0:
            continue
        T = min(rho / np.linalg.norm(xi), 10.0)
        tr = integrate_unperturbed(phi, p, T)
        for t in np.linspace(0.0, T, 7):
            np.testing.assert_allclose(tr.state_at(t), p + t * xi, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_matches_euler(seed):
    rng = generator(seed, 91)
    phi = bounded_potential(rng, int(rng.integers(1, 4)), 5)
    x0 = rng.uniform(-3.0, 3.0, size=phi.dim)
    tr = integrate_unperturbed(phi, x0, 2.0)
    t, E = oracles.euler_path(phi.drifts, phi.offsets, phi.field, x0, 2.0)
    X = oracles.piecewise_linear_eval(tr.times, tr.states, tr.drifts, t)
    assert np.abs(X - E).max() <= 1e-3


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")


needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


@needs_c
@given(potentials_with_point(field_scale=0.5))
def test_backends_agree_on_flow(case):
    phi, x0 = case
    args = (phi.drifts, phi.offsets, phi.field, x0, 0.0, 10.0)
    tp, xp, dp, sp = _pykernels.flow(*args)
    tc, xc, dc, sc = _ckernels.flow(*args)
    assert sp == sc and len(tp) == len(tc)
    np.testing.assert_allclose(tc, tp, atol=1e-12)
    np.testing.assert_allclose(np.reshape(xc, -1), np.reshape(xp, -1), atol=1e-12)
    np.testing.assert_allclose(np.reshape(dc, -1), np.reshape(dp, -1), atol=1e-12)


@needs_c
@given(potentials_with_point())
def test_backends_agree_on_min_norm(case):
    phi, x = case
    P = phi.drifts - x
    vp = _pykernels.min_norm_point(P, 1e-12)[0]
    vc = _ckernels.min_norm_point(P, 1e-12)[0]
    np.testing.assert_allclose(vc, vp, atol=1e-13)


@needs_c
def test_backends_agree_on_jumps(fig1):
    rng = generator(7)
    inc = rng.choice([-1.0, 0.0, 1.0], size=(300, 2))
    bounds = np.arange(1.0, 302.0)
    args = (fig1.drifts, fig1.offsets, fig1.field, np.array([1.0, 2.0]), bounds, inc)
    a = _pykernels.flow_jumps(*args)
    b = _ckernels.flow_jumps(*args)
    for u, v in zip(a[:4], b[:4]):
        np.testing.assert_allclose(np.reshape(u, -1), np.reshape(v, -1), atol=1e-12)
    assert a[4] == b[4]
