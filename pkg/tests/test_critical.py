import math

import numpy as np
import pytest
from hypothesis import given, settings

from fpcs_lab.critical import (analyze, compute_cnc, diameter, drift_neighborhood,
                               estimate_gamma, find_critical_points,
                               is_low_dimensional, neighborhood_radius, no_revisit_check,
                               verify_basin)
from fpcs_lab.errors import NotCritical
from fpcs_lab.random_systems import bounded_potential, generator, random_potential
from fpcs_lab.system import PwlPotential

from conftest import potentials
import oracles


def test_low_dimensional():
    assert is_low_dimensional([[0.0, 0.0], [1.0, 1.0]])
    assert not is_low_dimensional([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert is_low_dimensional([[5.0]], 1)
    assert not is_low_dimensional([[0.0], [2.0]], 1)


def test_fig1_critical_structure(fig1):
    C = find_critical_points(fig1)
    assert C.tolist() == [[0.0, 0.0]]
    assert compute_cnc(fig1, C) == math.inf
    assert diameter(C) == 0.0
    assert verify_basin(fig1, C[0], math.inf)


def test_fig1_neighborhoods(fig1):
    x = [3.0, 1.0]
    assert drift_neighborhood(fig1, x, 0.0).indices.tolist() == [0]
    assert drift_neighborhood(fig1, x, 1.5).indices.tolist() == [0, 1]
    assert drift_neighborhood(fig1, x, math.sqrt(10.0)).indices.tolist() == [0, 1, 2]
    assert drift_neighborhood(fig1, x, math.inf).indices.tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        drift_neighborhood(fig1, x, -1.0)


def test_fig1_gamma(fig1):
    C = find_critical_points(fig1)
    bound, emp = estimate_gamma(fig1, C, samples=4000, seed=0)
    assert bound == pytest.approx(2.6131, abs=1e-4)
    # the worst points sit on the negative diagonal, where d(x, C) / r(x) = sqrt(2)
    assert emp <= math.sqrt(2.0) + 1e-9
    assert emp == pytest.approx(math.sqrt(2.0), abs=0.01)
    assert neighborhood_radius(fig1, [1.0, 1.0]) == pytest.approx(math.sqrt(2.0))
    assert neighborhood_radius(fig1, [-1.0, -1.0]) == pytest.approx(1.0)


def test_verify_basin_needs_critical_point(fig1):
    with pytest.raises(NotCritical):
        verify_basin(fig1, [1.0, 1.0], 1.0)


def test_interval_example():
    # max(x, 0, -3x + 2) with drifts -1, 0, 3 in one dimension
    phi = PwlPotential([[-1.0], [1.0], [-3.0]], [0.0, 0.0, 2.0])
    C = find_critical_points(phi)
    np.testing.assert_allclose(C, [[-0.5]])
    assert compute_cnc(phi, C) == math.inf


def test_two_kinks():
    phi = PwlPotential([[1.0], [0.0], [-1.0]], [0.0, 0.0, -1.0])  # max(-x, 0, x - 1)
    C = find_critical_points(phi)
    np.testing.assert_allclose(C, [[0.0], [1.0]])
    assert compute_cnc(phi, C) == pytest.approx(0.5)
    assert all(verify_basin(phi, p, 0.5) for p in C)
    # both kinks have zero actual drift, so every ball is a basin
    assert all(verify_basin(phi, p, math.inf) for p in C)
    bound, emp = estimate_gamma(phi, C, samples=500)
    assert bound == pytest.approx(3.0)
    assert emp == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(40))
def test_interval_oracle(seed):
    rng = generator(seed, 70)
    m = int(rng.integers(2, 7))
    slopes = rng.choice(np.arange(-4, 5), size=m, replace=False)
    offsets = rng.integers(-4, 5, size=m)
    phi = PwlPotential(slopes[:, None].astype(float), offsets.astype(float))
    crit, cnc = oracles.interval_cnc(slopes.tolist(), offsets.tolist())
    C = find_critical_points(phi)
    np.testing.assert_allclose(C.reshape(-1), [float(c) for c in crit], atol=1e-12)
    got = compute_cnc(phi, C)
    if cnc is None:
        assert got == math.inf
    else:
        assert got == pytest.approx(float(cnc), abs=1e-9)


def test_no_revisit_vacuous_without_point(fig1):
    assert no_revisit_check(fig1, None, 1.0, [1.0, 1.0], 5.0)


def test_no_revisit_on_line():
    phi = PwlPotential([[1.0], [0.0], [-1.0]], [0.0, 0.0, -1.0])
    assert no_revisit_check(phi, [0.0], 0.5, [-2.0], 10.0)
    assert no_revisit_check(phi, [1.0], 0.5, [3.0], 10.0)


def test_analyze_report(fig1):
    res = analyze(fig1, samples=200)
    d = res.to_dict()
    assert d["critical_points"] == [[0.0, 0.0]]
    assert d["cnc"] == "inf"
    assert d["basins"][0]["verified"] is True
    assert d["basins"][0]["radius"] == "inf"
    assert d["gamma_bound"] >= d["gamma_empirical"] >= 1.0


# ---------------------------------------------------------------------------
# properties over random systems
# ---------------------------------------------------------------------------

@settings(max_examples=25)
@given(potentials())
def test_critical_points_are_vertices(phi):
    C = find_critical_points(phi)
    for p in C:
        _, act = phi.evaluate(p)
        assert not is_low_dimensional(act.drifts, phi.dim)
    cnc = compute_cnc(phi, C)
    for p in C:
        assert verify_basin(phi, p, cnc)
    if len(C):
        assert any(verify_basin(phi, p, math.inf) for p in C)


@settings(max_examples=25)
@given(potentials())
def test_field_shift_invariance(phi):
    rng = generator(phi.n_pieces, phi.dim)
    shifted = phi.with_field(rng.uniform(-1.0, 1.0, size=phi.dim))
    C, C2 = find_critical_points(phi), find_critical_points(shifted)
    np.testing.assert_allclose(C2, C, atol=1e-9)
    a, b = compute_cnc(phi, C), compute_cnc(shifted, C2)
    assert a == b or abs(a - b) <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_gamma_bound_dominates_samples(seed):
    rng = generator(seed, 71)
    phi = bounded_potential(rng, 2, int(rng.integers(3, 6)))
    C = find_critical_points(phi)
    bound, emp = estimate_gamma(phi, C, samples=300, seed=seed)
    assert 1.0 <= emp <= bound + 1e-9
    for _ in range(50):
        x = C[rng.integers(len(C))] + rng.standard_normal(2) * 10.0 ** rng.uniform(-2, 1)
        dc = np.linalg.norm(C - x, axis=1).min()
        r = rng.uniform(0.0, 1.0) * dc / bound
        if r > 0:
            assert is_low_dimensional(drift_neighborhood(phi, x, r, tol=0.0).drifts, 2)


@pytest.mark.parametrize("seed", range(10))
def test_basin_drift_is_shortest(seed):
    rng = generator(seed, 72)
    phi = random_potential(rng, 2, int(rng.integers(3, 7)))
    C = find_critical_points(phi)
    cnc = compute_cnc(phi, C)
    for p in C:
        U = drift_neighborhood(phi, p, cnc)
        assert np.linalg.norm(U.drifts, axis=1).min() >= np.linalg.norm(phi.xi(p)) - 1e-9
