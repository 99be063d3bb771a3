import itertools
import math

import numpy as np
import pytest

from fpcs_lab.constants import (certify_kappa, compute_constants, decomposition_residual,
                                project_subsystem)
from fpcs_lab.errors import NotLowDimensional, ScaleLimit
from fpcs_lab.geometry import affine_rank
from fpcs_lab.random_systems import generator, random_potential
from fpcs_lab.system import PwlPotential
from fpcs_lab.verify import tie_samples


def test_fig1_constants(fig1):
    rep = compute_constants(fig1, gamma_override=1.0)
    d = rep.to_dict(depth=0)
    assert (d["M"], d["D_C"], d["sigma"], d["eta"], d["kappa"]) == (1, 0, 5, 240, 1921)
    assert d["rule"] == "single-basin" and d["theta_star"] == 0
    assert d["gamma_source"] == "override" and d["gamma_min"] == "inf"


def test_fig1_children(fig1):
    rep = compute_constants(fig1, gamma_override=1.0)
    subsets = [s for s, _ in rep.children]
    # every proper subset is low-dimensional, the full set is not
    assert subsets == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]
    assert max(r.kappa for _, r in rep.children) == 1.0
    assert {r.rule for _, r in rep.children} == {"single-piece", "one-dimensional"}


def test_fig1_with_bound_gamma(fig1):
    rep = compute_constants(fig1)
    assert rep.gamma_source == "bound"
    assert rep.kappa == pytest.approx(4 * (rep.gamma + 1) * 240 + 1)


def test_field_does_not_change_kappa(fig1):
    a = compute_constants(fig1, gamma_override=1.0).to_dict()
    b = compute_constants(fig1.with_field([0.3, 0.3]), gamma_override=1.0).to_dict()
    assert a == b


def test_small_cases():
    assert compute_constants(PwlPotential([[1.0, 2.0]])).kappa == 1.0
    assert compute_constants(PwlPotential([[1.0], [-1.0]])).rule == "one-dimensional"
    assert compute_constants(PwlPotential([[1.0], [-1.0]]), one_dim_kappa=3.0).kappa == 3.0


def test_no_critical_points():
    # parallel ridge: regions are strips, no vertex anywhere
    phi = PwlPotential([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
    rep = compute_constants(phi)
    assert rep.M == 0 and rep.rule == "no-critical-points"
    assert rep.kappa == rep.eta


def test_general_rule():
    phi = PwlPotential([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [2.0, 2.0]], [0.0, 0.0, -1.0, -3.0])
    rep = compute_constants(phi, gamma_override=1.0)
    assert rep.rule == "general"
    theta = rep.gamma_min / (40 * (rep.M + 2) * 2 * rep.eta)
    assert rep.theta_star == pytest.approx(theta)
    assert rep.kappa == pytest.approx(4 * rep.D_C / theta + 5 * (rep.M + 2) * 2 * rep.eta)


def test_subset_budget(fig1):
    with pytest.raises(ScaleLimit):
        compute_constants(fig1, subset_budget=3)


@pytest.mark.parametrize("seed", range(8))
def test_eta_at_least_16(seed):
    rng = generator(seed, 60)
    phi = random_potential(rng, 2, int(rng.integers(3, 6)))
    rep = compute_constants(phi)
    if rep.M:
        assert rep.eta >= 16
    assert rep.sigma >= 5.0


def test_recursion_is_deterministic():
    phi = random_potential(generator(3, 61), 3, 5)
    a = compute_constants(phi).to_dict()
    b = compute_constants(phi).to_dict()
    assert a == b


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def test_project_pair(fig1):
    proj = project_subsystem(fig1, (0, 1))
    np.testing.assert_allclose(proj.w, [-0.5, -0.5])
    assert proj.basis.shape == (1, 2)
    assert abs(proj.basis @ proj.w).max() < 1e-15
    np.testing.assert_allclose(np.abs(proj.child.drifts.ravel()), [math.sqrt(0.5)] * 2)


def test_project_full_span_rejected(fig1):
    with pytest.raises(NotLowDimensional):
        project_subsystem(fig1, (0, 1, 2))


@pytest.mark.parametrize("seed", range(10))
def test_decomposition_residual(seed):
    rng = generator(seed, 62)
    n = int(rng.integers(2, 4))
    phi = random_potential(rng, n, int(rng.integers(n + 1, 7)))
    for size in range(1, phi.n_pieces + 1):
        for subset in itertools.combinations(range(phi.n_pieces), size):
            if affine_rank(phi.drifts[list(subset)]) >= n:
                continue
            proj = project_subsystem(phi, subset)
            assert np.allclose(proj.basis @ proj.basis.T, np.eye(n - 1), atol=1e-12)
            assert np.abs(proj.basis @ proj.w).max() <= 1e-12
            for x in tie_samples(phi, subset, rng):
                if set(phi.evaluate(x)[1].indices.tolist()) <= set(subset):
                    assert decomposition_residual(phi, proj, x) <= 1e-9


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def test_certify_fig1(fig1):
    rep = compute_constants(fig1, gamma_override=1.0)
    cert = certify_kappa(fig1, rep, {"runs": 2, "horizon": 10.0})
    assert cert and cert.max_ratio <= 6.5
    assert cert.runs == 2 * 3 * 3 * 2 * 2


def test_one_dimensional_ratio_reaches_two():
    # a square wave across a kink doubles the deviation, so the default
    # one-dimensional constant is too small; two is enough on this family
    phi = PwlPotential([[1.0], [0.0], [-1.0]], [0.0, 0.0, -1.0])
    cert = certify_kappa(phi, compute_constants(phi), {"runs": 2, "horizon": 10.0})
    assert cert.kappa == 1.0 and not cert.ok
    assert cert.max_ratio == pytest.approx(2.0)
    cert = certify_kappa(phi, compute_constants(phi, one_dim_kappa=2.0),
                         {"runs": 2, "horizon": 10.0})
    assert cert.ok


@pytest.mark.parametrize("seed", range(10))
def test_one_dimensional_ratio_at_most_two(seed):
    phi = random_potential(generator(seed, 63), 1)
    rep = compute_constants(phi, one_dim_kappa=2.0)
    assert certify_kappa(phi, rep, {"runs": 3, "horizon": 20.0, "seed": seed})


def test_certify_reports_violation(fig1):
    rep = compute_constants(fig1, gamma_override=1.0)
    rep.kappa = 0.5
    cert = certify_kappa(fig1, rep, {"runs": 1, "horizon": 5.0, "thetas": [1.0]})
    assert not cert
