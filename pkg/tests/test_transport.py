import math

import numpy as np
import pytest

from uwrom import fem, mesh, transport
from uwrom.transport import Parameter, ParameterDomain

from conftest import make_system
from oracles import assemble_monolithic

T1_MU = Parameter(0.5, 0.1, 1.0)


# ---------------------------------------------------------------------------
# parameters and domains
# ---------------------------------------------------------------------------

def test_domain_membership():
    p1 = ParameterDomain("P.1")
    assert p1.contains(Parameter(0.7, 0.0, 1.0))
    assert not p1.contains(Parameter(0.7, 0.1, 1.0))
    assert not p1.contains(Parameter(1.2, 0.0, 1.0))
    p2 = ParameterDomain("P.2")
    assert p2.contains(Parameter(0.7, 0.3, 1.0))
    assert not p2.contains(Parameter(0.3, 0.7, 1.0))
    assert not p2.contains(Parameter(0.7, 0.3, 2.0))
    p3 = ParameterDomain("P.3")
    assert p3.contains(Parameter(0.7, 0.3, 10.0))
    assert not p3.contains(Parameter(0.7, 0.3, 0.5))


def test_domain_rejects_unknown_name():
    with pytest.raises(ValueError):
        ParameterDomain("P.4")


def test_training_set_sizes():
    assert len(ParameterDomain("P.1").training_set(500)) == 500
    lattice = ParameterDomain("P.2").training_set(630)
    assert len(lattice) == 630  # exactly the 35-point triangular lattice
    assert len({(m.c_w, m.c_c) for m in lattice}) == 630
    p3 = ParameterDomain("P.3").training_set(6300)
    assert len(p3) == 6300
    assert len({m.g_0 for m in p3}) == 10


def test_training_set_admissible():
    for name in ParameterDomain.NAMES:
        dom = ParameterDomain(name)
        assert all(dom.contains(mu) for mu in dom.training_set(40))


def test_validation_set_deterministic_and_admissible():
    dom = ParameterDomain("P.3")
    a = dom.validation_set(50, seed=42)
    b = dom.validation_set(50, seed=42)
    assert a == b
    assert all(dom.contains(mu) for mu in a)
    assert any(mu.g_0 > 5.0 for mu in a)


def test_reaction_at():
    mu = Parameter(0.5, 0.1, 1.0)
    c = transport.reaction_at([[0.5, 0.5], [0.5, 0.3], [0.5, 0.9]], mu)
    assert np.array_equal(c, [0.5, 0.1, 0.0])


# ---------------------------------------------------------------------------
# affine structure
# ---------------------------------------------------------------------------

def test_component_symmetry(t1_sys_r1):
    for p in (1, 2, 3):
        for q in (1, 2, 3):
            d = t1_sys_r1.component(p, q) - t1_sys_r1.component(q, p).T
            assert abs(d).max() < 1e-14


def test_cross_component_vanishes(t1_sys_r1):
    assert t1_sys_r1.components[(2, 3)].nnz == 0


def test_combined_at_unit_parameter(t1_sys_r1):
    mu = Parameter(0.0, 0.0, 1.0)
    d = t1_sys_r1.combined(mu) - t1_sys_r1.components[(1, 1)]
    assert abs(d).max() == 0.0


@pytest.mark.parametrize("r", [0, 1])
def test_affine_matches_monolithic_oracle(poiseuille, r):
    sys = make_system("poiseuille", poiseuille, r, 1, "sin4pi_sq")
    rng = np.random.default_rng(17)
    for _ in range(5):
        cc, cw = np.sort(rng.uniform(0.0, 1.0, 2))
        mu = Parameter(cw, cc, rng.uniform(0.5, 2.0))
        a_direct, rhs_direct = assemble_monolithic(
            sys.space, poiseuille, sys.facets, "sin4pi_sq", mu)
        a_affine = sys.combined(mu).toarray()
        scale = np.abs(a_direct).max()
        assert np.abs(a_affine - a_direct).max() <= 1e-12 * scale
        assert np.abs(sys.rhs(mu) - rhs_direct).max() <= 1e-12 * np.abs(rhs_direct).max()


def test_combined_positive_definite_sample(darcy_sys_r1):
    rng = np.random.default_rng(23)
    q, _ = np.linalg.qr(rng.normal(size=(darcy_sys_r1.n, 50)))
    for mu in (Parameter(0.0, 0.0, 1.0), Parameter(1.0, 1.0, 1.0),
               Parameter(0.3, 0.1, 5.0)):
        a = darcy_sys_r1.combined(mu)
        w = np.linalg.eigvalsh(q.T @ (a @ q))
        assert w.min() > 0


def test_geometry_mismatch_raises(poiseuille):
    m = mesh.build_mesh(0)
    space = fem.LagrangeSpace(m, 1)
    facets = mesh.classify_boundary(m, "darcy")
    with pytest.raises(ValueError):
        transport.assemble_affine(space, poiseuille, facets, "sin_pi_sq")


def test_unknown_profile_raises(poiseuille):
    m = mesh.build_mesh(0)
    space = fem.LagrangeSpace(m, 1)
    facets = mesh.classify_boundary(m, "poiseuille")
    with pytest.raises(ValueError):
        transport.assemble_affine(space, poiseuille, facets, "gaussian")


def test_conditioning_trend_darcy(darcy_small):
    """FOM conditioning deteriorates by a gridwidth-driven factor per step
    (above the asymptotic quadratic law at desk scales)."""
    conds = []
    for r in range(3):
        sys = make_system("darcy", darcy_small, r, 1, "sin_pi_sq")
        conds.append(fem.spd_condition(sys.combined(T1_MU)))
    ratios = [b / a for a, b in zip(conds, conds[1:])]
    assert all(3.0 <= rho <= 8.0 for rho in ratios), ratios


# ---------------------------------------------------------------------------
# FOM solve
# ---------------------------------------------------------------------------

def test_zero_inflow_zero_solution(t1_sys_r1):
    sol = transport.solve_fom(t1_sys_r1, Parameter(0.5, 0.1, 0.0))
    assert np.array_equal(sol.w, np.zeros(t1_sys_r1.n))


def test_rhs_linearity(t1_sys_r1):
    mu1 = Parameter(0.3, 0.1, 1.0)
    mu2 = Parameter(0.3, 0.1, 2.0)
    w1 = transport.solve_fom(t1_sys_r1, mu1).w
    w2 = transport.solve_fom(t1_sys_r1, mu2).w
    assert np.abs(w2 - 2.0 * w1).max() <= 1e-9 * np.abs(w2).max()


def test_fom_residual_contract(t1_sys_r1):
    sol = transport.solve_fom(t1_sys_r1, T1_MU)
    assert sol.residual <= 1e-10
    assert sol.solve_time > 0


# ---------------------------------------------------------------------------
# primal reconstruction
# ---------------------------------------------------------------------------

def test_reconstruct_constant(t1_sys_r1):
    mu = Parameter(0.0, 0.0, 1.0)
    kappa = 2.5
    pr = transport.reconstruct_primal(t1_sys_r1, mu, kappa * np.ones(t1_sys_r1.n))
    assert np.abs(pr.values).max() < 1e-12
    assert np.abs(pr.trace_values - kappa).max() < 1e-12


def test_reconstruct_linear_in_y(poiseuille, t1_sys_r1):
    mu = Parameter(0.0, 0.0, 1.0)
    w = fem.interpolate(t1_sys_r1.space, lambda p: p[:, 1])
    pr = transport.reconstruct_primal(t1_sys_r1, mu, w)
    expected = poiseuille.profile(pr.points[:, 0])
    assert np.abs(pr.values - expected).max() < 1e-12


def test_reconstruct_linearity(t1_sys_r1):
    rng = np.random.default_rng(4)
    w1 = rng.normal(size=t1_sys_r1.n)
    w2 = rng.normal(size=t1_sys_r1.n)
    p1 = transport.reconstruct_primal(t1_sys_r1, T1_MU, w1)
    p2 = transport.reconstruct_primal(t1_sys_r1, T1_MU, w2)
    p12 = transport.reconstruct_primal(t1_sys_r1, T1_MU, w1 + w2)
    assert np.allclose(p12.values, p1.values + p2.values, atol=1e-11)


def test_reconstruct_accepts_fom_solution(t1_sys_r1):
    sol = transport.solve_fom(t1_sys_r1, T1_MU)
    a = transport.reconstruct_primal(t1_sys_r1, T1_MU, sol)
    b = transport.reconstruct_primal(t1_sys_r1, T1_MU, sol.w)
    assert np.array_equal(a.values, b.values)


# ---------------------------------------------------------------------------
# analytic oracle
# ---------------------------------------------------------------------------

def test_oracle_pure_transport():
    g = transport.G_PROFILES["sin4pi_sq"]
    pts = np.array([[0.3, 0.2], [0.7, 0.9]])
    vals = transport.exact_poiseuille(pts, 0.0, 0.0, g)
    assert np.allclose(vals, g(pts[:, 0]), atol=1e-15)


def test_oracle_t1_value():
    g = transport.G_PROFILES["sin4pi_sq"]
    val = transport.exact_poiseuille(np.array([[0.625, 0.0]]), 0.5, 0.1, g)[0]
    # path integral 0.5/8 + 0.1/8 + 0.5/8 + 0.1/8 = 0.15, speed 0.29296875
    assert abs(val - math.exp(-0.512)) < 1e-14
    assert abs(val - 0.5992957878455384) < 1e-13


def test_oracle_inflow_value():
    g = transport.G_PROFILES["sin4pi_sq"]
    val = transport.exact_poiseuille(np.array([[0.625, 1.0]]), 0.5, 0.1, g)[0]
    assert abs(val - 1.0) < 1e-13


def test_oracle_degenerate_wall():
    g = transport.G_PROFILES["sin4pi_sq"]
    with pytest.raises(transport.DegenerateStreamlineError):
        transport.exact_poiseuille(np.array([[0.0, 0.5]]), 0.5, 0.1, g)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_quadrature_points_avoid_walls(poiseuille, r):
    sys = make_system("poiseuille", poiseuille, r, 2, "sin4pi_sq")
    x = sys.qpoints.reshape(-1, 2)[:, 0]
    assert x.min() > 0.0 and x.max() < 1.0


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

def test_l2_error_identical(t1_sys_r1):
    sol = transport.solve_fom(t1_sys_r1, T1_MU)
    pr = transport.reconstruct_primal(t1_sys_r1, T1_MU, sol)
    assert transport.l2_error(pr, pr) == 0.0


def test_l2_error_constant_shift(t1_sys_r1):
    import copy
    sol = transport.solve_fom(t1_sys_r1, T1_MU)
    pr = transport.reconstruct_primal(t1_sys_r1, T1_MU, sol)
    shifted = copy.deepcopy(pr)
    shifted.values = shifted.values + 0.75
    assert abs(transport.l2_error(pr, shifted) - 0.75) < 1e-12


def test_l2_error_layout_mismatch(poiseuille, t1_sys_r1):
    sys0 = make_system("poiseuille", poiseuille, 0, 1, "sin4pi_sq")
    pr0 = transport.reconstruct_primal(sys0, T1_MU, np.zeros(sys0.n))
    pr1 = transport.reconstruct_primal(t1_sys_r1, T1_MU, np.zeros(t1_sys_r1.n))
    with pytest.raises(ValueError):
        transport.l2_error(pr1, pr0)


def test_error_decreases_under_refinement_q2(poiseuille):
    g = transport.G_PROFILES["sin4pi_sq"]
    ref = lambda pts: transport.exact_poiseuille(pts, 0.5, 0.1, g)
    errs = []
    for r in (2, 3):
        sys = make_system("poiseuille", poiseuille, r, 2, "sin4pi_sq")
        sol = transport.solve_fom(sys, T1_MU)
        pr = transport.reconstruct_primal(sys, T1_MU, sol)
        errs.append(transport.l2_error(pr, ref))
    assert errs[1] < errs[0]


def test_parameter_scaling_property(darcy_sys_r1):
    mu = Parameter(0.4, 0.2, 1.0)
    mu_scaled = Parameter(0.4, 0.2, 7.0)
    w = transport.solve_fom(darcy_sys_r1, mu).w
    w_scaled = transport.solve_fom(darcy_sys_r1, mu_scaled).w
    assert np.abs(w_scaled - 7.0 * w).max() <= 1e-8 * np.abs(w_scaled).max()


def test_evaluate_primal_matches_reconstruction(darcy_sys_r1, darcy_small):
    """Pointwise evaluation agrees with the tabulated reconstruction."""
    sol = transport.solve_fom(darcy_sys_r1, T1_MU)
    pr = transport.reconstruct_primal(darcy_sys_r1, T1_MU, sol)
    sub = slice(0, 200)
    vals = transport.evaluate_primal(darcy_sys_r1.space, sol.w, darcy_small,
                                     T1_MU, pr.points[sub])
    assert np.abs(vals - pr.values[sub]).max() < 1e-10
