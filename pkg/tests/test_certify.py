from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulercert import certify as cert
from eulercert.elliptic import DIRICHLET_ALL, ScalarField, eigenpairs, estimate_epsilon0
from eulercert.errors import LedgerIncomplete, NoMargin, NoNeighborhood, NonTransversal
from eulercert.galerkin import FixedPointProblem, OperatorMatrix, build_space
from eulercert.geometry import SIGMA1, inner_radius
from eulercert.transport import (TransversalityReport, check_transversality,
                                 radial_unit_field, rotation_field, sup_bounds)

from conftest import LN2, LN4, const_inflow

RADIAL_BOUNDS = cert.SupBounds(M=2.1, sup_q_sigma1=2.0, inf_nq_sigma1=2.0, sup_q=2.0, sup_dq=1.0)


def _report(c1=0.5, T_star=LN4, T_max=50.0, passed=True):
    return TransversalityReport(c1, T_star, passed, 64, (None, c1), (None, c1), T_max)


# C~, K, kappa0, C1 -------------------------------------------------------------

def test_C_tilde_radial(radial_q, annulus):
    b = sup_bounds(radial_q, const_inflow(), safety=1.0)
    curve, _ = annulus.curve_for(SIGMA1)
    assert cert.compute_C_tilde(b, const_inflow(), curve) == pytest.approx(0.5)
    assert cert.compute_C_tilde(b, const_inflow(2.0), curve) == pytest.approx(1.0)
    assert cert.compute_C_tilde(b, const_inflow(scale=0.0), curve) == 0.0


def test_C_tilde_derivative_term():
    assert cert.compute_C_tilde(RADIAL_BOUNDS, (1.0, 0.5)) == pytest.approx(0.5 + 2 * 0.5)


def test_C_tilde_needs_transversal_field():
    b = cert.SupBounds(M=1, sup_q_sigma1=1, inf_nq_sigma1=0.0, sup_q=1, sup_dq=1)
    with pytest.raises(NonTransversal):
        cert.compute_C_tilde(b, (1.0, 0.0))


def test_K_at_zero_time():
    for M in (0.0, 1.0, 5.0):
        assert cert.K_of(M, 0.0, 1.0) == 0.0


def test_K_pinned_value():
    assert cert.K_of(0.0, LN2, 1.0) == pytest.approx(2 * math.sqrt((2 - 0.25) / 6), rel=1e-12)
    assert cert.K_of(0.0, LN2, 1.0) == pytest.approx(1.0801234497, rel=1e-9)


def test_kappa_closed_form_vs_quadrature(rng):
    for _ in range(20):
        M, mu, t = rng.uniform(0, 3), rng.uniform(0.51, 3), rng.uniform(0.01, 3)
        assert cert.kappa(M, t, mu) == pytest.approx(cert.kappa_quadrature(M, t, mu), rel=1e-10)


def test_K_rejects_bad_inputs():
    with pytest.raises(ValueError):
        cert.K_of(1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        cert.K_of(-1.0, 1.0, 1.0)


def test_kappa0_cases():
    assert cert.kappa0(0.0, 2.1, 0.1, LN4, 1.0)[0] == 0.0
    k0, k0l = cert.kappa0(0.5, 2.1, 0.1, LN4, 1.0, 4.0)
    assert k0 == pytest.approx(0.5 * cert.K_of(2.2, LN4 + 1, 1.0))
    assert k0l == pytest.approx(k0 / 4.0)
    assert cert.kappa0(0.5, 2.1, 0.2, LN4, 1.0)[0] > k0


def test_C1_cases():
    assert cert.C1_bound(LN4, 2.1, 0.0, 0.0, 1.0, 0.0, 1.0) == 0.0
    core = math.exp(LN4 + 1) + 0.5 * math.exp((LN4 + 1) * 4.1)
    assert cert.C1_bound(LN4, 2.1, 0.5, 1.0, 1.0, 0.0, 0.0) == pytest.approx(core, rel=1e-14)
    # independent evaluation of the amplified form
    T, M = 1.3862943611198906, 2.1
    manual = (1 + 2.0 * (1 + 0.3) * 1.5) * (math.e ** (T + 1) * 1.0 + 0.5 * math.e ** ((T + 1) * (M + 2)))
    assert cert.C1_bound(T, M, 0.5, 1.0, 2.0, 0.3, 1.5) == pytest.approx(manual, rel=1e-13)


def test_delta_choice():
    assert cert.delta_choice(0.0, 10.0) == 0.99
    assert cert.delta_choice(1.0, 10.0) == pytest.approx(1 / 400)
    assert cert.delta_choice(1e-4, 10.0) == 0.99


def test_basis_c1_norm(annulus_coarse):
    sp = build_space(annulus_coarse, 4, "dirichlet-eigen")
    b = cert.basis_c1_norm(sp, safety=1.0)
    assert b >= np.max(np.abs(sp.basis))


# Hoelder seminorm and delta_c ------------------------------------------------------

def test_holder_constant_is_zero(annulus):
    assert cert.holder_seminorm(ScalarField(annulus, np.full(annulus.n_vertices, 3.0))) == 0.0


def test_holder_linear_field(annulus_fine):
    s = cert.holder_seminorm(ScalarField(annulus_fine, annulus_fine.vertices[:, 0]), 0.5, 0.1)
    assert abs(s - math.sqrt(0.1)) <= 0.02 * math.sqrt(0.1)


def test_holder_homogeneous(annulus, rng):
    f = ScalarField(annulus, rng.standard_normal(annulus.n_vertices))
    assert cert.holder_seminorm(2 * f) == pytest.approx(2 * cert.holder_seminorm(f))


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(0.05, 2.0), delta=st.floats(1e-4, 0.99), c=st.floats(1e-3, 10.0))
def test_delta_c_homogeneous_in_c(rho, delta, c):
    a = cert.delta_c(rho, 0.5, delta, c)
    assert cert.delta_c(rho, 0.5, delta, 2 * c) == pytest.approx(2 * a, rel=1e-9)


def test_delta_c_shrinks_with_delta():
    vals = [cert.delta_c(1.0, 0.5, d, 1.0) for d in (1e-1, 1e-3, 1e-6, 1e-9)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-7


def test_delta_c_monte_carlo_small():
    val = cert.delta_c(0.3, 0.5, 0.2, 2.0)
    mc, se = cert.delta_c_monte_carlo(0.3, 0.5, 0.2, 2.0, n=400_000, seed=3)
    assert abs(val - mc) <= 4 * se


def test_bump_support():
    assert cert.comparison_bump(0.0, 0.5, 0.25, 2.0) == pytest.approx(0.5)
    assert cert.comparison_bump(0.2, 0.5, 0.25, 2.0) == 0.0


# delta1 -----------------------------------------------------------------------------

def test_delta1_radial_small_M():
    res = cert.delta1_margin(_report(), 1e-6)
    assert res.delta1 >= 2 ** -4
    assert res.delta1 <= 1


def test_delta1_vanishing_margin():
    with pytest.raises(NoMargin):
        cert.delta1_margin(_report(c1=1e-9), 2.1)
    with pytest.raises(NoMargin):
        cert.delta1_margin(_report(c1=-1.0, passed=False), 2.1)


def test_delta1_horizon():
    with pytest.raises(NoMargin):
        cert.delta1_margin(_report(T_max=1.5), 2.1)


@given(st.floats(0.01, 5), st.floats(0, 5), st.floats(0, 3))
def test_delta1_never_exceeds_one(c1, M, T):
    try:
        assert cert.delta1_margin(_report(c1=c1, T_star=T), M).delta1 <= 1
    except NoMargin:
        pass


def test_normal_speed_lipschitz_radial(radial_q):
    assert cert.normal_speed_lipschitz(radial_q) < 1e-9


# (A3) and the block bound ----------------------------------------------------------

def test_A3_zero_kappa0():
    rec, eta0 = cert.check_A3(0.0, 0.3, 2.0, 100.0)
    assert rec.passed and eta0 == pytest.approx(0.6)


def test_A3_arithmetic_failure():
    rec, eta0 = cert.check_A3(1.0, 1.0, 1.0, 1.0)
    assert rec.lhs == pytest.approx(2.0) and rec.rhs == 0.5
    assert not rec.passed and eta0 is None


def test_A3_pass_bounds_dominating_matrix(rng):
    k0, e0, l1, gamma = 0.05, 0.02, 5.0, 2.0
    rec, eta0 = cert.check_A3(k0, e0, l1, gamma)
    assert rec.passed
    D = cert.dominating_matrix(k0, e0, l1)
    for _ in range(100):
        u, v = rng.standard_normal(2)
        x = np.array([abs(u), abs(v)])
        y = D @ x
        ratio = math.hypot(y[0], math.sqrt(eta0) * y[1]) / math.hypot(x[0], math.sqrt(eta0) * x[1])
        assert ratio <= 1 / (2 * gamma)


def test_star_operator_norm_identity():
    I = np.eye(2)
    Z = np.zeros((2, 3))
    assert cert.star_operator_norm(I, Z, Z.T, np.eye(3), 0.4) == pytest.approx(1.0)


# delta2 -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def zero_space(annulus_coarse):
    return build_space(annulus_coarse, 4, "dirichlet-eigen")


def test_delta2_linear_surrogate(zero_space):
    E = np.eye(4) * 0.1
    res = cert.delta2_estimate(zero_space, np.zeros(zero_space.mesh.n_vertices), E, 0.1, 0.1, 0.02,
                               jacobian=lambda v: E)
    assert res.delta2 == 0.02


def test_delta2_zero_tolerance(zero_space):
    om0 = np.zeros(zero_space.mesh.n_vertices)
    with pytest.raises(NoNeighborhood):
        cert.delta2_estimate(zero_space, om0, np.zeros((4, 4)), 0.0, 0.1, 0.02,
                             jacobian=lambda v: np.full((4, 4), np.abs(v).max()))


def test_delta2_monotone_in_tolerance(zero_space):
    mesh = zero_space.mesh
    om0 = np.zeros(mesh.n_vertices)

    def jac(v):
        return np.eye(4) * float(np.abs(v).max()) ** 2

    vals = [cert.delta2_estimate(zero_space, om0, np.zeros((4, 4)), k, 1.0, 1.0, jacobian=jac,
                                 seed=5).delta2 for k in (1e-6, 1e-4, 1e-2, 1.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[0] < vals[-1]


# audit -------------------------------------------------------------------------------

def test_audit_zero_perturbation(radial_q):
    rep = cert.lemma31_audit(radial_q, const_inflow(), perturbations=[rotation_field(lambda r: 0 * r)],
                             T_star=LN4, M=2.1, C_tilde=0.5)
    assert rep.ratios[0] == 0.0


def test_audit_radial_perturbation(radial_q):
    rep = cert.lemma31_audit(radial_q, const_inflow(), perturbations=[radial_unit_field()],
                             T_star=LN4, M=2.1, C_tilde=0.5)
    assert 0 < rep.max_ratio < 1


# ledger, verdict, certificate --------------------------------------------------------

def test_ledger_require_and_provenance():
    L = cert.ConstantsLedger()
    L.add("C2", 10.0, cert.USER)
    with pytest.raises(LedgerIncomplete):
        L.require()
    with pytest.raises(ValueError):
        L.add("x", 1.0, "guess")
    assert cert.downgrade_reasons(L) == ["user_supplied"]


def test_verdict_rules():
    L = cert.ConstantsLedger()
    L.add("a", 1.0, cert.ANALYTIC)
    ok = [cert.CheckRecord("x", "", 0, 1, True)]
    bad = ok + [cert.CheckRecord("y", "", 2, 1, False)]
    assert cert.verdict_for(ok, L) == cert.CERTIFIED
    assert cert.verdict_for(bad, L) == cert.FAILED
    L.add("b", 1.0, cert.SAMPLED)
    assert cert.verdict_for(ok, L) == cert.CONDITIONAL
    assert cert.verdict_for(ok, L, {"sampled_bounds": True}) == cert.CERTIFIED
    L.add("C2", 10.0, cert.USER)
    assert cert.verdict_for(ok, L, {"sampled_bounds": True, "user_supplied": True}) == cert.CONDITIONAL


@pytest.fixture(scope="module")
def zero_problem(annulus_coarse):
    mesh = annulus_coarse
    h = const_inflow(scale=0.0)
    ctx = FixedPointProblem(mesh, 1.0, h)
    sp = build_space(mesh, 4, "mixed-eigen", h)
    q = ctx.velocity(np.zeros(mesh.n_vertices))
    kw = dict(context=ctx, space=sp, Omega0=np.zeros(mesh.n_vertices), A=OperatorMatrix(np.zeros((4, 4)), "tangent"),
              report=check_transversality(q, h, 64), bounds=sup_bounds(q, h),
              lambda1=float(eigenpairs(mesh, DIRICHLET_ALL, 1).eigenvalues[0]),
              epsilon0=estimate_epsilon0(sp, mesh), rho=inner_radius(mesh).rho,
              C2_provenance=cert.ANALYTIC, acknowledgments={"sampled_bounds": True})
    return kw


def test_zero_solution_certifies(zero_problem):
    c = cert.certify(**zero_problem)
    assert c.verdict == cert.CERTIFIED
    assert c.ledger.value("C_tilde") == 0 and c.ledger.value("kappa0") == 0
    assert c.ledger.value("delta2") == c.ledger.value("delta_c")
    assert c.residuals["upsilon_residual"] == 0
    assert c.conclusion == c.ledger.value("delta2")


def test_inflated_residual_fails_one_check(zero_problem):
    c = cert.certify(**{**zero_problem, "upsilon_residual": 1.0})
    assert c.verdict == cert.FAILED
    assert [k.name for k in c.failing] == ["Theorem hypothesis"]
    assert c.conclusion is None


def test_user_C2_is_conditional(zero_problem):
    c = cert.certify(**{**zero_problem, "C2_provenance": cert.USER})
    assert c.verdict == cert.CONDITIONAL
    assert not c.acknowledged


def test_certificate_json(zero_problem, tmp_path):
    c = cert.certify(**zero_problem)
    doc = json.loads(c.write(tmp_path / "c.json").read_text())
    assert set(doc) >= {"constants", "checks", "residuals", "verdict", "conclusion", "seed", "config_hash"}
    names = {e["name"] for e in doc["constants"]}
    assert set(cert.REQUIRED) <= names
    assert all(e["provenance"] in cert.PROVENANCES for e in doc["constants"])
    text = cert.render_text(doc)
    assert text.startswith("verdict: certified")


def test_failed_transversality_certificate():
    c = cert.certify_failed_transversality(_report(c1=-2.0, passed=False), mu=1.0, note="reversed")
    assert c.verdict == cert.FAILED
    assert c.failing[0].name == "(A1) transversality"
