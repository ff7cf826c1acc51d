from __future__ import annotations

import numpy as np
import pytest

from eulercert.elliptic import ScalarField
from eulercert.errors import MeshMismatch, NeighborhoodExit, SingularJacobian
from eulercert.galerkin import (DIRICHLET_EIGEN, FINITE_DIFFERENCE, MIXED_EIGEN, FixedPointProblem,
                                apply_Lambda, apply_Upsilon, assemble_A, build_space, galerkin_solve,
                                gamma_bound, iterate, l2_norm, project, star_norm)
from eulercert.geometry import SIGMA1, build_mesh

from conftest import annulus_spec, const_inflow, radial_oracle


class ConstantMap:
    """Stand-in problem whose Lambda is the constant map onto ``target``."""

    def __init__(self, target):
        self.target = target

    def Lambda(self, omega):
        return self.target.copy()


@pytest.fixture(scope="module")
def space(annulus_coarse):
    return build_space(annulus_coarse, 6, MIXED_EIGEN, const_inflow())


@pytest.fixture(scope="module")
def small_problem():
    mesh = build_mesh(annulus_spec(0.25))
    ctx = FixedPointProblem(mesh, 1.0, const_inflow(scale=1e-6), ode_tol=1e-10)
    sp = build_space(mesh, 3, MIXED_EIGEN, ctx.h)
    return mesh, ctx, sp


def test_space_orthonormal(space):
    np.testing.assert_allclose(space.gram(), np.eye(space.N), atol=1e-10)
    assert space.has_boundary_function


def test_boundary_function_matches_h(space):
    mesh = space.mesh
    on = mesh.vertex_flag == SIGMA1
    u = space.coefficients(np.where(on, 1.0, 0.0))
    assert np.linalg.norm(u) > 0
    # the last basis function carries the Sigma_1 trace; the eigenfunctions vanish there
    assert np.all(np.abs(space.basis[:-1][:, on]) < 1e-12)


def test_dirichlet_space_size(annulus_coarse):
    sp = build_space(annulus_coarse, 5, DIRICHLET_EIGEN)
    assert sp.N == 5 and not sp.has_boundary_function


def test_project_basis_function(space):
    u, v = project(space, space.fields[3])
    np.testing.assert_allclose(u, np.eye(space.N)[3], atol=1e-9)
    assert v.norm() < 1e-9


def test_project_orthogonal_field(space, rng):
    mesh = space.mesh
    f = rng.standard_normal(mesh.n_vertices)
    _, v = space.split(f)
    u, _ = project(space, ScalarField(mesh, v))
    assert np.max(np.abs(u)) < 1e-9


def test_pythagoras(space, rng):
    f = ScalarField(space.mesh, rng.standard_normal(space.mesh.n_vertices))
    u, v = project(space, f)
    assert f.norm() ** 2 == pytest.approx(u @ u + v.norm() ** 2, rel=1e-8)


def test_project_mesh_mismatch(space, annulus):
    with pytest.raises(MeshMismatch):
        project(space, ScalarField(annulus, np.zeros(annulus.n_vertices)))


def test_star_norm_cases(space, rng):
    mesh = space.mesh
    u = rng.standard_normal(space.N)
    assert star_norm((u, np.zeros(mesh.n_vertices)), 0.3, space) == pytest.approx(np.linalg.norm(u))
    f = rng.standard_normal(mesh.n_vertices)
    assert star_norm(f, 1.0, space) == pytest.approx(l2_norm(mesh, f), rel=1e-10)
    s = star_norm(f, 0.25, space)
    assert s <= l2_norm(mesh, f) <= 2 * s


def test_lambda_zero_inflow(annulus, rng):
    ctx = FixedPointProblem(annulus, 1.0, const_inflow(scale=0.0))
    om = ScalarField(annulus, rng.standard_normal(annulus.n_vertices))
    out = apply_Lambda(om, ctx)
    assert np.all(out.values == 0)
    assert np.all(ctx.Lambda(out.values) == 0)


def test_lambda_radial(annulus):
    ctx = FixedPointProblem(annulus, 1.0, const_inflow())
    out = ctx.Lambda(np.zeros(annulus.n_vertices))
    assert np.max(np.abs(out - radial_oracle(annulus.vertices))) <= 1e-6


def test_A_zero_for_zero_inflow(annulus_coarse, space):
    ctx = FixedPointProblem(annulus_coarse, 1.0, const_inflow(scale=0.0))
    A = assemble_A(space, np.zeros(annulus_coarse.n_vertices), ctx)
    assert np.all(A.entries == 0)


def test_gamma_cases(rng):
    assert gamma_bound(np.zeros((4, 4))).gamma == pytest.approx(1.0)
    assert gamma_bound(np.diag([0.5, 0, 0])).gamma == pytest.approx(2.0)
    for _ in range(20):
        A = rng.standard_normal((6, 6))
        A *= 0.3 / np.linalg.norm(A, 2)
        g = gamma_bound(A).gamma
        assert g <= 1 / 0.7 + 1e-12
        assert g == pytest.approx(1 / np.linalg.svd(np.eye(6) - A, compute_uv=False)[-1])


def test_gamma_singular():
    with pytest.raises(SingularJacobian):
        gamma_bound(np.eye(3))


def test_upsilon_preserves_fixed_point(space, rng):
    target = rng.standard_normal(space.mesh.n_vertices)
    A = 0.2 * rng.standard_normal((space.N, space.N))
    out = apply_Upsilon(target, A, space, ConstantMap(target))
    np.testing.assert_allclose(out.values, target, atol=1e-10)


def test_upsilon_block_identity(space, rng):
    mesh = space.mesh
    target = rng.standard_normal(mesh.n_vertices)
    om = rng.standard_normal(mesh.n_vertices)
    A = 0.2 * rng.standard_normal((space.N, space.N))
    ups = apply_Upsilon(om, A, space, ConstantMap(target)).values
    r = target - space.synthesize(A @ space.coefficients(om))
    # (I - A P) Upsilon = r, split into its U and V blocks
    lhs = ups - space.synthesize(A @ space.coefficients(ups))
    u_l, v_l = space.split(lhs)
    u_r, v_r = space.split(r)
    np.testing.assert_allclose(space.synthesize(u_l) + v_l, space.synthesize(u_r) + v_r, atol=1e-8)


def test_upsilon_zero_case(space, annulus_coarse):
    ctx = FixedPointProblem(annulus_coarse, 1.0, const_inflow(scale=0.0))
    out = apply_Upsilon(np.ones(annulus_coarse.n_vertices), np.zeros((space.N, space.N)), space, ctx)
    assert np.all(out.values == 0)


def test_iterate_from_fixed_point(space, rng):
    target = rng.standard_normal(space.mesh.n_vertices)
    res = iterate(target, np.zeros((space.N, space.N)), space, ConstantMap(target))
    assert res.converged and len(res.history) == 1
    assert res.final_residual <= 1e-12


def test_iterate_zero_problem(space, annulus_coarse):
    ctx = FixedPointProblem(annulus_coarse, 1.0, const_inflow(scale=0.0))
    res = iterate(np.zeros(annulus_coarse.n_vertices), np.zeros((space.N, space.N)), space, ctx)
    assert res.converged and res.history[0]["star_step"] == 0
    assert np.all(res.Omega_bar.values == 0)


def test_iterate_neighborhood_exit(space, rng):
    target = rng.standard_normal(space.mesh.n_vertices)
    with pytest.raises(NeighborhoodExit):
        iterate(np.zeros(space.mesh.n_vertices), np.zeros((space.N, space.N)), space,
                ConstantMap(target), delta2=1e-3)


def test_iterate_history_csv(tmp_path, space, rng):
    target = rng.standard_normal(space.mesh.n_vertices)
    res = iterate(target, np.zeros((space.N, space.N)), space, ConstantMap(target))
    text = res.to_csv(tmp_path / "h.csv").read_text().splitlines()
    assert text[0] == "n,star_step,l2_dist_from_Omega0,lambda_residual"
    assert len(text) == 2


def test_galerkin_solve_radial(small_problem):
    mesh, ctx, sp = small_problem
    sol = galerkin_solve(sp, ctx)
    u = sp.coefficients(ctx.Lambda(sol.Omega0.values))
    np.testing.assert_allclose(sol.u, u, rtol=1e-9, atol=1e-18)
    assert sol.delta0 <= 1e-12


def test_A_schemes_agree(small_problem):
    mesh, ctx, sp = small_problem
    om0 = galerkin_solve(sp, ctx).Omega0.values
    At = assemble_A(sp, om0, ctx).entries
    scale = np.max(np.abs(At))
    fd = [assemble_A(sp, om0, ctx, FINITE_DIFFERENCE, e).entries for e in (0.0025, 0.005)]
    err = [np.max(np.abs(F - At)) / scale for F in fd]
    # radial characteristics run along mesh edges, so the one-sided curvatures of the
    # discrete map differ and central differences converge at first order
    assert 1.8 <= err[1] / err[0] <= 2.2
    assert np.max(np.abs(2 * fd[0] - fd[1] - At)) / scale <= 5e-4
