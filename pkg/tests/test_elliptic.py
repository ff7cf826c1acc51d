from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from eulercert.elliptic import (DIRICHLET_ALL, MIXED, ScalarField, eigenpairs, element_gradient,
                                estimate_epsilon0, estimate_epsilon0_detail, fe_operators, l2_inner,
                                mass_matrix, pcg, perp_gradient, read_field_csv, solve_harmonic_extension,
                                solve_poisson_dirichlet, write_field_csv)
from eulercert.errors import MeshMismatch
from eulercert.geometry import INTERIOR, build_mesh, disc_mesh

from conftest import annulus_spec

J0_ZERO = 2.404825557695773


def _r2(mesh):
    return (mesh.vertices ** 2).sum(axis=1)


def test_disc_quadratic_solution(disc):
    phi = solve_poisson_dirichlet(disc, ScalarField(disc, np.full(disc.n_vertices, 4.0)))
    assert np.max(np.abs(phi.values - (_r2(disc) - 1))) < 5e-3


def test_zero_rhs_gives_zero(annulus):
    phi = solve_poisson_dirichlet(annulus, ScalarField(annulus, np.zeros(annulus.n_vertices)))
    assert np.all(phi.values == 0)


def test_manufactured_annulus_second_order():
    errs = []
    for h in (0.1, 0.05):
        m = build_mesh(annulus_spec(h))
        r2 = _r2(m)
        phi = solve_poisson_dirichlet(m, ScalarField(m, 17 - 16 * r2))
        errs.append(ScalarField(m, phi.values - (r2 - 0.25) * (4 - r2)).norm())
    assert 3.3 <= errs[0] / errs[1] <= 4.7


def test_pcg_solves_spd():
    A = fe_operators(disc_mesh(1.0, 0.2)).stiffness
    m = disc_mesh(1.0, 0.2)
    I = fe_operators(m).interior
    K = A[I][:, I].tocsr()
    b = np.ones(len(I))
    x, it = pcg(K, b, 1e-12)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert it > 0


def test_constant_harmonic_extension(annulus):
    psi = solve_harmonic_extension(annulus, 2.5)
    np.testing.assert_allclose(psi.values, 2.5, atol=1e-9)


def test_log_harmonic_extension():
    errs = []
    for h in (0.1, 0.05):
        m = build_mesh(annulus_spec(h))
        r = np.sqrt(_r2(m))
        g = np.where(np.isclose(r, 2.0), 1.0, 0.0)
        psi = solve_harmonic_extension(m, g)
        errs.append(np.max(np.abs(psi.values - np.log(r / 0.5) / math.log(4))))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.0


def test_affine_harmonic_extension_exact(disc):
    psi = solve_harmonic_extension(disc, lambda p: p[:, 0])
    np.testing.assert_allclose(psi.values, disc.vertices[:, 0], atol=1e-8)


def test_perp_gradient_affine(annulus_coarse):
    m = annulus_coarse
    g1 = perp_gradient(ScalarField(m, m.vertices[:, 0])).values
    g2 = perp_gradient(ScalarField(m, m.vertices[:, 1])).values
    np.testing.assert_allclose(g1, np.tile([0.0, 1.0], (m.n_triangles, 1)), atol=1e-12)
    np.testing.assert_allclose(g2, np.tile([-1.0, 0.0], (m.n_triangles, 1)), atol=1e-12)


def test_perp_gradient_quadratic_first_order():
    errs = []
    for h in (0.1, 0.05):
        m = disc_mesh(1.0, h)
        g = perp_gradient(ScalarField(m, _r2(m) - 1)).values
        c = m.centroids
        errs.append(np.max(np.abs(g - np.stack([-2 * c[:, 1], 2 * c[:, 0]], axis=1))))
    assert errs[1] < errs[0] and errs[1] < 0.1


def test_disc_first_eigenvalue():
    lam = eigenpairs(disc_mesh(1.0, 0.02), DIRICHLET_ALL, 1).eigenvalues[0]
    assert abs(lam - J0_ZERO ** 2) / J0_ZERO ** 2 < 0.01


def test_rayleigh_quotient_consistency(annulus):
    es = eigenpairs(annulus, MIXED, 6)
    np.testing.assert_allclose(es.rayleigh_quotients(), es.eigenvalues, rtol=1e-8)
    M = mass_matrix(annulus)
    np.testing.assert_allclose(es.vectors @ (M @ es.vectors.T), np.eye(6), atol=1e-10)


def test_eigenvalues_match_eigsh(annulus):
    ops = fe_operators(annulus)
    I = ops.interior
    ref = spla.eigsh(ops.stiffness[I][:, I].tocsc(), 8, ops.mass[I][:, I].tocsc(), sigma=0,
                     which="LM", return_eigenvectors=False)
    np.testing.assert_allclose(eigenpairs(annulus, DIRICHLET_ALL, 8).eigenvalues, np.sort(ref), rtol=1e-8)


def test_annulus_lambda1_refined_dense():
    coarse = eigenpairs(build_mesh(annulus_spec(0.1)), DIRICHLET_ALL, 1).eigenvalues[0]
    fine_mesh = build_mesh(annulus_spec(0.05))
    ops = fe_operators(fine_mesh)
    I = ops.interior
    ref = spla.eigsh(ops.stiffness[I][:, I].tocsc(), 1, ops.mass[I][:, I].tocsc(), sigma=0,
                     which="LM", return_eigenvectors=False)[0]
    assert abs(coarse - ref) / ref < 0.02


@pytest.mark.parametrize("N", [10, 20])
def test_epsilon0_spectral_identity(annulus, N):
    es = eigenpairs(annulus, DIRICHLET_ALL, N + 1)
    est = estimate_epsilon0(es.vectors[:N], annulus, safety_factor=1.0)
    assert abs(est - 1 / es.eigenvalues[N]) <= 0.05 / es.eigenvalues[N]


def test_epsilon0_empty_basis(annulus):
    lam1 = eigenpairs(annulus, DIRICHLET_ALL, 1).eigenvalues[0]
    est = estimate_epsilon0(None, annulus, safety_factor=1.0)
    assert est == pytest.approx(1 / lam1, rel=0.05)


def test_epsilon0_full_space():
    m = disc_mesh(1.0, 0.25)
    es = eigenpairs(m, DIRICHLET_ALL, int(np.sum(m.vertex_flag == INTERIOR)) - 1)
    # complement the eigenbasis with the last interior direction
    M = mass_matrix(m)
    V = es.vectors
    rest = np.zeros(m.n_vertices)
    rest[m.vertex_flag == INTERIOR] = np.random.default_rng(0).standard_normal(np.sum(m.vertex_flag == INTERIOR))
    rest -= V.T @ (V @ (M @ rest))
    rest /= math.sqrt(rest @ (M @ rest))
    basis = np.vstack([V, rest])
    assert estimate_epsilon0(basis, m, safety_factor=1.0) <= 1e-10


def test_epsilon0_safety_scales(annulus):
    d = estimate_epsilon0_detail(None, annulus, 1.1)
    assert d.value == pytest.approx(1.1 * d.raw)


def test_inner_product_properties(annulus, rng):
    f = ScalarField(annulus, rng.standard_normal(annulus.n_vertices))
    assert l2_inner(f, f) > 0
    assert l2_inner(f * 0, f * 0) == 0


def test_area_from_unit_field():
    errs = []
    for h in (0.1, 0.05):
        m = build_mesh(annulus_spec(h))
        one = ScalarField(m, np.ones(m.n_vertices))
        errs.append(abs(l2_inner(one, one) - 3.75 * math.pi))
    assert errs[1] < errs[0] and errs[1] < 0.01


def test_mesh_mismatch(annulus, annulus_coarse):
    with pytest.raises(MeshMismatch):
        l2_inner(ScalarField(annulus, np.zeros(annulus.n_vertices)),
                 ScalarField(annulus_coarse, np.zeros(annulus_coarse.n_vertices)))


def test_field_csv_round_trip(tmp_path, annulus_coarse, rng):
    f = ScalarField(annulus_coarse, rng.standard_normal(annulus_coarse.n_vertices), "f")
    p = write_field_csv(f, tmp_path / "f.csv")
    np.testing.assert_array_equal(read_field_csv(annulus_coarse, p).values, f.values)


def test_element_gradient_linear(annulus_coarse):
    m = annulus_coarse
    g = element_gradient(m, 3 * m.vertices[:, 0] - 2 * m.vertices[:, 1])
    np.testing.assert_allclose(g, np.tile([3.0, -2.0], (m.n_triangles, 1)), atol=1e-11)
