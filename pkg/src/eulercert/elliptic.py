"""P1 finite elements: Poisson and Laplace solves, gradients, eigenpairs and
the norm of the inverse Laplacian on the complement of a Galerkin space."""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .boundary import boundary_nodal
from .errors import (EigenFailure, MeshMismatch, PowerIterationStagnant,
                     SolverFailure)
from .geometry import INTERIOR, SIGMA1, Mesh, locate

DIRICHLET_ALL = "dirichlet-all"
MIXED = "mixed"


# fields -------------------------------------------------------------------

@dataclass(eq=False)
class ScalarField:
    """Continuous piecewise-linear function given by its nodal values."""

    mesh: Mesh
    values: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise MeshMismatch(
                f"field has {self.values.shape} values, mesh has {self.mesh.n_vertices} vertices")

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.mesh is not self.mesh:
                raise MeshMismatch("fields live on different meshes")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.mesh, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.mesh, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.mesh, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.mesh, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.mesh, self.values / self._other(other))

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def evaluate(self, points) -> np.ndarray:
        tri, bary, _ = locate(self.mesh, points)
        return np.einsum("ij,ij->i", self.values[self.mesh.triangles[tri]], bary)

    def gradient(self) -> "ElementwiseVectorField":
        return ElementwiseVectorField(self.mesh, element_gradient(self.mesh, self.values))

    def norm(self) -> float:
        return math.sqrt(max(l2_inner(self, self), 0.0))

    def copy(self, name: str | None = None) -> "ScalarField":
        return ScalarField(self.mesh, self.values.copy(), self.name if name is None else name, dict(self.meta))


@dataclass(eq=False)
class ElementwiseVectorField:
    """One constant 2-vector per triangle."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_triangles, 2):
            raise MeshMismatch("vector field does not match the triangle count")

    def divergence(self) -> np.ndarray:
        """Piecewise divergence; zero for constants on each element."""
        return np.zeros(self.mesh.n_triangles)

    def recovered(self) -> np.ndarray:
        """Continuous nodal field by area-weighted averaging over incident triangles."""
        return recover_nodal(self.mesh, self.values)


def element_gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """(nt, 2) gradient of the P1 interpolant of nodal ``values``."""
    return np.einsum("tij,ti->tj", mesh.basis_gradients, np.asarray(values)[mesh.triangles])


def recover_nodal(mesh: Mesh, elem: np.ndarray) -> np.ndarray:
    """Area-weighted nodal average of per-triangle vectors; (nv, d)."""
    elem = np.asarray(elem, dtype=float)
    ops = fe_operators(mesh)
    w = mesh.areas.reshape((-1,) + (1,) * (elem.ndim - 1)) * elem
    flat = w.reshape(mesh.n_triangles, -1)
    out = np.zeros((mesh.n_vertices, flat.shape[1]))
    for k in range(3):
        np.add.at(out, mesh.triangles[:, k], flat)
    out /= ops.vertex_area[:, None]
    return out.reshape((mesh.n_vertices,) + elem.shape[1:])


def perp_gradient(f: ScalarField) -> ElementwiseVectorField:
    """(-d2 f, d1 f) on every triangle."""
    g = element_gradient(f.mesh, f.values)
    return ElementwiseVectorField(f.mesh, np.stack([-g[:, 1], g[:, 0]], axis=-1))


# assembly -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FEOperators:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    vertex_area: np.ndarray
    interior: np.ndarray


_CACHE: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def _cache(mesh: Mesh) -> dict:
    c = _CACHE.get(mesh)
    if c is None:
        c = {}
        _CACHE[mesh] = c
    return c


def fe_operators(mesh: Mesh) -> FEOperators:
    c = _cache(mesh)
    if "ops" not in c:
        t = mesh.triangles
        G = mesh.basis_gradients
        area = mesh.areas
        kl = area[:, None, None] * np.einsum("tik,tjk->tij", G, G)
        ml = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        n = mesh.n_vertices
        K = sp.coo_matrix((kl.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        M = sp.coo_matrix((ml.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        K = 0.5 * (K + K.T)
        M = 0.5 * (M + M.T)
        va = np.zeros(n)
        for k in range(3):
            np.add.at(va, t[:, k], area)
        c["ops"] = FEOperators(K.tocsr(), M.tocsr(), va, np.flatnonzero(mesh.vertex_flag == INTERIOR))
    return c["ops"]


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    return fe_operators(mesh).mass


# linear solves ------------------------------------------------------------

def pcg(A, b, tol: float = 1e-10, maxiter: int | None = None, x0=None) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients; relative residual stopping."""
    n = len(b)
    maxiter = maxiter or int(50 * math.sqrt(n)) + 1
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for k in range(maxiter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x, k
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x, maxiter
    raise SolverFailure(f"CG did not reach relative residual {tol:g} in {maxiter} iterations")


class DirichletSolver:
    """Solves -K u = M f (i.e. Laplace u = f) with zero Dirichlet data.

    ``method`` is ``"cg"`` (default, Jacobi PCG) or ``"direct"`` (sparse LU,
    used for many right-hand sides).
    """

    def __init__(self, mesh: Mesh, method: str = "cg", tol: float = 1e-10):
        self.mesh = mesh
        self.method = method
        self.tol = tol
        ops = fe_operators(mesh)
        self.idx = ops.interior
        self.K_II = ops.stiffness[self.idx][:, self.idx].tocsc()
        self.M = ops.mass
        self._lu = None
        self.last_iterations = 0

    @property
    def lu(self):
        if self._lu is None:
            self._lu = splu(self.K_II)
        return self._lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Nodal Phi with Laplace Phi = rhs and Phi = 0 on the boundary.

        Accepts (nv,) or (nv, k) right-hand sides.
        """
        rhs = np.asarray(rhs, dtype=float)
        b = -(self.M @ rhs)[self.idx]
        out = np.zeros(rhs.shape)
        if not np.any(b):
            return out
        if self.method == "direct" or rhs.ndim == 2:
            out[self.idx] = self.lu.solve(b)
        else:
            x, its = pcg(self.K_II, b, self.tol)
            self.last_iterations = its
            out[self.idx] = x
        return out


def dirichlet_solver(mesh: Mesh, method: str = "cg", tol: float = 1e-10) -> DirichletSolver:
    c = _cache(mesh)
    key = ("dirichlet", method, tol)
    if key not in c:
        c[key] = DirichletSolver(mesh, method, tol)
    return c[key]


def solve_poisson_dirichlet(mesh: Mesh, rhs: ScalarField, tol: float = 1e-10) -> ScalarField:
    """Phi with Laplace Phi = rhs in D and Phi = 0 on the boundary."""
    if rhs.mesh is not mesh:
        raise MeshMismatch("rhs lives on a different mesh")
    return ScalarField(mesh, dirichlet_solver(mesh, "cg", tol).solve(rhs.values), "Phi")


def solve_harmonic_extension(mesh: Mesh, g, tol: float = 1e-10) -> ScalarField:
    """Discrete harmonic function with boundary values g."""
    gb = boundary_nodal(mesh, g)
    ops = fe_operators(mesh)
    I = ops.interior
    B = np.flatnonzero(mesh.vertex_flag != INTERIOR)
    out = gb.copy()
    if len(I):
        b = -(ops.stiffness[I][:, B] @ gb[B])
        x, _ = pcg(ops.stiffness[I][:, I].tocsr(), b, tol)
        out[I] = x
    return ScalarField(mesh, out, "Psi_g")


def l2_inner(f: ScalarField, g: ScalarField) -> float:
    if f.mesh is not g.mesh:
        raise MeshMismatch("fields live on different meshes")
    return float(f.values @ (mass_matrix(f.mesh) @ g.values))


# eigenpairs ---------------------------------------------------------------

@dataclass(eq=False)
class EigenSystem:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # (K, nv), mass-orthonormal
    bc_kind: str
    mesh: Mesh

    @property
    def eigenfields(self) -> list[ScalarField]:
        return [ScalarField(self.mesh, v, f"phi_{k + 1}") for k, v in enumerate(self.vectors)]

    def rayleigh_quotients(self) -> np.ndarray:
        ops = fe_operators(self.mesh)
        V = self.vectors
        num = np.einsum("ij,ij->i", V, (ops.stiffness @ V.T).T)
        den = np.einsum("ij,ij->i", V, (ops.mass @ V.T).T)
        return num / den


def _free_dofs(mesh: Mesh, bc: str) -> np.ndarray:
    if bc == DIRICHLET_ALL:
        return np.flatnonzero(mesh.vertex_flag == INTERIOR)
    if bc == MIXED:
        return np.flatnonzero(mesh.vertex_flag != SIGMA1)
    raise ValueError(f"unknown boundary condition kind {bc!r}")


def eigenpairs(mesh: Mesh, bc: str, K: int, tol: float = 1e-12, max_iter: int = 500,
               seed: int = 0) -> EigenSystem:
    """Lowest K eigenpairs by inverse subspace iteration with Rayleigh-Ritz.

    ``bc`` is ``"dirichlet-all"`` or ``"mixed"`` (Dirichlet on Sigma_1,
    natural Neumann on Sigma_2).
    """
    c = _cache(mesh)
    key = ("eig", bc, K)
    if key in c:
        return c[key]
    free = _free_dofs(mesh, bc)
    n = len(free)
    if K < 1 or K >= n:
        raise EigenFailure(f"need 1 <= K < {n}")
    ops = fe_operators(mesh)
    A = ops.stiffness[free][:, free].tocsc()
    B = ops.mass[free][:, free].tocsr()
    lu = splu(A)
    p = min(n, max(2 * K, K + 8))
    X = np.random.default_rng(seed).standard_normal((n, p))
    prev = None
    for it in range(max_iter):
        Y = lu.solve(B @ X)
        Ar = Y.T @ (A @ Y)
        Br = Y.T @ (B @ Y)
        w, S = sla.eigh(0.5 * (Ar + Ar.T), 0.5 * (Br + Br.T))
        X = Y @ S
        lam = w[:K]
        if prev is not None and np.max(np.abs(lam - prev) / lam) < tol:
            break
        prev = lam
    else:
        raise EigenFailure("subspace iteration did not converge")
    X = X[:, :K]
    # fix signs for reproducibility: largest-magnitude entry positive
    piv = np.argmax(np.abs(X), axis=0)
    X = X * np.sign(X[piv, np.arange(K)])
    vec = np.zeros((K, mesh.n_vertices))
    vec[:, free] = X.T
    es = EigenSystem(np.asarray(lam, dtype=float), _m_orthonormalize(mesh, vec), bc, mesh)
    es.eigenvalues = es.rayleigh_quotients()
    c[key] = es
    return es


def _m_orthonormalize(mesh: Mesh, V: np.ndarray) -> np.ndarray:
    """Mass-orthonormalize rows via Cholesky of the Gram matrix (two passes)."""
    M = mass_matrix(mesh)
    for _ in range(2):
        G = V @ (M @ V.T)
        L = np.linalg.cholesky(0.5 * (G + G.T))
        V = np.linalg.solve(L, V)
    return V


# epsilon_0 ---------------------------------------------------------------

@dataclass(frozen=True)
class Epsilon0Estimate:
    value: float
    raw: float
    safety_factor: float
    iterations: int
    direction: np.ndarray = field(repr=False)


def estimate_epsilon0_detail(basis: np.ndarray | None, mesh: Mesh, safety_factor: float = 1.1,
                             tol: float = 1e-10, max_iter: int = 2000, block: int = 6,
                             seed: int = 0) -> Epsilon0Estimate:
    """Norm of inv(Laplace) restricted to the L2 complement of span(basis).

    Block power iteration on the M-self-adjoint operator
    (I-P) G G (I-P) with G the discrete Dirichlet inverse Laplacian.
    ``basis`` rows must be mass-orthonormal; None or an empty array means
    U = {0}.
    """
    M = mass_matrix(mesh)
    solver = dirichlet_solver(mesh, "direct")
    B = np.zeros((0, mesh.n_vertices)) if basis is None else np.atleast_2d(np.asarray(basis, dtype=float))
    if B.size == 0:
        B = np.zeros((0, mesh.n_vertices))
    MB = (M @ B.T).T if len(B) else B

    def proj_out(X):
        if len(B) == 0:
            return X
        return X - B.T @ (MB @ X)

    def apply(X):
        Y = proj_out(X)
        Y = solver.solve(solver.solve(Y))
        return proj_out(Y)

    rng = np.random.default_rng(seed)
    X0 = rng.standard_normal((mesh.n_vertices, block))
    # round-off floor: theta at this level relative to the unprojected operator is zero
    G0 = solver.solve(solver.solve(X0))
    floor = 1e-20 * float(np.max(np.einsum("ij,ij->j", G0, M @ G0) / np.einsum("ij,ij->j", X0, M @ X0)))
    X = proj_out(X0)
    prev = None
    theta = 0.0
    for it in range(1, max_iter + 1):
        G = X.T @ (M @ X)
        nrm = math.sqrt(max(np.max(np.diag(G)), 0.0))
        if nrm < 1e-300:
            return Epsilon0Estimate(0.0, 0.0, safety_factor, it, np.zeros(mesh.n_vertices))
        try:
            L = np.linalg.cholesky(0.5 * (G + G.T))
            X = np.linalg.solve(L, X.T).T
        except np.linalg.LinAlgError:
            X, _ = np.linalg.qr(X)
        Y = apply(X)
        H = X.T @ (M @ Y)
        w, S = np.linalg.eigh(0.5 * (H + H.T))
        theta = float(w[-1])
        X = Y @ S
        if theta <= max(floor, 1e-300):
            return Epsilon0Estimate(0.0, 0.0, safety_factor, it, np.zeros(mesh.n_vertices))
        if prev is not None and abs(theta - prev) <= tol * theta:
            v = X[:, -1]
            v = v / math.sqrt(v @ (M @ v))
            raw = math.sqrt(theta)
            return Epsilon0Estimate(raw * safety_factor, raw, safety_factor, it, v)
        prev = theta
    raise PowerIterationStagnant(f"power iteration did not settle in {max_iter} steps")


def estimate_epsilon0(eig_or_basis, mesh: Mesh, safety_factor: float = 1.1, **kw) -> float:
    """Safety-scaled estimate of the L2 operator norm of inv(Laplace)(I - P)."""
    if hasattr(eig_or_basis, "basis"):
        basis = eig_or_basis.basis
    elif hasattr(eig_or_basis, "vectors"):
        basis = eig_or_basis.vectors
    else:
        basis = eig_or_basis
    return estimate_epsilon0_detail(basis, mesh, safety_factor, **kw).value


# csv io -------------------------------------------------------------------

def write_field_csv(f: ScalarField, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("id,value\n")
        for k, v in enumerate(f.values):
            fh.write(f"{k},{float(v)!r}\n")
    return path


def read_field_csv(mesh: Mesh, path, name: str = "") -> ScalarField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = np.zeros(mesh.n_vertices)
    if len(data) != mesh.n_vertices:
        raise MeshMismatch("CSV row count does not match the mesh")
    values[data[:, 0].astype(int)] = data[:, 1]
    return ScalarField(mesh, values, name)


def write_eigensystem_csv(es: EigenSystem, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "eigenvalues.csv"]
    with open(paths[0], "w") as fh:
        fh.write("k,lambda\n")
        for k, lam in enumerate(es.eigenvalues, start=1):
            fh.write(f"{k},{float(lam)!r}\n")
    for f in es.eigenfields:
        paths.append(write_field_csv(f, directory / f"{f.name}.csv"))
    return paths
