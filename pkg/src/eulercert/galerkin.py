"""Galerkin space, the maps Lambda and Upsilon, the frozen Jacobian A and the
fixed-point iteration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .boundary import InflowData, smooth_step
from .elliptic import (DIRICHLET_ALL, MIXED, ScalarField, _m_orthonormalize,
                       dirichlet_solver, eigenpairs, mass_matrix)
from .errors import (MeshMismatch, NeighborhoodExit, SingularJacobian,
                     TransversalityLost)
from .geometry import SIGMA1, Mesh
from .transport import (PerturbationStack, TransversalityReport, VelocityField,
                        check_transversality, perp_nodal, solve_transport,
                        tangent_transport)

MIXED_EIGEN = "mixed-eigen"
DIRICHLET_EIGEN = "dirichlet-eigen"
TANGENT = "tangent"
FINITE_DIFFERENCE = "finite-difference"


# the space --------------------------------------------------------------------

@dataclass(eq=False)
class GalerkinSpace:
    mesh: Mesh
    basis: np.ndarray  # (N, nv), mass-orthonormal rows
    source: str
    eigenvalues: np.ndarray | None = None
    has_boundary_function: bool = False

    @property
    def N(self) -> int:
        return len(self.basis)

    @property
    def fields(self) -> list[ScalarField]:
        return [ScalarField(self.mesh, b, f"phi_{k}") for k, b in enumerate(self.basis)]

    @property
    def _MB(self) -> np.ndarray:
        if not hasattr(self, "_mb"):
            self._mb = (mass_matrix(self.mesh) @ self.basis.T).T
        return self._mb

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return self._MB @ values

    def synthesize(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u) @ self.basis

    def split(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = self.coefficients(values)
        return u, values - self.synthesize(u)

    def gram(self) -> np.ndarray:
        return self.basis @ self._MB.T


def boundary_matching_function(mesh: Mesh, h: InflowData, width: float = 0.5) -> np.ndarray:
    """Smooth nodal function equal to h on Sigma_1, vanishing beyond a collar."""
    v = mesh.vertices
    s = mesh.normalized_radius(v)
    d = 1.0 - s if mesh.curve_for(SIGMA1)[1] > 0 else s
    theta = np.arctan2(v[:, 1], v[:, 0])
    return h.value(theta) * (1.0 - smooth_step(np.clip(d, 0.0, None) / width))


def build_space(mesh: Mesh, N: int, kind: str = MIXED_EIGEN, h: InflowData | None = None,
                boundary_function: bool | None = None) -> GalerkinSpace:
    """Orthonormal basis of N fields.

    ``mixed-eigen``: eigenfunctions with Dirichlet data on Sigma_1 and Neumann
    data on Sigma_2, plus (by default) the boundary-matching function of h,
    orthonormalized last.  ``dirichlet-eigen``: the first N Dirichlet
    eigenfunctions.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if boundary_function is None:
        boundary_function = kind == MIXED_EIGEN
    phi0 = None
    if boundary_function and h is not None and not h.is_zero:
        phi0 = boundary_matching_function(mesh, h)
    n_eig = N - 1 if phi0 is not None else N
    bc = {MIXED_EIGEN: MIXED, DIRICHLET_EIGEN: DIRICHLET_ALL}.get(kind)
    if bc is None:
        raise ValueError(f"unknown basis kind {kind!r}")
    rows, lam = [], None
    if n_eig > 0:
        es = eigenpairs(mesh, bc, n_eig)
        rows.append(es.vectors)
        lam = es.eigenvalues
    basis = np.concatenate(rows) if rows else np.zeros((0, mesh.n_vertices))
    if phi0 is not None:
        M = mass_matrix(mesh)
        r = phi0.copy()
        for _ in range(2):
            if len(basis):
                r = r - basis.T @ ((M @ basis.T).T @ r)
        nrm = math.sqrt(r @ (M @ r))
        if nrm > 1e-10 * math.sqrt(phi0 @ (M @ phi0)):
            basis = np.concatenate([basis, (r / nrm)[None]])
        else:
            phi0 = None
    basis = _m_orthonormalize(mesh, basis)
    return GalerkinSpace(mesh, basis, kind, lam, phi0 is not None)


def project(space: GalerkinSpace, f: ScalarField) -> tuple[np.ndarray, ScalarField]:
    """(u, v) with u_j = <f, phi_j> and v = f - sum u_j phi_j."""
    if f.mesh is not space.mesh:
        raise MeshMismatch("field and space live on different meshes")
    u, v = space.split(f.values)
    return u, ScalarField(f.mesh, v, "V-part")


def star_norm(f, eta0: float, space: GalerkinSpace | None = None) -> float:
    """(|u|^2 + eta0 ||v||^2)^(1/2) for a field or a (u, v) pair."""
    if isinstance(f, tuple):
        u, v = f
        vv = v.values if isinstance(v, ScalarField) else np.asarray(v)
        mesh = v.mesh if isinstance(v, ScalarField) else space.mesh
    else:
        vals = f.values if isinstance(f, ScalarField) else np.asarray(f)
        u, vv = space.split(vals)
        mesh = space.mesh
    u = np.asarray(u, dtype=float)
    vn2 = float(vv @ (mass_matrix(mesh) @ vv))
    return math.sqrt(float(u @ u) + eta0 * max(vn2, 0.0))


def l2_norm(mesh: Mesh, values: np.ndarray) -> float:
    return math.sqrt(max(float(values @ (mass_matrix(mesh) @ values)), 0.0))


# Lambda -----------------------------------------------------------------------

@dataclass(eq=False)
class FixedPointProblem:
    """Everything Lambda needs: mesh, Psi_g, mu, h and tolerances."""

    mesh: Mesh
    mu: float
    h: InflowData
    psi_g: np.ndarray | None = None
    T_max: float = 50.0
    ode_tol: float = 1e-9
    poisson_tol: float = 1e-10
    transversality_samples: int = 128
    check_transversality: bool = True
    reference_c1: float | None = None
    n_lambda_calls: int = field(default=0, init=False)

    def __post_init__(self):
        if self.psi_g is None:
            self.psi_g = np.zeros(self.mesh.n_vertices)

    def phi(self, omega: np.ndarray) -> np.ndarray:
        return dirichlet_solver(self.mesh, "cg", self.poisson_tol).solve(omega)

    def velocity(self, omega: np.ndarray) -> VelocityField:
        total = self.phi(omega) + self.psi_g
        return VelocityField(self.mesh, perp_nodal(self.mesh, total), self.mu)

    def transversality(self, q: VelocityField, n: int | None = None) -> TransversalityReport:
        return check_transversality(q, self.h, n or self.transversality_samples, self.T_max, self.ode_tol)

    def check(self, q: VelocityField) -> TransversalityReport | None:
        if not self.check_transversality or self.h.is_zero:
            return None
        rep = self.transversality(q)
        floor = 0.5 * self.reference_c1 if self.reference_c1 else 0.0
        if not rep.passed or rep.c1 <= floor:
            raise TransversalityLost(
                f"transversality fails for the current iterate (c1 = {rep.c1:.3g}, "
                f"all exit Sigma_2: {rep.all_exit_sigma2})")
        return rep

    def Lambda(self, omega: np.ndarray) -> np.ndarray:
        self.n_lambda_calls += 1
        if self.h.is_zero:
            return np.zeros(self.mesh.n_vertices)
        q = self.velocity(omega)
        self.check(q)
        return solve_transport(q, self.h, self.mesh, self.T_max, self.ode_tol).values


def apply_Lambda(Omega: ScalarField, context: FixedPointProblem) -> ScalarField:
    """Transport after Poisson: Gamma(inv-Laplace Omega)."""
    if Omega.mesh is not context.mesh:
        raise MeshMismatch("field and problem live on different meshes")
    return ScalarField(Omega.mesh, context.Lambda(Omega.values), "Lambda(Omega)")


# A and gamma --------------------------------------------------------------------

@dataclass(eq=False)
class OperatorMatrix:
    entries: np.ndarray
    probe_scheme: str
    fd_step: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2)) if self.entries.size else 0.0

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.entries, delimiter=",", fmt="%.17g")
        return path


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def basis_velocity_stack(space: GalerkinSpace) -> np.ndarray:
    """(N, nv, 2) recovered grad-perp of inv-Laplace phi_j."""
    if not hasattr(space, "_qstack"):
        phis = dirichlet_solver(space.mesh, "direct").solve(space.basis.T).T
        space._qstack = perp_nodal(space.mesh, phis)
    return space._qstack


def assemble_A(space: GalerkinSpace, Omega0, context: FixedPointProblem, scheme: str = TANGENT,
               fd_step: float | None = None) -> OperatorMatrix:
    """Matrix of P D Lambda(Omega0) restricted to U, in the orthonormal basis."""
    om0 = _values(Omega0)
    N = space.N
    if context.h.is_zero or N == 0:
        return OperatorMatrix(np.zeros((N, N)), scheme, fd_step or 0.0)
    if scheme == TANGENT:
        q = context.velocity(om0)
        rep = context.check(q)
        stack = PerturbationStack(space.mesh, basis_velocity_stack(space))
        tb = tangent_transport(q, stack, context.h, None, context.T_max, context.ode_tol,
                               c1=rep.c1 if rep is not None else None)
        entries = space._MB @ tb.omega_tilde.T
        return OperatorMatrix(entries, TANGENT, 0.0)
    if scheme == FINITE_DIFFERENCE:
        eps = fd_step or 1e-4 * max(1.0, l2_norm(space.mesh, om0))
        cols = []
        for j in range(N):
            plus = context.Lambda(om0 + eps * space.basis[j])
            minus = context.Lambda(om0 - eps * space.basis[j])
            cols.append(space.coefficients((plus - minus) / (2 * eps)))
        return OperatorMatrix(np.stack(cols, axis=1), FINITE_DIFFERENCE, eps)
    raise ValueError(f"unknown probe scheme {scheme!r}")


class StabilityBound(NamedTuple):
    gamma: float
    sigma_min: float


def gamma_bound(A) -> StabilityBound:
    """gamma = 1 / sigma_min(I - A)."""
    E = A.entries if isinstance(A, OperatorMatrix) else np.asarray(A, dtype=float)
    if E.size == 0:
        return StabilityBound(1.0, 1.0)
    s = np.linalg.svd(np.eye(len(E)) - E, compute_uv=False)
    smin = float(s[-1])
    if smin < 1e-10:
        raise SingularJacobian(f"I - A is numerically singular (sigma_min = {smin:.3g})")
    return StabilityBound(1.0 / smin, smin)


# Upsilon and the iteration ---------------------------------------------------------

def _upsilon_from(lam: np.ndarray, om: np.ndarray, A: np.ndarray, space: GalerkinSpace) -> np.ndarray:
    u = space.coefficients(om)
    r = lam - space.synthesize(A @ u)
    ur, vr = space.split(r)
    return space.synthesize(np.linalg.solve(np.eye(len(A)) - A, ur)) + vr


def apply_Upsilon(Omega, A, space: GalerkinSpace, context: FixedPointProblem) -> ScalarField:
    """(I - A P)^(-1) (Lambda(Omega) - A P Omega)."""
    E = A.entries if isinstance(A, OperatorMatrix) else np.asarray(A, dtype=float)
    gamma_bound(E)
    om = _values(Omega)
    return ScalarField(space.mesh, _upsilon_from(context.Lambda(om), om, E, space), "Upsilon(Omega)")


@dataclass
class IterationResult:
    Omega_bar: ScalarField
    history: list[dict]
    final_residual: float
    converged: bool

    def ratios(self) -> list[float]:
        out = []
        for a, b in zip(self.history, self.history[1:]):
            if a.get("above_noise"):
                out.append(b["star_step"] / a["star_step"])
        return out

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write("n,star_step,l2_dist_from_Omega0,lambda_residual\n")
            for row in self.history:
                fh.write(f"{row['n']},{float(row['star_step'])!r},{float(row['l2_dist'])!r},"
                         f"{float(row['lambda_residual'])!r}\n")
        return path


def iterate(Omega0, A, space: GalerkinSpace, context: FixedPointProblem, eta0: float = 1.0,
            max_iter: int = 50, stop_tol: float = 1e-14, delta2: float | None = None) -> IterationResult:
    """Omega_{n+1} = Upsilon(Omega_n) with the frozen A.

    Stops when the star-norm step drops below ``stop_tol`` or below the
    round-off floor of the iterate.  With ``delta2`` set the iteration aborts
    if it leaves the L2 ball of that radius around Omega0.
    """
    E = A.entries if isinstance(A, OperatorMatrix) else np.asarray(A, dtype=float)
    gamma_bound(E)
    om0 = _values(Omega0).copy()
    om = om0.copy()
    mesh = space.mesh
    history: list[dict] = []
    converged = False
    for n in range(max_iter):
        lam = context.Lambda(om)
        new = _upsilon_from(lam, om, E, space)
        step = star_norm(new - om, eta0, space)
        dist = l2_norm(mesh, om - om0)
        floor = 1e3 * np.finfo(float).eps * max(l2_norm(mesh, om), 1e-300)
        history.append({"n": n, "star_step": step, "l2_dist": dist,
                        "lambda_residual": l2_norm(mesh, om - lam), "above_noise": step > floor})
        if delta2 is not None and dist > delta2:
            raise NeighborhoodExit(f"iterate {n} is {dist:.3g} from Omega0, beyond delta2 = {delta2:.3g}")
        om = new
        if step <= max(stop_tol, floor):
            converged = True
            break
    final = l2_norm(mesh, om - context.Lambda(om))
    if delta2 is not None and l2_norm(mesh, om - om0) > delta2:
        raise NeighborhoodExit("limit lies outside the delta2 ball")
    return IterationResult(ScalarField(mesh, om, "Omega_bar"), history, final, converged)


# Galerkin solve for Omega0 ------------------------------------------------------------

@dataclass
class GalerkinSolution:
    Omega0: ScalarField
    u: np.ndarray
    delta0: float
    iterations: int


def galerkin_solve(space: GalerkinSpace, context: FixedPointProblem, tol: float = 1e-13,
                   max_iter: int = 30) -> GalerkinSolution:
    """Solve u = P Lambda(u) by a chord iteration started from P Lambda(0).

    Stops at the relative tolerance or once the residual stops halving, which
    means it has reached the noise floor of the transport solve.
    """
    mesh = space.mesh
    u = space.coefficients(context.Lambda(np.zeros(mesh.n_vertices)))
    J = None
    it = 0
    prev = math.inf
    for it in range(1, max_iter + 1):
        om = space.synthesize(u)
        res = u - space.coefficients(context.Lambda(om))
        rn = float(np.linalg.norm(res))
        scale = max(float(np.linalg.norm(u)), 1e-300)
        if rn <= tol * scale or rn == 0 or rn > 0.5 * prev:
            break
        prev = rn
        if J is None:
            J = assemble_A(space, om, context, TANGENT).entries
        u = u - np.linalg.solve(np.eye(space.N) - J, res)
    om = space.synthesize(u)
    delta0 = l2_norm(mesh, om - space.synthesize(space.coefficients(context.Lambda(om))))
    return GalerkinSolution(ScalarField(mesh, om, "Omega0"), u, delta0, it)
