"""Characteristics of q = grad-perp(Phi + Psi_g) - mu x: tracing, the
transversality check, the transport solve and its linearization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary import InflowData
from .elliptic import ScalarField, element_gradient, recover_nodal
from .errors import DegenerateExit, MeshMismatch, TraceFailure
from .geometry import SIGMA1, SIGMA2, Mesh, locate
from .integrator import (FAILED, HIT, OUTSIDE, STAGNATION, TIMEOUT,
                         integrate_batch)

BACKWARD = "backward"
FORWARD = "forward"

HIT_SIGMA1 = "hit_sigma1"
HIT_SIGMA2 = "hit_sigma2"
OUTCOME_TIMEOUT = "timeout"
OUTCOME_STAGNATION = "stagnation"
OUTCOME_FAILED = "failed"
OUTCOME_OUTSIDE = "outside"


# analytic fields --------------------------------------------------------------

class AnalyticField:
    """Closed-form vector field with its Jacobian."""

    def __init__(self, value, jacobian=None, name: str = "analytic"):
        self._value = value
        self._jac = jacobian
        self.name = name

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._value(x), dtype=float)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        if self._jac is not None:
            return np.asarray(self._jac(x), dtype=float)
        eps = 1e-6
        cols = []
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = eps
            cols.append((self.value(x + dx) - self.value(x - dx)) / (2 * eps))
        return np.stack(cols, axis=-1)

    def scaled(self, c: float) -> "AnalyticField":
        return AnalyticField(lambda x: c * self.value(x), lambda x: c * self.jacobian(x), self.name)


def linear_field(mu: float) -> AnalyticField:
    """v(x) = -mu x."""
    return AnalyticField(lambda x: -mu * x,
                         lambda x: np.broadcast_to(-mu * np.eye(2), (len(x), 2, 2)).copy(),
                         "linear")


def radial_unit_field() -> AnalyticField:
    """x/|x|, smooth away from the origin."""

    def val(x):
        r = np.linalg.norm(x, axis=1, keepdims=True)
        return x / r

    def jac(x):
        r = np.linalg.norm(x, axis=1)
        u = x / r[:, None]
        return (np.eye(2)[None] - np.einsum("ni,nj->nij", u, u)) / r[:, None, None]

    return AnalyticField(val, jac, "radial")


def rotation_field(profile=None) -> AnalyticField:
    """f(|x|) (-x2, x1): tangent to every circle centred at the origin."""
    f = profile or (lambda r: np.ones_like(r))

    def val(x):
        r = np.linalg.norm(x, axis=1)
        return f(r)[:, None] * np.stack([-x[:, 1], x[:, 0]], axis=-1)

    return AnalyticField(val, None, "rotation")


@dataclass(frozen=True)
class FourierModeField:
    """sum_k a_k cos(k.x + phase_k) c_k with c_k = perp(k) (divergence free) or k.

    Random smooth perturbations for the tangent and audit checks; the
    Jacobian is exact.
    """

    wavevectors: np.ndarray
    directions: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    name: str = "fourier"

    def value(self, x):
        arg = x @ self.wavevectors.T + self.phases
        return (np.cos(arg) * self.amplitudes) @ self.directions

    def jacobian(self, x):
        arg = x @ self.wavevectors.T + self.phases
        w = -np.sin(arg) * self.amplitudes
        return np.einsum("nk,ki,kj->nij", w, self.directions, self.wavevectors)

    def scaled(self, c: float) -> "FourierModeField":
        return FourierModeField(self.wavevectors, self.directions, self.amplitudes * c, self.phases, self.name)


def random_smooth_field(rng: np.random.Generator, n_modes: int = 6, k_max: float = 3.0,
                        divergence_free_fraction: float = 0.5) -> FourierModeField:
    k = rng.uniform(-k_max, k_max, size=(n_modes, 2))
    perp = np.stack([-k[:, 1], k[:, 0]], axis=-1)
    use_perp = rng.random(n_modes) < divergence_free_fraction
    dirs = np.where(use_perp[:, None], perp, k)
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / np.where(norms > 0, norms, 1.0)
    amps = rng.normal(size=n_modes) / math.sqrt(n_modes)
    phases = rng.uniform(0, 2 * math.pi, size=n_modes)
    return FourierModeField(k, dirs, amps, phases)


# the velocity field -------------------------------------------------------------

class VelocityField:
    """q(x) = P1 nodal part + sum of analytic parts.

    The nodal part is the continuous recovery of grad-perp(Phi + Psi_g), so
    its Jacobian is constant on each triangle; the -mu x term is exact.
    """

    def __init__(self, mesh: Mesh, nodal: np.ndarray | None = None, mu: float = 0.0,
                 extras: tuple = ()):
        self.mesh = mesh
        self.nodal = np.zeros((mesh.n_vertices, 2)) if nodal is None else np.asarray(nodal, dtype=float)
        if self.nodal.shape != (mesh.n_vertices, 2):
            raise MeshMismatch("nodal velocity does not match the mesh")
        self.mu = float(mu)
        self.extras = tuple(extras)
        self.has_discrete = bool(np.any(self.nodal))
        self.elem_jac = None
        if self.has_discrete:
            g0 = element_gradient(mesh, self.nodal[:, 0])
            g1 = element_gradient(mesh, self.nodal[:, 1])
            self.elem_jac = np.stack([g0, g1], axis=1)

    def with_extra(self, extra, scale: float = 1.0) -> "VelocityField":
        extra = extra.scaled(scale) if scale != 1.0 else extra
        return VelocityField(self.mesh, self.nodal, self.mu, self.extras + (extra,))

    def with_nodal(self, nodal: np.ndarray, scale: float = 1.0) -> "VelocityField":
        return VelocityField(self.mesh, self.nodal + scale * nodal, self.mu, self.extras)

    def locate(self, x):
        return locate(self.mesh, x)

    def value(self, x: np.ndarray, loc=None) -> np.ndarray:
        x = np.atleast_2d(x)
        out = -self.mu * x
        if self.has_discrete:
            tri, bary, _ = loc if loc is not None else locate(self.mesh, x)
            out = out + np.einsum("nkj,nk->nj", self.nodal[self.mesh.triangles[tri]], bary)
        for e in self.extras:
            out = out + e.value(x)
        return out

    def jacobian(self, x: np.ndarray, loc=None) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.broadcast_to(-self.mu * np.eye(2), (len(x), 2, 2)).copy()
        if self.has_discrete:
            tri = (loc if loc is not None else locate(self.mesh, x))[0]
            out += self.elem_jac[tri]
        for e in self.extras:
            out += e.jacobian(x)
        return out

    def value_and_jacobian(self, x):
        x = np.atleast_2d(x)
        loc = locate(self.mesh, x) if self.has_discrete else None
        return self.value(x, loc), self.jacobian(x, loc), loc

    __call__ = value


def make_q(Phi: ScalarField, Psi_g: ScalarField | None, mu: float) -> VelocityField:
    """Velocity grad-perp(Phi + Psi_g) - mu x."""
    if not mu > 0.5:
        raise ValueError(f"mu must exceed 1/2, got {mu}")
    mesh = Phi.mesh
    total = Phi.values.copy()
    if Psi_g is not None:
        if Psi_g.mesh is not mesh:
            raise MeshMismatch("Phi and Psi_g live on different meshes")
        total = total + Psi_g.values
    return VelocityField(mesh, perp_nodal(mesh, total), mu)


def perp_nodal(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Recovered nodal grad-perp of one (nv,) or several (k, nv) nodal fields."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        if not np.any(values):
            return np.zeros((mesh.n_vertices, 2))
        g = element_gradient(mesh, values)
        return recover_nodal(mesh, np.stack([-g[:, 1], g[:, 0]], axis=-1))
    G = np.einsum("tij,kti->ktj", mesh.basis_gradients, values[:, mesh.triangles])
    P = np.stack([-G[..., 1], G[..., 0]], axis=-1)  # (k, nt, 2)
    rec = recover_nodal(mesh, np.moveaxis(P, 0, 1))  # (nv, k, 2)
    return np.moveaxis(rec, 1, 0)


# events -------------------------------------------------------------------------

def _events(mesh: Mesh):
    return mesh.level_sets, mesh.level_set_gradients


# tracing ------------------------------------------------------------------------

@dataclass
class CharacteristicTrace:
    start: np.ndarray
    direction: str
    outcome: str
    exit_time: float
    exit_point: np.ndarray
    label: int | None = None
    samples: np.ndarray | None = None

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = self.samples if self.samples is not None else np.zeros((0, 3))
        with open(path, "w") as fh:
            fh.write("t,x,y\n")
            for t, x, y in rows:
                fh.write(f"{float(t)!r},{float(x)!r},{float(y)!r}\n")
        return path


@dataclass
class TraceBatch:
    """Vectorized trace results, one row per start point."""

    starts: np.ndarray
    direction: str
    status: np.ndarray
    label: np.ndarray  # SIGMA1 / SIGMA2 for hits, 0 otherwise
    curve: np.ndarray
    time: np.ndarray
    exit_points: np.ndarray
    state: np.ndarray
    paths: list | None = None

    def outcome(self, i: int) -> str:
        s = self.status[i]
        if s == HIT:
            return HIT_SIGMA1 if self.label[i] == SIGMA1 else HIT_SIGMA2
        return {TIMEOUT: OUTCOME_TIMEOUT, STAGNATION: OUTCOME_STAGNATION, FAILED: OUTCOME_FAILED,
                OUTSIDE: OUTCOME_OUTSIDE}[int(s)]

    def hits(self, label: int) -> np.ndarray:
        return (self.status == HIT) & (self.label == label)

    def single(self, i: int) -> CharacteristicTrace:
        samples = np.array(self.paths[i]) if self.paths is not None else None
        lab = int(self.label[i]) if self.status[i] == HIT else None
        return CharacteristicTrace(self.starts[i].copy(), self.direction, self.outcome(i),
                                   float(self.time[i]), self.exit_points[i].copy(), lab, samples)


def _sign(direction: str) -> float:
    if direction == BACKWARD:
        return -1.0
    if direction == FORWARD:
        return 1.0
    raise ValueError(f"direction must be {BACKWARD!r} or {FORWARD!r}")


def trace_batch(q: VelocityField, points, direction: str = BACKWARD, T_max: float = 50.0,
                tol: float = 1e-9, record: bool = False) -> TraceBatch:
    sgn = _sign(direction)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ev, evg = _events(q.mesh)
    res = integrate_batch(lambda y: sgn * q.value(y), pts, T_max, tol=tol, events=ev,
                          event_grads=evg, record=record)
    label = np.zeros(len(pts), dtype=np.int8)
    hit = res.status == HIT
    label[hit] = q.mesh.label_of_curve(res.curve[hit])
    return TraceBatch(pts, direction, res.status, label, res.curve, res.time, res.state[:, :2].copy(),
                      res.state, res.paths)


def trace(q: VelocityField, y, direction: str = BACKWARD, T_max: float = 50.0,
          tol: float = 1e-9, record: bool = True) -> CharacteristicTrace:
    """Trace one characteristic; failures come back as an outcome, not an exception."""
    return trace_batch(q, np.reshape(np.asarray(y, dtype=float), (1, 2)), direction, T_max, tol,
                       record).single(0)


# transversality -------------------------------------------------------------------

@dataclass
class TransversalityReport:
    c1: float
    T_star: float
    all_exit_sigma2: bool
    samples_checked: int
    worst_entry: tuple
    worst_exit: tuple
    T_max: float
    entry_min: float = math.inf
    exit_min: float = math.inf
    n_failed: int = 0
    exit_points: np.ndarray | None = field(default=None, repr=False)
    exit_times: np.ndarray | None = field(default=None, repr=False)
    start_points: np.ndarray | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.c1 > 0 and self.all_exit_sigma2 and self.T_star < self.T_max

    def to_dict(self) -> dict:
        def pt(w):
            return {"point": [float(v) for v in w[0]], "value": float(w[1])} if w[0] is not None else None
        return {
            "c1": _jsonable(self.c1),
            "T_star": float(self.T_star),
            "all_exit_sigma2": bool(self.all_exit_sigma2),
            "samples_checked": int(self.samples_checked),
            "worst_entry": pt(self.worst_entry),
            "worst_exit": pt(self.worst_exit),
            "T_max": float(self.T_max),
            "passed": bool(self.passed),
        }


def _jsonable(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def sigma1_samples(mesh: Mesh, h: InflowData, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Points on the closed set Sigma_1 intersected with Supp(h), and their angles."""
    theta = h.support_thetas(n)
    curve, _ = mesh.curve_for(SIGMA1)
    return curve.point(theta).reshape(-1, 2), theta


def check_transversality(q: VelocityField, h: InflowData, n_samples: int = 512, T_max: float = 50.0,
                         tol: float = 1e-9) -> TransversalityReport:
    """Entry and exit margins of forward characteristics from Sigma_1 and Supp(h)."""
    mesh = q.mesh
    pts, _ = sigma1_samples(mesh, h, n_samples)
    if len(pts) == 0:
        return TransversalityReport(math.inf, 0.0, True, 0, (None, math.inf), (None, math.inf), T_max)
    c_idx = [k for k, (_, _, lab) in enumerate(mesh.curves) if lab == SIGMA1][0]
    n_in = mesh.outward_normals(pts, c_idx)
    entry = -np.einsum("ij,ij->i", n_in, q.value(pts))
    tb = trace_batch(q, pts, FORWARD, T_max, tol)
    ok = tb.hits(SIGMA2)
    exit_vals = np.full(len(pts), -np.inf)
    if np.any(ok):
        z = tb.exit_points[ok]
        n_out = mesh.outward_normals(z, tb.curve[ok])
        exit_vals[ok] = np.einsum("ij,ij->i", n_out, q.value(z))
    ie = int(np.argmin(entry))
    entry_min = float(entry[ie])
    if np.any(ok):
        okk = np.flatnonzero(ok)
        ix = okk[int(np.argmin(exit_vals[ok]))]
        exit_min = float(exit_vals[ix])
        worst_exit = (tb.exit_points[ix].copy(), exit_min)
    else:
        exit_min = -math.inf
        worst_exit = (None, -math.inf)
    c1 = min(entry_min, exit_min)
    T_star = float(np.max(tb.time[ok])) if np.any(ok) else math.inf
    if not np.all(ok):
        T_star = max(T_star, float(np.max(tb.time))) if np.any(ok) else T_star
    return TransversalityReport(
        c1=float(c1), T_star=T_star, all_exit_sigma2=bool(np.all(ok)), samples_checked=len(pts),
        worst_entry=(pts[ie].copy(), entry_min), worst_exit=worst_exit, T_max=T_max,
        entry_min=entry_min, exit_min=exit_min, n_failed=int(np.sum(~ok)),
        exit_points=tb.exit_points, exit_times=tb.time, start_points=pts,
    )


# transport ------------------------------------------------------------------------

def _inflow_values(tb: TraceBatch, h: InflowData) -> np.ndarray:
    vals = np.zeros(len(tb.time))
    hit = tb.hits(SIGMA1)
    if np.any(hit):
        xi = tb.exit_points[hit]
        vals[hit] = np.exp(tb.time[hit]) * h.value(np.arctan2(xi[:, 1], xi[:, 0]))
    return vals


def solve_transport(q: VelocityField, h: InflowData, mesh: Mesh | None = None, T_max: float = 50.0,
                    tol: float = 1e-9) -> ScalarField:
    """Omega(y) = exp(tau(y)) h(xi(y)) on D*, 0 elsewhere, at every vertex."""
    mesh = mesh or q.mesh
    if mesh is not q.mesh:
        raise MeshMismatch("velocity field lives on a different mesh")
    if h.is_zero:
        out = ScalarField(mesh, np.zeros(mesh.n_vertices), "Omega")
        out.meta.update(timeouts=0, stagnations=0, failures=0, timeout_vertices=np.zeros(0, dtype=int))
        return out
    tb = trace_batch(q, mesh.vertices, BACKWARD, T_max, tol)
    vals = _inflow_values(tb, h)
    out = ScalarField(mesh, vals, "Omega")
    out.meta.update(
        timeouts=int(np.sum(tb.status == TIMEOUT)),
        stagnations=int(np.sum(tb.status == STAGNATION)),
        failures=int(np.sum((tb.status == FAILED) | (tb.status == OUTSIDE))),
        timeout_vertices=np.flatnonzero(tb.status == TIMEOUT),
        trace=tb,
    )
    return out


# linearization ----------------------------------------------------------------------

class PerturbationStack:
    """k perturbation fields evaluated together: nodal P1 parts and/or analytic parts."""

    def __init__(self, mesh: Mesh, nodal: np.ndarray | None = None, analytic: list | None = None):
        self.mesh = mesh
        self.nodal = None if nodal is None else np.asarray(nodal, dtype=float)
        self.analytic = list(analytic) if analytic is not None else None
        k1 = 0 if self.nodal is None else len(self.nodal)
        k2 = 0 if self.analytic is None else len(self.analytic)
        if self.nodal is not None and self.analytic is not None and k1 != k2:
            raise ValueError("nodal and analytic parts must have the same count")
        self.k = max(k1, k2)

    def value(self, x, loc=None) -> np.ndarray:
        out = np.zeros((self.k, len(x), 2))
        if self.nodal is not None:
            tri, bary, _ = loc if loc is not None else locate(self.mesh, x)
            vals = self.nodal[:, self.mesh.triangles[tri]]  # (k, n, 3, 2)
            out += np.einsum("knij,ni->knj", vals, bary)
        if self.analytic is not None:
            for j, f in enumerate(self.analytic):
                if f is not None:
                    out[j] += f.value(x)
        return out


@dataclass
class TangentState:
    w: np.ndarray
    tau_tilde: float
    xi_tilde: np.ndarray
    omega_tilde: float
    w_samples: np.ndarray | None = None


@dataclass
class TangentBatch:
    trace: TraceBatch
    w: np.ndarray          # (k, n, 2) at the exit time
    tau_tilde: np.ndarray  # (k, n)
    xi_tilde: np.ndarray   # (k, n, 2)
    omega_tilde: np.ndarray  # (k, n)
    normal_speed: np.ndarray  # (n,) <n, q(xi)> at Sigma_1 exits, nan elsewhere


def tangent_transport(q: VelocityField, perturbations: PerturbationStack, h: InflowData,
                      points=None, T_max: float = 50.0, tol: float = 1e-9,
                      c1: float | None = None) -> TangentBatch:
    """First-order change of the transport solution for each perturbation.

    Integrates x' = -q(x), w' = -Dq(x) w - qt(x) jointly (error control on x
    only, so x follows the base trace step for step) and evaluates the exit
    time shift, exit point shift and solution derivative.
    """
    mesh = q.mesh
    pts = mesh.vertices if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    n, k = len(pts), perturbations.k

    def rhs(Y):
        x = Y[:, :2]
        loc = locate(mesh, x) if (q.has_discrete or perturbations.nodal is not None) else None
        v = q.value(x, loc)
        J = q.jacobian(x, loc)
        W = Y[:, 2:].reshape(len(Y), k, 2)
        qt = perturbations.value(x, loc)  # (k, m, 2)
        dW = -np.einsum("mij,mkj->mki", J, W) - np.moveaxis(qt, 0, 1)
        return np.concatenate([-v, dW.reshape(len(Y), 2 * k)], axis=1)

    y0 = np.concatenate([pts, np.zeros((n, 2 * k))], axis=1)
    ev, evg = _events(mesh)
    res = integrate_batch(rhs, y0, T_max, tol=tol, events=ev, event_grads=evg, err_dims=2)
    label = np.zeros(n, dtype=np.int8)
    hit = res.status == HIT
    label[hit] = mesh.label_of_curve(res.curve[hit])
    tb = TraceBatch(pts, BACKWARD, res.status, label, res.curve, res.time, res.state[:, :2].copy(), res.state)

    W = np.moveaxis(res.state[:, 2:].reshape(n, k, 2), 1, 0)
    tau_t = np.zeros((k, n))
    xi_t = np.zeros((k, n, 2))
    om_t = np.zeros((k, n))
    nspeed = np.full(n, np.nan)
    s1 = tb.hits(SIGMA1)
    if np.any(s1) and k:
        xi = tb.exit_points[s1]
        nrm = mesh.outward_normals(xi, tb.curve[s1])
        qxi = q.value(xi)
        nq = np.einsum("ij,ij->i", nrm, qxi)
        nspeed[s1] = nq
        if c1 is not None and np.any(np.abs(nq) < 0.5 * c1):
            raise DegenerateExit("characteristic reaches Sigma_1 with normal speed below c1/2")
        w = W[:, s1]
        tt = np.einsum("kij,ij->ki", w, nrm) / nq
        xt = w - tt[..., None] * qxi[None]
        theta = np.arctan2(xi[:, 1], xi[:, 0])
        r2 = np.einsum("ij,ij->i", xi, xi)
        grad_theta = np.stack([-xi[:, 1], xi[:, 0]], axis=-1) / r2[:, None]
        et = np.exp(tb.time[s1])
        hv, dh = h.value(theta), h.dtheta(theta)
        om = tt * et * hv + et * dh * np.einsum("kij,ij->ki", xt, grad_theta)
        tau_t[:, s1], xi_t[:, s1], om_t[:, s1] = tt, xt, om
    return TangentBatch(tb, W, tau_t, xi_t, om_t, nspeed)


def tangent_solve(q: VelocityField, q_tilde, base: CharacteristicTrace, h: InflowData,
                  T_max: float = 50.0, tol: float = 1e-9, c1: float | None = None) -> TangentState:
    """Linearized characteristic for a single start point (base must hit Sigma_1)."""
    if base.outcome != HIT_SIGMA1:
        raise TraceFailure("tangent_solve needs a base trace that reaches Sigma_1")
    if isinstance(q_tilde, VelocityField):
        stack = PerturbationStack(q.mesh, q_tilde.nodal[None] if q_tilde.has_discrete else None,
                                  [_as_analytic(q_tilde)])
    else:
        stack = PerturbationStack(q.mesh, None, [q_tilde])
    tb = tangent_transport(q, stack, h, base.start[None], T_max, tol, c1)
    if tb.trace.status[0] != HIT or abs(tb.trace.time[0] - base.exit_time) > 1e-6 * max(1.0, base.exit_time):
        raise TraceFailure("tangent integration left the base path")
    return TangentState(tb.w[0, 0].copy(), float(tb.tau_tilde[0, 0]), tb.xi_tilde[0, 0].copy(),
                        float(tb.omega_tilde[0, 0]))


def _as_analytic(v: VelocityField) -> AnalyticField | None:
    parts = list(v.extras)
    if v.mu:
        parts.append(linear_field(v.mu))
    if not parts:
        return None
    return AnalyticField(lambda x: sum(p.value(x) for p in parts), lambda x: sum(p.jacobian(x) for p in parts))


# flow Jacobian ---------------------------------------------------------------------

def flow_jacobians(q: VelocityField, points, t: float, tol: float = 1e-10) -> np.ndarray:
    """det(dx(t,y)/dy) for the backward flow x' = -q(x); nan where the trace exits first."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if t == 0:
        return np.ones(len(pts))
    mesh = q.mesh

    def rhs(Y):
        x = Y[:, :2]
        v, J, _ = q.value_and_jacobian(x)
        Z = Y[:, 2:].reshape(len(Y), 2, 2)
        return np.concatenate([-v, (-J @ Z).reshape(len(Y), 4)], axis=1)

    y0 = np.concatenate([pts, np.tile(np.eye(2).ravel(), (len(pts), 1))], axis=1)
    ev, evg = _events(mesh)
    res = integrate_batch(rhs, y0, t, tol=tol, events=ev, event_grads=evg, err_dims=6)
    det = np.linalg.det(res.state[:, 2:].reshape(-1, 2, 2))
    return np.where(res.status == TIMEOUT, det, np.nan)


def flow_jacobian_check(q: VelocityField, y, t: float, tol: float = 1e-10) -> float:
    d = flow_jacobians(q, np.reshape(np.asarray(y, dtype=float), (1, 2)), t, tol)[0]
    if not np.isfinite(d):
        raise TraceFailure("characteristic left the domain before time t")
    return float(d)


# sampled bounds ----------------------------------------------------------------------

@dataclass(frozen=True)
class SupBounds:
    M: float
    sup_q_sigma1: float
    inf_nq_sigma1: float
    sup_q: float
    sup_dq: float
    safety: float = 1.05
    n_boundary: int = 0


def sup_bounds(q: VelocityField, h: InflowData, n_boundary: int = 2048, safety: float = 1.05) -> SupBounds:
    """Sampled C1 bound M of q on D and boundary quantities on Sigma_1 and Supp(h)."""
    mesh = q.mesh
    parts = [mesh.vertices, mesh.centroids]
    theta = np.linspace(0.0, 2 * math.pi, n_boundary, endpoint=False)
    for curve, _, _ in mesh.curves:
        parts.append(curve.point(theta))
    X = np.concatenate(parts)
    v, J, _ = q.value_and_jacobian(X)
    sup_q = float(np.max(np.linalg.norm(v, axis=1)))
    sup_dq = float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2))))
    if q.has_discrete:
        Je = q.elem_jac + (-q.mu * np.eye(2))[None]
        if q.extras:
            Je = Je + sum(e.jacobian(mesh.centroids) for e in q.extras)
        sup_dq = max(sup_dq, float(np.max(np.linalg.norm(Je, ord=2, axis=(1, 2)))))
    M = safety * max(sup_q, sup_dq)
    pts, _ = sigma1_samples(mesh, h, max(1024, n_boundary))
    if len(pts):
        c_idx = [k for k, (_, _, lab) in enumerate(mesh.curves) if lab == SIGMA1][0]
        vb = q.value(pts)
        nq = np.abs(np.einsum("ij,ij->i", mesh.outward_normals(pts, c_idx), vb))
        sq, inq = float(np.max(np.linalg.norm(vb, axis=1))), float(np.min(nq))
    else:
        sq, inq = 0.0, math.inf
    return SupBounds(M, sq, inq, sup_q, sup_dq, safety, len(pts))
