"""Stage orchestration shared by the CLI commands."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certify as cert
from .config import RunConfig
from .elliptic import (DIRICHLET_ALL, ScalarField, eigenpairs,
                       estimate_epsilon0_detail, solve_harmonic_extension, write_field_csv)
from .errors import NeighborhoodExit, SingularJacobian, TransversalityLost
from .galerkin import (FixedPointProblem, GalerkinSpace, IterationResult, _upsilon_from,
                       assemble_A, build_space, galerkin_solve, gamma_bound, iterate, l2_norm)
from .geometry import Mesh, build_mesh, inner_radius, write_mesh_csv, write_vtk
from .transport import sup_bounds


class Timer:
    def __init__(self):
        self.stages: dict[str, float] = {}

    def __call__(self, name: str):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = timer.stages.get(name, 0.0) + time.perf_counter() - self.t0
                return False

        return _Stage()


@dataclass
class Setup:
    config: RunConfig
    mesh: Mesh
    context: FixedPointProblem
    timer: Timer


@dataclass
class RunReport:
    certificate: cert.Certificate | None
    history: IterationResult | None
    manifest: dict[str, str]
    timings: dict[str, float]
    config: dict
    config_hash: str
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.certificate.verdict if self.certificate else None,
            "manifest": self.manifest,
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
            "config": self.config,
            "config_hash": self.config_hash,
            "summary": self.summary,
        }

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def setup(cfg: RunConfig) -> Setup:
    timer = Timer()
    with timer("mesh"):
        mesh = build_mesh(cfg.domain)
    with timer("harmonic_extension"):
        g = cfg.stream_data
        psi = np.zeros(mesh.n_vertices) if g.is_zero else solve_harmonic_extension(mesh, g).values
    ctx = FixedPointProblem(mesh, float(cfg.mu), cfg.inflow, psi, T_max=cfg.T_max, ode_tol=cfg.ode_tol)
    return Setup(cfg, mesh, ctx, timer)


def _write_fields(out: Path, mesh: Mesh, fields: dict[str, np.ndarray], manifest: dict) -> None:
    for p in write_mesh_csv(mesh, out):
        manifest[p.name] = str(p)
    for name, vals in fields.items():
        p = write_field_csv(ScalarField(mesh, vals, name), out / f"{name}.csv")
        manifest[p.name] = str(p)
    p = write_vtk(mesh, out / "fields.vtk", fields)
    manifest[p.name] = str(p)


def _eta0(space: GalerkinSpace, mesh: Mesh, cfg: RunConfig, timer: Timer):
    with timer("epsilon0"):
        e0 = estimate_epsilon0_detail(space.basis, mesh, cfg.epsilon0_safety, seed=cfg.seed)
    with timer("lambda1"):
        lam1 = float(eigenpairs(mesh, DIRICHLET_ALL, 1).eigenvalues[0])
    return e0, lam1, min(1.0, lam1 * e0.value)


def run_certify(cfg: RunConfig, out: Path) -> RunReport:
    """mesh -> Psi_g -> Omega0 -> (A1) -> A -> constants -> certificate -> iteration."""
    out.mkdir(parents=True, exist_ok=True)
    S = setup(cfg)
    mesh, ctx, timer = S.mesh, S.context, S.timer
    manifest: dict[str, str] = {}
    summary: dict = {}
    ack = dict(cfg.acknowledgments)
    h = ctx.h

    def failed_a1(report, note):
        c = cert.certify_failed_transversality(report, mu=ctx.mu, seed=cfg.seed, config_hash=cfg.hash,
                                               acknowledgments=ack, note=note)
        return _finish(c, None)

    def _finish(c, hist, fields=None):
        p = c.write(out / "certificate.json")
        manifest[p.name] = str(p)
        (out / "certificate.txt").write_text(c.render_text())
        manifest["certificate.txt"] = str(out / "certificate.txt")
        if hist is not None:
            p = hist.to_csv(out / "history.csv")
            manifest[p.name] = str(p)
        if fields:
            _write_fields(out, mesh, fields, manifest)
        rep = RunReport(c, hist, manifest, timer.stages, cfg.to_dict(), cfg.hash, summary)
        rep.write(out / "report.json")
        return rep

    with timer("transversality"):
        rep0 = ctx.transversality(ctx.velocity(np.zeros(mesh.n_vertices)), cfg.transversality_samples)
    if not rep0.passed:
        return failed_a1(rep0, "transversality fails for the initial velocity field")
    with timer("basis"):
        space = build_space(mesh, cfg.N, cfg.basis_kind, h)
    try:
        with timer("galerkin_solve"):
            sol = galerkin_solve(space, ctx)
        with timer("transversality"):
            q0 = ctx.velocity(sol.Omega0.values)
            report = ctx.transversality(q0, cfg.transversality_samples)
    except TransversalityLost as exc:
        return failed_a1(None, str(exc))
    if not report.passed:
        return failed_a1(report, "transversality fails at Omega0")
    ctx.reference_c1 = report.c1 if math.isfinite(report.c1) else None
    om0 = sol.Omega0.values
    with timer("sup_bounds"):
        bounds = sup_bounds(q0, h)
    with timer("assemble_A"):
        A = assemble_A(space, om0, ctx, cfg.probe_scheme, cfg.fd_step)
    e0, lam1, _ = _eta0(space, mesh, cfg, timer)
    with timer("inner_radius"):
        rho = inner_radius(mesh, cfg.domain).rho
    with timer("residual"):
        try:
            gamma_bound(A)
            lam = ctx.Lambda(om0)
            ups_res = l2_norm(mesh, _upsilon_from(lam, om0, A.entries, space) - om0)
        except SingularJacobian:
            ups_res = None
    C2 = cfg.C2_override if cfg.C2_override is not None else cert.DEFAULT_C2
    with timer("certify"):
        c = cert.certify(context=ctx, space=space, Omega0=om0, A=A, report=report, bounds=bounds,
                         lambda1=lam1, epsilon0=e0.value, rho=rho, upsilon_residual=ups_res,
                         delta0=sol.delta0, C2=C2, C2_provenance=cert.USER,
                         epsilon0_safety=cfg.epsilon0_safety, v_direction=e0.direction,
                         n_probes=cfg.n_probes, seed=cfg.seed, acknowledgments=ack, config_hash=cfg.hash)
    p = A.to_csv(out / "A.csv")
    manifest[p.name] = str(p)
    hist = None
    fields = {"Omega0": om0}
    if c.verdict != cert.FAILED:
        eta0 = c.ledger.value("eta0")
        try:
            with timer("iterate"):
                hist = iterate(om0, A, space, ctx, eta0, cfg.max_iter, cfg.stop_tol, delta2=c.conclusion)
            ob = hist.Omega_bar.values
            fields.update(Omega_bar=ob, Phi_bar=ctx.phi(ob))
            ratios = hist.ratios()
            summary.update(iterations=len(hist.history), converged=hist.converged,
                           max_ratio=max(ratios) if ratios else 0.0,
                           final_residual=hist.final_residual,
                           distance_from_Omega0=l2_norm(mesh, ob - om0))
        except NeighborhoodExit as exc:
            summary["iteration_error"] = str(exc)
    return _finish(c, hist, fields)


def run_solve(cfg: RunConfig, out: Path) -> RunReport:
    """Omega0 and the iteration without the constants ledger."""
    out.mkdir(parents=True, exist_ok=True)
    S = setup(cfg)
    mesh, ctx, timer = S.mesh, S.context, S.timer
    manifest: dict[str, str] = {}
    with timer("basis"):
        space = build_space(mesh, cfg.N, cfg.basis_kind, ctx.h)
    with timer("galerkin_solve"):
        sol = galerkin_solve(space, ctx)
    om0 = sol.Omega0.values
    if not ctx.h.is_zero:
        ctx.reference_c1 = ctx.transversality(ctx.velocity(om0)).c1
    with timer("assemble_A"):
        A = assemble_A(space, om0, ctx, cfg.probe_scheme, cfg.fd_step)
    _, _, eta0 = _eta0(space, mesh, cfg, timer)
    with timer("iterate"):
        hist = iterate(om0, A, space, ctx, eta0, cfg.max_iter, cfg.stop_tol)
    ob = hist.Omega_bar.values
    p = hist.to_csv(out / "history.csv")
    manifest[p.name] = str(p)
    _write_fields(out, mesh, {"Omega0": om0, "Omega_bar": ob, "Phi_bar": ctx.phi(ob)}, manifest)
    summary = {"iterations": len(hist.history), "converged": hist.converged,
               "final_residual": hist.final_residual, "delta0": sol.delta0}
    rep = RunReport(None, hist, manifest, timer.stages, cfg.to_dict(), cfg.hash, summary)
    rep.write(out / "report.json")
    return rep


