"""Command line entry point: certify, solve, trace and report."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import certify as cert
from .config import OUTPUT_ENV, RunConfig, load_config
from .elliptic import read_field_csv
from .errors import ConfigError, NumericalFailure
from .pipeline import run_certify, run_solve, setup
from .transport import BACKWARD, FORWARD, trace

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def output_dir(cfg: RunConfig | None, override: str | None = None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output_dir if cfg is not None else "eulercert-out")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "ack_sampled_bounds", False):
        cfg.acknowledgments = {**cfg.acknowledgments, "sampled_bounds": True}
    return cfg


def cmd_certify(args) -> int:
    cfg = _load(args)
    out = output_dir(cfg, args.output_dir)
    rep = run_certify(cfg, out)
    c = rep.certificate
    print(f"verdict: {c.verdict}")
    for chk in c.failing:
        print(f"failing check: {chk.name} ({chk.text}; lhs={chk.lhs:.6g}, rhs={chk.rhs:.6g})")
    print(f"certificate: {out / 'certificate.json'}")
    if c.verdict == cert.CERTIFIED:
        return EXIT_OK
    if c.verdict == cert.CONDITIONAL and c.acknowledged:
        return EXIT_OK
    if c.verdict == cert.CONDITIONAL:
        print("conditional verdict without acknowledgment of: "
              + ", ".join(r for r in cert.downgrade_reasons(c.ledger) if not c.acknowledgments.get(r)))
    return EXIT_FAILED


def cmd_solve(args) -> int:
    cfg = _load(args)
    out = output_dir(cfg, args.output_dir)
    rep = run_solve(cfg, out)
    s = rep.summary
    print(f"iterations: {s['iterations']}  converged: {s['converged']}  "
          f"residual: {s['final_residual']:.3e}")
    print(f"fields written to {out}")
    return EXIT_OK


def read_points(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(rec[0]), float(rec[1])])
            except (ValueError, IndexError):
                if rows:
                    raise ConfigError(f"bad point row {rec!r} in {path}")
    if not rows:
        raise ConfigError(f"no points in {path}")
    return np.array(rows)


def cmd_trace(args) -> int:
    cfg = _load(args)
    out = output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        pts = read_points(args.points)
    except FileNotFoundError as exc:
        raise ConfigError(f"points file not found: {args.points}") from exc
    S = setup(cfg)
    mesh, ctx = S.mesh, S.context
    omega = np.zeros(mesh.n_vertices)
    if args.omega:
        omega = read_field_csv(mesh, args.omega).values
    q = ctx.velocity(omega)
    inside = mesh.contains(pts, tol=1e-9)
    rows = []
    print(f"{'id':>3} {'x':>12} {'y':>12} {'tau':>14} {'backward':>12} {'T':>14} {'forward':>12}")
    for i, (p, ok) in enumerate(zip(pts, inside)):
        if not ok:
            rows.append({"id": i, "x": p[0], "y": p[1], "error": "point outside the domain"})
            print(f"{i:>3} {p[0]:>12.6g} {p[1]:>12.6g}  error: point outside the domain")
            continue
        b = trace(q, p, BACKWARD, cfg.T_max, cfg.ode_tol)
        f = trace(q, p, FORWARD, cfg.T_max, cfg.ode_tol)
        b.to_csv(out / f"trace_{i}_backward.csv")
        f.to_csv(out / f"trace_{i}_forward.csv")
        rows.append({"id": i, "x": p[0], "y": p[1], "tau": b.exit_time, "backward": b.outcome,
                     "T": f.exit_time, "forward": f.outcome})
        print(f"{i:>3} {p[0]:>12.6g} {p[1]:>12.6g} {b.exit_time:>14.10f} {b.outcome:>12} "
              f"{f.exit_time:>14.10f} {f.outcome:>12}")
    with open(out / "traces.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["id", "x", "y", "tau", "backward", "T", "forward", "error"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})
    return EXIT_OK


def cmd_report(args) -> int:
    if args.certificate:
        path = Path(args.certificate)
    else:
        cfg = load_config(args.config) if args.config else None
        path = output_dir(cfg, args.output_dir) / "certificate.json"
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no certificate at {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"certificate is not valid JSON: {exc}") from exc
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        print(cert.render_text(doc), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eulercert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="run the full pipeline and write certificate.json")
    p.add_argument("--config", required=True)
    p.add_argument("--ack-sampled-bounds", action="store_true",
                   help="accept sampled suprema as bounds")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("solve", help="compute Omega0 and the iterates, skip the ledger")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("trace", help="trace characteristics through the given points")
    p.add_argument("--config", required=True)
    p.add_argument("--points", required=True, help="CSV with x,y per row")
    p.add_argument("--omega", help="nodal vorticity CSV (default: zero)")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("report", help="print a stored certificate")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--config")
    p.add_argument("--certificate")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
