"""Constants ledger, the a posteriori checks and the existence certificate."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from .boundary import InflowData
from .elliptic import ScalarField, mass_matrix
from .errors import (LedgerIncomplete, NoMargin, NoNeighborhood, NonTransversal,
                     SingularJacobian, TransversalityLost)
from .galerkin import (TANGENT, FixedPointProblem, GalerkinSpace, OperatorMatrix,
                       _upsilon_from, _values, assemble_A, gamma_bound, l2_norm)
from .geometry import SIGMA1, Mesh
from .transport import (PerturbationStack, SupBounds, TransversalityReport,
                        VelocityField, random_smooth_field, tangent_transport)

ANALYTIC = "analytic-formula"
SAMPLED = "sampled-bound"
DISCRETE = "discrete-estimate"
USER = "user-supplied"
PROVENANCES = (ANALYTIC, SAMPLED, DISCRETE, USER)

CERTIFIED = "certified"
CONDITIONAL = "conditionally-certified"
FAILED = "failed"

ALPHA = 0.5
DEFAULT_C2 = 10.0
SAFETY = 1.05

# constants the Theorem needs; certify refuses a positive verdict without them
REQUIRED = ("C_tilde", "K", "C2", "lambda1", "epsilon0", "kappa0", "delta1", "delta_c", "gamma", "delta2")


def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _input(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


# ledger -----------------------------------------------------------------------

@dataclass
class LedgerEntry:
    name: str
    value: float
    provenance: str
    inputs: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        d = {"name": self.name, "value": _num(self.value), "provenance": self.provenance,
             "inputs": {k: _input(v) for k, v in self.inputs.items()}}
        if self.note:
            d["note"] = self.note
        return d


class ConstantsLedger:
    """Ordered map name -> LedgerEntry."""

    def __init__(self):
        self._entries: dict[str, LedgerEntry] = {}

    def add(self, name: str, value: float, provenance: str, note: str = "", **inputs) -> float:
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        self._entries[name] = LedgerEntry(name, float(value), provenance, inputs, note)
        return float(value)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> LedgerEntry:
        return self._entries[name]

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def value(self, name: str) -> float:
        return self._entries[name].value

    def missing(self, names=REQUIRED) -> list[str]:
        return [n for n in names if n not in self._entries or not math.isfinite(self._entries[n].value)]

    def require(self, names=REQUIRED) -> None:
        miss = self.missing(names)
        if miss:
            raise LedgerIncomplete("ledger lacks " + ", ".join(miss))

    def provenances(self) -> set[str]:
        return {e.provenance for e in self}

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self]


@dataclass
class CheckRecord:
    name: str
    text: str
    lhs: float
    rhs: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        d = {"name": self.name, "inequality": self.text, "lhs": _num(self.lhs),
             "rhs": _num(self.rhs), "pass": bool(self.passed)}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class Certificate:
    ledger: ConstantsLedger
    checks: list[CheckRecord]
    residuals: dict
    verdict: str
    conclusion: float | None = None
    seed: int = 0
    config_hash: str = ""
    acknowledgments: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def failing(self) -> list[CheckRecord]:
        return [c for c in self.checks if not c.passed]

    @property
    def acknowledged(self) -> bool:
        """Every reason for a conditional verdict is covered by an acknowledgment."""
        return all(self.acknowledgments.get(k, False) for k in downgrade_reasons(self.ledger))

    def to_dict(self) -> dict:
        return {
            "constants": self.ledger.to_list(),
            "checks": [c.to_dict() for c in self.checks],
            "residuals": {k: _num(v) for k, v in self.residuals.items()},
            "verdict": self.verdict,
            "conclusion": None if self.conclusion is None else {
                "statement": "||Omega_bar - Omega_0||_L2 <= delta2", "delta2": _num(self.conclusion)},
            "acknowledgments": dict(sorted(self.acknowledgments.items())),
            "notes": list(self.notes),
            "seed": int(self.seed),
            "config_hash": self.config_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    def render_text(self) -> str:
        return render_text(self.to_dict())


def render_text(doc: dict) -> str:
    """Plain-text view of a certificate document, field for field."""
    lines = [f"verdict: {doc['verdict']}", f"seed: {doc['seed']}", f"config_hash: {doc['config_hash']}", "",
             "constants:"]
    for c in doc["constants"]:
        ins = ", ".join(f"{k}={v}" for k, v in c["inputs"].items())
        lines.append(f"  {c['name']:<18} {c['value']!s:<24} {c['provenance']:<18} {ins}")
    lines += ["", "checks:"]
    for c in doc["checks"]:
        mark = "PASS" if c["pass"] else "FAIL"
        lines.append(f"  [{mark}] {c['name']}: {c['inequality']}  (lhs={c['lhs']}, rhs={c['rhs']})")
    lines += ["", "residuals:"]
    lines += [f"  {k}: {v}" for k, v in doc["residuals"].items()]
    if doc.get("conclusion"):
        lines += ["", f"conclusion: {doc['conclusion']['statement']} = {doc['conclusion']['delta2']}"]
    if doc.get("acknowledgments"):
        lines += ["", "acknowledgments: " + ", ".join(f"{k}={v}" for k, v in doc["acknowledgments"].items())]
    for n in doc.get("notes", []):
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"


def downgrade_reasons(ledger: ConstantsLedger) -> list[str]:
    out = []
    if SAMPLED in ledger.provenances():
        out.append("sampled_bounds")
    if USER in ledger.provenances():
        out.append("user_supplied")
    return out


def verdict_for(checks: list[CheckRecord], ledger: ConstantsLedger, acknowledgments: dict | None = None) -> str:
    """failed if any check fails; certified only without user-supplied constants and
    with sampled bounds acknowledged; conditionally-certified otherwise."""
    if any(not c.passed for c in checks):
        return FAILED
    ack = acknowledgments or {}
    prov = ledger.provenances()
    if USER in prov:
        return CONDITIONAL
    if SAMPLED in prov and not ack.get("sampled_bounds", False):
        return CONDITIONAL
    return CERTIFIED


# formula-level constants --------------------------------------------------------

def boundary_norms(h: InflowData, curve) -> tuple[float, float]:
    """(sup|h|, sup|dh/ds|) on Sigma_1, sampled on a dense parameter grid."""
    return h.sup_norm(), h.sup_tangential_derivative(curve)


def compute_C_tilde(bounds: SupBounds, h, curve=None, safety: float = 1.0) -> float:
    """C~ = |h|/inf|<n,q>| + (1 + sup|q|/inf|<n,q>|) |Dh| on Sigma_1.

    ``h`` is InflowData (with the Sigma_1 ``curve``) or a pair (sup|h|, sup|Dh|).
    """
    if isinstance(h, InflowData):
        if h.is_zero:
            return 0.0
        h_sup, dh_sup = boundary_norms(h, curve)
    else:
        h_sup, dh_sup = (float(v) for v in h)
    if h_sup == 0 and dh_sup == 0:
        return 0.0
    inf_nq = bounds.inf_nq_sigma1 / safety
    sup_q = bounds.sup_q_sigma1 * safety
    if not inf_nq > 0:
        raise NonTransversal("inf |<n, q>| vanishes on Sigma_1")
    return h_sup / inf_nq + (1.0 + sup_q / inf_nq) * dh_sup


def kappa(M: float, t: float, mu: float) -> float:
    """(e^{(2M+1)t} - e^{-2 mu t}) / (4M + 4mu + 2)."""
    return (math.exp((2 * M + 1) * t) - math.exp(-2 * mu * t)) / (4 * M + 4 * mu + 2)


def kappa_quadrature(M: float, t: float, mu: float) -> float:
    """The same quantity from its defining integral, for cross-checks."""
    val, _ = integrate.quad(lambda s: math.exp((2 * M + 1) * (t - s) - 2 * mu * s), 0.0, t,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 0.5 * val


def K_of(M: float, t: float, mu: float) -> float:
    """K(M, t) = e^t kappa(t)^(1/2)."""
    if M < 0 or t < 0:
        raise ValueError("K_of needs M >= 0 and t >= 0")
    if mu <= 0.5:
        raise ValueError("mu must exceed 1/2")
    return math.exp(t) * math.sqrt(max(kappa(M, t, mu), 0.0))


def kappa0(C_tilde: float, M: float, delta1: float, T_star: float, mu: float,
           lambda1: float | None = None) -> tuple[float, float | None]:
    """kappa0 = C~ K(M + delta1, T* + 1), and kappa0 / lambda1 when lambda1 is given."""
    k0 = C_tilde * K_of(M + delta1, T_star + 1.0, mu) if C_tilde else 0.0
    return k0, (k0 / lambda1 if lambda1 else None)


def C1_bound(T_star: float, M: float, C_tilde: float, h_sup: float, gamma: float,
             A_norm: float, B_U: float) -> float:
    """(1 + gamma (1 + |A|) B_U) (e^{T*+1} |h| + C~ e^{(T*+1)(M+2)})."""
    core = math.exp(T_star + 1.0) * h_sup + C_tilde * math.exp((T_star + 1.0) * (M + 2.0))
    if core == 0:
        return 0.0
    return (1.0 + gamma * (1.0 + A_norm) * B_U) * core


def basis_c1_norm(space: GalerkinSpace, safety: float = SAFETY) -> float:
    """Sampled max_j ||phi_j||_{C^1} = max(sup|phi_j|, sup|grad phi_j|)."""
    if space.N == 0:
        return 0.0
    B = space.basis
    mesh = space.mesh
    g = np.einsum("tij,tin->tnj", mesh.basis_gradients, B.T[mesh.triangles])
    gmax = float(np.max(np.linalg.norm(g, axis=-1)))
    return safety * max(float(np.max(np.abs(B))), gmax)


def delta_choice(C1: float, C2: float) -> float:
    """delta = min(0.99, (2 C1 C2)^-2)."""
    if C1 * C2 == 0:
        return 0.99
    return min(0.99, (2.0 * C1 * C2) ** -2)


# Hoelder-type seminorm and the comparison constant ---------------------------------

def holder_seminorm(f: ScalarField, alpha: float = ALPHA, delta: float = 0.1) -> float:
    """sup |f(x) - f(y)| / |x - y|^alpha over vertex pairs with 0 < |x - y| < delta."""
    if not (0 < alpha < 1 and 0 < delta):
        raise ValueError("need 0 < alpha < 1 and delta > 0")
    X = f.mesh.vertices
    v = np.asarray(f.values, dtype=float)
    pairs = cKDTree(X).query_pairs(delta, output_type="ndarray")
    if len(pairs) == 0:
        return 0.0
    d = np.linalg.norm(X[pairs[:, 0]] - X[pairs[:, 1]], axis=1)
    keep = (d > 0) & (d < delta)
    if not np.any(keep):
        return 0.0
    dv = np.abs(v[pairs[keep, 0]] - v[pairs[keep, 1]])
    return float(np.max(dv / d[keep] ** alpha))


def comparison_bump(r, alpha: float, delta: float, c: float):
    """phi(x) = max(0, (c/2) delta^alpha - c |x|^alpha) as a function of |x|."""
    return np.maximum(0.0, 0.5 * c * delta ** alpha - c * np.asarray(r, dtype=float) ** alpha)


def delta_c(rho: float, alpha: float, delta: float, c: float, rtol: float = 1e-10) -> float:
    """L2 norm of the comparison bump over the disc of radius rho centred at (rho, 0)."""
    if not (rho > 0 and c >= 0 and 0 < alpha < 1 and delta > 0):
        raise ValueError("delta_c needs rho > 0, c >= 0, 0 < alpha < 1, delta > 0")
    if c == 0:
        return 0.0
    a = 0.5 * delta ** alpha
    r0 = (0.5 * delta ** alpha) ** (1.0 / alpha)  # radius of the bump's support

    def radial(R):
        # int_0^R (a - r^alpha)^2 r dr
        return (a * a * R * R / 2 - 2 * a * R ** (alpha + 2) / (alpha + 2)
                + R ** (2 * alpha + 2) / (2 * alpha + 2))

    def outer(theta):
        return radial(min(r0, 2 * rho * math.cos(theta)))

    pts = []
    if r0 < 2 * rho:
        pts = [math.acos(r0 / (2 * rho))]
    val, _ = integrate.quad(outer, 0.0, math.pi / 2, points=pts or None, epsabs=0.0,
                            epsrel=rtol, limit=200)
    return c * math.sqrt(max(2.0 * val, 0.0))


def delta_c_monte_carlo(rho: float, alpha: float, delta: float, c: float, n: int = 10_000_000,
                        seed: int = 0, chunk: int = 1_000_000) -> tuple[float, float]:
    """Independent Monte-Carlo estimate of delta_c^2's square root and its standard error."""
    rng = np.random.default_rng(seed)
    r0 = (0.5 * delta ** alpha) ** (1.0 / alpha)
    w = min(r0, 2 * rho)
    area = w * 2 * r0
    s1 = s2 = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = rng.uniform(0.0, w, m)
        y = rng.uniform(-r0, r0, m)
        inB = (x - rho) ** 2 + y ** 2 < rho ** 2
        vals = np.where(inB, comparison_bump(np.hypot(x, y), alpha, delta, c) ** 2, 0.0)
        s1 += vals.sum()
        s2 += (vals ** 2).sum()
        done += m
    mean = s1 / n
    var = max(s2 / n - mean ** 2, 0.0)
    integral = area * mean
    se = area * math.sqrt(var / n)
    val = math.sqrt(integral)
    return val, se / (2 * val) if val > 0 else 0.0


# (P1): margin for perturbations of q ---------------------------------------------

def normal_speed_lipschitz(q: VelocityField, n: int = 2048, safety: float = SAFETY) -> float:
    """Sampled sup over both curves of |d/ds <n, q>| along the curve."""
    mesh = q.mesh
    theta = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    best = 0.0
    for k, (curve, _, _) in enumerate(mesh.curves):
        pts = curve.point(theta).reshape(-1, 2)
        nq = np.einsum("ij,ij->i", mesh.outward_normals(pts, k), q.value(pts))
        ds = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        best = max(best, float(np.max(np.abs(np.roll(nq, -1) - nq) / ds)))
    return safety * best


@dataclass
class Delta1Result:
    delta1: float
    k: int
    displacement: float
    conditions: dict


def delta1_margin(report: TransversalityReport, M: float, lipschitz_nq: float = 0.0,
                  corridor: float = math.inf, max_k: int = 20) -> Delta1Result:
    """Largest delta1 = 2^-k (k <= max_k) meeting the sufficient conditions.

    D = delta1 (T*+1) e^{M (T*+1)} bounds the displacement of perturbed exit points.
    (i)   c1 - delta1 (1 + L_n (T*+1) e^{M(T*+1)}) >= c1/2
    (ii)  D <= corridor half-width (infinite when Sigma_2 is a closed curve)
    (iii) D / (c1/2) <= 1, so perturbed characteristics still exit before T*+1.
    """
    c1, T = report.c1, report.T_star
    if not report.passed or not c1 > 0:
        raise NoMargin("base field fails transversality")
    if report.T_star + 1.0 > report.T_max:
        raise NoMargin("T* + 1 exceeds the trace horizon")
    if math.isinf(c1):
        return Delta1Result(1.0, 0, 0.0, {"trivial": True})
    growth = (T + 1.0) * math.exp(M * (T + 1.0))
    for k in range(max_k + 1):
        d1 = 2.0 ** -k
        D = d1 * growth
        cond = {
            "entry_exit_margin": c1 - d1 * (1.0 + lipschitz_nq * growth) >= 0.5 * c1,
            "corridor": D <= corridor,
            "exit_time": D / (0.5 * c1) <= 1.0,
        }
        if all(cond.values()):
            return Delta1Result(d1, k, D, cond)
    raise NoMargin(f"no delta1 >= 2^-{max_k} satisfies the margin conditions (c1 = {c1:.3g})")


# (A3) and the block bound ------------------------------------------------------------

def dominating_matrix(kappa0: float, epsilon0: float, lambda1: float) -> np.ndarray:
    return np.array([[kappa0 * epsilon0, kappa0 * epsilon0], [kappa0 / lambda1, kappa0 * epsilon0]])


def block_bound(kappa0: float, epsilon0: float, lambda1: float) -> float:
    """sqrt(2) kappa0 (eps0^2 + eps0/lambda1)^(1/2)."""
    return math.sqrt(2.0) * kappa0 * math.sqrt(epsilon0 ** 2 + epsilon0 / lambda1)


def star_operator_norm(B11, B12, B21, B22, eta0: float) -> float:
    """Operator norm of the block map on U x V w.r.t. (|u|^2 + eta0 |v|^2)^(1/2)."""
    s = math.sqrt(eta0)
    top = np.hstack([np.atleast_2d(B11), np.atleast_2d(B12) / s])
    bot = np.hstack([s * np.atleast_2d(B21), np.atleast_2d(B22)])
    return float(np.linalg.norm(np.vstack([top, bot]), 2))


def check_A3(kappa0: float, epsilon0: float, lambda1: float, gamma: float) -> tuple[CheckRecord, float | None]:
    """Record sqrt(2) kappa0 (eps0^2 + eps0/lambda1)^(1/2) <= 1/(2 gamma); eta0 on pass."""
    lhs = block_bound(kappa0, epsilon0, lambda1)
    rhs = 1.0 / (2.0 * gamma)
    ok = bool(lhs <= rhs)
    rec = CheckRecord("(A3) key assumption on eps0",
                      "sqrt(2) kappa0 (eps0^2 + eps0/lambda1)^(1/2) <= 1/(2 gamma)", lhs, rhs, ok)
    return rec, (min(1.0, lambda1 * epsilon0) if ok else None)


# delta2 -------------------------------------------------------------------------------

@dataclass
class Delta2Result:
    delta2: float
    tolerance: float
    tried: list[tuple[float, float, bool]]
    n_probes: int
    seed: int


def probe_directions(space: GalerkinSpace, n_probes: int, seed: int = 0,
                     v_direction: np.ndarray | None = None) -> list[np.ndarray]:
    """Unit L2 directions: random U-combinations plus one V-direction."""
    mesh = space.mesh
    rng = np.random.default_rng(seed)
    dirs = []
    n_u = n_probes - (1 if v_direction is not None else 0)
    for _ in range(max(n_u, 0)):
        if space.N:
            d = space.synthesize(rng.standard_normal(space.N))
        else:
            d = rng.standard_normal(mesh.n_vertices)
        nrm = l2_norm(mesh, d)
        if nrm > 0:
            dirs.append(d / nrm)
    if v_direction is not None:
        _, v = space.split(np.asarray(v_direction, dtype=float))
        nrm = l2_norm(mesh, v)
        if nrm > 0:
            dirs.append(v / nrm)
    return dirs


def delta2_estimate(space: GalerkinSpace, Omega0, A, kappa0: float, epsilon0: float,
                    delta_c_val: float, context: FixedPointProblem | None = None, n_probes: int = 3,
                    seed: int = 0, v_direction: np.ndarray | None = None, max_halvings: int = 20,
                    jacobian=None) -> Delta2Result:
    """Largest delta_c 2^-k such that |P D_u Lambda(Omega) - A| <= kappa0 eps0 at every probe
    Omega = Omega0 + delta d on the sampled sphere.

    ``jacobian(values)`` overrides the tangent reassembly (used for surrogate maps).
    """
    om0 = _values(Omega0)
    E = A.entries if isinstance(A, OperatorMatrix) else np.asarray(A, dtype=float)
    tol = kappa0 * epsilon0
    if jacobian is None:
        if context is None:
            raise ValueError("delta2_estimate needs a context or a jacobian callable")

        def jacobian(vals):
            return assemble_A(space, vals, context, TANGENT).entries

    dirs = probe_directions(space, n_probes, seed, v_direction)
    tried = []
    for k in range(max_halvings + 1):
        d = delta_c_val * 2.0 ** -k
        worst = 0.0
        ok = True
        for u in dirs:
            try:
                dev = float(np.linalg.norm(jacobian(om0 + d * u) - E, 2)) if E.size else 0.0
            except TransversalityLost:
                dev = math.inf
            worst = max(worst, dev)
            if not dev <= tol:
                ok = False
                break
        tried.append((d, worst, ok))
        if ok:
            return Delta2Result(d, tol, tried, len(dirs), seed)
    raise NoNeighborhood(f"Jacobian deviation exceeds kappa0*eps0 = {tol:.3g} even at "
                         f"delta = {tried[-1][0]:.3g}")


# transport stability audit --------------------------------------------------------

@dataclass
class AuditReport:
    ratios: np.ndarray
    omega_norms: np.ndarray
    bounds: np.ndarray
    constant: float

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0


def lemma31_audit(q: VelocityField, h: InflowData, n_random: int = 50, *, T_star: float, M: float,
                  C_tilde: float, mu: float | None = None, seed: int = 0, perturbations=None,
                  T_max: float = 50.0, tol: float = 1e-9, c1: float | None = None) -> AuditReport:
    """Compare |Omega~|_L2 from tangent solves with C~ K(M, T*) |q~|_L2(D*)."""
    mesh = q.mesh
    mu = q.mu if mu is None else mu
    if perturbations is None:
        rng = np.random.default_rng(seed)
        perturbations = [random_smooth_field(rng) for _ in range(n_random)]
    k = len(perturbations)
    if k == 0:
        return AuditReport(np.zeros(0), np.zeros(0), np.zeros(0), 0.0)
    stack = PerturbationStack(mesh, None, list(perturbations))
    tb = tangent_transport(q, stack, h, None, T_max, tol, c1)
    Mm = mass_matrix(mesh)
    om_norm = np.sqrt(np.maximum(np.einsum("ki,ki->k", tb.omega_tilde, (Mm @ tb.omega_tilde.T).T), 0.0))
    in_dstar = tb.trace.hits(SIGMA1) & (h.at_points(tb.trace.exit_points) != 0)
    lumped = np.asarray(Mm.sum(axis=1)).ravel() * in_dstar
    qt = np.stack([f.value(mesh.vertices) for f in perturbations])  # (k, nv, 2)
    q_norm = np.sqrt(np.einsum("kij,kij,i->k", qt, qt, lumped))
    const = C_tilde * K_of(M, T_star, mu)
    bound = const * q_norm
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(om_norm == 0, 0.0, om_norm / bound)
    return AuditReport(ratios, om_norm, bound, const)


# the certificate ---------------------------------------------------------------------

def certify(*, context: FixedPointProblem, space: GalerkinSpace, Omega0, A, report: TransversalityReport,
            bounds: SupBounds, lambda1: float, epsilon0: float, rho: float,
            upsilon_residual: float | None = None, delta0: float | None = None,
            C2: float = DEFAULT_C2, C2_provenance: str = USER, epsilon0_safety: float = 1.1,
            v_direction: np.ndarray | None = None, lipschitz_nq: float | None = None,
            n_probes: int = 3, seed: int = 0, acknowledgments: dict | None = None,
            config_hash: str = "", jacobian=None) -> Certificate:
    """Evaluate the ledger in order and fold the checks into a verdict."""
    mesh: Mesh = space.mesh
    mu, h = context.mu, context.h
    om0 = _values(Omega0)
    ack = dict(acknowledgments or {})
    L = ConstantsLedger()
    checks: list[CheckRecord] = []
    notes = ["gamma and A are discrete-level surrogates of the continuous (A2) quantities",
             "epsilon0 is a power-iteration estimate times a safety factor"]
    residuals: dict = {}
    if delta0 is not None:
        residuals["delta0"] = delta0

    def finish(conclusion=None):
        if upsilon_residual is not None and "upsilon_residual" not in residuals:
            residuals["upsilon_residual"] = upsilon_residual
        verdict = verdict_for(checks, L, ack)
        if verdict != FAILED:
            L.require()
        return Certificate(L, checks, residuals, verdict, conclusion if verdict != FAILED else None,
                           seed, config_hash, ack, notes)

    L.add("mu", mu, ANALYTIC)
    L.add("alpha", ALPHA, ANALYTIC, note="fixed Hoelder exponent")
    L.add("lambda1", lambda1, DISCRETE, note="lowest Dirichlet eigenvalue of the P1 discretization")
    L.add("epsilon0", epsilon0, DISCRETE, safety_factor=epsilon0_safety, N=space.N)
    L.add("rho", rho, SAMPLED, note="inner radius verified by distance sampling")
    L.add("C2", C2, C2_provenance, note="Schauder constant for alpha = 1/2")

    # (A1)
    L.add("c1", report.c1, SAMPLED, samples=report.samples_checked)
    L.add("T_star", report.T_star, SAMPLED, samples=report.samples_checked)
    L.add("M", bounds.M, SAMPLED, safety=bounds.safety)
    checks.append(CheckRecord("(A1) transversality", "c1 > 0 and all forward characteristics exit via Sigma_2",
                              report.c1, 0.0, bool(report.passed),
                              "" if report.all_exit_sigma2 else f"{report.n_failed} samples miss Sigma_2"))
    if not report.passed:
        return finish()
    checks.append(CheckRecord("(A1) exit horizon", "T* + 1 <= T_max", report.T_star + 1.0, report.T_max,
                              report.T_star + 1.0 <= report.T_max))
    if not checks[-1].passed:
        return finish()

    curve, _ = mesh.curve_for(SIGMA1)
    h_sup, dh_sup = boundary_norms(h, curve)
    L.add("h_C0", h_sup, SAMPLED)
    L.add("Dh_C0", dh_sup, SAMPLED, note="arclength derivative along Sigma_1")
    C_t = compute_C_tilde(bounds, (h_sup, dh_sup), safety=bounds.safety)
    L.add("C_tilde", C_t, SAMPLED, inf_nq=bounds.inf_nq_sigma1, sup_q=bounds.sup_q_sigma1,
          h_C0=h_sup, Dh_C0=dh_sup)

    # (A2)
    try:
        sb = gamma_bound(A)
        gamma, smin = sb.gamma, sb.sigma_min
    except SingularJacobian:
        gamma, smin = math.inf, 0.0
    E = A.entries if isinstance(A, OperatorMatrix) else np.asarray(A, dtype=float)
    A_norm = float(np.linalg.norm(E, 2)) if E.size else 0.0
    L.add("gamma", gamma, DISCRETE, sigma_min=smin)
    L.add("A_norm", A_norm, DISCRETE)
    checks.append(CheckRecord("(A2) stability", "gamma = 1/sigma_min(I - A) < inf", gamma, math.inf,
                              math.isfinite(gamma)))
    if not math.isfinite(gamma):
        return finish()

    # (P1)
    if lipschitz_nq is None:
        lipschitz_nq = normal_speed_lipschitz(context.velocity(om0))
    try:
        d1 = delta1_margin(report, bounds.M, lipschitz_nq)
        delta1 = d1.delta1
        L.add("delta1", delta1, SAMPLED, c1=report.c1, M=bounds.M, T_star=report.T_star,
              L_n=lipschitz_nq, displacement=d1.displacement)
    except NoMargin as exc:
        delta1 = 0.0
        checks.append(CheckRecord("(P1) perturbation margin", "delta1 > 0", 0.0, 0.0, False, str(exc)))
        return finish()
    checks.append(CheckRecord("(P1) perturbation margin", "delta1 > 0", delta1, 0.0, delta1 > 0))

    K_val = K_of(bounds.M + delta1, report.T_star + 1.0, mu)
    L.add("K", K_val, ANALYTIC, M=bounds.M + delta1, t=report.T_star + 1.0, mu=mu)
    k0, k0_l1 = kappa0(C_t, bounds.M, delta1, report.T_star, mu, lambda1)
    L.add("kappa0", k0, SAMPLED, C_tilde=C_t, K=K_val)
    L.add("kappa0_over_lambda1", k0_l1, SAMPLED)

    B_U = basis_c1_norm(space)
    L.add("B_U", B_U, SAMPLED, note="max C1 norm of the basis functions")
    C1 = C1_bound(report.T_star, bounds.M, C_t, h_sup, gamma, A_norm, B_U)
    L.add("C1", C1, DISCRETE, gamma=gamma, A_norm=A_norm, B_U=B_U)
    delta = delta_choice(C1, C2)
    L.add("delta", delta, ANALYTIC, C1=C1, C2=C2)
    checks.append(CheckRecord("comparison lemma inputs", "rho > 0, 0 < delta < 1, alpha = 1/2", rho, 0.0,
                              rho > 0 and 0 < delta < 1))
    if not checks[-1].passed:
        return finish()

    c = delta1 / C2
    dc = min(delta_c(rho, ALPHA, delta, c), delta1)
    L.add("delta_c", dc, ANALYTIC, rho=rho, delta=delta, c=c)
    checks.append(CheckRecord("delta_c positive", "0 < delta_c <= delta1", dc, 0.0, dc > 0))
    if not dc > 0:
        return finish()
    chain_lhs = 2.0 * C1 * math.sqrt(delta)
    checks.append(CheckRecord("regularity chain", "2 C1 delta^(1/2) <= delta1 / C2", chain_lhs, c,
                              chain_lhs <= c))

    # (A3)
    rec, eta0 = check_A3(k0, epsilon0, lambda1, gamma)
    checks.append(rec)
    if eta0 is None:
        return finish()
    L.add("eta0", eta0, DISCRETE, lambda1=lambda1, epsilon0=epsilon0)

    try:
        d2 = delta2_estimate(space, om0, E, k0, epsilon0, dc, context, n_probes, seed, v_direction,
                             jacobian=jacobian)
        L.add("delta2", d2.delta2, SAMPLED, tolerance=d2.tolerance, probes=d2.n_probes, seed=seed)
        checks.append(CheckRecord("delta2 positive", "0 < delta2 <= delta_c", d2.delta2, 0.0, d2.delta2 > 0))
    except NoNeighborhood as exc:
        checks.append(CheckRecord("delta2 positive", "0 < delta2 <= delta_c", 0.0, 0.0, False, str(exc)))
        return finish()

    if upsilon_residual is None:
        lam = context.Lambda(om0)
        upsilon_residual = l2_norm(mesh, _upsilon_from(lam, om0, E, space) - om0)
    residuals["upsilon_residual"] = upsilon_residual
    thr = 0.5 * d2.delta2 * math.sqrt(eta0)
    checks.append(CheckRecord("Theorem hypothesis", "||Upsilon(Omega0) - Omega0||_L2 <= delta2 sqrt(eta0) / 2",
                              upsilon_residual, thr, upsilon_residual <= thr))
    return finish(d2.delta2)


def certify_failed_transversality(report: TransversalityReport, *, mu: float, seed: int = 0,
                                  config_hash: str = "", acknowledgments: dict | None = None,
                                  note: str = "") -> Certificate:
    """Certificate for a run stopped by (A1) before any other constant exists."""
    L = ConstantsLedger()
    L.add("mu", mu, ANALYTIC)
    if report is not None:
        L.add("c1", report.c1, SAMPLED, samples=report.samples_checked)
        L.add("T_star", report.T_star, SAMPLED, samples=report.samples_checked)
        lhs = report.c1
    else:
        lhs = math.nan
    checks = [CheckRecord("(A1) transversality", "c1 > 0 and all forward characteristics exit via Sigma_2",
                          lhs, 0.0, False, note)]
    return Certificate(L, checks, {}, FAILED, None, seed, config_hash, dict(acknowledgments or {}),
                       [note] if note else [])


__all__ = [
    "ALPHA", "ANALYTIC", "AuditReport", "C1_bound", "CERTIFIED", "CONDITIONAL", "Certificate",
    "CheckRecord", "ConstantsLedger", "DEFAULT_C2", "DISCRETE", "Delta1Result", "Delta2Result",
    "FAILED", "K_of", "LedgerEntry", "SAMPLED", "USER", "basis_c1_norm", "block_bound",
    "certify", "certify_failed_transversality", "check_A3", "compute_C_tilde", "delta1_margin",
    "delta2_estimate", "delta_c", "delta_c_monte_carlo", "delta_choice", "dominating_matrix",
    "holder_seminorm", "kappa", "kappa0", "kappa_quadrature", "lemma31_audit",
    "normal_speed_lipschitz", "probe_directions", "render_text", "star_operator_norm", "verdict_for",
]
