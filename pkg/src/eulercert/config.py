"""Run configuration: one JSON document describing domain, data and numerics."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .boundary import InflowData, StreamData
from .errors import ConfigError
from .galerkin import DIRICHLET_EIGEN, FINITE_DIFFERENCE, MIXED_EIGEN, TANGENT
from .geometry import TWO_PI, DomainSpec

OUTPUT_ENV = "EULERCERT_OUTPUT_DIR"


@dataclass
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    mu: float = 1.0
    g_spec: dict = field(default_factory=lambda: {"outer": [], "inner": []})
    h_spec: dict = field(default_factory=lambda: {"coefficients": [[0, 1.0]], "support": None,
                                                  "cutoff_width": 0.0, "scale": 1.0})
    basis: dict = field(default_factory=lambda: {"kind": MIXED_EIGEN, "N": 40})
    mesh_target_h: float | None = None
    ode_tol: float = 1e-9
    fd_step: float | None = None
    T_max: float = 50.0
    C2_override: float | None = None
    seed: int = 0
    acknowledgments: dict = field(default_factory=lambda: {"sampled_bounds": False, "user_supplied": False})
    output_dir: str = "eulercert-out"
    probe_scheme: str = TANGENT
    epsilon0_safety: float = 1.1
    n_probes: int = 3
    transversality_samples: int = 512
    max_iter: int = 50
    stop_tol: float = 1e-14

    def __post_init__(self):
        if isinstance(self.domain, dict):
            self.domain = DomainSpec.from_dict(self.domain)
        if self.mesh_target_h is not None:
            d = self.domain.to_dict()
            d["mesh_target_h"] = float(self.mesh_target_h)
            self.domain = DomainSpec.from_dict(d)

    @property
    def N(self) -> int:
        return int(self.basis.get("N", 40))

    @property
    def basis_kind(self) -> str:
        return self.basis.get("kind", MIXED_EIGEN)

    @property
    def stream_data(self) -> StreamData:
        return StreamData.from_dict(self.g_spec)

    @property
    def inflow(self) -> InflowData:
        try:
            return InflowData.from_dict(self.h_spec)
        except ValueError as exc:
            raise ConfigError(f"h_spec: {exc}") from exc

    def validate(self) -> "RunConfig":
        if not (isinstance(self.mu, (int, float)) and self.mu > 0.5):
            raise ConfigError(f"mu must satisfy mu > 1/2 (got {self.mu})")
        self.domain.validate()
        if self.N < 1:
            raise ConfigError("basis N must be at least 1")
        if self.basis_kind not in (MIXED_EIGEN, DIRICHLET_EIGEN):
            raise ConfigError(f"unknown basis kind {self.basis_kind!r}")
        if self.probe_scheme not in (TANGENT, FINITE_DIFFERENCE):
            raise ConfigError(f"unknown probe scheme {self.probe_scheme!r}")
        for name in ("ode_tol", "T_max", "epsilon0_safety", "stop_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a positive number")
        if self.epsilon0_safety < 1:
            raise ConfigError("epsilon0_safety must be >= 1")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ConfigError("fd_step must be positive")
        if self.C2_override is not None and not self.C2_override > 0:
            raise ConfigError("C2_override must be positive")
        sup = self.h_spec.get("support")
        if sup is not None:
            if len(sup) != 2:
                raise ConfigError("h support must be [theta_a, theta_b]")
            a, b = float(sup[0]), float(sup[1])
            if not 0 < b - a < TWO_PI:
                raise ConfigError("h support arc must lie strictly inside Sigma_1's parameter range")
        self.inflow  # noqa: B018  (parses coefficients and cutoff)
        self.stream_data
        if self.n_probes < 1 or self.transversality_samples < 1 or self.max_iter < 1:
            raise ConfigError("n_probes, transversality_samples and max_iter must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = self.domain.to_dict()
        d.pop("mesh_target_h")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError("unknown config keys: " + ", ".join(sorted(extra)))
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc).validate()
