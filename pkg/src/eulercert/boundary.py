"""Boundary data as functions of the polar angle.

``InflowData`` is the vorticity prescribed on Sigma_1.  It is a profile
(Fourier series or any callable with a derivative) times an optional C-infinity
cutoff supported on a closed arc.  ``StreamData`` holds the stream-function
values on each curve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .geometry import INTERIOR, TWO_PI, Curve, Mesh


def _f(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _fprime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a, b = _f(s), _f(1.0 - s)
    return a / (a + b)


def smooth_step_derivative(s):
    s = np.asarray(s, dtype=float)
    a, b = _f(s), _f(1.0 - s)
    da, db = _fprime(s), -_fprime(1.0 - s)
    den = (a + b) ** 2
    return (da * b - a * db) / den


@dataclass(frozen=True)
class FourierProfile:
    """c0 + sum(a cos(m t) + b sin(m t))."""

    constant: float = 0.0
    modes: tuple[tuple[int, float, float], ...] = ()

    @classmethod
    def from_list(cls, coeffs) -> "FourierProfile":
        c0, modes = 0.0, []
        for item in coeffs or ():
            item = list(item)
            if len(item) == 2:
                item.append(0.0)
            if len(item) != 3:
                raise ConfigError(f"bad Fourier entry {item!r}; expected [m, a_cos, b_sin]")
            m = int(item[0])
            if m < 0:
                raise ConfigError("Fourier modes must be nonnegative")
            if m == 0:
                c0 += float(item[1])
            else:
                modes.append((m, float(item[1]), float(item[2])))
        return cls(c0, tuple(modes))

    def to_list(self) -> list:
        out = [[0, self.constant, 0.0]] if self.constant else []
        return out + [list(m) for m in self.modes]

    @property
    def is_zero(self) -> bool:
        return self.constant == 0 and all(a == 0 and b == 0 for _, a, b in self.modes)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, float(self.constant))
        for m, a, b in self.modes:
            out = out + a * np.cos(m * theta) + b * np.sin(m * theta)
        return out

    def derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape)
        for m, a, b in self.modes:
            out = out - a * m * np.sin(m * theta) + b * m * np.cos(m * theta)
        return out


@dataclass(frozen=True)
class CallableProfile:
    """Arbitrary smooth profile given with its derivative."""

    f: Callable
    df: Callable
    is_zero: bool = False

    def __call__(self, theta):
        return np.asarray(self.f(np.asarray(theta, dtype=float)), dtype=float)

    def derivative(self, theta):
        return np.asarray(self.df(np.asarray(theta, dtype=float)), dtype=float)


@dataclass(frozen=True)
class InflowData:
    """h(theta) = scale * profile(theta) * cutoff(theta) on Sigma_1.

    ``support`` is a counterclockwise arc [theta_a, theta_b]; None means the
    whole curve.  With ``cutoff_width`` > 0 the cutoff rises smoothly over that
    angular width at each end of the arc, otherwise it is the indicator of the
    arc.
    """

    profile: FourierProfile | CallableProfile = field(default_factory=lambda: FourierProfile(1.0))
    support: tuple[float, float] | None = None
    cutoff_width: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.support is not None:
            a, b = map(float, self.support)
            length = b - a
            if not 0 < length < TWO_PI:
                raise ConfigError("support arc must be a strict sub-arc: 0 < theta_b - theta_a < 2 pi")
            if self.cutoff_width < 0 or 2 * self.cutoff_width > length:
                raise ConfigError("cutoff_width must lie in [0, arc length / 2]")
            object.__setattr__(self, "support", (a, b))

    @property
    def is_zero(self) -> bool:
        return self.scale == 0 or bool(self.profile.is_zero)

    @property
    def arc_length(self) -> float:
        return TWO_PI if self.support is None else self.support[1] - self.support[0]

    def scaled(self, factor: float) -> "InflowData":
        return InflowData(self.profile, self.support, self.cutoff_width, self.scale * factor)

    def _phase(self, theta):
        return np.mod(np.asarray(theta, dtype=float) - self.support[0], TWO_PI)

    def in_support(self, theta, tol: float = 1e-12):
        """Closed-arc membership of Supp(h)."""
        theta = np.asarray(theta, dtype=float)
        if self.is_zero:
            return np.zeros(theta.shape, dtype=bool)
        if self.support is None:
            return np.ones(theta.shape, dtype=bool)
        phi = self._phase(theta)
        return (phi <= self.arc_length + tol) | (phi >= TWO_PI - tol)

    def cutoff(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.support is None:
            return np.ones(theta.shape)
        phi, length = self._phase(theta), self.arc_length
        if self.cutoff_width == 0:
            return (phi <= length).astype(float)
        w = self.cutoff_width
        out = smooth_step(phi / w) * smooth_step((length - phi) / w)
        return np.where(phi <= length, out, 0.0)

    def cutoff_derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.support is None or self.cutoff_width == 0:
            return np.zeros(theta.shape)
        phi, length, w = self._phase(theta), self.arc_length, self.cutoff_width
        a, b = smooth_step(phi / w), smooth_step((length - phi) / w)
        da = smooth_step_derivative(phi / w) / w
        db = -smooth_step_derivative((length - phi) / w) / w
        return np.where(phi <= length, da * b + a * db, 0.0)

    def value(self, theta):
        if self.is_zero:
            return np.zeros(np.shape(theta))
        return self.scale * self.profile(theta) * self.cutoff(theta)

    def dtheta(self, theta):
        if self.is_zero:
            return np.zeros(np.shape(theta))
        return self.scale * (self.profile.derivative(theta) * self.cutoff(theta)
                             + self.profile(theta) * self.cutoff_derivative(theta))

    def at_points(self, points):
        p = np.atleast_2d(points)
        return self.value(np.arctan2(p[:, 1], p[:, 0]))

    def support_thetas(self, n: int) -> np.ndarray:
        """n parameter values covering the closed support arc."""
        if self.is_zero:
            return np.zeros(0)
        if self.support is None:
            return np.linspace(0.0, TWO_PI, n, endpoint=False)
        return np.linspace(self.support[0], self.support[1], n)

    def _dense(self, n: int) -> np.ndarray:
        theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
        if self.support is not None:
            theta = np.concatenate([theta, np.linspace(self.support[0], self.support[1], n)])
        return theta

    def sup_norm(self, n: int = 16384) -> float:
        if self.is_zero:
            return 0.0
        return float(np.max(np.abs(self.value(self._dense(n)))))

    def sup_tangential_derivative(self, curve: Curve, n: int = 16384) -> float:
        """sup |dh/ds| along the curve (arclength derivative)."""
        if self.is_zero:
            return 0.0
        theta = self._dense(n)
        return float(np.max(np.abs(self.dtheta(theta)) / curve.speed(theta)))

    def to_dict(self) -> dict:
        if not isinstance(self.profile, FourierProfile):
            raise TypeError("only Fourier profiles serialize")
        return {
            "coefficients": self.profile.to_list(),
            "support": list(self.support) if self.support is not None else None,
            "cutoff_width": self.cutoff_width,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InflowData":
        support = d.get("support")
        return cls(
            FourierProfile.from_list(d.get("coefficients", [[0, 1.0]])),
            tuple(support) if support is not None else None,
            float(d.get("cutoff_width", 0.0)),
            float(d.get("scale", 1.0)),
        )


@dataclass(frozen=True)
class StreamData:
    """Dirichlet data g for the stream function on each curve."""

    outer: FourierProfile = field(default_factory=FourierProfile)
    inner: FourierProfile = field(default_factory=FourierProfile)

    @property
    def is_zero(self) -> bool:
        return self.outer.is_zero and self.inner.is_zero

    def nodal(self, mesh: Mesh) -> np.ndarray:
        """Nodal vector holding g at boundary vertices and 0 elsewhere."""
        v = mesh.vertices
        theta = np.arctan2(v[:, 1], v[:, 0])
        out = np.zeros(mesh.n_vertices)
        for curve, sign, label in mesh.curves:
            ids = mesh.vertex_flag == label
            prof = self.outer if sign > 0 else self.inner
            out[ids] = prof(theta[ids])
        return out

    def to_dict(self) -> dict:
        return {"outer": self.outer.to_list(), "inner": self.inner.to_list()}

    @classmethod
    def from_dict(cls, d: dict | None) -> "StreamData":
        d = d or {}
        return cls(FourierProfile.from_list(d.get("outer")), FourierProfile.from_list(d.get("inner")))


def boundary_nodal(mesh: Mesh, g) -> np.ndarray:
    """Boundary values from a StreamData, a callable of points, or a nodal array."""
    if isinstance(g, StreamData):
        return g.nodal(mesh)
    if callable(g):
        out = np.zeros(mesh.n_vertices)
        ids = mesh.vertex_flag != INTERIOR
        out[ids] = np.asarray(g(mesh.vertices[ids]), dtype=float)
        return out
    arr = np.asarray(g, dtype=float)
    if arr.shape == ():
        out = np.zeros(mesh.n_vertices)
        out[mesh.vertex_flag != INTERIOR] = float(arr)
        return out
    if arr.shape != (mesh.n_vertices,):
        raise ValueError("nodal boundary data has the wrong length")
    return np.where(mesh.vertex_flag != INTERIOR, arr, 0.0)


__all__ = [
    "CallableProfile", "FourierProfile", "InflowData", "StreamData", "boundary_nodal",
    "smooth_step", "smooth_step_derivative",
]
