"""Annular domains, structured polar triangulations and point location.

The domain lies between two star-shaped curves r = R_inner(theta) and
r = R_outer(theta).  One of them carries the inflow data (label SIGMA1), the
other is the outflow curve (label SIGMA2).  A disc (no inner curve) is
supported as a test fixture only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidDomain, MeshFailure

INTERIOR = 0
SIGMA1 = 1
SIGMA2 = 2
LABEL_NAMES = {SIGMA1: "sigma1", SIGMA2: "sigma2"}

TWO_PI = 2.0 * math.pi


def _modes(seq) -> tuple[tuple[int, float, float], ...]:
    out = []
    for item in seq or ():
        item = list(item)
        if len(item) == 2:
            item.append(0.0)
        if len(item) != 3:
            raise InvalidDomain(f"bad Fourier mode entry {item!r}; expected [m, a_cos, b_sin]")
        m = int(item[0])
        if m < 1:
            raise InvalidDomain("perturbation modes must have m >= 1")
        out.append((m, float(item[1]), float(item[2])))
    return tuple(out)


@dataclass(frozen=True)
class Curve:
    """Star-shaped closed curve r = base + sum(a cos(m t) + b sin(m t))."""

    base: float
    modes: tuple[tuple[int, float, float], ...] = ()

    def radius(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.full(theta.shape, float(self.base))
        for m, a, b in self.modes:
            r = r + a * np.cos(m * theta) + b * np.sin(m * theta)
        return r

    def dradius(self, theta):
        theta = np.asarray(theta, dtype=float)
        d = np.zeros(theta.shape)
        for m, a, b in self.modes:
            d = d - a * m * np.sin(m * theta) + b * m * np.cos(m * theta)
        return d

    def point(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def tangent(self, theta) -> np.ndarray:
        """Derivative of the parametrization with respect to theta."""
        theta = np.asarray(theta, dtype=float)
        r, dr = self.radius(theta), self.dradius(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([dr * c - r * s, dr * s + r * c], axis=-1)

    def speed(self, theta):
        return np.linalg.norm(self.tangent(theta), axis=-1)

    def normal(self, theta) -> np.ndarray:
        """Unit normal pointing away from the origin side of the curve."""
        t = self.tangent(theta)
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


@dataclass(frozen=True)
class DomainSpec:
    kind: str = "annulus"
    R_outer: float = 2.0
    R_inner: float = 0.5
    outer_perturbation: tuple = ()
    inner_perturbation: tuple = ()
    sigma1_label: str = "outer"
    mesh_target_h: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "outer_perturbation", _modes(self.outer_perturbation))
        object.__setattr__(self, "inner_perturbation", _modes(self.inner_perturbation))

    @property
    def outer(self) -> Curve:
        return Curve(float(self.R_outer), self.outer_perturbation)

    @property
    def inner(self) -> Curve | None:
        if self.kind == "disc":
            return None
        return Curve(float(self.R_inner), self.inner_perturbation)

    def validate(self, n_samples: int = 4096) -> None:
        if self.kind not in ("annulus", "deformed-annulus", "disc"):
            raise InvalidDomain(f"unknown domain kind {self.kind!r}")
        if self.sigma1_label not in ("outer", "inner"):
            raise InvalidDomain("sigma1_label must be 'outer' or 'inner'")
        if not self.mesh_target_h > 0:
            raise InvalidDomain("mesh_target_h must be positive")
        if not self.R_outer > 0:
            raise InvalidDomain("R_outer must be positive")
        if self.kind == "annulus" and (self.outer_perturbation or self.inner_perturbation):
            raise InvalidDomain("kind 'annulus' takes no radial perturbation; use 'deformed-annulus'")
        theta = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
        r_out = self.outer.radius(theta)
        if np.min(r_out) <= 0:
            raise InvalidDomain("outer radius becomes nonpositive")
        if self.kind == "disc":
            if self.sigma1_label != "outer":
                raise InvalidDomain("a disc has no inner curve")
            return
        if not self.R_inner > 0:
            raise InvalidDomain("R_inner must be positive")
        if not self.R_inner < self.R_outer:
            raise InvalidDomain("R_inner must be smaller than R_outer")
        r_in = self.inner.radius(theta)
        if np.min(r_in) <= 0:
            raise InvalidDomain("inner radius becomes nonpositive")
        if np.min(r_out - r_in) <= 0:
            raise InvalidDomain("boundary curves intersect")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "R_outer": self.R_outer,
            "R_inner": self.R_inner,
            "radial_perturbation": {
                "outer": [list(m) for m in self.outer_perturbation],
                "inner": [list(m) for m in self.inner_perturbation],
            },
            "sigma1_label": self.sigma1_label,
            "mesh_target_h": self.mesh_target_h,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        pert = d.get("radial_perturbation") or {}
        return cls(
            kind=d.get("kind", "annulus"),
            R_outer=float(d.get("R_outer", 2.0)),
            R_inner=float(d.get("R_inner", 0.5)),
            outer_perturbation=pert.get("outer", ()),
            inner_perturbation=pert.get("inner", ()),
            sigma1_label=d.get("sigma1_label", "outer"),
            mesh_target_h=float(d.get("mesh_target_h", 0.1)),
        )


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured polar P1 triangulation.

    Vertex (i, j) sits on ring i (0 = inner curve, n_rings = outer curve) and
    ray j.  For the disc fixture vertex 0 is the centre and ring 0 is the fan
    around it.  Hashes by identity so operators can be cached per mesh.
    """

    spec: DomainSpec
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: np.ndarray
    boundary_normals: np.ndarray
    vertex_flag: np.ndarray
    n_rings: int
    n_sectors: int
    cell_triangles: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def curves(self) -> list[tuple[Curve, int, int]]:
        """(curve, domain-side sign, label) triples.

        The sign is +1 when the domain lies inside the curve (outer curve)
        and -1 when it lies outside (inner curve).
        """
        s1_outer = self.spec.sigma1_label == "outer"
        out = [(self.spec.outer, 1, SIGMA1 if s1_outer else SIGMA2)]
        if self.spec.inner is not None:
            out.append((self.spec.inner, -1, SIGMA2 if s1_outer else SIGMA1))
        return out

    def curve_for(self, label: int) -> tuple[Curve, int]:
        for curve, sign, lab in self.curves:
            if lab == label:
                return curve, sign
        raise KeyError(label)

    @cached_property
    def edge_a(self) -> np.ndarray:
        return self.vertices[self.triangles[:, 0]]

    @cached_property
    def affine(self) -> np.ndarray:
        """Per-triangle matrix [b-a, c-a] (columns)."""
        v = self.vertices[self.triangles]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)

    @cached_property
    def affine_inv(self) -> np.ndarray:
        return np.linalg.inv(self.affine)

    @cached_property
    def _bary_coeffs(self) -> np.ndarray:
        return np.concatenate([self.edge_a, self.affine_inv.reshape(-1, 4)], axis=1)

    @cached_property
    def _cells_padded(self) -> np.ndarray:
        c = self.cell_triangles
        return np.concatenate([c[:1], c, c[-1:]], axis=0)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.det(self.affine)

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(nt, 3, 2) gradients of the three barycentric hat functions."""
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return np.einsum("ik,tkj->tij", ref, self.affine_inv)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return np.linalg.norm(v - np.roll(v, -1, axis=1), axis=-1)

    @property
    def max_edge(self) -> float:
        return float(self.edge_lengths.max())

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.vertex_flag != INTERIOR

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    # analytic boundary queries ----------------------------------------

    def level_sets(self, points) -> np.ndarray:
        """(n, n_curves) signed level-set values, positive outside the domain."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(p[:, 0], p[:, 1])
        th = np.arctan2(p[:, 1], p[:, 0])
        cols = [sign * (r - curve.radius(th)) for curve, sign, _ in self.curves]
        return np.stack(cols, axis=-1)

    def level_set_gradients(self, points) -> np.ndarray:
        """(n, n_curves, 2) gradients of the level-set functions."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(p[:, 0], p[:, 1])
        th = np.arctan2(p[:, 1], p[:, 0])
        er = np.stack([np.cos(th), np.sin(th)], axis=-1)
        et = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        rs = np.where(r > 0, r, 1.0)
        cols = []
        for curve, sign, _ in self.curves:
            g = er - (curve.dradius(th) / rs)[:, None] * et
            cols.append(sign * g)
        return np.stack(cols, axis=1)

    def outward_normals(self, points, curve_index) -> np.ndarray:
        """Outward unit normals of the domain at (near-)boundary points."""
        g = self.level_set_gradients(points)
        idx = np.broadcast_to(np.asarray(curve_index), (len(g),))
        n = g[np.arange(len(g)), idx]
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def label_of_curve(self, curve_index):
        labels = np.array([lab for _, _, lab in self.curves])
        return labels[np.asarray(curve_index)]

    def normalized_radius(self, points) -> np.ndarray:
        """s = 0 on the inner curve (or centre) and 1 on the outer curve."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(p[:, 0], p[:, 1])
        th = np.arctan2(p[:, 1], p[:, 0])
        r_out = self.spec.outer.radius(th)
        r_in = self.spec.inner.radius(th) if self.spec.inner is not None else 0.0
        return (r - r_in) / (r_out - r_in)

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        return np.max(self.level_sets(points), axis=1) <= tol


# construction -----------------------------------------------------------

def _counts(spec: DomainSpec, h: float) -> tuple[int, int]:
    theta = np.linspace(0.0, TWO_PI, 2048, endpoint=False)
    outer, inner = spec.outer, spec.inner
    r_out = outer.radius(theta)
    r_in = inner.radius(theta) if inner is not None else np.zeros_like(theta)
    n_r = max(1, math.ceil(np.max(r_out - r_in) / h))
    speed = outer.speed(theta).max()
    if inner is not None:
        speed = max(speed, inner.speed(theta).max())
    n_t = max(8, math.ceil(TWO_PI * speed / h))
    return n_r, n_t


def _polar_mesh(spec: DomainSpec, n_r: int, n_t: int) -> Mesh:
    theta = np.arange(n_t) * (TWO_PI / n_t)
    outer, inner = spec.outer, spec.inner
    r_out = outer.radius(theta)
    disc = inner is None
    r_in = np.zeros(n_t) if disc else inner.radius(theta)
    c, s = np.cos(theta), np.sin(theta)

    tris = []
    cells = np.empty((n_r, n_t, 2), dtype=np.int64)
    jn = (np.arange(n_t) + 1) % n_t
    j = np.arange(n_t)
    if disc:
        frac = np.arange(1, n_r + 1) / n_r
        rr = r_in[None, :] + frac[:, None] * (r_out - r_in)[None, :]
        pts = np.concatenate([[[0.0, 0.0]], np.stack([rr * c, rr * s], axis=-1).reshape(-1, 2)])

        def vid(i, jj):
            return 1 + (i - 1) * n_t + jj

        fan = np.stack([np.zeros(n_t, dtype=np.int64), vid(1, j), vid(1, jn)], axis=-1)
        tris.append(fan)
        cells[0, :, 0] = np.arange(n_t)
        cells[0, :, 1] = np.arange(n_t)
        first_ring = 1
    else:
        frac = np.arange(0, n_r + 1) / n_r
        rr = r_in[None, :] + frac[:, None] * (r_out - r_in)[None, :]
        pts = np.stack([rr * c, rr * s], axis=-1).reshape(-1, 2)

        def vid(i, jj):
            return i * n_t + jj

        first_ring = 0
    offset = sum(len(t) for t in tris)
    for i in range(first_ring, n_r):
        a, b = vid(i, j), vid(i, jn)
        d, e = vid(i + 1, j), vid(i + 1, jn)
        t1 = np.stack([a, e, b], axis=-1)
        t2 = np.stack([a, d, e], axis=-1)
        block = np.empty((2 * n_t, 3), dtype=np.int64)
        block[0::2] = t1
        block[1::2] = t2
        tris.append(block)
        cells[i, :, 0] = offset + 2 * np.arange(n_t)
        cells[i, :, 1] = offset + 2 * np.arange(n_t) + 1
        offset += 2 * n_t
    triangles = np.concatenate(tris).astype(np.int64)

    # snap boundary vertices exactly onto the analytic curves
    flag = np.zeros(len(pts), dtype=np.int8)
    s1_outer = spec.sigma1_label == "outer"
    outer_ids = vid(n_r, j)
    pts[outer_ids] = outer.point(theta)
    flag[outer_ids] = SIGMA1 if s1_outer else SIGMA2
    edges = [np.stack([vid(n_r, j), vid(n_r, jn)], axis=-1)]
    mid = (np.arange(n_t) + 0.5) * (TWO_PI / n_t)
    normals = [outer.normal(mid)]
    labels = [np.full(n_t, SIGMA1 if s1_outer else SIGMA2)]
    if not disc:
        inner_ids = vid(0, j)
        pts[inner_ids] = inner.point(theta)
        flag[inner_ids] = SIGMA2 if s1_outer else SIGMA1
        edges.append(np.stack([vid(0, jn), vid(0, j)], axis=-1))
        normals.append(-inner.normal(mid))
        labels.append(np.full(n_t, SIGMA2 if s1_outer else SIGMA1))

    mesh = Mesh(
        spec=spec,
        vertices=pts,
        triangles=triangles,
        boundary_edges=np.concatenate(edges).astype(np.int64),
        boundary_labels=np.concatenate(labels).astype(np.int8),
        boundary_normals=np.concatenate(normals),
        vertex_flag=flag,
        n_rings=n_r,
        n_sectors=n_t,
        cell_triangles=cells,
    )
    for arr in (mesh.vertices, mesh.triangles, mesh.boundary_edges, mesh.boundary_labels,
                mesh.boundary_normals, mesh.vertex_flag, mesh.cell_triangles):
        arr.setflags(write=False)
    return mesh


def build_mesh(spec: DomainSpec, h: float | None = None) -> Mesh:
    """Triangulate the domain with maximum edge length at most 1.5 h."""
    spec.validate()
    h = float(spec.mesh_target_h if h is None else h)
    n_r, n_t = _counts(spec, h)
    for _ in range(40):
        mesh = _polar_mesh(spec, n_r, n_t)
        if np.min(mesh.signed_areas) <= 0:
            raise MeshFailure("degenerate or inverted triangle produced")
        if mesh.max_edge <= 1.5 * h:
            return mesh
        n_r = math.ceil(n_r * 1.1)
        n_t = math.ceil(n_t * 1.1)
    raise MeshFailure(f"could not reach edge length {1.5 * h:g}")


def disc_mesh(radius: float = 1.0, h: float = 0.1) -> Mesh:
    """Disc fixture used by the elliptic tests."""
    return build_mesh(DomainSpec(kind="disc", R_outer=radius, R_inner=0.0, mesh_target_h=h))


# inner radius -----------------------------------------------------------

@dataclass(frozen=True)
class InnerRadius:
    rho: float
    candidate: float = 0.0
    shrinks: int = 0


def _ddradius(curve: Curve, theta):
    d = np.zeros(np.shape(theta))
    for m, a, b in curve.modes:
        d = d - a * m * m * np.cos(m * theta) - b * m * m * np.sin(m * theta)
    return d


def _curve_distance(curve: Curve, centres: np.ndarray, n_samples: int) -> np.ndarray:
    """Distance from points to a curve: dense sampling polished by Newton steps."""
    grid = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
    d0, k = cKDTree(curve.point(grid)).query(centres)
    th = grid[k]
    for _ in range(6):
        r, dr, ddr = curve.radius(th), curve.dradius(th), _ddradius(curve, th)
        c, s = np.cos(th), np.sin(th)
        g = np.stack([r * c, r * s], -1)
        g1 = np.stack([dr * c - r * s, dr * s + r * c], -1)
        g2 = np.stack([ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s], -1)
        diff = g - centres
        f = np.einsum("ij,ij->i", diff, g1)
        fp = np.einsum("ij,ij->i", g1, g1) + np.einsum("ij,ij->i", diff, g2)
        step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), 0.0)
        th = th - np.clip(step, -TWO_PI / n_samples, TWO_PI / n_samples)
    d1 = np.linalg.norm(curve.point(th) - centres, axis=1)
    return np.minimum(d0, d1)


def _boundary_distance(spec: DomainSpec, centres: np.ndarray, n_samples: int) -> np.ndarray:
    d = _curve_distance(spec.outer, centres, n_samples)
    if spec.inner is not None:
        d = np.minimum(d, _curve_distance(spec.inner, centres, n_samples))
    return d


def inner_radius(mesh: Mesh, spec: DomainSpec | None = None, n_boundary: int = 8192) -> InnerRadius:
    """Verified radius rho such that every vertex lies in a disc of radius rho inside D.

    Candidate discs are centred on the radial ray through the vertex and on
    the inward normal of the nearest curve.  The candidate radius shrinks by
    a factor 0.9 until every vertex is covered.
    """
    spec = spec or mesh.spec
    grid = np.linspace(0.0, TWO_PI, n_boundary, endpoint=False)
    if spec.inner is None:
        rho0 = float(np.min(spec.outer.radius(grid)))
    else:
        rho0 = 0.5 * float(np.min(_curve_distance(spec.inner, spec.outer.point(grid), n_boundary)))
    v = mesh.vertices
    th = np.arctan2(v[:, 1], v[:, 0])
    r = np.hypot(v[:, 0], v[:, 1])
    r_out = spec.outer.radius(th)
    r_in = spec.inner.radius(th) if spec.inner is not None else np.zeros_like(th)
    er = np.stack([np.cos(th), np.sin(th)], axis=-1)
    ls = mesh.level_sets(v)
    grads = mesh.level_set_gradients(v)
    near = np.argmax(ls, axis=1)
    n_in = -grads[np.arange(len(v)), near]
    n_in /= np.linalg.norm(n_in, axis=1, keepdims=True)
    mid = 0.5 * (r_in + r_out) if spec.inner is not None else np.zeros_like(r)
    tol = 1e-12 * max(1.0, float(spec.R_outer))
    rho = rho0
    for k in range(200):
        steps = np.linspace(-rho, rho, 9)
        cands = [v + np.clip(mid - r, -rho, rho)[:, None] * er, v + rho * n_in]
        cands += [v + t * er for t in steps]
        centres = np.stack(cands, axis=1)
        flat = centres.reshape(-1, 2)
        d = _boundary_distance(spec, flat, n_boundary)
        ok = (d >= rho - tol) & mesh.contains(flat, tol)
        if np.all(ok.reshape(len(v), -1).any(axis=1)):
            return InnerRadius(rho=float(rho), candidate=float(rho0), shrinks=k)
        rho *= 0.9
    raise MeshFailure("inner radius verification failed")


# point location -----------------------------------------------------------

@dataclass(frozen=True)
class PointLocation:
    inside: bool
    triangle: int
    barycentric: np.ndarray
    nearest_edge: int | None = None
    nearest_label: int | None = None
    signed_distance: float | None = None


def locate(mesh: Mesh, points, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized location.

    Returns (triangle index, barycentric coords (n,3), inside flag).  Points
    outside get the best candidate triangle, whose affine map extrapolates.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(p)
    n_r, n_t = mesh.n_rings, mesh.n_sectors
    x, y = p[:, 0], p[:, 1]
    th = np.arctan2(y, x)
    r = np.sqrt(x * x + y * y)
    theta = th + (th < 0) * TWO_PI
    j = np.minimum((theta * (n_t / TWO_PI)).astype(np.int64), n_t - 1)
    spec = mesh.spec
    r_out = spec.outer.radius(th) if spec.outer_perturbation else spec.R_outer
    if spec.inner is None:
        r_in = 0.0
    else:
        r_in = spec.inner.radius(th) if spec.inner_perturbation else spec.R_inner
    s = (r - r_in) / (r_out - r_in)
    i = np.floor(s * n_r)
    i = np.minimum(np.maximum(i, 0), n_r - 1).astype(np.int64)
    cand = mesh._cells_padded[i[:, None] + _RING_OFFSETS, j[:, None]].reshape(n, 6)
    lam = _bary(mesh, p[:, None, :], cand)
    score = lam.min(axis=-1)
    best = np.argmax(score, axis=1)
    rows = np.arange(n)
    tri = cand[rows, best]
    bary = lam[rows, best]
    best_score = score[rows, best]
    # rare fallback for strongly deformed cells: nearest centroids
    bad = (best_score < -tol) & (s >= 0) & (s <= 1)
    if np.any(bad):
        k = min(16, mesh.n_triangles)
        _, nb = mesh._centroid_tree.query(p[bad], k=k)
        nb = np.atleast_2d(nb)
        lam2 = _bary(mesh, p[bad][:, None, :], nb)
        sc2 = lam2.min(axis=-1)
        b2 = np.argmax(sc2, axis=1)
        r2 = np.arange(len(nb))
        better = sc2[r2, b2] > best_score[bad]
        idx = np.flatnonzero(bad)[better]
        tri[idx] = nb[r2, b2][better]
        bary[idx] = lam2[r2, b2][better]
        best_score[idx] = sc2[r2, b2][better]
    inside = best_score >= -tol
    return tri, bary, inside


_RING_OFFSETS = np.array([1, 0, 2])


def _bary(mesh: Mesh, p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    c = mesh._bary_coeffs[tri]  # (..., 6): a_x, a_y, inv00, inv01, inv10, inv11
    dx = p[..., 0] - c[..., 0]
    dy = p[..., 1] - c[..., 1]
    l1 = c[..., 2] * dx + c[..., 3] * dy
    l2 = c[..., 4] * dx + c[..., 5] * dy
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


def locate_point(mesh: Mesh, x: Sequence[float]) -> PointLocation:
    """Locate a single point; outside points also report the nearest boundary edge."""
    p = np.asarray(x, dtype=float).reshape(1, 2)
    tri, bary, inside = locate(mesh, p)
    if inside[0]:
        lam = np.clip(bary[0], 0.0, 1.0)
        lam = lam / lam.sum()
        return PointLocation(True, int(tri[0]), lam)
    e = mesh.boundary_edges
    d = _segment_distance(np.repeat(p, len(e), 0), mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])
    k = int(np.argmin(d))
    return PointLocation(
        False,
        int(tri[0]),
        bary[0],
        nearest_edge=k,
        nearest_label=int(mesh.boundary_labels[k]),
        signed_distance=float(d[k]),
    )


# export -----------------------------------------------------------------

def write_mesh_csv(mesh: Mesh, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vpath, tpath = directory / "vertices.csv", directory / "triangles.csv"
    with open(vpath, "w") as fh:
        fh.write("id,x,y,flag\n")
        for k, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{k},{float(x)!r},{float(y)!r},{int(mesh.vertex_flag[k])}\n")
    with open(tpath, "w") as fh:
        fh.write("v0,v1,v2\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a},{b},{c}\n")
    return [vpath, tpath]


def write_vtk(mesh: Mesh, path, point_data: dict[str, np.ndarray] | None = None) -> Path:
    """Legacy ASCII VTK unstructured grid with optional nodal scalars."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", "eulercert mesh", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(v)) for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path
