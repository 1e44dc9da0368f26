"""Tetrahedral meshes of a spherical shell with tagged boundary faces."""
from __future__ import annotations

from dataclasses import dataclass, field
import os

import numpy as np

__all__ = [
    "OBSTACLE",
    "SPHERE",
    "Mesh",
    "MeshFormatError",
    "MeshValidationError",
    "ValidationReport",
    "GeometryDescriptor",
    "tet_volumes",
    "validate",
    "load_mesh",
    "save_mesh",
    "quality",
    "edge_lengths",
    "LOCAL_EDGES",
    "LOCAL_FACES",
]

OBSTACLE = 1
SPHERE = 2

# local vertex pairs of the six edges and the vertex triples of the four faces
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])  # face i opposite vertex i


class MeshFormatError(ValueError):
    pass


class MeshValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Vertices ``(nv, 3)``, tets ``(nt, 4)``, boundary faces ``(nb, 3)`` with tags ``(nb,)``."""

    vertices: np.ndarray
    tets: np.ndarray
    bfaces: np.ndarray
    btags: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.ascontiguousarray(self.tets, dtype=np.int64).reshape(-1, 4)
        f = np.ascontiguousarray(self.bfaces, dtype=np.int64).reshape(-1, 3)
        g = np.ascontiguousarray(self.btags, dtype=np.int64).reshape(-1)
        if f.shape[0] != g.shape[0]:
            raise ValueError("one tag per boundary face required")
        for a in (v, t, f, g):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "tets", t)
        object.__setattr__(self, "bfaces", f)
        object.__setattr__(self, "btags", g)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def volumes(self) -> np.ndarray:
        return tet_volumes(self.vertices, self.tets)

    def faces_with_tag(self, tag: int) -> np.ndarray:
        return self.bfaces[self.btags == tag]

    def tagged_vertices(self, tag: int) -> np.ndarray:
        return np.unique(self.faces_with_tag(tag))

    def outer_radius(self) -> float:
        """Mean distance of sphere-tagged vertices from the origin."""
        idx = self.tagged_vertices(SPHERE)
        if idx.size == 0:
            raise MeshValidationError("mesh has no sphere-tagged faces")
        return float(np.mean(np.linalg.norm(self.vertices[idx], axis=1)))

    def obstacle_radius(self) -> float:
        """Largest distance of an obstacle vertex from the origin (``R'`` for file meshes)."""
        idx = self.tagged_vertices(OBSTACLE)
        if idx.size == 0:
            raise MeshValidationError("mesh has no obstacle-tagged faces")
        return float(np.max(np.linalg.norm(self.vertices[idx], axis=1)))

    def diameters(self) -> np.ndarray:
        return edge_lengths(self.vertices, self.tets).max(axis=1)


@dataclass(frozen=True)
class GeometryDescriptor:
    """``obstacle_radius=None`` means a piecewise-linear obstacle taken from the mesh."""

    R: float
    obstacle_radius: float | None = None

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.obstacle_radius is not None and not (0 < self.obstacle_radius < self.R):
            raise ValueError("need 0 < obstacle radius < R")


@dataclass
class ValidationReport:
    ok: bool
    message: str = ""
    entity: tuple = field(default_factory=tuple)

    def __bool__(self):
        return self.ok

    def raise_if_failed(self):
        if not self.ok:
            raise MeshValidationError(self.message)


def tet_volumes(vertices, tets) -> np.ndarray:
    """Signed volumes ``det[x1-x0, x2-x0, x3-x0] / 6``."""
    p = np.asarray(vertices)[np.asarray(tets)]
    return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0


def edge_lengths(vertices, tets) -> np.ndarray:
    p = np.asarray(vertices)[np.asarray(tets)]
    return np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=-1)


def _sorted_faces(tets):
    f = np.asarray(tets)[:, LOCAL_FACES].reshape(-1, 3)
    return np.sort(f, axis=1)


def validate(m: Mesh, vol_tol: float = 0.0, radius_tol: float = 1e-12) -> ValidationReport:
    """Check orientation, conformity, boundary tags and sphere placement."""
    nv = m.n_vertices
    if m.n_tets == 0:
        return ValidationReport(False, "mesh has no tetrahedra")
    if m.tets.min() < 0 or m.tets.max() >= nv:
        bad = int(np.argmax((m.tets < 0).any(1) | (m.tets >= nv).any(1)))
        return ValidationReport(False, f"tet {bad} references a missing vertex", ("tet", bad))
    if np.any(np.sort(m.tets, axis=1)[:, 1:] == np.sort(m.tets, axis=1)[:, :-1]):
        bad = int(np.argmax((np.diff(np.sort(m.tets, axis=1), axis=1) == 0).any(1)))
        return ValidationReport(False, f"tet {bad} repeats a vertex", ("tet", bad))
    vol = m.volumes()
    if np.any(vol <= vol_tol):
        bad = int(np.argmin(vol))
        return ValidationReport(False, f"tet {bad} has non-positive volume {vol[bad]:.3e}", ("tet", bad))

    faces = _sorted_faces(m.tets)
    uniq, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        k = int(np.argmax(counts > 2))
        return ValidationReport(False, f"face {tuple(uniq[k])} is shared by {counts[k]} tets",
                                ("face", tuple(int(i) for i in uniq[k])))
    boundary = uniq[counts == 1]
    if m.bfaces.size and (m.bfaces.min() < 0 or m.bfaces.max() >= nv):
        return ValidationReport(False, "boundary face references a missing vertex")
    bsorted = np.sort(m.bfaces, axis=1)
    bu, bcount = np.unique(bsorted, axis=0, return_counts=True)
    if np.any(bcount > 1):
        k = int(np.argmax(bcount > 1))
        return ValidationReport(False, f"boundary face {tuple(bu[k])} listed twice",
                                ("bface", tuple(int(i) for i in bu[k])))
    if boundary.shape[0] != bsorted.shape[0] or not np.array_equal(boundary, bu):
        bset = {tuple(r) for r in bu.tolist()}
        fset = {tuple(r) for r in boundary.tolist()}
        missing = sorted(fset - bset)
        extra = sorted(bset - fset)
        if missing:
            return ValidationReport(False, f"exterior face {missing[0]} carries no boundary tag",
                                    ("face", missing[0]))
        return ValidationReport(False, f"tagged face {extra[0]} is not on the boundary",
                                ("bface", extra[0]))
    if np.any((m.btags != OBSTACLE) & (m.btags != SPHERE)):
        k = int(np.argmax((m.btags != OBSTACLE) & (m.btags != SPHERE)))
        return ValidationReport(False, f"boundary face {k} has unknown tag {m.btags[k]}", ("bface", k))

    # outward orientation of boundary faces is not required; placement on the sphere is
    sv = m.tagged_vertices(SPHERE)
    if sv.size:
        r = np.linalg.norm(m.vertices[sv], axis=1)
        R = m.outer_radius()
        dev = np.abs(r - R)
        if dev.max() > radius_tol * R:
            k = int(sv[np.argmax(dev)])
            return ValidationReport(False, f"sphere vertex {k} is off radius {R} by {dev.max():.3e}",
                                    ("vertex", k))
        ov = m.tagged_vertices(OBSTACLE)
        if ov.size and np.intersect1d(ov, sv).size:
            k = int(np.intersect1d(ov, sv)[0])
            return ValidationReport(False, f"vertex {k} lies on both obstacle and sphere", ("vertex", k))
    return ValidationReport(True, "ok")


def quality(m: Mesh) -> np.ndarray:
    """Circumradius over inradius per tet (3 for the regular tetrahedron)."""
    p = m.vertices[m.tets]
    a = p[:, 1:] - p[:, :1]
    vol6 = np.linalg.det(a)
    # circumcenter offset c solves 2 a c = |a|^2
    c = np.linalg.solve(2 * a, np.einsum("tij,tij->ti", a, a)[..., None])[..., 0]
    circ = np.linalg.norm(c, axis=1)
    area = 0.0
    for f in LOCAL_FACES:
        q = p[:, f]
        area = area + 0.5 * np.linalg.norm(np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]), axis=1)
    inr = 3 * (np.abs(vol6) / 6.0) / area
    return circ / inr


def save_mesh(m: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{m.n_vertices} {m.n_tets} {m.bfaces.shape[0]}\n")
        for x in m.vertices:
            fh.write(f"{x[0]:.17g} {x[1]:.17g} {x[2]:.17g}\n")
        for t in m.tets:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        for f, g in zip(m.bfaces, m.btags):
            fh.write(f"{f[0]} {f[1]} {f[2]} {g}\n")


def load_mesh(path, check: bool = True) -> Mesh:
    """Read the ASCII format written by :func:`save_mesh` and validate it."""
    path = os.fspath(path)
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    pos = 0

    def next_fields(count, kind, lineno_hint):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise MeshFormatError(f"{path}: unexpected end of file while reading {kind} {lineno_hint}")
        parts = lines[pos].split()
        pos += 1
        if len(parts) != count:
            raise MeshFormatError(f"{path}:{pos}: expected {count} fields for {kind}, got {len(parts)}")
        return parts, pos

    try:
        head, ln = next_fields(3, "header", "")
        nv, nt, nb = (int(s) for s in head)
    except ValueError as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"{path}:1: malformed header") from exc
    if min(nv, nt, nb) < 0:
        raise MeshFormatError(f"{path}:1: negative entity count")

    verts = np.empty((nv, 3))
    tets = np.empty((nt, 4), dtype=np.int64)
    bf = np.empty((nb, 3), dtype=np.int64)
    tags = np.empty(nb, dtype=np.int64)
    for i in range(nv):
        parts, ln = next_fields(3, "vertex", i)
        try:
            verts[i] = [float(s) for s in parts]
        except ValueError:
            raise MeshFormatError(f"{path}:{ln}: bad vertex coordinates") from None
    for i in range(nt):
        parts, ln = next_fields(4, "tet", i)
        try:
            tets[i] = [int(s) for s in parts]
        except ValueError:
            raise MeshFormatError(f"{path}:{ln}: bad tet indices") from None
    for i in range(nb):
        parts, ln = next_fields(4, "boundary face", i)
        try:
            vals = [int(s) for s in parts]
        except ValueError:
            raise MeshFormatError(f"{path}:{ln}: bad boundary face") from None
        bf[i] = vals[:3]
        tags[i] = vals[3]
    while pos < len(lines):
        if lines[pos].strip():
            raise MeshFormatError(f"{path}:{pos + 1}: trailing data")
        pos += 1
    m = Mesh(verts, tets, bf, tags)
    if check:
        validate(m).raise_if_failed()
    return m
