"""Mesh generators: icosphere shells and the U-shaped obstacle fixture."""
from __future__ import annotations

import numpy as np

from .mesh import OBSTACLE, SPHERE, Mesh, tet_volumes, validate

__all__ = ["icosphere", "generate_shell_mesh", "extrude_surface", "generate_ushape_mesh"]


def icosphere(subdiv: int):
    """Unit icosahedron refined ``subdiv`` times by edge midpoints, projected to the sphere."""
    if subdiv < 0:
        raise ValueError("subdiv must be nonnegative")
    t = (1 + 5 ** 0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdiv):
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                mid[key] = len(verts) - 1
            return mid[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces, dtype=np.int64)


def _split_prism(bottom, top):
    """Three tets of the prism ``bottom -> top`` using the index-ordered staircase.

    With the bottom vertices sorted ``a < b < c``, each quad face is cut along
    the diagonal from the lower vertex with the smaller index to the upper
    vertex with the larger one, so neighbouring prisms agree on shared quads.
    """
    order = np.argsort(bottom)
    a, b, c = (bottom[i] for i in order)
    a2, b2, c2 = (top[i] for i in order)
    return [(a, b, c, c2), (a, b, b2, c2), (a, a2, b2, c2)]


def extrude_surface(points, tris, layer_points, tag_inner=OBSTACLE, tag_outer=SPHERE):
    """Stack prisms over a closed triangulated surface.

    ``layer_points`` is a list of ``(nsurf, 3)`` arrays, one per layer surface
    (the first is usually ``points`` itself).  Surface vertex ``i`` on layer
    ``l`` receives global index ``l * nsurf + i``; this ordering is what makes
    the prism diagonals globally consistent.
    """
    nsurf = points.shape[0]
    L = len(layer_points) - 1
    verts = np.concatenate(layer_points, axis=0)
    tets = []
    for l in range(L):
        for tri in tris:
            bottom = [l * nsurf + int(i) for i in tri]
            top = [(l + 1) * nsurf + int(i) for i in tri]
            tets.extend(_split_prism(bottom, top))
    tets = np.array(tets, dtype=np.int64)
    vol = tet_volumes(verts, tets)
    if np.any(np.abs(vol) < 1e-300):
        raise RuntimeError("degenerate tetrahedron in prism split")
    flip = vol < 0
    tets[flip, 0], tets[flip, 1] = tets[flip, 1].copy(), tets[flip, 0].copy()
    bf = [tris, tris + L * nsurf]
    tags = [np.full(len(tris), tag_inner), np.full(len(tris), tag_outer)]
    return verts, tets, np.concatenate(bf), np.concatenate(tags)


def generate_shell_mesh(inner_radius: float, outer_radius: float, layers: int, subdiv: int) -> Mesh:
    """Shell ``inner < |x| < outer`` from an icosphere extruded in ``layers`` radial layers."""
    if not (0 < inner_radius < outer_radius):
        raise ValueError("need 0 < inner_radius < outer_radius")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    pts, tris = icosphere(subdiv)
    radii = np.linspace(inner_radius, outer_radius, layers + 1)
    verts, tets, bf, tags = extrude_surface(pts, tris, [r * pts for r in radii])
    m = Mesh(verts, tets, bf, tags)
    rep = validate(m)
    if not rep:
        raise RuntimeError(f"shell generator produced an invalid mesh: {rep.message}")
    return m


# Kuhn subdivision of the unit cube into six tets along the main diagonal
_KUHN = [(0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7), (0, 2, 6, 7), (0, 4, 5, 7), (0, 4, 6, 7)]


def _ushape_cells(n: int):
    """Cells of an ``n^3`` grid occupied by the U (open towards +z)."""
    occupied = np.zeros((n, n, n), dtype=bool)
    s = n // 6
    x_lo, x_hi = 1 * s, 5 * s        # cells 1..4 in x
    y_lo, y_hi = 2 * s, 4 * s        # cells 2..3 in y
    z_lo, z_hi = 1 * s, 5 * s        # cells 1..4 in z
    occupied[x_lo:x_lo + s, y_lo:y_hi, z_lo:z_hi] = True        # left prong
    occupied[x_hi - s:x_hi, y_lo:y_hi, z_lo:z_hi] = True        # right prong
    occupied[x_lo:x_hi, y_lo:y_hi, z_lo:z_lo + s] = True        # bar
    return occupied


def generate_ushape_mesh(half_width: float = 0.3, cells: int = 6, R: float = 0.7,
                         layers: int = 2) -> Mesh:
    """Box ``[-half_width, half_width]^3`` minus a U-shaped hole, wrapped in a shell to ``|x| = R``."""
    if cells % 6:
        raise ValueError("cells must be a multiple of 6")
    if not R > half_width * 3 ** 0.5:
        raise ValueError("outer sphere must enclose the box")
    n = cells
    h = 2 * half_width / n
    g = np.arange(n + 1)
    I, J, K = np.meshgrid(g, g, g, indexing="ij")
    grid = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=1)
    gid = lambda i, j, k: (i * (n + 1) + j) * (n + 1) + k
    hole = _ushape_cells(n)
    tets = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if hole[i, j, k]:
                    continue
                corner = [gid(i + (c >> 2 & 1), j + (c >> 1 & 1), k + (c & 1)) for c in range(8)]
                for t in _KUHN:
                    tets.append([corner[q] for q in t])
    tets = np.array(tets, dtype=np.int64)
    pts = -half_width + h * grid.astype(float)

    # exterior faces of the box part: either on the box surface or on the hole
    faces = np.sort(tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3), axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    ext = uniq[counts == 1]
    # a face lies on the box surface iff its three vertices share a coordinate at +-half_width
    on_box = np.zeros(len(ext), dtype=bool)
    for ax in range(3):
        for sgn in (-1, 1):
            on_box |= np.all(np.isclose(pts[ext][:, :, ax], sgn * half_width), axis=1)
    hole_faces = ext[~on_box]
    box_faces = ext[on_box]

    # compact the box-surface vertices and extrude them radially to R
    surf_ids = np.unique(box_faces)
    local = -np.ones(pts.shape[0], dtype=np.int64)
    local[surf_ids] = np.arange(surf_ids.size)
    spts = pts[surf_ids]
    sdir = spts / np.linalg.norm(spts, axis=1, keepdims=True)
    layer_pts = [spts + (l / layers) * (R * sdir - spts) for l in range(layers + 1)]
    sverts, stets, sbf, stags = extrude_surface(spts, local[box_faces], layer_pts)
    outer = sbf[stags == SPHERE]

    # merge: box vertices first, then the extruded layers above the box surface
    nsurf = surf_ids.size
    nbox = pts.shape[0]
    remap = np.empty(sverts.shape[0], dtype=np.int64)
    remap[:nsurf] = surf_ids
    remap[nsurf:] = nbox + np.arange(sverts.shape[0] - nsurf)
    verts = np.concatenate([pts, sverts[nsurf:]])
    all_tets = np.concatenate([tets, remap[stets]])
    vol = tet_volumes(verts, all_tets)
    flip = vol < 0
    all_tets[flip, 0], all_tets[flip, 1] = all_tets[flip, 1].copy(), all_tets[flip, 0].copy()
    bf = np.concatenate([hole_faces, remap[outer]])
    tags = np.concatenate([np.full(len(hole_faces), OBSTACLE), np.full(len(outer), SPHERE)])

    # drop unused grid vertices (interior of the hole)
    used = np.unique(all_tets)
    newid = -np.ones(verts.shape[0], dtype=np.int64)
    newid[used] = np.arange(used.size)
    m = Mesh(verts[used], newid[all_tets], newid[bf], tags)
    rep = validate(m)
    if not rep:
        raise RuntimeError(f"U-shape generator produced an invalid mesh: {rep.message}")
    return m
