"""Conforming bisection refinement with boundary snapping.

Each tet is split across its refinement edge, which is always its longest
edge (ties broken by the sorted vertex pair, so the choice is deterministic
and shared by every tet around that edge).  Any tet left with a split edge
is itself bisected until no hanging midpoints remain.
"""
from __future__ import annotations

from collections import defaultdict, deque

import numpy as np

from .mesh import OBSTACLE, SPHERE, GeometryDescriptor, Mesh

__all__ = ["RefinementError", "refine_marked", "refine_uniform"]

_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class RefinementError(RuntimeError):
    pass


def _key(a, b):
    return (a, b) if a < b else (b, a)


def refine_marked(m: Mesh, marked, geom: GeometryDescriptor | None = None,
                  safety_factor: int = 20) -> Mesh:
    """Bisect every marked tet once and close the mesh conformingly.

    New vertices on sphere-tagged boundary edges are pushed radially onto
    ``|x| = geom.R``; on obstacle edges they go to ``geom.obstacle_radius``
    when the obstacle is a ball, otherwise the midpoint stays put.
    """
    marked = sorted({int(k) for k in marked})
    if not marked:
        return m
    nt0 = m.n_tets
    if marked[0] < 0 or marked[-1] >= nt0:
        raise IndexError("marked tet index out of range")

    verts = [tuple(p) for p in m.vertices.tolist()]
    tets = [tuple(t) for t in m.tets.tolist()]
    alive = [True] * nt0
    bfaces = {tuple(sorted(f)): int(g) for f, g in zip(m.bfaces.tolist(), m.btags.tolist())}
    bedges = {}
    for f, g in bfaces.items():
        for i, j in ((0, 1), (0, 2), (1, 2)):
            bedges[(f[i], f[j])] = g
    edge_tets = defaultdict(set)
    for t, tv in enumerate(tets):
        for i, j in _EDGE_PAIRS:
            edge_tets[_key(tv[i], tv[j])].add(t)
    midpoint = {}
    lengths = {}

    def elen(e):
        v = lengths.get(e)
        if v is None:
            a, b = verts[e[0]], verts[e[1]]
            v = ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2) ** 0.5
            lengths[e] = v
        return v

    def ref_edge(tv):
        best = None
        for i, j in _EDGE_PAIRS:
            e = _key(tv[i], tv[j])
            cand = (elen(e), e)
            if best is None or cand > best:
                best = cand
        return best[1]

    def new_vertex(e):
        a, b = verts[e[0]], verts[e[1]]
        p = np.array([(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2])
        tag = bedges.get(e)
        if geom is not None and tag == SPHERE:
            p *= geom.R / np.linalg.norm(p)
        elif geom is not None and tag == OBSTACLE and geom.obstacle_radius is not None:
            p *= geom.obstacle_radius / np.linalg.norm(p)
        verts.append(tuple(p))
        k = len(verts) - 1
        midpoint[e] = k
        if tag is not None:
            bedges[_key(e[0], k)] = tag
            bedges[_key(e[1], k)] = tag
        return k

    limit = safety_factor * max(nt0, 1)
    count = 0
    queue = deque(marked)
    while queue:
        t = queue.popleft()
        if not alive[t]:
            continue
        count += 1
        if count > limit:
            raise RefinementError(f"closure exceeded {limit} bisections; refinement state is tangled")
        tv = tets[t]
        e = ref_edge(tv)
        k = midpoint.get(e)
        if k is None:
            k = new_vertex(e)
        ia, ib = tv.index(e[0]), tv.index(e[1])
        others = [tv[i] for i in range(4) if i not in (ia, ib)]
        c1 = list(tv)
        c1[ib] = k          # keeps vertex e[0]
        c2 = list(tv)
        c2[ia] = k          # keeps vertex e[1]
        alive[t] = False
        for i, j in _EDGE_PAIRS:
            edge_tets[_key(tv[i], tv[j])].discard(t)
        # split boundary faces containing the bisected edge
        for o in others:
            f = tuple(sorted((e[0], e[1], o)))
            g = bfaces.pop(f, None)
            if g is not None:
                bfaces[tuple(sorted((e[0], k, o)))] = g
                bfaces[tuple(sorted((k, e[1], o)))] = g
                bedges[_key(k, o)] = g
        for child in (tuple(c1), tuple(c2)):
            tets.append(child)
            alive.append(True)
            cid = len(tets) - 1
            hanging = False
            for i, j in _EDGE_PAIRS:
                ce = _key(child[i], child[j])
                edge_tets[ce].add(cid)
                if ce in midpoint:
                    hanging = True
            if hanging:
                queue.append(cid)
        # neighbours around the split edge now have a hanging midpoint
        for nb in sorted(edge_tets.pop(e, ())):
            if alive[nb]:
                queue.append(nb)

    new_tets = np.array([tv for tv, a in zip(tets, alive) if a], dtype=np.int64)
    items = sorted(bfaces.items())
    bf = np.array([f for f, _ in items], dtype=np.int64).reshape(-1, 3)
    tags = np.array([g for _, g in items], dtype=np.int64)
    return Mesh(np.array(verts), new_tets, bf, tags)


def refine_uniform(m: Mesh, geom: GeometryDescriptor | None = None) -> Mesh:
    """One sweep marking every tet."""
    return refine_marked(m, range(m.n_tets), geom)
