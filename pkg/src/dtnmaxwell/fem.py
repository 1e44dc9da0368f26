"""Lowest-order edge elements with a truncated DtN boundary term.

Unknowns are the line integrals of the field along the mesh edges, each
edge oriented from its smaller to its larger global vertex index.  On a tet
the local edge ``(a, b)`` carries the Whitney function
``w = lam_a grad(lam_b) - lam_b grad(lam_a)``.

The boundary term on ``|x| = R`` is represented through the spectra of the
basis traces: ``P[j, q] = int trace(w_j) . conj(B_q) ds`` with ``B_q`` running
over ``U_n^m`` then ``V_n^m``.  The sesquilinear form contributes
``-i k sum_q g_q P[j, q] conj(P[k, q])`` at (test ``k``, trial ``j``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dtn import ConfigurationError, DtnFactors, WaveParams
from .harmonics import TangentialSpectrum, local_frame, num_modes, spherical_coords, vsh_components
from .mesh import LOCAL_EDGES, LOCAL_FACES, OBSTACLE, SPHERE, Mesh
from .quadrature import tet_rule, triangle_rule

__all__ = [
    "DofMap",
    "build_dof_map",
    "tet_geometry",
    "element_matrices",
    "whitney_values",
    "SphereFaceQuadrature",
    "sphere_face_quadrature",
    "face_degrees",
    "check_resolution",
    "trace_spectra",
    "BoundaryCoupling",
    "dtn_coupling_block",
    "AssembledSystem",
    "assemble",
    "FieldSolution",
    "solve",
    "interpolate",
    "edge_integrals",
    "hcurl_error",
    "SolverError",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------- dofs

@dataclass(frozen=True)
class DofMap:
    edges: np.ndarray        # (ne, 2) global vertex pairs, first < second
    tet_edges: np.ndarray    # (nt, 6) global edge index per local edge
    tet_signs: np.ndarray    # (nt, 6) +1 if local orientation matches the global one
    dirichlet: np.ndarray    # sorted edge indices on the obstacle
    sphere: np.ndarray       # sorted edge indices on |x| = R

    @property
    def n_dofs(self) -> int:
        return self.edges.shape[0]

    def edge_index(self, a, b):
        """Global indices of edges ``(a, b)`` (arrays allowed)."""
        a, b = np.minimum(a, b), np.maximum(a, b)
        nv = int(self.edges.max()) + 1
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        q = np.asarray(a) * nv + np.asarray(b)
        idx = np.searchsorted(keys, q)
        if np.any(idx >= keys.size) or np.any(keys[np.minimum(idx, keys.size - 1)] != q):
            raise KeyError("edge not in mesh")
        return idx


def build_dof_map(m: Mesh) -> DofMap:
    nv = m.n_vertices
    loc = m.tets[:, LOCAL_EDGES]                 # (nt, 6, 2)
    a, b = loc[..., 0], loc[..., 1]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = lo * nv + hi
    uniq, inv = np.unique(keys.ravel(), return_inverse=True)
    edges = np.stack([uniq // nv, uniq % nv], axis=1)
    tet_edges = inv.reshape(keys.shape)
    signs = np.where(a < b, 1, -1).astype(np.int8)

    def tagged(tag):
        f = m.faces_with_tag(tag)
        if f.size == 0:
            return np.zeros(0, dtype=np.int64)
        fe = np.sort(f[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2), axis=1)
        return np.unique(np.searchsorted(uniq, fe[:, 0] * nv + fe[:, 1]))

    return DofMap(edges, tet_edges, signs, tagged(OBSTACLE), tagged(SPHERE))


# ---------------------------------------------------------------- element level

def tet_geometry(vertices, tets):
    """Barycentric gradients ``(nt, 4, 3)`` and volumes ``(nt,)``."""
    p = np.asarray(vertices)[np.asarray(tets)]
    J = p[:, 1:] - p[:, :1]                      # rows x_k - x_0
    vol = np.linalg.det(J) / 6.0
    if np.any(vol <= 0):
        k = int(np.argmin(vol))
        raise ValueError(f"tet {k} is degenerate or inverted (volume {vol[k]:.3e})")
    G = np.linalg.inv(J)                         # grad lam_k = G[:, k-1]
    g = np.empty((p.shape[0], 4, 3))
    g[:, 1:] = np.transpose(G, (0, 2, 1))
    g[:, 0] = -g[:, 1:].sum(axis=1)
    return g, vol


def _local_curls(grads):
    """Curls of the six local Whitney functions, ``(nt, 6, 3)``."""
    ga = grads[:, LOCAL_EDGES[:, 0]]
    gb = grads[:, LOCAL_EDGES[:, 1]]
    return 2.0 * np.cross(ga, gb)


def _mass_closed_form(grads, vol):
    GG = np.einsum("tic,tjc->tij", grads, grads)
    eye = np.eye(4)
    M = np.empty((grads.shape[0], 6, 6))
    for i, (a, b) in enumerate(LOCAL_EDGES):
        for j, (c, d) in enumerate(LOCAL_EDGES):
            # int lam_p lam_q = vol (1 + delta_pq) / 20
            M[:, i, j] = (GG[:, b, d] * (1 + eye[a, c]) - GG[:, b, c] * (1 + eye[a, d])
                          - GG[:, a, d] * (1 + eye[b, c]) + GG[:, a, c] * (1 + eye[b, d]))
    return M * (vol / 20.0)[:, None, None]


def element_matrices(tet_vertices):
    """Stiffness and mass of the Whitney functions on one or more tets.

    ``tet_vertices`` has shape ``(4, 3)`` or ``(nt, 4, 3)``; matrices are in
    local orientation (edge ``(a, b)`` with ``a < b`` in local numbering).
    """
    p = np.asarray(tet_vertices, dtype=float)
    single = p.ndim == 2
    p = p.reshape(-1, 4, 3)
    grads, vol = tet_geometry(p.reshape(-1, 3), np.arange(p.shape[0] * 4).reshape(-1, 4))
    curls = _local_curls(grads)
    K = np.einsum("tic,tjc->tij", curls, curls) * vol[:, None, None]
    M = _mass_closed_form(grads, vol)
    return (K[0], M[0]) if single else (K, M)


def whitney_values(grads, bary):
    """Local Whitney functions at barycentric points.

    ``grads`` ``(nt, 4, 3)``, ``bary`` ``(nt, q, 4)`` or ``(q, 4)``; returns
    ``(nt, q, 6, 3)``.
    """
    bary = np.asarray(bary)
    if bary.ndim == 2:
        bary = np.broadcast_to(bary, (grads.shape[0],) + bary.shape)
    la = bary[:, :, LOCAL_EDGES[:, 0]]
    lb = bary[:, :, LOCAL_EDGES[:, 1]]
    ga = grads[:, None, LOCAL_EDGES[:, 0]]
    gb = grads[:, None, LOCAL_EDGES[:, 1]]
    return la[..., None] * gb - lb[..., None] * ga


# ---------------------------------------------------------------- boundary quadrature

def _face_owners(m: Mesh, faces):
    """Owning tet and local face number for each boundary face."""
    nv = m.n_vertices
    tf = np.sort(m.tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    tkeys = (tf[:, 0] * nv + tf[:, 1]) * nv + tf[:, 2]
    order = np.argsort(tkeys, kind="stable")
    sf = np.sort(faces, axis=1)
    q = (sf[:, 0] * nv + sf[:, 1]) * nv + sf[:, 2]
    pos = np.searchsorted(tkeys[order], q)
    hit = order[np.minimum(pos, order.size - 1)]
    if np.any(tkeys[hit] != q):
        raise ValueError("boundary face not found among tet faces")
    return hit // 4, hit % 4


@dataclass(frozen=True)
class SphereFaceQuadrature:
    """Planar-face Gauss points on ``Gamma_R`` faces, pushed radially onto the sphere.

    ``weights`` already include the projection Jacobian, so they integrate
    over the sphere itself; the discrete field is evaluated at ``bary``
    (the planar pre-image inside the owning tet).
    """

    R: float
    degree: int
    face_tet: np.ndarray      # (nf,)
    face_local: np.ndarray    # (nf,) local face number = opposite vertex
    face_normal: np.ndarray   # (nf, 3) outward planar normal
    face_area: np.ndarray     # (nf,) planar area
    point_face: np.ndarray    # (np,)
    bary: np.ndarray          # (np, 4) barycentric coords in the owning tet
    planar: np.ndarray        # (np, 3)
    points: np.ndarray        # (np, 3) on the sphere
    weights: np.ndarray       # (np,)
    planar_weights: np.ndarray
    face_degree: np.ndarray | None = None
    resolved_N: int | None = None   # harmonic degree the per-face rules were sized for

    @property
    def n_faces(self) -> int:
        return self.face_tet.size

    def angles(self):
        _, th, ph = spherical_coords(self.points)
        return th, ph


def face_degrees(fp, R: float, N: int, cap: int, tol: float = 1e-12) -> np.ndarray:
    """Per-face rule degree that resolves degree-``N`` harmonics on each face.

    A degree-``N`` harmonic restricted to a face of angular diameter ``a``
    deviates from its degree-``d`` Taylor polynomial by at most
    ``rho**(d+1)/(d+1)!`` with ``rho = N a / 2``; the smallest ``d`` meeting
    ``tol`` is used, clamped to ``[4, cap]``.
    """
    ed = np.stack([fp[:, 1] - fp[:, 0], fp[:, 2] - fp[:, 0], fp[:, 2] - fp[:, 1]], axis=1)
    a = np.linalg.norm(ed, axis=2).max(axis=1) / R
    rho = 0.5 * max(N, 1) * a + 1.0     # +1 for the radial projection and Jacobian
    d = np.full(a.size, cap, dtype=np.int64)
    found = np.zeros(a.size, dtype=bool)
    bound = np.ones(a.size)
    for k in range(1, cap + 2):
        bound = bound * rho / k
        new = (bound <= tol) & ~found
        d[new] = k - 1
        found |= new
    return np.clip(d + 1, 4, cap)


def sphere_face_quadrature(m: Mesh, R: float, degree: int, N: int | None = None,
                           tol: float = 1e-12) -> SphereFaceQuadrature:
    """Quadrature on the sphere faces; ``degree`` is the rule degree used on every face.

    With ``N`` given, ``degree`` becomes a cap and each face gets the lowest
    degree from :func:`face_degrees`; the extra ``+1`` there covers the
    linear Whitney factor.
    """
    faces = m.faces_with_tag(SPHERE)
    if faces.size == 0:
        raise ConfigurationError("mesh has no sphere-tagged faces")
    ft, fl = _face_owners(m, faces)
    nf = faces.shape[0]
    fverts = LOCAL_FACES[fl]                                   # (nf, 3) local vertex ids
    tv = m.vertices[m.tets[ft]]                                # (nf, 4, 3)
    fp = np.take_along_axis(tv, fverts[:, :, None], axis=1)    # (nf, 3, 3)
    nrm = np.cross(fp[:, 1] - fp[:, 0], fp[:, 2] - fp[:, 0])
    area = 0.5 * np.linalg.norm(nrm, axis=1)
    nrm /= (2 * area)[:, None]
    flip = np.einsum("fc,fc->f", nrm, fp.mean(axis=1)) < 0
    nrm[flip] *= -1
    fdeg = np.full(nf, degree, dtype=np.int64) if N is None else face_degrees(fp, R, N, degree, tol)

    pf, bl, pw = [], [], []
    for d in np.unique(fdeg):
        idx = np.nonzero(fdeg == d)[0]
        tb, tw = triangle_rule(int(d))
        nq = tw.size
        bary = np.zeros((idx.size, nq, 4))
        # barycentric coordinates in the tet: zero at the opposite vertex
        for k in range(3):
            np.put_along_axis(bary, np.repeat(fverts[idx, None, k:k + 1], nq, axis=1),
                              np.broadcast_to(tb[None, :, k:k + 1], (idx.size, nq, 1)), axis=2)
        pf.append(np.repeat(idx, nq))
        bl.append(bary.reshape(-1, 4))
        pw.append((area[idx, None] * tw[None, :]).ravel())
    point_face = np.concatenate(pf)
    order = np.argsort(point_face, kind="stable")
    point_face = point_face[order]
    bary = np.concatenate(bl)[order]
    pw = np.concatenate(pw)[order]
    planar = np.einsum("pi,pic->pc", bary, tv[point_face])
    r = np.linalg.norm(planar, axis=1)
    xhat = planar / r[:, None]
    jac = (R / r) ** 2 * np.einsum("pc,pc->p", xhat, nrm[point_face])
    if np.any(jac <= 0):
        raise ValueError("sphere face is not radially visible from the origin")
    return SphereFaceQuadrature(
        R=R, degree=degree, face_tet=ft, face_local=fl, face_normal=nrm, face_area=area,
        point_face=point_face, bary=bary, planar=planar, points=R * xhat,
        weights=pw * jac, planar_weights=pw, face_degree=fdeg, resolved_N=N)


def _planar_traces(m: Mesh, dofs: DofMap, fq: SphereFaceQuadrature):
    """Planar tangential traces of the three face-edge basis functions.

    Returns ``(gidx (np, 3), vals (np, 3, 3))``: global edge index and the
    signed trace vector of each face edge at each point.
    """
    pf = fq.point_face
    grads, _ = tet_geometry(m.vertices, m.tets[fq.face_tet])
    W = whitney_values(grads[pf], fq.bary[:, None, :])[:, 0]   # (np, 6, 3)
    n = fq.face_normal[pf]
    W = W - np.einsum("pec,pc->pe", W, n)[..., None] * n[:, None, :]
    # the three local edges that avoid the opposite vertex
    face_edges = np.array([[e for e in range(6) if v not in LOCAL_EDGES[e]] for v in range(4)])
    le = face_edges[fq.face_local]                            # (nf, 3)
    sign = np.take_along_axis(dofs.tet_signs[fq.face_tet], le, axis=1)
    gidx = np.take_along_axis(dofs.tet_edges[fq.face_tet], le, axis=1)
    vals = np.take_along_axis(W, le[pf][:, :, None], axis=1) * sign[pf][:, :, None]
    return gidx[pf], vals


def check_resolution(fq: SphereFaceQuadrature, N: int) -> None:
    if fq.degree < 2 * N + 2:
        raise ConfigurationError(f"boundary quadrature degree {fq.degree} < 2N+2 = {2 * N + 2}")
    if fq.resolved_N is not None and fq.resolved_N < N:
        raise ConfigurationError(f"face rules sized for degree {fq.resolved_N} < N = {N}")


def trace_spectra(m: Mesh, dofs: DofMap, fq: SphereFaceQuadrature, N: int, chunk: int = 4096):
    """``P`` with shape ``(len(dofs.sphere), 2M)``: U-coefficients then V-coefficients."""
    check_resolution(fq, N)
    M = num_modes(N)
    ns = dofs.sphere.size
    local = -np.ones(dofs.n_dofs, dtype=np.int64)
    local[dofs.sphere] = np.arange(ns)
    gidx, vals = _planar_traces(m, dofs, fq)
    lidx = local[gidx]
    if np.any(lidx < 0):
        raise ValueError("face edge missing from the sphere dof set")
    th, ph = fq.angles()
    _, e_t, e_p = local_frame(th, ph)
    vt = np.einsum("pjc,pc->pj", vals, e_t) * fq.weights[:, None]
    vp = np.einsum("pjc,pc->pj", vals, e_p) * fq.weights[:, None]
    P = np.zeros((ns, 2 * M), dtype=complex)
    npts = th.size
    for s in range(0, npts, chunk):
        e = min(npts, s + chunk)
        _, ut, up = vsh_components(N, th[s:e], ph[s:e], fq.R)
        rows = lidx[s:e].ravel()
        cols = np.repeat(np.arange(e - s), 3)
        St = sp.csr_matrix((vt[s:e].ravel(), (rows, cols)), shape=(ns, e - s))
        Sp = sp.csr_matrix((vp[s:e].ravel(), (rows, cols)), shape=(ns, e - s))
        ut, up = ut.conj(), up.conj()
        # U = ut e_theta + up e_phi, V = -up e_theta + ut e_phi
        P[:, :M] += St @ ut + Sp @ up
        P[:, M:] += Sp @ ut - St @ up
    return P


@dataclass
class BoundaryCoupling:
    """Boundary term ``conj(P) diag(gdiag) P^T`` over the sphere dofs."""

    sphere: np.ndarray
    P: np.ndarray
    gdiag: np.ndarray          # -i k g per column of P
    N: int

    def dense(self) -> np.ndarray:
        keep = self.gdiag != 0
        return (self.P[:, keep].conj() * self.gdiag[keep]) @ self.P[:, keep].T

    def spectrum(self, x_sphere, R) -> TangentialSpectrum:
        """Spectrum of the trace of ``sum_j x_j w_j`` over the sphere dofs."""
        c = np.asarray(x_sphere) @ self.P
        M = num_modes(self.N)
        phi1, phi2 = c[:M].copy(), c[M:].copy()
        phi1[0] = phi2[0] = 0
        return TangentialSpectrum(self.N, R, phi1, phi2)


def dtn_coupling_block(m: Mesh, dofs: DofMap, F: DtnFactors, w: WaveParams,
                       fq: SphereFaceQuadrature | None = None, degree: int | None = None) -> BoundaryCoupling:
    """DtN coupling over the sphere dofs; ``.dense()`` gives the assembled term ``-i k B``."""
    if fq is None:
        fq = (sphere_face_quadrature(m, w.R, max(4, 2 * F.N + 2), N=F.N) if degree is None
              else sphere_face_quadrature(m, w.R, degree))
    P = trace_spectra(m, dofs, fq, F.N)
    g1, g2 = F.per_mode(F.N)
    gdiag = -1j * w.kappa * np.concatenate([g1, g2])
    return BoundaryCoupling(dofs.sphere, P, gdiag, F.N)


# ---------------------------------------------------------------- assembly

def edge_integrals(vertices, edges, sampler, npts: int = 2):
    """``int_e E . t ds`` with ``t`` the unnormalized edge vector (Gauss rule on each edge)."""
    x, wq = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1)
    wq = 0.5 * wq
    a = vertices[edges[:, 0]]
    d = vertices[edges[:, 1]] - a
    pts = a[:, None, :] + s[None, :, None] * d[:, None, :]
    vals = sampler(pts.reshape(-1, 3))
    if isinstance(vals, tuple):
        vals = vals[0]
    vals = np.asarray(vals, dtype=complex).reshape(edges.shape[0], npts, 3)
    return np.einsum("q,eqc,ec->e", wq, vals, d)


def interpolate(m: Mesh, dofs: DofMap, sampler, npts: int = 2) -> "FieldSolution":
    """Edge interpolant of a sampler (``x -> E`` or ``x -> (E, curl E)``)."""
    c = edge_integrals(m.vertices, dofs.edges, sampler, npts)
    return FieldSolution(m, dofs, c)


@dataclass
class AssembledSystem:
    A: sp.csr_matrix                    # curl-curl minus k^2 mass, complex
    coupling: BoundaryCoupling | None
    rhs: np.ndarray
    dirichlet: np.ndarray
    dirichlet_values: np.ndarray
    mesh: Mesh
    dofs: DofMap
    kappa: float
    lowrank_threshold: int = 4000

    def boundary_matrix(self) -> sp.csr_matrix:
        """The DtN term ``-i k B`` scattered to global size."""
        n = self.dofs.n_dofs
        if self.coupling is None or self.coupling.sphere.size == 0:
            return sp.csr_matrix((n, n), dtype=complex)
        s = self.coupling.sphere
        D = sp.coo_matrix(self.coupling.dense())
        return sp.csr_matrix((D.data, (s[D.row], s[D.col])), shape=(n, n))

    def full_matrix(self) -> sp.csr_matrix:
        return (self.A + self.boundary_matrix()).tocsr()

    def apply(self, x):
        y = self.A @ x
        if self.coupling is not None and self.coupling.sphere.size:
            c = self.coupling
            keep = c.gdiag != 0
            t = x[c.sphere] @ c.P[:, keep]
            y[c.sphere] += c.P[:, keep].conj() @ (c.gdiag[keep] * t)
        return y


def assemble(m: Mesh, dofs: DofMap, w: WaveParams, F: DtnFactors | None,
             f_spectrum: TangentialSpectrum | None = None, dirichlet="require",
             fq: SphereFaceQuadrature | None = None, lowrank_threshold: int = 4000) -> AssembledSystem:
    """Global system for ``a(E, psi) = int f . conj(psi)``.

    ``dirichlet`` is ``"zero"`` (perfect conductor), a sampler giving the field
    whose tangential edge integrals are imposed on the obstacle, or an array of
    edge values.  Leaving it unspecified on a mesh with obstacle faces is a
    configuration error.
    """
    grads, vol = tet_geometry(m.vertices, m.tets)
    curls = _local_curls(grads)
    K = np.einsum("tic,tjc->tij", curls, curls) * vol[:, None, None]
    Me = _mass_closed_form(grads, vol)
    s = dofs.tet_signs.astype(float)
    Ae = (K - w.kappa ** 2 * Me) * s[:, :, None] * s[:, None, :]
    rows = np.repeat(dofs.tet_edges, 6, axis=1).ravel()
    cols = np.tile(dofs.tet_edges, (1, 6)).ravel()
    n = dofs.n_dofs
    A = sp.csr_matrix((Ae.ravel().astype(complex), (rows, cols)), shape=(n, n))
    A.sum_duplicates()

    coupling = None
    rhs = np.zeros(n, dtype=complex)
    if F is not None and F.N >= 1:
        if fq is None:
            fq = sphere_face_quadrature(m, w.R, max(4, 2 * F.N + 2), N=F.N)
        coupling = dtn_coupling_block(m, dofs, F, w, fq)
        if f_spectrum is not None:
            f = f_spectrum.truncated(F.N)
            fc = np.concatenate([f.phi1, f.phi2])
            rhs[dofs.sphere] += coupling.P.conj() @ fc
    elif f_spectrum is not None and f_spectrum.max_abs() > 0:
        raise ConfigurationError("boundary source given without DtN factors")

    if isinstance(dirichlet, str):
        if dirichlet == "zero":
            gvals = np.zeros(dofs.dirichlet.size, dtype=complex)
        elif dofs.dirichlet.size:
            raise ConfigurationError("obstacle boundary present but no Dirichlet data given")
        else:
            gvals = np.zeros(0, dtype=complex)
    elif callable(dirichlet):
        gvals = edge_integrals(m.vertices, dofs.edges[dofs.dirichlet], dirichlet)
    else:
        gvals = np.asarray(dirichlet, dtype=complex)
        if gvals.shape != dofs.dirichlet.shape:
            raise ConfigurationError("Dirichlet value array does not match the obstacle edges")
    return AssembledSystem(A, coupling, rhs, dofs.dirichlet.copy(), gvals, m, dofs, w.kappa,
                           lowrank_threshold)


# ---------------------------------------------------------------- solution

@dataclass
class FieldSolution:
    mesh: Mesh
    dofs: DofMap
    coeffs: np.ndarray
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    def _signed(self, tets=None):
        te = self.dofs.tet_edges if tets is None else self.dofs.tet_edges[tets]
        sg = self.dofs.tet_signs if tets is None else self.dofs.tet_signs[tets]
        return self.coeffs[te] * sg

    def curls(self, tets=None) -> np.ndarray:
        """Elementwise constant curl ``(nt, 3)``."""
        t = np.arange(self.mesh.n_tets) if tets is None else np.asarray(tets)
        grads, _ = tet_geometry(self.mesh.vertices, self.mesh.tets[t])
        return np.einsum("te,tec->tc", self._signed(t), _local_curls(grads))

    def values(self, tets, bary) -> np.ndarray:
        """Field at barycentric points; ``bary`` ``(q, 4)`` or ``(nt, q, 4)`` -> ``(nt, q, 3)``."""
        t = np.asarray(tets)
        grads, _ = tet_geometry(self.mesh.vertices, self.mesh.tets[t])
        W = whitney_values(grads, bary)
        return np.einsum("te,tqec->tqc", self._signed(t), W)

    def barycenter_values(self) -> np.ndarray:
        return self.values(np.arange(self.mesh.n_tets), np.full((1, 4), 0.25))[:, 0]


def solve(sys: AssembledSystem, check: float = 1e-10) -> FieldSolution:
    """Eliminate the obstacle dofs and solve with a sparse LU factorization.

    The DtN block is added densely when it covers at most ``lowrank_threshold``
    sphere dofs and is otherwise kept in factored form and handled with the
    Sherman-Morrison-Woodbury identity.
    """
    t0 = time.perf_counter()
    n = sys.dofs.n_dofs
    x = np.zeros(n, dtype=complex)
    D = sys.dirichlet
    x[D] = sys.dirichlet_values
    free = np.setdiff1d(np.arange(n), D)
    b_full = sys.rhs - sys.apply(x)
    b = b_full[free]
    c = sys.coupling
    use_lowrank = c is not None and c.sphere.size > sys.lowrank_threshold
    if c is not None and not use_lowrank:
        Af = sys.full_matrix()[free][:, free].tocsc()
    else:
        Af = sys.A[free][:, free].tocsc()
    try:
        lu = spla.splu(Af, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    y = lu.solve(b)
    if use_lowrank:
        # (A + L G Rt)^-1 b = y - Z G (I + Rt Z G)^-1 Rt y, Z = A^-1 L
        pos = -np.ones(n, dtype=np.int64)
        pos[free] = np.arange(free.size)
        ls = pos[c.sphere]
        ok = ls >= 0
        keep = c.gdiag != 0
        Pk = c.P[ok][:, keep]
        G = c.gdiag[keep]
        L = np.zeros((free.size, Pk.shape[1]), dtype=complex)
        L[ls[ok]] = Pk.conj()
        Z = lu.solve(L)
        Rt = np.zeros((Pk.shape[1], free.size), dtype=complex)
        Rt[:, ls[ok]] = Pk.T
        small = np.eye(G.size) + (Rt @ Z) * G[None, :]
        y = y - (Z * G[None, :]) @ np.linalg.solve(small, Rt @ y)
    x[free] = y
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    r = (sys.apply(x) - sys.rhs)[free]
    nb = np.linalg.norm(b_full[free])
    res = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
    if res > check:
        log.warning("relative residual %.3e exceeds %.1e", res, check)
    return FieldSolution(sys.mesh, sys.dofs, x, res,
                         {"lowrank": use_lowrank, "solve_time_s": time.perf_counter() - t0})


# ---------------------------------------------------------------- errors

def hcurl_error(sol: FieldSolution, exact, degree: int = 5, per_tet: bool = False):
    """``(||E - E_h||^2 + ||curl(E - E_h)||^2)^(1/2)`` by elementwise quadrature.

    ``exact`` maps points ``(npts, 3)`` to ``(E, curl E)``.
    """
    if degree < 4:
        raise ValueError("use quadrature degree >= 4")
    m = sol.mesh
    bary, wq = tet_rule(degree)
    nt = m.n_tets
    out = np.empty(nt)
    chunk = max(1, 200_000 // wq.size)
    for s in range(0, nt, chunk):
        t = np.arange(s, min(nt, s + chunk))
        grads, vol = tet_geometry(m.vertices, m.tets[t])
        pts = np.einsum("qi,tic->tqc", bary, m.vertices[m.tets[t]])
        E, C = exact(pts.reshape(-1, 3))
        E = np.asarray(E).reshape(t.size, -1, 3)
        C = np.asarray(C).reshape(t.size, -1, 3)
        Eh = np.einsum("te,tqec->tqc", sol._signed(t), whitney_values(grads, bary))
        Ch = np.einsum("te,tec->tc", sol._signed(t), _local_curls(grads))
        e2 = np.sum(np.abs(E - Eh) ** 2, axis=2) + np.sum(np.abs(C - Ch[:, None, :]) ** 2, axis=2)
        out[t] = vol * (e2 @ wq)
    return np.sqrt(out) if per_tet else float(math.sqrt(out.sum()))
