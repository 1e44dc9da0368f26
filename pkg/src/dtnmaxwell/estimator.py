"""Residual a posteriori error indicators and maximum-strategy marking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtn import ConfigurationError, DtnFactors, WaveParams, apply_dtn, truncation_indicator
from .fem import (BoundaryCoupling, check_resolution, FieldSolution, SphereFaceQuadrature, _local_curls,
                  _mass_closed_form, tet_geometry, whitney_values)
from .harmonics import TangentialSpectrum, local_frame, mode_degrees, vsh_components
from .mesh import LOCAL_EDGES, LOCAL_FACES
from .quadrature import triangle_rule

__all__ = ["EstimatorReport", "FaceTopology", "face_topology", "compute_indicators", "mark_elements",
           "MarkResult"]


@dataclass
class EstimatorReport:
    eta: np.ndarray           # (nt,)
    eps_h: float
    eps_N: float
    element: np.ndarray       # h_K^2 (||R1||^2 + ||R2||^2)
    interior_jump: np.ndarray  # h_K sum over interior faces
    boundary_jump: np.ndarray  # h_K sum over Gamma_R faces

    @property
    def total(self) -> float:
        return float(np.hypot(self.eps_h, self.eps_N))


@dataclass(frozen=True)
class FaceTopology:
    """Interior faces with their two tets and the local face numbers."""

    tet1: np.ndarray
    local1: np.ndarray
    tet2: np.ndarray
    local2: np.ndarray


def face_topology(tets) -> FaceTopology:
    tets = np.asarray(tets)
    f = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    order = np.lexsort((f[:, 2], f[:, 1], f[:, 0]))
    fs = f[order]
    same = np.all(fs[1:] == fs[:-1], axis=1)
    i = np.nonzero(same)[0]
    a, b = order[i], order[i + 1]
    return FaceTopology(a // 4, a % 4, b // 4, b % 4)


def _face_points(vertices, tets, t, lf, tb):
    """Barycentric coordinates (in tet ``t``) of triangle-rule points on local face ``lf``."""
    fv = LOCAL_FACES[lf]                                           # (nf, 3)
    bary = np.zeros((t.size, tb.shape[0], 4))
    for k in range(3):
        np.put_along_axis(bary, np.repeat(fv[:, None, k:k + 1], tb.shape[0], axis=1),
                          np.broadcast_to(tb[None, :, k:k + 1], (t.size, tb.shape[0], 1)), axis=2)
    return bary


def _face_normal_area(vertices, tets, t, lf):
    tv = vertices[tets[t]]
    fv = LOCAL_FACES[lf]
    p = np.take_along_axis(tv, fv[:, :, None], axis=1)
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = 0.5 * np.linalg.norm(n, axis=1)
    n = n / (2 * area)[:, None]
    # orient away from the opposite vertex, i.e. outward from tet t
    opp = np.take_along_axis(tv, lf[:, None, None].repeat(3, axis=2), axis=1)[:, 0]
    flip = np.einsum("fc,fc->f", n, p[:, 0] - opp) < 0
    n[flip] *= -1
    return n, area


def compute_indicators(sol: FieldSolution, w: WaveParams, F: DtnFactors | None,
                       f_spectrum: TangentialSpectrum | None = None,
                       fq: SphereFaceQuadrature | None = None,
                       coupling: BoundaryCoupling | None = None,
                       f_norm: float = 0.0, interior_degree: int = 4,
                       topology: FaceTopology | None = None, chunk: int = 4096) -> EstimatorReport:
    """Local indicators ``eta_K`` and the global ``eps_h``, ``eps_N``.

    ``coupling`` (from assembly) supplies the trace spectra of the sphere
    basis functions; ``fq`` must be the quadrature it was built on.
    """
    m = sol.mesh
    k2 = w.kappa ** 2
    grads, vol = tet_geometry(m.vertices, m.tets)
    c = sol._signed()
    hK = m.diameters()

    # element residuals: curl curl of a Whitney field and its divergence vanish
    Me = _mass_closed_form(grads, vol)
    e_norm2 = np.einsum("ti,tij,tj->t", c.conj(), Me, c).real
    # curl E_h is constant per tet, so the curl-curl part of R1 drops out;
    # div(lam_a grad lam_b - lam_b grad lam_a) = grad lam_a . grad lam_b - grad lam_b . grad lam_a
    curls = np.einsum("te,tec->tc", c, _local_curls(grads))
    ga, gb = grads[:, LOCAL_EDGES[:, 0]], grads[:, LOCAL_EDGES[:, 1]]
    div_w = np.einsum("tec,tec->te", ga, gb) - np.einsum("tec,tec->te", gb, ga)
    divE = np.einsum("te,te->t", c, div_w)
    r1 = k2 ** 2 * np.maximum(e_norm2, 0.0)
    r2 = k2 ** 2 * np.abs(divE) ** 2 * vol
    element = hK ** 2 * (r1 + r2)

    # interior faces
    topo = face_topology(m.tets) if topology is None else topology
    tb, tw = triangle_rule(interior_degree)
    n1, area = _face_normal_area(m.vertices, m.tets, topo.tet1, topo.local1)
    j1 = np.cross(curls[topo.tet1] - curls[topo.tet2], n1)
    jj1 = np.sum(np.abs(j1) ** 2, axis=1) * area
    b1 = _face_points(m.vertices, m.tets, topo.tet1, topo.local1, tb)
    x1 = np.einsum("fqi,fic->fqc", b1, m.vertices[m.tets[topo.tet1]])
    # barycentric coordinates of the same physical points in the neighbour
    T2 = m.vertices[m.tets[topo.tet2]]
    J2 = np.transpose(T2[:, 1:] - T2[:, :1], (0, 2, 1))
    l2 = np.linalg.solve(J2[:, None], (x1 - T2[:, None, 0])[..., None])[..., 0]
    b2 = np.concatenate([1 - l2.sum(-1, keepdims=True), l2], axis=-1)
    E1 = np.einsum("te,tqec->tqc", c[topo.tet1], whitney_values(grads[topo.tet1], b1))
    E2 = np.einsum("te,tqec->tqc", c[topo.tet2], whitney_values(grads[topo.tet2], b2))
    j2 = k2 * np.einsum("fqc,fc->fq", E1 - E2, n1)
    jj2 = (np.abs(j2) ** 2 @ tw) * area
    face_sum = jj1 + jj2
    interior = np.zeros(m.n_tets)
    np.add.at(interior, topo.tet1, face_sum)
    np.add.at(interior, topo.tet2, face_sum)
    interior *= hK

    boundary = np.zeros(m.n_tets)
    if F is not None and F.N >= 1:
        if fq is None or coupling is None:
            raise ConfigurationError("boundary residuals need the assembly quadrature and trace spectra")
        if coupling.N < F.N:
            raise ConfigurationError(f"trace spectrum degree {coupling.N} below DtN degree {F.N}")
        check_resolution(fq, F.N)
        boundary = _boundary_terms(sol, w, F, f_spectrum, fq, coupling, curls, chunk) * hK

    eta2 = element + interior + boundary
    eta = np.sqrt(eta2)
    eps_h = float(np.sqrt(eta2.sum()))
    eps_N = truncation_indicator(w, F.N, f_norm) if F is not None else 0.0
    return EstimatorReport(eta, eps_h, eps_N, element, interior, boundary)


def _boundary_terms(sol, w, F, f_spectrum, fq, coupling, curls, chunk):
    """``sum_F ||J1||^2 + ||J2||^2`` over Gamma_R faces, accumulated per owning tet."""
    m = sol.mesh
    R = w.R
    k = w.kappa
    N = F.N
    x_s = sol.coeffs[coupling.sphere]
    S = coupling.spectrum(x_s, R).truncated(N)
    TS = apply_dtn(F, S)
    f = f_spectrum.truncated(N) if f_spectrum is not None else TangentialSpectrum(N, R)
    # tangential part i k T^N E + f, and the true surface divergence of it
    tan1 = 1j * k * TS.phi1 + f.phi1
    tan2 = 1j * k * TS.phi2 + f.phi2
    deg = mode_degrees(N)
    div_coef = -np.sqrt(deg * (deg + 1.0)) * tan1 / R       # against X_n^m

    nf = fq.n_faces
    pf = fq.point_face
    grads, _ = tet_geometry(m.vertices, m.tets[fq.face_tet])
    cE = sol._signed(fq.face_tet)
    E = np.einsum("pe,pec->pc", cE[pf], whitney_values(grads[pf], fq.bary[:, None, :])[:, 0])
    nu = fq.points / R
    curl_pts = curls[fq.face_tet][pf]
    th, ph = fq.angles()
    _, e_t, e_p = local_frame(th, ph)
    npts = th.size
    acc = np.empty(npts)
    for s in range(0, npts, chunk):
        e = min(npts, s + chunk)
        X, ut, up = vsh_components(N, th[s:e], ph[s:e], R)
        # U = ut e_theta + up e_phi, V = -up e_theta + ut e_phi
        st = ut @ tan1 - up @ tan2
        sp_ = up @ tan1 + ut @ tan2
        spec_t = st[:, None] * e_t[s:e] + sp_[:, None] * e_p[s:e]
        spec_d = X @ div_coef
        J1 = 2 * (-np.cross(curl_pts[s:e], nu[s:e]) + spec_t)
        J2 = 2 * (k * k * np.einsum("pc,pc->p", E[s:e], nu[s:e]) - spec_d)
        acc[s:e] = np.sum(np.abs(J1) ** 2, axis=1) + np.abs(J2) ** 2
    per_face = np.bincount(fq.point_face, weights=acc * fq.weights, minlength=nf)
    out = np.zeros(m.n_tets)
    np.add.at(out, fq.face_tet, per_face)
    return out


@dataclass
class MarkResult:
    marked: np.ndarray
    converged: bool

    def __iter__(self):
        return iter(self.marked.tolist())

    def __len__(self):
        return self.marked.size


def mark_elements(report_or_eta, theta: float) -> MarkResult:
    """``{K : eta_K > theta * max eta}``; empty with ``converged=True`` when all vanish."""
    eta = report_or_eta.eta if isinstance(report_or_eta, EstimatorReport) else np.asarray(report_or_eta, float)
    if eta.size == 0:
        raise ValueError("no indicators to mark")
    if not (0 < theta < 1):
        raise ValueError("theta must lie in (0, 1)")
    mx = eta.max()
    if mx <= 0:
        return MarkResult(np.zeros(0, dtype=np.int64), True)
    return MarkResult(np.nonzero(eta > theta * mx)[0], False)
