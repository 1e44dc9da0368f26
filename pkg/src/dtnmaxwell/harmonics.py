"""Vector spherical harmonics and spectral transforms of tangential fields.

The basis on the sphere ``|x| = R`` is

    U_n^m = grad_G X_n^m / sqrt(n(n+1)),     V_n^m = e_rho x U_n^m,

where ``grad_G`` differentiates in the angles only (no 1/R metric factor) and
``X_n^m = Y_n^m / R``.  With that convention ``{U, V}`` is orthonormal in
``L^2`` of the sphere of radius ``R``.  Degree ``n = 0`` carries no tangential
modes and is excluded everywhere.

Modes are stored in a flat triangular layout: mode ``(n, m)`` lives at index
``n*n + n + m``; the ``n = 0`` slot is always zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .calculus import curl_fd, curlcurl_fd, derivative_1d, div_fd
from .specfun import normalized_legendre

__all__ = [
    "mode_index",
    "num_modes",
    "mode_degrees",
    "SphereQuadrature",
    "product_quadrature",
    "quadrature_for_degree",
    "vsh_components",
    "mode_orders",
    "TangentialSpectrum",
    "spherical_coords",
    "local_frame",
    "vsh_table",
    "vsh",
    "analyze",
    "analyze_values",
    "synthesize",
    "surface_div_spectrum",
    "radial_identity_residual",
    "NonTangentialField",
]


def mode_index(n: int, m: int) -> int:
    return n * n + n + m


def num_modes(N: int) -> int:
    return (N + 1) ** 2


def mode_degrees(N: int) -> np.ndarray:
    """Degree ``n`` for every flat mode slot up to degree ``N``."""
    return np.repeat(np.arange(N + 1), 2 * np.arange(N + 1) + 1)


def mode_orders(N: int) -> np.ndarray:
    return np.concatenate([np.arange(-n, n + 1) for n in range(N + 1)])


class NonTangentialField(ValueError):
    pass


@dataclass(frozen=True)
class SphereQuadrature:
    """Product rule on the unit sphere: Gauss-Legendre in ``cos theta`` times the
    trapezoid rule in ``phi``.  ``order`` is the exact spherical-polynomial degree."""

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    order: int

    def __len__(self):
        return self.weights.size

    def points(self, R: float = 1.0) -> np.ndarray:
        st = np.sin(self.theta)
        return R * np.stack([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=-1)


def product_quadrature(L: int) -> SphereQuadrature:
    """``L`` Gauss nodes in ``cos theta`` and ``2L`` uniform nodes in ``phi``;
    exact for spherical polynomials of degree ``<= 2L - 1``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    x, w = np.polynomial.legendre.leggauss(L)
    phi = 2 * np.pi * np.arange(2 * L) / (2 * L)
    T, P = np.meshgrid(np.arccos(x), phi, indexing="ij")
    W = np.outer(w, np.full(2 * L, 2 * np.pi / (2 * L)))
    return SphereQuadrature(T.ravel(), P.ravel(), W.ravel(), 2 * L - 1)


def quadrature_for_degree(N: int) -> SphereQuadrature:
    """Default rule for degree-``N`` transforms (``L = N + 2``, order ``2N + 3``)."""
    return product_quadrature(N + 2)


@dataclass
class TangentialSpectrum:
    """Coefficients of a tangential field in the ``(U_n^m, V_n^m)`` basis."""

    N: int
    R: float
    phi1: np.ndarray = field(default=None)
    phi2: np.ndarray = field(default=None)

    def __post_init__(self):
        M = num_modes(self.N)
        if self.phi1 is None:
            self.phi1 = np.zeros(M, dtype=complex)
        if self.phi2 is None:
            self.phi2 = np.zeros(M, dtype=complex)
        self.phi1 = np.asarray(self.phi1, dtype=complex)
        self.phi2 = np.asarray(self.phi2, dtype=complex)
        if self.phi1.shape != (M,) or self.phi2.shape != (M,):
            raise ValueError(f"coefficient arrays must have length {M} for N={self.N}")
        if self.phi1[0] != 0 or self.phi2[0] != 0:
            raise ValueError("n = 0 carries no tangential modes")

    @classmethod
    def zeros(cls, N: int, R: float) -> "TangentialSpectrum":
        return cls(N, R)

    def get(self, n: int, m: int):
        if n < 1 or abs(m) > n or n > self.N:
            raise KeyError((n, m))
        k = mode_index(n, m)
        return self.phi1[k], self.phi2[k]

    def set(self, n: int, m: int, phi1=0.0, phi2=0.0):
        if n < 1 or abs(m) > n or n > self.N:
            raise KeyError((n, m))
        k = mode_index(n, m)
        self.phi1[k] = phi1
        self.phi2[k] = phi2

    def truncated(self, N: int) -> "TangentialSpectrum":
        """Drop (or zero-pad) to degree ``N``."""
        M = num_modes(N)
        out = TangentialSpectrum(N, self.R)
        k = min(M, self.phi1.size)
        out.phi1[:k] = self.phi1[:k]
        out.phi2[:k] = self.phi2[:k]
        return out

    def copy(self) -> "TangentialSpectrum":
        return TangentialSpectrum(self.N, self.R, self.phi1.copy(), self.phi2.copy())

    def __add__(self, other: "TangentialSpectrum") -> "TangentialSpectrum":
        N = max(self.N, other.N)
        a, b = self.truncated(N), other.truncated(N)
        return TangentialSpectrum(N, self.R, a.phi1 + b.phi1, a.phi2 + b.phi2)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, s) -> "TangentialSpectrum":
        return TangentialSpectrum(self.N, self.R, s * self.phi1, s * self.phi2)

    def max_abs(self) -> float:
        return float(max(np.abs(self.phi1).max(), np.abs(self.phi2).max()))


def spherical_coords(x):
    """``(rho, theta, phi)`` of Cartesian points with shape ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    theta = np.arccos(np.clip(x[..., 2] / np.where(rho > 0, rho, 1.0), -1.0, 1.0))
    phi = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
    return rho, theta, phi


def local_frame(theta, phi):
    """Unit vectors ``e_rho, e_theta, e_phi`` with shape ``theta.shape + (3,)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    e_rho = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(st)], axis=-1)
    return e_rho, e_theta, e_phi


def vsh_components(N: int, theta, phi, R: float = 1.0):
    """``X`` and the ``(e_theta, e_phi)`` components of ``U`` for every mode up to ``N``.

    Returns ``X, ut, up`` with shape ``(npts, M)``.  Since ``V = e_rho x U``,
    its components are ``(-up, ut)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta, phi = np.broadcast_arrays(theta, phi)
    theta, phi = theta.ravel(), phi.ravel()
    P, Q, dP = normalized_legendre(N, theta)
    deg = mode_degrees(N)
    order = mode_orders(N)
    am = np.abs(order)
    eimp = np.exp(1j * np.outer(phi, order))
    X = P[:, deg, am] * eimp / R
    scale = np.zeros(deg.size)
    scale[1:] = 1.0 / (R * np.sqrt(deg[1:] * (deg[1:] + 1.0)))
    ut = dP[:, deg, am] * eimp * scale
    up = (1j * order * scale) * Q[:, deg, am] * eimp
    return X, ut, up


def vsh_table(N: int, theta, phi, R: float = 1.0):
    """Evaluate ``X``, ``U`` and ``V`` for every mode up to degree ``N``.

    Returns ``X`` with shape ``(npts, M)`` and ``U``, ``V`` with shape
    ``(npts, M, 3)`` (Cartesian components), ``M = (N + 1)**2``.  Pole points
    are handled through ``P/sin(theta)`` recurrences, so no division by
    ``sin(theta)`` occurs.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta, phi = np.broadcast_arrays(theta, phi)
    theta, phi = theta.ravel(), phi.ravel()
    X, ut, up = vsh_components(N, theta, phi, R)
    _, e_t, e_p = local_frame(theta, phi)
    U = ut[..., None] * e_t[:, None, :] + up[..., None] * e_p[:, None, :]
    # V = e_rho x U: e_rho x e_theta = e_phi, e_rho x e_phi = -e_theta
    V = -up[..., None] * e_t[:, None, :] + ut[..., None] * e_p[:, None, :]
    return X, U, V


def vsh(basis: str, n: int, m: int, theta, phi, R: float = 1.0):
    """Single vector harmonic (``basis`` is ``"U"`` or ``"V"``) in Cartesian components."""
    if n < 1:
        raise ValueError("vector spherical harmonics vanish for n = 0")
    if abs(m) > n:
        raise ValueError(f"|m| must be <= n, got n={n}, m={m}")
    _, U, V = vsh_table(n, theta, phi, R)
    k = mode_index(n, m)
    out = {"U": U, "V": V}[basis.upper()][:, k, :]
    return out[0] if np.ndim(theta) == 0 else out


def analyze_values(values, quad: SphereQuadrature, N: int, R: float) -> TangentialSpectrum:
    """Spectrum of tangential samples taken at the nodes of ``quad`` on radius ``R``."""
    if quad.order < 2 * N + 2:
        raise ValueError(f"quadrature order {quad.order} < 2N+2 = {2 * N + 2}")
    values = np.asarray(values, dtype=complex)
    _, U, V = vsh_table(N, quad.theta, quad.phi, R)
    w = quad.weights * R * R
    phi1 = np.einsum("p,pc,pkc->k", w, values, U.conj())
    phi2 = np.einsum("p,pc,pkc->k", w, values, V.conj())
    phi1[0] = phi2[0] = 0.0
    return TangentialSpectrum(N, R, phi1, phi2)


def analyze(field, N: int, quad: SphereQuadrature | None = None, R: float = 1.0,
            tol: float = 1e-10) -> TangentialSpectrum:
    """Project a tangential field on the sphere ``|x| = R`` onto ``U``/``V``.

    ``field`` maps Cartesian points of shape ``(npts, 3)`` to complex vectors of
    the same shape.
    """
    if quad is None:
        quad = quadrature_for_degree(N)
    pts = quad.points(R)
    values = np.asarray(field(pts), dtype=complex)
    radial = np.abs(np.einsum("pc,pc->p", values, pts / R))
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    worst = int(np.argmax(radial)) if radial.size else 0
    if radial.size and radial[worst] > tol * scale:
        raise NonTangentialField(
            f"field has normal component {radial[worst]:.3e} at node {worst} "
            f"(theta={quad.theta[worst]:.4f}, phi={quad.phi[worst]:.4f})")
    return analyze_values(values, quad, N, R)


def synthesize(S: TangentialSpectrum, theta, phi):
    """Evaluate ``sum phi1 U + phi2 V`` at the given angles."""
    _, U, V = vsh_table(S.N, theta, phi, S.R)
    out = np.einsum("k,pkc->pc", S.phi1, U) + np.einsum("k,pkc->pc", S.phi2, V)
    return out[0] if np.ndim(theta) == 0 and np.ndim(phi) == 0 else out


def surface_div_spectrum(S: TangentialSpectrum) -> np.ndarray:
    """Coefficients of ``div_G S`` against ``X_n^m`` (angular convention).

    ``div_G U_n^m = -sqrt(n(n+1)) X_n^m`` and ``div_G V_n^m = 0``.
    """
    n = mode_degrees(S.N)
    return -np.sqrt(n * (n + 1.0)) * S.phi1


# --- curl and divergence identities, checked against finite differences ----

_IDENTITIES = ("curlU", "curlV", "curlX", "curlcurlU", "curlcurlV", "curlcurlX",
               "divU", "divV", "divX")


def _profile_derivs(f, rho):
    if hasattr(f, "deriv"):
        return f(rho), f.deriv(1)(rho), f.deriv(2)(rho)
    return f(rho), derivative_1d(f, rho, 1), derivative_1d(f, rho, 2, h=1e-3)


def _basis_field(kind, n, m, R):
    k = mode_index(n, m)

    def value(x):
        rho, th, ph = spherical_coords(x)
        X, U, V = vsh_table(n, th, ph, R)
        if kind == "U":
            return U[0, k]
        if kind == "V":
            return V[0, k]
        return X[0, k] * np.asarray(x) / rho
    return value


def radial_identity_residual(identity: str, f, n: int, m: int, rho: float, theta: float,
                             phi: float, R: float = 1.0, h: float = 1e-4) -> float:
    """``|lhs - rhs|`` for one of the curl/div identities of ``f(rho) A`` with
    ``A`` in ``{U, V, X e_rho}``.  The left side is a finite-difference
    derivative of the full 3D field, the right side the closed form."""
    if identity not in _IDENTITIES:
        raise ValueError(f"unknown identity {identity!r}; choose from {_IDENTITIES}")
    op, kind = identity[:-1], identity[-1]
    A = _basis_field(kind, n, m, R)

    def F(x):
        return f(np.linalg.norm(x)) * A(x)

    x0 = rho * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    Uf, Vf, Xf = (_basis_field(c, n, m, R)(x0) for c in "UVX")  # Xf = X e_rho
    fv, f1, f2 = _profile_derivs(f, rho)
    g1 = fv + rho * f1            # d/drho (rho f)
    g2 = 2 * f1 + rho * f2        # d^2/drho^2 (rho f)
    s = math.sqrt(n * (n + 1))
    Xs = np.dot(Xf, x0 / rho)     # scalar X_n^m

    if op == "curl":
        lhs = curl_fd(F, x0, h)
        rhs = {"U": g1 / rho * Vf,
               "V": -g1 / rho * Uf - s / rho * fv * Xf,
               "X": -s / rho * fv * Vf}[kind]
    elif op == "curlcurl":
        lhs = curlcurl_fd(F, x0, max(h, 1e-3))
        rhs = {"U": -g2 / rho * Uf - s / rho**2 * g1 * Xf,
               "V": (-g2 / rho + n * (n + 1) / rho**2 * fv) * Vf,
               "X": s / rho * f1 * Uf + n * (n + 1) / rho**2 * fv * Xf}[kind]
    else:
        lhs = div_fd(F, x0, h)
        rhs = {"U": -fv * s / rho * Xs,
               "V": 0.0,
               "X": (2 * rho * fv + rho**2 * f1) / rho**2 * Xs}[kind]
    return float(np.linalg.norm(np.atleast_1d(lhs - rhs)))
