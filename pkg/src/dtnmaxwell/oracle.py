"""Analytic reference fields and closed-form radial solutions.

Everything here is independent of the finite element machinery and is used
to check it: the dipole of the first benchmark, plane waves, outgoing
multipole modes, Hankel decay ratios and the explicit solution of the
two-point radial problem that arises for the dual problem.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable

import numpy as np
from scipy import special

from .harmonics import mode_index, spherical_coords, vsh_table
from .specfun import HankelKind, sph_hankel, sph_hankel_all, z_ratio

__all__ = [
    "point_source_field",
    "point_source_sampler",
    "plane_wave_field",
    "plane_wave_sampler",
    "radiating_mode_field",
    "decay_ratio",
    "DualModeSolution",
    "dual_ode_solve",
]


def point_source_field(x, kappa: float, y=(0.0, 0.0, 0.0)):
    """``E = G + k^-2 grad div G`` with ``G = (0, 0, Phi)``, ``Phi = e^{ikr}/(4 pi r)``.

    ``x`` has shape ``(..., 3)``; returns ``(E, curl E)`` of the same shape.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r < 1e-12):
        raise ValueError("point source field evaluated at the source point")
    k = kappa
    phi = np.exp(1j * k * r) / (4 * np.pi * r)
    s = 1j * k - 1.0 / r
    a = phi * s / r                                   # Phi'(r)/r
    da = phi * (s * s / r + 1.0 / r**3 - s / r**2)    # d/dr (Phi'(r)/r)
    E = (d[..., 2] * da / (k * k * r))[..., None] * d
    E[..., 2] += phi + a / (k * k)
    curl = np.stack([a * d[..., 1], -a * d[..., 0], np.zeros_like(a)], axis=-1)
    return E, curl


def point_source_sampler(kappa: float, y=(0.0, 0.0, 0.0)):
    return lambda x: point_source_field(x, kappa, y)


def plane_wave_field(x, kappa: float, p=(1.0, 0.0, 0.0), q=(0.0, 0.0, -1.0)):
    """``E = p exp(i k q.x)`` and its curl ``i k (q x p) exp(i k q.x)``."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-12:
        raise ValueError("propagation direction must be a unit vector")
    if abs(np.dot(p, q)) > 1e-12:
        raise ValueError("polarization must be orthogonal to the propagation direction")
    ph = np.exp(1j * kappa * (np.asarray(x, dtype=float) @ q))
    return ph[..., None] * p, ph[..., None] * (1j * kappa * np.cross(q, p))


def plane_wave_sampler(kappa: float, p=(1.0, 0.0, 0.0), q=(0.0, 0.0, -1.0)):
    plane_wave_field(np.zeros(3), kappa, p, q)  # validates p, q up front
    return lambda x: plane_wave_field(x, kappa, p, q)


def radiating_mode_field(n: int, m: int, kappa: float, branch: str = "TE", R: float = 1.0):
    """Outgoing multipole built on ``h_n^{(1)}(k rho)``.

    ``branch="TE"``: ``E = h V_n^m``.  ``branch="TM"``: ``E = k^-1 curl(h V_n^m)``,
    which has a radial part and is divergence free.  ``R`` only fixes the
    normalization of the angular basis.  Returns a sampler
    ``x -> (E, curl E)`` for points of shape ``(npts, 3)``.
    """
    if n < 1:
        raise ValueError("radiating modes need n >= 1")
    branch = branch.upper()
    if branch not in ("TE", "TM"):
        raise ValueError("branch must be 'TE' or 'TM'")
    k = mode_index(n, m)
    s = math.sqrt(n * (n + 1))

    def sampler(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rho, th, ph = spherical_coords(x)
        X, U, V = vsh_table(n, th, ph, R)
        Xk, Uk, Vk = X[:, k], U[:, k, :], V[:, k, :]
        er = x / rho[:, None]
        t = kappa * rho
        hh = sph_hankel_all(HankelKind.FIRST, n, t)
        h = hh[n]
        dh = hh[n - 1] - (n + 1) / t * h
        drh = h + t * dh                                  # d/drho (rho h(k rho))
        # curl(h V) = -(1/rho) d(rho h) U - s h / rho X e_rho
        curl_hV = (-(drh / rho)[:, None] * Uk - (s * h / rho * Xk)[:, None] * er)
        if branch == "TE":
            return h[:, None] * Vk, curl_hV
        return curl_hV / kappa, kappa * h[:, None] * Vk
    return sampler


def decay_ratio(n: int, kappa: float, R: float, Rprime: float, component: int = 2):
    """Ratio of scattered-field coefficients on ``|x| = R`` and ``|x| = R'``.

    Component 2 is ``h_n(kR)/h_n(kR')``; component 1 carries the extra factor
    ``(R'/R)(1 + z_n(kR))/(1 + z_n(kR'))``.
    """
    if not (0 < Rprime <= R):
        raise ValueError("need 0 < R' <= R")
    h_ratio = sph_hankel(1, n, kappa * R) / sph_hankel(1, n, kappa * Rprime)
    if component == 2:
        return h_ratio
    if component == 1:
        return (Rprime / R) * h_ratio * (1 + z_ratio(1, n, kappa * R)) / (1 + z_ratio(1, n, kappa * Rprime))
    raise ValueError("component must be 1 or 2")


def _jy(n, x):
    return special.spherical_jn(n, x), special.spherical_yn(n, x)


def _cquad(f, a, b, rtol=1e-14, max_nodes=512):
    """Gauss-Legendre with node doubling until two successive rules agree.

    The integrands are analytic on the (finite) radial interval, so doubling
    converges geometrically; failure to settle is reported as an error.
    """
    if a == b:
        return 0j
    fv = np.vectorize(f, otypes=[complex])
    prev = None
    nodes = 16
    while nodes <= max_nodes:
        x, w = np.polynomial.legendre.leggauss(nodes)
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        try:
            vals = np.broadcast_to(np.asarray(f(t), dtype=complex), t.shape)
        except (TypeError, ValueError):
            vals = fv(t)
        val = 0.5 * (b - a) * np.dot(w, vals)
        scale = 0.5 * abs(b - a) * np.dot(w, np.abs(vals))
        if prev is not None and abs(val - prev) <= rtol * max(scale, 1e-300):
            return complex(val)
        prev = val
        nodes *= 2
    raise ArithmeticError(f"radial quadrature did not settle on [{a}, {b}]")


@dataclass
class DualModeSolution:
    """Explicit solution of

        v'' + (2/rho) v' + (k^2 - n(n+1)/rho^2) v = -xi   on (R', R),
        v'(R) - z_n^{(2)}(kR) v(R) / R = 0,               v(R') given.
    """

    n: int
    kappa: float
    R: float
    Rprime: float
    xi: Callable[[float], complex]
    v_Rprime: complex
    C: complex = 0.0

    def S(self, rho):
        """``h_n^{(2)}(k rho) / h_n^{(2)}(k R')``."""
        return (sph_hankel(2, self.n, self.kappa * np.asarray(rho, dtype=float))
                / sph_hankel(2, self.n, self.kappa * self.Rprime))

    def W(self, rho, t):
        """``det [[h1(k rho), h2(k rho)], [h1(k t), h2(k t)]] = 2i (y(k rho) j(k t) - j(k rho) y(k t))``.

        Written through ``j_n``, ``y_n`` to avoid cancellation between two huge
        products for large ``n``.
        """
        ja, ya = _jy(self.n, self.kappa * np.asarray(rho, dtype=float))
        jb, yb = _jy(self.n, self.kappa * np.asarray(t, dtype=float))
        return 2j * (ya * jb - ja * yb)

    def _source_moment(self):
        if not hasattr(self, "_moment"):
            self._moment = _cquad(lambda t: t * t * self.S(t) * self.xi(t), self.Rprime, self.R)
        return self._moment

    def __call__(self, rho: float) -> complex:
        k = self.kappa
        first = _cquad(lambda t: t * t * self.W(rho, t) * self.xi(t), self.Rprime, rho)
        return complex(self.S(rho) * self.v_Rprime + 0.5j * k * first
                       + 0.5j * k * self.W(self.Rprime, rho) * self._source_moment())

    def z2(self) -> complex:
        return complex(z_ratio(2, self.n, self.kappa * self.R))

    def w1_at_R(self) -> complex:
        """Tangential coefficient ``w_1(R)`` recovered from ``v(R)`` and ``C``."""
        s = math.sqrt(self.n * (self.n + 1))
        return ((1 + self.z2()) * self(self.R) - self.C) / (s * self.R)


def dual_ode_solve(n: int, kappa: float, R: float, Rprime: float, xi=None,
                   v_at_Rprime: complex = 1.0, zeta3_at_R: complex = 0.0) -> DualModeSolution:
    """Build the explicit radial solution; ``xi=None`` means a vanishing source.

    ``zeta3_at_R`` feeds the shift constant
    ``C = (1 + z2(kR)) / z2(kR) * R / k^2 * zeta3(R)``.
    """
    if not (0 < Rprime < R):
        raise ValueError("need 0 < R' < R")
    xi = (lambda t: 0.0) if xi is None else xi
    z2 = z_ratio(2, n, kappa * R)
    C = (1 + z2) / z2 * R / kappa**2 * zeta3_at_R
    return DualModeSolution(n, kappa, R, Rprime, xi, complex(v_at_Rprime), complex(C))
