"""Measured checks behind ``dtnmaxwell verify`` and the acceptance suite.

Each function returns the worst measured quantity so callers can compare it
with their own tolerance; nothing here asserts.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .calculus import derivative_1d
from .dtn import WaveParams, apply_dtn, choose_N, dtn_factors
from .harmonics import (analyze_values, mode_index, product_quadrature, radial_identity_residual,
                        synthesize, vsh_table)
from .oracle import decay_ratio, dual_ode_solve, radiating_mode_field
from .specfun import sph_hankel

__all__ = [
    "CheckResult",
    "tbc_defect",
    "decay_margin",
    "orthonormality_error",
    "identity_residuals",
    "divergence_free_residual",
    "dual_ode_residuals",
    "dual_asymptotic_constants",
    "run_all",
]


@dataclass
class CheckResult:
    name: str
    value: float
    limit: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.limit)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} (limit {self.limit:.1e}) {self.detail}".rstrip()


def tbc_defect(n: int, m: int, kappa: float = 2.0, R: float = 0.5, branch: str = "TE") -> float:
    """Relative ``||(curl E) x e_rho - i k T E_G|| / ||(curl E) x e_rho||`` on ``|x| = R``."""
    quad = product_quadrature(n + 4)
    pts = quad.points(R)
    nrm = pts / R
    E, curlE = radiating_mode_field(n, m, kappa, branch, R)(pts)
    E_t = E - np.einsum("pc,pc->p", E, nrm)[:, None] * nrm
    lhs = np.cross(curlE, nrm)
    w = WaveParams(kappa, R, R / 2)
    TE = apply_dtn(dtn_factors(w, n), analyze_values(E_t, quad, n, R))
    rhs = 1j * kappa * synthesize(TE, quad.theta, quad.phi)
    wt = quad.weights[:, None]
    return float(np.sqrt(np.sum(wt * np.abs(lhs - rhs) ** 2) / np.sum(wt * np.abs(lhs) ** 2)))


def decay_margin(kappa: float = 2.0, R: float = 0.5, Rprime: float = 0.1, nmin: int = 10,
                 nmax: int = 40) -> float:
    """``max_n |h_n(kR)/h_n(kR')| / (R'/R)^n``; the bound holds when this is at most 2."""
    q = Rprime / R
    return max(abs(decay_ratio(n, kappa, R, Rprime, 2)) / q ** n for n in range(nmin, nmax + 1))


def orthonormality_error(N: int = 10, R: float = 1.0) -> float:
    """Largest deviation of the ``X``/``U``/``V`` Gram matrices from the identity."""
    quad = product_quadrature(N + 2)
    X, U, V = vsh_table(N, quad.theta, quad.phi, R)
    w = quad.weights * R * R
    M = X.shape[1]
    eye = np.eye(M)
    eye_t = eye.copy()
    eye_t[0, 0] = 0.0                       # no tangential field at n = 0
    gx = (X.conj().T * w) @ X
    blocks = [gx - eye]
    for A in (U, V):
        for B in (U, V):
            g = np.einsum("p,pkc,plc->kl", w, A.conj(), B)
            blocks.append(g - (eye_t if A is B else 0.0))
    return float(max(np.abs(b).max() for b in blocks))


def identity_residuals(nmax: int = 4, kappa: float = 2.0, seed: int = 0) -> float:
    """Worst relative finite-difference residual over every curl/div identity.

    The radial profile is ``h_n(k rho)``; points are drawn at random in the
    shell ``0.3 < rho < 0.6`` with angles kept away from the poles.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    ids = ("curlU", "curlV", "curlX", "curlcurlU", "curlcurlV", "curlcurlX", "divU", "divV", "divX")
    for n in range(1, nmax + 1):
        f = lambda r, n=n: sph_hankel(1, n, kappa * r)
        for ident in ids:
            m = int(rng.integers(-n, n + 1))
            rho = rng.uniform(0.3, 0.6)
            th = rng.uniform(0.3, np.pi - 0.3)
            ph = rng.uniform(0, 2 * np.pi)
            res = radial_identity_residual(ident, f, n, m, rho, th, ph)
            scale = max(abs(f(rho)), abs(derivative_1d(f, rho, 1)) * rho, 1.0) / rho ** 2
            worst = max(worst, res / scale)
    return worst


def divergence_free_residual(n: int, m: int, kappa: float = 2.0, rho: float = 0.4,
                      theta: float = 1.1, phi: float = 0.7) -> float:
    """Relative defect of ``(rho^2 v3)' = sqrt(n(n+1)) rho v1`` for the divergence-free TM mode."""
    field = radiating_mode_field(n, m, kappa, "TM")
    k = mode_index(n, m)
    direction = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    X, U, _ = vsh_table(n, theta, phi)
    Xk, Uk = X[0, k], U[0, k]

    def coeffs(r):
        E, _ = field(r * direction[None, :])
        E = E[0]
        v1 = np.vdot(Uk, E) / np.vdot(Uk, Uk)
        v3 = np.dot(E, direction) / Xk
        return v1, v3

    d = derivative_1d(lambda r: r * r * coeffs(r)[1], rho, 1, h=2e-4)
    rhs = math.sqrt(n * (n + 1)) * rho * coeffs(rho)[0]
    return float(abs(d - rhs) / abs(rhs))


def _poly_source(coef):
    return lambda t: np.polyval(coef, t)


def dual_ode_residuals(nmax: int = 6, kappa: float = 2.0, R: float = 0.5, Rprime: float = 0.1,
                       seed: int = 0, npts: int = 4):
    """Worst relative ODE residual and Robin defect over ``n = 1..nmax``.

    Sources are random cubics; derivatives come from fourth-order
    differences with step ``h``.  Both quantities are scaled by the size of
    the terms they balance.
    """
    rng = np.random.default_rng(seed)
    worst_ode = worst_bc = 0.0
    h = 1e-3 * (R - Rprime)
    for n in range(1, nmax + 1):
        coef = rng.normal(size=4) + 1j * rng.normal(size=4)
        xi = _poly_source(coef)
        sol = dual_ode_solve(n, kappa, R, Rprime, xi, v_at_Rprime=1.0 + 0.5j)
        lam = n * (n + 1)
        for rho in np.linspace(Rprime + 4 * h, R - 4 * h, npts):
            v = sol(rho)
            d1 = derivative_1d(sol, rho, 1, h)
            d2 = derivative_1d(sol, rho, 2, h)
            terms = (d2, 2 / rho * d1, (kappa ** 2 - lam / rho ** 2) * v, xi(rho))
            res = abs(sum(terms)) / max(abs(t) for t in terms)
            worst_ode = max(worst_ode, res)
        # one-sided fourth-order derivative at R
        st = ((0, 25 / 12), (-1, -4.0), (-2, 3.0), (-3, -4 / 3), (-4, 0.25))
        dR = sum(c * sol(R + k * h) for k, c in st) / h
        vR = sol(R)
        zr = sol.z2() * vR / R
        worst_bc = max(worst_bc, abs(dR - zr) / max(abs(dR), abs(zr)))
    return worst_ode, worst_bc


def dual_asymptotic_constants(kappa: float = 2.0, R: float = 1.0, Rprime: float = 0.5,
                              nmin: int = 15, nmax: int = 40, nt: int = 9):
    """Smallest ``C_S``, ``C_W`` with ``|S_n(R)| <= C_S (R'/R)^n`` and
    ``|W_n(R', t)| <= (C_W/n) (t/R')^n`` over ``n`` in ``[nmin, nmax]`` and
    ``t`` on a grid in ``[R', R]``."""
    cs = cw = 0.0
    ts = np.linspace(Rprime, R, nt)
    for n in range(nmin, nmax + 1):
        sol = dual_ode_solve(n, kappa, R, Rprime)
        cs = max(cs, abs(sol.S(R)) / (Rprime / R) ** n)
        cw = max(cw, max(n * abs(sol.W(Rprime, t)) / (t / Rprime) ** n for t in ts))
    return cs, cw


def run_all() -> list[CheckResult]:
    """Criteria 1 to 4 at their stated tolerances."""
    out = []
    worst = max(tbc_defect(n, m, 2.0, 0.5, b) for n in range(1, 9) for m in (-n, 0, n) for b in ("TE", "TM"))
    out.append(CheckResult("tbc defect, n=1..8", worst, 1e-8))
    out.append(CheckResult("hankel decay ratio / (R'/R)^n, n=10..40", decay_margin(), 2.0))
    N = choose_N(WaveParams(1.0, 0.5, 0.1), 1.0, 1e-8)
    out.append(CheckResult("choose_N(0.1, 0.5, 1, 1e-8) - 11", abs(N - 11), 0.0, f"N={N}"))
    out.append(CheckResult("vsh orthonormality, n<=10", orthonormality_error(10), 1e-8))
    out.append(CheckResult("curl/div identities (finite differences)", identity_residuals(), 1e-6))
    c1 = max(divergence_free_residual(n, m) for n in range(1, 7) for m in (0, 1))
    out.append(CheckResult("divergence-free coefficient relation", c1, 1e-8))
    ode, bc = dual_ode_residuals()
    out.append(CheckResult("dual ODE interior residual, n<=6", ode, 1e-6))
    out.append(CheckResult("dual ODE Robin condition at R", bc, 1e-6))
    cs, cw = dual_asymptotic_constants()
    out.append(CheckResult("S_n asymptotic constant, n=15..40", cs, 4.0))
    out.append(CheckResult("W_n asymptotic constant, n=15..40", cw, 4.0))
    return out
