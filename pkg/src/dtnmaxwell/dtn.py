"""Truncated Calderon (DtN) operator on the sphere ``|x| = R``.

For a tangential trace with coefficients ``(phi1, phi2)`` the operator acts
diagonally:

    T^N phi = sum_{n <= N} g1_n phi1 U_n^m + g2_n phi2 V_n^m,
    g1_n = i k R / (1 + z_n(kR)),   g2_n = (1 + z_n(kR)) / (i k R),

with ``z_n`` the logarithmic derivative of the first-kind spherical Hankel
function.  The transparent condition reads ``(curl E) x e_rho - i k T E_G = f``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .harmonics import (SphereQuadrature, TangentialSpectrum, analyze_values, mode_degrees,
                        quadrature_for_degree)
from .specfun import HankelKind, z_ratio_all

__all__ = [
    "WaveParams",
    "DtnFactors",
    "ConfigurationError",
    "dtn_factors",
    "apply_dtn",
    "boundary_source",
    "th_norm",
    "truncation_indicator",
    "choose_N",
]

# |1 + z_n| below this is treated as a breakdown rather than divided through
_RESONANCE_GUARD = 1e-12


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class WaveParams:
    kappa: float
    R: float
    Rprime: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigurationError(f"wavenumber must be positive, got {self.kappa}")
        if not (0 < self.Rprime < self.R):
            raise ConfigurationError(f"need 0 < R' < R, got R'={self.Rprime}, R={self.R}")


@dataclass(frozen=True)
class DtnFactors:
    """Per-degree multipliers; index 0 is unused and set to zero."""

    N: int
    g1: np.ndarray
    g2: np.ndarray

    def per_mode(self, N: int | None = None):
        """Multipliers expanded to the flat mode layout (zero above ``self.N``)."""
        N = self.N if N is None else N
        deg = mode_degrees(N)
        g1 = np.zeros(deg.size, dtype=complex)
        g2 = np.zeros(deg.size, dtype=complex)
        keep = (deg >= 1) & (deg <= self.N)
        g1[keep] = self.g1[deg[keep]]
        g2[keep] = self.g2[deg[keep]]
        return g1, g2

    def swapped(self) -> "DtnFactors":
        return DtnFactors(self.N, self.g2, self.g1)


def dtn_factors(w: WaveParams, N: int) -> DtnFactors:
    if N < 0:
        raise ConfigurationError("truncation degree must be nonnegative")
    kR = w.kappa * w.R
    if N == 0:
        return DtnFactors(0, np.zeros(1, dtype=complex), np.zeros(1, dtype=complex))
    onez = 1.0 + z_ratio_all(HankelKind.FIRST, N, kR)
    if np.any(np.abs(onez[1:]) < _RESONANCE_GUARD):
        raise ArithmeticError(f"|1 + z_n(kR)| < {_RESONANCE_GUARD} for some n <= {N}")
    g1 = np.zeros(N + 1, dtype=complex)
    g2 = np.zeros(N + 1, dtype=complex)
    g1[1:] = 1j * kR / onez[1:]
    g2[1:] = onez[1:] / (1j * kR)
    return DtnFactors(N, g1, g2)


def apply_dtn(F: DtnFactors, S: TangentialSpectrum) -> TangentialSpectrum:
    """Mode-wise multiplication; degrees above ``F.N`` are dropped."""
    g1, g2 = F.per_mode(S.N)
    return TangentialSpectrum(S.N, S.R, g1 * S.phi1, g2 * S.phi2)


def boundary_source(einc, w: WaveParams, N: int, quad: SphereQuadrature | None = None,
                    F: DtnFactors | None = None) -> TangentialSpectrum:
    """Spectrum of ``f^N = (curl E_inc) x e_rho - i k T^N E_inc_G`` on ``|x| = R``.

    ``einc`` maps points ``(npts, 3)`` to ``(E, curl E)``, each ``(npts, 3)``;
    ``None`` stands for a vanishing incident field.
    """
    if einc is None:
        return TangentialSpectrum(N, w.R)
    quad = quadrature_for_degree(N) if quad is None else quad
    F = dtn_factors(w, N) if F is None else F
    pts = quad.points(w.R)
    nrm = pts / w.R
    E, curlE = (np.asarray(a, dtype=complex) for a in einc(pts))
    E_t = E - np.einsum("pc,pc->p", E, nrm)[:, None] * nrm
    c_x_n = np.cross(curlE, nrm)
    S_curl = analyze_values(c_x_n, quad, N, w.R)
    S_E = analyze_values(E_t, quad, N, w.R)
    return S_curl - apply_dtn(F, S_E).scaled(1j * w.kappa)


def th_norm(S: TangentialSpectrum, flavor: str = "div_half", s: float = 0.0) -> float:
    """Spectral trace norms.

    ``flavor`` is ``"Hs"`` (weight ``(1+n(n+1))^s`` on both components),
    ``"curl_half"`` or ``"div_half"``.
    """
    n = mode_degrees(S.N)
    lam = 1.0 + n * (n + 1.0)
    a1 = np.abs(S.phi1) ** 2
    a2 = np.abs(S.phi2) ** 2
    if flavor == "Hs":
        tot = np.sum(lam**s * (a1 + a2))
    elif flavor == "curl_half":
        tot = np.sum(a1 / np.sqrt(lam) + np.sqrt(lam) * a2)
    elif flavor == "div_half":
        tot = np.sum(np.sqrt(lam) * a1 + a2 / np.sqrt(lam))
    else:
        raise ValueError(f"unknown norm flavor {flavor!r}")
    return float(math.sqrt(tot))


def truncation_indicator(w: WaveParams, N: int, f_norm: float) -> float:
    """``eps_N = (R'/R)^(N+1) ||f||``."""
    if f_norm < 0:
        raise ValueError("f_norm must be nonnegative")
    return (w.Rprime / w.R) ** (N + 1) * f_norm


def choose_N(w: WaveParams, f_norm: float, tol: float = 1e-8, nmax: int = 10_000) -> int:
    """Smallest ``N >= 1`` with ``truncation_indicator(w, N, f_norm) <= tol``."""
    if not (w.Rprime < w.R):
        raise ConfigurationError("R' must be smaller than R")
    if tol <= 0 or f_norm <= 0:
        raise ValueError("tol and f_norm must be positive")
    q = w.Rprime / w.R
    # closed-form guess, then settle the boundary by direct comparison
    N = max(1, int(math.ceil(math.log(tol / f_norm) / math.log(q))) - 1)
    while N > 1 and truncation_indicator(w, N - 1, f_norm) <= tol:
        N -= 1
    while truncation_indicator(w, N, f_norm) > tol:
        N += 1
        if N > nmax:
            raise ConfigurationError(f"no N <= {nmax} reaches tolerance {tol}")
    return N
