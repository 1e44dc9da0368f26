"""Spherical Hankel functions, their logarithmic derivatives and spherical
harmonics.

Conventions
-----------
* ``h_n^{(1)} = j_n + i y_n`` and ``h_n^{(2)} = j_n - i y_n``.
* Associated Legendre functions carry **no** Condon-Shortley phase:
  ``P_n^m(t) = (1 - t^2)^{m/2} d^m/dt^m P_n(t)``.
* ``Y_n^m(theta, phi) = sqrt((2n+1)(n-|m|)! / (4 pi (n+|m|)!)) P_n^{|m|}(cos theta) e^{i m phi}``
  so that ``Y_n^{-m} = conj(Y_n^m)``.
* ``X_n^m = Y_n^m / R`` is orthonormal on the sphere of radius ``R``.
"""
from __future__ import annotations

import enum
import math

import numpy as np

__all__ = [
    "HankelKind",
    "SpecialFunctionOverflow",
    "sph_hankel",
    "sph_hankel_all",
    "sph_hankel_derivative",
    "z_ratio",
    "z_ratio_all",
    "assoc_legendre",
    "normalized_legendre",
    "scalar_harmonic",
]

# recurrence values above this are reported instead of silently becoming inf
_OVERFLOW_LIMIT = 1e300


class HankelKind(enum.Enum):
    FIRST = 1
    SECOND = 2


class SpecialFunctionOverflow(OverflowError):
    """Raised when a recurrence leaves the double-precision range."""


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError(f"spherical Hankel functions need x > 0, got {x.min() if x.size else x}")
    return x


def _kind(kind) -> HankelKind:
    if isinstance(kind, HankelKind):
        return kind
    if kind in (1, "first", "1"):
        return HankelKind.FIRST
    if kind in (2, "second", "2"):
        return HankelKind.SECOND
    raise ValueError(f"unknown Hankel kind {kind!r}")


def sph_hankel_all(kind, nmax: int, x):
    """Return ``h_0 .. h_nmax`` at ``x`` by upward recurrence.

    The output has shape ``(nmax + 1,) + x.shape``.  Upward recurrence is
    stable for the Hankel functions (they are dominated by ``y_n``).
    """
    kind = _kind(kind)
    if nmax < 0:
        raise ValueError("nmax must be nonnegative")
    x = _check_x(x)
    out = np.empty((nmax + 1,) + x.shape, dtype=complex)
    e = np.exp(1j * x)
    out[0] = -1j * e / x
    if nmax >= 1:
        out[1] = -e * (x + 1j) / x**2
    for n in range(1, nmax):
        out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
        if not np.all(np.abs(out[n + 1]) < _OVERFLOW_LIMIT):
            raise SpecialFunctionOverflow(
                f"h_{n + 1} overflows double precision at x={np.min(x):.3g}")
    if kind is HankelKind.SECOND:
        out = out.conj()
    return out


def sph_hankel(kind, n: int, x):
    """Spherical Hankel function ``h_n^{(kind)}(x)`` for real ``x > 0``."""
    if n < 0:
        raise ValueError("order n must be nonnegative")
    return sph_hankel_all(kind, n, x)[n]


def sph_hankel_derivative(kind, n: int, x):
    """``h_n'(x)`` from ``h_n' = h_{n-1} - (n+1)/x h_n`` (``h_0' = -h_1``)."""
    if n == 0:
        return -sph_hankel_all(kind, 1, x)[1]
    h = sph_hankel_all(kind, n, x)
    return h[n - 1] - (n + 1) / np.asarray(x, dtype=float) * h[n]


def z_ratio_all(kind, nmax: int, x):
    """``z_n(x) = x h_n'(x) / h_n(x)`` for ``n = 0 .. nmax``.

    Uses the ratio form of the recurrence, ``h_{n+1}/h_n = (2n+1)/x - h_{n-1}/h_n``,
    so large orders never overflow.
    """
    kind = _kind(kind)
    x = _check_x(x)
    out = np.empty((nmax + 1,) + x.shape, dtype=complex)
    h0 = -1j * np.exp(1j * x) / x
    h1 = -np.exp(1j * x) * (x + 1j) / x**2
    out[0] = -x * h1 / h0
    r = h0 / h1  # h_{n-1}/h_n at n = 1
    for n in range(1, nmax + 1):
        out[n] = x * r - (n + 1)
        r = 1.0 / ((2 * n + 1) / x - r)
    if kind is HankelKind.SECOND:
        out = out.conj()
    return out


def z_ratio(kind, n: int, x):
    """Logarithmic derivative ``x h_n'(x)/h_n(x)`` of the requested kind."""
    if n < 0:
        raise ValueError("order n must be nonnegative")
    return z_ratio_all(kind, n, x)[n]


def assoc_legendre(n: int, m: int, t: float) -> float:
    """Unnormalized associated Legendre function without Condon-Shortley phase.

    Only intended for small degrees; factorial growth overflows for large
    ``n``.  Use :func:`normalized_legendre` for anything else.
    """
    if not (0 <= m <= n):
        raise ValueError(f"need 0 <= m <= n, got n={n}, m={m}")
    if abs(t) > 1:
        raise ValueError(f"|t| must be <= 1, got {t}")
    s = math.sqrt(max(0.0, 1.0 - t * t))
    pmm = 1.0
    for k in range(1, m + 1):
        pmm *= (2 * k - 1) * s
    if n == m:
        return pmm
    p_prev, p = pmm, t * (2 * m + 1) * pmm
    for k in range(m + 2, n + 1):
        p_prev, p = p, ((2 * k - 1) * t * p - (k + m - 1) * p_prev) / (k - m)
    return p


def normalized_legendre(nmax: int, theta):
    """Normalized Legendre table and the pieces needed for surface gradients.

    Returns ``(P, Q, dP)`` with shape ``theta.shape + (nmax+1, nmax+1)`` indexed
    ``[..., n, m]`` for ``0 <= m <= n``:

    * ``P[n, m]  = c_nm P_n^m(cos theta)`` with ``Y_n^m = P[n,|m|] e^{i m phi}``
    * ``Q[n, m]  = P[n, m] / sin theta`` for ``m >= 1`` (finite at the poles)
    * ``dP[n, m] = d/dtheta P[n, m]``
    """
    theta = np.asarray(theta, dtype=float)
    shape = theta.shape + (nmax + 1, nmax + 1)
    P = np.zeros(shape)
    Q = np.zeros(shape)
    dP = np.zeros(shape)
    ct = np.cos(theta)
    st = np.sin(theta)

    # diagonal: Q_m^m = P_m^m / sin(theta) carries sin^{m-1}, no division needed
    pmm = np.full(theta.shape, 1.0 / math.sqrt(4.0 * math.pi))
    P[..., 0, 0] = pmm
    qmm = None
    for m in range(1, nmax + 1):
        f = math.sqrt((2 * m + 1) / (2.0 * m))
        qmm = f * pmm if m == 1 else f * st * qmm
        pmm = f * st * pmm
        P[..., m, m] = pmm
        Q[..., m, m] = qmm

    for m in range(0, nmax):
        P[..., m + 1, m] = math.sqrt(2 * m + 3) * ct * P[..., m, m]
        Q[..., m + 1, m] = math.sqrt(2 * m + 3) * ct * Q[..., m, m]
        for n in range(m + 2, nmax + 1):
            a = math.sqrt((4.0 * n * n - 1) / (n * n - m * m))
            b = math.sqrt(((n - 1) ** 2 - m * m) / (4.0 * (n - 1) ** 2 - 1))
            P[..., n, m] = a * (ct * P[..., n - 1, m] - b * P[..., n - 2, m])
            Q[..., n, m] = a * (ct * Q[..., n - 1, m] - b * Q[..., n - 2, m])

    for n in range(1, nmax + 1):
        dP[..., n, 0] = -math.sqrt(n * (n + 1)) * P[..., n, 1]
        for m in range(1, n + 1):
            c = math.sqrt((2 * n + 1) * (n * n - m * m) / (2.0 * n - 1))
            dP[..., n, m] = n * ct * Q[..., n, m] - c * Q[..., n - 1, m]
    return P, Q, dP


def scalar_harmonic(n: int, m: int, theta, phi, R: float = 1.0):
    """Rescaled harmonic ``X_n^m = Y_n^m / R`` (orthonormal on the sphere ``|x| = R``)."""
    if n < 0 or abs(m) > n:
        raise ValueError(f"invalid mode (n={n}, m={m})")
    if R <= 0:
        raise ValueError("R must be positive")
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < -1e-14) | (theta > math.pi + 1e-14)):
        raise ValueError("theta must lie in [0, pi]")
    P, _, _ = normalized_legendre(n, theta)
    return P[..., n, abs(m)] * np.exp(1j * m * np.asarray(phi, dtype=float)) / R
