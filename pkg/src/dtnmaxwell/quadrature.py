"""Collapsed Gauss rules on the reference triangle and tetrahedron.

Rules are returned in barycentric form with weights summing to one, so an
integral over a simplex of measure ``|T|`` is ``|T| * sum(w * f(points))``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["triangle_rule", "tet_rule"]


def _npts(degree: int) -> int:
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """``(bary, w)`` with ``bary`` of shape ``(q, 3)``, exact up to ``degree``."""
    n = _npts(degree)
    # Duffy map (u, v) -> (u, v (1 - u)); the (1 - u) Jacobian goes into Gauss-Jacobi
    u, wu = roots_jacobi(n, 1.0, 0.0)
    v, wv = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (u + 1.0)
    v = 0.5 * (v + 1.0)
    wu = wu / 4.0
    wv = wv / 2.0
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    x = U
    y = Vv * (1.0 - U)
    bary = np.stack([1.0 - x - y, x, y], axis=-1).reshape(-1, 3)
    w = W.ravel()
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


@lru_cache(maxsize=None)
def tet_rule(degree: int):
    """``(bary, w)`` with ``bary`` of shape ``(q, 4)``, exact up to ``degree``."""
    n = _npts(degree)
    a, wa = roots_jacobi(n, 2.0, 0.0)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    c, wc = np.polynomial.legendre.leggauss(n)
    a, b, c = 0.5 * (a + 1), 0.5 * (b + 1), 0.5 * (c + 1)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    W = np.einsum("i,j,k->ijk", wa, wb, wc)
    x = A
    y = B * (1 - A)
    z = C * (1 - A) * (1 - B)
    bary = np.stack([1 - x - y - z, x, y, z], axis=-1).reshape(-1, 4)
    w = W.ravel()
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w
