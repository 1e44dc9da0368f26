"""Finite-difference vector calculus used as an independent check on the
closed-form operators.  Fourth-order central stencils throughout."""
from __future__ import annotations

import numpy as np

_STENCIL = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))


def jacobian_fd(field, x, h=1e-4):
    """``J[i, j] = d field_i / d x_j`` at a single point ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(3):
        acc = 0
        for k, c in _STENCIL:
            xs = x.copy()
            xs[j] += k * h
            acc = acc + c * np.asarray(field(xs))
        cols.append(acc / h)
    return np.stack(cols, axis=-1)


def curl_fd(field, x, h=1e-4):
    J = jacobian_fd(field, x, h)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def div_fd(field, x, h=1e-4):
    return np.trace(jacobian_fd(field, x, h))


def curlcurl_fd(field, x, h=1e-3):
    """Nested stencil; ``h`` is larger because round-off scales like ``eps/h^2``."""
    return curl_fd(lambda y: curl_fd(field, y, h), x, h)


def derivative_1d(f, t, order=1, h=1e-4):
    """Scalar derivative of order 1 or 2 by central differences."""
    if order == 1:
        return sum(c * f(t + k * h) for k, c in _STENCIL) / h
    if order == 2:
        return (-f(t + 2 * h) + 16 * f(t + h) - 30 * f(t)
                + 16 * f(t - h) - f(t - 2 * h)) / (12 * h * h)
    raise ValueError("order must be 1 or 2")
