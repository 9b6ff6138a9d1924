"""Small helpers for polynomials in one and two variables.

Coefficients follow the numpy.polynomial convention: a 1-d array ``c``
represents ``sum_i c[i] x**i`` and a 2-d array represents
``sum_ij c[i, j] x1**i x2**j``.
"""

import numpy as np
from numpy.polynomial import polynomial as npoly


def as_coeff1(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.ndim != 1:
        raise ValueError("1-d coefficient array expected")
    return c


def as_coeff2(c):
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.ndim != 2:
        raise ValueError("2-d coefficient array expected")
    return c


def eval1(c, x):
    return npoly.polyval(x, c)


def eval2(c, x1, x2):
    return npoly.polyval2d(x1, x2, c)


def deriv1(c):
    c = as_coeff1(c)
    if len(c) == 1:
        return np.zeros(1)
    return npoly.polyder(c)


def deriv2(c, axis):
    """Coefficients of the partial derivative along ``axis`` (0 or 1)."""
    c = as_coeff2(c)
    if c.shape[axis] == 1:
        return np.zeros((1, 1))
    return npoly.polyder(c, axis=axis)


def flip1(c):
    """Coefficients of p(1 - x) for a univariate p."""
    c = as_coeff1(c)
    n = len(c)
    out = np.zeros(n)
    for k in range(n):
        # (1-x)^k expanded
        for i in range(k + 1):
            out[i] += c[k] * _binom(k, i) * (-1.0) ** i
    return out


def flip2(c, axis):
    """Coefficients of the composition x_axis -> 1 - x_axis."""
    c = as_coeff2(c)
    if axis == 1:
        return flip2(c.T, 0).T
    n = c.shape[0]
    out = np.zeros_like(c)
    for k in range(n):
        for i in range(k + 1):
            out[i, :] += c[k, :] * _binom(k, i) * (-1.0) ** i
    return out


def rotate_coeffs(c):
    """Coefficients of p(1 - u2, u1) given those of p(x1, x2).

    This is the coordinate change of one quarter turn of the square,
    taking the chart at one vertex to the chart at the next.
    """
    return np.ascontiguousarray(flip2(c, 0).T)


def edge_slice(c):
    """Coefficients of p(x1, 0) as a univariate polynomial."""
    return np.ascontiguousarray(as_coeff2(c)[:, 0])


def _binom(n, k):
    out = 1.0
    for j in range(1, k + 1):
        out = out * (n - k + j) / j
    return out


def pad_to(c, shape):
    c = as_coeff2(c)
    out = np.zeros(shape)
    out[: c.shape[0], : c.shape[1]] = c
    return out
