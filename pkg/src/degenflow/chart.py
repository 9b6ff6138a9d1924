"""Logarithmic boundary chart for the unit interval and square.

The chart maps (0, 1) onto the real line: y = ln x below 1/4,
y = -ln(1 - x) above 3/4, with a monotone cubic bridging the middle so
that values and first derivatives match at the seams.  The map is odd
about x = 1/2, so a quarter turn of the square acts on chart
coordinates by (y1, y2) -> (y2, -y1).
"""

import numpy as np

from .errors import SolverFailure

_LO = 0.25
_HI = 0.75
Y_LO = np.log(_LO)   # chart value at the lower seam
Y_HI = -Y_LO


def _cubic_coeffs():
    # Hermite data: value ln(1/4), slope 4 at x=1/4; value ln 4, slope 4
    # at x=3/4.  Solve for a + b x + c x^2 + d x^3.
    A = np.array(
        [
            [1.0, _LO, _LO**2, _LO**3],
            [0.0, 1.0, 2 * _LO, 3 * _LO**2],
            [1.0, _HI, _HI**2, _HI**3],
            [0.0, 1.0, 2 * _HI, 3 * _HI**2],
        ]
    )
    rhs = np.array([np.log(_LO), 1.0 / _LO, -np.log(_LO), 1.0 / _LO])
    return np.linalg.solve(A, rhs)

_CUBIC = _cubic_coeffs()


class ChartMap:
    """Coordinate map y(x) from (0, 1) onto the real line.

    Strictly increasing, odd about x = 1/2, equal to ln x near 0 and to
    -ln(1 - x) near 1.  ``forward``/``inverse`` are exact inverses to
    high accuracy; both accept scalars or arrays.
    """

    lo = _LO
    hi = _HI
    y_lo = Y_LO
    y_hi = Y_HI

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        y = np.empty_like(x)
        lo = x < _LO
        hi = x > _HI
        mid = ~(lo | hi)
        with np.errstate(divide="ignore"):
            y[lo] = np.log(x[lo])
            y[hi] = -np.log1p(-x[hi])
        xm = x[mid]
        y[mid] = _CUBIC[0] + xm * (_CUBIC[1] + xm * (_CUBIC[2] + xm * _CUBIC[3]))
        return y[0] if scalar else y

    def dforward(self, x):
        """dy/dx."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        d = np.empty_like(x)
        lo = x < _LO
        hi = x > _HI
        mid = ~(lo | hi)
        # infinite slope at the endpoints is the correct limit
        with np.errstate(divide="ignore"):
            d[lo] = 1.0 / x[lo]
            d[hi] = 1.0 / (1.0 - x[hi])
        xm = x[mid]
        d[mid] = _CUBIC[1] + xm * (2 * _CUBIC[2] + 3 * xm * _CUBIC[3])
        return d[0] if scalar else d

    def d2forward(self, x):
        """d2y/dx2."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        d = np.empty_like(x)
        lo = x < _LO
        hi = x > _HI
        mid = ~(lo | hi)
        d[lo] = -1.0 / x[lo] ** 2
        d[hi] = 1.0 / (1.0 - x[hi]) ** 2
        d[mid] = 2 * _CUBIC[2] + 6 * x[mid] * _CUBIC[3]
        return d[0] if scalar else d

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        x = np.empty_like(y)
        lo = y < Y_LO
        hi = y > Y_HI
        mid = ~(lo | hi)
        with np.errstate(under="ignore"):
            x[lo] = np.exp(y[lo])
            x[hi] = -np.expm1(-y[hi])
        x[mid] = _invert_cubic(y[mid])
        return x[0] if scalar else x


def _invert_cubic(y):
    # Newton iteration; the cubic's slope is bounded below on the
    # middle section so convergence is fast from the linear guess.
    x = _LO + (y - Y_LO) / (Y_HI - Y_LO) * (_HI - _LO)
    for _ in range(60):
        f = _CUBIC[0] + x * (_CUBIC[1] + x * (_CUBIC[2] + x * _CUBIC[3])) - y
        df = _CUBIC[1] + x * (2 * _CUBIC[2] + 3 * x * _CUBIC[3])
        step = f / df
        x = np.clip(x - step, _LO, _HI)
        if np.all(np.abs(step) < 1e-15):
            return x
    if np.max(np.abs(step)) > 1e-12:
        raise SolverFailure("cubic chart inversion did not converge")
    return x


CHART = ChartMap()


def rotate_y(y1, y2, k):
    """Chart coordinates (y1^k, y2^k) of the vertex-k chart.

    One quarter turn maps (x1, x2) -> (x2, 1 - x1); since the chart map
    is odd about 1/2 this is (y1, y2) -> (y2, -y1) in chart coordinates.
    """
    for _ in range(k % 4):
        y1, y2 = y2, -y1
    return y1, y2


def cubic_coeffs():
    """Coefficients of the middle section, lowest degree first."""
    return _CUBIC.copy()
