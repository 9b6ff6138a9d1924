"""Model containers for boundary-tangent diffusions.

Drift and noise fields are Stratonovich data.  The preferred
representation is factored: each component carries the explicit factor
``x_i (1 - x_i)`` times a polynomial, which makes tangency to the faces
hold by construction and gives exact derivatives and exact
boundary-ratio evaluations (field divided by distance to the face),
needed for chart-form coefficients deep in the boundary layer.
"""

import numpy as np

from . import poly
from .errors import TangencyViolated, ValidationError


class Model1D:
    """Diffusion on (0, 1): dX = b dt + sum_m sigma_m o dW_m.

    ``b(x) = x(1-x) p(x)`` and ``sigma_m(x) = x(1-x) q_m(x)`` with
    polynomial factors ``p`` and ``q_m``.
    """

    dim = 1

    def __init__(self, p, qs, name="model1d"):
        self.p = poly.as_coeff1(p)
        self.qs = [poly.as_coeff1(q) for q in qs]
        self.name = name
        self._dp = poly.deriv1(self.p)
        self._dqs = [poly.deriv1(q) for q in self.qs]

    @property
    def n_noise(self):
        return len(self.qs)

    def drift(self, x):
        return x * (1.0 - x) * poly.eval1(self.p, x)

    def drift_prime(self, x):
        w = x * (1.0 - x)
        return (1.0 - 2.0 * x) * poly.eval1(self.p, x) + w * poly.eval1(self._dp, x)

    def sigma(self, x, m=None):
        w = x * (1.0 - x)
        if m is not None:
            return w * poly.eval1(self.qs[m], x)
        return np.array([w * poly.eval1(q, x) for q in self.qs])

    def sigma_prime(self, x, m=None):
        w = x * (1.0 - x)
        if m is not None:
            q, dq = self.qs[m], self._dqs[m]
            return (1.0 - 2.0 * x) * poly.eval1(q, x) + w * poly.eval1(dq, x)
        return np.array([self.sigma_prime(x, m) for m in range(self.n_noise)])

    def ito_drift(self, x):
        """Drift of the Ito form, b + (1/2) sum_m sigma_m sigma_m'."""
        out = self.drift(x)
        for m in range(self.n_noise):
            out = out + 0.5 * self.sigma(x, m) * self.sigma_prime(x, m)
        return out

    def diffusion(self, x):
        """a(x) = sum_m sigma_m(x)^2."""
        s = self.sigma(x)
        return np.sum(np.square(s), axis=0)

    def endpoint_rates(self):
        """Tangential linearization rates (lam0 at x=0, lam1 at x=1)."""
        return (poly.eval1(self.p, 0.0), -poly.eval1(self.p, 1.0))

    # ratio evaluators: field / x and field / (1 - x), polynomial in x
    def drift_over_x(self, x):
        return (1.0 - x) * poly.eval1(self.p, x)

    def drift_over_1mx(self, x):
        return x * poly.eval1(self.p, x)

    def sigma_over_x(self, x, m):
        return (1.0 - x) * poly.eval1(self.qs[m], x)

    def sigma_over_1mx(self, x, m):
        return x * poly.eval1(self.qs[m], x)


class Model2D:
    """Diffusion on (0, 1)^2 driven by two Brownian motions.

    ``b_i = x_i(1-x_i) p_i(x)`` and ``sigma_{mi} = x_i(1-x_i) q[m][i](x)``
    for polynomial coefficient matrices ``p_i`` and ``q[m][i]``.
    Noise rows ``sigma_m = (sigma_{m1}, sigma_{m2})`` are the two
    driving fields.
    """

    dim = 2

    def __init__(self, p1, p2, q, name="model2d"):
        self.p = [poly.as_coeff2(p1), poly.as_coeff2(p2)]
        self.q = [[poly.as_coeff2(q[m][i]) for i in range(2)] for m in range(2)]
        self.name = name
        self._dp = [[poly.deriv2(pi, ax) for ax in range(2)] for pi in self.p]
        self._dq = [
            [[poly.deriv2(self.q[m][i], ax) for ax in range(2)] for i in range(2)]
            for m in range(2)
        ]

    # --- scalar field helpers -------------------------------------------
    def _fac_val(self, c, i, x):
        w = x[i] * (1.0 - x[i])
        return w * poly.eval2(c, x[0], x[1])

    def _fac_partial(self, c, dc, i, j, x):
        # partial_j of x_i(1-x_i) g(x)
        w = x[i] * (1.0 - x[i])
        out = w * poly.eval2(dc[j], x[0], x[1])
        if i == j:
            out += (1.0 - 2.0 * x[i]) * poly.eval2(c, x[0], x[1])
        return out

    def _fac_mixed(self, c, dc, i, x):
        # partial_1 partial_2 of x_i(1-x_i) g(x)
        other = 1 - i
        w = x[i] * (1.0 - x[i])
        d2 = poly.deriv2(dc[other], i)
        return (1.0 - 2.0 * x[i]) * poly.eval2(dc[other], x[0], x[1]) + w * poly.eval2(
            d2, x[0], x[1]
        )

    # --- public evaluation ----------------------------------------------
    def drift(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([self._fac_val(self.p[i], i, x) for i in range(2)])

    def drift_jac(self, x):
        """J[i, j] = partial_j b_i."""
        x = np.asarray(x, dtype=float)
        return np.array(
            [
                [self._fac_partial(self.p[i], self._dp[i], i, j, x) for j in range(2)]
                for i in range(2)
            ]
        )

    def sigma(self, x):
        """S[m, i] = sigma_{mi}(x)."""
        x = np.asarray(x, dtype=float)
        return np.array(
            [[self._fac_val(self.q[m][i], i, x) for i in range(2)] for m in range(2)]
        )

    def sigma_jac(self, x):
        """J[m, i, j] = partial_j sigma_{mi}."""
        x = np.asarray(x, dtype=float)
        return np.array(
            [
                [
                    [
                        self._fac_partial(self.q[m][i], self._dq[m][i], i, j, x)
                        for j in range(2)
                    ]
                    for i in range(2)
                ]
                for m in range(2)
            ]
        )

    def sigma_mixed(self, x):
        """M[m, i] = partial_1 partial_2 sigma_{mi}."""
        x = np.asarray(x, dtype=float)
        return np.array(
            [
                [self._fac_mixed(self.q[m][i], self._dq[m][i], i, x) for i in range(2)]
                for m in range(2)
            ]
        )

    # --- geometry --------------------------------------------------------
    def rotated(self, k=1):
        """The model written in the chart of vertex k.

        One quarter turn sends (x1, x2) to (x2, 1 - x1); drift and noise
        rows transform by the same rotation.
        """
        p1, p2 = self.p
        q = [[self.q[m][i] for i in range(2)] for m in range(2)]
        for _ in range(k % 4):
            p1n = poly.rotate_coeffs(p2)
            p2n = -poly.rotate_coeffs(p1)
            qn = [
                [poly.rotate_coeffs(q[m][1]), -poly.rotate_coeffs(q[m][0])]
                for m in range(2)
            ]
            p1, p2, q = p1n, p2n, qn
        return Model2D(p1, p2, q, name=f"{self.name}@chart{k % 4}")

    def edge_model(self, k):
        """Restriction to edge k as a 1-d model in the chart coordinate."""
        m = self.rotated(k)
        p = poly.edge_slice(m.p[0])
        qs = [poly.edge_slice(m.q[mm][0]) for mm in range(2)]
        # drop identically-zero noise factors
        qs = [q for q in qs if np.any(np.abs(q) > 0)]
        if not qs:
            qs = [np.zeros(1)]
        return Model1D(p, qs, name=f"{self.name}|edge{k % 4}")


def factored_from_raw(c, axis, tol=1e-9):
    """Divide a raw polynomial by ``x_axis (1 - x_axis)``.

    Returns the factor coefficients; raises TangencyViolated when the
    division leaves a remainder above ``tol``, i.e. the field does not
    vanish on both faces normal to ``axis``.
    """
    c = poly.as_coeff2(c)
    if axis == 1:
        return factored_from_raw(c.T, 0, tol).T
    scale = max(np.max(np.abs(c)), 1.0)
    if np.max(np.abs(c[0, :])) > tol * scale:
        raise TangencyViolated("field does not vanish on the lower face")
    a = c[1:, :]
    if a.size == 0:
        return np.zeros((1, c.shape[1]))
    # synthetic division of each column by (1 - x)
    n = a.shape[0]
    g = np.zeros((max(n - 1, 1), a.shape[1]))
    carry = np.zeros(a.shape[1])
    for k in range(n - 1):
        carry = a[k, :] + carry
        g[k, :] = carry
    rem = a[n - 1, :] + (g[n - 2, :] if n >= 2 else 0.0)
    if n == 1:
        # degree-0 numerator cannot contain the factor (1 - x)
        rem = a[0, :]
        g = np.zeros((1, a.shape[1]))
        if np.max(np.abs(rem)) > tol * scale:
            raise TangencyViolated("field does not vanish on the upper face")
        return g
    if np.max(np.abs(rem)) > tol * scale:
        raise TangencyViolated("field does not vanish on the upper face")
    return g


def model2d_from_raw(b1, b2, s, name="raw2d", tol=1e-9):
    """Build a factored model from raw polynomial coefficient matrices.

    ``s[m][i]`` are raw coefficients of sigma_{mi}.  Divisibility by the
    face factors is verified; a remainder means a tangency violation.
    """
    p1 = factored_from_raw(b1, 0, tol)
    p2 = factored_from_raw(b2, 1, tol)
    q = [[factored_from_raw(s[m][i], i, tol) for i in range(2)] for m in range(2)]
    return Model2D(p1, p2, q, name=name)


def model1d_from_raw(b, s, name="raw1d", tol=1e-9):
    """1-d analogue of :func:`model2d_from_raw`."""
    p = _factored_from_raw_1d(poly.as_coeff1(b), tol)
    qs = [_factored_from_raw_1d(poly.as_coeff1(si), tol) for si in np.atleast_2d(s)]
    return Model1D(p, qs, name=name)


def _factored_from_raw_1d(c, tol):
    c2 = factored_from_raw(c[:, None], 0, tol)
    return c2[:, 0]


class CallableModel1D:
    """1-d model given by plain callables, derivatives by differences.

    Used for fields outside the factored families (the ``unsafe``
    path); no tangency is enforced here beyond what the caller checks.
    """

    dim = 1

    def __init__(self, drift, sigmas, name="callable1d", h=1e-5):
        self._b = drift
        self._s = list(sigmas)
        self.name = name
        self.h = h

    @property
    def n_noise(self):
        return len(self._s)

    def drift(self, x):
        return self._b(x)

    def drift_prime(self, x):
        h = self.h
        return (self._b(x + h) - self._b(x - h)) / (2 * h)

    def sigma(self, x, m=None):
        if m is not None:
            return self._s[m](x)
        return np.array([f(x) for f in self._s])

    def sigma_prime(self, x, m=None):
        h = self.h
        if m is not None:
            f = self._s[m]
            return (f(x + h) - f(x - h)) / (2 * h)
        return np.array([self.sigma_prime(x, m) for m in range(self.n_noise)])

    def ito_drift(self, x):
        out = self._b(x)
        for m in range(self.n_noise):
            out = out + 0.5 * self.sigma(x, m) * self.sigma_prime(x, m)
        return out

    def diffusion(self, x):
        s = self.sigma(x)
        return np.sum(np.square(s), axis=0)


class CallableModel2D:
    """2-d model given by callables; derivatives by central differences."""

    dim = 2

    def __init__(self, drift, sigma_rows, name="callable2d", h=1e-5):
        self._b = drift
        self._rows = list(sigma_rows)
        self.name = name
        self.h = h

    def drift(self, x):
        return np.asarray(self._b(np.asarray(x, dtype=float)), dtype=float)

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([np.asarray(r(x), dtype=float) for r in self._rows])

    def _jac(self, f, x):
        h = self.h
        x = np.asarray(x, dtype=float)
        cols = []
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
        return np.stack(cols, axis=-1)

    def drift_jac(self, x):
        return self._jac(self._b, x)

    def sigma_jac(self, x):
        return np.array([self._jac(r, x) for r in self._rows])

    def sigma_mixed(self, x):
        h = self.h
        x = np.asarray(x, dtype=float)
        e1 = np.array([h, 0.0])
        e2 = np.array([0.0, h])
        out = []
        for r in self._rows:
            val = (
                np.asarray(r(x + e1 + e2))
                - np.asarray(r(x + e1 - e2))
                - np.asarray(r(x - e1 + e2))
                + np.asarray(r(x - e1 - e2))
            ) / (4 * h * h)
            out.append(val)
        return np.array(out)

    def rotated(self, k=1):
        k = k % 4
        if k == 0:
            return self

        def back(u):
            x = np.asarray(u, dtype=float)
            for _ in range(k):
                x = np.array([x[1], 1.0 - x[0]])
            return x

        def fwd_vec(v):
            for _ in range(k):
                v = np.array([v[1], -v[0]])
            return v

        drift = lambda u: fwd_vec(self.drift(back(u)))
        rows = [
            (lambda u, r=r: fwd_vec(np.asarray(r(back(u)), dtype=float)))
            for r in self._rows
        ]
        return CallableModel2D(drift, rows, name=f"{self.name}@chart{k}")


def check_tangency(model, n=33, tol=1e-9):
    """Verify all fields are tangent to every face at sampled points."""
    ts = np.linspace(0.0, 1.0, n)
    if model.dim == 1:
        for x in (0.0, 1.0):
            vals = [abs(model.drift(x))] + [abs(model.sigma(x, m)) for m in range(model.n_noise)]
            if max(vals) > tol:
                raise TangencyViolated(f"1-d field nonzero at x={x}")
        return
    for t in ts:
        for x, i in (
            (np.array([0.0, t]), 0),
            (np.array([1.0, t]), 0),
            (np.array([t, 0.0]), 1),
            (np.array([t, 1.0]), 1),
        ):
            b = model.drift(x)
            s = model.sigma(x)
            if abs(b[i]) > tol or np.max(np.abs(s[:, i])) > tol:
                raise TangencyViolated(
                    f"normal component nonzero at {x.tolist()}"
                )


def check_jacobians(model, points=None, h=1e-5, tol_factor=10.0):
    """Compare analytic Jacobians with central differences.

    Returns the largest absolute discrepancy; raises ValidationError
    beyond ``tol_factor * h**2``.
    """
    rng = np.random.default_rng(7)
    if points is None:
        points = rng.uniform(0.2, 0.8, size=(8, model.dim))
    worst = 0.0
    tol = tol_factor * h * h
    for x in points:
        if model.dim == 1:
            x = float(np.atleast_1d(x)[0])
            fd = (model.drift(x + h) - model.drift(x - h)) / (2 * h)
            worst = max(worst, abs(fd - model.drift_prime(x)))
            for m in range(model.n_noise):
                fd = (model.sigma(x + h, m) - model.sigma(x - h, m)) / (2 * h)
                worst = max(worst, abs(fd - model.sigma_prime(x, m)))
            continue
        J = model.drift_jac(x)
        S = model.sigma_jac(x)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd_b = (model.drift(x + e) - model.drift(x - e)) / (2 * h)
            worst = max(worst, np.max(np.abs(fd_b - J[:, j])))
            fd_s = (model.sigma(x + e) - model.sigma(x - e)) / (2 * h)
            worst = max(worst, np.max(np.abs(fd_s - S[:, :, j])))
    if worst > tol:
        raise ValidationError(f"Jacobian mismatch {worst:.3e} exceeds {tol:.3e}")
    return worst
