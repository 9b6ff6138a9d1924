"""Edge restrictions: invariant measures, transversal rates, correctors.

An edge whose restricted drift repels from both endpoints carries a
unique invariant probability measure.  The averaged transversal rate
against that measure decides whether the edge attracts nearby interior
mass; the corrector turns the fluctuating transversal rate into a
Lyapunov function with uniform decay along the whole edge.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import poly
from .chart import CHART
from .errors import (
    NonHyperbolicEdge,
    NotInS,
    QuadratureFailure,
    SolverFailure,
)
from .kernels import integrate_poly_1d, pack1d, path_seed

edge_restriction = None  # set below; kept as a named operation


def _edge_model(model, k):
    return model.edge_model(k)


edge_restriction = _edge_model


@dataclass
class Density1D:
    """Stationary density of an interval diffusion with repelling ends."""

    y_grid: np.ndarray
    pdf_y: np.ndarray  # density in the chart coordinate
    x_grid: np.ndarray
    pdf_x: np.ndarray  # density in x (integrates to 1 in dx)
    n_nodes: int
    quad_rel_change: float

    def mean_of(self, f):
        """Integral of f(x) against the density, trapezoid in y."""
        vals = f(self.x_grid)
        return float(np.trapezoid(vals * self.pdf_y, self.y_grid))

    def mode_x(self):
        return float(self.x_grid[np.argmax(self.pdf_x)])

    def cdf(self, x):
        cum = np.concatenate(
            [[0.0], np.cumsum(np.diff(self.y_grid) * 0.5 * (self.pdf_y[1:] + self.pdf_y[:-1]))]
        )
        return np.interp(CHART.forward(np.asarray(x, dtype=float)), self.y_grid, cum)


def chart_coeffs_1d(model1d, y):
    """Vectorized chart-form drift and squared noise of a 1-d model.

    Returns (ell, a) on the array of chart positions ``y``; exact
    boundary ratios are used in the log zones so both stay bounded and
    continuous up to the endpoints.
    """
    y = np.asarray(y, dtype=float)
    x = np.clip(CHART.inverse(y), 0.0, 1.0)
    lower = x < CHART.lo
    upper = x > CHART.hi
    mid = ~(lower | upper)
    ell = np.empty_like(x)
    a = np.zeros_like(x)
    p = poly.eval1(model1d.p, x)
    w = x * (1 - x)
    corr = np.zeros_like(x)
    sq = np.zeros_like(x)
    ratio = np.where(lower, 1 - x, x)  # boundary factor left after division
    for m in range(model1d.n_noise):
        q = poly.eval1(model1d.qs[m], x)
        sp = (1 - 2 * x) * q + w * poly.eval1(model1d._dqs[m], x)
        sr = ratio * q
        corr += 0.5 * sp * sr
        sq += sr * sr
    ell = ratio * p + corr + np.where(lower, -0.5 * sq, 0.5 * sq)
    a = sq
    if np.any(mid):
        xm = x[mid]
        d1 = CHART.dforward(xm)
        d2 = CHART.d2forward(xm)
        B = model1d.ito_drift(xm)
        s2 = model1d.diffusion(xm)
        ell[mid] = B * d1 + 0.5 * s2 * d2
        a[mid] = s2 * d1 * d1
    return ell, a


def _scale_data(model1d, y):
    """Ito drift times chart slope, squared chart noise, log chart slope.

    The first quantity is the continuous boundary-ratio form of
    B(x) y'(x); all three are the ingredients of the stationary density
    written in the chart coordinate.
    """
    y = np.asarray(y, dtype=float)
    x = np.clip(CHART.inverse(y), 0.0, 1.0)
    lower = x < CHART.lo
    upper = x > CHART.hi
    mid = ~(lower | upper)
    p = poly.eval1(model1d.p, x)
    w = x * (1 - x)
    ratio = np.where(lower, 1 - x, x)
    corr = np.zeros_like(x)
    a = np.zeros_like(x)
    for m in range(model1d.n_noise):
        q = poly.eval1(model1d.qs[m], x)
        sp = (1 - 2 * x) * q + w * poly.eval1(model1d._dqs[m], x)
        sr = ratio * q
        corr += 0.5 * sp * sr
        a += sr * sr
    bd1 = ratio * p + corr
    logd1 = np.where(lower, -y, y)
    if np.any(mid):
        xm = x[mid]
        d1 = CHART.dforward(xm)
        bd1[mid] = model1d.ito_drift(xm) * d1
        a[mid] = model1d.diffusion(xm) * d1 * d1
        logd1[mid] = np.log(d1)
    return bd1, a, logd1


def _log_density(model1d, y, refine=16):
    """Unnormalized log of the invariant density in the chart coordinate."""
    yf = np.linspace(y[0], y[-1], refine * (len(y) - 1) + 1)
    bd1, a, logd1 = _scale_data(model1d, yf)
    if np.min(a) <= 0:
        raise NotInS("edge diffusion degenerates in the interior")
    integrand = 2.0 * bd1 / a
    cum = np.concatenate(
        [[0.0], np.cumsum(np.diff(yf) * 0.5 * (integrand[1:] + integrand[:-1]))]
    )
    logq = cum - np.log(a) + logd1
    logq -= np.max(logq)
    return np.interp(y, yf, logq)


def _density_on_grid(model1d, y, refine=16):
    # cumulative scale integral on an internally refined grid
    yf = np.linspace(y[0], y[-1], refine * (len(y) - 1) + 1)
    logq = _log_density(model1d, yf, refine=1)
    q = np.exp(logq)
    q /= np.trapezoid(q, yf)
    return np.interp(y, yf, q)


def stationary_density_1d(model1d, n_nodes=512, y_max=None):
    """Invariant probability density; requires both endpoints repelling.

    Computed in the chart coordinate via the explicit scale/speed
    formula; ``quad_rel_change`` reports the relative L1 change when the
    node count doubles, raising QuadratureFailure above 1e-6.
    """
    lam0, lam1 = model1d.endpoint_rates()
    if lam0 <= 0 or lam1 <= 0:
        raise NotInS("both endpoint rates must be positive")
    if y_max is None:
        _, a_tails = chart_coeffs_1d(model1d, np.array([-50.0, 50.0]))
        a_lo, a_hi = float(a_tails[0]), float(a_tails[1])
        slope = min(2 * lam0 / max(a_lo, 1e-12), 2 * lam1 / max(a_hi, 1e-12))
        y_max = min(max(40.0 / max(slope, 1e-3), 15.0), 400.0)
    y = np.linspace(-y_max, y_max, n_nodes)
    pdf = _density_on_grid(model1d, y, refine=128)
    pdf_coarse = _density_on_grid(model1d, y, refine=64)
    rel = float(np.trapezoid(np.abs(pdf - pdf_coarse), y))
    if rel > 1e-6:
        raise QuadratureFailure(f"density quadrature unstable: {rel:.2e}")
    x = CHART.inverse(y)
    # 0 * inf at grid ends that reach the endpoints in double precision
    with np.errstate(invalid="ignore"):
        pdf_x = np.nan_to_num(pdf * CHART.dforward(x))
    return Density1D(y, pdf, x, pdf_x, n_nodes, rel)


def lambda2_pointwise(model, k, u):
    """Transversal rate at position u on edge k.

    The derivative of the transversal drift component plus the
    mixed-derivative noise term, evaluated in the chart of vertex k.
    """
    mrot = model.rotated(k)
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    uu = np.atleast_1d(u)
    out = np.empty_like(uu)
    for idx, ui in enumerate(uu):
        x = np.array([float(ui), 0.0])
        J = mrot.drift_jac(x)
        S = mrot.sigma(x)
        M = mrot.sigma_mixed(x)
        out[idx] = J[1, 1] + 0.5 * (S[0, 0] * M[0, 1] + S[1, 0] * M[1, 1])
    return float(out[0]) if scalar else out


def lambda2_poly(model, k):
    """Exact polynomial coefficients of u -> Lambda_2 on edge k."""
    mrot = model.rotated(k)
    # d2 b2 at (u, 0) equals the drift factor of component 2 on the edge
    c = poly.edge_slice(mrot.p[1])
    out = np.zeros(max(len(c), 1))
    out[: len(c)] = c
    w = np.array([0.0, 1.0, -1.0])  # u(1-u)
    for m in range(2):
        s1 = poly.edge_slice(mrot.q[m][0])  # sigma_{m1}/w on the edge
        dq2 = poly.edge_slice(poly.deriv2(mrot.q[m][1], 0))
        term = 0.5 * np.polynomial.polynomial.polymul(
            np.polynomial.polynomial.polymul(w, s1), dq2
        )
        if np.any(term):
            n = max(len(out), len(term))
            padded = np.zeros(n)
            padded[: len(out)] += out
            padded[: len(term)] += term
            out = padded
    return out


@dataclass
class EdgeSpectrum:
    """Summary of edge k: membership and averaged transversal rate."""

    k: int
    rate_start: float
    rate_end: float
    in_S: bool
    lambda_bar: float = np.nan
    lambda_bar_err: float = 0.0

    @property
    def attracting(self):
        return self.in_S and self.lambda_bar < 0


def edge_spectrum(model, k, n_nodes=512, tol=1e-9):
    em = model.edge_model(k)
    lam0, lam1 = em.endpoint_rates()
    in_S = lam0 > tol and lam1 > tol
    if not in_S:
        return EdgeSpectrum(k % 4, lam0, lam1, False)
    lb, err = transversal_exponent(model, k, n_nodes=n_nodes)
    if abs(lb) <= err + tol:
        raise NonHyperbolicEdge(
            f"edge {k}: averaged transversal rate {lb:.3e} within error {err:.3e}"
        )
    return EdgeSpectrum(k % 4, lam0, lam1, True, lb, err)


def edge_spectra(model, **kw):
    return [edge_spectrum(model, k, **kw) for k in range(4)]


def transversal_exponent(model, k, n_nodes=512):
    """Averaged transversal rate of edge k against its invariant measure.

    Returns (value, error estimate from node doubling).  Requires the
    edge to carry an invariant measure.
    """
    em = model.edge_model(k)
    lam2 = lambda2_poly(model, k)
    f = lambda x: np.polynomial.polynomial.polyval(x, lam2)
    dens = stationary_density_1d(em, n_nodes=n_nodes)
    v1 = dens.mean_of(f)
    dens2 = stationary_density_1d(em, n_nodes=2 * n_nodes)
    v2 = dens2.mean_of(f)
    err = abs(v2 - v1)
    return float(v2), float(max(err, 1e-12))


def transversal_exponent_mc(
    model, k, t_horizon=2000.0, dt=1e-3, x0=0.5, seed=0, n_batches=40
):
    """Time-average Monte-Carlo estimate of the same quantity.

    Returns (estimate, standard error) by batch means over one long
    ergodic edge path.
    """
    em = model.edge_model(k)
    lam2 = lambda2_poly(model, k)
    P, DP, Q, DQ = pack1d(em)
    G = np.zeros(max(len(lam2), 2))
    G[: len(lam2)] = lam2
    n_steps = int(round(t_horizon / dt))
    total, batch_means = integrate_poly_1d(
        P, DP, Q, DQ, G, x0, dt, n_steps, path_seed(seed, 0), 1.0, n_batches
    )
    est = total / (n_steps * dt)
    # skip the first batch as burn-in
    bm = batch_means[1:]
    se = float(np.std(bm, ddof=1) / np.sqrt(len(bm)))
    return float(est), se


@dataclass
class Corrector:
    """Corrector psi on an edge: solves (edge generator) psi = -g.

    ``g`` is the centered transversal rate.  psi is normalized to zero
    mean against the edge invariant measure; evaluation goes through a
    spline in the chart coordinate, so values and the combinations
    x(1-x) psi' stay accurate into the corners.
    """

    k: int
    y_grid: np.ndarray
    psi_y: np.ndarray
    residual_norm: float
    lambda_bar: float
    boundedness: dict
    g_values: np.ndarray = None  # centered transversal rate on the grid
    pi_weights: np.ndarray = None  # discrete invariant weights (sum to 1)
    _spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._spline is None:
            self._spline = CubicSpline(self.y_grid, self.psi_y)

    def psi(self, u):
        y = np.clip(CHART.forward(np.asarray(u, dtype=float)), self.y_grid[0], self.y_grid[-1])
        return self._spline(y)

    def dpsi(self, u):
        u = np.asarray(u, dtype=float)
        y = np.clip(CHART.forward(u), self.y_grid[0], self.y_grid[-1])
        return self._spline(y, 1) * CHART.dforward(u)

    def d2psi(self, u):
        u = np.asarray(u, dtype=float)
        y = np.clip(CHART.forward(u), self.y_grid[0], self.y_grid[-1])
        d1 = CHART.dforward(u)
        return self._spline(y, 2) * d1 * d1 + self._spline(y, 1) * CHART.d2forward(u)

    def psi_of_y(self, y):
        return self._spline(np.clip(y, self.y_grid[0], self.y_grid[-1]))

    def dpsi_of_y(self, y):
        return self._spline(np.clip(y, self.y_grid[0], self.y_grid[-1]), 1)

    def d2psi_of_y(self, y):
        return self._spline(np.clip(y, self.y_grid[0], self.y_grid[-1]), 2)


def solve_corrector(model, k, n_grid=801, y_max=25.0, residual_tol=1e-6):
    """Solve the centered transversal-rate equation on edge k.

    Finite differences on a uniform grid in the chart coordinate with
    asymptotic slope conditions at both ends (the coefficients are
    constant in the far tails), plus a zero-mean normalization row.
    """
    em = model.edge_model(k)
    lam0, lam1 = em.endpoint_rates()
    if lam0 <= 0 or lam1 <= 0:
        raise NotInS(f"edge {k} does not carry an invariant measure")
    lam2 = lambda2_poly(model, k)
    f_lam2 = lambda x: np.polynomial.polynomial.polyval(x, lam2)

    n = n_grid
    y = np.linspace(-y_max, y_max, n)
    h = y[1] - y[0]
    x = CHART.inverse(y)
    ell, _ = chart_coeffs_1d(em, y)
    # density and diffusion at nodes and midpoints of the solver grid
    y2 = np.linspace(-y_max, y_max, 2 * n - 1)
    logq2 = _log_density(em, y2, refine=16)
    _, a2, _ = _scale_data(em, y2)
    pi_node = np.exp(logq2[0::2])

    # center the transversal rate against the discrete invariant weights
    # so the conservative-form system below is solvable to rounding
    lam2_node = f_lam2(x)
    lambda_bar = float(np.sum(pi_node[1:-1] * lam2_node[1:-1]) / np.sum(pi_node[1:-1]))
    g = lam2_node - lambda_bar

    A = np.zeros((n + 1, n))
    rhs = np.zeros(n + 1)
    # conservative second-order form: (a pi psi')' / (2 pi) = -g, with the
    # neighboring density ratios taken from the log-density for stability
    r_up = np.exp(logq2[3:-1:2] - logq2[2:-2:2])  # pi_{i+1/2} / pi_i
    r_dn = np.exp(logq2[1:-3:2] - logq2[2:-2:2])  # pi_{i-1/2} / pi_i
    c_up = 0.5 * a2[3:-1:2] * r_up / h**2
    c_dn = 0.5 * a2[1:-3:2] * r_dn / h**2
    idx = np.arange(1, n - 1)
    A[idx, idx - 1] = c_dn
    A[idx, idx] = -(c_up + c_dn)
    A[idx, idx + 1] = c_up
    rhs[idx] = -g[idx]
    # asymptotic constant-coefficient slope at the ends
    A[0, 0] = -1.0 / h
    A[0, 1] = 1.0 / h
    rhs[0] = -g[0] / ell[0]
    A[n - 1, n - 2] = -1.0 / h
    A[n - 1, n - 1] = 1.0 / h
    rhs[n - 1] = -g[-1] / ell[-1]
    # zero mean against the invariant measure
    w = pi_node / np.sum(pi_node)
    A[n, :] = w
    rhs[n] = 0.0
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    interior = A[1 : n - 1] @ sol - rhs[1 : n - 1]
    residual = float(np.max(np.abs(interior)))
    if residual > residual_tol:
        raise SolverFailure(f"corrector residual {residual:.2e} above {residual_tol}")
    spline = CubicSpline(y, sol)
    d1 = spline(y, 1) * CHART.dforward(x)
    d2 = spline(y, 2) * CHART.dforward(x) ** 2 + spline(y, 1) * CHART.d2forward(x)
    wfac = x * (1 - x)
    bnd = {
        "max_w_dpsi": float(np.max(np.abs(wfac * d1))),
        "max_w2_d2psi": float(np.max(np.abs(wfac**2 * d2))),
        "max_psi": float(np.max(np.abs(sol))),
    }
    return Corrector(
        k=k % 4,
        y_grid=y,
        psi_y=sol,
        residual_norm=residual,
        lambda_bar=float(lambda_bar),
        boundedness=bnd,
        g_values=g,
        pi_weights=w,
        _spline=spline,
    )


def corrector_mc(model, k, points, gap=None, n_paths=800, dt=1e-3, seed=0):
    """Monte-Carlo oracle for the corrector at the given edge positions.

    Integrates the expected centered transversal rate along edge paths
    started from each point, up to a multiple of the relaxation time.
    Returned values carry an arbitrary common additive constant; compare
    shapes after shifting.  Also returns standard errors.
    """
    em = model.edge_model(k)
    lam0, lam1 = em.endpoint_rates()
    if gap is None:
        gap = min(lam0, lam1)
    t_horizon = 50.0 / gap
    lam2 = lambda2_poly(model, k)
    dens = stationary_density_1d(em, n_nodes=1024)
    lambda_bar = dens.mean_of(
        lambda x: np.polynomial.polynomial.polyval(x, lam2)
    )
    G = np.zeros(max(len(lam2), 2))
    G[: len(lam2)] = lam2
    G[0] -= lambda_bar
    P, DP, Q, DQ = pack1d(em)
    n_steps = int(round(t_horizon / dt))
    est = np.zeros(len(points))
    se = np.zeros(len(points))
    for j, u0 in enumerate(points):
        vals = np.empty(n_paths)
        for p in range(n_paths):
            tot, _ = integrate_poly_1d(
                P, DP, Q, DQ, G, float(u0), dt, n_steps,
                path_seed(seed + 1000 * j, p), 1.0, 2,
            )
            vals[p] = tot
        est[j] = vals.mean()
        se[j] = vals.std(ddof=1) / np.sqrt(n_paths)
    return est, se
