"""Core simulation and generator machinery.

Dynamics are given in Stratonovich form; stepping uses the equivalent
Ito form with the drift correction added explicitly.  Near a face the
simulator works in the logarithmic chart coordinate, where the
coefficients stay bounded however deep the path sinks; the chart-form
coefficients are evaluated through exact boundary ratios of the
factored fields, never by dividing by the distance to the face.
"""

from dataclasses import dataclass, field

import numpy as np

from .chart import CHART
from .errors import AdaptiveFailure, StepRejected
from .model import Model1D, Model2D

# per-coordinate stepping charts
MODE_LOG_LOWER = 0
MODE_IDENTITY = 1
MODE_LOG_UPPER = 2

_SEAM_LO = 0.25
_SEAM_HI = 0.75
_Y_LO = np.log(_SEAM_LO)
_Y_UP = -np.log(_SEAM_HI)  # lowest upper-chart value

DEFAULT_MAX_DISP = 1.0
MAX_HALVINGS = 20


def ito_drift_correction(model, x):
    """(1/2) sum_{j,m} (partial_j sigma_{mi}) sigma_{mj}, per component.

    Adding this to the Stratonovich drift yields the Ito drift.
    """
    if model.dim == 1:
        out = 0.0
        for m in range(model.n_noise):
            out += 0.5 * model.sigma_prime(x, m) * model.sigma(x, m)
        return out
    S = model.sigma(x)
    J = model.sigma_jac(x)
    out = np.zeros(2)
    for i in range(2):
        for m in range(2):
            for j in range(2):
                out[i] += 0.5 * J[m, i, j] * S[m, j]
    return out


def ito_drift(model, x):
    return model.drift(x) + ito_drift_correction(model, x)


def generator_apply(model, f, x):
    """Apply the generator to a C^2 function at an interior point.

    ``f`` must expose ``grad(x)`` and ``hess(x)``; in one dimension
    these return the first and second derivative.
    """
    g = f.grad(x)
    H = f.hess(x)
    if model.dim == 1:
        a = model.diffusion(x)
        return ito_drift(model, x) * g + 0.5 * a * H
    B = ito_drift(model, x)
    S = model.sigma(x)
    A = S.T @ S  # A[i, j] = sum_m sigma_mi sigma_mj
    return float(B @ g + 0.5 * np.sum(A * H))


@dataclass
class FuncC2:
    """Adapter bundling callables for use with generator_apply."""

    value: callable
    grad: callable = None
    hess: callable = None

    def __post_init__(self):
        v, g, h = self.value, self.grad, self.hess
        self.value, self.grad, self.hess = v, (g or _fd_grad(v)), (h or _fd_hess(v))


def _fd_grad(value, h=1e-6):
    def grad(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size == 1:
            return (value(float(x[0]) + h) - value(float(x[0]) - h)) / (2 * h)
        out = np.zeros(x.size)
        for j in range(x.size):
            e = np.zeros(x.size)
            e[j] = h
            out[j] = (value(x + e) - value(x - e)) / (2 * h)
        return out

    return grad


def _fd_hess(value, h=1e-4):
    def hess(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size == 1:
            z = float(x[0])
            return (value(z + h) - 2 * value(z) + value(z - h)) / (h * h)
        n = x.size
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = h
                ej[j] = h
                out[i, j] = (
                    value(x + ei + ej)
                    - value(x + ei - ej)
                    - value(x - ei + ej)
                    + value(x - ei - ej)
                ) / (4 * h * h)
        return out

    return hess


# --------------------------------------------------------------------------
# chart-form coefficients
# --------------------------------------------------------------------------

def _modes_from_x(x):
    x = np.atleast_1d(x)
    modes = np.full(x.shape, MODE_IDENTITY, dtype=np.int8)
    modes[x < _SEAM_LO] = MODE_LOG_LOWER
    modes[x > _SEAM_HI] = MODE_LOG_UPPER
    return modes


def _coeffs_mixed_2d(model, x, modes):
    """Drift vector and noise matrix in the per-coordinate stepping chart.

    Coordinates in a log mode get the chart-form (bounded) coefficients
    computed from exact boundary ratios; identity coordinates get the
    plain Ito coefficients.
    """
    b = model.drift(x)
    S = model.sigma(x)
    J = model.sigma_jac(x)
    corr = np.zeros(2)
    for i in range(2):
        for m in range(2):
            for j in range(2):
                corr[i] += 0.5 * J[m, i, j] * S[m, j]
    drift = np.zeros(2)
    noise = np.zeros((2, 2))  # noise[m, i]
    is_fac = isinstance(model, Model2D)
    for i in range(2):
        o = 1 - i
        if modes[i] == MODE_IDENTITY:
            drift[i] = b[i] + corr[i]
            noise[:, i] = S[:, i]
            continue
        if modes[i] == MODE_LOG_LOWER:
            if is_fac:
                import numpy.polynomial.polynomial as npp

                pi = npp.polyval2d(x[0], x[1], model.p[i])
                br = (1.0 - x[i]) * pi
                cr = 0.0
                ssq = 0.0
                for m in range(2):
                    qv = npp.polyval2d(x[0], x[1], model.q[m][i])
                    sr = (1.0 - x[i]) * qv
                    dq_other = npp.polyval2d(x[0], x[1], model._dq[m][i][o])
                    cr += 0.5 * (J[m, i, i] * sr + (1.0 - x[i]) * dq_other * S[m, o])
                    ssq += sr * sr
                    noise[m, i] = sr
                drift[i] = br + cr - 0.5 * ssq
            else:
                xi = max(x[i], 1e-12)
                sr = S[:, i] / xi
                drift[i] = (b[i] + corr[i]) / xi - 0.5 * np.sum(sr * sr)
                noise[:, i] = sr
            continue
        # MODE_LOG_UPPER
        if is_fac:
            import numpy.polynomial.polynomial as npp

            pi = npp.polyval2d(x[0], x[1], model.p[i])
            br = x[i] * pi
            cr = 0.0
            usq = 0.0
            for m in range(2):
                qv = npp.polyval2d(x[0], x[1], model.q[m][i])
                ur = x[i] * qv
                dq_other = npp.polyval2d(x[0], x[1], model._dq[m][i][o])
                cr += 0.5 * (J[m, i, i] * ur + x[i] * dq_other * S[m, o])
                usq += ur * ur
                noise[m, i] = ur
            drift[i] = br + cr + 0.5 * usq
        else:
            v = max(1.0 - x[i], 1e-12)
            ur = S[:, i] / v
            drift[i] = (b[i] + corr[i]) / v + 0.5 * np.sum(ur * ur)
            noise[:, i] = ur
    return drift, noise


def _coeffs_mixed_1d(model, x, mode):
    b = model.drift(x)
    corr = ito_drift_correction(model, x)
    nm = model.n_noise
    noise = np.zeros(nm)
    if mode == MODE_IDENTITY:
        for m in range(nm):
            noise[m] = model.sigma(x, m)
        return b + corr, noise
    if mode == MODE_LOG_LOWER:
        if isinstance(model, Model1D):
            br = model.drift_over_x(x)
            cr = 0.0
            ssq = 0.0
            for m in range(nm):
                sr = model.sigma_over_x(x, m)
                cr += 0.5 * model.sigma_prime(x, m) * sr
                ssq += sr * sr
                noise[m] = sr
            return br + cr - 0.5 * ssq, noise
        xi = max(x, 1e-12)
        for m in range(nm):
            noise[m] = model.sigma(x, m) / xi
        return (b + corr) / xi - 0.5 * np.sum(noise**2), noise
    if isinstance(model, Model1D):
        br = model.drift_over_1mx(x)
        cr = 0.0
        usq = 0.0
        for m in range(nm):
            ur = model.sigma_over_1mx(x, m)
            cr += 0.5 * model.sigma_prime(x, m) * ur
            usq += ur * ur
            noise[m] = ur
        return br + cr + 0.5 * usq, noise
    v = max(1.0 - x, 1e-12)
    for m in range(nm):
        noise[m] = model.sigma(x, m) / v
    return (b + corr) / v + 0.5 * np.sum(noise**2), noise


class ChartDynamics:
    """Coefficient evaluators of the process seen through the full chart.

    ``ell(y)`` and ``s(y)`` are the drift vector and noise matrix of the
    Ito equation satisfied by Y = y(X); both stay bounded as y runs to
    either infinity, with ``ell_i`` approaching the vertex rates.
    """

    def __init__(self, model):
        self.model = model

    def _xy(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x = np.clip(CHART.inverse(y), 0.0, 1.0)
        return x

    def ell(self, y):
        x = self._xy(y)
        if self.model.dim == 1:
            xx = float(x[0])
            d1 = CHART.dforward(xx)
            d2 = CHART.d2forward(xx)
            out = self.model.ito_drift(xx) * d1 + 0.5 * self.model.diffusion(xx) * d2
            return self._bounded_1d(xx, float(np.atleast_1d(y)[0]), out)
        d1 = CHART.dforward(x)
        d2 = CHART.d2forward(x)
        B = ito_drift(self.model, x)
        S = self.model.sigma(x)
        out = np.zeros(2)
        for i in range(2):
            if x[i] < _SEAM_LO or x[i] > _SEAM_HI:
                # ratio form, exact down to the face
                modes = _modes_from_x(x)
                dr, _ = _coeffs_mixed_2d(self.model, x, modes)
                out[i] = dr[i]
            else:
                out[i] = B[i] * d1[i] + 0.5 * np.sum(S[:, i] ** 2) * d2[i]
        return out

    def _bounded_1d(self, x, y, mid_value):
        if _SEAM_LO <= x <= _SEAM_HI:
            return mid_value
        mode = MODE_LOG_LOWER if x < _SEAM_LO else MODE_LOG_UPPER
        dr, _ = _coeffs_mixed_1d(self.model, x, mode)
        return dr

    def s(self, y):
        x = self._xy(y)
        if self.model.dim == 1:
            xx = float(x[0])
            if xx < _SEAM_LO or xx > _SEAM_HI:
                mode = MODE_LOG_LOWER if xx < _SEAM_LO else MODE_LOG_UPPER
                _, nz = _coeffs_mixed_1d(self.model, xx, mode)
                return nz
            return self.model.sigma(xx) * CHART.dforward(xx)
        modes = _modes_from_x(x)
        S = self.model.sigma(x)
        d1 = CHART.dforward(x)
        out = np.zeros((2, 2))
        for i in range(2):
            if modes[i] == MODE_IDENTITY:
                out[:, i] = S[:, i] * d1[i]
            else:
                _, nz = _coeffs_mixed_2d(self.model, x, modes)
                out[:, i] = nz[:, i]
        return out

    def diffusion(self, y):
        s = self.s(y)
        if self.model.dim == 1:
            return float(np.sum(np.square(s)))
        return s.T @ s


def chart_dynamics(model):
    return ChartDynamics(model)


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------

def step(model, x, dt, noise_increment, max_disp=DEFAULT_MAX_DISP):
    """One explicit step in the active per-coordinate chart.

    ``noise_increment`` holds standard normals (one per driving noise);
    raises StepRejected when a log-chart coordinate would move farther
    than ``max_disp``.  Face coordinates (exactly 0 or 1) are invariant.
    """
    sq = np.sqrt(dt)
    z = np.atleast_1d(np.asarray(noise_increment, dtype=float))
    if model.dim == 1:
        x = float(np.asarray(x, dtype=float).reshape(()))
        if x in (0.0, 1.0):
            return x
        mode = int(_modes_from_x(np.array([x]))[0])
        dr, nz = _coeffs_mixed_1d(model, x, mode)
        dv = dr * dt + float(nz @ z[: len(nz)]) * sq
        return _commit_1(x, mode, dv, dt, max_disp)
    x = np.asarray(x, dtype=float).copy()
    on_face = (x == 0.0) | (x == 1.0)
    if on_face.all():
        return x
    if on_face.any():
        return _face_step(model, x, on_face, dt, z, max_disp)
    modes = _modes_from_x(x)
    dr, nz = _coeffs_mixed_2d(model, x, modes)
    out = np.empty(2)
    for i in range(2):
        dv = dr[i] * dt + (nz[0, i] * z[0] + nz[1, i] * z[1]) * sq
        out[i] = _commit_1(x[i], int(modes[i]), dv, dt, max_disp)
    return out


def _commit_1(xi, mode, dv, dt, max_disp):
    if mode == MODE_IDENTITY:
        xn = xi + dv
        if xn <= 0.0:
            if -xn < dt:
                return 0.0
            raise StepRejected("identity-chart overshoot below 0")
        if xn >= 1.0:
            if xn - 1.0 < dt:
                return 1.0
            raise StepRejected("identity-chart overshoot above 1")
        return xn
    if abs(dv) > max_disp:
        raise StepRejected("log-chart displacement exceeds limit")
    if mode == MODE_LOG_LOWER:
        y = (np.log(xi) if xi > 0 else -np.inf) + dv
        with np.errstate(under="ignore"):
            return float(np.exp(y))
    y = (-np.log1p(-xi) if xi < 1 else np.inf) + dv
    with np.errstate(under="ignore"):
        return float(1.0 - np.exp(-y))


def _face_step(model, x, on_face, dt, z, max_disp):
    # exactly one coordinate on a face: the other follows the edge
    # restriction; the face coordinate never moves.
    i_face = int(np.where(on_face)[0][0])
    i_free = 1 - i_face
    k = _edge_index(i_face, x[i_face])
    em = model.edge_model(k)
    u = _to_edge_coord(k, i_free, x[i_free])
    un = step(em, u, dt, z[: em.n_noise], max_disp)
    out = x.copy()
    out[i_free] = _from_edge_coord(k, i_free, un)
    return out


def _edge_index(i_face, val):
    if i_face == 1:
        return 0 if val == 0.0 else 2
    return 3 if val == 0.0 else 1


def _to_edge_coord(k, i_free, v):
    # chart-k edge coordinate of the free variable
    return {0: v, 1: v, 2: 1.0 - v, 3: 1.0 - v}[k]


def _from_edge_coord(k, i_free, u):
    return {0: u, 1: u, 2: 1.0 - u, 3: 1.0 - u}[k]


@dataclass
class Trajectory:
    """Recorded path with chart bookkeeping.

    ``states`` are positions in the unit cube (log-deep coordinates
    underflow to the face; use ``ys`` for depth).  ``ys`` holds the full
    chart coordinates and ``chart_tags`` the per-coordinate stepping
    chart at each record time.
    """

    times: np.ndarray
    states: np.ndarray
    ys: np.ndarray
    chart_tags: np.ndarray
    seed: int
    dt: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


def simulate(
    model,
    x0,
    t_max,
    dt,
    seed=0,
    record_every=1,
    max_disp=DEFAULT_MAX_DISP,
):
    """Integrate one path; deterministic in ``seed``.

    A rejected step is retried as two half steps with fresh noise, up
    to MAX_HALVINGS levels, after which AdaptiveFailure is raised.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    dim = model.dim
    n_noise = 2 if dim == 2 else model.n_noise
    n_steps = int(round(t_max / dt))
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    times = [0.0]
    states = [x.copy()]
    ys = [CHART.forward(np.clip(x, 0.0, 1.0))]
    tags = [_modes_from_x(x)]
    for n in range(n_steps):
        x = _advance(model, x if dim == 2 else float(x[0]), dt, rng, n_noise, max_disp, 0)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if (n + 1) % record_every == 0 or n == n_steps - 1:
            times.append((n + 1) * dt)
            states.append(x.copy())
            ys.append(CHART.forward(np.clip(x, 0.0, 1.0)))
            tags.append(_modes_from_x(x))
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        ys=np.array(ys),
        chart_tags=np.array(tags),
        seed=int(seed),
        dt=dt,
    )


def _advance(model, x, h, rng, n_noise, max_disp, depth):
    z = rng.normal(size=n_noise)
    try:
        return step(model, x, h, z, max_disp)
    except StepRejected:
        if depth >= MAX_HALVINGS:
            raise AdaptiveFailure(
                f"step acceptance failed after {MAX_HALVINGS} halvings"
            )
        x = _advance(model, x, h / 2, rng, n_noise, max_disp, depth + 1)
        if model.dim == 2:
            x = np.atleast_1d(np.asarray(x, dtype=float))
        return _advance(model, x, h / 2, rng, n_noise, max_disp, depth + 1)
