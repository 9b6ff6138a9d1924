"""Lyapunov functions built from logarithms of the vertex coordinates.

Near a non-attracting vertex the function -alpha ln x1 - beta ln x2 (in
the vertex's own coordinates) has generator close to alpha lam1 + beta
lam2; along an edge with positive averaged transversal rate the
combination theta (ln x2 + psi(x1)) has generator close to theta times
that averaged rate.  verify_generator_band measures how wide a boundary
band these approximations actually hold on, by sampling.
"""

from dataclasses import dataclass

import numpy as np

from .sde import generator_apply


def rotation_affine(k):
    """Affine map x -> (v + M x) giving the coordinates of vertex k.

    One application sends x to (x2, 1 - x1); k applications give the
    chart in which vertex k sits at the origin.
    """
    M = np.eye(2)
    v = np.zeros(2)
    for _ in range(k % 4):
        M = np.array([[0.0, 1.0], [-1.0, 0.0]]) @ M
        v = np.array([v[1], 1.0 - v[0]])
    return v, M


def from_vertex_coords(u, k):
    """Global coordinates of the point with vertex-k coordinates u."""
    v, M = rotation_affine(k)
    return np.linalg.solve(M, np.asarray(u, dtype=float) - v)


@dataclass
class CornerLyapunov:
    """Phi(x) = -alpha ln x1^k - beta ln x2^k near vertex k."""

    k: int
    alpha: float
    beta: float

    def _local(self, x):
        v, M = rotation_affine(self.k)
        return v + M @ np.asarray(x, dtype=float), M

    def value(self, x):
        u, _ = self._local(x)
        return -self.alpha * np.log(u[0]) - self.beta * np.log(u[1])

    def grad(self, x):
        u, M = self._local(x)
        g_local = np.array([-self.alpha / u[0], -self.beta / u[1]])
        return M.T @ g_local

    def hess(self, x):
        u, M = self._local(x)
        H_local = np.diag([self.alpha / u[0] ** 2, self.beta / u[1] ** 2])
        return M.T @ H_local @ M


@dataclass
class EdgeLyapunov:
    """Phi(x) = theta (ln x2^k + psi(x1^k)) along edge k.

    ``corrector`` may be None, in which case psi is identically zero.
    """

    k: int
    theta: float
    corrector: object = None

    def _local(self, x):
        v, M = rotation_affine(self.k)
        return v + M @ np.asarray(x, dtype=float), M

    def value(self, x):
        u, _ = self._local(x)
        psi = 0.0 if self.corrector is None else float(self.corrector.psi(u[0]))
        return self.theta * (np.log(u[1]) + psi)

    def grad(self, x):
        u, M = self._local(x)
        dpsi = 0.0 if self.corrector is None else float(self.corrector.dpsi(u[0]))
        g_local = np.array([self.theta * dpsi, self.theta / u[1]])
        return M.T @ g_local

    def hess(self, x):
        u, M = self._local(x)
        d2psi = 0.0 if self.corrector is None else float(self.corrector.d2psi(u[0]))
        H_local = np.array(
            [[self.theta * d2psi, 0.0], [0.0, -self.theta / u[1] ** 2]]
        )
        return M.T @ H_local @ M


def corner_lyapunov(k, alpha, beta):
    return CornerLyapunov(k=k % 4, alpha=float(alpha), beta=float(beta))


def edge_lyapunov(k, theta, corrector=None):
    return EdgeLyapunov(k=k % 4, theta=float(theta), corrector=corrector)


@dataclass
class BandReport:
    """Result of sampling the generator over a boundary band."""

    target: float
    halfwidth: float
    r_tested: float
    max_deviation: float
    passed: bool
    r_star: float = None  # largest band radius found to pass, if searched


def _corner_band_points(k, r, n, rng, floor=1e-6):
    # log-uniform in both vertex coordinates, depths from r down to floor*r
    lo, hi = np.log(floor * r), np.log(r)
    u1 = np.exp(rng.uniform(lo, hi, size=n))
    u2 = np.exp(rng.uniform(lo, hi, size=n))
    return np.stack([u1, u2], axis=1), k


def _edge_band_points(k, r, n, rng, floor=1e-6, margin=None):
    # along the edge staying away from the corners, log-uniform in depth
    margin = r if margin is None else margin
    lo, hi = np.log(floor * r), np.log(r)
    u1 = rng.uniform(margin, 1.0 - margin, size=n)
    u2 = np.exp(rng.uniform(lo, hi, size=n))
    return np.stack([u1, u2], axis=1), k


def _eval_band(model, lyap, points_local, k):
    devs = np.empty(len(points_local))
    for i, u in enumerate(points_local):
        x = from_vertex_coords(u, k)
        devs[i] = generator_apply(model, lyap, x)
    return devs


def verify_generator_band(
    model,
    lyap,
    region,
    target,
    halfwidth,
    samples=400,
    r=0.1,
    seed=0,
    search=True,
):
    """Check |L Phi - target| <= halfwidth on a boundary band of radius r.

    ``region`` is ("corner", k) or ("edge", k).  When ``search`` is on,
    also bisect for the largest radius at which the band condition holds
    on the sample (a report, not a guarantee).
    """
    kind, k = region
    rng = np.random.default_rng(seed)

    def max_dev(radius):
        if kind == "corner":
            pts, kk = _corner_band_points(k, radius, samples, rng)
        else:
            pts, kk = _edge_band_points(k, radius, samples, rng)
        vals = _eval_band(model, lyap, pts, kk)
        return float(np.max(np.abs(vals - target)))

    dev = max_dev(r)
    passed = dev <= halfwidth
    r_star = None
    if search:
        lo, hi = 0.0, None
        radius = r
        if passed:
            lo = r
            # grow until failure or the geometric cap
            while radius < 0.45:
                radius = min(2 * radius, 0.45)
                if max_dev(radius) <= halfwidth:
                    lo = radius
                else:
                    hi = radius
                    break
        else:
            hi = r
            while radius > 1e-6:
                radius /= 2
                if max_dev(radius) <= halfwidth:
                    lo = radius
                    break
        if hi is not None and lo > 0:
            for _ in range(20):
                mid = 0.5 * (lo + hi)
                if max_dev(mid) <= halfwidth:
                    lo = mid
                else:
                    hi = mid
        r_star = lo if lo > 0 else 0.0
    return BandReport(
        target=float(target),
        halfwidth=float(halfwidth),
        r_tested=float(r),
        max_deviation=dev,
        passed=passed,
        r_star=r_star,
    )
