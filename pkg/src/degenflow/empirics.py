"""Trajectory statistics: occupation measures, trapping, cycling.

Everything here consumes recorded paths (positions plus chart depths)
and produces finite-horizon surrogates for the asymptotic statements:
convergence probabilities from trap occupancy, cycling epochs from
boundary-segment crossings, and distances of vertex-mass vectors to the
predicted limit quadrilateral.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .chart import rotate_y
from .errors import ScenarioMismatch
from .sde import _modes_from_x


@dataclass
class EmpiricalMeasure:
    """Time-weighted occupation histogram over the unit square/interval."""

    edges: tuple  # bin edge arrays, one per dimension
    weights: np.ndarray
    horizon: float
    corner_mass: np.ndarray = None  # mass of each vertex box, radius r0
    edge_mass: np.ndarray = None
    r0: float = None

    @property
    def dim(self):
        return len(self.edges)

    def vertex_vector(self):
        """Corner masses renormalized to a probability 4-vector."""
        total = float(np.sum(self.corner_mass))
        if total <= 0:
            return np.full(4, 0.25), 0.0
        return self.corner_mass / total, total


def _time_weights(times):
    # trapezoidal: each sample carries half of its adjacent intervals
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _corner_edge_masses(states, w, r0):
    x1, x2 = states[:, 0], states[:, 1]
    corner = np.zeros(4)
    edge = np.zeros(4)
    total = np.sum(w)
    for k in range(4):
        v = _VERTS[k]
        u1 = np.abs(x1 - v[0])
        u2 = np.abs(x2 - v[1])
        corner[k] = np.sum(w[(u1 < r0) & (u2 < r0)]) / total
    # edge k runs from vertex k to vertex k+1
    strips = [
        (x2 < r0) & (x1 >= r0) & (x1 <= 1 - r0),
        (x1 > 1 - r0) & (x2 >= r0) & (x2 <= 1 - r0),
        (x2 > 1 - r0) & (x1 >= r0) & (x1 <= 1 - r0),
        (x1 < r0) & (x2 >= r0) & (x2 <= 1 - r0),
    ]
    for k in range(4):
        edge[k] = np.sum(w[strips[k]]) / total
    return corner, edge


def empirical_measure(times, states, bins=50, r0=0.05):
    """Occupation measure of a recorded path, trapezoidal in time.

    ``states`` is (n,) for interval paths or (n, 2) for square paths.
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if times.size < 2:
        raise ValueError("need at least two samples")
    w = _time_weights(times)
    horizon = float(times[-1] - times[0])
    if states.ndim == 1:
        e = np.linspace(0.0, 1.0, bins + 1)
        hist, _ = np.histogram(np.clip(states, 0, 1), bins=e, weights=w)
        return EmpiricalMeasure((e,), hist / np.sum(w), horizon)
    e1 = np.linspace(0.0, 1.0, bins + 1)
    hist, _, _ = np.histogram2d(
        np.clip(states[:, 0], 0, 1), np.clip(states[:, 1], 0, 1), bins=(e1, e1), weights=w
    )
    cm, em = _corner_edge_masses(states, w, r0)
    return EmpiricalMeasure(
        (e1, e1), hist / np.sum(w), horizon, corner_mass=cm, edge_mass=em, r0=r0
    )


@dataclass
class ConvergenceEstimate:
    """Per-attractor trap frequencies with binomial errors."""

    probabilities: dict  # label -> p_hat
    std_errors: dict
    n_runs: int
    unresolved: int
    horizon: float
    trap_radius: float

    @property
    def unresolved_fraction(self):
        return self.unresolved / self.n_runs


def _trap_label(y_window, attractors, ln_trap):
    """Label if one attractor's trap holds at every sample of the window."""
    for a in attractors:
        k = a.k
        u, v = rotate_y(y_window[:, 0], y_window[:, 1], k)
        if a.kind == "vertex":
            held = np.all((u < ln_trap) & (v < ln_trap))
        else:
            held = np.all((v < ln_trap) & (u > ln_trap) & (u < -ln_trap))
        if held:
            return f"{a.kind}_{k}"
    return None


def estimate_convergence(
    model,
    x0,
    attractors,
    n_runs,
    horizon,
    dt,
    trap_radius=1e-3,
    seed=0,
    record_every=None,
):
    """Monte-Carlo convergence frequencies toward each attractor.

    A run counts for an attractor when its trap region (vertex box or
    edge strip at chart depth below ln(trap_radius)) holds continuously
    over the final tenth of the horizon; anything else is unresolved.
    """
    if not attractors:
        raise ScenarioMismatch("no attractors to converge to")
    n_steps = int(round(horizon / dt))
    if record_every is None:
        record_every = max(1, n_steps // 2000)
    ln_trap = np.log(trap_radius)
    labels = [f"{a.kind}_{a.k}" for a in attractors]
    counts = dict.fromkeys(labels, 0)
    unresolved = 0
    if model.dim == 1:
        P, DP, Q, DQ = kernels.pack1d(model)
        for i in range(n_runs):
            _, y, _ = kernels.sim1d(
                P, DP, Q, DQ, float(x0), dt, n_steps, record_every,
                kernels.path_seed(seed, i), 1.0, kernels._CUBIC,
            )
            tail = y[int(0.9 * len(y)):]
            label = None
            for a in attractors:
                held = np.all(tail < ln_trap) if a.k == 0 else np.all(tail > -ln_trap)
                if held:
                    label = f"{a.kind}_{a.k}"
                    break
            if label is None:
                unresolved += 1
            else:
                counts[label] += 1
    else:
        C, CD = kernels.pack2d(model)
        v0, mode0 = _pack_start(x0)
        for i in range(n_runs):
            _, y, _, _ = kernels.sim2d(
                C, CD, v0, mode0, dt, n_steps, record_every,
                kernels.path_seed(seed, i), 1.0, kernels._CUBIC,
            )
            tail = y[int(0.9 * len(y)):]
            label = _trap_label(tail, attractors, ln_trap)
            if label is None:
                unresolved += 1
            else:
                counts[label] += 1
    probs = {k: v / n_runs for k, v in counts.items()}
    ses = {
        k: float(np.sqrt(max(p * (1 - p), 1.0 / n_runs) / n_runs))
        for k, p in probs.items()
    }
    return ConvergenceEstimate(
        probabilities=probs,
        std_errors=ses,
        n_runs=n_runs,
        unresolved=unresolved,
        horizon=float(horizon),
        trap_radius=float(trap_radius),
    )


def _pack_start(x0):
    x0 = np.asarray(x0, dtype=float)
    modes = _modes_from_x(x0)
    v0 = np.empty(2)
    for i in range(2):
        if modes[i] == 0:
            v0[i] = np.log(x0[i])
        elif modes[i] == 2:
            v0[i] = -np.log(1.0 - x0[i])
        else:
            v0[i] = x0[i]
    return v0, np.array(modes, dtype=np.int64)


@dataclass
class CyclingRecord:
    """Entry times into the boundary segments near each vertex."""

    times: np.ndarray  # eta_n
    labels: np.ndarray  # K_n
    depths: np.ndarray  # chart depth of the other coordinate at eta_n
    r: float
    r_prime: float

    def __len__(self):
        return len(self.times)


def detect_cycling(times, ys, r, r_prime=None):
    """Crossing times of the segments {x1^k = r, x2^k < r}.

    ``ys`` are global chart coordinates of a square path.  A crossing
    counts when the vertex-k abscissa passes its threshold inward while
    the ordinate is already deep, and k differs from the previous label.
    """
    times = np.asarray(times, dtype=float)
    ln_r = np.log(r)
    etas, labels, depths = [], [], []
    prev_label = -1
    u = np.empty((4, len(times)))
    v = np.empty((4, len(times)))
    for k in range(4):
        u[k], v[k] = rotate_y(ys[:, 0], ys[:, 1], k)
    for n in range(1, len(times)):
        for k in range(4):
            if k == prev_label:
                continue
            # either abscissa may play the crossing role depending on
            # the cycle orientation; the other one carries the depth
            if u[k, n - 1] > ln_r >= u[k, n] and v[k, n] < ln_r:
                depth = v[k, n]
            elif v[k, n - 1] > ln_r >= v[k, n] and u[k, n] < ln_r:
                depth = u[k, n]
            else:
                continue
            etas.append(times[n])
            labels.append(k)
            depths.append(depth)
            prev_label = k
            break
    return CyclingRecord(
        times=np.asarray(etas),
        labels=np.asarray(labels, dtype=int),
        depths=np.asarray(depths),
        r=float(r),
        r_prime=float(r_prime) if r_prime is not None else float(r) ** 2,
    )


def corner_occupation(times, states, r0=0.05):
    """Running fraction of time spent in the union of vertex boxes."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    x1, x2 = states[:, 0], states[:, 1]
    inside = np.zeros(len(times), dtype=bool)
    for k in range(4):
        v = _VERTS[k]
        inside |= (np.abs(x1 - v[0]) < r0) & (np.abs(x2 - v[1]) < r0)
    dt = np.diff(times)
    seg = 0.5 * (inside[:-1].astype(float) + inside[1:].astype(float)) * dt
    cum = np.cumsum(seg)
    elapsed = np.cumsum(dt)
    return times[1:], cum / elapsed


def _l1_point_segment(p, a, b):
    """Exact l1 distance from p to the segment [a, b]."""
    d = b - a
    r = p - a
    ts = [0.0, 1.0]
    for i in range(len(d)):
        if d[i] != 0.0:
            t = r[i] / d[i]
            if 0.0 < t < 1.0:
                ts.append(t)
    best = np.inf
    for t in ts:
        best = min(best, float(np.sum(np.abs(r - t * d))))
    return best


def gamma_distance(vertex_vectors, quad):
    """l1 distance of each vertex-mass vector to the limit quadrilateral."""
    if quad is None:
        raise ScenarioMismatch("no limit quadrilateral available")
    segs = quad.segments()
    out = np.empty(len(vertex_vectors))
    for n, p in enumerate(vertex_vectors):
        p = np.asarray(p, dtype=float)
        out[n] = min(_l1_point_segment(p, a, b) for a, b in segs)
    return out


_LIPSCHITZ_DICT_1D = [
    lambda x: x,
    lambda x: np.abs(x - 0.5),
    lambda x: np.minimum(x, 1 - x),
    lambda x: np.sin(2 * np.pi * x) / (2 * np.pi),
    lambda x: np.cos(2 * np.pi * x) / (2 * np.pi),
]

_LIPSCHITZ_DICT_2D = [
    lambda x: x[..., 0],
    lambda x: x[..., 1],
    lambda x: np.abs(x[..., 0] - x[..., 1]) / 2,
    lambda x: np.minimum.reduce([x[..., 0], 1 - x[..., 0], x[..., 1], 1 - x[..., 1]]),
    lambda x: np.sin(2 * np.pi * x[..., 0]) / (2 * np.pi),
    lambda x: np.cos(2 * np.pi * x[..., 1]) / (2 * np.pi),
]


def invariance_defect(measure, model, s, n_sub=400, dt=1e-3, seed=0):
    """Bounded-Lipschitz defect between a measure and its propagation.

    Bin centers are subsampled by weight, pushed forward s time units,
    and compared against the original through a fixed dictionary of
    1-Lipschitz observables.  Diagnostic only.
    """
    rng = np.random.default_rng(seed)
    n_steps = max(1, int(round(s / dt)))
    if measure.dim == 1:
        e = measure.edges[0]
        centers = 0.5 * (e[:-1] + e[1:])
        probs = measure.weights / np.sum(measure.weights)
        idx = rng.choice(len(centers), size=n_sub, p=probs)
        x0s = np.clip(centers[idx] + rng.uniform(-0.5, 0.5, n_sub) * (e[1] - e[0]), 1e-9, 1 - 1e-9)
        P, DP, Q, DQ = kernels.pack1d(model)
        ends = np.empty(n_sub)
        for i, x0 in enumerate(x0s):
            x, _, _ = kernels.sim1d(
                P, DP, Q, DQ, float(x0), dt, n_steps, n_steps,
                kernels.path_seed(seed, i), 1.0, kernels._CUBIC,
            )
            ends[i] = x[-1]
        fdict = _LIPSCHITZ_DICT_1D
        before = [float(np.mean(f(x0s))) for f in fdict]
        after = [float(np.mean(f(ends))) for f in fdict]
    else:
        e1, e2 = measure.edges
        c1 = 0.5 * (e1[:-1] + e1[1:])
        c2 = 0.5 * (e2[:-1] + e2[1:])
        flat = measure.weights.ravel()
        probs = flat / np.sum(flat)
        idx = rng.choice(len(flat), size=n_sub, p=probs)
        i1, i2 = np.unravel_index(idx, measure.weights.shape)
        jit = rng.uniform(-0.5, 0.5, (n_sub, 2))
        x0s = np.stack(
            [
                np.clip(c1[i1] + jit[:, 0] * (e1[1] - e1[0]), 1e-9, 1 - 1e-9),
                np.clip(c2[i2] + jit[:, 1] * (e2[1] - e2[0]), 1e-9, 1 - 1e-9),
            ],
            axis=1,
        )
        C, CD = kernels.pack2d(model)
        ends = np.empty((n_sub, 2))
        for i in range(n_sub):
            v0, mode0 = _pack_start(x0s[i])
            x, _, _, _ = kernels.sim2d(
                C, CD, v0, mode0, dt, n_steps, n_steps,
                kernels.path_seed(seed, i), 1.0, kernels._CUBIC,
            )
            ends[i] = x[-1]
        fdict = _LIPSCHITZ_DICT_2D
        before = [float(np.mean(f(x0s))) for f in fdict]
        after = [float(np.mean(f(ends))) for f in fdict]
    return float(np.max(np.abs(np.array(after) - np.array(before))))
