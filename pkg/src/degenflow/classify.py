"""Boundary classification: attractors, cycles, interior recurrence.

The long-run behaviour on the square is one of exactly three cases:
mass converges to an attracting vertex or edge, trajectories cycle ever
closer to a stable heteroclinic loop of boundary saddles, or there is a
unique interior invariant density.  This module decides the case from
vertex and edge spectra, selects the Lyapunov parameters used by the
hitting-time machinery, and, for stable cycles, predicts the limit set
of empirical measures.
"""

from dataclasses import dataclass, field

import numpy as np

from . import poly
from .edge import edge_spectra, stationary_density_1d
from .errors import Infeasible, NonHyperbolicEdge, ScenarioMismatch
from .model import Model1D, Model2D
from .spectra import VertexSpectrum, detect_stochastic_cycle, vertex_spectra

MIN_SLACK = 1e-3
GREEDY_SLACK = 1.5


@dataclass
class Attractor:
    """A member of the attracting set with the evidence that put it there."""

    kind: str  # "vertex" or "edge"
    k: int
    evidence: dict


@dataclass
class Scenario:
    """One of the three mutually exclusive long-run cases."""

    case: str  # "I", "II", or "III"
    attractors: list
    cycle: object = None
    quad: object = None
    vertex_spectra: list = field(default_factory=list)
    edge_spectra: list = field(default_factory=list)

    def summary(self):
        out = {
            "case": self.case,
            "attractors": [
                {"kind": a.kind, "k": a.k, **{k: v for k, v in a.evidence.items()}}
                for a in self.attractors
            ],
            "vertices": [
                {"k": s.k, "lam1": s.lam1, "lam2": s.lam2, "kind": s.kind}
                for s in self.vertex_spectra
            ],
            "edges": [
                {
                    "k": s.k,
                    "rate_start": s.rate_start,
                    "rate_end": s.rate_end,
                    "in_S": s.in_S,
                    "lambda_bar": None if np.isnan(s.lambda_bar) else s.lambda_bar,
                }
                for s in self.edge_spectra
            ],
        }
        if self.cycle is not None and self.cycle.is_cycle:
            out["cycle"] = {
                "rhos": list(self.cycle.rhos),
                "strength": self.cycle.strength,
                "stable": self.cycle.stable,
            }
        return out


def attracting_set(model, vspec=None, espec=None):
    """Vertices with two negative rates; edges with negative mean rate."""
    vspec = vertex_spectra(model) if vspec is None else vspec
    espec = edge_spectra(model) if espec is None else espec
    out = []
    for s in vspec:
        if s.kind == "sink":
            out.append(
                Attractor("vertex", s.k, {"lam1": s.lam1, "lam2": s.lam2})
            )
    for e in espec:
        if e.in_S and e.lambda_bar < 0:
            out.append(
                Attractor(
                    "edge",
                    e.k,
                    {"lambda_bar": e.lambda_bar, "lambda_bar_err": e.lambda_bar_err},
                )
            )
    return out


def classify(model):
    """Decide the trichotomy case for a 2-d model."""
    vspec = vertex_spectra(model)
    espec = edge_spectra(model)
    attractors = attracting_set(model, vspec, espec)
    cycle = detect_stochastic_cycle(vspec)
    if attractors:
        return Scenario(
            "I", attractors, cycle=cycle, vertex_spectra=vspec, edge_spectra=espec
        )
    if cycle.is_cycle and cycle.stable:
        quad = limit_quadrilateral(cycle)
        return Scenario(
            "II", [], cycle=cycle, quad=quad, vertex_spectra=vspec, edge_spectra=espec
        )
    return Scenario(
        "III", [], cycle=cycle, vertex_spectra=vspec, edge_spectra=espec
    )


@dataclass
class Scenario1D:
    case: str  # "sinks" or "interior"
    sinks: list
    rates: tuple
    density: object = None

    @property
    def attractors(self):
        return [Attractor("endpoint", e, {"rate": self.rates[e]}) for e in self.sinks]

    def summary(self):
        return {
            "case": self.case,
            "sinks": list(self.sinks),
            "rates": list(self.rates),
            "has_interior_density": self.density is not None,
        }


def classify_1d(model):
    """Endpoint sign analysis for the interval model."""
    lam0, lam1 = model.endpoint_rates()
    if lam0 == 0 or lam1 == 0:
        raise NonHyperbolicEdge("endpoint rate vanishes")
    sinks = [e for e, lam in ((0, lam0), (1, lam1)) if lam < 0]
    if sinks:
        return Scenario1D("sinks", sinks, (float(lam0), float(lam1)))
    dens = stationary_density_1d(model)
    return Scenario1D("interior", [], (float(lam0), float(lam1)), density=dens)


@dataclass
class BetaAssignment:
    """Per-vertex Lyapunov weights with their feasibility certificate.

    ``beta[k]`` weighs -ln of the coordinate along edge k; alpha_k =
    beta_{k-1} and gamma_k = beta_k fall out of the gluing convention.
    """

    beta: np.ndarray
    beta_tilde: np.ndarray
    scale: float
    slack: dict

    def alpha(self, k):
        return float(self.beta[(k - 1) % 4])

    def gamma(self, k):
        return float(self.beta[k % 4])


def _greedy_chain(by_k, required_ks):
    """Sequential positive-weight selection, trying each chain start.

    From the start vertex each next weight is the smallest positive
    value clearing its inequality with headroom; a start whose own
    constraint survives the trip around the loop wins.
    """
    last_err = None
    for start in range(4):
        bt = np.full(4, np.nan)
        bt[start] = 1.0
        ok = True
        for step in range(1, 4):
            k = (start + step) % 4
            prev = bt[(k - 1) % 4]
            s = by_k.get(k)
            if s is None or k not in required_ks:
                bt[k] = prev
                continue
            if s.lam2 > 0:
                floor = -prev * s.lam1 / s.lam2
                bt[k] = GREEDY_SLACK * floor if floor > 0 else prev
            elif s.lam1 > 0:
                # need bt[k] strictly below the cap prev*lam1/(-lam2)
                bt[k] = prev * s.lam1 / (-s.lam2) / GREEDY_SLACK
            else:
                ok = False
                last_err = f"vertex {k} admits no positive combination"
                break
        if not ok:
            continue
        good = all(
            bt[(k - 1) % 4] * by_k[k].lam1 + bt[k] * by_k[k].lam2 > 0
            for k in required_ks
            if k in by_k
        )
        if good:
            return bt
        last_err = f"chain starting at {start} fails the wraparound"
    raise Infeasible(last_err or "no feasible chain")


def _required_vertices(vspec, attractors):
    in_A = {a.k for a in attractors if a.kind == "vertex"}
    return [s for s in vspec if s.k not in in_A]


def choose_betas(vspec, espec=None, attractors=None, eps=0.1, min_combo=2.0):
    """Select positive weights making every local decay inequality strict.

    Non-attracting vertex k needs beta_{k-1} lam1^k + beta_k lam2^k > 0;
    edges with positive mean transversal rate need gamma_k > 0 which
    holds automatically.  A global scale then pushes every required
    combination above ``min_combo``.
    """
    attractors = attractors or []
    required = _required_vertices(vspec, attractors)
    by_k = {s.k: s for s in vspec}
    cycle = None
    if len(required) == 4 and all(s.kind == "saddle" for s in vspec):
        try:
            cycle = detect_stochastic_cycle(vspec)
        except Exception:
            cycle = None
    bt = np.ones(4)
    if cycle is not None and cycle.is_cycle:
        if cycle.strength >= 1.0:
            raise Infeasible("no positive weights exist around a stable cycle")
        rhos = np.array(cycle.rhos)
        # pad each ratio by a margin, bisected down until the padded
        # product around the loop still stays below one
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (hi + lo)
            if np.prod(rhos + mid) < 1.0:
                lo = mid
            else:
                hi = mid
        margin = min(eps, 0.5 * lo) if lo > 0 else 0.0
        if margin <= 0:
            raise Infeasible("cycle too close to neutral for a margin")
        for k in range(1, 4):
            s = by_k[k]
            # constraint bt_{k-1} lam1 + bt_k lam2 > 0 bounds bt_k from
            # below when lam2 > 0 and from above when lam2 < 0
            factor = rhos[k] + margin
            bt[k] = bt[k - 1] * (factor if s.lam2 > 0 else 1.0 / factor)
        if np.prod(rhos + margin) >= 1.0:
            raise Infeasible("wraparound constraint failed")
    else:
        required_ks = {v.k for v in required}
        bt = _greedy_chain(by_k, required_ks)
    combos = {}
    for s in required:
        combos[s.k] = bt[(s.k - 1) % 4] * s.lam1 + bt[s.k] * s.lam2
        if combos[s.k] <= 0:
            raise Infeasible(f"vertex {s.k} combination not positive: {combos[s.k]:.3g}")
    # scale so every required combination and edge decay clears min_combo
    needs = [min_combo / c for c in combos.values()]
    if espec is not None:
        in_A_edges = {a.k for a in (attractors or []) if a.kind == "edge"}
        for e in espec:
            if e.in_S and e.k not in in_A_edges and e.lambda_bar > 0:
                needs.append(min_combo / (bt[e.k] * e.lambda_bar))
    M = max(needs) * GREEDY_SLACK if needs else 1.0
    beta = M * bt
    slack = {f"vertex_{k}": M * c - min_combo for k, c in combos.items()}
    if espec is not None:
        for e in espec:
            if e.in_S and e.k not in {a.k for a in (attractors or []) if a.kind == "edge"} and e.lambda_bar > 0:
                slack[f"edge_{e.k}"] = M * bt[e.k] * e.lambda_bar - min_combo
    if slack and min(slack.values()) < MIN_SLACK:
        raise Infeasible(f"slack below minimum: {min(slack.values()):.3g}")
    return BetaAssignment(beta=beta, beta_tilde=bt, scale=float(M), slack=slack)


@dataclass
class LimitQuadrilateral:
    """Vertex-mixture measures visited cyclically by empirical measures.

    ``f[k, j]`` are the unnormalized passage weights; ``mu[k]`` the
    probability vectors over the four vertices; the limit set is the
    union of the segments [mu[k], mu[k+1]].
    """

    f: np.ndarray  # shape (4, 4), f[k, j]
    mu: np.ndarray  # shape (4, 4), rows sum to 1
    rhos: tuple
    lam_plus: tuple
    strength: float

    def segments(self):
        return [(self.mu[k], self.mu[(k + 1) % 4]) for k in range(4)]


def limit_quadrilateral(cycle):
    """Weights f_{k,j} = (prod_{l=k-3}^{j} rho^l) / lam_+^j, normalized."""
    if not (cycle.is_cycle and cycle.stable):
        raise ScenarioMismatch("limit quadrilateral needs a stable cycle")
    rhos, lam_plus = cycle.rhos, cycle.lam_plus
    f = np.zeros((4, 4))
    for k in range(4):
        for step in range(4):
            j = (k - 3 + step) % 4
            prod = 1.0
            for off in range(step + 1):
                prod *= rhos[(k - 3 + off) % 4]
            f[k, j] = prod / lam_plus[j]
    mu = f / f.sum(axis=1, keepdims=True)
    return LimitQuadrilateral(
        f=f,
        mu=mu,
        rhos=tuple(rhos),
        lam_plus=tuple(lam_plus),
        strength=cycle.strength,
    )


def random_hyperbolic_model(rng, degree=2, scale=2.0, max_tries=200):
    """Random factored polynomial model passing all hyperbolicity checks.

    Quartic-at-most fields with tangency by construction; rejection
    sampled until vertex rates, edge memberships, and cycle strength all
    clear their tolerances.
    """
    for _ in range(max_tries):
        shape = (degree + 1, degree + 1)
        p1 = rng.uniform(-scale, scale, size=shape)
        p2 = rng.uniform(-scale, scale, size=shape)
        q = rng.uniform(-0.8, 0.8, size=(2, 2) + shape)
        model = Model2D(p1, p2, [[q[0, 0], q[0, 1]], [q[1, 0], q[1, 1]]])
        try:
            vspec = vertex_spectra(model, tol=5e-2)
            cyc = detect_stochastic_cycle(vspec, tol=5e-2)
        except Exception:
            continue
        rates = [abs(s.lam1) for s in vspec] + [abs(s.lam2) for s in vspec]
        if min(rates) < 5e-2:
            continue
        return model
    raise RuntimeError("no hyperbolic model found")


def random_saddle_spectra(rng, stable=False):
    """Random consistently oriented saddle spectra (a cycle skeleton)."""
    while True:
        lam1 = rng.uniform(0.2, 3.0, size=4)
        lam2 = -rng.uniform(0.2, 3.0, size=4)
        rhos = np.abs(lam2) / lam1
        strength = float(np.prod(rhos))
        if abs(strength - 1.0) < 1e-2:
            continue
        if stable != (strength > 1.0):
            continue
        return [VertexSpectrum(k, float(lam1[k]), float(lam2[k])) for k in range(4)]
