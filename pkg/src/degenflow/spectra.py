"""Vertex linearization, saddle-cycle detection, and bracket spans.

Vertex k is analyzed in its own chart, in which the vertex sits at the
origin with the first coordinate running along edge k and the second
along edge k-1.  Tangency makes the drift Jacobian triangular at a
vertex, so the chart rates are its diagonal entries.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonHyperbolic, NonHyperbolicCycle

HYPERBOLICITY_TOL = 1e-9


@dataclass
class VertexSpectrum:
    """Chart-frame linearization rates at a vertex.

    ``lam1`` is the rate along edge k, ``lam2`` along edge k-1.
    ``orientation`` is +1 for a saddle whose unstable direction runs
    along edge k, -1 when it runs along edge k-1, 0 for non-saddles.
    """

    k: int
    lam1: float
    lam2: float

    @property
    def kind(self):
        if self.lam1 < 0 and self.lam2 < 0:
            return "sink"
        if self.lam1 > 0 and self.lam2 > 0:
            return "source"
        return "saddle"

    @property
    def attracting(self):
        return self.kind == "sink"

    @property
    def orientation(self):
        if self.kind != "saddle":
            return 0
        return 1 if self.lam1 > 0 else -1

    @property
    def lam_plus(self):
        return max(self.lam1, self.lam2)

    @property
    def lam_minus(self):
        return min(self.lam1, self.lam2)

    @property
    def rho(self):
        """Contraction ratio |lam-| / lam+ of a saddle."""
        if self.kind != "saddle":
            raise ValueError("rho is defined for saddles only")
        return abs(self.lam_minus) / self.lam_plus


def linearize_vertex(model, k, tol=HYPERBOLICITY_TOL):
    """Spectrum of the drift linearization at vertex k."""
    J = model.rotated(k).drift_jac(np.zeros(2))
    lam1, lam2 = float(J[0, 0]), float(J[1, 1])
    if min(abs(lam1), abs(lam2)) < tol:
        raise NonHyperbolic(f"vertex {k} has a rate below {tol}")
    return VertexSpectrum(k % 4, lam1, lam2)


def vertex_spectra(model, tol=HYPERBOLICITY_TOL):
    return [linearize_vertex(model, k, tol) for k in range(4)]


@dataclass
class CycleInfo:
    """Result of saddle-cycle detection.

    ``strength`` is the product of the four contraction ratios; the
    cycle attracts when it exceeds one.
    """

    is_cycle: bool
    orientation: int = 0
    rhos: tuple = ()
    lam_plus: tuple = ()
    strength: float = np.nan
    stable: bool = False


def detect_stochastic_cycle(model_or_spectra, tol=1e-9):
    """Detect a consistently oriented cycle of boundary saddles."""
    if isinstance(model_or_spectra, (list, tuple)):
        spectra = list(model_or_spectra)
    else:
        spectra = vertex_spectra(model_or_spectra)
    if any(s.kind != "saddle" for s in spectra):
        return CycleInfo(is_cycle=False)
    orientations = {s.orientation for s in spectra}
    if len(orientations) != 1:
        return CycleInfo(is_cycle=False)
    orientation = orientations.pop()
    if orientation < 0:
        # relabel so that each saddle expands along its own edge
        spectra = [
            VertexSpectrum(s.k, s.lam2, s.lam1) for s in spectra
        ]
    rhos = tuple(s.rho for s in spectra)
    lam_plus = tuple(s.lam_plus for s in spectra)
    strength = float(np.prod(rhos))
    if abs(strength - 1.0) < tol:
        raise NonHyperbolicCycle("cycle strength equals one within tolerance")
    return CycleInfo(
        is_cycle=True,
        orientation=orientation,
        rhos=rhos,
        lam_plus=lam_plus,
        strength=strength,
        stable=strength > 1.0,
    )


def lie_bracket(u, v, x, h=1e-5):
    """[u, v]_i = sum_j (u_j d_j v_i - v_j d_j u_i) at x, by differences."""
    x = np.asarray(x, dtype=float)
    n = x.size
    Ju = np.zeros((n, n))
    Jv = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        Ju[:, j] = (np.asarray(u(x + e)) - np.asarray(u(x - e))) / (2 * h)
        Jv[:, j] = (np.asarray(v(x + e)) - np.asarray(v(x - e))) / (2 * h)
    return Jv @ np.asarray(u(x)) - Ju @ np.asarray(v(x))


def hormander_span(model, x, max_depth=4, tol=1e-8):
    """Check whether iterated brackets span the plane at x.

    Returns (spans, depth) where depth is the bracket level at which
    the span was reached (0 means the noise fields alone suffice).
    """
    x = np.asarray(x, dtype=float)
    drift = lambda p: model.drift(p)
    noise = [
        (lambda p, m=m: model.sigma(p)[m]) for m in range(2)
    ]
    fields = list(noise)

    def spans(col):
        best = 0.0
        for a in range(len(col)):
            for b in range(a + 1, len(col)):
                va, vb = col[a](x), col[b](x)
                na, nb = np.linalg.norm(va), np.linalg.norm(vb)
                if na * nb == 0:
                    continue
                d = abs(va[0] * vb[1] - va[1] * vb[0]) / (na * nb)
                best = max(best, d)
        return best > tol

    if spans(fields):
        return True, 0
    gens = [drift] + noise
    frontier = list(fields)
    for depth in range(1, max_depth + 1):
        new = []
        for f in frontier:
            for g in gens:
                new.append(lambda p, f=f, g=g: lie_bracket(g, f, p))
        fields = fields + new
        if spans(fields):
            return True, depth
        frontier = new
    return False, max_depth
