"""Vertex spectra, cycle detection, trichotomy, and weight selection."""

import numpy as np
import pytest

from degenflow import Model1D, Model2D, choose_betas, classify_1d, classify_scenario
from degenflow.classify import (
    limit_quadrilateral,
    random_hyperbolic_model,
    random_saddle_spectra,
)
from degenflow.errors import (
    Infeasible,
    NonHyperbolic,
    NonHyperbolicEdge,
    QuadratureFailure,
)
from degenflow.spectra import (
    VertexSpectrum,
    detect_stochastic_cycle,
    hormander_span,
    vertex_spectra,
)


def test_case_study_vertex_kinds(case_study):
    vs = vertex_spectra(case_study["model"])
    kinds = [s.kind for s in vs]
    assert kinds == ["sink", "saddle", "source", "saddle"]


def test_zero_vertex_rate_is_rejected():
    p1 = np.array([[0.0, 1.0]])
    p2 = np.array([[1.0], [1.0]])
    q = [[np.array([[0.5]]), np.array([[0.0]])],
         [np.array([[0.0]]), np.array([[0.5]])]]
    with pytest.raises(NonHyperbolic):
        vertex_spectra(Model2D(p1, p2, q))


def test_cycle_detection_on_presets(stable_cycle, unstable_cycle, case_study):
    c = detect_stochastic_cycle(stable_cycle["model"])
    assert c.is_cycle and c.stable
    assert np.allclose(c.rhos, 2.0)
    assert np.allclose(c.lam_plus, 1.0)
    c = detect_stochastic_cycle(unstable_cycle["model"])
    assert c.is_cycle and not c.stable
    assert c.strength == pytest.approx(0.0625)
    assert not detect_stochastic_cycle(case_study["model"]).is_cycle


def test_cycle_strength_invariant_under_relabeling(rng):
    for _ in range(25):
        spectra = random_saddle_spectra(rng, stable=bool(rng.integers(2)))
        s0 = detect_stochastic_cycle(spectra).strength
        shifted = [
            VertexSpectrum((s.k + 1) % 4, s.lam1, s.lam2) for s in spectra
        ]
        shifted.sort(key=lambda s: s.k)
        assert detect_stochastic_cycle(shifted).strength == pytest.approx(s0)


def test_reversing_orientation_inverts_cycle_strength(rng):
    for _ in range(25):
        spectra = random_saddle_spectra(rng, stable=True)
        s0 = detect_stochastic_cycle(spectra).strength
        # traversing the cycle backwards: each vertex's expanding rate
        # is the former contraction rate and vice versa, so every
        # contraction ratio inverts
        rev = [VertexSpectrum(s.k, -s.lam2, -s.lam1) for s in spectra]
        assert detect_stochastic_cycle(rev).strength == pytest.approx(1.0 / s0)


def test_classification_trichotomy_on_presets(
    case_study, stable_cycle, unstable_cycle, acyclic
):
    assert classify_scenario(case_study["model"]).case == "I"
    assert classify_scenario(stable_cycle["model"]).case == "II"
    assert classify_scenario(unstable_cycle["model"]).case == "III"
    assert classify_scenario(acyclic["model"]).case == "III"


def test_case_study_attracting_set(case_study):
    s = classify_scenario(case_study["model"])
    got = {(a.kind, a.k) for a in s.attractors}
    assert got == {("vertex", 0), ("edge", 1)}


def test_trichotomy_is_exclusive_and_exhaustive_randomized():
    rng = np.random.default_rng(11)
    cases = {"I": 0, "II": 0, "III": 0}
    for _ in range(120):
        model = random_hyperbolic_model(rng)
        try:
            s = classify_scenario(model)
        except (NonHyperbolicEdge, QuadratureFailure):
            continue  # edge rate within its error bar, or a numerically
            # hostile random density; either is a legitimate rejection
        assert s.case in cases
        cases[s.case] += 1
        # structural consistency of the verdict
        if s.case == "I":
            assert s.attractors
        else:
            assert not s.attractors
        if s.case == "II":
            assert s.quad is not None
            assert s.cycle.is_cycle and s.cycle.stable
    assert sum(cases.values()) >= 90


def test_classification_invariant_under_drift_scaling(case_study):
    model = case_study["model"]
    scaled = Model2D(3.0 * model.p[0], 3.0 * model.p[1], model.q)
    assert classify_scenario(scaled).case == classify_scenario(model).case


def test_classify_1d_cases(double_sink, double_source):
    s = classify_1d(double_sink["model"])
    assert s.case == "sinks" and s.sinks == [0, 1]
    s = classify_1d(double_source["model"])
    assert s.case == "interior" and s.density is not None


def test_classify_1d_rejects_zero_endpoint_rate():
    with pytest.raises(NonHyperbolicEdge):
        classify_1d(Model1D([0.0, 1.0], [[0.5]]))


def test_beta_weights_satisfy_strict_inequalities_on_presets(
    case_study, unstable_cycle, acyclic
):
    for preset in (case_study, unstable_cycle, acyclic):
        model = preset["model"]
        s = classify_scenario(model)
        ba = choose_betas(s.vertex_spectra, espec=s.edge_spectra,
                          attractors=s.attractors)
        assert np.all(ba.beta > 0)
        assert min(ba.slack.values()) >= 1e-3
        in_A = {a.k for a in s.attractors if a.kind == "vertex"}
        for vs in s.vertex_spectra:
            if vs.k in in_A:
                continue
            combo = ba.alpha(vs.k) * vs.lam1 + ba.gamma(vs.k) * vs.lam2
            assert combo > 1e-3


def test_beta_weights_on_randomized_unstable_cycles():
    rng = np.random.default_rng(5)
    for _ in range(100):
        spectra = random_saddle_spectra(rng, stable=False)
        cyc = detect_stochastic_cycle(spectra)
        if cyc.strength > 0.95:
            continue  # nearly neutral loops would need a tiny margin
        ba = choose_betas(spectra)
        assert np.all(ba.beta > 0)
        assert min(ba.slack.values()) >= 1e-3
        for vs in spectra:
            assert ba.alpha(vs.k) * vs.lam1 + ba.gamma(vs.k) * vs.lam2 > 0


def test_beta_weights_geometric_along_uniform_unstable_cycle(unstable_cycle):
    # contraction ratio 1/2 everywhere with a 0.1 margin: successive
    # relative weights decrease by the factor 0.6
    s = classify_scenario(unstable_cycle["model"])
    ba = choose_betas(s.vertex_spectra, espec=s.edge_spectra,
                      attractors=s.attractors)
    bt = ba.beta_tilde / ba.beta_tilde.max()
    assert np.allclose(sorted(bt, reverse=True), [1.0, 0.6, 0.36, 0.216])


def test_beta_weights_infeasible_around_stable_cycle(stable_cycle):
    s = classify_scenario(stable_cycle["model"])
    with pytest.raises(Infeasible):
        choose_betas(s.vertex_spectra, espec=s.edge_spectra,
                     attractors=s.attractors)


def test_limit_quadrilateral_weights_oracle(stable_cycle):
    # rho = 2, lam+ = 1 at every vertex: each mixture is a cyclic
    # permutation of (8, 1, 2, 4) / 15
    s = classify_scenario(stable_cycle["model"])
    quad = s.quad
    base = np.array([8.0, 1.0, 2.0, 4.0]) / 15.0
    for k in range(4):
        assert np.allclose(quad.mu[k], np.roll(base, k), atol=1e-10)


def test_limit_quadrilateral_algebra_randomized():
    rng = np.random.default_rng(23)
    for _ in range(100):
        spectra = random_saddle_spectra(rng, stable=True)
        cyc = detect_stochastic_cycle(spectra)
        quad = limit_quadrilateral(cyc)
        assert np.all(quad.f > 0)
        assert np.allclose(quad.mu.sum(axis=1), 1.0, atol=1e-12)
        # advancing the epoch index divides every weight by the next
        # contraction ratio, except the newly visited vertex which also
        # picks up the full loop product
        loop = float(np.prod(cyc.rhos))
        for k in range(4):
            kn = (k + 1) % 4
            for j in range(4):
                expect = quad.f[k, j] / cyc.rhos[kn] * (loop if j == kn else 1.0)
                assert quad.f[kn, j] == pytest.approx(expect, rel=1e-10)
        # the four mixtures are pairwise distinct
        for a in range(4):
            for b in range(a + 1, 4):
                assert np.max(np.abs(quad.mu[a] - quad.mu[b])) > 1e-10


def test_noise_fields_span_plane_in_interior(case_study):
    spans, depth = hormander_span(case_study["model"], np.array([0.3, 0.7]))
    assert spans and depth == 0
