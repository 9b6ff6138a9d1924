"""Occupation measures, trap frequencies, and cycling diagnostics."""

import numpy as np
import pytest

from degenflow import classify_scenario
from degenflow.classify import limit_quadrilateral, random_saddle_spectra
from degenflow.empirics import (
    corner_occupation,
    detect_cycling,
    empirical_measure,
    estimate_convergence,
    gamma_distance,
)
from degenflow.errors import ScenarioMismatch
from degenflow.spectra import detect_stochastic_cycle


def test_empirical_measure_is_a_probability_histogram():
    rng = np.random.default_rng(4)
    times = np.cumsum(rng.uniform(0.5, 1.5, size=400))
    states = rng.uniform(0.0, 1.0, size=(400, 2))
    mes = empirical_measure(times, states, r0=0.05)
    assert float(np.sum(mes.weights)) == pytest.approx(1.0, abs=1e-9)
    boundary = float(np.sum(mes.corner_mass) + np.sum(mes.edge_mass))
    assert 0.0 <= boundary <= 1.0 + 1e-12


def test_empirical_measure_concentrated_path_maps_to_one_corner():
    times = np.linspace(0.0, 10.0, 200)
    states = np.full((200, 2), 1e-4)
    mes = empirical_measure(times, states, r0=0.05)
    vec, mass = mes.vertex_vector()
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert vec[0] == pytest.approx(1.0, abs=1e-9)


def test_gamma_distance_zero_on_quadrilateral_vertices_and_edges():
    rng = np.random.default_rng(9)
    spectra = random_saddle_spectra(rng, stable=True)
    quad = limit_quadrilateral(detect_stochastic_cycle(spectra))
    assert np.allclose(gamma_distance(list(quad.mu), quad), 0.0, atol=1e-12)
    # midpoints of the segments also lie on the limit family
    mids = [0.5 * (a + b) for a, b in quad.segments()]
    assert np.allclose(gamma_distance(mids, quad), 0.0, atol=1e-12)


def test_gamma_distance_positive_off_family():
    rng = np.random.default_rng(10)
    spectra = random_saddle_spectra(rng, stable=True)
    quad = limit_quadrilateral(detect_stochastic_cycle(spectra))
    assert gamma_distance([np.full(4, 0.25)], quad)[0] > 0


def test_gamma_distance_invariant_under_cyclic_relabeling():
    rng = np.random.default_rng(12)
    spectra = random_saddle_spectra(rng, stable=True)
    cyc = detect_stochastic_cycle(spectra)
    quad = limit_quadrilateral(cyc)
    p = rng.dirichlet(np.ones(4))
    d0 = gamma_distance([p], quad)[0]
    # relabel vertices k -> k+1 in both the measure and the family
    from degenflow.spectra import VertexSpectrum

    shifted = [VertexSpectrum((s.k + 1) % 4, s.lam1, s.lam2) for s in spectra]
    shifted.sort(key=lambda s: s.k)
    quad_s = limit_quadrilateral(detect_stochastic_cycle(shifted))
    d1 = gamma_distance([np.roll(p, 1)], quad_s)[0]
    assert d1 == pytest.approx(d0, abs=1e-12)


def test_gamma_distance_requires_a_quadrilateral():
    with pytest.raises(ScenarioMismatch):
        gamma_distance([np.full(4, 0.25)], None)


def test_detect_cycling_on_synthetic_path():
    # continuous loop: in each vertex frame the abscissa sweeps inward
    # through the threshold at constant depth, then a straight connector
    # hands over to the next frame
    from degenflow.chart import rotate_y

    depth = np.log(1e-4)  # chart depth the loop hugs each face at
    far = -depth  # chart coordinate of a point at distance 1e-4 from 1
    legs = []
    for block in range(8):
        k = block % 4  # leg runs from near vertex k toward vertex k+1
        moving = np.linspace(depth, far, 400)
        g1, g2 = rotate_y(moving, np.full(400, depth), (-k) % 4)
        legs.append(np.column_stack([g1, g2]))
    ys = np.concatenate(legs)
    times = np.linspace(0.0, 80.0, len(ys))
    rec = detect_cycling(times, ys, r=0.05)
    assert len(rec.labels) == 8
    lab = np.asarray(rec.labels)
    assert lab[0] == 1
    assert np.all((lab[1:] - lab[:-1]) % 4 == 1)
    assert np.all(rec.depths < np.log(0.05))


def test_corner_occupation_of_deep_corner_path():
    times = np.linspace(0.0, 5.0, 100)
    states = np.full((100, 2), 1e-3)
    _, frac = corner_occupation(times, states, r0=0.05)
    assert frac[-1] == pytest.approx(1.0)


def test_estimate_convergence_splits_between_two_sinks(double_sink):
    model = double_sink["model"]
    from degenflow import classify_1d

    scen = classify_1d(model)
    est = estimate_convergence(model, 0.5, scen.attractors, n_runs=60,
                               horizon=60.0, dt=1e-3, seed=3)
    assert est.unresolved_fraction < 0.1
    p0 = est.probabilities["endpoint_0"]
    p1 = est.probabilities["endpoint_1"]
    assert p0 + p1 == pytest.approx(1.0 - est.unresolved_fraction, abs=1e-12)
    assert 0.2 < p0 < 0.8


def test_estimate_convergence_requires_attractors(double_source):
    with pytest.raises(ScenarioMismatch):
        estimate_convergence(double_source["model"], 0.5, [], n_runs=5,
                             horizon=1.0, dt=1e-3)
