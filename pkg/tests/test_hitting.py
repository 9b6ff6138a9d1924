"""Region geometry, glued Lyapunov function, and hitting certificates."""

import numpy as np
import pytest

from degenflow import (
    build_geometry,
    choose_betas,
    classical_geometry,
    classify_scenario,
    extended_lyapunov,
    solve_corrector,
    tune_parameters,
)
from degenflow.chart import CHART
from degenflow.errors import BadParameters, MissingCorrector, ScenarioMismatch
from degenflow.hitting import (
    EDGE_GLUED,
    IN_R,
    IN_SIGMA_I,
    IN_SIGMA_O,
    calibrate_shift,
    dynkin_check,
    sample_Q,
    sample_region,
)
from degenflow.lyapunov import from_vertex_coords
from degenflow.sde import generator_apply


@pytest.fixture(scope="module")
def setup(acyclic):
    model = acyclic["model"]
    scen = classify_scenario(model)
    ba = choose_betas(scen.vertex_spectra, espec=scen.edge_spectra,
                      attractors=scen.attractors)
    tuned = tune_parameters(scen, r=0.15, eps=0.2)
    geom = build_geometry(scen, tuned)
    correctors = {
        k: solve_corrector(model, k)
        for k in range(4)
        if geom.edge_class[k] == EDGE_GLUED
    }
    phi = extended_lyapunov(ba, correctors, geom)
    rng = np.random.default_rng(0)
    samp = np.vstack([
        sample_region(geom, IN_SIGMA_O, 150, rng),
        sample_Q(geom, 150, rng),
    ])
    calibrate_shift(phi, samp)
    return {"model": model, "scen": scen, "ba": ba, "tuned": tuned,
            "geom": geom, "phi": phi, "correctors": correctors}


# --- geometry ---------------------------------------------------------------

def test_geometry_rejects_bad_parameters(setup):
    scen = setup["scen"]
    good = dict(setup["tuned"])
    for key, val in (("r", 0.3), ("eps", 1.0), ("delta", 0.0)):
        bad = dict(good)
        bad[key] = val
        with pytest.raises(BadParameters):
            build_geometry(scen, bad)
    bad = dict(good)
    bad["r_prime"] = 10.0 * good["delta"] * good["eps"] ** 2 * good["r"]
    with pytest.raises(BadParameters):
        build_geometry(scen, bad)


def test_geometry_requires_boundary_repelling_case(stable_cycle, setup):
    scen = classify_scenario(stable_cycle["model"])
    with pytest.raises(ScenarioMismatch):
        build_geometry(scen, setup["tuned"])


def test_tuned_parameters_satisfy_ordering(setup):
    t = setup["tuned"]
    assert 0 < t["delta"] < 1
    assert 0 < t["r_prime"] <= t["delta"] * t["eps"] ** 2 * t["r"]
    assert t["T"] > 0 and t["K"] > 0
    # deep layers must stay representable in double precision
    assert t["r_prime"] > 1e-13


def test_membership_bits_are_consistent(setup):
    geom = setup["geom"]
    rng = np.random.default_rng(1)
    d = np.exp(rng.uniform(np.log(1e-13), np.log(0.45), size=(100_000, 2)))
    side = rng.integers(0, 2, size=(100_000, 2))
    x = np.where(side == 1, 1.0 - d, d)
    inner_without_outer = 0
    counts = {"R": 0, "outer_only": 0, "buffer": 0}
    for xi in x:
        m = geom.classify_x(xi)
        if (m & IN_SIGMA_I) and not (m & IN_SIGMA_O):
            inner_without_outer += 1
        if m & IN_R:
            counts["R"] += 1
        elif m & IN_SIGMA_O:
            counts["outer_only"] += 1
        else:
            counts["buffer"] += 1
    assert inner_without_outer == 0
    # all three cells of the partition are populated
    assert min(counts.values()) > 0


def test_sampler_respects_masks(setup):
    geom = setup["geom"]
    rng = np.random.default_rng(2)
    for pt in sample_region(geom, IN_SIGMA_O, 50, rng, require_clear=IN_R):
        m = geom.classify_x(pt)
        assert (m & IN_SIGMA_O) and not (m & IN_R)
    for pt in sample_Q(geom, 50, rng):
        m = geom.classify_x(pt)
        assert not (m & IN_R) and not (m & IN_SIGMA_O)


def test_classical_geometry_single_strip():
    # single-strip setup: the hitting target is the complement of the strip,
    # so only the sigma bits carry information here
    geom = classical_geometry(0, 0.15)
    m = geom.classify_y(0.0, np.log(1e-4))
    assert m & IN_SIGMA_O
    assert not geom.classify_y(0.0, np.log(0.3)) & IN_SIGMA_O


# --- transition switches ----------------------------------------------------

def test_switches_saturate_at_their_ends(setup):
    geom = setup["geom"]
    r, eps = geom.r, geom.eps
    assert geom.xi(0.5 * r) == pytest.approx(1.0)
    assert geom.xi(1.0 - 0.5 * r) == pytest.approx(0.0)
    assert geom.chi(0.5 * eps**2 * r) == pytest.approx(1.0)
    assert geom.chi(2.0 * eps * r) == pytest.approx(0.0)
    # monotone in between
    u = np.linspace(eps**2 * r, eps * r, 200)
    vals = np.array([float(geom.chi(ui)) for ui in u])
    assert np.all(np.diff(vals) <= 1e-12)


def test_chi_chart_slope_is_inverse_log_eps(setup):
    # the switch is a quintic ramp over one |ln eps| of chart length, so
    # its steepest chart slope is exactly 1.875 / |ln eps|
    geom = setup["geom"]
    bound = 1.875 / abs(np.log(geom.eps))
    u = np.linspace(geom.eps**2 * geom.r * 1.0001, geom.eps * geom.r * 0.9999, 2000)
    slopes = np.array([
        abs(geom.chi.deriv(ui) / CHART.dforward(np.asarray(ui))) for ui in u
    ])
    assert np.max(slopes) <= bound * (1 + 1e-6)
    assert np.max(slopes) >= bound * 0.999


# --- glued Lyapunov function -------------------------------------------------

def test_missing_corrector_is_rejected(setup):
    with pytest.raises(MissingCorrector):
        extended_lyapunov(setup["ba"], {}, setup["geom"])


def test_deep_corner_value_is_pure_log(setup):
    # inside the chi-saturated corner zone both switch weights are one
    phi, ba = setup["phi"], setup["ba"]
    b = ba.beta
    for k in range(4):
        u, v = 1.3e-4, 0.7e-4
        x = from_vertex_coords(np.array([u, v]), k)
        expect = -b[(k - 1) % 4] * np.log(u) - b[k] * np.log(v) + phi.shift
        assert phi.value(x) == pytest.approx(expect, rel=1e-12)


def test_mid_edge_value_uses_corrector_profile(setup):
    phi, ba, geom = setup["phi"], setup["ba"], setup["geom"]
    b = ba.beta
    for k in range(4):
        psi = setup["correctors"][k]
        u, v = 0.5, 1e-4
        x = from_vertex_coords(np.array([u, v]), k)
        expect = -b[k] * float(psi.psi(u)) - b[k] * np.log(v) + phi.shift
        assert phi.strip_value(x, k) == pytest.approx(expect, rel=1e-12)


def test_adjacent_strip_formulas_agree_at_corners(setup):
    # corner k is shared by strips k and k-1; within the saturated zone
    # the two formulas must glue to machine precision
    phi = setup["phi"]
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(0, 4))
        d = np.exp(rng.uniform(np.log(1e-5), np.log(5e-3), size=2))
        x = from_vertex_coords(d, k)
        gap = abs(phi.strip_value(x, k) - phi.strip_value(x, (k - 1) % 4))
        worst = max(worst, gap)
    assert worst < 1e-10


def test_gradient_matches_finite_differences(setup):
    phi = setup["phi"]
    rng = np.random.default_rng(6)
    for _ in range(40):
        k = int(rng.integers(0, 4))
        u = rng.uniform(0.05, 0.95)
        v = np.exp(rng.uniform(np.log(1e-6), np.log(1e-3)))
        x = from_vertex_coords(np.array([u, v]), k)
        g = phi.grad(x)
        for i in range(2):
            h = 1e-6 * min(x[i], 1 - x[i])
            e = np.zeros(2)
            e[i] = h
            fd = (phi.value(x + e) - phi.value(x - e)) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=2e-5, abs=1e-8)


def test_hessian_matches_finite_differences(setup):
    phi = setup["phi"]
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = int(rng.integers(0, 4))
        u = rng.uniform(0.1, 0.9)
        v = np.exp(rng.uniform(np.log(1e-5), np.log(1e-3)))
        x = from_vertex_coords(np.array([u, v]), k)
        H = phi.hess(x)
        for i in range(2):
            h = 1e-5 * min(x[i], 1 - x[i])
            e = np.zeros(2)
            e[i] = h
            fd = (phi.grad(x + e)[i] - phi.grad(x - e)[i]) / (2 * h)
            assert H[i, i] == pytest.approx(fd, rel=5e-4, abs=1e-6)


def test_shift_calibration_reaches_floor(setup):
    geom, ba, correctors = setup["geom"], setup["ba"], setup["correctors"]
    phi = extended_lyapunov(ba, correctors, geom)
    rng = np.random.default_rng(8)
    samples = sample_region(geom, IN_SIGMA_O, 100, rng)
    calibrate_shift(phi, samples)
    vals = [phi.value(x) for x in samples]
    assert min(vals) >= 1.0 - 1e-9


def test_generator_decay_on_outer_sample(setup):
    # spot check of the decay inequality behind the recurrence bound
    model, phi, geom = setup["model"], setup["phi"], setup["geom"]
    rng = np.random.default_rng(9)
    pts = sample_region(geom, IN_SIGMA_O, 120, rng)
    vals = [generator_apply(model, phi, x) for x in pts]
    assert max(vals) <= -1.0


def test_dynkin_identity_on_glued_function(setup):
    mean, se = dynkin_check(setup["model"], setup["phi"], np.array([0.3, 0.4]),
                            t_stop=0.4, n_paths=150, dt=1e-3, seed=3)
    assert abs(mean) <= 3 * se + 1e-3
