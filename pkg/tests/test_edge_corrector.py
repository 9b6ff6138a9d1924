"""Edge invariant densities, transversal rates, and the corrector."""

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

from degenflow.edge import (
    corrector_mc,
    edge_spectrum,
    lambda2_poly,
    solve_corrector,
    stationary_density_1d,
    transversal_exponent,
    transversal_exponent_mc,
)
from degenflow.errors import NotInS


def _closed_form_density(p, q):
    """Stationary x-density of dX = x(1-x) p(X) dt + q x(1-x) dW (Stratonovich).

    In Ito form the scale/speed construction gives a density
    proportional to exp(int 2 b / s^2) / s with s = q x (1 - x).
    """
    pot = lambda x: scipy_quad(
        lambda u: 2.0 * np.polynomial.polynomial.polyval(u, p)
        / (q**2 * u * (1 - u)),
        0.5, x,
    )[0]
    raw = lambda x: np.exp(pot(x)) / (q * x * (1 - x))
    Z = scipy_quad(raw, 1e-9, 1 - 1e-9, limit=200)[0]
    return lambda x: raw(x) / Z


def test_stationary_density_matches_closed_form(double_source):
    model = double_source["model"]
    dens = stationary_density_1d(model, n_nodes=512)
    exact = _closed_form_density(np.array([1.0, -2.0]), 0.6)
    xs = dens.x_grid
    keep = (xs > 1e-6) & (xs < 1 - 1e-6)
    approx = dens.pdf_x[keep]
    truth = np.array([exact(x) for x in xs[keep]])
    # L1 distance via the chart grid the density lives on
    w = dens.pdf_y[keep] / np.maximum(dens.pdf_x[keep], 1e-300)
    l1 = np.trapezoid(np.abs(approx - truth) * w, dens.y_grid[keep])
    assert l1 < 1e-4


def test_density_integrates_to_one(double_source):
    dens = stationary_density_1d(double_source["model"], n_nodes=512)
    mass = np.trapezoid(dens.pdf_y, dens.y_grid)
    assert mass == pytest.approx(1.0, abs=1e-3)
    mass_x = np.trapezoid(dens.pdf_x, dens.x_grid)
    assert mass_x == pytest.approx(1.0, abs=1e-3)


def test_density_requires_repelling_endpoints(double_sink):
    with pytest.raises(NotInS):
        stationary_density_1d(double_sink["model"])


def test_edge_transversal_rates_oracle(case_study):
    # right edge attracts at rate -1/2, top edge repels at rate +1/3
    model = case_study["model"]
    e1 = edge_spectrum(model, 1)
    e2 = edge_spectrum(model, 2)
    assert e1.in_S and e1.attracting
    assert e1.lambda_bar == pytest.approx(-0.5, abs=5e-5)
    assert e2.in_S and not e2.attracting
    assert e2.lambda_bar == pytest.approx(1.0 / 3.0, abs=5e-5)
    assert not edge_spectrum(model, 0).in_S
    assert not edge_spectrum(model, 3).in_S


def test_transversal_rate_quadrature_agrees_with_monte_carlo(case_study):
    model = case_study["model"]
    val, _ = transversal_exponent(model, 1)
    mc, se = transversal_exponent_mc(model, 1, t_horizon=800.0, seed=4)
    assert abs(mc - val) <= 3 * se


def test_corrector_residual_and_centering(acyclic):
    model = acyclic["model"]
    cor = solve_corrector(model, 0)
    assert cor.residual_norm < 1e-6
    assert abs(float(cor.pi_weights @ cor.psi_y)) < 1e-9
    assert abs(float(cor.pi_weights @ cor.g_values)) < 1e-9


def test_corrector_boundedness_stable_under_refinement(acyclic):
    model = acyclic["model"]
    a = solve_corrector(model, 0, n_grid=801)
    b = solve_corrector(model, 0, n_grid=1601)
    for key in a.boundedness:
        va, vb = a.boundedness[key], b.boundedness[key]
        assert vb < 2.0 * va + 1e-12
        assert va < 2.0 * vb + 1e-12


def test_corrector_matches_monte_carlo_oracle(acyclic):
    model = acyclic["model"]
    cor = solve_corrector(model, 0)
    pts = np.array([0.15, 0.3, 0.5, 0.7, 0.85])
    mc, se = corrector_mc(model, 0, pts, n_paths=400, seed=2)
    solved = np.array([float(cor.psi(u)) for u in pts])
    # the path integral carries an arbitrary additive constant
    shift = np.mean(mc - solved)
    assert np.all(np.abs(mc - shift - solved) <= 3 * se + 1e-3)


def test_corrector_requires_invariant_edge_measure(case_study):
    with pytest.raises(NotInS):
        solve_corrector(case_study["model"], 0)


def test_transversal_polynomial_consistent_with_spectrum_average(acyclic):
    # averaging the pointwise rate against the edge density reproduces
    # the spectrum's mean rate
    model = acyclic["model"]
    lam2 = lambda2_poly(model, 0)
    em = model.edge_model(0)
    dens = stationary_density_1d(em, n_nodes=1024)
    avg = dens.mean_of(lambda x: np.polynomial.polynomial.polyval(x, lam2))
    es = edge_spectrum(model, 0)
    assert avg == pytest.approx(es.lambda_bar, abs=5e-6)
