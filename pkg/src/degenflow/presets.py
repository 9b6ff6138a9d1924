"""Shipped example models with frozen parameters.

Each preset returns a dict with the model and the numerical settings
its long-run experiments were tuned with.
"""

import numpy as np

from .model import Model1D, Model2D

_EPS_NOISE = 0.5


def _diag_noise(eps1, eps2):
    return [
        [np.array([[eps1]]), np.array([[0.0]])],
        [np.array([[0.0]]), np.array([[eps2]])],
    ]


def double_sink_1d():
    """Interval model with both endpoints attracting (rates -1, -1)."""
    model = Model1D([-1.0, 2.0], [[0.6]], name="double_sink_1d")
    return {
        "model": model,
        "scenario": "sinks",
        "horizon": 60.0,
        "dt": 1e-3,
        "x0": 0.5,
        "n_runs": 2000,
        "trap_depth": -10.0,
    }


def double_source_1d():
    """Interval model with both endpoints repelling (rates +1, +1)."""
    model = Model1D([1.0, -2.0], [[0.6]], name="double_source_1d")
    return {
        "model": model,
        "scenario": "interior",
        "horizon": 1e4,
        "dt": 1e-3,
        "x0": 0.5,
    }


def case_study_7_1():
    """Square model with one attracting vertex and one attracting edge.

    Vertex rates: (0,0) sink (-1,-1); (1,0) saddle; (1,1) source;
    (0,1) saddle.  The right edge carries an attracting invariant
    measure, the top edge a repelling one.
    """
    p1 = np.array([[-1.0, 2.0], [2.5, -4.0]])
    p2 = np.array([[-1.0, 2.0], [2.0, -4.0]])
    model = Model2D(p1, p2, _diag_noise(_EPS_NOISE, _EPS_NOISE), name="case_study_7_1")
    return {
        "model": model,
        "scenario": "I",
        "horizon": 400.0,
        "dt": 1e-3,
        "x0": (0.4, 0.6),
        "n_runs": 400,
        "trap_r": 0.05,
        "trap_depth": -8.0,
    }


def stable_cycle_rho2():
    """Saddle cycle with lambda+ = 1, lambda- = -2 at every vertex."""
    p1 = np.array([[1.0, -3.0], [1.0, 0.0]])
    p2 = np.array([[-2.0, 1.0], [3.0, 0.0]])
    model = Model2D(p1, p2, _diag_noise(_EPS_NOISE, _EPS_NOISE), name="stable_cycle_rho2")
    return {
        "model": model,
        "scenario": "II",
        "horizon": 14000.0,
        "dt": 2e-3,
        "x0": (0.2, 0.2),
        "n_runs": 10,
        "cycle_r": 0.1,
        "corner_r": 0.1,
    }


def unstable_cycle_rho_half():
    """Saddle cycle with lambda+ = 2, lambda- = -1 at every vertex."""
    p1 = np.array([[2.0, -3.0], [-1.0, 0.0]])
    p2 = np.array([[-1.0, -1.0], [3.0, 0.0]])
    model = Model2D(p1, p2, _diag_noise(_EPS_NOISE, _EPS_NOISE), name="unstable_cycle_rho_half")
    return {
        "model": model,
        "scenario": "III",
        "horizon": 2000.0,
        "dt": 1e-3,
        "x0": (0.3, 0.3),
    }


def acyclic_scenario_3():
    """Fully symmetric repelling boundary: every vertex a source.

    All four edges carry repelling invariant measures; the interior
    holds the unique stationary law.  Also the tuned configuration for
    the hitting-time certificates.
    """
    p1 = np.array([[1.0], [-2.0]])
    p2 = np.array([[1.0, -2.0]])
    model = Model2D(p1, p2, _diag_noise(0.4, 0.4), name="acyclic_scenario_3")
    return {
        "model": model,
        "scenario": "III",
        "horizon": 2000.0,
        "dt": 1e-3,
        "x0": (0.5, 0.5),
        "hitting": {"r": 0.15, "eps": 0.2, "n_paths": 160},
    }


def arcsine():
    """Zero-drift interval diffusion, X = logistic(2(y0 + W)).

    Time spent on either side of 1/2 follows the arcsine law; empirical
    measures oscillate between the two endpoint masses.
    """
    model = Model1D([0.0], [[2.0]], name="arcsine")
    return {
        "model": model,
        "scenario": "arcsine",
        "horizon": 1e4,
        "dt": 1e-2,
        "x0": 0.5,
    }


PRESETS = {
    "double_sink_1d": double_sink_1d,
    "double_source_1d": double_source_1d,
    "case_study_7_1": case_study_7_1,
    "stable_cycle_rho2": stable_cycle_rho2,
    "unstable_cycle_rho_half": unstable_cycle_rho_half,
    "acyclic_scenario_3": acyclic_scenario_3,
    "arcsine": arcsine,
}


def get_preset(name):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]()
