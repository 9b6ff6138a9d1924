"""Toolkit for boundary-degenerate diffusions on the interval and square.

Simulation in boundary log charts, vertex/edge spectral analysis,
long-run classification (attractor capture, heteroclinic cycling,
interior recurrence), Lyapunov-based hitting-time certificates, and a
calibration lab for the underlying drift-martingale estimates.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: F401
    Model1D,
    Model2D,
    model1d_from_raw,
    model2d_from_raw,
    check_tangency,
)
from .classify import classify_1d, choose_betas  # noqa: F401
from .classify import classify as classify_scenario  # noqa: F401
from .spectra import vertex_spectra  # noqa: F401
from .edge import edge_spectrum, edge_spectra, solve_corrector  # noqa: F401
from .hitting import (  # noqa: F401
    build_geometry,
    classical_geometry,
    extended_lyapunov,
    tune_parameters,
    verify_conditions,
    validate_bound,
    HittingSpec,
)
from .calibration import (  # noqa: F401
    DriftMartingaleLab,
    check_exit_bounds_suite,
    arcsine_scenario,
)
from .presets import PRESETS, get_preset  # noqa: F401
from .config import parse_config, emit_config, build_model, RunConfig  # noqa: F401
