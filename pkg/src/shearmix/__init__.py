"""Enhanced dissipation of passive scalars in periodic shear flows.

Pseudospectral solver for f_t + i U(y) f = nu f_yy on the torus, the
space-time weights and hypocoercive functional that certify decay at rate
nu^(1/2), and tools to measure decay rates and their scaling in nu.
"""

from .analysis import (DecayFit, estimate_spectral_constant, fit_global_rate, scaling_exponent,
                       streamline_rates)
from .errors import ShearmixError
from .functional import (HypoParams, audit_gronwall, calibrate_beta, check_equivalence,
                         closed_form_beta, eval_functional)
from .shear import ShearProfile, eval_derivatives, make_profile, profile_from_name
from .solver import (Grid, ScalarField, SolveConfig, Trajectory, make_initial, reduce_mode,
                     solve, step)
from .weights import check_W_lemma, eval_B, eval_logW, eval_phi, eval_W, weight_set

__version__ = "0.1.0"

__all__ = [
    "DecayFit", "Grid", "HypoParams", "ScalarField", "ShearProfile", "ShearmixError",
    "SolveConfig", "Trajectory", "audit_gronwall", "calibrate_beta", "check_W_lemma",
    "check_equivalence", "closed_form_beta", "estimate_spectral_constant", "eval_B",
    "eval_W", "eval_derivatives", "eval_functional", "eval_logW", "eval_phi",
    "fit_global_rate", "make_initial", "make_profile", "profile_from_name", "reduce_mode",
    "scaling_exponent", "solve", "step", "streamline_rates", "weight_set",
]
