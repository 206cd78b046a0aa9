"""Boundary layers for the zero-dispersion limit of KdV on the half-line.

The dispersive solution is split as u_eps = u + V(x/eps) + w, where u solves
the limiting conservation law (``hyperbolic``), V is the stationary wall layer
(``layer``) and w is the remainder computed numerically (``dispersive``).
``diagnostics`` evaluates energies and scaling fits, ``harness`` runs experiments.
"""
from .errors import *  # noqa: F401,F403
from .flux import FluxModel, eval_flux, make_flux, parse_flux, potential_F, taylor_g, mismatch_H
from .functions import ExpPoly, make_function, reference_boundary_datum, reference_initial_datum
from .hyperbolic import (boundary_trace, estimate_lifespan, solve_characteristics,
                         time_derivatives, validate_compatibility)
from .layer import (LayerHistory, fit_decay_rate, solve_dtV, solve_layer_equation,
                    solve_profile)
from .dispersive import (RemainderState, SolverConfig, SourcePair, assemble_sources,
                         helmholtz_solve_halfline, reconstruct_full, residual_full,
                         solve_remainder, step_remainder)
from .diagnostics import (EnergyReport, ITermLedger, ScalingFit, check_interpolation,
                          hminus1_norm, iterm_ledger, linearized_energy, scaling_study,
                          weighted_energy)

__version__ = "0.1.0"
