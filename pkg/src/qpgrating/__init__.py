"""Quasi-periodic Dirichlet gratings: forward solves, waveguide spectra, phase retrieval."""
from .errors import *  # noqa: F401,F403
from .forward import (CollocationConfig, ForwardSolution, boundary_residual,
                      counterexample_fixture, counterexample_total_field, solve_dirichlet,
                      solve_multi_angle)
from .inverse import DataSet, InversionConfig, linear_independence_gram, misfit, reconstruct
from .profile import GratingProfile
from .rayleigh import (ModeGrid, PlaneWave, RayleighExpansion, energy_balance, evaluate_field,
                       mode_params, propagating_set, quasiperiodicity_defect, tail_bound)
from .retrieval import (PhaselessSamples, catalog_frequencies, check_alpha_collision,
                        estimate_period, retrieve_coefficients, roundtrip)
from .waveguide import (DispersionCurve, WaveguideCell, assemble_pencil, default_alpha_grid,
                        dispersion_sweep, flat_band_scan, mu_eigenvalues, mu_from_dispersion,
                        strip_dispersion)

__version__ = "0.1.0"
