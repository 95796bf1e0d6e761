"""Relaxation-system analysis for linear time- and space-invariant systems.

A spatially invariant linear system is described by its symbol: one
state-space triple ``(A_omega, B_omega, C_omega)`` per spatial frequency.
This package tests whether such a family has completely monotone impulse
responses (relaxation), discretizes and checks the Hankel operator,
verifies impedance-passivity certificates, simulates the system with a
spectral method, and checks that stored energy equals the memory of the
past input.
"""

__version__ = "0.1.0"

from .core import (Certificate, Evidence, FrequencyGrid, ModeTriple,  # noqa: E402
                   SpatioTemporalField, SymbolFamily, Tolerances, damped_oscillator,
                   diagonal_exponential, diffusion, evaluate_symbol, family_from_dict,
                   family_to_dict, load_family, make_frequency_grid, shifted_diffusion,
                   tabulated, validate_family)
from .lti_mode import (analyze_mode, cm_test_bernstein, cm_test_moments,  # noqa: E402
                       impulse_response, internal_form_test, spectral_abscissa)
from .hankel import (aggregate_hankel_form, apply_hankel, build_hankel,  # noqa: E402
                     build_quadrature, hankel_psd_test, memory_functional)
from .passivity import (PassivityCertificate, identity_certificate,  # noqa: E402
                        lyapunov_candidate, verify_certificate)
from .spectral_sim import (SimulationConfig, controllability_map,  # noqa: E402
                           observability_output, simulate, storage_identity_check)
from .certify import certify_family  # noqa: E402
