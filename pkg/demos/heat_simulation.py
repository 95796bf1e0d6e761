"""Simulate the heat equation spectrally and compare with the Gaussian kernel."""

import numpy as np

from ltsi_relax.core import diffusion
from ltsi_relax.diffusion_ref import DiffusionParams, gaussian_solution
from ltsi_relax.spectral_sim import SimulationConfig, simulate

params = DiffusionParams(1.0)
cfg = SimulationConfig(256, 40.0, 1e-3, (0.0, 1.0))
init = gaussian_solution(params, 1.0, 0.0, cfg.positions)[:, None]
result = simulate(diffusion(1.0), cfg, initial_field=init)
final = result.output.values[-1, :, 0].real
exact = gaussian_solution(params, 1.0, 1.0, cfg.positions)
print(f"peak height at t=1: simulated {final.max():.10f}, exact {exact.max():.10f}")
print(f"max relative error: {np.max(np.abs(final - exact)) / exact.max():.2e}")
