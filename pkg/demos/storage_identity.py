"""Stored energy equals twice the memory functional.

Feeding the past input u(t) = e^{t} (t < 0) into dz/dt = -z + u leaves the
state z(0) = 1/2. The stored energy |z(0)|^2, the supply integral of
<u(-t), y(t)> and twice the Hankel form all equal 1/4.
"""

from ltsi_relax.core import FrequencyGrid, tabulated
from ltsi_relax.hankel import build_quadrature
from ltsi_relax.spectral_sim import exponential_past_input, storage_identity_check

family = tabulated([(0.0, [[-1.0]], [[1.0]], [[1.0]])])
grid = FrequencyGrid([[0.0]], [1.0])
quad = build_quadrature("gauss-laguerre", 256, decay_rate=1.0)
rep = storage_identity_check(family, grid, quad, exponential_past_input(grid, quad, 1.0))
print(f"|z(0)|^2        = {rep.lhs:.12f}")
print(f"supply integral = {rep.rhs:.12f}")
print(f"2 x memory      = {rep.hankel_form:.12f}")
print(f"max rel error   = {rep.max_rel_error:.2e}")
