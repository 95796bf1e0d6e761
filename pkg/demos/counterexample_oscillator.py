"""A damped oscillator is stable and passive-looking, but not a relaxation.

Its impulse response oscillates in sign, so it cannot be completely
monotone. The moment screen catches this at the second derivative and the
Hankel matrix acquires clearly negative eigenvalues.
"""

from ltsi_relax.certify import certify_family
from ltsi_relax.core import damped_oscillator, make_frequency_grid

report = certify_family(damped_oscillator(0.1), make_frequency_grid(10.0, 201))
print("relaxation verdict:", report.verdict)
for ev in report.relaxation.evidence:
    if ev.omega == (0.0,) and ev.test in ("cm_moments", "hankel_psd"):
        print(f"  {ev.test:12s} {ev.status:5s} {ev.details}")
