import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ltsi_relax.core import ModeTriple

settings.register_profile(
    "default", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_internal_mode(rng, n, m=1, scale=2.0, complex_=True):
    """A = -(X X^* + 0.1 I) (Hermitian, negative definite), C = B^*."""
    x = rng.standard_normal((n, n))
    if complex_:
        x = x + 1j * rng.standard_normal((n, n))
    a = -(x @ x.conj().T) / n * scale - 0.1 * np.eye(n)
    b = rng.standard_normal((n, m)) + (1j * rng.standard_normal((n, m)) if complex_ else 0)
    return ModeTriple(a, b, b.conj().T)


def scalar_mode(a, b=1.0, c=1.0):
    return ModeTriple([[a]], [[b]], [[c]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
