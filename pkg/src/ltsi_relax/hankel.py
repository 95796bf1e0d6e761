"""Discretized Hankel operators and the quadratic memory functional.

The Hankel operator ``(H v)(t) = int_0^inf g(t + tau) v(tau) dtau`` maps a
time-reversed past input to the future output. On quadrature nodes ``t_i``
with weights ``w_i`` it becomes the block matrix
``H_ij = sqrt(w_i w_j) g(t_i + t_j)``, whose Hermitian positive
semidefiniteness is the discrete counterpart of ``H >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import (FrequencyGrid, MarginalModeError, ModeTriple, StabilityError,
                   SymbolFamily, ValidationError, evaluate_symbol)
from .lti_mode import impulse_response, spectral_abscissa

__all__ = [
    "TimeQuadrature", "HankelDiscretization", "HankelTest", "build_quadrature",
    "horizon_for", "gauss_laguerre_scaled", "build_hankel", "hankel_psd_test",
    "apply_hankel", "memory_functional", "hankel_form", "aggregate_hankel_form",
    "write_hankel_dump",
]

SCHEMES = ("truncated-trapezoid", "gauss-laguerre")


@dataclass(frozen=True, eq=False)
class TimeQuadrature:
    """Nodes and weights for ``int_0^inf f(t) dt``."""

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    horizon: float | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValidationError("nodes and weights must be 1-D of equal length")
        if np.any(np.diff(nodes) <= 0) or nodes[0] < 0:
            raise ValidationError("nodes must be nonnegative and strictly ascending")
        if np.any(weights <= 0):
            raise ValidationError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    def integrate(self, values):
        """``sum_i w_i f(t_i)`` along the first axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def horizon_for(decay_rate, eps_tail=1e-10):
    """Horizon ``T`` with ``exp(-decay_rate T) = eps_tail``."""
    if not decay_rate > 0:
        raise MarginalModeError(
            "decay rate must be positive to bound the time horizon")
    return math.log(1.0 / eps_tail) / decay_rate


def _laguerre_log_abs(n, x):
    """``log|L_n(x)|`` and ``L_{n-1}(x) / L_n(x)`` by the scaled three-term recurrence."""
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    cur = 1.0 - x
    log_scale = np.zeros_like(x)
    for k in range(1, n):
        nxt = ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if np.any(big):
            s = np.where(big, np.abs(cur), 1.0)
            cur = cur / s
            prev = prev / s
            log_scale += np.log(s)
    if n == 0:
        return np.zeros_like(x), np.zeros_like(x)
    return np.log(np.abs(cur)) + log_scale, prev / cur


def gauss_laguerre_scaled(n):
    """Gauss-Laguerre nodes and *scaled* weights ``w_i exp(x_i)``.

    The plain weights underflow for large ``n``; the scaled weights stay
    O(node spacing) and are computed in log space from
    ``w_i = x_i / ((n + 1)^2 L_{n+1}(x_i)^2)``. Nodes are eigenvalues of the
    Jacobi matrix, polished with two Newton steps on ``L_n``.
    """
    k = np.arange(n)
    x = scipy.linalg.eigh_tridiagonal(2.0 * k + 1.0, k[1:].astype(float),
                                      eigvals_only=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(2):
            _, ratio = _laguerre_log_abs(n, x)   # L_{n-1} / L_n
            # x L_n' = n (L_n - L_{n-1})  =>  L_n / L_n' = x / (n (1 - ratio))
            step = x / (n * (1.0 - ratio))
            x = np.where(np.isfinite(step), x - step, x)
    log_l, _ = _laguerre_log_abs(n + 1, x)
    log_w = np.log(x) - 2.0 * math.log(n + 1) - 2.0 * log_l + x
    return x, np.exp(log_w)


def build_quadrature(scheme="truncated-trapezoid", n=128, decay_rate=None,
                     horizon=None, eps_tail=1e-10) -> TimeQuadrature:
    """Build a rule for ``int_0^inf`` adapted to a decay rate.

    ``truncated-trapezoid``: ``n`` uniform nodes on ``[0, T]`` with
    ``T = ln(1/eps_tail) / decay_rate`` unless ``horizon`` is given.
    ``gauss-laguerre``: the ``n``-point Laguerre rule rescaled so that it
    integrates ``f`` exactly when ``exp(decay_rate t) f(t)`` is a polynomial
    of degree below ``2n``.

    Raises `MarginalModeError` when no positive decay rate is available.
    """
    if n < 2:
        raise ValidationError("quadrature needs at least 2 nodes")
    if scheme in ("trapezoid", "truncated-trapezoid"):
        if horizon is None:
            if decay_rate is None:
                raise ValidationError("need decay_rate or horizon")
            horizon = horizon_for(decay_rate, eps_tail)
        nodes = np.linspace(0.0, horizon, n)
        h = horizon / (n - 1)
        weights = np.full(n, h)
        weights[0] = weights[-1] = h / 2
        return TimeQuadrature(nodes, weights, "truncated-trapezoid", float(horizon))
    if scheme == "gauss-laguerre":
        if decay_rate is None or not decay_rate > 0:
            raise MarginalModeError("gauss-laguerre needs a positive decay rate")
        x, w = gauss_laguerre_scaled(n)
        return TimeQuadrature(x / decay_rate, w / decay_rate, "gauss-laguerre")
    raise ValidationError(f"unknown quadrature scheme {scheme!r}; use one of {SCHEMES}")


@dataclass(frozen=True, eq=False)
class HankelDiscretization:
    """Weighted Hankel block matrix of one mode and its spectral summary."""

    quadrature: TimeQuadrature
    matrix: np.ndarray
    m: int
    symmetry_defect: float
    min_eigenvalue: float
    max_eigenvalue: float
    eigenvalues: np.ndarray
    omega: tuple = ()

    @property
    def n_nodes(self):
        return len(self.quadrature)


def _pairwise_kernel(mode, nodes):
    """``g(t_i + t_j)`` for all node pairs, shape ``(N, N, p, m)``.

    Evaluated directly at every sum ``t_i + t_j`` (upper triangle, mirrored)
    so the result does not share arithmetic with the factorized
    controllability/observability route. Uses the eigen-expansion
    ``C V exp(Lambda t) V^{-1} B`` when the eigenbasis is well conditioned,
    Pade ``expm`` otherwise.
    """
    n_nodes = nodes.size
    iu, ju = np.triu_indices(n_nodes)
    sums = nodes[iu] + nodes[ju]
    g = _kernel_at(mode, sums)
    p, m = g.shape[-2:]
    out = np.empty((n_nodes, n_nodes, p, m), dtype=complex)
    out[iu, ju] = g
    out[ju, iu] = g
    return out


def _kernel_at(mode, times, cond_max=1e4):
    a, b, c = mode.a_matrix, mode.b_matrix, mode.c_matrix
    if np.allclose(a, a.conj().T, rtol=0, atol=0):
        lam, vecs = np.linalg.eigh(a)
        left = vecs.conj().T @ b
    else:
        lam, vecs = scipy.linalg.eig(a)
        if not np.linalg.cond(vecs) <= cond_max:
            return impulse_response(mode, times)
        left = np.linalg.solve(vecs, b)
    right = c @ vecs
    with np.errstate(over="ignore"):
        expo = np.exp(np.multiply.outer(times, lam))
    g = np.einsum("pk,sk,km->spm", right, expo, left)
    if not np.all(np.isfinite(g)):
        return impulse_response(mode, times)
    return g


def build_hankel(mode: ModeTriple, quad: TimeQuadrature, *, require_stable=True,
                 marginal=1e-6) -> HankelDiscretization:
    """Discretize the Hankel operator of ``mode`` on ``quad``.

    ``H[i*m:(i+1)*m, j*m:(j+1)*m] = sqrt(w_i w_j) g(t_i + t_j)``. Raises
    `StabilityError` for modes with spectral abscissa above ``-marginal``
    unless ``require_stable`` is False (the matrix is still well defined on a
    finite quadrature, but no longer approximates a bounded operator).
    """
    if require_stable:
        abscissa = spectral_abscissa(mode)
        if abscissa >= -marginal:
            raise StabilityError(
                f"mode at omega={mode.omega.tolist()} is not exponentially "
                f"stable (abscissa {abscissa:.3g})")
    nodes, weights = quad.nodes, quad.weights
    kernel = _pairwise_kernel(mode, nodes)
    n_nodes, _, p, m = kernel.shape
    root_w = np.sqrt(weights)
    kernel = kernel * (root_w[:, None] * root_w[None, :])[:, :, None, None]
    matrix = kernel.transpose(0, 2, 1, 3).reshape(n_nodes * p, n_nodes * m)
    return _summarize(matrix, quad, m, tuple(mode.omega.tolist()))


def _summarize(matrix, quad, m, omega):
    norm = float(np.linalg.norm(matrix, 2)) if matrix.size else 0.0
    if matrix.shape[0] == matrix.shape[1]:
        defect = float(np.linalg.norm(matrix - matrix.conj().T, 2)) / max(1.0, norm)
        eig = scipy.linalg.eigvalsh((matrix + matrix.conj().T) / 2)
    else:
        defect = math.inf
        eig = np.array([math.nan])
    return HankelDiscretization(quad, matrix, m, defect, float(eig[0]),
                                float(eig[-1]), eig, omega)


@dataclass(frozen=True)
class HankelTest:
    passed: bool
    margin: float
    symmetry_defect: float
    min_eigenvalue: float
    max_eigenvalue: float

    @property
    def status(self):
        return "pass" if self.passed else "fail"


def hankel_psd_test(disc: HankelDiscretization, tol=1e-9) -> HankelTest:
    """Pass iff symmetric within ``tol`` and ``lambda_min >= -tol max(1, lambda_max)``."""
    psd = disc.min_eigenvalue + tol * max(1.0, disc.max_eigenvalue)
    margin = min(psd, tol - disc.symmetry_defect)
    return HankelTest(bool(margin >= 0), float(margin), disc.symmetry_defect,
                      disc.min_eigenvalue, disc.max_eigenvalue)


def _node_vector(disc, v):
    v = np.asarray(v, dtype=complex)
    n_nodes, m = disc.n_nodes, disc.m
    if v.size != n_nodes * m:
        raise ValidationError(
            f"expected {n_nodes * m} values ({n_nodes} nodes x {m} channels), "
            f"got {v.size}")
    return v.reshape(n_nodes, m)


def apply_hankel(disc: HankelDiscretization, v) -> np.ndarray:
    """``(H v)(t_i) = sum_j w_j g(t_i + t_j) v(t_j)`` at the quadrature nodes.

    ``v`` holds samples at the nodes, shape ``(N,)``, ``(N, m)`` or flat
    ``N*m``; the result has the same shape.
    """
    shape = np.shape(v)
    vv = _node_vector(disc, v)
    root_w = np.sqrt(disc.quadrature.weights)
    scaled = (vv * root_w[:, None]).ravel()
    out = (disc.matrix @ scaled).reshape(disc.n_nodes, -1) / root_w[:, None]
    return out.reshape(shape)


def hankel_form(disc: HankelDiscretization, v, w) -> complex:
    """``<H v, w> = sum_i w_i <(H v)(t_i), w(t_i)>`` with ``<a, b> = b^* a``."""
    hv = _node_vector(disc, apply_hankel(disc, _node_vector(disc, v)))
    ww = _node_vector(disc, w)
    return complex(np.sum(disc.quadrature.weights[:, None] * hv * ww.conj()))


def memory_functional(disc: HankelDiscretization, v, full_output=False):
    """Quadratic memory ``0.5 <H v, v>``; real part returned.

    With ``full_output`` returns ``(value, imaginary_residual)``; a large
    residual or a negative value signals that ``H`` is not ``>= 0``.
    """
    form = 0.5 * hankel_form(disc, v, v)
    if full_output:
        return form.real, form.imag
    return form.real


def aggregate_hankel_form(family: SymbolFamily, grid: FrequencyGrid, quad,
                          v_hat, w_hat) -> complex:
    """Plancherel aggregation ``sum_k W_k <H_k v_k, w_k>`` over the grid.

    ``quad`` is one `TimeQuadrature` shared by all modes or a sequence with
    one rule per grid point; ``v_hat[k]`` and ``w_hat[k]`` are samples on the
    nodes of the k-th rule.
    """
    n_modes = len(grid)
    quads = _per_mode(quad, n_modes)
    if len(v_hat) != n_modes or len(w_hat) != n_modes:
        raise ValidationError(
            f"need one input vector per grid point ({n_modes}), got "
            f"{len(v_hat)} and {len(w_hat)}")
    total = 0.0 + 0.0j
    for k, (omega, weight) in enumerate(zip(grid.points, grid.weights)):
        mode = evaluate_symbol(family, omega)
        disc = build_hankel(mode, quads[k], require_stable=False)
        total += weight * hankel_form(disc, v_hat[k], w_hat[k])
    return complex(total)


def _per_mode(quad, n_modes) -> Sequence[TimeQuadrature]:
    if isinstance(quad, TimeQuadrature):
        return [quad] * n_modes
    quads = list(quad)
    if len(quads) != n_modes:
        raise ValidationError(f"need {n_modes} quadrature rules, got {len(quads)}")
    return quads


def write_hankel_dump(disc: HankelDiscretization, path):
    """Dump nodes/weights, the dense matrix (row-major) and ascending eigenvalues.

    Sections are introduced by ``#`` lines. The matrix is written as real
    parts; a ``# matrix_imag`` section follows when any entry is complex.
    """
    def fmt(x):
        return format(float(x), ".17g")

    lines = ["# nodes", "node,weight"]
    for t, w in zip(disc.quadrature.nodes, disc.quadrature.weights):
        lines.append(f"{fmt(t)},{fmt(w)}")
    lines.append("# matrix")
    for row in disc.matrix.real:
        lines.append(",".join(fmt(x) for x in row))
    if np.any(disc.matrix.imag != 0):
        lines.append("# matrix_imag")
        for row in disc.matrix.imag:
            lines.append(",".join(fmt(x) for x in row))
    lines.append("# eigenvalues")
    lines.extend(fmt(x) for x in np.sort(disc.eigenvalues))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
