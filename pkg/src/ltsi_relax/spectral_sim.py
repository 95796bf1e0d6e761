"""Spectral simulation of LTSI systems on a periodic domain.

The spatial FFT decouples the system into one LTI system per discrete
frequency; each is advanced exactly by an exponential integrator (matrix
exponential of an augmented block matrix), so the only time-discretization
error comes from the input hold. The extended controllability/observability
maps and the storage identity checks work directly on the per-mode systems.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import (FrequencyGrid, ModeOverflowError, ModeTriple,
                   SpatioTemporalField, StabilityError, StructuralError,
                   SymbolFamily, ValidationError, evaluate_symbol)
from .hankel import TimeQuadrature, build_hankel, memory_functional
from .lti_mode import internal_form_test, spectral_abscissa

__all__ = [
    "SimulationConfig", "ModeState", "SimulationResult", "StorageReport",
    "WrapAroundWarning", "HypothesisError", "fft_frequencies", "spatial_fft",
    "inverse_spatial_fft", "step_mode", "simulate", "controllability_map",
    "observability_output", "controllability_matrix", "observability_matrix",
    "storage_identity_check", "exponential_past_input", "gaussian_past_input",
]

HOLDS = ("piecewise-constant", "piecewise-linear")


class WrapAroundWarning(UserWarning):
    """Field mass near the periodic boundary; the domain may be too short."""


class HypothesisError(StructuralError):
    """A mode violates the internal-relaxation hypothesis of the storage identity."""


@dataclass(frozen=True)
class SimulationConfig:
    spatial_points: int
    domain_length: float
    dt: float
    t_span: tuple = (0.0, 1.0)
    input_hold: str = "piecewise-constant"

    def __post_init__(self):
        n = self.spatial_points
        if n < 8 or n & (n - 1):
            raise ValidationError("spatial_points must be a power of two >= 8")
        if not (self.domain_length > 0 and self.dt > 0):
            raise ValidationError("domain_length and dt must be positive")
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValidationError("t_span must satisfy t_end > t_start")
        if self.input_hold not in HOLDS:
            raise ValidationError(f"input_hold must be one of {HOLDS}")

    @property
    def dx(self):
        return self.domain_length / self.spatial_points

    @property
    def n_steps(self):
        t0, t1 = self.t_span
        return int(round((t1 - t0) / self.dt))

    @property
    def omegas(self):
        return fft_frequencies(self.spatial_points, self.domain_length)

    @property
    def positions(self):
        return -self.domain_length / 2 + self.dx * np.arange(self.spatial_points)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(int(data["spatial_points"]), float(data["domain_length"]),
                       float(data["dt"]), tuple(data.get("t_span", (0.0, 1.0))),
                       data.get("input_hold", "piecewise-constant"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed simulation config: {exc}") from exc


def fft_frequencies(n, length):
    """Ascending ``omega_k = 2 pi k / L``, ``k = -n/2 .. n/2 - 1``."""
    return np.fft.fftshift(np.fft.fftfreq(n, d=length / n)) * 2 * np.pi


def spatial_fft(values, axis=0):
    """Unitary DFT along ``axis`` with the output ordered by ascending omega."""
    out = np.fft.fft(np.asarray(values, dtype=complex), axis=axis, norm="ortho")
    return np.fft.fftshift(out, axes=axis)


def inverse_spatial_fft(spectrum, axis=0):
    centered = np.fft.ifftshift(np.asarray(spectrum, dtype=complex), axes=axis)
    return np.fft.ifft(centered, axis=axis, norm="ortho")


@dataclass(frozen=True, eq=False)
class ModeState:
    omega: float
    z: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        if not np.all(np.isfinite(z)):
            raise ValidationError("mode state has non-finite entries")
        object.__setattr__(self, "z", z)


def _expm(m):
    out = scipy.linalg.expm(m)
    if not np.all(np.isfinite(out)):
        raise ModeOverflowError("matrix exponential overflowed")
    return out


def _input_augmentation(mode, u_now, u_next, dt, hold):
    """Augmented generator ``M`` and start vector for one step of the input hold."""
    a, b = mode.a_matrix, mode.b_matrix
    n = a.shape[0]
    u_now = np.atleast_1d(np.asarray(u_now, dtype=complex))
    if hold == "piecewise-constant":
        m = np.zeros((n + 1, n + 1), dtype=complex)
        m[:n, :n] = a
        m[:n, n] = b @ u_now
        return m, 1
    if hold == "piecewise-linear":
        if u_next is None:
            raise ValidationError("piecewise-linear hold needs u_next")
        slope = (np.atleast_1d(np.asarray(u_next, dtype=complex)) - u_now) / dt
        m = np.zeros((n + 2, n + 2), dtype=complex)
        m[:n, :n] = a
        m[:n, n] = b @ u_now
        m[:n, n + 1] = b @ slope
        m[n + 1, n] = 1.0        # d(sigma)/d(sigma) = 1 drives the ramp column
        return m, 2
    raise ValidationError(f"input_hold must be one of {HOLDS}")


def step_mode(mode: ModeTriple, state: ModeState, u_now, u_next=None, dt=1e-3,
              hold="piecewise-constant", return_integral=False):
    """Advance one mode by ``dt`` with the variation-of-constants formula.

    For a constant hold, ``z+ = expm(A dt) z + (int_0^dt expm(A s) ds) B u_now``,
    obtained from ``expm`` of ``[[A, B u_now], [0, 0]]``; the linear hold adds
    a ramp column. With ``return_integral`` also returns ``int_0^dt z(s) ds``,
    from the exponential of the doubled block ``[[M, I], [0, 0]]``.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    m_aug, extra = _input_augmentation(mode, u_now, u_next, dt, hold)
    n = mode.dims[0]
    start = np.zeros(n + extra, dtype=complex)
    start[:n] = state.z
    start[n] = 1.0
    if not return_integral:
        z_new = (_expm(m_aug * dt) @ start)[:n]
        return ModeState(state.omega, z_new)
    size = n + extra
    big = np.zeros((2 * size, 2 * size), dtype=complex)
    big[:size, :size] = m_aug
    big[:size, size:] = np.eye(size)
    expo = _expm(big * dt)
    z_new = (expo[:size, :size] @ start)[:n]
    z_int = (expo[:size, size:] @ start)[:n]
    return ModeState(state.omega, z_new), z_int


def _propagators(modes, dt, hold):
    """Stacked step matrices: ``z+ = E z + G0 u_k + G1 u_{k+1}``."""
    a = np.array([md.a_matrix for md in modes])
    b = np.array([md.b_matrix for md in modes])
    k, n, _ = a.shape
    m = b.shape[2]
    if hold == "piecewise-constant":
        aug = np.zeros((k, n + m, n + m), dtype=complex)
        aug[:, :n, :n] = a
        aug[:, :n, n:] = b
        expo = _expm(aug * dt)
        return expo[:, :n, :n], expo[:, :n, n:], None
    aug = np.zeros((k, n + 2 * m, n + 2 * m), dtype=complex)
    aug[:, :n, :n] = a
    aug[:, :n, n:n + m] = b
    aug[:, n:n + m, n + m:] = np.eye(m)
    expo = _expm(aug * dt)
    p1, p2 = expo[:, :n, n:n + m], expo[:, :n, n + m:]
    return expo[:, :n, :n], p1 - p2 / dt, p2 / dt


@dataclass(frozen=True, eq=False)
class SimulationResult:
    output: SpatioTemporalField
    final_states: np.ndarray
    omegas: np.ndarray
    states: np.ndarray | None = None
    warnings: tuple = field(default=())


def _circulant_kernel(symbols):
    """Physical-space kernel of the multiplier with ascending-omega ``symbols``.

    ``(Op z)_i = sum_d kernel[d] z_{(i - d) mod N}``.
    """
    return np.fft.ifft(np.fft.ifftshift(symbols, axes=0), axis=0)


class _Circulant:
    def __init__(self, n):
        self.idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n

    def apply(self, kernel, values):
        # reduction order runs over offsets d for every output cell, which
        # makes integer-cell shifts commute with the operator bit for bit
        gathered = values[self.idx]
        return np.sum(np.sum(kernel[None] * gathered[:, :, None, :], axis=3), axis=1)


def simulate(family: SymbolFamily, config: SimulationConfig, input_field=None,
             z_init=None, *, initial_field=None, method="fft",
             store_states=False) -> SimulationResult:
    """Simulate ``dz/dt = A z + B u``, ``y = C z`` on a periodic domain.

    Parameters
    ----------
    input_field : SpatioTemporalField, optional
        Input samples on the ``(n_steps + 1) x spatial_points x m`` grid;
        zero input when omitted.
    z_init : array, optional
        Per-mode initial states ``(spatial_points, n)`` in ascending omega
        order (unitary DFT coefficients).
    initial_field : array, optional
        Initial state in physical space ``(spatial_points, n)``; alternative
        to ``z_init``.
    method : {"fft", "circulant"}
        ``"fft"`` transforms every slice, steps each mode and transforms back.
        ``"circulant"`` applies the same per-step operators as physical-space
        circular convolutions ordered by offset; O(N^2) per step, but exactly
        equivariant under integer-cell shifts.
    """
    n_x = config.spatial_points
    omegas = config.omegas
    modes = [evaluate_symbol(family, [w]) for w in omegas]
    n, m, p = modes[0].dims
    steps = config.n_steps
    t0 = config.t_span[0]

    if input_field is None:
        u = np.zeros((steps + 1, n_x, m), dtype=complex)
    else:
        u = input_field.values
        if u.shape != (steps + 1, n_x, m):
            raise ValidationError(
                f"input field has shape {u.shape}, expected {(steps + 1, n_x, m)}")
        if not (np.isclose(input_field.dt, config.dt)
                and np.isclose(input_field.dx, config.dx)):
            raise ValidationError("input field spacing does not match the config")
    if z_init is not None and initial_field is not None:
        raise ValidationError("give either z_init or initial_field")

    e_mat, g0, g1 = _propagators(modes, config.dt, config.input_hold)
    c_mat = np.array([md.c_matrix for md in modes])

    if method == "fft":
        if initial_field is not None:
            z = spatial_fft(np.asarray(initial_field, dtype=complex).reshape(n_x, n))
        elif z_init is not None:
            z = np.asarray(z_init, dtype=complex).reshape(n_x, n).copy()
        else:
            z = np.zeros((n_x, n), dtype=complex)
        u_hat = spatial_fft(u, axis=1)
        y_hat = np.empty((steps + 1, n_x, p), dtype=complex)
        states = np.empty((steps + 1, n_x, n), dtype=complex) if store_states else None
        y_hat[0] = np.einsum("kij,kj->ki", c_mat, z)
        if store_states:
            states[0] = z
        for k in range(steps):
            z = np.einsum("kij,kj->ki", e_mat, z) + np.einsum("kij,kj->ki", g0, u_hat[k])
            if g1 is not None:
                z = z + np.einsum("kij,kj->ki", g1, u_hat[k + 1])
            y_hat[k + 1] = np.einsum("kij,kj->ki", c_mat, z)
            if store_states:
                states[k + 1] = z
        y = inverse_spatial_fft(y_hat, axis=1)
        final = z
    elif method == "circulant":
        circ = _Circulant(n_x)
        k_e, k_g0, k_c = (_circulant_kernel(x) for x in (e_mat, g0, c_mat))
        k_g1 = None if g1 is None else _circulant_kernel(g1)
        if initial_field is not None:
            z = np.asarray(initial_field, dtype=complex).reshape(n_x, n).copy()
        elif z_init is not None:
            z = inverse_spatial_fft(np.asarray(z_init, dtype=complex).reshape(n_x, n))
        else:
            z = np.zeros((n_x, n), dtype=complex)
        y = np.empty((steps + 1, n_x, p), dtype=complex)
        states = np.empty((steps + 1, n_x, n), dtype=complex) if store_states else None
        y[0] = circ.apply(k_c, z)
        if store_states:
            states[0] = spatial_fft(z)
        for k in range(steps):
            z = circ.apply(k_e, z) + circ.apply(k_g0, u[k])
            if k_g1 is not None:
                z = z + circ.apply(k_g1, u[k + 1])
            y[k + 1] = circ.apply(k_c, z)
            if store_states:
                states[k + 1] = spatial_fft(z)
        final = spatial_fft(z)
    else:
        raise ValidationError(f"unknown simulation method {method!r}")

    notes = _wraparound_check(y)
    out = SpatioTemporalField(y, config.dt, config.dx, t0, config.positions[0])
    return SimulationResult(out, final, omegas, states, notes)


def _wraparound_check(y, edge_fraction=0.05, threshold=1e-8):
    mags = np.abs(y).sum(axis=(0, 2))
    total = mags.sum()
    if total == 0:
        return ()
    edge = max(1, int(round(edge_fraction * mags.size)))
    near = mags[:edge].sum() + mags[-edge:].sum()
    if near > threshold * total:
        msg = (f"{near / total:.3g} of the output mass lies within "
               f"{edge} cells of the periodic boundary")
        warnings.warn(msg, WrapAroundWarning, stacklevel=3)
        return (msg,)
    return ()


# ---------------------------------------------------------------------------
# Extended controllability / observability maps


def _grid_quads(grid, quad):
    if isinstance(quad, TimeQuadrature):
        return [quad] * len(grid)
    quads = list(quad)
    if len(quads) != len(grid):
        raise ValidationError(f"need {len(grid)} quadrature rules, got {len(quads)}")
    return quads


def _require_stable(mode, marginal):
    abscissa = spectral_abscissa(mode)
    if abscissa >= -marginal:
        raise StabilityError(
            f"mode omega={mode.omega.tolist()} is not exponentially stable "
            f"(abscissa {abscissa:.3g})")


def _node_inputs(v, n_nodes, m):
    v = np.asarray(v, dtype=complex)
    if v.size != n_nodes * m:
        raise ValidationError(f"expected {n_nodes} x {m} input samples, got {v.shape}")
    return v.reshape(n_nodes, m)


def controllability_matrix(mode: ModeTriple, quad: TimeQuadrature) -> np.ndarray:
    """Discretized ``B_inf``: columns ``sqrt(w_j) expm(A t_j) B``, shape ``(n, N m)``."""
    expo = scipy.linalg.expm(mode.a_matrix * quad.nodes[:, None, None])
    cols = (expo @ mode.b_matrix) * np.sqrt(quad.weights)[:, None, None]
    return np.concatenate(list(cols), axis=1)


def observability_matrix(mode: ModeTriple, quad: TimeQuadrature) -> np.ndarray:
    """Discretized ``C_inf``: rows ``sqrt(w_i) C expm(A t_i)``, shape ``(N p, n)``."""
    expo = scipy.linalg.expm(mode.a_matrix * quad.nodes[:, None, None])
    rows = (mode.c_matrix @ expo) * np.sqrt(quad.weights)[:, None, None]
    return np.concatenate(list(rows), axis=0)


def controllability_map(family: SymbolFamily, grid: FrequencyGrid, quad, v,
                        marginal=1e-6) -> np.ndarray:
    """``z_omega(0) = sum_j w_j expm(A_omega t_j) B_omega v_omega(t_j)`` per mode.

    ``v[k]`` holds the past input of grid mode ``k`` on the nodes of its
    quadrature. Returns an array of shape ``(K, n)``.
    """
    quads = _grid_quads(grid, quad)
    if len(v) != len(grid):
        raise ValidationError("need one past input per grid point")
    out = []
    for omega, q, vk in zip(grid.points, quads, v):
        mode = evaluate_symbol(family, omega)
        _require_stable(mode, marginal)
        vv = _node_inputs(vk, len(q), mode.dims[1])
        expo = scipy.linalg.expm(mode.a_matrix * q.nodes[:, None, None])
        terms = expo @ (mode.b_matrix @ vv.T).T[:, :, None]
        out.append(np.tensordot(q.weights, terms[:, :, 0], axes=(0, 0)))
    return np.array(out)


def observability_output(family: SymbolFamily, grid: FrequencyGrid, z0, t):
    """``y_omega(t) = C_omega expm(A_omega t) z_omega(0)`` per mode.

    Scalar ``t`` gives shape ``(K, p)``; an array of times gives ``(K, T, p)``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError("observability output is defined for t >= 0")
    z0 = np.asarray(z0, dtype=complex)
    if z0.shape[0] != len(grid):
        raise ValidationError("need one initial state per grid point")
    out = []
    for omega, zk in zip(grid.points, z0):
        mode = evaluate_symbol(family, omega)
        expo = scipy.linalg.expm(mode.a_matrix * np.atleast_1d(t_arr)[:, None, None])
        y = mode.c_matrix @ (expo @ zk)[..., None]
        out.append(y[..., 0] if t_arr.ndim else y[0, :, 0])
    return np.array(out)


# ---------------------------------------------------------------------------
# Storage identity


def exponential_past_input(grid, quad, rate=1.0, amplitude=None):
    """``v_omega(t) = a(omega) exp(-rate t)`` on each mode's nodes (one channel)."""
    quads = _grid_quads(grid, quad)
    amp = np.ones(len(grid)) if amplitude is None else np.asarray(amplitude)
    return [a * np.exp(-rate * q.nodes)[:, None] for a, q in zip(amp, quads)]


def gaussian_past_input(grid, quad, center=2.0, width=0.5, spatial_width=1.0):
    """Gaussian in past time, Gaussian spatial profile.

    ``v_omega(t) = exp(-omega^2 spatial_width^2 / 2) exp(-(t - center)^2 / (2 width^2))``
    """
    quads = _grid_quads(grid, quad)
    w2 = np.sum(np.asarray(grid.points) ** 2, axis=1)
    amp = np.exp(-w2 * spatial_width ** 2 / 2)
    return [a * np.exp(-(q.nodes - center) ** 2 / (2 * width ** 2))[:, None]
            for a, q in zip(amp, quads)]


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


@dataclass(frozen=True)
class StorageReport:
    """Three routes to the stored energy of a past input.

    ``lhs = ||z(0)||^2``, ``rhs = int <u(-t), y(t)> dt`` and
    ``hankel_form = 2 * memory(u_bar)``, per mode and aggregated over the
    frequency grid with its quadrature weights.
    """

    lhs: float
    rhs: float
    hankel_form: float
    rel_errors: dict
    per_mode: tuple
    excluded: tuple = ()

    @property
    def max_rel_error(self):
        return max(self.rel_errors.values())

    def as_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "hankel_form": self.hankel_form,
                "rel_errors": self.rel_errors,
                "per_mode": [dict(r) for r in self.per_mode],
                "excluded": [{"omega": list(w), "status": "inconclusive",
                              "reason": why} for w, why in self.excluded]}


def storage_identity_check(family: SymbolFamily, grid: FrequencyGrid, quad, v,
                           tol=1e-9, marginal=1e-6) -> StorageReport:
    """Compare ``||z(0)||^2``, ``int <u(-t), y(t)> dt`` and ``<H u_bar, u_bar>``.

    Requires every mode to be internally of relaxation type
    (`HypothesisError` otherwise). Marginally stable modes are excluded from
    the aggregation and listed in ``excluded``.
    """
    quads = _grid_quads(grid, quad)
    if len(v) != len(grid):
        raise ValidationError("need one past input per grid point")
    rows, excluded = [], []
    tot = np.zeros(3)
    for omega, weight, q, vk in zip(grid.points, grid.weights, quads, v):
        mode = evaluate_symbol(family, omega)
        res = internal_form_test(mode, tol)
        if not res.passed:
            raise HypothesisError(
                f"mode omega={omega.tolist()} is not internally of relaxation type",
                omega=omega)
        key = tuple(omega.tolist())
        if spectral_abscissa(mode) >= -marginal:
            excluded.append((key, "marginally stable mode"))
            continue
        single = FrequencyGrid(omega[None, :], [1.0])
        vv = _node_inputs(vk, len(q), mode.dims[1])
        z0 = controllability_map(family, single, q, [vv], marginal)[0]
        lhs = float(np.vdot(z0, z0).real)
        y = observability_output(family, single, z0[None, :], q.nodes)[0]
        rhs_c = np.sum(q.weights[:, None] * vv * y.conj())
        disc = build_hankel(mode, q, marginal=marginal)
        mem, mem_imag = memory_functional(disc, vv, full_output=True)
        row = {"omega": list(key), "weight": float(weight), "lhs": lhs,
               "rhs": float(rhs_c.real), "rhs_imag": float(rhs_c.imag),
               "hankel_form": 2 * mem, "hankel_imag": 2 * mem_imag}
        rows.append(row)
        tot += weight * np.array([row["lhs"], row["rhs"], row["hankel_form"]])
    lhs, rhs, hf = (float(x) for x in tot)
    rel = {"lhs_rhs": _rel(lhs, rhs), "lhs_hankel": _rel(lhs, hf),
           "rhs_hankel": _rel(rhs, hf)}
    return StorageReport(lhs, rhs, hf, rel, tuple(rows), tuple(excluded))
