"""Impedance-passivity certificates, checked frequency by frequency.

A certificate is a Hermitian ``Q_omega >= 0`` per grid mode with
``C = B^* Q`` and ``A^* Q + Q A <= 0``; the storage is ``S(z) = <Q z, z>``.
Internally relaxation-type families always admit ``Q = I``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (Certificate, Evidence, FrequencyGrid, LTSIError, ModeTriple,
                   StabilityError, StructuralError, SymbolFamily, Tolerances, ValidationError,
                   as_points, decode_complex, encode_complex, evaluate_symbol)
from .lti_mode import hermitian_part, internal_form_test, spectral_abscissa

__all__ = [
    "PassivityCertificate", "ModeMargins", "CertificateSynthesisError",
    "UnderdeterminedError", "CertificateInconsistencyError",
    "verify_certificate", "identity_certificate", "lyapunov_candidate",
    "storage_value", "aggregate_storage", "mode_margins",
]


class CertificateSynthesisError(LTSIError):
    """The heuristic did not produce a valid Q; passivity is not disproved."""

    def __init__(self, message, margins=None, q=None):
        super().__init__(message)
        self.margins = margins
        self.q = q


class UnderdeterminedError(LTSIError, ValueError):
    pass


class CertificateInconsistencyError(LTSIError, ValueError):
    pass


@dataclass(frozen=True)
class ModeMargins:
    """Raw per-mode quantities: ``||C - B^*Q||``, ``lambda_max(A^*Q + QA)``,
    ``lambda_min(Q)``."""

    collocation: float
    dissipation: float
    q_min: float

    def violations(self):
        """Amounts by which each condition is violated (0 when satisfied)."""
        return (self.collocation, max(0.0, self.dissipation), max(0.0, -self.q_min))


@dataclass(frozen=True, eq=False)
class PassivityCertificate:
    omegas: np.ndarray
    q: np.ndarray
    margins: tuple = field(default=())

    def __post_init__(self):
        omegas = as_points(self.omegas)
        q = np.asarray(self.q, dtype=complex)
        if q.ndim != 3 or q.shape[1] != q.shape[2] or q.shape[0] != omegas.shape[0]:
            raise ValidationError("Q must be a stack of square matrices, one per omega")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "q", q)

    @property
    def sup_norm(self):
        return float(max(np.linalg.norm(qk, 2) for qk in self.q))

    def index_of(self, omega, atol=1e-12):
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        hits = np.flatnonzero(np.all(np.abs(self.omegas - omega) <= atol, axis=1))
        if hits.size == 0:
            raise ValidationError(f"omega={omega.tolist()} is not on the certificate grid")
        return int(hits[0])

    def to_dict(self):
        return {"modes": [{"omega": w.tolist(), "Q": encode_complex(qk)}
                          for w, qk in zip(self.omegas, self.q)]}

    @classmethod
    def from_dict(cls, data):
        try:
            modes = data["modes"]
            omegas = [m["omega"] for m in modes]
            q = [np.atleast_2d(decode_complex(m["Q"])) for m in modes]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed certificate: {exc}") from exc
        return cls(np.asarray(omegas, dtype=float), np.array(q))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def mode_margins(mode: ModeTriple, q) -> ModeMargins:
    a, b, c = mode.a_matrix, mode.b_matrix, mode.c_matrix
    q = np.asarray(q, dtype=complex)
    if q.shape != a.shape:
        raise ValidationError(f"Q has shape {q.shape}, A has shape {a.shape}")
    colloc = float(np.linalg.norm(c - b.conj().T @ q, 2))
    lyap, _ = hermitian_part(a.conj().T @ q + q @ a)
    q_herm, _ = hermitian_part(q)
    return ModeMargins(colloc, float(np.linalg.eigvalsh(lyap)[-1]),
                       float(np.linalg.eigvalsh(q_herm)[0]))


def verify_certificate(family: SymbolFamily, grid: FrequencyGrid,
                       cert: PassivityCertificate, tol=1e-9,
                       tolerances: Tolerances | None = None) -> Certificate:
    """Check ``Q >= 0``, ``C = B^*Q`` and ``A^*Q + QA <= 0`` on every grid mode.

    Evidence margins are signed slacks: ``lambda_min(Q) + tol``,
    ``tol (1 + ||C||) - ||C - B^*Q||`` and ``tol - lambda_max(A^*Q + QA)``.
    Boundedness of ``sup ||Q||`` cannot be witnessed on a finite grid; a note
    is added when the boundary modes' ``||Q||`` exceeds the interior median
    by the growth factor.
    """
    tolerances = (tolerances or Tolerances()).replace(tol=tol)
    evidence, norms = [], []
    for omega in grid.points:
        try:
            k = cert.index_of(omega)
        except ValidationError:
            raise ValidationError(
                f"certificate has no Q for grid mode omega={omega.tolist()}") from None
        mode = evaluate_symbol(family, omega)
        n, m, p = mode.dims
        if m != p:
            raise ValidationError("impedance passivity needs m = p")
        mm = mode_margins(mode, cert.q[k])
        c_norm = float(np.linalg.norm(mode.c_matrix, 2))
        norms.append(float(np.linalg.norm(cert.q[k], 2)))
        key = tuple(omega.tolist())
        raw = {"collocation": mm.collocation, "dissipation": mm.dissipation,
               "q_min": mm.q_min}
        evidence += [
            Evidence(key, "q_psd", _status(mm.q_min + tol), mm.q_min + tol, raw),
            Evidence(key, "collocation", _status(tol * (1 + c_norm) - mm.collocation),
                     tol * (1 + c_norm) - mm.collocation, raw),
            Evidence(key, "dissipation", _status(tol - mm.dissipation),
                     tol - mm.dissipation, raw),
        ]
    notes = [f"sup_norm={max(norms):.17g} over the grid; boundedness as "
             "omega -> infinity is not certified by a finite grid"]
    warning = _growth_warning(grid, norms, tolerances.growth_factor)
    if warning:
        notes.append(warning)
    return Certificate.from_evidence("passivity", evidence, tolerances, notes)


def _status(margin):
    return "pass" if margin >= 0 else "fail"


def _growth_warning(grid, norms, factor):
    if len(norms) < 3:
        return None
    radius = np.linalg.norm(grid.points, axis=1)
    boundary = radius >= radius.max() * (1 - 1e-12)
    interior = np.asarray(norms)[~boundary]
    if interior.size == 0:
        return None
    median = float(np.median(interior))
    peak = float(np.max(np.asarray(norms)[boundary]))
    if peak > factor * median:
        return (f"growth warning: boundary ||Q|| = {peak:.6g} exceeds "
                f"{factor:g} x interior median {median:.6g}")
    return None


def identity_certificate(family: SymbolFamily, grid: FrequencyGrid,
                         tol=1e-9) -> PassivityCertificate:
    """``Q_omega = I`` for internally relaxation-type families.

    Raises `StructuralError` at the first mode violating internal relaxation.
    """
    margins = []
    for omega in grid.points:
        mode = evaluate_symbol(family, omega)
        res = internal_form_test(mode, tol)
        if not res.passed:
            raise StructuralError(
                f"mode omega={omega.tolist()} is not internally of relaxation type "
                f"(hermitian defect {res.hermitian_defect:.3g}, "
                f"lambda_max {res.max_eigenvalue:.3g}, "
                f"||B - C^*|| {res.collocation_defect:.3g})", omega=omega)
        margins.append(mode_margins(mode, np.eye(mode.dims[0])))
    n = family.dims[0]
    q = np.broadcast_to(np.eye(n, dtype=complex), (len(grid), n, n)).copy()
    return PassivityCertificate(grid.points, q, tuple(margins))


def lyapunov_candidate(mode: ModeTriple, tol=1e-9) -> np.ndarray:
    """Least-norm Hermitian ``Q`` with ``B^* Q = C``, then checked for passivity.

    With ``P = B (B^*B)^{-1}``:
    ``Q = C^* P^* + P C - P (C B) P^*``. Raises `UnderdeterminedError` for
    rank-deficient ``B`` and `CertificateSynthesisError` (with margins) when
    the candidate violates ``C = B^*Q``, ``Q >= 0`` or ``A^*Q + QA <= 0`` —
    which does not disprove passivity.
    """
    a, b, c = mode.a_matrix, mode.b_matrix, mode.c_matrix
    n, m, p = mode.dims
    if m != p:
        raise ValidationError("impedance passivity needs m = p")
    if spectral_abscissa(mode) >= 0:
        raise StabilityError("candidate synthesis needs an exponentially stable mode")
    if np.linalg.matrix_rank(b) < m:
        raise UnderdeterminedError(
            "B is rank deficient: C = B^*Q does not pin down Q on range(B), "
            "so the least-norm candidate is not unique")
    gram_inv = np.linalg.inv(b.conj().T @ b)
    proj = b @ gram_inv
    q = c.conj().T @ proj.conj().T + proj @ c - proj @ (c @ b) @ proj.conj().T
    q = (q + q.conj().T) / 2
    mm = mode_margins(mode, q)
    c_norm = float(np.linalg.norm(c, 2))
    if (mm.collocation > tol * (1 + c_norm) or mm.q_min < -tol
            or mm.dissipation > tol):
        raise CertificateSynthesisError(
            f"least-norm candidate fails: ||C - B^*Q|| = {mm.collocation:.3g}, "
            f"lambda_min(Q) = {mm.q_min:.3g}, "
            f"lambda_max(A^*Q + QA) = {mm.dissipation:.3g}", margins=mm, q=q)
    return q


def storage_value(cert: PassivityCertificate, omega, z, tol=1e-9) -> float:
    """``Re <Q_omega z, z>``; tiny negatives (>= -tol) are clamped to 0."""
    q = cert.q[cert.index_of(omega)]
    z = np.asarray(z, dtype=complex).ravel()
    if z.size != q.shape[0]:
        raise ValidationError(f"state has {z.size} entries, Q is {q.shape}")
    value = float(np.real(np.vdot(z, q @ z)))
    if value < 0:
        scale = tol * max(1.0, float(np.vdot(z, z).real))
        if value < -scale:
            raise CertificateInconsistencyError(
                f"storage is negative ({value:.3g}); Q is not PSD")
        value = 0.0
    return value


def aggregate_storage(cert: PassivityCertificate, grid: FrequencyGrid, z_modes,
                      tol=1e-9) -> float:
    """Quadrature of the per-mode storage over the frequency grid."""
    if len(z_modes) != len(grid):
        raise ValidationError("need one state per grid point")
    return float(sum(w * storage_value(cert, omega, z, tol)
                     for omega, w, z in zip(grid.points, grid.weights, z_modes)))
