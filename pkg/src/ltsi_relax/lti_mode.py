"""Per-frequency LTI analysis.

Relaxation of the LTSI system is decided mode by mode: each frequency gives a
finite-dimensional LTI system ``(A, B, C)`` whose impulse response
``g(t) = C expm(A t) B`` must be completely monotone. Three routes are
offered here: an exact Bernstein-form check for diagonalizable real spectra,
a necessary sign test on the derivative moments ``C A^k B`` and the structural
(internal relaxation) test ``A = A^* <= 0``, ``B = C^*``. The Hankel route
lives in :mod:`ltsi_relax.hankel`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ModeOverflowError, ModeTriple, NumericalError, ValidationError

__all__ = [
    "BernsteinForm", "MomentResult", "BernsteinResult", "InternalFormResult",
    "ModeVerdict", "impulse_response", "derivative_moment", "cm_test_moments",
    "cm_test_bernstein", "internal_form_test", "spectral_abscissa",
    "analyze_mode", "psd_margin", "hermitian_part",
]

_EPS = np.finfo(float).eps


def hermitian_part(m):
    """``(M + M^*) / 2`` and the asymmetry norm ``||M - M^*||_2``."""
    m = np.asarray(m, dtype=complex)
    return (m + m.conj().T) / 2, float(np.linalg.norm(m - m.conj().T, 2))


def psd_margin(m, tol):
    """Signed slack of ``M >= 0`` under the relative-floor convention.

    A Hermitian ``M`` passes when ``lambda_min >= -tol * max(1, lambda_max)``;
    the returned margin is ``lambda_min + tol * max(1, lambda_max)``.
    """
    h, _ = hermitian_part(m)
    eig = np.linalg.eigvalsh(h)
    return float(eig[0] + tol * max(1.0, eig[-1])), float(eig[0]), float(eig[-1])


def impulse_response(mode: ModeTriple, t) -> np.ndarray:
    """``C expm(A t) B``; ``t`` may be a scalar or an array of times.

    For array ``t`` the result has shape ``t.shape + (p, m)``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError("impulse response is defined for t >= 0")
    a = mode.a_matrix
    expo = scipy.linalg.expm(a * t_arr[..., None, None])
    g = mode.c_matrix @ expo @ mode.b_matrix
    if not np.all(np.isfinite(g)):
        abscissa = spectral_abscissa(mode)
        raise ModeOverflowError(
            f"impulse response overflowed (spectral abscissa {abscissa:.3g})",
            abscissa)
    return g


def derivative_moment(mode: ModeTriple, k: int) -> np.ndarray:
    """``C A^k B``, the k-th time derivative of ``g`` at ``t = 0``."""
    if k < 0:
        raise ValidationError("moment order must be nonnegative")
    return mode.c_matrix @ np.linalg.matrix_power(mode.a_matrix, k) @ mode.b_matrix


def _require_square(mode):
    n, m, p = mode.dims
    if m != p:
        raise ValidationError(f"relaxation needs a square transfer, got p={p}, m={m}")


@dataclass(frozen=True)
class MomentResult:
    passed: bool
    first_failing_k: int | None
    margin: float
    failing_value: float | None
    asymmetry: float
    k_max: int

    @property
    def status(self):
        return "pass" if self.passed else "fail"


def cm_test_moments(mode: ModeTriple, k_max=20, tol=1e-9) -> MomentResult:
    """Sign test ``(-1)^k C A^k B >= 0`` for ``k = 0..k_max``.

    Necessary for complete monotonicity but not sufficient: it only samples
    the derivatives at ``t = 0+``. Each moment passes when the smallest
    eigenvalue of its Hermitian part is at least
    ``-tol * (1 + max |entry|)``. ``failing_value`` is that eigenvalue at the
    first violating order.
    """
    _require_square(mode)
    a, b, c = mode.a_matrix, mode.b_matrix, mode.c_matrix
    power = b.copy()
    worst = np.inf
    asym = 0.0
    for k in range(k_max + 1):
        if k:
            power = a @ power
        signed = (-1) ** k * (c @ power)
        h, defect = hermitian_part(signed)
        asym = max(asym, defect)
        lam_min = float(np.linalg.eigvalsh(h)[0])
        scale = 1.0 + float(np.max(np.abs(signed))) if signed.size else 1.0
        margin = lam_min + tol * scale
        if margin < worst:
            worst = margin
        if margin < 0:
            return MomentResult(False, k, margin, lam_min, asym, k_max)
    return MomentResult(True, None, float(worst), None, asym, k_max)


@dataclass(frozen=True, eq=False)
class BernsteinForm:
    """``g(t) = sum_i G_i exp(-p_i t)`` with ``p_i >= 0`` and ``G_i >= 0``."""

    poles: np.ndarray
    residues: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        decay = np.exp(-np.multiply.outer(t, self.poles))
        return np.tensordot(decay, self.residues, axes=(-1, 0))


@dataclass(frozen=True)
class BernsteinResult:
    status: str
    form: BernsteinForm | None
    margin: float | None
    reason: str
    condition_number: float

    @property
    def passed(self):
        return self.status == "pass"


def _cluster(values, tol):
    """Group sorted values whose neighbours differ by at most ``tol`` (relative)."""
    order = np.argsort(values.real, kind="stable")
    groups, current = [], [order[0]]
    for prev, idx in zip(order[:-1], order[1:]):
        if abs(values[idx] - values[prev]) <= tol * max(1.0, abs(values[prev])):
            current.append(idx)
        else:
            groups.append(current)
            current = [idx]
    groups.append(current)
    return groups


def cm_test_bernstein(mode: ModeTriple, tol=1e-9, cond_max=1e8) -> BernsteinResult:
    """Exact complete-monotonicity test via the eigen-expansion of ``A``.

    Applicable when ``A`` is diagonalizable with real spectrum (eigenvector
    condition number at most ``cond_max``). Residues of repeated eigenvalues
    are summed; poles whose residue vanishes are dropped since they do not
    appear in ``g``. Returns status ``"not_applicable"`` otherwise.
    """
    _require_square(mode)
    a, b, c = mode.a_matrix, mode.b_matrix, mode.c_matrix
    m = b.shape[1]
    try:
        lam, vecs = scipy.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    cond = float(np.linalg.cond(vecs))
    if not np.isfinite(cond) or cond > cond_max:
        return BernsteinResult("not_applicable", None, None,
                               f"A is (near) defective, cond(V) = {cond:.3g}", cond)
    if np.any(np.abs(lam.imag) > tol * np.maximum(1.0, np.abs(lam))):
        return BernsteinResult("not_applicable", None, None,
                               "A has non-real eigenvalues", cond)
    lam = lam.real
    left = np.linalg.solve(vecs, b)          # rows w_i^T B
    right = c @ vecs                         # columns C v_i
    # residue extraction loses ~cond(V) * eps relative accuracy
    res_tol = tol + 64 * cond * _EPS
    poles, residues = [], []
    for group in _cluster(lam, res_tol):
        g_i = sum(np.outer(right[:, i], left[i, :]) for i in group)
        poles.append(-float(np.mean(lam[group])))
        residues.append(g_i)
    scale = max([1.0] + [float(np.linalg.norm(g, 2)) for g in residues])
    keep = [i for i, g in enumerate(residues)
            if np.linalg.norm(g, 2) > res_tol * scale]
    poles = np.array([poles[i] for i in keep], dtype=float)
    residues = [residues[i] for i in keep]

    margin = np.inf
    reason = "conic combination of decaying exponentials"
    status = "pass"
    for p_i, g_i in zip(poles, residues):
        pole_margin = p_i + tol
        h, asym = hermitian_part(g_i)
        res_margin, lam_min, lam_max = psd_margin(h, res_tol)
        asym_margin = res_tol * max(1.0, lam_max) - asym
        local = min(pole_margin, res_margin, asym_margin)
        if local < margin:
            margin = local
        if local < 0 and status == "pass":
            status = "fail"
            if pole_margin < 0:
                reason = f"growing exponential: eigenvalue {-p_i:.6g} > tol"
            elif asym_margin < 0:
                reason = f"residue at pole {p_i:.6g} is not Hermitian"
            else:
                reason = f"residue at pole {p_i:.6g} has eigenvalue {lam_min:.6g} < 0"
    if not residues:
        margin = tol
        herm = np.zeros((0, m, m))
    else:
        herm = np.array([hermitian_part(g)[0] for g in residues])
    form = BernsteinForm(poles, herm) if status == "pass" else None
    return BernsteinResult(status, form, float(margin), reason, cond)


@dataclass(frozen=True)
class InternalFormResult:
    passed: bool
    hermitian_defect: float
    max_eigenvalue: float
    collocation_defect: float
    margin: float

    @property
    def status(self):
        return "pass" if self.passed else "fail"


def internal_form_test(mode: ModeTriple, tol=1e-9) -> InternalFormResult:
    """Internal relaxation: ``A = A^*``, ``A <= tol I`` and ``B = C^*``."""
    a, b, c = mode.a_matrix, mode.b_matrix, mode.c_matrix
    h, herm_defect = hermitian_part(a)
    lam_max = float(np.linalg.eigvalsh(h)[-1])
    if b.shape == c.conj().T.shape:
        colloc = float(np.linalg.norm(b - c.conj().T, 2))
    else:
        colloc = np.inf
    margin = min(tol - herm_defect, tol - lam_max, tol - colloc)
    return InternalFormResult(margin >= 0, herm_defect, lam_max, colloc, float(margin))


def spectral_abscissa(mode: ModeTriple) -> float:
    """``max Re lambda(A)``."""
    try:
        lam = scipy.linalg.eigvals(mode.a_matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return float(np.max(lam.real))


@dataclass(frozen=True)
class ModeVerdict:
    omega: tuple
    cm_by_bernstein: str
    cm_by_moments: str
    first_failing_k: int | None
    internal_form: str
    spectral_abscissa: float
    bernstein: BernsteinResult
    moments: MomentResult
    internal: InternalFormResult


def analyze_mode(mode: ModeTriple, tol=1e-9, k_max=20, cond_max=1e8) -> ModeVerdict:
    """Run the three per-mode tests and the stability check."""
    bern = cm_test_bernstein(mode, tol, cond_max)
    mom = cm_test_moments(mode, k_max, tol)
    internal = internal_form_test(mode, tol)
    return ModeVerdict(tuple(mode.omega.tolist()), bern.status, mom.status,
                       mom.first_failing_k, internal.status,
                       spectral_abscissa(mode), bern, mom, internal)
