"""Domain types shared by the analysis modules.

An LTSI system is handled through its spatial Fourier symbol: a map
``omega -> (A, B, C)`` of complex matrices, one small LTI system per spatial
frequency. This module holds that representation (`SymbolFamily`), the
per-frequency triple (`ModeTriple`), frequency grids, sampled space-time
fields and the `Certificate` record that every test feeds into.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "LTSIError", "ValidationError", "ExtrapolationError",
    "UnsupportedDimensionError", "StabilityError", "MarginalModeError",
    "NumericalError", "ModeOverflowError", "StructuralError",
    "ModeTriple", "TabulatedSample", "SymbolFamily", "FrequencyGrid",
    "SpatioTemporalField", "Evidence", "Certificate", "Finding",
    "Tolerances", "evaluate_symbol", "validate_family", "make_frequency_grid",
    "diffusion", "shifted_diffusion", "damped_oscillator",
    "diagonal_exponential", "tabulated", "family_from_dict", "family_to_dict",
    "load_family", "encode_complex", "decode_complex",
]

SUPPORTED_SPATIAL_DIM = 1


class LTSIError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(LTSIError, ValueError):
    """Malformed input: wrong shapes, non-finite entries, mismatched grids."""


class ExtrapolationError(ValidationError):
    """Query outside the hull of a tabulated symbol."""


class UnsupportedDimensionError(LTSIError, NotImplementedError):
    pass


class StabilityError(LTSIError, ValueError):
    """A mode is not exponentially stable but the operation requires it."""


class MarginalModeError(StabilityError):
    """Spectral abscissa too close to zero to bound a time horizon."""


class NumericalError(LTSIError, ArithmeticError):
    pass


class ModeOverflowError(NumericalError):
    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class StructuralError(LTSIError, ValueError):
    """A structural hypothesis (e.g. internal relaxation) is violated."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


# ---------------------------------------------------------------------------
# Tolerances


@dataclass(frozen=True)
class Tolerances:
    """Tolerance set echoed into every certificate.

    ``tol`` is the generic PSD / equality tolerance; ``marginal`` is the
    abscissa magnitude below which a mode counts as marginally stable and is
    excluded from Hankel-based tests.
    """

    tol: float = 1e-9
    k_max: int = 20
    cond_max: float = 1e8
    marginal: float = 1e-6
    eps_tail: float = 1e-10
    storage: float = 1e-4
    tail_ratio: float = 1e-6
    growth_factor: float = 10.0

    def replace(self, **overrides) -> "Tolerances":
        known = set(self.as_dict())
        unknown = set(overrides) - known
        if unknown:
            raise ValidationError(f"unknown tolerance name(s): {sorted(unknown)}")
        values = self.as_dict()
        for key, value in overrides.items():
            values[key] = int(value) if key == "k_max" else float(value)
        return Tolerances(**values)

    def as_dict(self) -> dict:
        return {
            "tol": self.tol, "k_max": self.k_max, "cond_max": self.cond_max,
            "marginal": self.marginal, "eps_tail": self.eps_tail,
            "storage": self.storage, "tail_ratio": self.tail_ratio,
            "growth_factor": self.growth_factor,
        }


# ---------------------------------------------------------------------------
# Mode triples and symbol families


def _as_matrix(x, name) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=complex))
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ModeTriple:
    """State-space matrices ``(A, B, C)`` of the LTI system at one frequency."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    c_matrix: np.ndarray
    omega: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        a = _as_matrix(self.a_matrix, "A")
        b = _as_matrix(self.b_matrix, "B")
        c = _as_matrix(self.c_matrix, "C")
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValidationError(f"A must be square, got {a.shape}")
        n = a.shape[0]
        if b.shape[0] != n:
            raise ValidationError(f"B must have {n} rows, got {b.shape}")
        if c.shape[1] != n:
            raise ValidationError(f"C must have {n} columns, got {c.shape}")
        for name, arr in (("A", a), ("B", b), ("C", c), ("omega", omega)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} has non-finite entries")
        for arr in (a, b, c, omega):
            arr.setflags(write=False)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "c_matrix", c)
        object.__setattr__(self, "omega", omega)

    @property
    def A(self):
        return self.a_matrix

    @property
    def B(self):
        return self.b_matrix

    @property
    def C(self):
        return self.c_matrix

    @property
    def dims(self):
        """``(n, m, p)``."""
        return (self.a_matrix.shape[0], self.b_matrix.shape[1],
                self.c_matrix.shape[0])


@dataclass(frozen=True, eq=False)
class TabulatedSample:
    """Raw ``(omega, A, B, C)`` sample; validated lazily by `validate_family`."""

    omega: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def _diffusion(omega, alpha):
    w2 = float(np.dot(omega, omega))
    return [[-alpha * w2]], [[1.0]], [[1.0]]


def _shifted_diffusion(omega, alpha, kappa):
    w2 = float(np.dot(omega, omega))
    return [[-alpha * w2 - kappa]], [[1.0]], [[1.0]]


def _damped_oscillator(omega, zeta, omega0):
    # natural frequency stiffens with |omega|; damping ratio is held at zeta
    wn2 = omega0 ** 2 + float(np.dot(omega, omega))
    wn = math.sqrt(wn2)
    a = [[0.0, 1.0], [-wn2, -2.0 * zeta * wn]]
    return a, [[0.0], [1.0]], [[0.0, 1.0]]


def _diagonal_exponential(omega, terms):
    w2 = float(np.dot(omega, omega))
    poles = [p0 + p2 * w2 for p0, p2, _ in terms]
    residues = [r for _, _, r in terms]
    b = [[math.sqrt(abs(r))] for r in residues]
    c = [[math.copysign(math.sqrt(abs(r)), r) for r in residues]]
    return np.diag([-p for p in poles]), b, c


_PARAMETRIC: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "diffusion": (_diffusion, ("alpha",)),
    "shifted_diffusion": (_shifted_diffusion, ("alpha", "kappa")),
    "damped_oscillator": (_damped_oscillator, ("zeta", "omega0")),
    "diagonal_exponential": (_diagonal_exponential, ("terms",)),
}


@dataclass(frozen=True, eq=False)
class SymbolFamily:
    """Frequency-domain representation ``omega -> ModeTriple`` of an LTSI system.

    Either parametric (``kind`` names a builtin, ``params`` holds its
    parameters) or ``kind == "tabulated"`` with samples sorted by omega.
    Construction is lenient; `validate_family` reports violated invariants.
    """

    kind: str
    params: dict = field(default_factory=dict)
    samples: tuple = ()
    dims: tuple = (1, 1, 1, 1)
    continuity_note: str = ""

    @property
    def is_tabulated(self):
        return self.kind == "tabulated"

    @property
    def spatial_dim(self):
        return self.dims[3]


def diffusion(alpha=1.0) -> SymbolFamily:
    """``A = -alpha |omega|^2``, ``B = C = 1``."""
    return SymbolFamily("diffusion", {"alpha": float(alpha)}, dims=(1, 1, 1, 1),
                        continuity_note="polynomial in omega")


def shifted_diffusion(alpha=1.0, kappa=0.5) -> SymbolFamily:
    """Diffusion with uniform decay: ``A = -alpha |omega|^2 - kappa``."""
    return SymbolFamily("shifted_diffusion",
                        {"alpha": float(alpha), "kappa": float(kappa)},
                        dims=(1, 1, 1, 1),
                        continuity_note="polynomial in omega")


def damped_oscillator(zeta=0.1, omega0=1.0) -> SymbolFamily:
    """Velocity-output oscillator, the canonical non-relaxation family.

    At frequency ``omega`` the natural frequency is
    ``wn = sqrt(omega0**2 + |omega|**2)`` and
    ``A = [[0, 1], [-wn**2, -2 zeta wn]]``, ``B = [0; 1]``, ``C = [0, 1]``.
    """
    return SymbolFamily("damped_oscillator",
                        {"zeta": float(zeta), "omega0": float(omega0)},
                        dims=(2, 1, 1, 1), continuity_note="continuous in omega")


def diagonal_exponential(terms) -> SymbolFamily:
    """Bernstein-form family ``g_omega(t) = sum_i r_i exp(-p_i(omega) t)``.

    ``terms`` is a sequence of ``(p0, p2, r)``: pole curve
    ``p_i(omega) = p0 + p2 |omega|^2`` and scalar residue ``r``. Nonnegative
    residues give a collocated realization (``B = C^*``); a negative residue
    flips the sign of the corresponding entry of ``C``.
    """
    terms = tuple((float(p0), float(p2), float(r)) for p0, p2, r in terms)
    if not terms:
        raise ValidationError("diagonal_exponential needs at least one term")
    return SymbolFamily("diagonal_exponential", {"terms": terms},
                        dims=(len(terms), 1, 1, 1),
                        continuity_note="polynomial pole curves")


def tabulated(samples, continuity_note="piecewise-linear interpolation") -> SymbolFamily:
    """Build a tabulated family from ``(omega, A, B, C)`` tuples.

    Samples are kept as given (sorted by omega when possible) so that
    `validate_family` can report defects instead of failing here.
    """
    raw = []
    for omega, a, b, c in samples:
        raw.append(TabulatedSample(np.atleast_1d(np.asarray(omega, dtype=float)),
                                   np.atleast_2d(np.asarray(a, dtype=complex)),
                                   np.atleast_2d(np.asarray(b, dtype=complex)),
                                   np.atleast_2d(np.asarray(c, dtype=complex))))
    try:
        raw.sort(key=lambda smp: tuple(smp.omega))
    except TypeError:
        pass
    if raw:
        first = raw[0]
        dims = (first.A.shape[0], first.B.shape[1], first.C.shape[0],
                first.omega.size)
    else:
        dims = (0, 0, 0, 1)
    return SymbolFamily("tabulated", samples=tuple(raw), dims=dims,
                        continuity_note=continuity_note)


def _check_omega(family, omega):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.ndim != 1 or omega.size != family.spatial_dim:
        raise ValidationError(
            f"omega must have length s={family.spatial_dim}, got {omega.shape}")
    if not np.all(np.isfinite(omega)):
        raise ValidationError("omega must be finite")
    return omega


def evaluate_symbol(family: SymbolFamily, omega) -> ModeTriple:
    """Return the mode triple at frequency ``omega``.

    Tabulated families are interpolated componentwise-linearly between the
    neighbouring samples; queries outside the tabulated range raise
    `ExtrapolationError`.
    """
    omega = _check_omega(family, omega)
    if family.is_tabulated:
        return _evaluate_tabulated(family, omega)
    try:
        fn, names = _PARAMETRIC[family.kind]
    except KeyError:
        raise ValidationError(f"unknown symbol family kind {family.kind!r}") from None
    a, b, c = fn(omega, *(family.params[name] for name in names))
    mode = ModeTriple(a, b, c, omega)
    if mode.dims != tuple(family.dims[:3]):
        raise ValidationError(
            f"family declares dims {family.dims[:3]}, mode has {mode.dims}")
    return mode


def _evaluate_tabulated(family, omega):
    samples = family.samples
    if not samples:
        raise ValidationError("tabulated family has no samples")
    for smp in samples:
        if np.array_equal(smp.omega, omega):
            return ModeTriple(smp.A, smp.B, smp.C, omega)
    if family.spatial_dim != SUPPORTED_SPATIAL_DIM:
        raise UnsupportedDimensionError(
            "interpolation of tabulated symbols is implemented for s = 1 only")
    grid = np.array([smp.omega[0] for smp in samples])
    w = omega[0]
    if w < grid[0] or w > grid[-1]:
        raise ExtrapolationError(
            f"omega={w} outside tabulated hull [{grid[0]}, {grid[-1]}]")
    k = int(np.searchsorted(grid, w, side="right")) - 1
    k = min(k, len(samples) - 2)
    lo, hi = samples[k], samples[k + 1]
    for name in ("A", "B", "C"):
        if getattr(lo, name).shape != getattr(hi, name).shape:
            raise ValidationError(
                f"samples at omega={lo.omega[0]} and {hi.omega[0]} "
                f"have different {name} shapes")
    theta = (w - grid[k]) / (grid[k + 1] - grid[k])
    a = (1 - theta) * lo.A + theta * hi.A
    b = (1 - theta) * lo.B + theta * hi.B
    c = (1 - theta) * lo.C + theta * hi.C
    return ModeTriple(a, b, c, omega)


@dataclass(frozen=True)
class Finding:
    kind: str
    location: str
    message: str


def validate_family(family: SymbolFamily) -> list[Finding]:
    """Check the `SymbolFamily` invariants; one finding per violation."""
    findings: list[Finding] = []
    if not family.is_tabulated:
        if family.kind not in _PARAMETRIC:
            return [Finding("unknown-kind", "kind", f"unknown kind {family.kind!r}")]
        _, names = _PARAMETRIC[family.kind]
        missing = [n for n in names if n not in family.params]
        if missing:
            return [Finding("missing-parameter", "params", f"missing {missing}")]
        for name in names:
            value = family.params[name]
            flat = np.ravel(np.asarray(value, dtype=float))
            if not np.all(np.isfinite(flat)):
                findings.append(Finding("non-finite", f"params.{name}",
                                        f"parameter {name} is not finite"))
        if findings:
            return findings
        for probe in (0.0, 1.0, -3.0, 1e3):
            omega = np.full(family.spatial_dim, probe)
            try:
                evaluate_symbol(family, omega)
            except LTSIError as exc:
                findings.append(Finding("evaluation", f"omega={probe}", str(exc)))
                break
        return findings

    samples = family.samples
    if not samples:
        return [Finding("empty", "samples", "tabulated family has no samples")]
    ref = None
    for i, smp in enumerate(samples):
        loc = f"samples[{i}] (omega={smp.omega.tolist()})"
        a, b, c = smp.A, smp.B, smp.C
        shape_ok = (a.ndim == 2 and a.shape[0] == a.shape[1]
                    and b.shape[0] == a.shape[0] and c.shape[1] == a.shape[0])
        if not shape_ok:
            findings.append(Finding("inconsistent-shape", loc,
                                    f"A{a.shape}, B{b.shape}, C{c.shape} do not fit"))
        else:
            dims = (a.shape[0], b.shape[1], c.shape[0])
            if ref is None:
                ref = dims
            elif dims != ref:
                findings.append(Finding("dimension-mismatch", loc,
                                        f"(n, m, p) = {dims}, expected {ref}"))
        if smp.omega.size != family.spatial_dim:
            findings.append(Finding("dimension-mismatch", loc,
                                    f"omega has length {smp.omega.size}"))
        arrays = (smp.omega, a, b, c)
        if not all(np.all(np.isfinite(x)) for x in arrays):
            findings.append(Finding("non-finite", loc, "sample has NaN/Inf entries"))
    keys = [tuple(smp.omega) for smp in samples]
    for i in range(1, len(keys)):
        if not keys[i - 1] < keys[i]:
            findings.append(Finding("not-sorted", f"samples[{i}]",
                                    "samples are not strictly sorted by omega"))
    return findings


# ---------------------------------------------------------------------------
# Grids and fields


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Quadrature grid for integrals over frequency.

    ``points`` has shape ``(K, s)``; ``weights`` are the positive quadrature
    weights for ``d omega``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.shape[0] != weights.size:
            raise ValidationError("points and weights differ in length")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("grid weights must be positive and finite")
        if len({tuple(p) for p in points}) != points.shape[0]:
            raise ValidationError("grid points must be pairwise distinct")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.points.shape[0]


def make_frequency_grid(omega_max, count, s=1) -> FrequencyGrid:
    """Uniform symmetric grid on ``[-omega_max, omega_max]^s``, trapezoid weights.

    >>> g = make_frequency_grid(1.0, 3)
    >>> g.points.ravel().tolist(), g.weights.tolist()
    ([-1.0, 0.0, 1.0], [0.5, 1.0, 0.5])
    """
    if s != SUPPORTED_SPATIAL_DIM:
        raise UnsupportedDimensionError(f"spatial dimension s={s} is not supported")
    if int(count) != count or count < 2:
        raise ValidationError("count must be an integer >= 2")
    if not omega_max > 0:
        raise ValidationError("omega_max must be positive")
    count = int(count)
    points = np.linspace(-omega_max, omega_max, count)
    h = 2.0 * omega_max / (count - 1)
    weights = np.full(count, h)
    weights[0] = weights[-1] = h / 2
    return FrequencyGrid(points[:, None], weights)


@dataclass(frozen=True, eq=False)
class SpatioTemporalField:
    """Samples of ``u(t, x)`` on a uniform grid, ``values[time, space, channel]``."""

    values: np.ndarray
    dt: float
    dx: float
    t0: float = 0.0
    x0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3:
            raise ValidationError("field values must be indexed (time, space, channel)")
        if not (self.dt > 0 and self.dx > 0):
            raise ValidationError("dt and dx must be positive")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.shape[0])

    @property
    def positions(self):
        return self.x0 + self.dx * np.arange(self.values.shape[1])


# ---------------------------------------------------------------------------
# Certificates


@dataclass(frozen=True)
class Evidence:
    """One per-mode check. ``margin >= 0`` means the check passed.

    ``margin`` is None for checks that did not run (``status`` is then
    ``"inconclusive"`` or ``"not_applicable"``).
    """

    omega: tuple
    test: str
    status: str
    margin: float | None = None
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {"omega": list(self.omega), "test": self.test,
                "status": self.status, "margin": self.margin,
                "details": self.details}


@dataclass(frozen=True)
class Certificate:
    property: str
    verdict: str
    evidence: tuple
    tolerances: dict
    worst_margin: float | None
    notes: tuple = ()

    @classmethod
    def from_evidence(cls, prop, evidence, tolerances, notes=()):
        """Derive verdict and worst margin from the evidence alone.

        Fail iff some margin is negative; otherwise inconclusive if any check
        was inconclusive; otherwise pass.
        """
        evidence = tuple(evidence)
        margins = [e.margin for e in evidence if e.margin is not None]
        worst = min(margins) if margins else None
        if any(m < 0 for m in margins):
            verdict = "fail"
        elif any(e.status == "inconclusive" for e in evidence) or not margins:
            verdict = "inconclusive"
        else:
            verdict = "pass"
        if isinstance(tolerances, Tolerances):
            tolerances = tolerances.as_dict()
        return cls(prop, verdict, evidence, dict(tolerances), worst, tuple(notes))

    def failing(self):
        return [e for e in self.evidence if e.margin is not None and e.margin < 0]

    def as_dict(self):
        return {
            "property": self.property,
            "verdict": self.verdict,
            "worst_margin": self.worst_margin,
            "tolerances": self.tolerances,
            "notes": list(self.notes),
            "evidence": [e.as_dict() for e in self.evidence],
        }


# ---------------------------------------------------------------------------
# JSON encoding


def encode_complex(matrix) -> list:
    """Nested lists of ``[re, im]`` pairs."""
    arr = np.asarray(matrix, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def decode_complex(data) -> np.ndarray:
    """Inverse of `encode_complex`; plain real nested lists are accepted too."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim >= 1 and arr.shape[-1] == 2 and arr.ndim == 3:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(complex)


def family_to_dict(family: SymbolFamily) -> dict:
    n, m, p, s = family.dims
    out: dict[str, Any] = {"kind": family.kind}
    if family.is_tabulated:
        out["samples"] = [
            {"omega": smp.omega.tolist(), "A": encode_complex(smp.A),
             "B": encode_complex(smp.B), "C": encode_complex(smp.C)}
            for smp in family.samples]
    else:
        for key, value in family.params.items():
            out[key] = [list(t) for t in value] if key == "terms" else value
    out["dims"] = {"n": n, "m": m, "p": p, "s": s}
    return out


def family_from_dict(data: dict) -> SymbolFamily:
    """Parse the JSON form of a symbol family (see README for the schema)."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ValidationError("symbol family config needs a 'kind' field")
    kind = data["kind"]
    try:
        if kind == "tabulated":
            samples = [(smp["omega"], decode_complex(smp["A"]),
                        decode_complex(smp["B"]), decode_complex(smp["C"]))
                       for smp in data["samples"]]
            family = tabulated(samples)
        elif kind == "diffusion":
            family = diffusion(data.get("alpha", 1.0))
        elif kind == "shifted_diffusion":
            family = shifted_diffusion(data.get("alpha", 1.0), data.get("kappa", 0.5))
        elif kind == "damped_oscillator":
            family = damped_oscillator(data.get("zeta", 0.1), data.get("omega0", 1.0))
        elif kind == "diagonal_exponential":
            family = diagonal_exponential(data["terms"])
        else:
            raise ValidationError(f"unknown symbol family kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed {kind!r} family config: {exc}") from exc
    declared = data.get("dims")
    if declared is not None:
        dims = tuple(int(declared[k]) for k in ("n", "m", "p", "s"))
        if dims[3] != SUPPORTED_SPATIAL_DIM:
            raise UnsupportedDimensionError(f"spatial dimension s={dims[3]}")
        if dims != tuple(family.dims):
            raise ValidationError(f"declared dims {dims} != family dims {family.dims}")
    return family


def load_family(path) -> SymbolFamily:
    with open(path) as fh:
        data = json.load(fh)
    return family_from_dict(data.get("family", data))


def modes_on_grid(family: SymbolFamily, grid: FrequencyGrid) -> list[ModeTriple]:
    return [evaluate_symbol(family, w) for w in grid.points]


def as_points(omegas: Sequence) -> np.ndarray:
    pts = np.asarray(omegas, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts
