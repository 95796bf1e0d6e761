"""Closed-form diffusion: heat kernel, its spatial spectrum, Gaussian solutions.

Used as ground truth by the tests of the other modules and to produce the two
heat-kernel tables (profiles in space at fixed times, curves in time at fixed
locations).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import ValidationError

__all__ = [
    "DiffusionParams", "heat_kernel", "spectral_kernel", "gaussian_solution",
    "peak_time", "figure2_datasets", "check_figure2", "write_table_csv",
    "DEFAULT_TIMES", "DEFAULT_LOCATIONS",
]

DEFAULT_TIMES = (0.05, 0.2, 0.5, 1.0)
DEFAULT_LOCATIONS = (0.0, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class DiffusionParams:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("diffusivity alpha must be positive")


def heat_kernel(params: DiffusionParams, t, x):
    """``(4 pi alpha t)^(-1/2) exp(-x^2 / (4 alpha t))``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValidationError("heat kernel is defined for t > 0")
    x = np.asarray(x, dtype=float)
    a = params.alpha
    return np.exp(-x ** 2 / (4 * a * t)) / np.sqrt(4 * np.pi * a * t)


def spectral_kernel(params: DiffusionParams, t, omega):
    """``exp(-alpha omega^2 t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("spectral kernel is defined for t >= 0")
    return np.exp(-params.alpha * np.asarray(omega, dtype=float) ** 2 * t)


def gaussian_solution(params: DiffusionParams, sigma0, t, x):
    """Unit-mass Gaussian of variance ``sigma0^2 + 2 alpha t``."""
    if not sigma0 > 0:
        raise ValidationError("sigma0 must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("t must be nonnegative")
    var = sigma0 ** 2 + 2 * params.alpha * t
    return np.exp(-np.asarray(x, dtype=float) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)


def peak_time(params: DiffusionParams, x):
    """Time at which ``t -> g(t, x)`` peaks: ``x^2 / (2 alpha)``."""
    return np.asarray(x, dtype=float) ** 2 / (2 * params.alpha)


def figure2_datasets(params: DiffusionParams = DiffusionParams(), times=DEFAULT_TIMES,
                     locations=DEFAULT_LOCATIONS, x_range=(-3.0, 3.0),
                     t_range=(0.01, 2.0), num=301):
    """Tables of the heat kernel: space profiles and time curves.

    Returns ``(table_a, table_b)``, each an ``(rows, 3)`` array with columns
    ``t, x, g``. Table (a) samples ``x`` over ``x_range`` for each time,
    table (b) samples ``t`` over ``t_range`` for each location. ``x = 0`` is
    accepted as a reference curve in table (b).
    """
    if min(times) <= 0 or t_range[0] <= 0:
        raise ValidationError("times must be positive")
    if min(locations) < 0:
        raise ValidationError("locations must be nonnegative")
    xs = np.linspace(x_range[0], x_range[1], num)
    ts = np.linspace(t_range[0], t_range[1], num)
    table_a = np.concatenate([
        np.column_stack([np.full(num, t), xs, heat_kernel(params, t, xs)])
        for t in times])
    table_b = np.concatenate([
        np.column_stack([ts, np.full(num, x), heat_kernel(params, ts, x)])
        for x in locations])
    return table_a, table_b


def check_figure2(table_a, table_b, params: DiffusionParams = DiffusionParams()):
    """Qualitative shape checks of the two tables.

    Returns a dict with: ``flattening`` (profile maxima strictly decrease in
    t), and for each location in table (b) the sampled peak time, the
    analytic peak time, the grid spacing, whether the curve is non-monotone
    (interior maximum) and whether it is monotone decreasing.
    """
    out = {}
    times = np.unique(table_a[:, 0])
    maxima = [table_a[table_a[:, 0] == t, 2].max() for t in times]
    out["profile_maxima"] = [float(v) for v in maxima]
    out["flattening"] = bool(np.all(np.diff(maxima) < 0))
    curves = {}
    for x in np.unique(table_b[:, 1]):
        rows = table_b[table_b[:, 1] == x]
        ts, g = rows[:, 0], rows[:, 2]
        k = int(np.argmax(g))
        curves[float(x)] = {
            "peak_time": float(ts[k]),
            "expected_peak_time": float(peak_time(params, x)),
            "grid_spacing": float(ts[1] - ts[0]),
            "interior_maximum": bool(0 < k < len(ts) - 1),
            "monotone_decreasing": bool(np.all(np.diff(g) < 0)),
        }
    out["curves"] = curves
    return out


def write_table_csv(table, path=None):
    """Write ``t,x,g`` rows; returns the text when ``path`` is None."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "x", "g"])
    for row in table:
        writer.writerow([format(float(v), ".17g") for v in row])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return None
