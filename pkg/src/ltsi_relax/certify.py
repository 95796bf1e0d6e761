"""Per-mode relaxation certification over a frequency grid.

Each grid mode gets the moment screen, the Bernstein test, the structural
test and, when exponentially stable, the Hankel PSD test. The relaxation
verdict needs every applicable check to pass on every mode; marginally
stable modes leave the Hankel check inconclusive.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (Certificate, Evidence, FrequencyGrid, SymbolFamily, Tolerances,
                   evaluate_symbol, family_to_dict)
from .hankel import build_hankel, build_quadrature, hankel_psd_test
from .lti_mode import ModeVerdict, analyze_mode

__all__ = ["ModeReport", "CertificationReport", "certify_family", "thread_count",
           "SCHEMA"]

SCHEMA = "ltsi-relax/1"


def thread_count():
    """Worker cap from ``LTSI_RELAX_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("LTSI_RELAX_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, threads=None):
    """Order-preserving map; results do not depend on the thread count."""
    threads = thread_count() if threads is None else threads
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ModeReport:
    verdict: ModeVerdict
    hankel: object | None          # HankelTest, or None when excluded
    hankel_scale: float | None     # largest |eigenvalue| of the discretization
    quad_nodes: int
    exclusion: str | None


@dataclass(frozen=True)
class CertificationReport:
    relaxation: Certificate
    internal_relaxation: Certificate
    exponential_stability: Certificate
    modes: tuple
    family: SymbolFamily
    grid: FrequencyGrid
    quadrature: dict

    @property
    def verdict(self):
        return self.relaxation.verdict

    def as_dict(self, seed=None):
        return {
            "schema": SCHEMA,
            "command": "certify",
            "seed": seed,
            "family": family_to_dict(self.family),
            "grid": {"points": self.grid.points.tolist(),
                     "weights": self.grid.weights.tolist()},
            "quadrature": self.quadrature,
            "verdict": self.verdict,
            "certificates": [c.as_dict() for c in (
                self.relaxation, self.internal_relaxation,
                self.exponential_stability)],
        }


def _analyze(mode, scheme, n_nodes, tols):
    verdict = analyze_mode(mode, tols.tol, tols.k_max, tols.cond_max)
    if verdict.spectral_abscissa >= -tols.marginal:
        return ModeReport(verdict, None, None, 0,
                          f"marginally stable (abscissa {verdict.spectral_abscissa:.3g});"
                          " Hankel operator unbounded")
    quad = build_quadrature(scheme, n_nodes, decay_rate=-verdict.spectral_abscissa,
                            eps_tail=tols.eps_tail)
    disc = build_hankel(mode, quad, marginal=tols.marginal)
    test = hankel_psd_test(disc, tols.tol)
    scale = float(np.max(np.abs(disc.eigenvalues)))
    return ModeReport(verdict, test, scale, len(quad), None)


def certify_family(family: SymbolFamily, grid: FrequencyGrid,
                   scheme="truncated-trapezoid", n_nodes=128,
                   tolerances: Tolerances | None = None,
                   threads=None) -> CertificationReport:
    """Run every per-mode test and aggregate the three certificates."""
    tols = tolerances or Tolerances()
    modes = [evaluate_symbol(family, w) for w in grid.points]
    reports = parallel_map(lambda md: _analyze(md, scheme, n_nodes, tols), modes,
                           threads)

    relax, internal, stab = [], [], []
    n_not_applicable = 0
    excluded = []
    for rep in reports:
        v = rep.verdict
        key = v.omega
        mom = v.moments
        relax.append(Evidence(key, "cm_moments", mom.status, mom.margin, {
            "first_failing_k": mom.first_failing_k,
            "failing_value": mom.failing_value, "k_max": mom.k_max,
            "asymmetry": mom.asymmetry, "necessary_only": True}))
        bern = v.bernstein
        if bern.status == "not_applicable":
            n_not_applicable += 1
        relax.append(Evidence(key, "cm_bernstein", bern.status, bern.margin, {
            "reason": bern.reason, "condition_number": bern.condition_number,
            "poles": None if bern.form is None else bern.form.poles.tolist()}))
        if rep.hankel is None:
            excluded.append(key)
            relax.append(Evidence(key, "hankel_psd", "inconclusive", None,
                                  {"reason": rep.exclusion}))
        else:
            ht = rep.hankel
            relax.append(Evidence(key, "hankel_psd", ht.status, ht.margin, {
                "min_eigenvalue": ht.min_eigenvalue,
                "max_eigenvalue": ht.max_eigenvalue,
                "symmetry_defect": ht.symmetry_defect,
                "nodes": rep.quad_nodes, "scheme": scheme}))
        it = v.internal
        internal.append(Evidence(key, "internal_form", it.status, it.margin, {
            "hermitian_defect": it.hermitian_defect,
            "max_eigenvalue": it.max_eigenvalue,
            "collocation_defect": it.collocation_defect}))
        s_margin = -tols.marginal - v.spectral_abscissa
        stab.append(Evidence(key, "spectral_abscissa",
                             "pass" if s_margin >= 0 else "fail", s_margin,
                             {"abscissa": v.spectral_abscissa}))

    notes = [
        "cm_moments samples derivatives at t=0+ only: necessary, not sufficient",
        "pointwise conditions are checked on the sampled grid modes only",
    ]
    if n_not_applicable:
        notes.append(f"Bernstein test not applicable at {n_not_applicable} mode(s); "
                     "the Hankel test is decisive there")
    if excluded:
        notes.append(f"{len(excluded)} marginally stable mode(s) excluded from the "
                     "Hankel test: " + ", ".join(str(list(k)) for k in excluded))
    tail = _tail_warning(grid, reports, tols.tail_ratio)
    if tail:
        notes.append(tail)

    quad_info = {"scheme": scheme, "N": n_nodes, "eps_tail": tols.eps_tail}
    return CertificationReport(
        Certificate.from_evidence("relaxation", relax, tols, notes),
        Certificate.from_evidence("internal_relaxation", internal, tols),
        Certificate.from_evidence("exponential_stability", stab, tols),
        tuple(reports), family, grid, quad_info)


def _tail_warning(grid, reports, ratio):
    scales = np.array([np.nan if r.hankel_scale is None else r.hankel_scale
                       for r in reports])
    if np.all(np.isnan(scales)):
        return None
    radius = np.linalg.norm(grid.points, axis=1)
    boundary = radius >= radius.max() * (1 - 1e-12)
    peak = np.nanmax(scales)
    edge = np.nanmax(np.where(boundary, scales, np.nan)) if np.any(
        boundary & ~np.isnan(scales)) else np.nan
    if np.isfinite(edge) and edge > ratio * peak:
        return (f"tail warning: boundary-mode Hankel norm {edge:.3g} exceeds "
                f"{ratio:g} x peak {peak:.3g}; omega_max may truncate the spectrum")
    return None
