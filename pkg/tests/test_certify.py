import numpy as np
import pytest

from ltsi_relax.certify import certify_family, parallel_map, thread_count
from ltsi_relax.core import (Tolerances, damped_oscillator, diagonal_exponential,
                             diffusion, make_frequency_grid, shifted_diffusion)

GRID = make_frequency_grid(5.0, 21)


def test_shifted_diffusion_passes():
    rep = certify_family(shifted_diffusion(1.0, 0.5), GRID, n_nodes=64)
    assert rep.verdict == "pass"
    assert rep.internal_relaxation.verdict == "pass"
    assert rep.exponential_stability.verdict == "pass"
    assert any("necessary" in n for n in rep.relaxation.notes)


def test_oscillator_fails_everywhere():
    rep = certify_family(damped_oscillator(0.1), GRID, n_nodes=64)
    assert rep.verdict == "fail"
    failing = {e.omega for e in rep.relaxation.failing()}
    assert failing == {tuple(w) for w in GRID.points.tolist()}
    moments = [e for e in rep.relaxation.evidence if e.test == "cm_moments"]
    assert all(e.details["first_failing_k"] == 2 for e in moments)


def test_diffusion_marginal_mode_inconclusive():
    rep = certify_family(diffusion(1.0), GRID, n_nodes=64)
    assert rep.verdict == "inconclusive"
    assert rep.exponential_stability.verdict == "fail"
    hank = [e for e in rep.relaxation.evidence
            if e.test == "hankel_psd" and e.status == "inconclusive"]
    assert [e.omega for e in hank] == [(0.0,)]
    assert any("marginally stable" in n for n in rep.relaxation.notes)


def test_negative_residue_family_fails():
    fam = diagonal_exponential([(1, 0.1, 1.0), (3, 0.1, -0.5)])
    rep = certify_family(fam, GRID, n_nodes=64)
    assert rep.verdict == "fail"
    assert rep.internal_relaxation.verdict == "fail"


def test_thread_count_does_not_change_results(monkeypatch):
    fam = shifted_diffusion(1.0, 0.5)
    a = certify_family(fam, GRID, n_nodes=32, threads=1).as_dict(seed=0)
    b = certify_family(fam, GRID, n_nodes=32, threads=4).as_dict(seed=0)
    assert a == b
    monkeypatch.setenv("LTSI_RELAX_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("LTSI_RELAX_THREADS", "x")
    assert thread_count() == 1
    assert parallel_map(lambda v: v * v, range(10), threads=3) == [v * v for v in range(10)]


def test_tolerances_are_echoed():
    tol = Tolerances().replace(tol=1e-7)
    rep = certify_family(shifted_diffusion(), make_frequency_grid(1.0, 3), n_nodes=16,
                         tolerances=tol)
    d = rep.as_dict(seed=5)
    assert d["seed"] == 5 and d["schema"] == "ltsi-relax/1"
    for cert in d["certificates"]:
        assert cert["tolerances"]["tol"] == 1e-7


def test_tail_warning_when_spectrum_truncated():
    rep = certify_family(shifted_diffusion(1.0, 0.5), make_frequency_grid(2.0, 9),
                         n_nodes=32)
    assert any(n.startswith("tail warning") for n in rep.relaxation.notes)
    wide = diagonal_exponential([(0.5, 0.0, 1.0)])
    rep = certify_family(wide, make_frequency_grid(2.0, 9), n_nodes=32,
                         tolerances=Tolerances().replace(tail_ratio=2.0))
    assert not any(n.startswith("tail warning") for n in rep.relaxation.notes)
