"""Command-line front end: ``ltsi-relax <command> --config path [options]``.

Commands: ``certify``, ``hankel``, ``passivity``, ``simulate``,
``storage-check`` and ``figures``. Every command writes its artifacts into
``--out`` (default ``.``) together with ``run_manifest.json``; outputs are
deterministic for a given configuration and seed.

Exit codes: 0 pass, 2 fail, 3 inconclusive, 64 configuration error,
1 any other error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .certify import SCHEMA, certify_family
from .core import (Certificate, Evidence, FrequencyGrid, LTSIError,
                   SpatioTemporalField, StabilityError, StructuralError, Tolerances,
                   ValidationError, evaluate_symbol, family_from_dict, family_to_dict,
                   make_frequency_grid, shifted_diffusion)
from .diffusion_ref import (DEFAULT_LOCATIONS, DEFAULT_TIMES, DiffusionParams,
                            check_figure2, figure2_datasets, gaussian_solution,
                            write_table_csv)
from .fieldio import write_field_binary, write_field_csv, write_json
from .hankel import build_hankel, build_quadrature, hankel_psd_test, write_hankel_dump
from .lti_mode import spectral_abscissa
from .passivity import (CertificateSynthesisError, PassivityCertificate,
                        UnderdeterminedError, identity_certificate, lyapunov_candidate,
                        mode_margins, verify_certificate)
from .spectral_sim import (HypothesisError, SimulationConfig, exponential_past_input,
                           gaussian_past_input, simulate, storage_identity_check)

__all__ = ["RunManifest", "main", "build_parser", "EXIT_CODES", "ConfigError"]

EXIT_CODES = {"pass": 0, "fail": 2, "inconclusive": 3}
EXIT_CONFIG = 64
EXIT_ERROR = 1
COMMANDS = ("certify", "hankel", "passivity", "simulate", "storage-check", "figures")


class ConfigError(LTSIError, ValueError):
    """The manifest or configuration file cannot be used."""


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a run; echoed into ``run_manifest.json``."""

    command: str
    config_path: str | None
    config: dict
    grid: tuple | None = None            # (omega_max, count) override
    quadrature: tuple | None = None      # (scheme, N) override
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: str = "."
    seed: int = 0
    dump_hankel: str | None = None
    certificate: str | None = None

    def as_dict(self):
        return {"command": self.command, "config_path": self.config_path,
                "config": self.config,
                "grid_override": None if self.grid is None else list(self.grid),
                "quadrature_override": None if self.quadrature is None
                else list(self.quadrature),
                "tolerances": self.tolerances.as_dict(), "seed": self.seed,
                "dump_hankel": self.dump_hankel, "certificate": self.certificate}


# ---------------------------------------------------------------------------
# Argument and config parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ltsi-relax",
        description="Relaxation, Hankel, passivity and storage checks for "
                    "linear time- and space-invariant systems.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--grid", help="frequency grid override: wmax,count")
    parser.add_argument("--quad", help="time quadrature override: scheme,N")
    parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="tolerance override (repeatable)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dump-hankel", metavar="PATH",
                        help="write the Hankel matrix and spectrum of one mode")
    parser.add_argument("--certificate", metavar="PATH",
                        help="passivity certificate JSON to verify")
    return parser


def _parse_grid(text):
    try:
        wmax, count = text.split(",")
        return float(wmax), int(count)
    except ValueError:
        raise ConfigError(f"--grid expects wmax,count, got {text!r}") from None


def _parse_quad(text):
    try:
        scheme, n = text.split(",")
        return scheme.strip(), int(n)
    except ValueError:
        raise ConfigError(f"--quad expects scheme,N, got {text!r}") from None


def _parse_tolerances(items, config):
    overrides = dict(config.get("tolerances", {}))
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol expects name=value, got {item!r}")
        overrides[name.strip()] = value
    parsed = {}
    defaults = Tolerances().as_dict()
    for name, value in overrides.items():
        if name not in defaults:
            raise ConfigError(f"unknown tolerance {name!r}; known: {sorted(defaults)}")
        try:
            parsed[name] = type(defaults[name])(float(value))
        except (TypeError, ValueError):
            raise ConfigError(f"tolerance {name!r} must be numeric, got {value!r}") \
                from None
    return Tolerances().replace(**parsed)


def manifest_from_args(args) -> RunManifest:
    config = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
    elif args.command != "figures":
        raise ConfigError(f"{args.command} needs --config")
    return RunManifest(
        command=args.command, config_path=args.config, config=config,
        grid=None if args.grid is None else _parse_grid(args.grid),
        quadrature=None if args.quad is None else _parse_quad(args.quad),
        tolerances=_parse_tolerances(args.tol, config), out_dir=args.out,
        seed=args.seed, dump_hankel=args.dump_hankel, certificate=args.certificate)


def _family(manifest, default=None):
    data = manifest.config.get("family")
    if data is None:
        if default is not None:
            return default
        raise ConfigError("config has no 'family' section")
    return family_from_dict(data)


def _grid(manifest) -> FrequencyGrid:
    if manifest.grid is not None:
        return make_frequency_grid(*manifest.grid)
    section = manifest.config.get("grid", {"omega_max": 10.0, "count": 201})
    if "points" in section:
        return FrequencyGrid(np.asarray(section["points"], dtype=float),
                             section.get("weights", np.ones(len(section["points"]))))
    try:
        return make_frequency_grid(float(section["omega_max"]), int(section["count"]),
                                   int(section.get("s", 1)))
    except KeyError as exc:
        raise ConfigError(f"grid section needs omega_max and count ({exc})") from exc


def _quad_section(manifest, default_scheme="truncated-trapezoid", default_n=128):
    if manifest.quadrature is not None:
        return manifest.quadrature
    section = manifest.config.get("quadrature", {})
    return section.get("scheme", default_scheme), int(section.get("N", default_n))


def _mode_quadrature(mode, scheme, n, tols, decay_rate=None):
    """Quadrature adapted to the mode's decay; falls back to rate 1 when marginal."""
    if decay_rate is None:
        decay_rate = -spectral_abscissa(mode)
        if decay_rate <= tols.marginal:
            decay_rate = 1.0
    return build_quadrature(scheme, n, decay_rate=decay_rate, eps_tail=tols.eps_tail)


def _hankel_omega(manifest):
    return float(manifest.config.get("hankel", {}).get("omega", 1.0))


# ---------------------------------------------------------------------------
# Commands


def _finish(manifest, artifacts, verdict):
    os.makedirs(manifest.out_dir, exist_ok=True)
    body = {"schema": SCHEMA, "verdict": verdict, "exit_code": EXIT_CODES[verdict],
            "artifacts": sorted(artifacts), "manifest": manifest.as_dict()}
    write_json(body, os.path.join(manifest.out_dir, "run_manifest.json"))
    return EXIT_CODES[verdict]


def _envelope(manifest, command, payload):
    out = {"schema": SCHEMA, "command": command, "seed": manifest.seed,
           "tolerances": manifest.tolerances.as_dict()}
    out.update(payload)
    return out


def _dump(manifest, family, scheme, n):
    if manifest.dump_hankel is None:
        return None
    tols = manifest.tolerances
    mode = evaluate_symbol(family, [_hankel_omega(manifest)])
    disc = build_hankel(mode, _mode_quadrature(mode, scheme, n, tols),
                        require_stable=False)
    parent = os.path.dirname(manifest.dump_hankel)
    if parent:
        os.makedirs(parent, exist_ok=True)
    write_hankel_dump(disc, manifest.dump_hankel)
    return disc


def cmd_certify(manifest: RunManifest) -> int:
    family, grid = _family(manifest), _grid(manifest)
    scheme, n = _quad_section(manifest)
    report = certify_family(family, grid, scheme, n, manifest.tolerances)
    os.makedirs(manifest.out_dir, exist_ok=True)
    path = os.path.join(manifest.out_dir, "certificate.json")
    body = report.as_dict(manifest.seed)
    body["tolerances"] = manifest.tolerances.as_dict()
    write_json(body, path)
    _dump(manifest, family, scheme, n)
    _say(f"relaxation: {report.verdict}")
    for note in report.relaxation.notes:
        _say(f"  note: {note}")
    return _finish(manifest, ["certificate.json"], report.verdict)


def _write_spectrum(disc, path):
    lines = ["index,eigenvalue"]
    lines += [f"{i},{format(float(v), '.17g')}" for i, v in
              enumerate(np.sort(disc.eigenvalues))]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_hankel(manifest: RunManifest) -> int:
    family, grid = _family(manifest), _grid(manifest)
    scheme, n = _quad_section(manifest)
    tols = manifest.tolerances
    evidence = []
    for omega in grid.points:
        mode = evaluate_symbol(family, omega)
        key = tuple(omega.tolist())
        abscissa = spectral_abscissa(mode)
        if abscissa >= -tols.marginal:
            evidence.append(Evidence(key, "hankel_psd", "inconclusive", None,
                                     {"reason": "marginally stable mode",
                                      "abscissa": abscissa}))
            continue
        disc = build_hankel(mode, _mode_quadrature(mode, scheme, n, tols),
                            marginal=tols.marginal)
        test = hankel_psd_test(disc, tols.tol)
        evidence.append(Evidence(key, "hankel_psd", test.status, test.margin, {
            "min_eigenvalue": test.min_eigenvalue,
            "max_eigenvalue": test.max_eigenvalue,
            "symmetry_defect": test.symmetry_defect}))
    cert = Certificate.from_evidence("hankel_psd", evidence, tols,
                                     [f"scheme={scheme}, N={n}"])
    os.makedirs(manifest.out_dir, exist_ok=True)
    write_json(_envelope(manifest, "hankel", {
        "family": family_to_dict(family), "verdict": cert.verdict,
        "certificates": [cert.as_dict()]}),
        os.path.join(manifest.out_dir, "hankel.json"))
    mode = evaluate_symbol(family, [_hankel_omega(manifest)])
    disc = build_hankel(mode, _mode_quadrature(mode, scheme, n, tols),
                        require_stable=False)
    _write_spectrum(disc, os.path.join(manifest.out_dir, "hankel_spectrum.csv"))
    _dump(manifest, family, scheme, n)
    _say(f"hankel_psd: {cert.verdict}")
    return _finish(manifest, ["hankel.json", "hankel_spectrum.csv"], cert.verdict)


def _synthesize(family, grid, tols):
    """Identity certificate if possible, else per-mode least-norm candidates."""
    try:
        return identity_certificate(family, grid, tols.tol), "identity", []
    except StructuralError:
        pass
    qs, failures = [], []
    for omega in grid.points:
        mode = evaluate_symbol(family, omega)
        try:
            qs.append(lyapunov_candidate(mode, tols.tol))
        except (CertificateSynthesisError, UnderdeterminedError, StabilityError) as exc:
            failures.append({"omega": omega.tolist(), "reason": str(exc)})
            qs.append(None)
    if failures:
        return None, "least-norm", failures
    cert = PassivityCertificate(grid.points, np.array(qs),
                                tuple(mode_margins(evaluate_symbol(family, w), q)
                                      for w, q in zip(grid.points, qs)))
    return cert, "least-norm", []


def cmd_passivity(manifest: RunManifest) -> int:
    family, grid = _family(manifest), _grid(manifest)
    tols = manifest.tolerances
    if manifest.certificate is not None:
        try:
            cert = PassivityCertificate.load(manifest.certificate)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read certificate: {exc}") from exc
        source, failures = "file", []
    else:
        cert, source, failures = _synthesize(family, grid, tols)
    os.makedirs(manifest.out_dir, exist_ok=True)
    artifacts = ["passivity.json"]
    if cert is None:
        verdict = "inconclusive"
        payload = {"verdict": verdict, "source": source, "synthesis_failures": failures,
                   "certificates": []}
        _say("passivity: inconclusive (no certificate could be synthesized)")
    else:
        result = verify_certificate(family, grid, cert, tols.tol, tols)
        verdict = result.verdict
        payload = {"verdict": verdict, "source": source,
                   "certificates": [result.as_dict()]}
        if source != "file":
            write_json(cert.to_dict(), os.path.join(manifest.out_dir,
                                                    "passivity_certificate.json"))
            artifacts.append("passivity_certificate.json")
        _say(f"passivity: {verdict} (certificate from {source})")
    payload["family"] = family_to_dict(family)
    write_json(_envelope(manifest, "passivity", payload),
               os.path.join(manifest.out_dir, "passivity.json"))
    return _finish(manifest, artifacts, verdict)


def _initial_field(section, config_sim, n):
    if not section:
        return None
    kind = section.get("kind", "gaussian")
    if kind != "gaussian":
        raise ConfigError(f"unknown initial condition kind {kind!r}")
    sigma0 = float(section.get("sigma0", 1.0))
    profile = gaussian_solution(DiffusionParams(1.0), sigma0, 0.0, config_sim.positions)
    init = np.zeros((config_sim.spatial_points, n), dtype=complex)
    init[:, int(section.get("channel", 0))] = profile
    return init


def _input_field(section, config_sim, m, seed):
    kind = (section or {}).get("kind", "zero")
    if kind == "zero":
        return None
    if kind != "random":
        raise ConfigError(f"unknown input kind {kind!r}")
    rng = np.random.default_rng(seed)
    shape = (config_sim.n_steps + 1, config_sim.spatial_points, m)
    values = float(section.get("amplitude", 1.0)) * rng.standard_normal(shape)
    return SpatioTemporalField(values, config_sim.dt, config_sim.dx, config_sim.t_span[0],
                               config_sim.positions[0])


def cmd_simulate(manifest: RunManifest) -> int:
    family = _family(manifest)
    section = manifest.config.get("simulation")
    if section is None:
        raise ConfigError("simulate needs a 'simulation' section")
    sim = SimulationConfig.from_dict(section)
    n, m, _, _ = family.dims
    init = _initial_field(manifest.config.get("initial"), sim, n)
    u = _input_field(manifest.config.get("input"), sim, m, manifest.seed)
    result = simulate(family, sim, u, initial_field=init,
                      method=section.get("method", "fft"))
    os.makedirs(manifest.out_dir, exist_ok=True)
    write_field_csv(result.output, os.path.join(manifest.out_dir, "field.csv"))
    write_field_binary(result.output, os.path.join(manifest.out_dir, "field.bin"))
    summary = {"spatial_points": sim.spatial_points, "steps": sim.n_steps,
               "warnings": list(result.warnings), "family": family_to_dict(family)}
    initial = manifest.config.get("initial")
    if family.kind == "diffusion" and initial and u is None:
        params = DiffusionParams(family.params["alpha"])
        t_end = result.output.times[-1]
        exact = gaussian_solution(params, float(initial.get("sigma0", 1.0)), t_end,
                                  sim.positions)
        got = result.output.values[-1, :, 0]
        summary["reference_max_rel_error"] = float(
            np.max(np.abs(got - exact)) / np.max(np.abs(exact)))
    write_json(_envelope(manifest, "simulate", summary),
               os.path.join(manifest.out_dir, "simulate.json"))
    _say(f"simulated {sim.n_steps} steps on {sim.spatial_points} points")
    return _finish(manifest, ["field.bin", "field.csv", "simulate.json"], "pass")


def _past_inputs(section, grid, quads):
    section = section or {"kind": "gaussian"}
    kind = section.get("kind", "gaussian")
    if kind == "gaussian":
        return gaussian_past_input(grid, quads, float(section.get("center", 2.0)),
                                   float(section.get("width", 0.5)),
                                   float(section.get("spatial_width", 1.0)))
    if kind == "exponential":
        return exponential_past_input(grid, quads, float(section.get("rate", 1.0)),
                                      section.get("amplitude"))
    if kind == "zero":
        return [np.zeros((len(q), 1)) for q in quads]
    raise ConfigError(f"unknown past_input kind {kind!r}")


def cmd_storage_check(manifest: RunManifest) -> int:
    family, grid = _family(manifest), _grid(manifest)
    scheme, n = _quad_section(manifest, "gauss-laguerre", 256)
    tols = manifest.tolerances
    decay = manifest.config.get("quadrature", {}).get("decay_rate")
    quads = [_mode_quadrature(evaluate_symbol(family, w), scheme, n, tols, decay)
             for w in grid.points]
    past = _past_inputs(manifest.config.get("past_input"), grid, quads)
    os.makedirs(manifest.out_dir, exist_ok=True)
    try:
        report = storage_identity_check(family, grid, quads, past, tols.tol, tols.marginal)
    except HypothesisError as exc:
        payload = {"verdict": "inconclusive", "reason": str(exc),
                   "family": family_to_dict(family)}
        write_json(_envelope(manifest, "storage-check", payload),
                   os.path.join(manifest.out_dir, "storage.json"))
        _say(f"storage-check: hypothesis violated: {exc}")
        return _finish(manifest, ["storage.json"], "inconclusive")
    verdict = "pass" if report.max_rel_error <= tols.storage else "fail"
    payload = {"verdict": verdict, "storage_tolerance": tols.storage,
               "quadrature": {"scheme": scheme, "N": n},
               "family": family_to_dict(family)}
    payload.update(report.as_dict())
    write_json(_envelope(manifest, "storage-check", payload),
               os.path.join(manifest.out_dir, "storage.json"))
    _say(f"storage-check: {verdict} (lhs={report.lhs:.10g}, rhs={report.rhs:.10g}, "
         f"2H={report.hankel_form:.10g}, max rel err={report.max_rel_error:.3g})")
    return _finish(manifest, ["storage.json"], verdict)


def cmd_figures(manifest: RunManifest) -> int:
    section = manifest.config.get("figures", {})
    params = DiffusionParams(float(section.get("alpha", 1.0)))
    table_a, table_b = figure2_datasets(
        params, tuple(section.get("times", DEFAULT_TIMES)),
        tuple(section.get("locations", DEFAULT_LOCATIONS)),
        tuple(section.get("x_range", (-3.0, 3.0))), tuple(section.get("t_range", (0.01, 2.0))),
        int(section.get("num", 301)))
    os.makedirs(manifest.out_dir, exist_ok=True)
    write_table_csv(table_a, os.path.join(manifest.out_dir, "fig2a.csv"))
    write_table_csv(table_b, os.path.join(manifest.out_dir, "fig2b.csv"))
    family = _family(manifest, default=shifted_diffusion(1.0, 0.5))
    scheme, n = _quad_section(manifest)
    mode = evaluate_symbol(family, [_hankel_omega(manifest)])
    disc = build_hankel(mode, _mode_quadrature(mode, scheme, n, manifest.tolerances),
                        require_stable=False)
    _write_spectrum(disc, os.path.join(manifest.out_dir, "hankel_spectrum.csv"))
    checks = check_figure2(table_a, table_b, params)
    checks["curves"] = [dict(x=x, **c) for x, c in sorted(checks["curves"].items())]
    write_json(_envelope(manifest, "figures", {
        "alpha": params.alpha, "checks": checks,
        "hankel_mode": {"family": family_to_dict(family),
                        "omega": _hankel_omega(manifest), "scheme": scheme, "N": n}}),
        os.path.join(manifest.out_dir, "figures.json"))
    _say("figures: wrote fig2a.csv, fig2b.csv, hankel_spectrum.csv")
    return _finish(manifest, ["fig2a.csv", "fig2b.csv", "figures.json",
                              "hankel_spectrum.csv"], "pass")


HANDLERS = {"certify": cmd_certify, "hankel": cmd_hankel, "passivity": cmd_passivity,
            "simulate": cmd_simulate, "storage-check": cmd_storage_check,
            "figures": cmd_figures}


def _say(msg):
    print(msg)


def _err(msg):
    print(f"ltsi-relax: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:            # argparse usage errors
        return EXIT_CONFIG if exc.code else 0
    try:
        manifest = manifest_from_args(args)
        return HANDLERS[manifest.command](manifest)
    except (ConfigError, ValidationError, NotImplementedError) as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except LTSIError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
