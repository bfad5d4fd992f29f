"""Batch front-end: run configured experiments and emit deterministic CSVs.

Configs are flat key=value files with one section per experiment; every
output CSV carries a ``# schema=1`` header block recording the full
configuration and seed, so identical configs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (InsufficientSignalError, LyapunovConvergenceError,
                       collapse_export, lyapunov_spectrum)
from .glauber import (CanonicalizationError, QuenchConfig, build_glauber_mpo,
                      tebd_evolve)
from .mps import (SpectrumError, UniformMps, depolarized_cat_mps,
                  polarized_mps, thermal_mps)
from .oracles import (DepolCatParams, correlator_recursion,
                      exact_cmi_depolarized_cat)
from .sampler import SamplingError, estimate_cmi

__all__ = ["main", "validate_config", "run_experiment", "ExperimentSpec",
           "ConfigError"]

SCHEMA = 1
KINDS = ("depolarize-cat", "quench", "cmi-scan", "correlator-benchmark",
         "lyapunov", "collapse")
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
LN2 = math.log(2.0)

NUMERICAL_ERRORS = (SpectrumError, CanonicalizationError, SamplingError,
                    InsufficientSignalError, LyapunovConvergenceError,
                    FloatingPointError, np.linalg.LinAlgError)


class ConfigError(Exception):
    """Aggregated, human-readable configuration problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class ExperimentSpec:
    """One validated experiment: kind, dynamics parameters and grids."""

    kind: str
    label: str
    seed: int
    beta_i: float = math.inf
    beta_f: float = 1.0
    alpha: float = 0.5
    steps: int = 0
    d_max: int = 18
    cutoff: float = 1e-9
    times: tuple = ()
    b_sizes: tuple = ()
    samples: int = 0
    p: float = 0.0
    r_max: int = 40
    replicas: int = 8
    product_length: int = 2000
    warnings: tuple = ()

    def header_items(self):
        items = [("kind", self.kind), ("label", self.label),
                 ("seed", self.seed)]
        if self.kind in ("quench", "cmi-scan", "correlator-benchmark",
                         "lyapunov"):
            items += [("beta_i", self.beta_i), ("beta_f", self.beta_f),
                      ("alpha", self.alpha), ("steps", self.steps),
                      ("d_max", self.d_max), ("cutoff", self.cutoff)]
        if self.kind in ("depolarize-cat", "collapse"):
            items += [("times", ",".join(str(t) for t in self.times))]
        else:
            items += [("times", ",".join(str(int(t)) for t in self.times))]
        if self.b_sizes:
            items += [("b_sizes", ",".join(str(b) for b in self.b_sizes))]
        if self.kind in ("depolarize-cat", "cmi-scan"):
            items += [("samples", self.samples)]
        if self.kind == "correlator-benchmark" or self.kind == "quench":
            items += [("r_max", self.r_max)]
        if self.kind == "lyapunov":
            items += [("replicas", self.replicas),
                      ("product_length", self.product_length)]
        return items


def _parse_floats(raw, dest, section, key, errors):
    try:
        return tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError:
        errors.append(f"{section}.{key}: cannot parse {raw!r} as numbers")
        return dest


def _parse_ints(raw, dest, section, key, errors):
    try:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError:
        errors.append(f"{section}.{key}: cannot parse {raw!r} as integers")
        return dest


REQUIRED = {
    "depolarize-cat": ("times", "b_sizes"),
    "quench": ("beta_i", "beta_f", "times"),
    "cmi-scan": ("beta_i", "beta_f", "times", "b_sizes", "samples"),
    "correlator-benchmark": ("beta_i", "beta_f", "times"),
    "lyapunov": ("beta_i", "beta_f", "times"),
    "collapse": ("times", "b_sizes"),
}


def validate_config(text: str, default_seed: int = 0):
    """Parse a config into experiment specs; aggregate every violation."""
    parser = ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                          inline_comment_prefixes=("#",))
    errors = []
    try:
        parser.read_string(text)
    except Exception as exc:
        raise ConfigError([f"config parse failure: {exc}"]) from exc
    specs = []
    for section in parser.sections():
        kind = section.split(":", 1)[0].strip()
        label = section.replace(":", "-").replace(" ", "-")
        raw = dict(parser.items(section))
        if "kind" in raw:
            kind = raw.pop("kind")
        if kind not in KINDS:
            errors.append(f"{section}: unknown experiment kind {kind!r}")
            continue
        spec = ExperimentSpec(kind=kind, label=label, seed=default_seed)
        warnings_ = []
        seen = set()
        for key, value in raw.items():
            seen.add(key)
            if key == "seed":
                try:
                    spec.seed = int(value)
                except ValueError:
                    errors.append(f"{section}.seed: not an integer: {value!r}")
            elif key in ("beta_i", "beta_f", "alpha", "cutoff", "p"):
                try:
                    setattr(spec, key, float(value))
                except ValueError:
                    errors.append(f"{section}.{key}: not a number: {value!r}")
            elif key in ("steps", "d_max", "samples", "r_max", "replicas",
                         "product_length"):
                try:
                    setattr(spec, key, int(value))
                except ValueError:
                    errors.append(f"{section}.{key}: not an integer: {value!r}")
            elif key == "times":
                if kind in ("depolarize-cat", "collapse"):
                    spec.times = _parse_floats(value, spec.times, section,
                                               key, errors)
                else:
                    spec.times = _parse_ints(value, spec.times, section, key,
                                             errors)
            elif key == "b_sizes":
                spec.b_sizes = _parse_ints(value, spec.b_sizes, section, key,
                                           errors)
            else:
                errors.append(f"{section}.{key}: unknown field")
        for req in REQUIRED[kind]:
            if req not in seen:
                errors.append(f"{section}.{req}: required field is missing")
        if not 0.0 < spec.alpha <= 1.0:
            errors.append(f"{section}.alpha: must lie in (0, 1], "
                          f"got {spec.alpha}")
        if spec.kind != "depolarize-cat" and spec.kind != "collapse":
            if spec.beta_f < 0 or math.isinf(spec.beta_f):
                errors.append(f"{section}.beta_f: must be finite and >= 0")
            if spec.beta_f > spec.beta_i:
                warnings_.append(f"{section}: beta_f > beta_i (cooling quench)")
            if not spec.times:
                pass
            elif spec.steps < max(spec.times, default=0):
                spec.steps = max(spec.times)
        if spec.kind in ("depolarize-cat", "collapse"):
            for t in spec.times:
                if t < 0:
                    errors.append(f"{section}.times: negative time {t}")
        if spec.kind == "cmi-scan" and spec.samples < 2:
            errors.append(f"{section}.samples: need at least 2")
        if any(b < 1 for b in spec.b_sizes):
            errors.append(f"{section}.b_sizes: block sizes must be >= 1")
        if not spec.times:
            errors.append(f"{section}.times: grid must be nonempty")
        spec.warnings = tuple(warnings_)
        specs.append(spec)
    if not specs and not errors:
        errors.append("config defines no experiments")
    if errors:
        raise ConfigError(errors)
    return specs


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return format(float(value), ".16e")


def _write_csv(path: Path, spec: ExperimentSpec, units: str, columns,
               rows) -> None:
    lines = [f"# schema={SCHEMA}", f"# generator=mlen {__version__}",
             f"# units={units}"]
    for key, value in spec.header_items():
        lines.append(f"# {key}={value}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _initial_state(spec: ExperimentSpec) -> UniformMps:
    if math.isinf(spec.beta_i):
        return polarized_mps()
    return thermal_mps(spec.beta_i)


def _evolved_states(spec: ExperimentSpec):
    """Yield (t, state) at the requested sweep counts (0 included if asked)."""
    wanted = sorted(set(int(t) for t in spec.times))
    state = _initial_state(spec)
    if wanted and wanted[0] == 0:
        yield 0, state
        wanted = wanted[1:]
    if not wanted:
        return
    channel = build_glauber_mpo(spec.beta_f, spec.alpha)
    last = wanted[-1]
    remaining = set(wanted)
    for t, state, _err in tebd_evolve(state, channel, last, spec.d_max,
                                      spec.cutoff):
        if t in remaining:
            yield t, state


def _unit_scale(units: str) -> float:
    return 1.0 if units == "nats" else 1.0 / LN2


def run_experiment(spec: ExperimentSpec, out_dir: Path, units: str = "nats"):
    """Execute one experiment; returns the list of files written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scale = _unit_scale(units)
    files = []

    if spec.kind == "depolarize-cat":
        rows = []
        for t in spec.times:
            params = DepolCatParams.from_time(t)
            state = depolarized_cat_mps(params.p)
            for b in spec.b_sizes:
                exact = exact_cmi_depolarized_cat(params.p, b) * scale
                if spec.samples >= 2:
                    est = estimate_cmi(state, b, spec.samples, seed=spec.seed)
                    rows.append((t, b, exact, est.mean * scale,
                                 est.stderr * scale))
                else:
                    rows.append((t, b, exact, math.nan, math.nan))
        path = out_dir / f"{spec.label}.csv"
        _write_csv(path, spec, units, ("t", "b", "i_exact", "i_sampled",
                                       "stderr"), rows)
        files.append(path)

    elif spec.kind == "quench":
        corr_rows = []
        mag_rows = []
        for t, state in _evolved_states(spec):
            prof = state.correlator_profile(spec.r_max)
            mag_rows.append((t, state.magnetization()))
            for r in range(spec.r_max + 1):
                corr_rows.append((t, r, prof[r]))
        path = out_dir / f"{spec.label}_correlator.csv"
        _write_csv(path, spec, units, ("t", "r", "c"), corr_rows)
        files.append(path)
        path = out_dir / f"{spec.label}_magnetization.csv"
        _write_csv(path, spec, units, ("t", "m"), mag_rows)
        files.append(path)

    elif spec.kind == "correlator-benchmark":
        steps = max(int(t) for t in spec.times)
        table = correlator_recursion(spec.beta_i, spec.beta_f, spec.alpha,
                                     steps, max(4 * steps, 2 * spec.r_max, 64),
                                     record_times=[int(t) for t in spec.times])
        exact = {int(t): table.averaged[i] for i, t in enumerate(table.times)}
        rows = []
        for t, state in _evolved_states(spec):
            prof = state.correlator_profile(spec.r_max)
            ref = exact[t][: spec.r_max + 1]
            for r in range(spec.r_max + 1):
                rows.append((t, r, prof[r], ref[r], abs(prof[r] - ref[r])))
        path = out_dir / f"{spec.label}.csv"
        _write_csv(path, spec, units, ("t", "r", "c_mps", "c_exact",
                                       "abs_err"), rows)
        files.append(path)

    elif spec.kind == "cmi-scan":
        symmetrized = math.isinf(spec.beta_i)
        rows = []
        for t, state in _evolved_states(spec):
            values = []
            for b in spec.b_sizes:
                est = estimate_cmi(state, b, spec.samples,
                                   symmetrized=symmetrized,
                                   seed=spec.seed + b, time_step=t)
                values.append((b, est.mean, est.stderr))
            peak = max(v[1] for v in values) or 1.0
            for b, mean, err in values:
                rows.append((t, b, mean * scale, err * scale, mean / peak))
        path = out_dir / f"{spec.label}.csv"
        _write_csv(path, spec, units, ("t", "b", "i", "stderr", "i_norm"),
                   rows)
        files.append(path)

    elif spec.kind == "lyapunov":
        rows = []
        for t, state in _evolved_states(spec):
            res = lyapunov_spectrum(state, spec.product_length,
                                    replicas=spec.replicas, seed=spec.seed)
            rows.append((t, res.eta0, res.eta1, res.gap, res.predicted_xi,
                         res.gap_spread))
        path = out_dir / f"{spec.label}.csv"
        _write_csv(path, spec, units, ("t", "eta0", "eta1", "gap",
                                       "xi_lyapunov", "gap_spread"), rows)
        files.append(path)

    elif spec.kind == "collapse":
        curves = []
        for t in spec.times:
            params = DepolCatParams.from_time(t)
            xi_star = 2.0 * math.exp(2.0 * t)
            points = [(b, exact_cmi_depolarized_cat(params.p, b))
                      for b in spec.b_sizes]
            curves.append((t, xi_star, points))
        rows = []
        for t, x, y, valid in collapse_export(curves):
            rows.append((t, x, y * scale, int(valid)))
        path = out_dir / f"{spec.label}.csv"
        _write_csv(path, spec, units, ("t", "x", "y", "valid"), rows)
        files.append(path)

    else:
        raise ValueError(f"unhandled kind {spec.kind}")
    return files


def _run_spec(args):
    spec, out_dir, units = args
    return [str(p) for p in run_experiment(spec, Path(out_dir), units)]


def _write_manifest(out_dir: Path, files, seed: int) -> Path:
    entries = []
    for name in sorted(files):
        digest = hashlib.sha256(Path(name).read_bytes()).hexdigest()
        entries.append({"name": os.path.basename(name), "sha256": digest})
    manifest = {"schema": SCHEMA, "generator": f"mlen {__version__}",
                "seed": seed, "files": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mlen",
        description="Spin-chain conditional-information experiments")
    parser.add_argument("command", choices=("quench", "cmi-scan",
                                            "correlator", "lyapunov",
                                            "collapse", "validate"))
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=0,
                        help="default seed for sections without one")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel experiments")
    parser.add_argument("--units", choices=("nats", "bits"), default="nats")
    args = parser.parse_args(argv)

    seed = int(os.environ.get("MLEN_SEED", args.seed))
    out_dir = Path(os.environ.get("MLEN_OUT", args.out))
    jobs = int(os.environ.get("MLEN_JOBS", args.jobs))
    units = os.environ.get("MLEN_UNITS", args.units)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        specs = validate_config(text, default_seed=seed)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    for spec in specs:
        for warning in spec.warnings:
            print(f"warning: {warning}", file=sys.stderr)

    if args.command == "validate":
        for spec in specs:
            print(f"ok: [{spec.label}] kind={spec.kind} seed={spec.seed}")
        return 0

    wanted_kind = {"quench": "quench", "cmi-scan": "cmi-scan",
                   "correlator": "correlator-benchmark",
                   "lyapunov": "lyapunov", "collapse": "collapse"}
    selected = [s for s in specs if s.kind == wanted_kind[args.command]]
    if not selected:
        print(f"error: config defines no {wanted_kind[args.command]} "
              "experiments", file=sys.stderr)
        return EXIT_CONFIG

    written = []
    try:
        if jobs > 1 and len(selected) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for chunk in pool.map(_run_spec,
                                      [(s, out_dir, units) for s in selected]):
                    written.extend(chunk)
        else:
            for spec in selected:
                written.extend(_run_spec((spec, out_dir, units)))
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__module__}."
              f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical failure: {type(exc).__module__}."
              f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    manifest = _write_manifest(out_dir, written, seed)
    for name in written + [str(manifest)]:
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
