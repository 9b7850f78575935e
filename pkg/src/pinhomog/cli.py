"""Configuration-driven command line: capacity, solve, ladder, validate.

Configs are flat INI files with sections [experiment], [mesh], [solver],
[capacity]; every key maps 1:1 to a field of ExperimentConfig or of the
capacity request, and --set KEY=VALUE (repeatable, KEY optionally
section-qualified) overrides file values.  Exit codes: 0 success, 1
configuration problems, 2 partial scientific failure (flagged rows).
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import capacity as cap
from . import io as pio
from .constraints import validate_family
from .errors import ConfigError, PinhomogError
from .experiments import (ExperimentConfig, build_experiment, default_config,
                          run_ladder, solve_case, solve_limit)

_EXPERIMENT_KEYS = {
    "name": str, "p": float, "ell": float, "eps_values": "floats",
    "x1c": float, "x2c": float, "radius": float, "x2a": float,
    "kappa": float, "mu": float, "lam": float,
    "capacity_source": str, "capacity_value": float,
    "step_sharpness": float, "u3_seed": float, "amplitude": float,
}
_MESH_KEYS = {"h": float, "resolve_factor": float, "max_vertices": int}
_SOLVER_KEYS = {"grad_tol": float, "max_iter": int}
_CAPACITY_KEYS = {"p": float, "shape": str, "r": float, "r_values": "floats",
                  "n_theta": int, "kappa": float, "datum": float}

_SECTIONS = {"experiment": _EXPERIMENT_KEYS, "mesh": _MESH_KEYS,
             "solver": _SOLVER_KEYS, "capacity": _CAPACITY_KEYS}


@dataclass
class RunManifest:
    command: str
    config: str | None = None
    out_dir: str = "."
    threads: int | None = None
    seed: int = 0
    overrides: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _convert(section, key, raw):
    keys = _SECTIONS[section]
    if key not in keys:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    kind = keys[key]
    try:
        if kind == "floats":
            return tuple(float(tok) for tok in str(raw).split(",") if tok.strip())
        return kind(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} in section [{section}]: "
                          f"cannot parse {raw!r} as {getattr(kind, '__name__', kind)}")


def _apply_overrides(values: dict, overrides) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, name = key.split(".", 1)
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section {section!r} in override {item!r}")
        else:
            hits = [s for s, keys in _SECTIONS.items() if key in keys]
            if not hits:
                raise ConfigError(f"unknown override key {key!r}")
            if len(hits) > 1:
                raise ConfigError(f"ambiguous override key {key!r}; qualify as "
                                  + " or ".join(f"{s}.{key}" for s in hits))
            section, name = hits[0], key
        values.setdefault(section, {})[name] = _convert(section, name, raw.strip())


def parse_config(path: str | None, overrides=()) -> dict:
    """Resolved {section: {key: value}} with type-checked entries."""
    values: dict = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file {path!r} not found or unreadable")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}] in {path}")
            for key, raw in parser[section].items():
                values.setdefault(section, {})[key] = _convert(section, key, raw)
    _apply_overrides(values, overrides)
    return values


def experiment_from_values(values: dict, out_dir: str = ".") -> ExperimentConfig:
    exp = dict(values.get("experiment", {}))
    name = exp.pop("name", None)
    if name is None:
        raise ConfigError("missing key 'name' in section [experiment]")
    kw = {}
    kw.update(exp)
    kw.update(values.get("mesh", {}))
    kw.update(values.get("solver", {}))
    known = {f.name for f in dc_fields(ExperimentConfig)}
    for key in kw:
        if key not in known:
            raise ConfigError(f"key {key!r} does not apply to experiments")
    return default_config(name, out_dir=out_dir, **kw)


def write_config(config: ExperimentConfig, path) -> None:
    """Round-trip partner of parse_config + experiment_from_values."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "name": config.experiment, "p": repr(config.p), "ell": repr(config.ell),
        "eps_values": ",".join(repr(e) for e in config.eps_values),
        "capacity_source": config.capacity_source,
        "step_sharpness": repr(config.step_sharpness),
        "u3_seed": repr(config.u3_seed), "amplitude": repr(config.amplitude),
        "mu": repr(config.mu), "lam": repr(config.lam),
    }
    for key in ("x1c", "x2c", "radius", "x2a", "kappa", "capacity_value"):
        val = getattr(config, key)
        if val is not None:
            parser["experiment"][key] = repr(val)
    parser["mesh"] = {"h": repr(config.h),
                      "resolve_factor": repr(config.resolve_factor),
                      "max_vertices": str(config.max_vertices)}
    parser["solver"] = {"grad_tol": repr(config.grad_tol),
                        "max_iter": str(config.max_iter)}
    with open(path, "w") as fh:
        parser.write(fh)


# ---------------------------------------------------------------------------
# commands


def _cmd_capacity(manifest: RunManifest, values: dict, log) -> int:
    spec = dict(values.get("capacity", {}))
    spec.update({k: v for k, v in manifest.extra.items() if v is not None})
    shape = spec.get("shape", "boundary_segment")
    p = spec.get("p", 1.5)
    out = Path(manifest.out_dir)
    if shape == "boundary_segment":
        est = cap.boundary_segment_capacity(p)
    elif shape == "disk":
        est = cap.disk_capacity(p, spec.get("r", 0.5))
    elif shape == "critical":
        est = cap.critical_case_density(spec.get("kappa", 1.0),
                                        datum=(spec.get("datum", 1.0),))
    elif shape == "half_space_factor":
        ratio = cap.half_space_factor(p)
        line = f"half_space_factor p={p:g} ratio={ratio:.6f}"
        print(line)
        log(line)
        return 0
    else:
        raise ConfigError(f"unknown capacity shape {shape!r}")
    cap.write_ladder_csv(out / "capacity.csv", est)
    beta = "unresolved" if est.beta is None else f"{est.beta:.4f}"
    line = (f"capacity shape={shape} p={p:g} phi={est.value:.6f} "
            f"beta={beta} err={est.error_estimate:.2e}")
    print(line)
    log(line)
    return 0


def _cmd_solve(manifest: RunManifest, values: dict, log) -> int:
    config = experiment_from_values(values, manifest.out_dir)
    built = build_experiment(config)
    out = Path(manifest.out_dir)
    eps = manifest.extra.get("eps")
    if eps is None:
        res = solve_limit(built)
        tag = "limit"
    else:
        matches = [i for i, case in enumerate(built.cases)
                   if abs(case[0] - eps) < 1e-12]
        if not matches:
            raise ConfigError(f"eps={eps:g} is not on the configured ladder")
        res = solve_case(built, matches[0])
        tag = f"eps{eps:g}"
    name = f"{config.experiment}_{tag}"
    pio.write_vtk(out / f"{name}.vtk", res.u.mesh, {"displacement": res.u.values})
    pio.write_trace_csv(out / f"{name}_trace.csv", res.trace)
    line = (f"solve {name}: energy={res.energy:.8f} iters={res.iterations} "
            f"grad_norm={res.grad_norm:.2e}")
    print(line)
    log(line)
    return 0


def _cmd_ladder(manifest: RunManifest, values: dict, log) -> int:
    config = experiment_from_values(values, manifest.out_dir)
    report = run_ladder(config, out_dir=manifest.out_dir, write_fields=True)
    for r in report.rows:
        line = (f"{r['experiment']} eps={r['eps']:g} energy={r['energy']:.8f} "
                f"gap={r['gap']:.3e} l2={r['l2']:.3e} [{r['status']}]")
        print(line)
        log(line)
    return 2 if report.partial else 0


def _cmd_validate(manifest: RunManifest, values: dict, log) -> int:
    config = experiment_from_values(values, manifest.out_dir)
    built = build_experiment(config)
    eps0 = built.cases[0]
    sites = [el.site for el in eps0[3].elements]
    if len(sites) < 2:
        sites = [el.site for case in built.cases for el in case[3].elements][:8]
    from .experiments import _constraint_family
    family = _constraint_family(config)
    report = validate_family(family, sites, seed=manifest.seed)
    rows = [(f"{s[0]:.17g}", f"{s[1]:.17g}", float(np.linalg.norm(sel)))
            for s, sel in zip(report.sites, report.selection)]
    pio.write_report_csv(Path(manifest.out_dir) / "validate.csv",
                         ["x1", "x2", "selection_norm"], rows)
    line = (f"validate {config.experiment}: selection_bound="
            f"{report.selection_bound:.4f} lipschitz={report.selection_lipschitz:.4f} "
            f"translation_defect={report.translation_defect:.4f} "
            f"{'OK' if report.ok() else 'VIOLATIONS'}")
    print(line)
    log(line)
    for v in report.violations:
        print("  " + v)
        log("  " + v)
    return 0 if report.ok() else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pinhomog")
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=".")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--set", action="append", default=[], dest="overrides",
                        metavar="KEY=VALUE")
    sub = parser.add_subparsers(dest="command", required=True)
    p_cap = sub.add_parser("capacity")
    p_cap.add_argument("--p", type=float, default=None)
    p_cap.add_argument("--shape", default=None)
    p_solve = sub.add_parser("solve")
    p_solve.add_argument("--eps", type=float, default=None)
    sub.add_parser("ladder")
    sub.add_parser("validate")

    args = parser.parse_args(argv)
    extra = {}
    if args.command == "capacity":
        extra = {"p": args.p, "shape": args.shape}
    elif args.command == "solve":
        extra = {"eps": args.eps}
    manifest = RunManifest(args.command, args.config, args.out, args.threads,
                           args.seed, list(args.overrides), extra)

    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "run.log"
    lines = [f"# pinhomog {manifest.command} seed={manifest.seed}"]

    def log(msg):
        lines.append(msg)

    def flush():
        with open(log_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    np.random.default_rng(manifest.seed)  # commands draw from seeded RNGs only
    handler = {"capacity": _cmd_capacity, "solve": _cmd_solve,
               "ladder": _cmd_ladder, "validate": _cmd_validate}[manifest.command]
    try:
        values = parse_config(manifest.config, manifest.overrides)
        code = handler(manifest, values, log)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        log(f"configuration error: {exc}")
        flush()
        return 1
    except PinhomogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        log(f"error: {exc}")
        flush()
        return 2
    flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
