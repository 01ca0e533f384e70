"""Command-line front end.

Subcommands: ``scheme``, ``kernel``, ``uehling``, ``solve-linear``,
``solve-sc`` and ``verify``.  Settings come from an optional JSON config
file (``--config``) and are overridden by flags.  The output directory is
taken from ``--out-dir``, then the ``DIRAC_VACUUM_OUT`` environment variable,
then the config file, then ``./out``.

Exit codes: 0 on success, 1 when a numerical routine fails (or a ``verify``
check fails), 2 for usage and configuration errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, DegenerateVacuumError, InvalidInputError, NumericalError
from .fields import (Grid3, ScalarField, SourceDensities, VectorField, gaussian_density, load_field,
                     save_potential, export_slice_csv)
from .kernel import KernelTable
from .pv import MassSpectrum, derive_scheme
from .solver import SaddleConfig, solve_linear_response, solve_self_consistent

OUT_ENV = "DIRAC_VACUUM_OUT"


class ConfigError(Exception):
    """Invalid configuration or arguments (exit status 2)."""


@dataclass
class RunConfig:
    """Fully resolved settings for one invocation."""

    masses: tuple = (1.0, 2.0, 3.0)
    coupling: float = 0.3
    n: int = 8
    box_length: float = 6.0
    source: dict = field(default_factory=lambda: {"kind": "gaussian", "charge": 0.1, "width": 1.0})
    solver: dict = field(default_factory=dict)
    kmax: float = 10.0
    points: int = 64
    seed: int = 0
    out_dir: str = "out"

    def validate(self):
        try:
            MassSpectrum(*map(float, self.masses))
            Grid3(int(self.n), float(self.box_length))
            self.saddle_config()
        except (InvalidInputError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if not (np.isfinite(self.coupling) and self.coupling >= 0):
            raise ConfigError("coupling must be >= 0")
        if not (self.kmax > 0 and int(self.points) >= 2):
            raise ConfigError("kernel grid needs kmax > 0 and at least 2 points")
        if not isinstance(self.source, dict) or "kind" not in self.source:
            raise ConfigError("source must be an object with a 'kind' key")
        return self

    def saddle_config(self) -> SaddleConfig:
        extra = dict(self.solver)
        extra.pop("coupling", None)
        try:
            return SaddleConfig(coupling=float(self.coupling), **extra)
        except TypeError as exc:
            raise ConfigError(f"unknown solver setting: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["masses"] = list(map(float, self.masses))
        return d


def _parse_masses(text: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse masses {text!r}") from exc
    if len(vals) != 3:
        raise ConfigError("exactly three masses are required (m0,m1,m2)")
    return vals


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve_config(args) -> RunConfig:
    data = _load_config(getattr(args, "config", None))
    cfg = RunConfig(**data)
    if isinstance(cfg.masses, str):
        cfg.masses = _parse_masses(cfg.masses)
    cfg.masses = tuple(map(float, cfg.masses))
    if getattr(args, "masses", None):
        cfg.masses = _parse_masses(args.masses)
    for name in ("coupling", "n", "kmax", "points", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "box", None) is not None:
        cfg.box_length = args.box
    solver_flags = {"damping": getattr(args, "damping", None), "max_iter": getattr(args, "max_iter", None),
                    "residual_tol": getattr(args, "tol", None), "trust_r": getattr(args, "trust_r", None)}
    cfg.solver = {**cfg.solver, **{k: v for k, v in solver_flags.items() if v is not None}}
    if getattr(args, "charge", None) is not None or getattr(args, "width", None) is not None:
        src = {"kind": "gaussian", "charge": 0.1, "width": 1.0}
        if cfg.source.get("kind") == "gaussian":
            src.update(cfg.source)
        if args.charge is not None:
            src["charge"] = args.charge
        if args.width is not None:
            src["width"] = args.width
        cfg.source = src
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    elif os.environ.get(OUT_ENV):
        cfg.out_dir = os.environ[OUT_ENV]
    return cfg.validate()


def build_sources(cfg: RunConfig, grid: Grid3) -> SourceDensities:
    """Instantiate the configured external sources on ``grid``."""
    src = cfg.source
    kind = src.get("kind")
    if kind == "gaussian":
        rho = gaussian_density(grid, float(src.get("charge", 0.1)), float(src.get("width", 1.0)),
                               src.get("center"))
        j = None
        if "current" in src:
            jdir = np.asarray(src["current"], dtype=float)
            j = VectorField(grid, jdir[:, None, None, None] * rho.values[None])
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            return SourceDensities.admissible(rho, j, grid=grid)
    if kind == "mode":
        kvec = np.asarray(src.get("k", [1, 0, 0]), dtype=float)
        amp = float(src.get("amplitude", 0.01))
        wave = amp * np.cos(np.tensordot(2 * np.pi * kvec / grid.box_length, grid.coordinates, axes=1))
        if src.get("target", "rho") == "rho":
            return SourceDensities.admissible(ScalarField(grid, wave), None, grid=grid)
        pol = np.asarray(src.get("polarization", [0, 1, 0]), dtype=float)
        return SourceDensities.admissible(None, VectorField(grid, pol[:, None, None, None] * wave[None]), grid=grid)
    if kind == "file":
        rho = load_field(src["rho"]) if src.get("rho") else None
        j = load_field(src["j"]) if src.get("j") else None
        for f in (rho, j):
            if f is not None:
                grid.check_same(f.grid)
        return SourceDensities.admissible(rho, j, grid=grid)
    raise ConfigError(f"unknown source kind {kind!r}")


# ---------------------------------------------------------------------------
# Subcommands

def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def cmd_scheme(cfg: RunConfig, args) -> int:
    scheme = derive_scheme(cfg.masses)
    payload = scheme.to_dict()
    payload["cutoff"] = scheme.cutoff
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_kernel(cfg: RunConfig, args, uehling: bool = False) -> int:
    scheme = derive_scheme(cfg.masses)
    k = np.linspace(0.0, float(cfg.kmax), int(cfg.points))
    table = KernelTable.build(scheme, k, with_uehling=True)
    out = Path(cfg.out_dir)
    meta = {"config": cfg.to_dict(), **table.metadata}
    if uehling:
        path = out / "uehling.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = ["k,U,gap"] + [f"{a!r},{b!r},{c!r}" for a, b, c in
                              zip(table.k_values.tolist(), table.u_values.tolist(), table.gap_values.tolist())]
        path.write_text("\n".join(rows) + "\n")
        _write_json(path.with_suffix(".json"), meta)
    else:
        path = table.to_csv(out / "kernel.csv", {"config": cfg.to_dict()})
    print(path)
    return 0


def _write_potential(out: Path, name: str, pot, cfg: RunConfig):
    extra = {"config": cfg.to_dict()}
    save_potential(out / name, pot, extra)
    export_slice_csv(out / f"{name}_v_slice.csv", pot.v, axis=0,
                     index=(0, cfg.n // 2, cfg.n // 2))


def cmd_solve_linear(cfg: RunConfig, args) -> int:
    scheme = derive_scheme(cfg.masses)
    grid = Grid3(cfg.n, cfg.box_length)
    sources = build_sources(cfg, grid)
    pot = solve_linear_response(scheme, sources, cfg.coupling, grid)
    out = Path(cfg.out_dir)
    _write_potential(out, "linear", pot, cfg)
    from .fields import field_norms
    sob, act = field_norms(pot)
    _write_json(out / "linear_report.json", {"config": cfg.to_dict(), "sobolev_norm": sob, "maxwell_action": act,
                                              "source_adjustments": sources.adjustments})
    print(out / "linear_report.json")
    return 0


def cmd_solve_sc(cfg: RunConfig, args) -> int:
    scheme = derive_scheme(cfg.masses)
    grid = Grid3(cfg.n, cfg.box_length)
    sources = build_sources(cfg, grid)
    init = "linear" if getattr(args, "init", "zero") == "linear" else None
    report = solve_self_consistent(scheme, sources, grid, cfg.saddle_config(), initial=init)
    out = Path(cfg.out_dir)
    _write_potential(out, "self_consistent", report.potential, cfg)
    payload = report.to_dict()
    payload["run_config"] = cfg.to_dict()
    payload["source_adjustments"] = sources.adjustments
    _write_json(out / "solve_report.json", payload)
    print(out / "solve_report.json")
    return 0 if report.status == "converged" else 1


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verification import run_suite
    profile = "full" if args.full else "quick"
    results = []
    for res in run_suite(profile):
        print(res.line(), flush=True)
        results.append(res)
    out = Path(cfg.out_dir)
    _write_json(out / f"verify_{profile}.json",
                {"profile": profile, "config": cfg.to_dict(),
                 "results": [{"name": r.name, "passed": r.passed, "metrics": r.metrics} for r in results]})
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 1


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--masses", help="m0,m1,m2")
    common.add_argument("--out-dir", dest="out_dir", help=f"output directory (else ${OUT_ENV}, else config)")
    common.add_argument("--threads", type=int, help="cap on BLAS/LAPACK threads")
    common.add_argument("--seed", type=int)

    grid = _Parser(add_help=False)
    grid.add_argument("--coupling", "-e", type=float)
    grid.add_argument("--n", type=int, help="grid points per axis")
    grid.add_argument("--box", type=float, help="box length")
    grid.add_argument("--charge", type=float, help="Gaussian source charge")
    grid.add_argument("--width", type=float, help="Gaussian source width")

    parser = _Parser(prog="dirac-vacuum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("scheme", parents=[common], help="print the PV scheme as JSON")
    for name in ("kernel", "uehling"):
        p = sub.add_parser(name, parents=[common], help=f"tabulate the {name} kernel")
        p.add_argument("--kmax", type=float)
        p.add_argument("--points", type=int)
    sub.add_parser("solve-linear", parents=[common, grid], help="screened linear-response potentials")
    p = sub.add_parser("solve-sc", parents=[common, grid], help="self-consistent saddle-point solve")
    p.add_argument("--damping", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--trust-r", dest="trust_r", type=float)
    p.add_argument("--init", choices=["zero", "linear"], default="zero")
    p = sub.add_parser("verify", parents=[common], help="run the property suite")
    tier = p.add_mutually_exclusive_group()
    tier.add_argument("--quick", action="store_true", help="small lattices (default)")
    tier.add_argument("--full", action="store_true", help="acceptance-size lattices")
    return parser


COMMANDS = {
    "scheme": cmd_scheme,
    "kernel": cmd_kernel,
    "uehling": lambda cfg, args: cmd_kernel(cfg, args, uehling=True),
    "solve-linear": cmd_solve_linear,
    "solve-sc": cmd_solve_sc,
    "verify": cmd_verify,
}


def _thread_limit(threads):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def run_command(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        with _thread_limit(args.threads):
            return COMMANDS[args.command](cfg, args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, DegenerateVacuumError, CapacityError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():  # pragma: no cover - thin wrapper
    sys.exit(run_command())


if __name__ == "__main__":  # pragma: no cover
    main()
