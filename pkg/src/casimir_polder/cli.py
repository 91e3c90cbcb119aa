"""Command-line front end: configuration, orchestration, serialization.

Subcommands map onto the computation modules:

  two-body      pair coefficient cells by either formalism
  three-body    three-atom coefficients for one geometry
  sweep         cos(theta) sweep comparing both formalisms
  mc-validate   Monte Carlo spot check of the scalar TE pair coefficient

Results are serialized as CSV with a fixed header and 17 significant digits
per number, or as JSON with the same fields; non-ok sweep rows additionally
carry status and message (including the best partial estimate when a
quadrature gave up).  Exit status: 0 success, 1 usage error, 2 numerical
failure or unwritable output.

Quadrature tolerance resolution order: --rel-tol flag, then config-file
key, then the CASIMIR_QUAD_TOL environment variable, then each module's
default specification.  Config files are flat "key = value" lines using
the flag spellings without the leading dashes; flags override file keys.

Two conventions worth knowing when reading the output.  The worldline
method has no mixed-polarization channel, so its "cross" cells are
identically zero and are emitted that way to keep the method-by-mode grid
rectangular.  Worldline three-body totals are reported on the
per-component scale of the electromagnetic total (the TE+TM sum divided by
three, see the sweep module); the te and tm cells are the raw per-mode
coefficients.  Three-body runs given explicit --positions quote the
coefficient with the largest pairwise separation as reference length,
while the --b-over-c/--cos-theta family fixes the unit A-C distance like
the sweep.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import bridge_mc, green_tensor, worldline
from .core import AtomSystem, GeometryError
from .quadrature import ConvergenceError, IntegrandError
from .sweep import (
    SWEEP_METHODS,
    SweepConfig,
    build_geometry,
    default_grid,
    run_sweep,
)

__all__ = [
    "CSV_HEADER",
    "ResultCell",
    "RunConfig",
    "UsageError",
    "compute",
    "emit",
    "main",
    "parse_config",
]

CSV_HEADER = ("command,method,mode,order,b_over_c,cos_theta,"
              "coefficient,error_estimate")

_METHOD_CHOICES = ("worldline", "green-tensor", "both")
_MODE_CHOICES = ("te", "tm", "cross", "total", "all")
_MODE_ORDER = ("te", "tm", "cross", "total")
_FORMAT_CHOICES = ("csv", "json")

_CHOICE_KEYS = {
    "method": _METHOD_CHOICES,
    "mode": _MODE_CHOICES,
    "format": _FORMAT_CHOICES,
}
_NUMBER_KEYS = {
    "rel-tol": float,
    "b-over-c": float,
    "cos-theta": float,
    "separation": float,
    "grid": int,
    "paths": int,
    "seed": int,
}
_COMMAND_KEYS = {
    "two-body": ("method", "mode", "rel-tol", "format", "output"),
    "three-body": ("method", "mode", "positions", "b-over-c", "cos-theta",
                   "rel-tol", "format", "output"),
    "sweep": ("method", "b-over-c", "grid", "rel-tol", "format", "output"),
    "mc-validate": ("paths", "seed", "separation", "format", "output"),
}

_NUMERICAL_FAILURES = (GeometryError, IntegrandError, ConvergenceError,
                       RuntimeError)


class UsageError(Exception):
    """Bad flags, config keys, or values; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    """argparse that reports errors instead of exiting the process."""

    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved invocation: command plus every parameter it needs."""

    command: str
    method: str = "both"
    mode: str = "all"
    fmt: str = "csv"
    output: str = None
    rel_tol: float = None
    b_over_c: float = None
    cos_theta: float = None
    positions: tuple = None
    grid_points: int = 41
    n_paths: int = 100000
    seed: int = 0
    separation: float = 1.0


@dataclass(frozen=True)
class ResultCell:
    """One output row; None geometry fields serialize as empty CSV cells."""

    command: str
    method: str
    mode: str
    order: int
    b_over_c: float
    cos_theta: float
    value: float
    error_estimate: float
    status: str = "ok"
    message: str = ""


def _build_parser():
    parser = _Parser(
        prog="casimir-polder",
        description="Retarded interaction coefficients for neutral atoms, "
                    "by worldline and electromagnetic scattering routes.")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                required=True)

    def add_common(p):
        p.add_argument("--format", choices=_FORMAT_CHOICES, default=None,
                       help="output serialization (default csv)")
        p.add_argument("--output", default=None, metavar="PATH",
                       help="write to PATH instead of stdout")
        p.add_argument("--config", default=None, metavar="FILE",
                       help="flat 'key = value' config file; flags override")

    def add_rel_tol(p):
        p.add_argument("--rel-tol", type=float, default=None, metavar="TOL",
                       help="relative quadrature tolerance override")

    two = sub.add_parser("two-body", help="pair coefficient cells")
    two.add_argument("--method", choices=_METHOD_CHOICES, default=None)
    two.add_argument("--mode", choices=_MODE_CHOICES, default=None)
    add_rel_tol(two)
    add_common(two)

    three = sub.add_parser("three-body",
                           help="three-atom coefficients for one geometry")
    three.add_argument("--method", choices=_METHOD_CHOICES, default=None)
    three.add_argument("--mode", choices=_MODE_CHOICES, default=None)
    three.add_argument("--positions", default=None, metavar="TRIPLES",
                       help='three atoms as "x,y,z;x,y,z;x,y,z"')
    three.add_argument("--b-over-c", type=float, default=None)
    three.add_argument("--cos-theta", type=float, default=None)
    add_rel_tol(three)
    add_common(three)

    sweep = sub.add_parser("sweep",
                           help="cos(theta) sweep comparing both routes")
    sweep.add_argument("--method", choices=_METHOD_CHOICES, default=None)
    sweep.add_argument("--b-over-c", type=float, default=None)
    sweep.add_argument("--grid", type=int, default=None, metavar="N",
                       help="uniform cos(theta) points in [-1, 1] "
                            "(default 41)")
    add_rel_tol(sweep)
    add_common(sweep)

    mc = sub.add_parser("mc-validate",
                        help="Monte Carlo check of the scalar TE pair cell")
    mc.add_argument("--paths", type=int, default=None)
    mc.add_argument("--seed", type=int, default=None)
    mc.add_argument("--separation", type=float, default=None)
    add_common(mc)

    return parser


def _convert_config_value(key, value):
    if key in _CHOICE_KEYS:
        if value not in _CHOICE_KEYS[key]:
            choices = ", ".join(_CHOICE_KEYS[key])
            raise UsageError(f"invalid choice {value!r} for config key "
                             f"{key!r} (choose from {choices})")
        return value
    converter = _NUMBER_KEYS.get(key)
    if converter is None:
        return value
    try:
        return converter(value)
    except ValueError:
        raise UsageError(f"invalid {converter.__name__} value {value!r} "
                         f"for config key {key!r}") from None


def _read_config_file(path, command):
    allowed = _COMMAND_KEYS[command]
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"malformed config line {raw.strip()!r} "
                             "(expected 'key = value')")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in allowed:
            raise UsageError(f"unknown config key {key!r} for command "
                             f"{command!r}")
        values[key] = _convert_config_value(key, value.strip())
    return values


def _merged(ns, cfg, key, default=None):
    flag = getattr(ns, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in cfg:
        return cfg[key]
    return default


def _resolve_rel_tol(ns, cfg):
    value = getattr(ns, "rel_tol", None)
    if value is None and "rel-tol" in cfg:
        value = cfg["rel-tol"]
    if value is None:
        env = os.environ.get("CASIMIR_QUAD_TOL")
        if not env:
            return None
        try:
            value = float(env)
        except ValueError:
            raise UsageError(
                f"invalid CASIMIR_QUAD_TOL value {env!r}") from None
    if not (math.isfinite(value) and value > 0.0):
        raise UsageError(f"rel-tol must be positive and finite, got {value}")
    return float(value)


def _parse_positions(text):
    atoms = text.split(";")
    if len(atoms) != 3:
        raise UsageError(f"positions need three ';'-separated atoms, got "
                         f"{len(atoms)} in {text!r}")
    parsed = []
    for atom in atoms:
        coords = atom.split(",")
        if len(coords) != 3:
            raise UsageError(f"atom position {atom!r} needs three "
                             "comma-separated coordinates")
        triple = []
        for coord in coords:
            try:
                triple.append(float(coord))
            except ValueError:
                raise UsageError(f"invalid coordinate {coord.strip()!r} in "
                                 f"{atom!r}") from None
        parsed.append(tuple(triple))
    return tuple(parsed)


def parse_config(argv, config_path=None):
    """Resolve argv (plus an optional config file) into a RunConfig.

    Flags override config-file keys; a --config flag overrides the
    config_path argument.  Raises UsageError on unknown flags or keys,
    malformed values, and parameter combinations the command cannot run.
    """
    ns = _build_parser().parse_args(list(argv))
    command = ns.command
    path = ns.config if ns.config is not None else config_path
    cfg = _read_config_file(path, command) if path else {}

    fmt = _merged(ns, cfg, "format", "csv")
    output = _merged(ns, cfg, "output")

    if command == "mc-validate":
        n_paths = _merged(ns, cfg, "paths", 100000)
        seed = _merged(ns, cfg, "seed", 0)
        separation = _merged(ns, cfg, "separation", 1.0)
        if n_paths <= 0:
            raise UsageError(f"invalid path count {n_paths}")
        if not 0 <= seed < 2 ** 64:
            raise UsageError(f"seed {seed} outside [0, 2**64)")
        if not (math.isfinite(separation) and separation > 0.0):
            raise UsageError(f"invalid separation {separation}")
        return RunConfig(command=command, fmt=fmt, output=output,
                         n_paths=n_paths, seed=seed, separation=separation)

    rel_tol = _resolve_rel_tol(ns, cfg)
    method = _merged(ns, cfg, "method", "both")

    if command == "two-body":
        mode = _merged(ns, cfg, "mode", "all")
        return RunConfig(command=command, method=method, mode=mode, fmt=fmt,
                         output=output, rel_tol=rel_tol)

    if command == "three-body":
        mode = _merged(ns, cfg, "mode", "all")
        if method != "worldline" and mode in ("te", "tm", "cross"):
            raise UsageError(
                f"mode {mode!r} is only available with --method worldline "
                "for three-body runs")
        positions_text = _merged(ns, cfg, "positions")
        b_over_c = _merged(ns, cfg, "b-over-c")
        cos_theta = _merged(ns, cfg, "cos-theta")
        if positions_text is not None:
            if b_over_c is not None or cos_theta is not None:
                raise UsageError("give either --positions or the "
                                 "--b-over-c/--cos-theta pair, not both")
            positions = _parse_positions(positions_text)
            return RunConfig(command=command, method=method, mode=mode,
                             fmt=fmt, output=output, rel_tol=rel_tol,
                             positions=positions)
        if b_over_c is None or cos_theta is None:
            raise UsageError("three-body needs geometry: --positions or "
                             "both --b-over-c and --cos-theta")
        return RunConfig(command=command, method=method, mode=mode, fmt=fmt,
                         output=output, rel_tol=rel_tol, b_over_c=b_over_c,
                         cos_theta=cos_theta)

    b_over_c = _merged(ns, cfg, "b-over-c")
    if b_over_c is None:
        raise UsageError("sweep requires --b-over-c")
    grid_points = _merged(ns, cfg, "grid", 41)
    if grid_points < 2:
        raise UsageError(f"invalid grid size {grid_points}: need at least "
                         "2 points")
    return RunConfig(command=command, method=method, fmt=fmt, output=output,
                     rel_tol=rel_tol, b_over_c=b_over_c,
                     grid_points=grid_points)


def _quad_spec(default, rel_tol):
    return default if rel_tol is None else replace(default, rel_tol=rel_tol)


def _expand_methods(method):
    return _METHOD_CHOICES[:2] if method == "both" else (method,)


def _expand_modes(mode):
    return _MODE_ORDER if mode == "all" else (mode,)


def _two_body_cells(config):
    cells = []
    for method in _expand_methods(config.method):
        if method == "worldline":
            spec = _quad_spec(worldline.DEFAULT_TWO_BODY_SPEC,
                              config.rel_tol)
            te = worldline.te_two_body_coefficient(spec=spec)
            tm = worldline.tm_two_body_coefficient(spec=spec)
            by_mode = {
                "te": (te.value, te.error_estimate),
                "tm": (tm.value, tm.error_estimate),
                # The scalar modes carry no mixed channel.
                "cross": (0.0, 0.0),
                "total": (te.value + tm.value,
                          te.error_estimate + tm.error_estimate),
            }
        else:
            spec = _quad_spec(green_tensor.DEFAULT_TWO_BODY_SPEC,
                              config.rel_tol)
            by_mode = {}
            for mode, gt_mode in (("te", "TE"), ("tm", "TM"),
                                  ("cross", "cross"), ("total", "total")):
                result = green_tensor.two_body_coefficient(gt_mode,
                                                           spec=spec)
                by_mode[mode] = (result.value, result.error_estimate)
        for mode in _expand_modes(config.mode):
            value, err = by_mode[mode]
            cells.append(ResultCell(
                command=config.command, method=method, mode=mode, order=2,
                b_over_c=None, cos_theta=None, value=value,
                error_estimate=err))
    return cells


def _three_body_system(config):
    if config.positions is not None:
        return AtomSystem(positions=np.array(config.positions, dtype=float),
                          polarizabilities=np.ones(3))
    return build_geometry(config.b_over_c, config.cos_theta)


def _three_body_cells(config):
    system = _three_body_system(config)
    cells = []
    for method in _expand_methods(config.method):
        if method == "worldline":
            modes = _expand_modes(config.mode)
            spec = _quad_spec(worldline.DEFAULT_THREE_BODY_SPEC,
                              config.rel_tol)
            te = tm = None
            if {"te", "total"} & set(modes):
                te = worldline.te_three_body_coefficient(system, spec=spec)
            if {"tm", "total"} & set(modes):
                tm = worldline.tm_three_body_coefficient(system, spec=spec)
            by_mode = {"cross": (0.0, 0.0)}
            if te is not None:
                by_mode["te"] = (te.value, te.error_estimate)
            if tm is not None:
                by_mode["tm"] = (tm.value, tm.error_estimate)
            if te is not None and tm is not None:
                by_mode["total"] = (
                    (te.value + tm.value) / 3.0,
                    (te.error_estimate + tm.error_estimate) / 3.0)
        else:
            spec = _quad_spec(green_tensor.DEFAULT_ORACLE_SPEC,
                              config.rel_tol)
            result = green_tensor.three_body_total_general(system, spec=spec)
            modes = ("total",)
            by_mode = {"total": (result.value, result.error_estimate)}
        for mode in modes:
            value, err = by_mode[mode]
            cells.append(ResultCell(
                command=config.command, method=method, mode=mode, order=3,
                b_over_c=config.b_over_c, cos_theta=config.cos_theta,
                value=value, error_estimate=err))
    return cells


def _sweep_cells(config):
    method_map = {"worldline": ("worldline_sum",),
                  "green-tensor": ("green_tensor",),
                  "both": SWEEP_METHODS}
    sweep_config = SweepConfig(
        b_over_c=config.b_over_c,
        cos_theta_grid=default_grid(config.grid_points),
        methods=method_map[config.method],
        worldline_spec=_quad_spec(worldline.DEFAULT_THREE_BODY_SPEC,
                                  config.rel_tol),
        green_tensor_spec=_quad_spec(green_tensor.DEFAULT_ORACLE_SPEC,
                                     config.rel_tol))
    rows = sorted(run_sweep(sweep_config), key=lambda row: row.cos_theta)
    return [ResultCell(command=config.command, method=row.method,
                       mode="total", order=3, b_over_c=row.b_over_c,
                       cos_theta=row.cos_theta, value=row.value,
                       error_estimate=row.error_estimate, status=row.status,
                       message=row.message)
            for row in rows]


def _mc_cells(config):
    estimate = bridge_mc.mc_te_two_body(config.separation, config.n_paths,
                                        config.seed)
    return [ResultCell(command=config.command, method="monte-carlo",
                       mode="te", order=2, b_over_c=None, cos_theta=None,
                       value=estimate.mean,
                       error_estimate=estimate.standard_error)]


_COMMAND_DISPATCH = {
    "two-body": _two_body_cells,
    "three-body": _three_body_cells,
    "sweep": _sweep_cells,
    "mc-validate": _mc_cells,
}


def compute(config):
    """Run the configured command and return its ResultCell list."""
    return _COMMAND_DISPATCH[config.command](config)


def _format_number(value):
    if value is None:
        return ""
    return "%.16e" % float(value)


def _render_csv(cells):
    lines = [CSV_HEADER]
    for cell in cells:
        lines.append(",".join((
            cell.command, cell.method, cell.mode, str(cell.order),
            _format_number(cell.b_over_c), _format_number(cell.cos_theta),
            _format_number(cell.value),
            _format_number(cell.error_estimate))))
    return "\n".join(lines) + "\n"


def _render_json(cells):
    results = []
    for cell in cells:
        entry = {
            "command": cell.command,
            "method": cell.method,
            "mode": cell.mode,
            "order": cell.order,
            "b_over_c": cell.b_over_c,
            "cos_theta": cell.cos_theta,
            "coefficient": cell.value,
            "error_estimate": cell.error_estimate,
        }
        if cell.status != "ok":
            entry["status"] = cell.status
            entry["message"] = cell.message
        results.append(entry)
    return json.dumps({"results": results}, indent=2) + "\n"


def emit(results, fmt, path):
    """Serialize cells to CSV or JSON; return the process exit status.

    Writes to stdout when path is None.  Returns 2 when there is nothing
    to write, the path is unwritable, or any cell records a numerical
    failure (the output is still written in that case so completed work
    is not discarded); 0 otherwise.
    """
    cells = list(results)
    if not cells:
        print("no results to emit", file=sys.stderr)
        return 2
    text = _render_csv(cells) if fmt == "csv" else _render_json(cells)
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"cannot write {path}: {exc}", file=sys.stderr)
            return 2
    if any(cell.status == "failed" for cell in cells):
        return 2
    return 0


def main(argv=None):
    """Console entry point; returns the exit status instead of raising."""
    try:
        config = parse_config(sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        cells = compute(config)
    except _NUMERICAL_FAILURES as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return emit(cells, config.fmt, config.output)


if __name__ == "__main__":
    sys.exit(main())
