"""Command-line front end.

Every command prints a JSON envelope ``{command, inputs, results,
tool_version}`` except ``sweep``, which writes CSV.  Exit codes: 0 when the
analysis completed (whatever it found), 1 on runtime or numeric failure,
2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .assembly import (
    Dos09Hybrid,
    ExplicitFamily,
    MaxMargin,
    assemble,
    dmp_test,
    export_matrix_market,
    m_matrix_check,
)
from .exceptions import MonostencilError
from .feasibility import feasibility_threshold, margin_sweep, monotonicity_margin
from .mesh import (
    Mesh1D,
    ShishkinSpec,
    TensorMesh2D,
    bakhvalov_mesh,
    classify_cells,
    shishkin_mesh,
    uniform_mesh,
)
from .stencil import (
    AsymmetricCellGeometry,
    CellGeometry,
    FreeParameters,
    beta6_identity_gap,
    moment_residuals,
    solve_stencil,
    solve_stencil_asymmetric,
)

ENVELOPE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "inputs", "results", "tool_version"],
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string"},
        "inputs": {"type": "object"},
        "results": {"type": ["object", "array"]},
        "tool_version": {"type": "string", "pattern": r"^\d+\.\d+\.\d+"},
    },
}

MESH_SCHEMA = {
    "type": "object",
    "required": ["x", "y"],
    "additionalProperties": False,
    "properties": {
        "x": {"type": "array", "items": {"type": "number"}, "minItems": 3},
        "y": {"type": "array", "items": {"type": "number"}, "minItems": 3},
    },
}

SWEEP_HEADER = ("ratio", "normalized_margin", "feasible")


@dataclass
class ReportEnvelope:
    command: str
    inputs: dict
    results: Any
    tool_version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> ReportEnvelope:
        data = json.loads(text)
        return cls(**data)


class UsageError(Exception):
    """Input that parses but violates a schema; mapped to exit code 2."""


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text!r}")
    return value


def _finite_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
    return value


def _ratio_range(text):
    """``a:b:step`` -> inclusive list of ratios."""
    try:
        a, b, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:step, got {text!r}")
    if not (a > 0 and b >= a and step > 0) or not all(map(math.isfinite, (a, b, step))):
        raise argparse.ArgumentTypeError(f"need 0 < a <= b and step > 0, got {text!r}")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + k * step for k in range(count)]


def _emit(command, inputs, results, out=None):
    text = ReportEnvelope(command, inputs, results).to_json()
    print(text, file=out or sys.stdout)


def _stencil_payload(st, with_gap):
    res = moment_residuals(st)
    return {
        "stencil": st.as_dict(),
        "moment_residuals": dict(zip(("r0", "r1", "r2", "r3", "r4", "r5"), res.as_array().tolist())),
        "max_relative_residual": res.max_relative(),
        "beta6_identity_gap": beta6_identity_gap(st) if with_gap else None,
    }


def cmd_stencil(args):
    free = FreeParameters(args.beta2, args.beta3, args.beta4)
    inputs = {"beta2": args.beta2, "beta3": args.beta3, "beta4": args.beta4}
    if args.asym:
        geom = AsymmetricCellGeometry(*args.asym)
        inputs["asym"] = list(args.asym)
        st = solve_stencil_asymmetric(geom, free)
    else:
        if args.H is None or args.h is None:
            raise UsageError("either --H and --h or --asym is required")
        geom = CellGeometry(args.H, args.h)
        inputs.update(H=args.H, h=args.h)
        st = solve_stencil(geom, free)
    payload = _stencil_payload(st, with_gap=not args.asym)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "value"])
        for k, v in payload["stencil"].items():
            writer.writerow([k, repr(v)])
        for k, v in payload["moment_residuals"].items():
            writer.writerow([k, repr(v)])
        if payload["beta6_identity_gap"] is not None:
            writer.writerow(["beta6_identity_gap", repr(payload["beta6_identity_gap"])])
        sys.stdout.write(buf.getvalue())
    else:
        _emit("stencil", inputs, payload)
    return 0


def cmd_margin(args):
    rep = monotonicity_margin(CellGeometry(args.H, args.h))
    _emit("margin", {"H": args.H, "h": args.h}, rep.as_dict())
    return 0


def cmd_threshold(args):
    r = feasibility_threshold(tol=args.tol)
    _emit("threshold", {"tol": args.tol}, {"threshold": r})
    return 0


def cmd_sweep(args):
    rows = sorted(margin_sweep(args.ratios), key=lambda r: r.ratio)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in rows:
        writer.writerow([repr(r.ratio), repr(r.normalized_margin), "true" if r.feasible else "false"])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _gen_1d(kind, n, eps, sigma, q, side) -> Mesh1D:
    if kind == "uniform":
        return uniform_mesh(n)
    if eps is None:
        raise UsageError(f"--eps is required for a {kind} mesh")
    if kind == "shishkin":
        return shishkin_mesh(ShishkinSpec(n, eps, sigma, side))
    return bakhvalov_mesh(n, eps, sigma, q, side)


def cmd_mesh_gen(args):
    x = _gen_1d(args.kind, args.n, args.eps, args.sigma, args.q, args.layer_side)
    y_kind = args.y_kind or args.kind
    y = _gen_1d(
        y_kind,
        args.y_n or args.n,
        args.y_eps if args.y_eps is not None else args.eps,
        args.y_sigma if args.y_sigma is not None else args.sigma,
        args.q,
        args.y_layer_side or args.layer_side,
    )
    text = json.dumps(TensorMesh2D(x, y).to_json_dict())
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def load_mesh(path) -> TensorMesh2D:
    """Read mesh JSON; schema problems raise :class:`UsageError`."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read mesh file: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"mesh file is not valid JSON: {exc}")
    if not isinstance(data, dict) or set(data) != {"x", "y"}:
        raise UsageError('mesh JSON must be an object with exactly the keys "x" and "y"')
    for key in ("x", "y"):
        vals = data[key]
        if not isinstance(vals, list) or len(vals) < 3 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals
        ):
            raise UsageError(f'mesh key "{key}" must be a list of at least 3 numbers')
    return TensorMesh2D.from_json_dict(data)


def cmd_classify(args):
    mesh = load_mesh(args.mesh)
    cl = classify_cells(mesh)
    bad = cl.infeasible
    shown = bad if args.all else bad[:100]
    results = cl.summary()
    results["infeasible_nodes"] = [list(ij) for ij in shown]
    results["truncated"] = len(shown) < len(bad)
    _emit("classify", {"mesh": str(args.mesh), "all": args.all}, results)
    return 0


def cmd_check(args):
    mesh = load_mesh(args.mesh)
    strategy = {
        "maxmargin": MaxMargin(),
        "family": ExplicitFamily(),
        "hybrid": Dos09Hybrid(args.threshold),
    }[args.scheme]
    system = assemble(mesh, strategy)
    report = m_matrix_check(system)
    dmp = dmp_test(system, trials=args.dmp_trials, seed=args.seed)
    if args.export_matrix:
        export_matrix_market(system, args.export_matrix,
                             comment=f"-L_h, scheme={args.scheme}, n={system.n}")
    mm = report.as_dict(limit=None if args.all else 100)
    mm["violating_nodes"] = [list(ij) for ij in sorted({system.nodes[r] for r, _, _ in report.violations})]
    branches = {}
    for p in system.provenance:
        branches[p.branch] = branches.get(p.branch, 0) + 1
    inputs = {
        "mesh": str(args.mesh),
        "scheme": args.scheme,
        "threshold": args.threshold,
        "dmp_trials": args.dmp_trials,
        "seed": args.seed,
        "export_matrix": args.export_matrix,
    }
    results = {"n": system.n, "branches": branches, "m_matrix": mm, "dmp": dmp.as_dict()}
    _emit("check", inputs, results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monostencil",
        description="Nine-point stencils for u_xx + u_xy + u_yy: consistency, monotonicity, M-matrix checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stencil", help="build a consistent stencil from beta2, beta3, beta4")
    p.add_argument("--H", type=_positive_float)
    p.add_argument("--h", type=_positive_float)
    p.add_argument("--beta2", type=_finite_float, required=True)
    p.add_argument("--beta3", type=_finite_float, required=True)
    p.add_argument("--beta4", type=_finite_float, required=True)
    p.add_argument("--asym", type=_positive_float, nargs=4, metavar=("H-", "H+", "h-", "h+"))
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_stencil)

    p = sub.add_parser("margin", help="max-min monotonicity margin of a cell")
    p.add_argument("--H", type=_positive_float, required=True)
    p.add_argument("--h", type=_positive_float, required=True)
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("threshold", help="aspect ratio H/h where monotone stencils cease to exist")
    p.add_argument("--tol", type=_positive_float, default=1e-9)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("sweep", help="CSV table of normalized margins over H/h")
    p.add_argument("--ratios", type=_ratio_range, required=True, help="a:b:step, inclusive")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mesh", help="mesh generation")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="write a tensor mesh as JSON")
    g.add_argument("kind", choices=("uniform", "shishkin", "bakhvalov"))
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--eps", type=_positive_float)
    g.add_argument("--sigma", type=_positive_float, default=2.0)
    g.add_argument("--q", type=_positive_float, default=0.5)
    g.add_argument("--layer-side", choices=("low", "high"), default="low")
    g.add_argument("--y-kind", choices=("uniform", "shishkin", "bakhvalov"),
                   help="generator for y (default: same as x)")
    g.add_argument("--y-n", type=int)
    g.add_argument("--y-eps", type=_positive_float)
    g.add_argument("--y-sigma", type=_positive_float)
    g.add_argument("--y-layer-side", choices=("low", "high"))
    g.add_argument("--out")
    g.set_defaults(func=cmd_mesh_gen)

    p = sub.add_parser("classify", help="flag interior nodes without a monotone stencil")
    p.add_argument("--mesh", required=True)
    p.add_argument("--all", action="store_true", help="list every infeasible node")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("check", help="assemble -L_h and run M-matrix and DMP diagnostics")
    p.add_argument("--mesh", required=True)
    p.add_argument("--scheme", choices=("maxmargin", "family", "hybrid"), default="maxmargin")
    p.add_argument("--threshold", type=_positive_float, default=2.0)
    p.add_argument("--dmp-trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--export-matrix")
    p.add_argument("--all", action="store_true", help="list every violation")
    p.set_defaults(func=cmd_check)
    return parser


def _error(kind, message):
    print(json.dumps({"error": {"type": kind, "message": message}}))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _error("usage", str(exc))
        return 2
    except (MonostencilError, np.linalg.LinAlgError, ArithmeticError, OSError) as exc:
        _error(type(exc).__name__, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
