"""Command-line pipeline driver for ``.cartan`` metric documents.

Subcommands: ``connection``, ``curvature``, ``ricci``, ``torsion`` and
``check --vacuum``.  Output is deterministic (row-major, canonical
expression rendering); ``--json`` switches to the machine format described
by docs/cli-output.schema.json.  Exit codes: 0 success (for ``check``:
vacuum solution), 1 nonzero vacuum residuals, 2 any error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import dsl
from .curvature import (
    first_structural,
    ricci,
    riemann_components_coordinate,
    riemann_components_from_forms,
    scalar_curvature,
    second_structural,
)
from .einstein import vacuum_residuals
from .expr import DegreeOverflow, ExprError, ScalarExpr, degree_guard
from .exterior import BasisMismatch
from .geometry import (
    Connection,
    Metric,
    NonConstantFrameMetric,
    SingularCoframe,
    SingularMetric,
    Torsion,
    connection_coefficients_coordinate,
    connection_one_forms_rigid,
    coordinate_metric_from_frame,
    line_element,
)

DEFAULT_MAX_DEGREE = 16

EXIT_OK = 0
EXIT_RESIDUAL = 1
EXIT_ERROR = 2


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except BrokenPipeError:  # downstream closed the pipe; not our error
        return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cartan",
        description="Connection, curvature and vacuum-Einstein reports for metric documents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("connection", "connection 1-forms and coefficients"),
        ("curvature", "curvature 2-forms and Riemann components"),
        ("ricci", "full Ricci table and scalar curvature"),
        ("torsion", "torsion 2-forms from the first structural equation"),
        ("check", "residual equations for a vacuum solution"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("document", help="path to a .cartan metric document")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument(
            "--basis",
            choices=("frame", "coordinate"),
            help="pipeline route (default: frame when the document has a coframe)",
        )
        p.add_argument(
            "--let",
            dest="lets",
            action="append",
            default=[],
            metavar="NAME=EXPR",
            help="substitute a declared function before the pipeline runs",
        )
        p.add_argument("--unicode", action="store_true", help="render with θ, Γ and ∧")
        if name == "check":
            p.add_argument(
                "--vacuum",
                action="store_true",
                required=True,
                help="check the vacuum field equations (Ricci = 0)",
            )
    return parser


def _fail(messages: list[str], as_json: bool, command: str) -> int:
    if as_json:
        print(json.dumps({"command": command, "errors": messages}, indent=2))
    else:
        for m in messages:
            print(m, file=sys.stderr)
    return EXIT_ERROR


def _run(args: argparse.Namespace) -> int:
    command: str = args.command
    as_json: bool = args.json
    try:
        with open(args.document, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        return _fail([f"error: cannot read {args.document}: {exc}"], as_json, command)

    result = dsl.parse(source)
    if not result.ok:
        msgs = [d.render() for d in result.diagnostics]
        return _fail(msgs or ["error: unparsable document"], as_json, command)
    document = result.document

    extra_lets: dict[str, ScalarExpr] = {}
    for stmt in args.lets:
        parsed = dsl.parse_let(stmt, document)
        if isinstance(parsed, dsl.Diagnostic):
            return _fail([parsed.render()], as_json, command)
        name, value = parsed
        extra_lets[name] = value

    try:
        cap = int(os.environ.get("CARTAN_MAX_DEGREE", DEFAULT_MAX_DEGREE))
    except ValueError:
        return _fail(
            ["error: CARTAN_MAX_DEGREE must be an integer"], as_json, command
        )

    try:
        with degree_guard(cap):
            built = dsl.build_geometry(document, extra_lets)
            if isinstance(built, dsl.Diagnostic):
                return _fail([built.render()], as_json, command)
            return _dispatch(command, args, built, as_json)
    except DegreeOverflow as exc:
        return _fail(
            [f"error: {exc}", "note: raise CARTAN_MAX_DEGREE to lift the guard"],
            as_json,
            command,
        )
    except (
        SingularMetric,
        SingularCoframe,
        NonConstantFrameMetric,
        BasisMismatch,
        ExprError,
    ) as exc:
        return _fail([f"error: {exc}"], as_json, command)


def _dispatch(command, args, built: dsl.BuiltGeometry, as_json: bool) -> int:
    basis = args.basis or ("frame" if built.coframe is not None else "coordinate")
    if basis == "frame" and built.coframe is None:
        return _fail(
            ["error: the frame route needs a coframe + frame_metric document"],
            as_json,
            command,
        )
    if basis == "coordinate" and built.coordinate_metric is None:
        metric = coordinate_metric_from_frame(built.frame_metric)
    elif basis == "coordinate":
        metric = built.coordinate_metric
    else:
        metric = built.frame_metric
    torsion = built.torsion

    uni: bool = args.unicode
    handler = {
        "connection": _cmd_connection,
        "curvature": _cmd_curvature,
        "ricci": _cmd_ricci,
        "torsion": _cmd_torsion,
        "check": _cmd_check,
    }[command]
    return handler(metric, torsion, basis, as_json, uni, args.document)


def _connection_for(metric: Metric, torsion: Torsion | None, basis: str) -> Connection:
    if basis == "frame":
        return connection_one_forms_rigid(metric.basis.coframe, metric)
    return connection_coefficients_coordinate(metric, torsion)


def _riemann_for(conn: Connection):
    forms = second_structural(conn)
    if conn.basis.kind == "coframe":
        return forms, riemann_components_from_forms(forms)
    return forms, riemann_components_coordinate(conn)


def _riemann_only(conn: Connection):
    if conn.basis.kind == "coframe":
        return riemann_components_from_forms(second_structural(conn))
    return riemann_components_coordinate(conn)


def _gamma(uni: bool) -> str:
    return "Γ" if uni else "Gamma"


def _sub(indices: tuple[int, ...]) -> str:
    body = "".join(str(i) for i in indices)
    return f"_{body}" if len(indices) == 1 else f"_{{{body}}}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_connection(metric, torsion, basis, as_json, uni, path) -> int:
    conn = _connection_for(metric, torsion, basis)
    n = conn.dim
    g = _gamma(uni)
    if as_json:
        payload = {
            "command": "connection",
            "basis": basis,
            "one_forms": [
                {"upper": a, "lower": b, "form": conn.one_form(a, b).to_json_dict()}
                for a in range(n)
                for b in range(n)
                if not conn.one_form(a, b).is_zero()
            ],
            "coefficients": [
                {"indices": list(idx), "value": val.render()}
                for idx, val in conn.components.iter_nonzero()
            ],
        }
        if conn.lowered_one_forms is not None:
            payload["lowered_one_forms"] = [
                {"indices": [a, b], "form": conn.lowered_one_forms[a][b].to_json_dict()}
                for a in range(n)
                for b in range(n)
                if not conn.lowered_one_forms[a][b].is_zero()
            ]
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    display_metric = (
        coordinate_metric_from_frame(metric) if basis == "frame" else metric
    )
    lines = [f"line element: {line_element(display_metric)}"]
    if conn.lowered_one_forms is not None:
        lines.append(f"connection 1-forms (lowered {g}_ab):")
        rows = [
            f"  {g}{_sub((a, b))} = {conn.lowered_one_forms[a][b].render(uni)}"
            for a in range(n)
            for b in range(n)
            if not conn.lowered_one_forms[a][b].is_zero()
        ]
        lines.extend(rows or ["  all zero"])
    lines.append(f"connection 1-forms ({g}^a_b):")
    rows = [
        f"  {g}^{a}{_sub((b,))} = {conn.one_form(a, b).render(uni)}"
        for a in range(n)
        for b in range(n)
        if not conn.one_form(a, b).is_zero()
    ]
    lines.extend(rows or ["  all zero"])
    lines.append(f"connection coefficients ({g}^a_bc):")
    for a in range(n):
        lines.append(f"  {g}^{a}:")
        for b in range(n):
            row = ", ".join(conn.coefficient(a, b, c).render() for c in range(n))
            lines.append(f"    [{row}]")
    print("\n".join(lines))
    return EXIT_OK


def _cmd_curvature(metric, torsion, basis, as_json, uni, path) -> int:
    conn = _connection_for(metric, torsion, basis)
    forms, riem = _riemann_for(conn)
    n = conn.dim
    if as_json:
        payload = {
            "command": "curvature",
            "basis": basis,
            "two_forms": [
                {"upper": a, "lower": b, "form": forms[a][b].to_json_dict()}
                for a in range(n)
                for b in range(n)
                if not forms[a][b].is_zero()
            ],
            "riemann": [
                {"indices": list(idx), "value": val.render()}
                for idx, val in riem.iter_nonzero()
            ],
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    lines = ["curvature 2-forms (R^a_b):"]
    rows = [
        f"  R^{a}{_sub((b,))} = {forms[a][b].render(uni)}"
        for a in range(n)
        for b in range(n)
        if not forms[a][b].is_zero()
    ]
    lines.extend(rows or ["  all zero"])
    lines.append("nonzero Riemann components (R^a_bcd):")
    rows = [
        f"  R^{idx[0]}{_sub(idx[1:])} = {val.render()}"
        for idx, val in riem.iter_nonzero()
    ]
    lines.extend(rows or ["  all zero"])
    print("\n".join(lines))
    return EXIT_OK


def _cmd_ricci(metric, torsion, basis, as_json, uni, path) -> int:
    conn = _connection_for(metric, torsion, basis)
    riem = _riemann_only(conn)
    ric = ricci(riem)
    scal = scalar_curvature(ric, metric)
    n = conn.dim
    if as_json:
        payload = {
            "command": "ricci",
            "basis": basis,
            "ricci": [
                {"indices": [a, b], "value": ric.get((a, b)).render()}
                for a in range(n)
                for b in range(n)
            ],
            "scalar": scal.render(),
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    lines = ["Ricci tensor (R_ab):"]
    for a in range(n):
        for b in range(n):
            lines.append(f"  R{_sub((a, b))} = {ric.get((a, b)).render()}")
    lines.append(f"scalar curvature: {scal.render()}")
    print("\n".join(lines))
    return EXIT_OK


def _cmd_torsion(metric, torsion, basis, as_json, uni, path) -> int:
    conn = _connection_for(metric, torsion, basis)
    tforms = first_structural(conn)
    if as_json:
        payload = {
            "command": "torsion",
            "basis": basis,
            "torsion_forms": [
                {"upper": a, "form": f.to_json_dict()} for a, f in enumerate(tforms)
            ],
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    lines = ["torsion 2-forms (T^a = d theta^a + Gamma^a_b /\\ theta^b):"]
    for a, f in enumerate(tforms):
        lines.append(f"  T^{a} = {f.render(uni)}")
    if all(f.is_zero() for f in tforms):
        lines.append("torsion vanishes: the connection is symmetric")
    print("\n".join(lines))
    return EXIT_OK


def _cmd_check(metric, torsion, basis, as_json, uni, path) -> int:
    report = vacuum_residuals(metric, torsion)
    if as_json:
        payload = {"command": "check", **report.to_json_dict()}
        print(json.dumps(payload, indent=2))
        return EXIT_OK if report.is_vacuum else EXIT_RESIDUAL
    if report.is_vacuum:
        print("vacuum solution: all Ricci components vanish")
        print(f"scalar curvature: {report.scalar.render()}")
        return EXIT_OK
    lines = ["vacuum residuals (each must vanish):"]
    for r in report.independent_residuals:
        lines.append(f"  {r.render()}")
    if report.note:
        lines.append(f"note: {report.note}")
    lines.append(f"scalar curvature: {report.scalar.render()}")
    lines.append(
        f"not a vacuum solution ({len(report.independent_residuals)} independent residual"
        + ("s" if len(report.independent_residuals) != 1 else "")
        + ")"
    )
    print("\n".join(lines))
    return EXIT_RESIDUAL


if __name__ == "__main__":
    sys.exit(main())
