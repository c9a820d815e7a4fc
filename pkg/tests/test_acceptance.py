"""Acceptance criteria, one test per criterion.

Each test prints a ``criterion N: PASS/FAIL`` line (visible with -s or in
failure output) and asserts symbolic equality at zero tolerance unless a
numeric tolerance is part of the criterion itself.
"""

import itertools
import json
import pathlib
import random
import time
from contextlib import contextmanager

import pytest

from cartan.expr import CoordSymbol, ScalarExpr, ZERO, ONE, coordinate, func_deriv
from cartan.exterior import (
    Chart,
    Form,
    alternate,
    exterior_derivative,
    interior_product,
    wedge,
)
from cartan.geometry import (
    Metric,
    connection_coefficients_coordinate,
    connection_one_forms_rigid,
    covariant_derivative_metric,
)
from cartan.curvature import (
    bianchi_torsion_residual,
    first_structural,
    numeric_crosscheck,
    ricci,
    riemann_components_coordinate,
    riemann_components_from_forms,
    riemann_symmetry_residuals,
    scalar_curvature,
    second_structural,
    torsion_components_from_forms,
    determinant_at,
)
from cartan.einstein import build_pp_wave
from cartan.cli import main

from _oracles import classic_christoffel
from _support import rand_form, rand_metric, rand_torsion

ROOT = pathlib.Path(__file__).resolve().parent.parent
DOCS = ROOT / "documents"
MALFORMED = pathlib.Path(__file__).resolve().parent / "data" / "malformed"

H_ARGS = ("x", "y", "u")


def h(*derivs) -> ScalarExpr:
    return func_deriv("H", H_ARGS, derivs)


@contextmanager
def criterion(number: int, title: str):
    try:
        yield
    except BaseException:
        print(f"criterion {number}: FAIL - {title}")
        raise
    print(f"criterion {number}: PASS - {title}")


def test_criterion_1_golden_connection():
    with criterion(1, "golden wave connection 1-forms and coefficients"):
        start = time.monotonic()
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        elapsed = time.monotonic() - start
        tag = geo.coframe.basis()
        hx_t1 = Form(1, tag, {(1,): h("x")})
        hy_t1 = Form(1, tag, {(1,): h("y")})
        lowered_expected = {(1, 2): hx_t1, (2, 1): -hx_t1, (1, 3): hy_t1, (3, 1): -hy_t1}
        for a in range(4):
            for b in range(4):
                want = lowered_expected.get((a, b), Form.zero(1, tag))
                assert conn.lowered_one_forms[a][b] == want, ("lowered", a, b)
        raised_expected = {(0, 2): hx_t1, (0, 3): hy_t1, (2, 1): hx_t1, (3, 1): hy_t1}
        for a in range(4):
            for b in range(4):
                want = raised_expected.get((a, b), Form.zero(1, tag))
                assert conn.one_form(a, b) == want, ("raised", a, b)
        comp = conn.components
        assert comp.get((0, 2, 1)) == h("x")
        assert comp.get((0, 3, 1)) == h("y")
        assert comp.get((2, 1, 1)) == h("x")
        assert comp.get((3, 1, 1)) == h("y")
        assert len(comp.entries) == 4
        assert elapsed < 5.0, f"pipeline took {elapsed:.2f}s"


def test_criterion_2_golden_curvature_two_forms():
    with criterion(2, "golden curvature 2-forms: 4 nonzero, 12 zero"):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        forms = second_structural(conn)
        tag = geo.coframe.basis()
        # H_xx theta^2^theta^1 + H_xy theta^3^theta^1 on ascending tuples
        r_x = Form(2, tag, {(1, 2): -h("x", "x"), (1, 3): -h("x", "y")})
        r_y = Form(2, tag, {(1, 2): -h("x", "y"), (1, 3): -h("y", "y")})
        expected = {(0, 2): r_x, (0, 3): r_y, (2, 1): r_x, (3, 1): r_y}
        zeros = 0
        for a in range(4):
            for b in range(4):
                if (a, b) in expected:
                    assert forms[a][b] == expected[(a, b)], (a, b)
                else:
                    assert forms[a][b].is_zero(), (a, b)
                    zeros += 1
        assert zeros == 12


def test_criterion_3_golden_riemann_components():
    with criterion(3, "golden Riemann components with sign partners"):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        riem = riemann_components_from_forms(second_structural(conn))
        independent = {
            (0, 2, 2, 1): h("x", "x"),
            (0, 3, 2, 1): h("x", "y"),
            (0, 3, 3, 1): h("y", "y"),
            (0, 2, 3, 1): h("x", "y"),
            (2, 1, 2, 1): h("x", "x"),
            (2, 1, 3, 1): h("x", "y"),
            (3, 1, 2, 1): h("x", "y"),
            (3, 1, 3, 1): h("y", "y"),
        }
        seen = set()
        for (a, b, c, d), val in independent.items():
            assert riem.get((a, b, c, d)) == val, (a, b, c, d)
            assert riem.get((a, b, d, c)) == -val, (a, b, d, c)
            seen.add((a, b, c, d))
            seen.add((a, b, d, c))
        for idx in itertools.product(range(4), repeat=4):
            if idx not in seen:
                assert riem.get(idx).is_zero(), idx


def test_criterion_4_golden_ricci_and_scalar():
    with criterion(4, "golden Ricci sweep and vanishing scalar"):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        riem = riemann_components_from_forms(second_structural(conn))
        ric = ricci(riem)
        laplace = h("x", "x") + h("y", "y")
        for a in range(4):
            for b in range(4):
                want = laplace if (a, b) == (1, 1) else ZERO
                assert ric.get((a, b)) == want, (a, b)
        assert scalar_curvature(ric, geo.frame_metric).is_zero()


def test_criterion_5_headline_vacuum_check(capsys):
    with criterion(5, "vacuum check: symbolic residual, harmonic certificate"):
        doc = str(DOCS / "ppwave.cartan")
        code = main(["check", "--vacuum", doc])
        out = capsys.readouterr().out
        assert code == 1
        assert "H_xx + H_yy" in out
        code = main(["check", "--vacuum", doc, "--let", "H = x^2 - y^2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "vacuum solution" in out
        code = main(["check", "--vacuum", doc, "--let", "H = x^2 + y^2"])
        out = capsys.readouterr().out
        assert code == 1
        assert "4" in out.splitlines()[1]


def test_criterion_6_oracle_equivalence():
    with criterion(6, "bracket connection equals classical Christoffel oracle"):
        rng = random.Random(20_001)
        for case in range(20):
            g = rand_metric(rng, 2 if case % 2 else 3)
            conn = connection_coefficients_coordinate(g)
            assert conn.components == classic_christoffel(g), f"case {case}"
        geo = build_pp_wave()
        conn = connection_coefficients_coordinate(geo.coordinate_metric)
        assert conn.components == classic_christoffel(geo.coordinate_metric)


def test_criterion_7a_exterior_property_suites():
    with criterion(7, "exterior algebra property suites (100 cases each)"):
        chart = Chart(("u", "v", "x", "y"))
        basis = chart.coordinate_basis()
        funcs = (("H", H_ARGS),)
        rng = random.Random(20_002)
        for _ in range(100):  # d^2 = 0
            f = rand_form(rng, basis, rng.randint(0, 2), funcs)
            assert exterior_derivative(exterior_derivative(f)).is_zero()
        rng = random.Random(20_003)
        for _ in range(100):  # graded anticommutativity + associativity
            p, q = rng.randint(0, 2), rng.randint(0, 2)
            a = rand_form(rng, basis, p, funcs)
            b = rand_form(rng, basis, q, funcs)
            c = rand_form(rng, basis, rng.randint(0, 1), funcs)
            assert (wedge(a, b) - wedge(b, a).scale((-1) ** (p * q))).is_zero()
            assert (wedge(wedge(a, b), c) - wedge(a, wedge(b, c))).is_zero()
        rng = random.Random(20_004)
        for _ in range(100):  # interior-product antiderivation
            p, q = rng.randint(1, 2), rng.randint(1, 2)
            a = rand_form(rng, basis, p, funcs)
            b = rand_form(rng, basis, q, funcs)
            v = rng.randrange(4)
            lhs = interior_product(v, wedge(a, b))
            rhs = wedge(interior_product(v, a), b) + wedge(
                a, interior_product(v, b)
            ).scale((-1) ** p)
            assert (lhs - rhs).is_zero()


def test_criterion_7b_connection_property_suites():
    with criterion(7, "metricity, torsion round-trip, structural reproduction (100 cases)"):
        rng = random.Random(20_005)
        for case in range(100):
            n = 2 if case % 3 else 3
            g = rand_metric(rng, n)
            t = rand_torsion(rng, n)
            conn = connection_coefficients_coordinate(g, t)
            assert covariant_derivative_metric(conn, g).is_zero(), f"metricity {case}"
            assert alternate(conn.components, (1, 2)).scale(-2) == t.components, (
                f"round-trip {case}"
            )
            tforms = first_structural(conn)
            assert torsion_components_from_forms(tforms) == t.components, (
                f"first structural {case}"
            )


def test_criterion_7c_riemann_property_suites():
    with criterion(7, "Riemann symmetries and Bianchi identities"):
        rng = random.Random(20_006)
        for case in range(100):  # symmetries 1-4 and first Bianchi, Levi-Civita
            n = 2 if case % 3 else 3
            g = rand_metric(rng, n)
            conn = connection_coefficients_coordinate(g)
            riem = riemann_components_coordinate(conn)
            res = riemann_symmetry_residuals(riem, g, torsion_free=True)
            for name, arr in res.items():
                assert arr.is_zero(), f"{name} case {case}"
        rng = random.Random(20_007)
        for case in range(100):  # torsion Bianchi
            n = 2 if case % 3 else 3
            g = rand_metric(rng, n)
            t = rand_torsion(rng, n)
            conn = connection_coefficients_coordinate(g, t)
            riem = riemann_components_coordinate(conn)
            assert bianchi_torsion_residual(conn, t, riem).is_zero(), f"case {case}"


def test_criterion_7d_second_bianchi_bounded():
    with criterion(7, "second Bianchi identity on 5 bounded instances"):
        x = [coordinate(f"x{i}") for i in range(4)]

        def diag(names, entries):
            chart = Chart(tuple(names))
            n = len(names)
            g = [[ZERO] * n for _ in range(n)]
            for i, e in enumerate(entries):
                g[i][i] = e
            return Metric(g, chart.coordinate_basis())

        metrics = [
            Metric(
                [[ONE + x[0] * x[0], x[0] * x[1]], [x[0] * x[1], -(ONE + x[1] * x[1])]],
                Chart(("x0", "x1")).coordinate_basis(),
            ),
            Metric([[2 * ONE, x[1]], [x[1], -ONE]], Chart(("x0", "x1")).coordinate_basis()),
            diag(("x0", "x1", "x2"), [ONE + x[1] * x[1], -(ONE + x[2] * x[2]), -(ONE + x[0] * x[0])]),
            diag(("x0", "x1", "x2"), [2 * ONE + x[0] * x[0], -ONE, -(ONE + x[0] * x[1])]),
            diag(
                ("x0", "x1", "x2", "x3"),
                [ONE + x[2] * x[2], -(ONE + x[0] * x[0]), -ONE, -(ONE + x[0] * x[2])],
            ),
        ]
        assert len(metrics) >= 5
        for i, g in enumerate(metrics):
            conn = connection_coefficients_coordinate(g)
            riem = riemann_components_coordinate(conn)
            res = riemann_symmetry_residuals(riem, g, torsion_free=True, conn=conn)
            assert res["second_bianchi"].is_zero(), f"instance {i}"


def test_criterion_8_numeric_crosscheck():
    with criterion(8, "finite-difference agreement at 1e-5 relative"):
        profile = coordinate("x") ** 2 - coordinate("y") ** 2
        geo = build_pp_wave()
        matrix = [
            [e.substitute_function("H", profile) for e in row]
            for row in geo.coordinate_metric.matrix
        ]
        g_wave = Metric(matrix, geo.coordinate_metric.basis)
        rng = random.Random(20_008)
        for _ in range(5):
            point = {
                CoordSymbol(c): rng.uniform(-0.8, 0.8) for c in ("u", "v", "x", "y")
            }
            report = numeric_crosscheck(g_wave, point, h=1e-4, tolerance=1e-5)
            assert report.passed, (report.christoffel_max_err, report.riemann_max_err)
        done = 0
        while done < 3:
            g = rand_metric(rng, 2)
            chart = g.basis.chart
            points = 0
            attempts = 0
            while points < 5 and attempts < 300:
                attempts += 1
                point = {CoordSymbol(c): rng.uniform(-0.5, 0.5) for c in chart.coords}
                if abs(determinant_at(g, point)) < 0.3:
                    continue
                report = numeric_crosscheck(g, point, h=1e-4, tolerance=1e-5)
                assert report.passed, (g.matrix, point)
                points += 1
            if points == 5:
                done += 1


def test_criterion_9_cli_contract(capsys):
    with criterion(9, "deterministic CLI, spanned diagnostics, valid JSON"):
        goldens = [
            str(DOCS / "ppwave.cartan"),
            str(DOCS / "ppwave_harmonic.cartan"),
            str(DOCS / "flat.cartan"),
        ]
        schema = json.loads((ROOT / "docs" / "cli-output.schema.json").read_text())
        jsonschema = pytest.importorskip("jsonschema")
        for doc in goldens:
            for command in ("connection", "curvature", "ricci", "torsion"):
                outs = []
                for _ in range(2):
                    code = main([command, doc])
                    assert code == 0
                    outs.append(capsys.readouterr().out)
                assert outs[0] == outs[1], (command, doc)
                main([command, doc, "--json"])
                payload = json.loads(capsys.readouterr().out)
                jsonschema.validate(payload, schema)
            main(["check", "--vacuum", doc, "--json"])
            payload = json.loads(capsys.readouterr().out)
            jsonschema.validate(payload, schema)
        corpus = sorted(MALFORMED.glob("*.cartan"))
        assert len(corpus) == 20
        for path in corpus:
            code = main(["ricci", str(path)])
            captured = capsys.readouterr()
            assert code == 2, path.name
            assert "error" in captured.err and "line" in captured.err, path.name
