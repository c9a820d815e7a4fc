"""Metrics, coframes, torsion, and the two connection routes."""

import random

import pytest

from cartan.expr import ZERO, ONE, coordinate, func_deriv
from cartan.exterior import (
    BasisMismatch,
    Chart,
    ComponentArray,
    Form,
    alternate,
)
from cartan.geometry import (
    Coframe,
    FrameMetric,
    Metric,
    NonConstantFrameMetric,
    SingularCoframe,
    SingularMetric,
    Torsion,
    change_basis,
    connection_coefficients_coordinate,
    connection_one_forms_rigid,
    coordinate_metric_from_frame,
    covariant_derivative_metric,
    covariant_derivative_oneform,
    covariant_derivative_vector,
    extract_connection_components,
    line_element,
    schouten_delta,
)
from cartan.einstein import build_pp_wave

from _oracles import classic_christoffel
from _support import rand_metric, rand_poly, rand_torsion

H_ARGS = ("x", "y", "u")


def h(*derivs):
    return func_deriv("H", H_ARGS, derivs)


def flat_metric(n=4):
    chart = Chart(tuple(f"x{i}" for i in range(n)))
    g = [[ZERO] * n for _ in range(n)]
    g[0][0] = ONE
    for i in range(1, n):
        g[i][i] = -ONE
    return Metric(g, chart.coordinate_basis())


class TestSchoutenDelta:
    def test_first_delta_product(self):
        d = schouten_delta(4)
        assert d.get((0, 1, 2, 0, 1, 2)) == ONE

    def test_second_delta_product(self):
        # the -delta^a_n delta^b_m delta^g_s term fires at (s,n,m) = (2,0,1)
        d = schouten_delta(4)
        assert d.get((0, 1, 2, 2, 0, 1)) == -ONE

    def test_third_delta_product(self):
        d = schouten_delta(4)
        assert d.get((0, 1, 2, 1, 2, 0)) == ONE

    def test_entries_are_signs(self):
        d = schouten_delta(3)
        for _, val in d.iter_nonzero():
            assert val == ONE or val == -ONE

    def test_flat_contraction_gives_zero_connection(self):
        g = flat_metric()
        conn = connection_coefficients_coordinate(g, Torsion.zero(4))
        assert conn.components.is_zero()


class TestCoordinateConnection:
    def test_flat_space(self):
        conn = connection_coefficients_coordinate(flat_metric())
        assert conn.components.is_zero()

    def test_pp_wave_oracle_agreement(self):
        geo = build_pp_wave()
        conn = connection_coefficients_coordinate(geo.coordinate_metric)
        oracle = classic_christoffel(geo.coordinate_metric)
        assert conn.components == oracle
        # chart order (u, v, x, y): Gamma^x_{uu} = H_x, Gamma^y_{uu} = H_y
        assert conn.coefficient(2, 0, 0) == h("x")
        assert conn.coefficient(3, 0, 0) == h("y")

    def test_oracle_agreement_random_metrics(self):
        rng = random.Random(710)
        for i in range(20):
            g = rand_metric(rng, 2 if i % 2 else 3)
            conn = connection_coefficients_coordinate(g)
            assert conn.components == classic_christoffel(g)

    def test_antisymmetric_part_reproduces_torsion(self):
        rng = random.Random(711)
        for i in range(20):
            n = 2 if i % 2 else 3
            g = rand_metric(rng, n)
            t = rand_torsion(rng, n)
            conn = connection_coefficients_coordinate(g, t)
            assert alternate(conn.components, (1, 2)).scale(-2) == t.components

    def test_basis_guard(self):
        geo = build_pp_wave()
        with pytest.raises(BasisMismatch):
            connection_coefficients_coordinate(geo.frame_metric)


class TestRigidConnection:
    def test_pp_wave_lowered_forms(self):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        tag = geo.coframe.basis()
        hx_t1 = Form(1, tag, {(1,): h("x")})
        hy_t1 = Form(1, tag, {(1,): h("y")})
        expected = {
            (1, 2): hx_t1,
            (2, 1): -hx_t1,
            (1, 3): hy_t1,
            (3, 1): -hy_t1,
        }
        for a in range(4):
            for b in range(4):
                want = expected.get((a, b), Form.zero(1, tag))
                assert conn.lowered_one_forms[a][b] == want

    def test_pp_wave_raised_forms(self):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        tag = geo.coframe.basis()
        hx_t1 = Form(1, tag, {(1,): h("x")})
        hy_t1 = Form(1, tag, {(1,): h("y")})
        expected = {(0, 2): hx_t1, (0, 3): hy_t1, (2, 1): hx_t1, (3, 1): hy_t1}
        for a in range(4):
            for b in range(4):
                want = expected.get((a, b), Form.zero(1, tag))
                assert conn.one_form(a, b) == want

    def test_pp_wave_components(self):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        comp = extract_connection_components(conn)
        assert comp.get((0, 2, 1)) == h("x")
        assert comp.get((0, 3, 1)) == h("y")
        assert comp.get((2, 1, 1)) == h("x")
        assert comp.get((3, 1, 1)) == h("y")
        assert len(comp.entries) == 4

    def test_flat_coframe_gives_zero(self):
        chart = Chart(("t", "x"))
        cf = Coframe(chart, [[ONE, ZERO], [ZERO, ONE]])
        g = FrameMetric([[ONE, ZERO], [ZERO, -ONE]], cf)
        conn = connection_one_forms_rigid(cf, g)
        assert conn.components.is_zero()
        for row in conn.lowered_one_forms:
            for f in row:
                assert f.is_zero()

    def test_lowered_antisymmetry(self):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        for a in range(4):
            for b in range(4):
                s = conn.lowered_one_forms[a][b] + conn.lowered_one_forms[b][a]
                assert s.is_zero()

    def test_nonconstant_frame_metric_rejected(self):
        geo = build_pp_wave()
        cf = geo.coframe
        bad = [[ZERO, ONE, ZERO, ZERO], [ONE, ZERO, ZERO, ZERO],
               [ZERO, ZERO, -ONE, ZERO], [ZERO, ZERO, ZERO, h()]]
        with pytest.raises(NonConstantFrameMetric):
            FrameMetric(bad, cf)
        nonconst = Metric(bad, cf.basis())
        with pytest.raises(NonConstantFrameMetric):
            connection_one_forms_rigid(cf, nonconst)

    def test_one_forms_components_round_trip(self):
        from cartan.geometry import Connection

        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        rebuilt = Connection(conn.basis, components=conn.components)
        for a in range(4):
            for b in range(4):
                assert rebuilt.one_form(a, b) == conn.one_form(a, b)


class TestMetricValidation:
    def test_inverse_identity(self):
        rng = random.Random(720)
        for i in range(10):
            g = rand_metric(rng, 2 if i % 2 else 3)
            n = g.dim
            for a in range(n):
                for b in range(n):
                    total = ZERO
                    for c in range(n):
                        total = total + g.lower(a, c) * g.upper(c, b)
                    assert total == (ONE if a == b else ZERO)

    def test_degenerate_rejected(self):
        chart = Chart(("x", "y"))
        x = coordinate("x")
        with pytest.raises(SingularMetric):
            Metric([[x, x], [x, x]], chart.coordinate_basis())

    def test_asymmetric_rejected(self):
        chart = Chart(("x", "y"))
        with pytest.raises(ValueError):
            Metric([[ONE, coordinate("x")], [ZERO, ONE]], chart.coordinate_basis())

    def test_singular_coframe_rejected(self):
        chart = Chart(("x", "y"))
        with pytest.raises(SingularCoframe):
            Coframe(chart, [[ONE, ONE], [ONE, ONE]])

    def test_coframe_inverse_identity(self):
        geo = build_pp_wave()
        cf = geo.coframe
        n = 4
        for i in range(n):
            for j in range(n):
                total = ZERO
                for k in range(n):
                    total = total + cf.matrix[i][k] * cf.inverse[k][j]
                assert total == (ONE if i == j else ZERO)


class TestTorsionType:
    def test_antisymmetry_enforced(self):
        with pytest.raises(ValueError):
            Torsion(ComponentArray(2, 3, {(0, 0, 1): ONE}))

    def test_lowering_uses_first_index(self):
        rng = random.Random(730)
        g = rand_metric(rng, 3)
        t = rand_torsion(rng, 3)
        low = t.lowered(g)
        for (a, b, c), _ in low.entries.items():
            total = ZERO
            for s in range(3):
                total = total + g.lower(a, s) * t.components.get((s, b, c))
            assert low.get((a, b, c)) == total


class TestCovariantDerivatives:
    def test_flat_reduces_to_partial(self):
        g = flat_metric(3)
        chart = g.basis.chart
        conn = connection_coefficients_coordinate(g)
        v = ComponentArray(
            3, 1, {(i,): coordinate(chart.coords[i]) ** 2 for i in range(3)}
        )
        nab = covariant_derivative_vector(conn, v)
        for i in range(3):
            for a in range(3):
                assert nab.get((i, a)) == v.get((i,)).partial(chart.coords[a])

    def test_pp_wave_metricity(self):
        geo = build_pp_wave()
        conn = connection_coefficients_coordinate(geo.coordinate_metric)
        assert covariant_derivative_metric(conn, geo.coordinate_metric).is_zero()

    def test_metricity_random(self):
        rng = random.Random(731)
        for case in range(100):
            n = 2 if case % 3 else 3
            g = rand_metric(rng, n)
            t = rand_torsion(rng, n)
            conn = connection_coefficients_coordinate(g, t)
            assert covariant_derivative_metric(conn, g).is_zero()

    def test_leibniz_over_pairing(self):
        rng = random.Random(732)
        geo = build_pp_wave()
        g = geo.coordinate_metric
        chart = g.basis.chart
        conn = connection_coefficients_coordinate(g)
        coords = list(chart.coords)
        for _ in range(20):
            v = ComponentArray(
                4, 1, {(i,): rand_poly(rng, coords) for i in range(4)}
            )
            w = ComponentArray(
                4, 1, {(i,): rand_poly(rng, coords) for i in range(4)}
            )
            nv = covariant_derivative_vector(conn, v)
            nw = covariant_derivative_oneform(conn, w)
            for b in range(4):
                pairing = ZERO
                for c in range(4):
                    pairing = pairing + w.get((c,)) * v.get((c,))
                lhs = pairing.partial(coords[b])
                rhs = ZERO
                for c in range(4):
                    rhs = rhs + nw.get((c, b)) * v.get((c,)) + w.get((c,)) * nv.get((c, b))
                assert lhs == rhs

    def test_coordinate_basis_required(self):
        geo = build_pp_wave()
        conn = connection_one_forms_rigid(geo.coframe, geo.frame_metric)
        with pytest.raises(BasisMismatch):
            covariant_derivative_vector(conn, ComponentArray(4, 1, {}))


class TestChangeBasis:
    def test_du_maps_to_theta1(self):
        geo = build_pp_wave()
        tag = geo.coframe.basis()
        du = Form.basis_one_form(geo.coordinate_metric.basis, 0)
        assert change_basis(du, tag) == Form(1, tag, {(1,): ONE})

    def test_dv_maps_to_theta0_minus_H_theta1(self):
        geo = build_pp_wave()
        tag = geo.coframe.basis()
        dv = Form.basis_one_form(geo.coordinate_metric.basis, 1)
        assert change_basis(dv, tag) == Form(1, tag, {(0,): ONE, (1,): -h()})

    def test_round_trip_random_two_forms(self):
        from _support import rand_form

        geo = build_pp_wave()
        tag = geo.coframe.basis()
        coord = geo.coordinate_metric.basis
        rng = random.Random(740)
        for _ in range(50):
            f = rand_form(rng, coord, 2, (("H", H_ARGS),))
            there = change_basis(f, tag)
            back = change_basis(there, coord)
            assert back == f

    def test_chart_mismatch_rejected(self):
        geo = build_pp_wave()
        other = Chart(("a", "b")).coordinate_basis()
        with pytest.raises(BasisMismatch):
            change_basis(Form.basis_one_form(other, 0), geo.coframe.basis())


class TestLineElement:
    def test_pp_wave(self):
        geo = build_pp_wave()
        assert line_element(geo.coordinate_metric) == "2*H*du^2 + 2*du*dv - dx^2 - dy^2"

    def test_flat(self):
        assert line_element(flat_metric(2)) == "dx0^2 - dx1^2"

    def test_frame_to_coordinate_conversion(self):
        geo = build_pp_wave()
        back = coordinate_metric_from_frame(geo.frame_metric)
        for a in range(4):
            for b in range(4):
                assert back.lower(a, b) == geo.coordinate_metric.lower(a, b)
