"""Cartan structural equations and the derived curvature objects.

The torsion 2-forms come from the first structural equation, the curvature
2-forms from the second; components are read off with the 1/2 convention
(R^a_b = 1/2 R^a_{bcd} theta^c wedge theta^d).  A second, independent
coordinate-basis route computes the Riemann components directly from the
connection coefficients; the two routes agree wherever both apply and the
tests lean on that as a mutual oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .expr import ScalarExpr, ZERO, rational
from .exterior import (
    BasisMismatch,
    ComponentArray,
    Form,
    alternate,
    exterior_derivative,
    form_to_components,
    wedge,
)
from .geometry import Connection, Metric, Torsion

__all__ = [
    "first_structural",
    "torsion_components_from_forms",
    "second_structural",
    "riemann_components_from_forms",
    "riemann_components_coordinate",
    "ricci",
    "scalar_curvature",
    "einstein_tensor",
    "riemann_symmetry_residuals",
    "bianchi_torsion_residual",
    "numeric_crosscheck",
    "NumericCheckReport",
    "SingularAtPoint",
]


class SingularAtPoint(Exception):
    """The metric degenerates numerically at the evaluation point."""


# ---------------------------------------------------------------------------
# Structural equations
# ---------------------------------------------------------------------------

def first_structural(conn: Connection) -> list[Form]:
    """Torsion 2-forms T^a = d theta^a + Gamma^a_b wedge theta^b."""
    basis = conn.basis
    n = basis.dim
    thetas = [Form.basis_one_form(basis, b) for b in range(n)]
    if basis.kind == "coframe":
        d_thetas = [basis.coframe.d_theta(a) for a in range(n)]
    else:
        d_thetas = [Form.zero(2, basis) for _ in range(n)]
    out = []
    for a in range(n):
        acc = d_thetas[a]
        for b in range(n):
            gab = conn.one_form(a, b)
            if gab.is_zero():
                continue
            acc = acc + wedge(gab, thetas[b])
        out.append(acc)
    return out


def torsion_components_from_forms(tforms: Sequence[Form]) -> ComponentArray:
    """Extract T^c_{ab} from the torsion 2-forms via the 1/2 convention."""
    n = len(tforms)
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for c, form in enumerate(tforms):
        comp = form_to_components(form)
        for (a, b), val in comp.entries.items():
            entries[(c, a, b)] = val
    return ComponentArray(n, 3, entries)


def second_structural(conn: Connection) -> list[list[Form]]:
    """Curvature 2-forms R^a_b = d Gamma^a_b + Gamma^a_c wedge Gamma^c_b."""
    n = conn.dim
    out: list[list[Form]] = []
    for a in range(n):
        row = []
        for b in range(n):
            acc = exterior_derivative(conn.one_form(a, b))
            for c in range(n):
                gac = conn.one_form(a, c)
                gcb = conn.one_form(c, b)
                if gac.is_zero() or gcb.is_zero():
                    continue
                acc = acc + wedge(gac, gcb)
            row.append(acc)
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# Component extraction
# ---------------------------------------------------------------------------

def riemann_components_from_forms(forms: Sequence[Sequence[Form]]) -> ComponentArray:
    """R^a_{bcd} from the curvature 2-forms (antisymmetric in c, d)."""
    n = len(forms)
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            comp = form_to_components(forms[a][b])
            for (c, d), val in comp.entries.items():
                entries[(a, b, c, d)] = val
    return ComponentArray(n, 4, entries)


def riemann_components_coordinate(conn: Connection) -> ComponentArray:
    """Coordinate-basis Riemann tensor straight from the coefficients.

    R^a_{bcd} = partial_c Gamma^a_{bd} - partial_d Gamma^a_{bc}
    + Gamma^a_{gc} Gamma^g_{bd} - Gamma^a_{gd} Gamma^g_{bc}.
    """
    if conn.basis.kind != "coordinate":
        raise BasisMismatch("coordinate route needs a coordinate-basis connection")
    chart = conn.basis.chart
    n = conn.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(c + 1, n):
                    val = conn.coefficient(a, b, d).partial(chart.coords[c])
                    val = val - conn.coefficient(a, b, c).partial(chart.coords[d])
                    for g in range(n):
                        val = val + conn.coefficient(a, g, c) * conn.coefficient(g, b, d)
                        val = val - conn.coefficient(a, g, d) * conn.coefficient(g, b, c)
                    if not val.is_zero():
                        entries[(a, b, c, d)] = val
                        entries[(a, b, d, c)] = -val
    return ComponentArray(n, 4, entries)


def ricci(riemann: ComponentArray) -> ComponentArray:
    """R_{ab} = R^c_{acb}: contract the upper slot with the first form slot."""
    n = riemann.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            total = ZERO
            for c in range(n):
                total = total + riemann.get((c, a, c, b))
            if not total.is_zero():
                entries[(a, b)] = total
    return ComponentArray(n, 2, entries)


def scalar_curvature(ric: ComponentArray, g: Metric) -> ScalarExpr:
    """R = g^{ab} R_{ab}."""
    total = ZERO
    for (a, b), val in ric.entries.items():
        gab = g.upper(a, b)
        if gab.is_zero():
            continue
        total = total + gab * val
    return total


def einstein_tensor(
    ric: ComponentArray, scalar: ScalarExpr, g: Metric
) -> ComponentArray:
    """G_{ab} = R_{ab} - 1/2 g_{ab} R."""
    n = g.dim
    half = rational(1, 2)
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            val = ric.get((a, b)) - half * g.lower(a, b) * scalar
            if not val.is_zero():
                entries[(a, b)] = val
    return ComponentArray(n, 2, entries)


# ---------------------------------------------------------------------------
# Identity residuals
# ---------------------------------------------------------------------------

def _lower_first(riemann: ComponentArray, g: Metric) -> ComponentArray:
    n = riemann.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for (s, b, c, d), val in riemann.entries.items():
        for a in range(n):
            gas = g.lower(a, s)
            if gas.is_zero():
                continue
            key = (a, b, c, d)
            entries[key] = entries.get(key, ZERO) + gas * val
    return ComponentArray(n, 4, entries)


def covariant_derivative_riemann(
    conn: Connection, riemann: ComponentArray
) -> ComponentArray:
    """nabla_r R^s_{mtl}, indexed (s, m, t, l, r) with the direction last."""
    if conn.basis.kind != "coordinate":
        raise BasisMismatch("Riemann covariant derivative is coordinate-basis only")
    chart = conn.basis.chart
    n = conn.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for s in range(n):
        for m in range(n):
            for t in range(n):
                for l in range(n):
                    base = riemann.get((s, m, t, l))
                    for r in range(n):
                        val = base.partial(chart.coords[r])
                        for nu in range(n):
                            val = val + conn.coefficient(s, nu, r) * riemann.get((nu, m, t, l))
                            val = val - conn.coefficient(nu, m, r) * riemann.get((s, nu, t, l))
                            val = val - conn.coefficient(nu, t, r) * riemann.get((s, m, nu, l))
                            val = val - conn.coefficient(nu, l, r) * riemann.get((s, m, t, nu))
                        if not val.is_zero():
                            entries[(s, m, t, l, r)] = val
    return ComponentArray(n, 5, entries)


def riemann_symmetry_residuals(
    riemann: ComponentArray,
    g: Metric,
    torsion_free: bool,
    conn: Connection | None = None,
) -> dict[str, ComponentArray]:
    """Residual arrays for the Riemann symmetry properties.

    Always checks antisymmetry in the last pair; with ``torsion_free`` also
    the pair exchange and first-pair antisymmetry of the fully lowered
    tensor and the first Bianchi identity.  The second Bianchi identity is
    included when a coordinate-basis connection is supplied (bounded check;
    it is the expensive one).
    """
    n = riemann.dim
    out: dict[str, ComponentArray] = {}
    last_pair: dict[tuple[int, ...], ScalarExpr] = {}
    for (a, b, c, d), val in riemann.entries.items():
        r = val + riemann.get((a, b, d, c))
        if not r.is_zero():
            last_pair[(a, b, c, d)] = r
    out["antisym_last_pair"] = ComponentArray(n, 4, last_pair)
    if torsion_free:
        lowered = _lower_first(riemann, g)
        pair_exchange: dict[tuple[int, ...], ScalarExpr] = {}
        first_pair: dict[tuple[int, ...], ScalarExpr] = {}
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    for d in range(n):
                        r = lowered.get((a, b, c, d)) - lowered.get((c, d, a, b))
                        if not r.is_zero():
                            pair_exchange[(a, b, c, d)] = r
                        s = lowered.get((a, b, c, d)) + lowered.get((b, a, c, d))
                        if not s.is_zero():
                            first_pair[(a, b, c, d)] = s
        out["pair_exchange"] = ComponentArray(n, 4, pair_exchange)
        out["antisym_first_pair"] = ComponentArray(n, 4, first_pair)
        out["first_bianchi"] = alternate(riemann, (1, 2, 3))
        if conn is not None and conn.basis.kind == "coordinate":
            nabla_r = covariant_derivative_riemann(conn, riemann)
            out["second_bianchi"] = alternate(nabla_r, (2, 3, 4))
    return out


def bianchi_torsion_residual(
    conn: Connection, torsion: Torsion, riemann: ComponentArray
) -> ComponentArray:
    """R^a_{[lbg]} - nabla_{[l} T^a_{bg]} + T^n_{[lb} T^a_{g]n} residual.

    Identically zero for connections built from (g, T) by the coordinate
    route; reduces to the first Bianchi identity when T = 0.
    """
    if conn.basis.kind != "coordinate":
        raise BasisMismatch("torsion Bianchi identity is coordinate-basis only")
    chart = conn.basis.chart
    n = conn.dim
    t = torsion.components
    # nabla_l T^a_{bg}, indexed (a, l, b, g)
    nabla_t: dict[tuple[int, ...], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            for gidx in range(n):
                base = t.get((a, b, gidx))
                for l in range(n):
                    val = base.partial(chart.coords[l])
                    for nu in range(n):
                        val = val + conn.coefficient(a, nu, l) * t.get((nu, b, gidx))
                        val = val - conn.coefficient(nu, b, l) * t.get((a, nu, gidx))
                        val = val - conn.coefficient(nu, gidx, l) * t.get((a, b, nu))
                    if not val.is_zero():
                        nabla_t[(a, l, b, gidx)] = val
    # T^n_{lb} T^a_{gn}, indexed (a, l, b, g)
    tt: dict[tuple[int, ...], ScalarExpr] = {}
    for (nu, l, b), t1 in t.entries.items():
        for a in range(n):
            for gidx in range(n):
                t2 = t.get((a, gidx, nu))
                if t2.is_zero():
                    continue
                key = (a, l, b, gidx)
                tt[key] = tt.get(key, ZERO) + t1 * t2
    lhs = alternate(riemann, (1, 2, 3))
    rhs = alternate(ComponentArray(n, 4, nabla_t), (1, 2, 3)) - alternate(
        ComponentArray(n, 4, tt), (1, 2, 3)
    )
    return lhs - rhs


# ---------------------------------------------------------------------------
# Numeric cross-check
# ---------------------------------------------------------------------------

@dataclass
class NumericCheckReport:
    """Largest relative deviations between symbolic and finite-difference values."""

    christoffel_max_err: float
    riemann_max_err: float
    tolerance: float
    step: float

    @property
    def passed(self) -> bool:
        return (
            self.christoffel_max_err <= self.tolerance
            and self.riemann_max_err <= self.tolerance
        )


def _metric_at(g: Metric, values: dict) -> list[list[float]]:
    return [[e.eval_numeric(values) for e in row] for row in g.matrix]


def _float_inverse(m: list[list[float]]) -> list[list[float]]:
    n = len(m)
    aug = [row[:] + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if abs(aug[piv][col]) < 1e-12:
            raise SingularAtPoint("metric is numerically singular at the point")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv_p = 1.0 / aug[col][col]
        aug[col] = [v * inv_p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [v - f * p for v, p in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def _fd_christoffel(
    g: Metric, point: dict, h: float
) -> list[list[list[float]]]:
    """Classical Christoffel values from central differences of the metric."""
    chart = g.basis.chart
    n = g.dim

    def shifted(mu: int, delta: float) -> dict:
        p = dict(point)
        key = chart.symbol(mu)
        p[key] = p[key] + delta
        return p

    g0 = _metric_at(g, point)
    ginv = _float_inverse(g0)
    dg = [
        [
            [
                (gp[a][b] - gm[a][b]) / (2 * h)
                for b in range(n)
            ]
            for a in range(n)
        ]
        for gp, gm in (
            (_metric_at(g, shifted(mu, h)), _metric_at(g, shifted(mu, -h)))
            for mu in range(n)
        )
    ]
    gamma = [[[0.0] * n for _ in range(n)] for _ in range(n)]
    for lam in range(n):
        for mu in range(n):
            for nu in range(n):
                total = 0.0
                for s in range(n):
                    total += ginv[lam][s] * (
                        dg[mu][nu][s] + dg[nu][s][mu] - dg[s][mu][nu]
                    )
                gamma[lam][mu][nu] = 0.5 * total
    return gamma


def numeric_crosscheck(
    g: Metric,
    point: dict,
    h: float = 1e-4,
    tolerance: float = 1e-5,
) -> NumericCheckReport:
    """Compare symbolic Christoffel/Riemann values against finite differences.

    ``point`` binds every atom appearing in the metric (coordinate symbols
    at least) to floats.  Christoffels come from central differences of the
    metric; the Riemann check nests another difference around them.
    """
    from .geometry import connection_coefficients_coordinate

    chart = g.basis.chart
    n = g.dim
    det = determinant_at(g, point)
    if abs(det) < 1e-9:
        raise SingularAtPoint(f"det g = {det} at the evaluation point")
    conn = connection_coefficients_coordinate(g)
    riem = riemann_components_coordinate(conn)

    gamma_fd = _fd_christoffel(g, point, h)
    gamma_err = 0.0
    for lam in range(n):
        for mu in range(n):
            for nu in range(n):
                sym = conn.coefficient(lam, mu, nu).eval_numeric(point)
                fd = gamma_fd[lam][mu][nu]
                gamma_err = max(
                    gamma_err, abs(sym - fd) / max(1.0, abs(sym), abs(fd))
                )

    def shifted(mu: int, delta: float) -> dict:
        p = dict(point)
        key = chart.symbol(mu)
        p[key] = p[key] + delta
        return p

    dgamma = [
        [
            [
                [
                    (gp[a][b][c] - gm[a][b][c]) / (2 * h)
                    for c in range(n)
                ]
                for b in range(n)
            ]
            for a in range(n)
        ]
        for gp, gm in (
            (_fd_christoffel(g, shifted(mu, h), h), _fd_christoffel(g, shifted(mu, -h), h))
            for mu in range(n)
        )
    ]
    gamma0 = gamma_fd
    riem_err = 0.0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    fd = dgamma[c][a][b][d] - dgamma[d][a][b][c]
                    for s in range(n):
                        fd += gamma0[a][s][c] * gamma0[s][b][d]
                        fd -= gamma0[a][s][d] * gamma0[s][b][c]
                    sym = riem.get((a, b, c, d)).eval_numeric(point)
                    riem_err = max(
                        riem_err, abs(sym - fd) / max(1.0, abs(sym), abs(fd))
                    )
    return NumericCheckReport(gamma_err, riem_err, tolerance, h)


def determinant_at(g: Metric, point: dict) -> float:
    from .geometry import determinant

    return determinant(g.matrix).eval_numeric(point)
