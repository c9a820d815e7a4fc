"""Metrics, coframes, torsion, and metric-compatible connections.

Two independent routes produce a connection:

* the coordinate-basis formula with torsion, driven by the Schouten
  bracket contraction (``connection_coefficients_coordinate``), and
* the rigid-coframe route from the exterior derivatives of the coframe
  (``connection_one_forms_rigid``), valid when the frame metric is
  constant and torsion vanishes.

Both store the result as a matrix of connection 1-forms together with the
extracted coefficients Gamma^a_{bc} (Gamma^a_b = Gamma^a_{bc} theta^c).
"""

from __future__ import annotations

from typing import Sequence

from .expr import ScalarExpr, ZERO, ONE, rational
from .exterior import (
    BasisMismatch,
    BasisTag,
    Chart,
    ComponentArray,
    Form,
    exterior_derivative,
    interior_product,
    substitute_basis,
)

__all__ = [
    "Chart",
    "Coframe",
    "Metric",
    "FrameMetric",
    "Torsion",
    "Connection",
    "SingularMetric",
    "SingularCoframe",
    "NonConstantFrameMetric",
    "schouten_delta",
    "connection_coefficients_coordinate",
    "connection_one_forms_rigid",
    "extract_connection_components",
    "covariant_derivative_vector",
    "covariant_derivative_oneform",
    "covariant_derivative_metric",
    "change_basis",
    "line_element",
    "determinant",
    "matrix_inverse",
]


class SingularMetric(Exception):
    """Metric determinant normalizes to zero."""


class SingularCoframe(Exception):
    """Coframe matrix is not invertible."""


class NonConstantFrameMetric(Exception):
    """The rigid-coframe route needs constant metric entries."""


Matrix = list[list[ScalarExpr]]


def determinant(m: Matrix) -> ScalarExpr:
    """Cofactor expansion; keeps polynomial matrices fraction-free."""
    n = len(m)
    if n == 1:
        return m[0][0]
    total = ZERO
    for j in range(n):
        if m[0][j].is_zero():
            continue
        minor = [[row[k] for k in range(n) if k != j] for row in m[1:]]
        term = m[0][j] * determinant(minor)
        total = total - term if j % 2 else total + term
    return total


def matrix_inverse(m: Matrix) -> Matrix:
    """Adjugate over determinant; SingularCoframe when the determinant vanishes."""
    n = len(m)
    det = determinant(m)
    if det.is_zero():
        raise SingularCoframe("matrix determinant normalizes to zero")
    if n == 1:
        return [[ONE / det]]
    inv = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [
                [m[r][c] for c in range(n) if c != j]
                for r in range(n)
                if r != i
            ]
            cof = determinant(minor)
            if (i + j) % 2:
                cof = -cof
            inv[j][i] = cof / det
    return inv


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    n = len(a)
    return [
        [
            sum((a[i][k] * b[k][j] for k in range(n)), ZERO)
            for j in range(n)
        ]
        for i in range(n)
    ]


class Coframe:
    """A rigid anholonomic basis theta^a = A^a_mu dx^mu.

    The matrix A (row a, column mu) must be invertible; the inverse gives
    dx^mu = (A^-1)^mu_a theta^a and is cached at construction.
    """

    def __init__(self, chart: Chart, matrix: Sequence[Sequence[ScalarExpr]]):
        n = chart.dim
        if len(matrix) != n or any(len(row) != n for row in matrix):
            raise ValueError(f"coframe matrix must be {n}x{n}")
        self.chart = chart
        self.matrix: Matrix = [list(row) for row in matrix]
        try:
            self.inverse: Matrix = matrix_inverse(self.matrix)
        except SingularCoframe:
            raise SingularCoframe("coframe 1-forms are not independent") from None
        self._tag = BasisTag("coframe", chart, self)
        # computed here once so instances stay immutable after construction
        self._d_theta = [
            self.frame_form(exterior_derivative(self.theta_in_coordinates(b)))
            for b in range(chart.dim)
        ]

    def basis(self) -> BasisTag:
        return self._tag

    def theta_in_coordinates(self, a: int) -> Form:
        """The a-th coframe 1-form expanded in coordinate differentials."""
        coord = self.chart.coordinate_basis()
        return Form(1, coord, {(mu,): self.matrix[a][mu] for mu in range(self.chart.dim)})

    def coordinate_form(self, form: Form) -> Form:
        """Rewrite a coframe-basis form in coordinate differentials."""
        if form.basis != self._tag:
            raise BasisMismatch("form does not live in this coframe")
        coord = self.chart.coordinate_basis()
        reps = [self.theta_in_coordinates(a) for a in range(self.chart.dim)]
        return substitute_basis(form, reps, coord)

    def frame_form(self, form: Form) -> Form:
        """Rewrite a coordinate-basis form in this coframe."""
        if form.basis != self.chart.coordinate_basis():
            raise BasisMismatch("form does not live in this chart's coordinates")
        n = self.chart.dim
        reps = [
            Form(1, self._tag, {(a,): self.inverse[mu][a] for a in range(n)})
            for mu in range(n)
        ]
        return substitute_basis(form, reps, self._tag)

    def d_theta(self, a: int) -> Form:
        """Exterior derivative of theta^a, expressed in the coframe."""
        return self._d_theta[a]


class Metric:
    """Symmetric nondegenerate scalar matrix tagged with its basis."""

    def __init__(self, matrix: Sequence[Sequence[ScalarExpr]], basis: BasisTag):
        n = basis.dim
        if len(matrix) != n or any(len(row) != n for row in matrix):
            raise ValueError(f"metric must be {n}x{n}")
        g: Matrix = [list(row) for row in matrix]
        for i in range(n):
            for j in range(i + 1, n):
                if not g[i][j] == g[j][i]:
                    raise ValueError(f"metric not symmetric at ({i},{j})")
        self.matrix = g
        self.basis = basis
        det = determinant(g)
        if det.is_zero():
            raise SingularMetric("metric determinant normalizes to zero")
        try:
            self.inverse: Matrix = matrix_inverse(g)
        except SingularCoframe:  # pragma: no cover - det checked above
            raise SingularMetric("metric is singular") from None

    @property
    def dim(self) -> int:
        return self.basis.dim

    def lower(self, i: int, j: int) -> ScalarExpr:
        return self.matrix[i][j]

    def upper(self, i: int, j: int) -> ScalarExpr:
        return self.inverse[i][j]

    def is_constant(self) -> bool:
        return all(e.is_constant() for row in self.matrix for e in row)


class FrameMetric(Metric):
    """Constant-entry metric in a rigid coframe."""

    def __init__(self, matrix: Sequence[Sequence[ScalarExpr]], coframe: Coframe):
        super().__init__(matrix, coframe.basis())
        if not self.is_constant():
            raise NonConstantFrameMetric(
                "frame metric entries must be rational constants"
            )
        self.coframe = coframe


class Torsion:
    """Torsion components T^c_{ab}, antisymmetric in the lower pair."""

    def __init__(self, components: ComponentArray):
        if components.rank != 3:
            raise ValueError("torsion is a rank-3 array T^c_{ab}")
        for (c, a, b), val in components.entries.items():
            if not (val == -components.get((c, b, a))):
                raise ValueError(
                    f"torsion not antisymmetric in lower pair at ({c},{a},{b})"
                )
        self.components = components

    @staticmethod
    def zero(dim: int) -> Torsion:
        return Torsion(ComponentArray(dim, 3))

    def is_zero(self) -> bool:
        return self.components.is_zero()

    def lowered(self, g: Metric) -> ComponentArray:
        """First-index lowering: T_{abc} = g_{as} T^s_{bc}."""
        n = g.dim
        entries: dict[tuple[int, ...], ScalarExpr] = {}
        for (s, b, c), val in self.components.entries.items():
            for a in range(n):
                gas = g.lower(a, s)
                if gas.is_zero():
                    continue
                key = (a, b, c)
                entries[key] = entries.get(key, ZERO) + gas * val
        return ComponentArray(n, 3, entries)


class Connection:
    """Connection 1-forms Gamma^a_b and coefficients Gamma^a_{bc}."""

    def __init__(
        self,
        basis: BasisTag,
        one_forms: list[list[Form]] | None = None,
        components: ComponentArray | None = None,
        lowered_one_forms: list[list[Form]] | None = None,
    ):
        n = basis.dim
        if one_forms is None and components is None:
            raise ValueError("need 1-forms or components")
        if one_forms is None:
            one_forms = [
                [
                    Form(
                        1,
                        basis,
                        {
                            (c,): components.get((a, b, c))
                            for c in range(n)
                            if not components.get((a, b, c)).is_zero()
                        },
                    )
                    for b in range(n)
                ]
                for a in range(n)
            ]
        if components is None:
            entries: dict[tuple[int, ...], ScalarExpr] = {}
            for a in range(n):
                for b in range(n):
                    for (c,), val in one_forms[a][b].terms.items():
                        entries[(a, b, c)] = val
            components = ComponentArray(n, 3, entries)
        self.basis = basis
        self.one_forms = one_forms
        self.components = components
        self.lowered_one_forms = lowered_one_forms

    @property
    def dim(self) -> int:
        return self.basis.dim

    def one_form(self, a: int, b: int) -> Form:
        return self.one_forms[a][b]

    def coefficient(self, a: int, b: int, c: int) -> ScalarExpr:
        return self.components.get((a, b, c))


def extract_connection_components(conn: Connection) -> ComponentArray:
    """Coefficients Gamma^a_{bc} of the connection 1-forms."""
    return conn.components


# ---------------------------------------------------------------------------
# Coordinate route: Schouten-bracket contraction
# ---------------------------------------------------------------------------

def schouten_delta(n: int) -> ComponentArray:
    """The three-delta bracket D^{abg}_{snm}, entries in {-1, 0, +1}.

    Nonzero exactly at (a,b,g) = (s,n,m) with +1, (n,m,s) with -1 and
    (m,s,n) with +1; stored as a sparse rank-6 array indexed (a,b,g,s,n,m).
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    plus, minus = ONE, -ONE
    for s in range(n):
        for nu in range(n):
            for mu in range(n):
                for abg, val in (
                    ((s, nu, mu), plus),
                    ((nu, mu, s), minus),
                    ((mu, s, nu), plus),
                ):
                    key = abg + (s, nu, mu)
                    entries[key] = entries.get(key, ZERO) + val
    return ComponentArray(n, 6, entries)


def connection_coefficients_coordinate(
    g: Metric, torsion: Torsion | None = None
) -> Connection:
    """Metric-compatible coordinate-basis connection, torsion allowed.

    Gamma^l_{mn} = 1/2 g^{ls} D^{abg}_{snm} (g_{ab,g} + T_{abg}) with the
    torsion lowered on its first index.  The result satisfies the metricity
    equation symbolically and its antisymmetric lower pair reproduces the
    input torsion.
    """
    if g.basis.kind != "coordinate":
        raise BasisMismatch("coordinate route needs a coordinate-basis metric")
    n = g.dim
    chart = g.basis.chart
    if torsion is None:
        torsion = Torsion.zero(n)
    t_low = torsion.lowered(g)
    # dg[(a, b, c)] = partial_c g_{ab}
    dg: dict[tuple[int, int, int], ScalarExpr] = {}
    for a in range(n):
        for b in range(n):
            for c in range(n):
                dg[(a, b, c)] = g.lower(a, b).partial(chart.coords[c])
    delta = schouten_delta(n)
    # contract the bracket with (g_{ab,g} + T_{abg}) over its upper triple
    contracted: dict[tuple[int, int, int], ScalarExpr] = {}
    for (a, b, gg, s, nu, mu), sign in delta.entries.items():
        term = dg[(a, b, gg)] + t_low.get((a, b, gg))
        if term.is_zero():
            continue
        key = (s, nu, mu)
        contracted[key] = contracted.get(key, ZERO) + sign * term
    half = rational(1, 2)
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for lam in range(n):
        for mu in range(n):
            for nu in range(n):
                total = ZERO
                for s in range(n):
                    gls = g.upper(lam, s)
                    if gls.is_zero():
                        continue
                    c = contracted.get((s, nu, mu))
                    if c is None or c.is_zero():
                        continue
                    total = total + gls * c
                if not total.is_zero():
                    entries[(lam, mu, nu)] = half * total
    components = ComponentArray(n, 3, entries)
    return Connection(g.basis, components=components)


# ---------------------------------------------------------------------------
# Rigid-coframe route
# ---------------------------------------------------------------------------

def connection_one_forms_rigid(coframe: Coframe, g: Metric) -> Connection:
    """Torsion-free connection 1-forms for a rigid (constant-metric) coframe.

    Lowered forms: Gamma_{ab} = -1/2 [ g_{bd} (e_a . d theta^d)
    - g_{ad} (e_b . d theta^d) - g_{cd} (e_a . (e_b . d theta^d)) theta^c ],
    antisymmetric in (a, b); raised with the inverse frame metric.
    """
    tag = coframe.basis()
    if g.basis != tag:
        raise BasisMismatch("frame metric does not live in this coframe")
    if not g.is_constant():
        raise NonConstantFrameMetric(
            "rigid-coframe connection requires constant metric entries"
        )
    n = coframe.chart.dim
    neg_half = rational(-1, 2)
    d_theta = [coframe.d_theta(d) for d in range(n)]
    ia_dtheta = [
        [interior_product(a, d_theta[d]) for d in range(n)] for a in range(n)
    ]
    lowered: list[list[Form]] = []
    for a in range(n):
        row = []
        for b in range(n):
            acc = Form.zero(1, tag)
            for d in range(n):
                gbd = g.lower(b, d)
                if not gbd.is_zero():
                    acc = acc + ia_dtheta[a][d].scale(gbd)
                gad = g.lower(a, d)
                if not gad.is_zero():
                    acc = acc - ia_dtheta[b][d].scale(gad)
                scalar = interior_product(a, ia_dtheta[b][d]).coefficient(())
                if scalar.is_zero():
                    continue
                for c in range(n):
                    gcd_ = g.lower(c, d)
                    if gcd_.is_zero():
                        continue
                    acc = acc - Form.basis_one_form(tag, c).scale(gcd_ * scalar)
            row.append(acc.scale(neg_half))
        lowered.append(row)
    raised = [
        [
            _form_sum(
                [
                    lowered[b][c].scale(g.upper(a, b))
                    for b in range(n)
                    if not g.upper(a, b).is_zero()
                ],
                1,
                tag,
            )
            for c in range(n)
        ]
        for a in range(n)
    ]
    return Connection(tag, one_forms=raised, lowered_one_forms=lowered)


def _form_sum(forms: list[Form], degree: int, tag: BasisTag) -> Form:
    acc = Form.zero(degree, tag)
    for f in forms:
        acc = acc + f
    return acc


# ---------------------------------------------------------------------------
# Covariant derivatives (coordinate basis)
# ---------------------------------------------------------------------------

def _require_coordinate(conn: Connection) -> Chart:
    if conn.basis.kind != "coordinate":
        raise BasisMismatch("covariant derivatives are coordinate-basis only")
    return conn.basis.chart


def covariant_derivative_vector(conn: Connection, v: ComponentArray) -> ComponentArray:
    """nabla_a v^g = partial_a v^g + v^b Gamma^g_{ba}; indexed (g, a)."""
    chart = _require_coordinate(conn)
    n = conn.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for g in range(n):
        for a in range(n):
            total = v.get((g,)).partial(chart.coords[a])
            for b in range(n):
                vb = v.get((b,))
                if vb.is_zero():
                    continue
                total = total + vb * conn.coefficient(g, b, a)
            if not total.is_zero():
                entries[(g, a)] = total
    return ComponentArray(n, 2, entries)


def covariant_derivative_oneform(conn: Connection, w: ComponentArray) -> ComponentArray:
    """nabla_b w_g = partial_b w_g - w_a Gamma^a_{gb}; indexed (g, b)."""
    chart = _require_coordinate(conn)
    n = conn.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for g in range(n):
        for b in range(n):
            total = w.get((g,)).partial(chart.coords[b])
            for a in range(n):
                wa = w.get((a,))
                if wa.is_zero():
                    continue
                total = total - wa * conn.coefficient(a, g, b)
            if not total.is_zero():
                entries[(g, b)] = total
    return ComponentArray(n, 2, entries)


def covariant_derivative_metric(conn: Connection, g: Metric) -> ComponentArray:
    """nabla_a g_{bc} = partial_a g_{bc} - Gamma^s_{ba} g_{sc} - Gamma^s_{ca} g_{bs}.

    Indexed (b, c, a) with the derivative direction last; identically zero
    for connections built by ``connection_coefficients_coordinate``.
    """
    chart = _require_coordinate(conn)
    if g.basis != conn.basis:
        raise BasisMismatch("metric and connection bases differ")
    n = conn.dim
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for b in range(n):
        for c in range(n):
            for a in range(n):
                total = g.lower(b, c).partial(chart.coords[a])
                for s in range(n):
                    total = total - conn.coefficient(s, b, a) * g.lower(s, c)
                    total = total - conn.coefficient(s, c, a) * g.lower(b, s)
                if not total.is_zero():
                    entries[(b, c, a)] = total
    return ComponentArray(n, 3, entries)


# ---------------------------------------------------------------------------
# Basis changes and rendering
# ---------------------------------------------------------------------------

def change_basis(form: Form, to: BasisTag) -> Form:
    """Re-express a form in another basis over the same chart."""
    if form.basis == to:
        return form
    if form.basis.chart != to.chart:
        raise BasisMismatch("bases belong to different charts")
    if form.basis.kind == "coframe":
        form = form.basis.coframe.coordinate_form(form)
        if to.kind == "coordinate":
            return form
    # now form is coordinate-based
    if to.kind == "coordinate":
        return form
    return to.coframe.frame_form(form)


def coordinate_metric_from_frame(g: FrameMetric) -> Metric:
    """Pull the frame metric back to coordinates: g_mn = A^a_m A^b_n g_ab."""
    cf = g.coframe
    n = cf.chart.dim
    a_t = [[cf.matrix[j][i] for j in range(n)] for i in range(n)]
    coord = mat_mul(mat_mul(a_t, g.matrix), cf.matrix)
    return Metric(coord, cf.chart.coordinate_basis())


def line_element(g: Metric) -> str:
    """Quadratic-form rendering, e.g. ``2*H*du^2 + 2*du*dv - dx^2 - dy^2``."""
    n = g.dim
    names = [g.basis.one_form_name(i) for i in range(n)]
    parts: list[tuple[str, ScalarExpr]] = []
    for i in range(n):
        for j in range(i, n):
            coeff = g.lower(i, j) if i == j else g.lower(i, j) * 2
            if coeff.is_zero():
                continue
            sym = f"{names[i]}^2" if i == j else f"{names[i]}*{names[j]}"
            parts.append((sym, coeff))
    if not parts:
        return "0"
    out = ""
    for k, (sym, coeff) in enumerate(parts):
        txt = coeff.render()
        if " " in txt:
            piece, neg = f"({txt})*{sym}", False
        else:
            neg = txt.startswith("-")
            if neg:
                txt = txt[1:]
            piece = sym if txt == "1" else f"{txt}*{sym}"
        if k == 0:
            out = ("-" if neg else "") + piece
        else:
            out += (" - " if neg else " + ") + piece
    return out
