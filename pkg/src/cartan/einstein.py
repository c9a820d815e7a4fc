"""Vacuum-Einstein analysis and the plane-fronted wave geometry.

``build_pp_wave`` constructs the null coframe, the constant frame metric
and the equivalent coordinate metric for the wave line element
2*H(x,y,u)*du^2 + 2*du*dv - dx^2 - dy^2.  ``vacuum_residuals`` runs the
full pipeline (connection, curvature, Ricci) on either route and reports
the independent scalar residuals whose vanishing makes the metric a
vacuum solution; for the wave family that is the single Laplace-type
condition H_xx + H_yy = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .expr import FuncDeriv, ScalarExpr, ZERO, ONE
from .exterior import ComponentArray
from .geometry import (
    Chart,
    Coframe,
    FrameMetric,
    Metric,
    Torsion,
    connection_coefficients_coordinate,
    connection_one_forms_rigid,
    coordinate_metric_from_frame,
)
from .curvature import (
    einstein_tensor,
    ricci,
    riemann_components_coordinate,
    riemann_components_from_forms,
    scalar_curvature,
    second_structural,
)

__all__ = [
    "PpWaveSpec",
    "PpWaveGeometry",
    "build_pp_wave",
    "VacuumReport",
    "vacuum_residuals",
    "check_einstein_full",
]


@dataclass(frozen=True)
class PpWaveSpec:
    """Profile function for the wave metric; H may depend on x, y and u."""

    profile: str = "H"
    profile_args: tuple[str, ...] = ("x", "y", "u")

    def __post_init__(self) -> None:
        object.__setattr__(self, "profile_args", tuple(self.profile_args))
        allowed = {"x", "y", "u"}
        bad = [a for a in self.profile_args if a not in allowed]
        if bad:
            raise ValueError(
                f"profile must not depend on {bad[0]!r} (allowed: x, y, u)"
            )

    @property
    def chart(self) -> Chart:
        return Chart(("u", "v", "x", "y"))

    def profile_expr(self) -> ScalarExpr:
        return ScalarExpr.from_atom(FuncDeriv(self.profile, self.profile_args))


class PpWaveGeometry(NamedTuple):
    coframe: Coframe
    frame_metric: FrameMetric
    coordinate_metric: Metric


def build_pp_wave(spec: PpWaveSpec = PpWaveSpec()) -> PpWaveGeometry:
    """Null coframe, constant frame metric, and coordinate metric of the wave."""
    chart = spec.chart
    h = spec.profile_expr()
    one, zero = ONE, ZERO
    # rows a, columns mu over (u, v, x, y)
    a = [
        [h, one, zero, zero],
        [one, zero, zero, zero],
        [zero, zero, one, zero],
        [zero, zero, zero, one],
    ]
    coframe = Coframe(chart, a)
    m1 = -ONE
    g_frame = FrameMetric(
        [
            [zero, one, zero, zero],
            [one, zero, zero, zero],
            [zero, zero, m1, zero],
            [zero, zero, zero, m1],
        ],
        coframe,
    )
    g_coord = coordinate_metric_from_frame(g_frame)
    return PpWaveGeometry(coframe, g_frame, g_coord)


@dataclass
class VacuumReport:
    """Outcome of checking R_{ab} = 0 for a metric.

    ``ricci_entries`` lists the nonzero Ricci components (indices are in
    the basis the pipeline ran in), ``independent_residuals`` the distinct
    nonzero scalars up to rational scale.  ``note`` classifies the residual
    when it is a plain sum of second-derivative atoms.
    """

    basis: str
    ricci_entries: list[tuple[tuple[int, int], ScalarExpr]]
    independent_residuals: list[ScalarExpr]
    scalar: ScalarExpr
    is_vacuum: bool
    note: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "basis": self.basis,
            "ricci": [
                {"indices": list(idx), "value": val.render()}
                for idx, val in self.ricci_entries
            ],
            "residuals": [r.render() for r in self.independent_residuals],
            "scalar": self.scalar.render(),
            "is_vacuum": self.is_vacuum,
            "note": self.note,
        }


def _monic(e: ScalarExpr) -> ScalarExpr:
    """Scale so the leading numerator coefficient is 1 (dedup helper)."""
    return e / ScalarExpr.from_fraction(e.leading_coefficient())


def _dedup_residuals(values: list[ScalarExpr]) -> list[ScalarExpr]:
    out: list[ScalarExpr] = []
    keys: list[ScalarExpr] = []
    for v in values:
        if v.is_zero():
            continue
        m = _monic(v)
        if not any(m == seen for seen in keys):
            keys.append(m)
            out.append(v)
    return out


def _classify(residuals: list[ScalarExpr]) -> str | None:
    if len(residuals) != 1:
        return None
    r = residuals[0]
    if not r.is_polynomial():
        return None
    atoms: list[FuncDeriv] = []
    for mono, _ in r.num.items():
        if len(mono) != 1:
            return None
        atom, exp = mono[0]
        if exp != 1 or not isinstance(atom, FuncDeriv) or len(atom.derivs) != 2:
            return None
        atoms.append(atom)
    if len({a.func for a in atoms}) != 1:
        return None
    coeffs = set(r.num.values())
    if len(coeffs) != 1:
        return None
    pure = all(a.derivs[0] == a.derivs[1] for a in atoms)
    kind = "Laplace-type" if pure else "second-order"
    names = ", ".join(str(a) for a in atoms)
    return f"{kind} condition: sum of second derivatives ({names}) must vanish"


def vacuum_residuals(
    g: Metric, torsion: Torsion | None = None
) -> VacuumReport:
    """Run the pipeline and report the residuals of R_{ab} = 0.

    A coframe-basis metric takes the rigid route (constant entries, zero
    torsion); a coordinate-basis metric goes through the Schouten-bracket
    connection, which accepts torsion.
    """
    if g.basis.kind == "coframe":
        if torsion is not None and not torsion.is_zero():
            raise ValueError("the rigid-frame route requires zero torsion")
        conn = connection_one_forms_rigid(g.basis.coframe, g)
        basis_name = "frame"
    else:
        conn = connection_coefficients_coordinate(g, torsion)
        basis_name = "coordinate"
    if conn.basis.kind == "coframe":
        riem = riemann_components_from_forms(second_structural(conn))
    else:
        riem = riemann_components_coordinate(conn)
    ric = ricci(riem)
    scalar = scalar_curvature(ric, g)
    entries = [(idx, val) for idx, val in ric.iter_nonzero()]
    residuals = _dedup_residuals([val for _, val in entries])
    return VacuumReport(
        basis=basis_name,
        ricci_entries=[((a, b), v) for (a, b), v in entries],
        independent_residuals=residuals,
        scalar=scalar,
        is_vacuum=not residuals,
        note=_classify(residuals),
    )


def check_einstein_full(
    g: Metric, ric: ComponentArray, scalar: ScalarExpr
) -> ComponentArray:
    """The full tensor G_{ab} = R_{ab} - 1/2 g_{ab} R as a residual array."""
    return einstein_tensor(ric, scalar, g)
