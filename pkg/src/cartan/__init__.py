"""Exact exterior-calculus engine for connections, curvature and vacuum checks."""

from .expr import (
    Atom,
    CoordSymbol,
    DegreeOverflow,
    DivisionByZero,
    ExprError,
    FuncDeriv,
    NumericDivisionByZero,
    ScalarExpr,
    UnboundAtom,
    coordinate,
    degree_guard,
    func_deriv,
    function,
    integer,
    rational,
)
from .exterior import (
    BasisMismatch,
    BasisTag,
    Chart,
    ComponentArray,
    Form,
    IndexOutOfRange,
    alternate,
    components_to_form,
    exterior_derivative,
    form_to_components,
    interior_product,
    symmetrize,
    wedge,
)
from .geometry import (
    Coframe,
    Connection,
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
from .curvature import (
    NumericCheckReport,
    SingularAtPoint,
    bianchi_torsion_residual,
    einstein_tensor,
    first_structural,
    numeric_crosscheck,
    ricci,
    riemann_components_coordinate,
    riemann_components_from_forms,
    riemann_symmetry_residuals,
    scalar_curvature,
    second_structural,
    torsion_components_from_forms,
)
from .einstein import (
    PpWaveGeometry,
    PpWaveSpec,
    VacuumReport,
    build_pp_wave,
    check_einstein_full,
    vacuum_residuals,
)

__version__ = "0.1.0"
