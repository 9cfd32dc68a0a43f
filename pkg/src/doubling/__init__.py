"""Dimension estimates and doubling-type measures on finite pseudo-metric spaces."""

from .errors import (
    ConfigError,
    DoublingError,
    HypothesisViolation,
    OracleTooLarge,
    PreconditionError,
    UnsupportedMeasure,
)
from .nets import NetHierarchy, build_hierarchy, check_child_bounds, choose_scale_base
from .packing import (
    curve_knee,
    exact_packing_number,
    fit_lower_dimension,
    fit_upper_dimension,
    greedy_separated,
    packing_profile,
    scan_dimension,
)
from .space import (
    PseudoMetricSpace,
    from_coordinates,
    from_matrix,
    generate_cantor,
    load_space,
    quasi_triangle_constant,
    union_spaces,
)
from .transfer import DiscreteMeasure, TransferConstants, build_measure, refine_measure
from .verify import (
    doubling_constant,
    fit_measure_lower,
    fit_measure_upper,
    ratio_profile,
    transport_bound_check,
    trivial_inequality_report,
    verify_measure,
)

__version__ = "0.1.0"
