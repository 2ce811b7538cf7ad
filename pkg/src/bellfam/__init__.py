"""Low-detection-efficiency Bell inequality family: construction, bounds, violations."""

from .classical import (
    beta_matrix,
    classical_maximum,
    permanent,
    permanent_form_value,
    strategy_value,
)
from .family import (
    APPENDIX_C,
    HierarchyExponents,
    TermClass,
    assign_free_coefficients,
    family,
    generate_family,
    preset_333,
    preset_appendix_ch,
    significant_coefficients,
    term_class,
)
from .inequality import (
    BellInequality,
    DeterministicStrategy,
    GeneralInequality,
    InputError,
    ResourceError,
    party_count_of_term,
    permutation_count,
)
from .optimize import (
    critical_efficiency_numeric,
    optimize_angles,
    scaling_exponents,
    seesaw,
)
from .quantum import (
    MeasurementOperator,
    SymmetricState,
    analytic_conditional_probability,
    analytic_elements,
    conditional_probability_bruteforce,
    eta_crit_closed_form,
    massar_pironio_lower_bound,
    mixing_angle_for_threshold,
    quantum_bell_value,
    robustness,
    threshold_from_contributions,
)

__version__ = "0.1.0"
