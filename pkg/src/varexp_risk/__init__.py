"""Convex risk measures on variable-exponent Lebesgue spaces over a finite filtered model."""

from .dual import (DualResult, PenaltyValue, acceptance_test, dual_objective, dual_value, penalty_minimal,
                   polar_cone_test)
from .dynamic import (ComposedFamily, OceFamily, acceptance_sets, compose_recursive, conditional_dual_check,
                      conditional_oce, conditional_penalty_min, consistency_audit, decompose_acceptance,
                      integrated_penalty, rho_t)
from .errors import ContractViolation, ValidationError
from .oce import Utility, certainty_equivalent, oce, rho, ssd_compare, subhomogeneity_gap
from .ordered import OrderedSpace, in_dual_feasible, leq_k, pairing
from .scenario import ScenarioDocument, load_scenario
from .space import FiniteMeasureSpace, tree_space
from .varexp import ExponentFunction, dual_exponent, holder_gap, luxemburg_norm, modular

__version__ = "0.1.0"

__all__ = [
    "ComposedFamily", "ContractViolation", "DualResult", "ExponentFunction", "FiniteMeasureSpace",
    "OceFamily", "OrderedSpace", "PenaltyValue", "ScenarioDocument", "Utility", "ValidationError",
    "acceptance_sets", "acceptance_test", "certainty_equivalent", "compose_recursive",
    "conditional_dual_check", "conditional_oce", "conditional_penalty_min", "consistency_audit",
    "decompose_acceptance", "dual_exponent", "dual_objective", "dual_value", "holder_gap", "in_dual_feasible",
    "integrated_penalty", "leq_k", "load_scenario", "luxemburg_norm", "modular", "oce", "pairing",
    "penalty_minimal", "polar_cone_test", "rho", "rho_t", "ssd_compare", "subhomogeneity_gap", "tree_space",
]
