"""Equilibrium computation for Fisher markets with resource-type constraints."""

from .demand import (
    DemandResult,
    ExcessDemand,
    Purchase,
    UnboundedDemandError,
    brute_force_demand,
    demand,
    demand_all,
)
from .fixedpoint import FixedPointResult, FixedPointTrace, residual, run, write_trace_csv
from .frontier import Frontier, VirtualProduct, build_frontier, untyped_rate
from .instances import (
    BUILTIN_NAMES,
    MarketInstance,
    ValidationReport,
    builtin_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    random_instance,
    save_instance,
    validate_instance,
)
from .solver import (
    DualBundle,
    InfeasibleInstanceError,
    KKTResiduals,
    SolveStats,
    ZeroUtilityError,
    kkt_residuals,
    solve_bpsop,
    solve_sop1,
)
from .verify import (
    BudgetGapReport,
    CrossCheckReport,
    EquilibriumReport,
    GridScanResult,
    NotAtFixedPointError,
    check_equilibrium,
    existence_condition,
    grid_nonexistence,
    kkt_crosscheck,
    sop1_budget_gap,
)

__all__ = [
    "BUILTIN_NAMES",
    "BudgetGapReport",
    "CrossCheckReport",
    "DemandResult",
    "DualBundle",
    "EquilibriumReport",
    "ExcessDemand",
    "FixedPointResult",
    "FixedPointTrace",
    "Frontier",
    "GridScanResult",
    "InfeasibleInstanceError",
    "KKTResiduals",
    "MarketInstance",
    "NotAtFixedPointError",
    "Purchase",
    "SolveStats",
    "UnboundedDemandError",
    "ValidationReport",
    "VirtualProduct",
    "ZeroUtilityError",
    "brute_force_demand",
    "build_frontier",
    "builtin_instance",
    "check_equilibrium",
    "demand",
    "demand_all",
    "existence_condition",
    "grid_nonexistence",
    "instance_from_dict",
    "instance_to_dict",
    "kkt_crosscheck",
    "kkt_residuals",
    "load_instance",
    "random_instance",
    "residual",
    "run",
    "save_instance",
    "solve_bpsop",
    "solve_sop1",
    "sop1_budget_gap",
    "untyped_rate",
    "validate_instance",
    "write_trace_csv",
]
