"""Energy-aware optimisation models for software-defined networks."""

from greensdn.errors import (
    BudgetExhaustedError,
    ConstraintViolationError,
    InfeasibleError,
    InstanceParseError,
    UnsupportedVersionError,
)
from greensdn.model import (
    EdgeSpec,
    Flow,
    FlowRouting,
    NetworkState,
    ObjectiveMode,
    SwitchSpec,
    Topology,
    Violation,
    check_traffic_constraints,
    derive_network_state,
    evaluate_traffic_objective,
    validate_topology,
)

__all__ = [
    "BudgetExhaustedError",
    "ConstraintViolationError",
    "InfeasibleError",
    "InstanceParseError",
    "UnsupportedVersionError",
    "EdgeSpec",
    "Flow",
    "FlowRouting",
    "NetworkState",
    "ObjectiveMode",
    "SwitchSpec",
    "Topology",
    "Violation",
    "check_traffic_constraints",
    "derive_network_state",
    "evaluate_traffic_objective",
    "validate_topology",
]

__version__ = "0.1.0"
