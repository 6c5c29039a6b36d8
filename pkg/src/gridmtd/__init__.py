"""Multi-stage reactance-perturbation defense for DC state estimation.

Pipeline: parse a grid case, read its graph structure (bridges, cycles,
cuts), place perturbation hardware, search a stage schedule that shrinks
the stealthy-attack space to its floor, and measure detection probability
against injected attacks by Monte Carlo.
"""

from .attacks import AttackVector, construct_attack, is_stealthy, random_cut_attack
from .case_io import (
    BUNDLED_CASES,
    Branch,
    Bus,
    CaseParseError,
    CaseValidationError,
    DocumentFormatError,
    Generator,
    GridCase,
    MtdScheduleDocument,
    adp_csv,
    doa_curve_csv,
    load_bundled_case,
    net_injections,
    parse_matpower_case,
    read_schedule,
    write_schedule,
)
from .dc import (
    BddThreshold,
    DegreesOfFreedomError,
    EstimationError,
    IslandError,
    MeasurementMatrix,
    MeasurementModel,
    StateEstimate,
    batch_residuals,
    bdd_threshold,
    dc_power_flow,
    dc_state_estimate,
    loss_proxy,
    measurement_matrix,
    simulate_measurements,
)
from .experiments import (
    AdpConfig,
    AdpReport,
    EconomicCycle,
    Table1Report,
    economic_average,
    loaded_first_weights,
    reproduce_table1,
    run_adp,
    schedule_document,
)
from .mtd import (
    RANK_REL_EPS,
    CircuitBasis,
    Completeness,
    CompositeMatrix,
    MtdSchedule,
    SearchError,
    circuit_basis,
    composite_matrix,
    doa,
    numerical_rank,
    plan_mmtd,
    stealthy_basis,
    supremum,
    verify_completeness,
)
from .topology import (
    CutBasis,
    DeploymentPlan,
    LoopMatrix,
    SpanningForest,
    Topology,
    analyze_deployment,
    deployment_plan,
    find_bridges,
    fundamental_cuts,
    fundamental_cycles,
    spanning_forest,
)

__version__ = "0.1.0"

__all__ = [
    "AdpConfig",
    "AdpReport",
    "AttackVector",
    "BUNDLED_CASES",
    "BddThreshold",
    "Branch",
    "Bus",
    "CaseParseError",
    "CaseValidationError",
    "CircuitBasis",
    "Completeness",
    "CompositeMatrix",
    "CutBasis",
    "DegreesOfFreedomError",
    "DeploymentPlan",
    "DocumentFormatError",
    "EconomicCycle",
    "EstimationError",
    "Generator",
    "GridCase",
    "IslandError",
    "LoopMatrix",
    "MeasurementMatrix",
    "MeasurementModel",
    "MtdSchedule",
    "MtdScheduleDocument",
    "RANK_REL_EPS",
    "SearchError",
    "SpanningForest",
    "StateEstimate",
    "Table1Report",
    "Topology",
    "adp_csv",
    "analyze_deployment",
    "batch_residuals",
    "bdd_threshold",
    "circuit_basis",
    "composite_matrix",
    "construct_attack",
    "dc_power_flow",
    "dc_state_estimate",
    "deployment_plan",
    "doa",
    "doa_curve_csv",
    "economic_average",
    "find_bridges",
    "fundamental_cuts",
    "fundamental_cycles",
    "is_stealthy",
    "load_bundled_case",
    "loaded_first_weights",
    "loss_proxy",
    "measurement_matrix",
    "net_injections",
    "numerical_rank",
    "parse_matpower_case",
    "plan_mmtd",
    "random_cut_attack",
    "read_schedule",
    "reproduce_table1",
    "run_adp",
    "schedule_document",
    "simulate_measurements",
    "spanning_forest",
    "stealthy_basis",
    "supremum",
    "verify_completeness",
    "write_schedule",
]
