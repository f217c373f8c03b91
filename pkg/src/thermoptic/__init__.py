"""Thermal-aware data-center energy optimization.

Thermodynamic rack model, closed-form optimal setpoints with KKT
certificates, Lyapunov-certified feedback controllers, and a closed-loop
simulator driven by synthetic workload traces.
"""

__version__ = "0.1.0"

from .controller import ControllerGains, LyapunovCertificate, certificate, solve_lyapunov, tsup_derivative, workload_derivative
from .errors import (
    ActiveSetError,
    CapacityError,
    ConfigError,
    CopRangeError,
    DegenerateParamsError,
    DivergenceError,
    HeterogeneousRacksError,
    NotHurwitzError,
    ThermopticError,
)
from .model import (
    CopCurve,
    DataCenterParams,
    JobBatch,
    SystemState,
    crac_power,
    heat_removed,
    input_matrix_B,
    rack_power,
    system_matrix_A,
    thermal_derivative,
    total_cost,
    validate_params,
)
from .optimizer import (
    OptimalSetpoint,
    brute_force_oracle,
    check_kkt,
    kkt_inactive_solution,
    kkt_partially_active_solution,
    solve_reduced,
)
from .simulator import (
    SimulationConfig,
    SimulationRecord,
    WorkloadTrace,
    generate_trace,
    inject_workload_change,
    run,
    step,
    synthesize_gamma,
)
from .steady_state import (
    SteadyStateConstants,
    compute_constants,
    steady_supply_temperature,
    steady_workload_distribution,
    verify_a_hurwitz,
    verify_c3_structure,
    verify_identities,
)

__all__ = [
    "ActiveSetError",
    "CapacityError",
    "ConfigError",
    "ControllerGains",
    "CopCurve",
    "CopRangeError",
    "DataCenterParams",
    "DegenerateParamsError",
    "DivergenceError",
    "HeterogeneousRacksError",
    "JobBatch",
    "LyapunovCertificate",
    "NotHurwitzError",
    "OptimalSetpoint",
    "SimulationConfig",
    "SimulationRecord",
    "SteadyStateConstants",
    "SystemState",
    "ThermopticError",
    "WorkloadTrace",
    "brute_force_oracle",
    "certificate",
    "check_kkt",
    "compute_constants",
    "crac_power",
    "generate_trace",
    "heat_removed",
    "inject_workload_change",
    "input_matrix_B",
    "kkt_inactive_solution",
    "kkt_partially_active_solution",
    "rack_power",
    "run",
    "solve_lyapunov",
    "solve_reduced",
    "steady_supply_temperature",
    "steady_workload_distribution",
    "step",
    "synthesize_gamma",
    "system_matrix_A",
    "thermal_derivative",
    "total_cost",
    "tsup_derivative",
    "validate_params",
    "verify_a_hurwitz",
    "verify_c3_structure",
    "verify_identities",
    "workload_derivative",
]
