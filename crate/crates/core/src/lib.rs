//! Optimal 24-hour dispatch (tertiary control) of unbalanced three-phase
//! microgrids.
//!
//! The pipeline: build the three-phase admittance model ([`network`]),
//! describe loads, PV, wind and storage ([`devices`]), replace the
//! non-convex power-flow and load equations with affine surrogates
//! ([`wirtinger`]), assemble and solve the convex conic program
//! ([`scheduler`]), then check everything against an exact nonlinear power
//! flow ([`oracle`]).
//!
//! All model objects are immutable once constructed and all operations are
//! pure functions, so problems and solutions can be shared freely across
//! threads.

pub mod devices;
pub mod network;
pub mod oracle;
pub mod scheduler;
pub mod testgen;
pub mod wirtinger;

pub use devices::{
    battery_loss, load_power_exact, pv_bound, wind_bound, Battery, BatteryMode, DeviceError,
    DeviceFleet, ExponentialLoad, PvUnit, QuadLoss, TimeSeriesSet, WindTurbine,
};
pub use network::{
    build_admittance, grid_power, nodal_power, partition, slack_voltage, total_losses,
    AdmittancePartition, HyperBranch, Hypernode, NetworkError, NodePhase, Phase,
    ThreePhaseNetwork,
};
pub use oracle::{
    brute_force_dispatch, linearization_error_sweep, solve_power_flow, BruteForceResult,
    OracleError, PowerFlowSettings, PowerFlowSolution, TinyDispatchProblem,
};
pub use scheduler::{
    assemble, audit_tightness, solve, verify_against_oracle, BatteryState, ClarabelAdapter,
    DispatchSchedule, FirstOrderAdapter, ScenarioOptions, ScheduleError, ScheduleProblem,
    SolveReport, SolveSettings, SolveStatus, SolverAdapter,
};
pub use wirtinger::{
    build_linear_model, linearize_loads, linearize_power_flow, solve_linear_flow,
    wirtinger_residual, ExpansionPoint, LinearFlowModel, WirtingerError,
};
