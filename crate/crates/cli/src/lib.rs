//! Dataset schemas, bundled benchmark cases, result export and the command
//! implementations behind the `gridtc` binary.

pub mod bundle;
pub mod commands;
pub mod export;
pub mod schema;

pub use bundle::{load_builtin, load_bundle, write_bundle, Builtin, BundlePaths, CaseBundle, LoadError};
pub use commands::{
    adapter_by_name, build_problem, cmd_compare, cmd_powerflow, cmd_schedule, cmd_validate,
    run_schedule, ScheduleFlags, ALL_ADAPTERS, EXIT_AUDIT, EXIT_INFEASIBLE, EXIT_OK, EXIT_PARSE,
    EXIT_SOLVER,
};
pub use export::{export_results, ExportError, RunMetadata};

/// Resolve a bundle argument: a builtin name (`cigre`, `ieee123`) or a
/// directory containing `network.toml`, `devices.toml`, `timeseries.toml`
/// and optionally `scenario.toml`.
pub fn resolve_bundle(arg: &str) -> Result<CaseBundle, LoadError> {
    if let Some(builtin) = Builtin::from_name(arg) {
        return load_builtin(builtin);
    }
    let dir = std::path::Path::new(arg);
    load_bundle(&BundlePaths::in_dir(dir))
}
