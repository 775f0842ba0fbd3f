//! Dataset generation, result tables, runtime benchmarks and sweeps.

mod generate;
mod run;
mod runtime;
mod sweep;
mod table;

pub use generate::{generate_dataset, GenerateConfig};
pub use run::{
    generate_file, sha256_file, sidecar_path, sweep_run, train_run, HarnessError, RunConfig, CONFIG_FILE, LOG_FILE, MODEL_FILE,
    RUN_VERSION, SWEEP_FILE,
};
pub use runtime::{loglog_slope, runtime, write_runtime_csv, RuntimeConfig, RuntimeRow};
pub use sweep::{select_by_validation, sweep, SweepParam, SweepRow};
pub use table::{build_table, collect_results, write_table_csv, RunResult, TableRow, RESULT_FILE, TABLE_METHODS};
