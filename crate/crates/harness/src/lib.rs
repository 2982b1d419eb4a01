//! Experiment runner for `nsg-core`: JSON configs in, JSON reports and CSV
//! curves out.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod experiments;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use report::{CheckRecord, CsvRow, Report};

use report::{platform_note, Runner, EXIT_DOMAIN, EXIT_OK, EXIT_UNSATISFIED};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Report plus the CSV rows gathered on the way.
pub struct RunOutput {
    pub report: Report,
    pub csv: Vec<CsvRow>,
}

/// Runs every check of `cfg` in config order. With `timing` off, every
/// `runtime_ms` is `null` and the report is byte-reproducible.
pub fn run(cfg: &ExperimentConfig, timing: bool) -> RunOutput {
    let mut runner = Runner::new(timing);
    let error = experiments::dispatch(cfg, &mut runner).err();
    let satisfied = error.is_none() && runner.records.iter().all(|r| r.satisfied);
    let exit_code = match (&error, satisfied) {
        (Some(_), _) => EXIT_DOMAIN,
        (None, true) => EXIT_OK,
        (None, false) => EXIT_UNSATISFIED,
    };
    let report = Report {
        tool: "nsg",
        version: VERSION,
        platform: platform_note(),
        config: cfg.clone(),
        records: runner.records,
        satisfied,
        exit_code,
        error,
    };
    RunOutput { report, csv: runner.csv }
}

/// One line per experiment: name, description and anchors, in a fixed order.
pub fn list_experiments() -> String {
    ExperimentKind::ALL.iter().map(|k| format!("{}: {}\n", k.name(), k.description())).collect()
}
