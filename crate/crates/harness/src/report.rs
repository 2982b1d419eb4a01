//! Reports, CSV rows and the check runner that produces them.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSATISFIED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

/// One verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// Where the checked statement lives in the source text.
    pub anchor: String,
    pub satisfied: bool,
    /// Slack of the checked inequality; negative when violated. `null` when
    /// the check has nothing to measure (e.g. an empty bisector sample).
    pub margin: Option<f64>,
    /// Wall-clock time of the computation behind the record; `null` when
    /// timing is disabled. Records derived from one computation share it.
    pub runtime_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

/// A curve sample for external plotting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub t: f64,
    pub quantity: String,
    pub value: f64,
    pub geodesic_id: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub platform: String,
    pub config: ExperimentConfig,
    pub records: Vec<CheckRecord>,
    pub satisfied: bool,
    pub exit_code: i32,
    /// Set when a check raised a domain error.
    pub error: Option<CheckError>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckError {
    pub check: String,
    pub message: String,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

pub fn platform_note() -> String {
    format!(
        "{}-{}; numeric fields reproduce bit-for-bit on one platform, runtime_ms does not",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Writes `rows` as RFC-4180 CSV with header `t,quantity,value,geodesic_id,seed`.
pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["t", "quantity", "value", "geodesic_id", "seed"])?;
    }
    w.flush()?;
    Ok(())
}

/// Collects records while the experiment runs.
pub struct Runner {
    timing: bool,
    pub records: Vec<CheckRecord>,
    pub csv: Vec<CsvRow>,
}

/// Outcome of one check, before timing is attached.
pub struct Verdict {
    pub satisfied: bool,
    pub margin: Option<f64>,
    pub detail: Option<Value>,
}

impl Verdict {
    pub fn new(satisfied: bool, margin: f64) -> Self {
        Self { satisfied, margin: Some(margin), detail: None }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl Runner {
    pub fn new(timing: bool) -> Self {
        Self { timing, records: Vec::new(), csv: Vec::new() }
    }

    /// Runs `f`, naming `check` in the error if it fails.
    pub fn compute<T>(&self, check: &str, f: impl FnOnce() -> nsg_core::Result<T>) -> Result<(T, Option<u64>), CheckError> {
        let start = Instant::now();
        let out = f().map_err(|e| CheckError { check: check.to_string(), message: e.to_string() })?;
        let ms = self.timing.then(|| start.elapsed().as_millis() as u64);
        Ok((out, ms))
    }

    pub fn push(&mut self, name: impl Into<String>, anchor: impl Into<String>, runtime_ms: Option<u64>, v: Verdict) {
        self.records.push(CheckRecord {
            name: name.into(),
            anchor: anchor.into(),
            satisfied: v.satisfied,
            margin: v.margin,
            runtime_ms,
            detail: v.detail,
        });
    }

    /// [`Self::compute`] followed by [`Self::push`] for a single-record check.
    pub fn check(
        &mut self,
        name: &str,
        anchor: &str,
        f: impl FnOnce() -> nsg_core::Result<Verdict>,
    ) -> Result<(), CheckError> {
        let (v, ms) = self.compute(name, f)?;
        self.push(name, anchor, ms, v);
        Ok(())
    }

    pub fn row(&mut self, t: f64, quantity: &str, value: f64, geodesic_id: Option<usize>, seed: Option<u64>) {
        self.csv.push(CsvRow { t, quantity: quantity.to_string(), value, geodesic_id, seed });
    }
}
