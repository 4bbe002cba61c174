//! Run directories: `meta.json`, one CSV per table, `diagnostics.json` and
//! field and particle snapshots. Identical reports give identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use roughflow::euler::write_particles_csv;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiments::{Check, Report, Table};

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
struct Meta<'a> {
    library_version: &'a str,
    harness_version: &'a str,
    experiment: String,
    config_hash: String,
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    passed: bool,
    checks: &'a [Check],
    constants: &'a BTreeMap<String, f64>,
    tables: Vec<&'a str>,
    snapshot_times: Vec<f64>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report` under `root/<config name>` and returns that directory.
pub fn write_report(report: &Report, config: &ExperimentConfig, root: &Path) -> Result<PathBuf> {
    let dir = root.join(config.name());
    fs::create_dir_all(&dir)?;
    let meta = Meta {
        library_version: roughflow::VERSION,
        harness_version: HARNESS_VERSION,
        experiment: report.experiment.to_string(),
        config_hash: config.hash()?,
        config,
        seeds: &config.seeds,
        passed: report.passed(),
        checks: &report.checks,
        constants: &report.constants,
        tables: report.tables.iter().map(|t| t.name.as_str()).collect(),
        snapshot_times: report.snapshots.iter().map(|s| s.time).collect(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    for table in &report.tables {
        write_table(&dir.join(format!("{}.csv", table.name)), table)?;
    }
    write_json(&dir.join("diagnostics.json"), &report.diagnostics)?;
    for (k, snap) in report.snapshots.iter().enumerate() {
        let mut w = BufWriter::new(File::create(dir.join(format!("fields_t{k:04}.csv")))?);
        snap.field.write_csv(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(format!("particles_t{k:04}.csv")))?);
        write_particles_csv(&snap.particles, snap.time, &mut w)?;
        w.flush()?;
    }
    Ok(dir)
}
