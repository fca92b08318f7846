//! Result files: `report.csv`, `particles_run{r}_t{t}.csv` and `manifest.json`.
//!
//! Reals are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64` exactly, so reruns produce byte-identical particle files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::engine::{IterationReport, ParticleSystem, RunOutput, StopReason};
use crate::{AbcError, Result};

pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_COLUMNS: [&str; 8] = [
    "run",
    "t",
    "delta",
    "n_proposals",
    "acceptance_rate",
    "ess",
    "n_sims",
    "wallclock_s",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| AbcError::Io(format!("{}: cannot parse `{s}` as a number", path.display())))
}

pub fn particles_file_name(run: usize, t: usize) -> String {
    format!("particles_run{run}_t{t}.csv")
}

pub fn particle_columns(d_theta: usize) -> Vec<String> {
    (1..=d_theta)
        .map(|k| format!("theta_{k}"))
        .chain(["weight".to_string(), "distance".to_string()])
        .collect()
}

pub fn write_particles(path: &Path, system: &ParticleSystem) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(particle_columns(system.d_theta()))?;
    for i in 0..system.len() {
        let row: Vec<String> = system.thetas[i]
            .iter()
            .chain([&system.weights[i], &system.distances[i]])
            .map(|v| fmt_f64(*v))
            .collect();
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Particle file contents as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleTable {
    pub thetas: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
}

impl ParticleTable {
    /// A particle system without summaries, for metrics.
    pub fn to_system(&self) -> Result<ParticleSystem> {
        let total: f64 = self.weights.iter().sum();
        let weights = self.weights.iter().map(|w| w / total).collect();
        let delta = self.distances.iter().copied().fold(0.0, f64::max);
        ParticleSystem::from_weights(
            self.thetas.clone(),
            vec![DVector::zeros(0); self.thetas.len()],
            self.distances.clone(),
            weights,
            0,
            delta,
        )
    }
}

pub fn read_particles(path: &Path) -> Result<ParticleTable> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let d = headers.len().saturating_sub(2);
    if headers.len() < 3 || headers.iter().collect::<Vec<_>>() != particle_columns(d) {
        return Err(AbcError::Io(format!("{}: unexpected particle header", path.display())));
    }
    let mut table = ParticleTable {
        thetas: Vec::new(),
        weights: Vec::new(),
        distances: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec?;
        let vals = rec.iter().map(|s| parse_f64(s, path)).collect::<Result<Vec<_>>>()?;
        table.thetas.push(DVector::from_row_slice(&vals[..d]));
        table.weights.push(vals[d]);
        table.distances.push(vals[d + 1]);
    }
    if table.thetas.is_empty() {
        return Err(AbcError::Io(format!("{}: no particles", path.display())));
    }
    Ok(table)
}

pub fn write_report(path: &Path, runs: &[&[IterationReport]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for (run, reports) in runs.iter().enumerate() {
        for r in reports.iter() {
            w.write_record([
                run.to_string(),
                r.t.to_string(),
                fmt_f64(r.delta),
                r.n_proposals.to_string(),
                fmt_f64(r.acceptance_rate),
                fmt_f64(r.ess),
                r.n_sims.to_string(),
                fmt_f64(r.wallclock_s),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Report rows with their run index.
pub fn read_report(path: &Path) -> Result<Vec<(usize, IterationReport)>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != REPORT_COLUMNS {
        return Err(AbcError::Io(format!("{}: unexpected report header", path.display())));
    }
    let int = |s: &str| -> Result<u64> {
        s.parse()
            .map_err(|_| AbcError::Io(format!("{}: cannot parse `{s}` as an integer", path.display())))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push((
            int(&rec[0])? as usize,
            IterationReport {
                t: int(&rec[1])? as usize,
                delta: parse_f64(&rec[2], path)?,
                n_proposals: int(&rec[3])?,
                acceptance_rate: parse_f64(&rec[4], path)?,
                ess: parse_f64(&rec[5], path)?,
                n_sims: int(&rec[6])?,
                wallclock_s: parse_f64(&rec[7], path)?,
            },
        ));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_delta: f64,
    pub particle_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub distance_scale: Vec<f64>,
    pub report_file: String,
    pub report_columns: Vec<String>,
    pub particle_columns: Vec<String>,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AbcError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AbcError::Io(format!("{}: {e}", path.display())))
    }
}

/// Writes the report, particle snapshots and manifest for a set of runs.
pub fn write_outputs(dir: &Path, config: &RunConfig, distance_scale: &[f64], outputs: &[RunOutput]) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| AbcError::Io(format!("{}: {e}", dir.display())))?;
    let seeds = config.seeds();
    let mut runs = Vec::new();
    for (r, out) in outputs.iter().enumerate() {
        let mut files = Vec::new();
        if config.save_particles {
            for sys in &out.systems {
                let name = particles_file_name(r, sys.iteration);
                write_particles(&dir.join(&name), sys)?;
                files.push(name);
            }
        }
        let last = out.final_system();
        runs.push(RunRecord {
            run: r,
            seed: seeds[r],
            iterations: out.reports.len(),
            stop_reason: out.stop_reason,
            final_delta: last.delta,
            particle_files: files,
        });
    }
    let reports: Vec<&[IterationReport]> = outputs.iter().map(|o| o.reports.as_slice()).collect();
    write_report(&dir.join(REPORT_FILE), &reports)?;
    let d_theta = outputs.first().map_or(0, |o| o.final_system().d_theta());
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        distance_scale: distance_scale.to_vec(),
        report_file: REPORT_FILE.into(),
        report_columns: REPORT_COLUMNS.iter().map(|s| s.to_string()).collect(),
        particle_columns: particle_columns(d_theta),
        runs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST_FILE), text + "\n").map_err(|e| AbcError::Io(e.to_string()))?;
    Ok(manifest)
}

pub fn particle_paths(dir: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    manifest
        .runs
        .iter()
        .flat_map(|r| r.particle_files.iter().map(|f| dir.join(f)))
        .collect()
}
