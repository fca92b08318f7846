//! Run configuration: JSON schema, dotted-path overrides, validation, and
//! execution of repeated runs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{run, RunOutput, RunSettings, StoppingRules, ThresholdSchedule};
use crate::models::{mad_calibrate, Distance, ModelConfig, Problem};
use crate::proposals::ProposalSpec;
use crate::{AbcError, Result};

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub proposal: ProposalSpec,
    pub schedule: ThresholdSchedule,
    pub n_particles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub n_repeats: usize,
    /// Worker threads; `None` defers to the environment or all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub stopping: StoppingRules,
    /// Prior-predictive simulations for MAD distance scaling; `None` uses the
    /// model default and 0 disables scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mad_sims: Option<usize>,
    /// Write one particle file per iteration.
    #[serde(default = "yes")]
    pub save_particles: bool,
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> AbcError {
    AbcError::Config {
        field: field.into(),
        message: message.into(),
    }
}

/// Parses an override value: JSON when it parses, a plain string otherwise.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a JSON document, creating objects as needed.
/// Numeric segments index into existing arrays.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(assignment, "override must look like key.path=value"))?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(config_error(path, "empty path segment"));
    }
    let mut cur = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| config_error(path, format!("`{seg}` is not an array index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| config_error(path, format!("index {idx} out of range")))?
            }
            other => {
                if !other.is_object() {
                    *other = Value::Object(Default::default());
                }
                let map = other.as_object_mut().expect("object");
                map.entry(seg.to_string()).or_insert(Value::Null)
            }
        };
        if last {
            *cur = parse_value(raw);
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| config_error("", format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_value(doc)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AbcError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, overrides)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every constraint before any simulation starts.
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(config_error("n_particles", "at least 2 particles are needed"));
        }
        if self.n_repeats == 0 {
            return Err(config_error("n_repeats", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers", "must be at least 1"));
        }
        if self.mad_sims == Some(1) {
            return Err(config_error("mad_sims", "use 0 to disable or at least 2 simulations"));
        }
        self.schedule.validate()?;
        self.stopping.validate()?;
        let model = self
            .model
            .build()
            .map_err(|e| config_error(format!("model.{}", self.model.name()), e.to_string()))?;
        self.proposal.validate(model.d_theta())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_repeats as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    pub fn mad_sims(&self) -> usize {
        self.mad_sims.unwrap_or_else(|| self.model.default_mad_sims())
    }

    /// Builds the model and its distance, running MAD calibration when enabled.
    pub fn problem(&self) -> Result<Problem> {
        let model = self.model.build()?;
        let distance = match self.mad_sims() {
            0 => Distance::unscaled(model.d_s()),
            n => mad_calibrate(model.as_ref(), n, self.seed)?,
        };
        Problem::new(model, distance)
    }

    pub fn settings(&self, seed: u64, workers: usize) -> RunSettings {
        RunSettings::new(self.n_particles, seed)
            .workers(workers)
            .stopping(self.stopping.clone())
    }

    /// Runs all repeats; repeat `r` uses seed `seed + r`.
    pub fn execute(&self, problem: &Problem, workers: usize) -> Result<Vec<RunOutput>> {
        let work = |seed: u64| run(problem, &self.proposal, &self.schedule, &self.settings(seed, 0));
        let go = || self.seeds().into_iter().map(work).collect::<Result<Vec<_>>>();
        if workers == 0 {
            return go();
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| config_error("workers", e.to_string()))?
            .install(go)
    }
}

/// Runs independent configurations in parallel on the current pool.
pub fn execute_many(jobs: &[(RunConfig, Problem)]) -> Result<Vec<Vec<RunOutput>>> {
    jobs.par_iter().map(|(c, p)| c.execute(p, 0)).collect()
}
