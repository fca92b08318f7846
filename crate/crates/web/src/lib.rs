//! Browser demo: marginal family curves, copula proposal scatter and a small
//! two-moons ABC run.
//!
//! The pure functions below hold all the logic and are tested natively; the
//! `wasm` module only converts errors into JavaScript exceptions.

use std::sync::Arc;

use guided_abc::copulas::{CopulaKind, CopulaProposal};
use guided_abc::distributions::{params_from_moments, MarginalKind};
use guided_abc::models::{TwoMoons, TwoMoonsParams};
use guided_abc::rng::stream;
use guided_abc::{run, Problem, ProposalKind, ProposalSpec, RunSettings, ThresholdSchedule};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Largest particle count the page may request.
pub const MAX_PARTICLES: usize = 2000;

fn parse<T: serde::de::DeserializeOwned>(what: &str, name: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(|_| format!("unknown {what} `{name}`"))
}

/// Density of the named marginal family with mean `mean` and variance
/// `variance` at each point of `xs`.
pub fn marginal_density(family: &str, mean: f64, variance: f64, xs: &[f64]) -> Result<Vec<f64>, String> {
    let kind: MarginalKind = parse("marginal family", family)?;
    let f = params_from_moments(kind, mean, variance, None).map_err(|e| e.to_string())?;
    Ok(xs.iter().map(|&x| f.pdf(x)).collect())
}

/// `n` draws from a bivariate copula proposal with standardized marginals and
/// correlation `rho`, flattened as `[x0, y0, x1, y1, ...]`.
pub fn copula_scatter(copula: &str, family: &str, rho: f64, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let copula: CopulaKind = parse("copula", copula)?;
    let kind: MarginalKind = parse("marginal family", family)?;
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(format!("correlation must lie in (-1, 1), got {rho}"));
    }
    if n > 100_000 {
        return Err("at most 100000 points".into());
    }
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let proposal = CopulaProposal::from_moments(&DVector::zeros(2), &cov, copula, kind, None).map_err(|e| e.to_string())?;
    let mut rng = stream(seed, 0, 0);
    Ok((0..n).flat_map(|_| proposal.sample(&mut rng).iter().copied().collect::<Vec<_>>()).collect())
}

#[derive(Debug, Serialize)]
pub struct DemoIteration {
    pub t: usize,
    pub delta: f64,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub n_sims: u64,
    /// Parameters flattened as `[x0, y0, x1, y1, ...]`.
    pub thetas: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DemoRun {
    pub proposal: String,
    pub stop_reason: String,
    pub iterations: Vec<DemoIteration>,
}

/// Two-moons ABC with observed summaries at the origin. Copula kinds use a
/// Gaussian copula with triangular marginals.
pub fn two_moons_run(kind: &str, n: usize, deltas: &[f64], seed: u64) -> Result<DemoRun, String> {
    let kind: ProposalKind = parse("proposal kind", kind)?;
    if !(2..=MAX_PARTICLES).contains(&n) {
        return Err(format!("particle count must be between 2 and {MAX_PARTICLES}"));
    }
    let spec = if kind.is_copula() {
        ProposalSpec::copula(kind, CopulaKind::Gaussian, MarginalKind::Triangular)
    } else if kind == ProposalKind::Fullcondoptblocked {
        ProposalSpec::fullcondoptblocked(vec![0, 1])
    } else {
        ProposalSpec::new(kind)
    };
    let model = TwoMoons::new(TwoMoonsParams::default()).map_err(|e| e.to_string())?;
    let problem = Problem::unscaled(Arc::new(model));
    let schedule = ThresholdSchedule::Fixed { deltas: deltas.to_vec() };
    let out = run(&problem, &spec, &schedule, &RunSettings::new(n, seed)).map_err(|e| e.to_string())?;
    let iterations = out
        .systems
        .iter()
        .zip(&out.reports)
        .map(|(s, r)| DemoIteration {
            t: r.t,
            delta: r.delta,
            acceptance_rate: r.acceptance_rate,
            ess: r.ess,
            n_sims: r.n_sims,
            thetas: s.thetas.iter().flat_map(|t| t.iter().copied().collect::<Vec<_>>()).collect(),
            weights: s.weights.clone(),
        })
        .collect();
    Ok(DemoRun {
        proposal: spec.label(),
        stop_reason: out.stop_reason.name().to_string(),
        iterations,
    })
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn js(e: String) -> JsValue {
        JsValue::from_str(&e)
    }

    #[wasm_bindgen(js_name = marginalDensity)]
    pub fn marginal_density(family: &str, mean: f64, variance: f64, xs: Vec<f64>) -> Result<Vec<f64>, JsValue> {
        super::marginal_density(family, mean, variance, &xs).map_err(js)
    }

    #[wasm_bindgen(js_name = copulaScatter)]
    pub fn copula_scatter(copula: &str, family: &str, rho: f64, n: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
        super::copula_scatter(copula, family, rho, n, seed as u64).map_err(js)
    }

    /// Returns the run as a JSON string.
    #[wasm_bindgen(js_name = twoMoonsRun)]
    pub fn two_moons_run(kind: &str, n: usize, deltas: Vec<f64>, seed: u32) -> Result<String, JsValue> {
        let run = super::two_moons_run(kind, n, &deltas, seed as u64).map_err(js)?;
        Ok(serde_json::to_string(&run).expect("run serializes"))
    }
}
