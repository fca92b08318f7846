//! The sequential ABC loop shared by SIS-ABC and SMC-ABC.
//!
//! Iteration 1 samples the prior with unit weights. Later iterations fit a
//! proposal to the previous particles, then repeat
//! propose, prior check, simulate, distance check
//! until `N` particles are accepted. Each accepted particle gets the
//! unnormalized weight `prior(theta) / g_t(theta)`.
//!
//! Proposals are evaluated in batches on a rayon pool. Proposal `c` of
//! iteration `t` draws all its randomness from `rng::stream(seed, t, c)` and
//! the first `N` acceptances in counter order are kept, so the output does
//! not depend on the number of workers or the batch size.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::Problem;
use crate::proposals::{FittedProposal, ProposalSpec};
use crate::rng::{control_stream, stream};
use crate::{AbcError, Result};

/// Browsers have no monotonic clock behind `Instant`, so wallclock reads 0 there.
#[cfg(not(target_arch = "wasm32"))]
fn clock() -> Option<Instant> {
    Some(Instant::now())
}

#[cfg(target_arch = "wasm32")]
fn clock() -> Option<Instant> {
    None
}

/// Weighted particles accepted at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub thetas: Vec<DVector<f64>>,
    pub summaries: Vec<DVector<f64>>,
    pub distances: Vec<f64>,
    pub log_weights_unnormalized: Vec<f64>,
    pub weights: Vec<f64>,
    pub iteration: usize,
    pub delta: f64,
}

fn check_lengths(n: usize, lens: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(AbcError::InvalidParameter("a particle system needs at least one particle".into()));
    }
    if lens.iter().any(|&l| l != n) {
        return Err(AbcError::DimensionMismatch(format!("particle arrays have lengths {n} and {lens:?}")));
    }
    Ok(())
}

/// Normalizes log weights with the max-shift trick.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(AbcError::DegenerateWeights(max));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

impl ParticleSystem {
    pub fn from_log_weights(
        thetas: Vec<DVector<f64>>,
        summaries: Vec<DVector<f64>>,
        distances: Vec<f64>,
        log_weights_unnormalized: Vec<f64>,
        iteration: usize,
        delta: f64,
    ) -> Result<Self> {
        check_lengths(thetas.len(), &[summaries.len(), distances.len(), log_weights_unnormalized.len()])?;
        let weights = normalize_log_weights(&log_weights_unnormalized)?;
        Ok(Self {
            thetas,
            summaries,
            distances,
            log_weights_unnormalized,
            weights,
            iteration,
            delta,
        })
    }

    /// Builds a system from weights that are already normalized.
    pub fn from_weights(
        thetas: Vec<DVector<f64>>,
        summaries: Vec<DVector<f64>>,
        distances: Vec<f64>,
        weights: Vec<f64>,
        iteration: usize,
        delta: f64,
    ) -> Result<Self> {
        check_lengths(thetas.len(), &[summaries.len(), distances.len(), weights.len()])?;
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-10 {
            return Err(AbcError::DegenerateWeights(total));
        }
        Ok(Self {
            log_weights_unnormalized: weights.iter().map(|w| w.ln()).collect(),
            thetas,
            summaries,
            distances,
            weights,
            iteration,
            delta,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn d_theta(&self) -> usize {
        self.thetas[0].len()
    }

    /// ESS from the shifted unnormalized weights as `(sum w)^2 / sum w^2`,
    /// which is exactly `N` when all weights are equal.
    pub fn ess(&self) -> f64 {
        let max = self.log_weights_unnormalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (s1, s2) = self
            .log_weights_unnormalized
            .iter()
            .map(|l| (l - max).exp())
            .fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
        s1 * s1 / s2
    }

    /// Weighted posterior mean `sum_i w_i theta_i`.
    pub fn posterior_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d_theta());
        for (th, &w) in self.thetas.iter().zip(&self.weights) {
            m.axpy(w, th, 1.0);
        }
        m
    }
}

/// Effective sample size `1 / sum w^2` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Multinomial resampling: `m` indices drawn with probabilities `weights`.
pub fn resample_indices(weights: &[f64], m: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut acc = 0.0;
    let cumulative: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    (0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}

/// `m` equally weighted draws from the weighted particle set.
pub fn resample_equal_weight(system: &ParticleSystem, m: usize, rng: &mut dyn RngCore) -> Vec<DVector<f64>> {
    resample_indices(&system.weights, m, rng)
        .into_iter()
        .map(|i| system.thetas[i].clone())
        .collect()
}

/// Tolerance schedule: a fixed decreasing list, or percentile updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSchedule {
    Fixed {
        deltas: Vec<f64>,
    },
    Adaptive {
        delta1: f64,
        /// Percentile in (0, 100) of the previous iteration's distances.
        psi: f64,
        delta_stop: f64,
    },
}

pub const FALLBACK_FACTOR: f64 = 0.95;

impl ThresholdSchedule {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, message: &str| {
            Err(AbcError::Config {
                field: format!("schedule.{field}"),
                message: message.into(),
            })
        };
        match self {
            ThresholdSchedule::Fixed { deltas } => {
                if deltas.is_empty() {
                    return err("deltas", "fixed schedule is empty");
                }
                if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return err("deltas", "thresholds must be positive and finite");
                }
                if deltas.windows(2).any(|w| w[1] >= w[0]) {
                    return err("deltas", "thresholds must be strictly decreasing");
                }
            }
            ThresholdSchedule::Adaptive { delta1, psi, delta_stop } => {
                if !(*psi > 0.0 && *psi < 100.0) {
                    return err("psi", "percentile must lie in (0, 100)");
                }
                if !(*delta_stop > 0.0) {
                    return err("delta_stop", "must be positive");
                }
                if !(delta1.is_finite() && delta1 > delta_stop) {
                    return err("delta1", "must be finite and larger than delta_stop");
                }
            }
        }
        Ok(())
    }

    pub fn delta1(&self) -> f64 {
        match self {
            ThresholdSchedule::Fixed { deltas } => deltas[0],
            ThresholdSchedule::Adaptive { delta1, .. } => *delta1,
        }
    }
}

/// Nearest-rank percentile: the `ceil(psi/100 * n)`-th smallest value.
pub fn nearest_rank_percentile(values: &[f64], psi: f64) -> f64 {
    let mut v = values.to_vec();
    let n = v.len();
    let rank = ((psi / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let (_, nth, _) = v.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *nth
}

/// Next adaptive threshold from all distances of the previous iteration.
pub fn update_threshold(distances: &[f64], psi: f64, delta_prev: f64) -> f64 {
    let candidate = nearest_rank_percentile(distances, psi);
    if candidate < delta_prev {
        candidate
    } else {
        FALLBACK_FACTOR * delta_prev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingRules {
    /// Stop after two consecutive iterations below this acceptance rate.
    pub acceptance_floor: Option<f64>,
    pub max_iterations: usize,
    /// Per-iteration proposal budget, as a multiple of `N`.
    pub budget_factor: u64,
}

impl Default for StoppingRules {
    fn default() -> Self {
        Self {
            acceptance_floor: Some(0.015),
            max_iterations: 100,
            budget_factor: 1_000_000,
        }
    }
}

impl StoppingRules {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.acceptance_floor {
            if !(f > 0.0 && f < 1.0) {
                return Err(AbcError::Config {
                    field: "stopping.acceptance_floor".into(),
                    message: "must lie in (0, 1)".into(),
                });
            }
        }
        if self.max_iterations == 0 || self.budget_factor == 0 {
            return Err(AbcError::Config {
                field: "stopping".into(),
                message: "max_iterations and budget_factor must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdReached,
    LowAcceptance,
    EmptySubset,
    ScheduleExhausted,
    MaxIterations,
    DegenerateWeights,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::ThresholdReached => "threshold_reached",
            StopReason::LowAcceptance => "low_acceptance",
            StopReason::EmptySubset => "empty_subset",
            StopReason::ScheduleExhausted => "schedule_exhausted",
            StopReason::MaxIterations => "max_iterations",
            StopReason::DegenerateWeights => "degenerate_weights",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub t: usize,
    pub delta: f64,
    /// Proposals up to and including the N-th acceptance, prior-zero ones included.
    pub n_proposals: u64,
    pub acceptance_rate: f64,
    pub ess: f64,
    /// Forward-model runs, which excludes prior-zero proposals.
    pub n_sims: u64,
    pub wallclock_s: f64,
}

/// Decides whether to stop after the iterations in `reports`.
pub fn check_stop(reports: &[IterationReport], schedule: &ThresholdSchedule, rules: &StoppingRules) -> Option<StopReason> {
    let last = reports.last()?;
    match schedule {
        ThresholdSchedule::Adaptive { delta_stop, .. } if last.delta <= *delta_stop => {
            return Some(StopReason::ThresholdReached)
        }
        ThresholdSchedule::Fixed { deltas } if reports.len() >= deltas.len() => {
            return Some(StopReason::ScheduleExhausted)
        }
        _ => {}
    }
    if let (Some(floor), [.., a, b]) = (rules.acceptance_floor, reports) {
        if a.acceptance_rate < floor && b.acceptance_rate < floor {
            return Some(StopReason::LowAcceptance);
        }
    }
    if reports.len() >= rules.max_iterations {
        return Some(StopReason::MaxIterations);
    }
    None
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub n_particles: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    pub stopping: StoppingRules,
    /// Cap on stored distances used for the percentile update.
    pub reservoir_cap: usize,
}

impl RunSettings {
    pub fn new(n_particles: usize, seed: u64) -> Self {
        Self {
            n_particles,
            seed,
            workers: 0,
            stopping: StoppingRules::default(),
            reservoir_cap: 1_000_000,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn stopping(mut self, stopping: StoppingRules) -> Self {
        self.stopping = stopping;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Accepted particles of every completed iteration.
    pub systems: Vec<ParticleSystem>,
    pub reports: Vec<IterationReport>,
    pub stop_reason: StopReason,
}

impl RunOutput {
    pub fn final_system(&self) -> &ParticleSystem {
        self.systems.last().expect("a run completes at least one iteration")
    }
}

enum Outcome {
    PriorZero,
    Rejected(f64),
    Accepted {
        theta: DVector<f64>,
        summary: DVector<f64>,
        distance: f64,
        log_weight: f64,
    },
}

/// Fixed-size store of distances; keeps a uniform subset once full
/// (algorithm R, driven by a control stream so it stays deterministic).
struct Reservoir<R: RngCore> {
    cap: usize,
    seen: u64,
    values: Vec<f64>,
    rng: R,
}

impl<R: RngCore> Reservoir<R> {
    fn new(cap: usize, rng: R) -> Self {
        Self {
            cap,
            seen: 0,
            values: Vec::new(),
            rng,
        }
    }

    fn push(&mut self, v: f64) {
        self.seen += 1;
        if self.values.len() < self.cap {
            self.values.push(v);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.cap {
                self.values[j as usize] = v;
            }
        }
    }
}

const RESERVOIR_PURPOSE: u64 = 0;
const MIN_BATCH: u64 = 256;
const MAX_BATCH: u64 = 1 << 18;

struct IterationResult {
    system: ParticleSystem,
    report: IterationReport,
    distances: Vec<f64>,
}

fn run_iteration(
    problem: &Problem,
    proposal: &FittedProposal,
    t: usize,
    delta: f64,
    settings: &RunSettings,
) -> Result<IterationResult> {
    let start = clock();
    let model = problem.model.as_ref();
    let n = settings.n_particles;
    let budget = settings.stopping.budget_factor.saturating_mul(n as u64);
    let evaluate = |c: u64| -> Outcome {
        let mut rng = stream(settings.seed, t as u64, c);
        let (theta, _) = proposal.generate(model, &mut rng);
        let log_prior = model.prior_logpdf(&theta);
        if log_prior == f64::NEG_INFINITY || log_prior.is_nan() {
            return Outcome::PriorZero;
        }
        let summary = model.simulate_summaries(&theta, &mut rng);
        let distance = problem.distance.distance(&summary, &problem.observed);
        if !(distance < delta) {
            return Outcome::Rejected(distance);
        }
        let log_weight = if t == 1 { 0.0 } else { log_prior - proposal.log_gt(model, &theta) };
        Outcome::Accepted {
            theta,
            summary,
            distance,
            log_weight,
        }
    };

    let mut reservoir = Reservoir::new(settings.reservoir_cap, control_stream(settings.seed, t as u64, RESERVOIR_PURPOSE));
    let (mut thetas, mut summaries, mut distances, mut log_w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut counter, mut n_sims) = (0u64, 0u64);
    'outer: while thetas.len() < n {
        if counter >= budget {
            return Err(AbcError::Stall {
                iteration: t,
                budget,
                accepted: thetas.len(),
            });
        }
        let needed = (n - thetas.len()) as f64;
        let rate = if counter == 0 { 1.0 } else { thetas.len().max(1) as f64 / counter as f64 };
        let batch = ((needed / rate * 1.2) as u64).clamp(MIN_BATCH, MAX_BATCH).min(budget - counter);
        let outcomes: Vec<Outcome> = (counter..counter + batch).into_par_iter().map(evaluate).collect();
        for outcome in outcomes {
            counter += 1;
            match outcome {
                Outcome::PriorZero => {}
                Outcome::Rejected(d) => {
                    n_sims += 1;
                    reservoir.push(d);
                }
                Outcome::Accepted {
                    theta,
                    summary,
                    distance,
                    log_weight,
                } => {
                    n_sims += 1;
                    reservoir.push(distance);
                    thetas.push(theta);
                    summaries.push(summary);
                    distances.push(distance);
                    log_w.push(log_weight);
                    if thetas.len() == n {
                        break 'outer;
                    }
                }
            }
        }
    }
    let system = ParticleSystem::from_log_weights(thetas, summaries, distances, log_w, t, delta)?;
    let report = IterationReport {
        t,
        delta,
        n_proposals: counter,
        acceptance_rate: n as f64 / counter as f64,
        ess: system.ess(),
        n_sims,
        wallclock_s: start.map_or(0.0, |s| s.elapsed().as_secs_f64()),
    };
    Ok(IterationResult {
        system,
        report,
        distances: reservoir.values,
    })
}

fn run_inner(problem: &Problem, spec: &ProposalSpec, schedule: &ThresholdSchedule, settings: &RunSettings) -> Result<RunOutput> {
    let mut systems: Vec<ParticleSystem> = Vec::new();
    let mut reports: Vec<IterationReport> = Vec::new();
    let mut last_distances: Vec<f64> = Vec::new();
    let mut t = 1;
    let stop_reason = loop {
        let delta = match schedule {
            _ if t == 1 => schedule.delta1(),
            ThresholdSchedule::Fixed { deltas } => deltas[t - 1],
            ThresholdSchedule::Adaptive { psi, .. } => {
                update_threshold(&last_distances, *psi, systems.last().expect("t > 1").delta)
            }
        };
        let proposal = if t == 1 {
            FittedProposal::Prior
        } else {
            match FittedProposal::fit(spec, systems.last().expect("t > 1"), &problem.observed, delta, t) {
                Ok(p) => p,
                Err(AbcError::EmptySubset) => break StopReason::EmptySubset,
                Err(AbcError::DegenerateWeights(_)) => break StopReason::DegenerateWeights,
                Err(e) => return Err(e),
            }
        };
        let result = match run_iteration(problem, &proposal, t, delta, settings) {
            Ok(r) => r,
            Err(AbcError::DegenerateWeights(_)) => break StopReason::DegenerateWeights,
            Err(e) => return Err(e),
        };
        systems.push(result.system);
        reports.push(result.report);
        last_distances = result.distances;
        if let Some(reason) = check_stop(&reports, schedule, &settings.stopping) {
            break reason;
        }
        t += 1;
    };
    if systems.is_empty() {
        return Err(AbcError::DegenerateWeights(f64::NAN));
    }
    Ok(RunOutput {
        systems,
        reports,
        stop_reason,
    })
}

/// Runs SIS-ABC or SMC-ABC (chosen by the proposal kind) to completion.
pub fn run(problem: &Problem, spec: &ProposalSpec, schedule: &ThresholdSchedule, settings: &RunSettings) -> Result<RunOutput> {
    spec.validate(problem.model.d_theta())?;
    schedule.validate()?;
    settings.stopping.validate()?;
    if settings.n_particles < 2 {
        return Err(AbcError::Config {
            field: "n_particles".into(),
            message: "at least 2 particles are needed".into(),
        });
    }
    if settings.reservoir_cap == 0 {
        return Err(AbcError::Config {
            field: "reservoir_cap".into(),
            message: "must be positive".into(),
        });
    }
    if settings.workers == 0 {
        return run_inner(problem, spec, schedule, settings);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| AbcError::Config {
            field: "workers".into(),
            message: e.to_string(),
        })?;
    pool.install(|| run_inner(problem, spec, schedule, settings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianToy, GaussianToyParams, TwoMoons, TwoMoonsParams};
    use crate::proposals::ProposalKind;
    use crate::rng::stream;
    use std::sync::Arc;

    fn report(t: usize, delta: f64, acc: f64) -> IterationReport {
        IterationReport {
            t,
            delta,
            n_proposals: 100,
            acceptance_rate: acc,
            ess: 1.0,
            n_sims: 100,
            wallclock_s: 0.0,
        }
    }

    #[test]
    fn percentile_examples() {
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(update_threshold(&d, 25.0, 50.0), 25.0);
        assert!((update_threshold(&d, 25.0, 20.0) - 19.0).abs() < 1e-12);
        let d: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&d, 1.0), 10.0);
        assert_eq!(nearest_rank_percentile(&[3.0], 1.0), 3.0);
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[0.5, 0.5]), 2.0);
        assert_eq!(ess(&[1.0, 0.0, 0.0]), 1.0);
        assert!((ess(&[0.1; 10]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn stop_rules() {
        let fixed = ThresholdSchedule::Fixed { deltas: vec![3.0, 2.0, 1.0] };
        let rules = StoppingRules::default();
        let rs = vec![report(1, 3.0, 0.02), report(2, 2.0, 0.014)];
        assert_eq!(check_stop(&rs, &fixed, &rules), None);
        let mut rs3 = rs.clone();
        rs3.push(report(3, 1.0, 0.013));
        let adaptive = ThresholdSchedule::Adaptive {
            delta1: 50.0,
            psi: 1.0,
            delta_stop: 0.25,
        };
        assert_eq!(check_stop(&rs3, &adaptive, &rules), Some(StopReason::LowAcceptance));
        assert_eq!(check_stop(&rs3, &fixed, &rules), Some(StopReason::ScheduleExhausted));
        let no_floor = StoppingRules {
            acceptance_floor: None,
            ..StoppingRules::default()
        };
        assert_eq!(check_stop(&rs3, &adaptive, &no_floor), None);
        assert_eq!(
            check_stop(&[report(1, 0.24, 0.5)], &adaptive, &rules),
            Some(StopReason::ThresholdReached)
        );
    }

    #[test]
    fn schedule_validation() {
        assert!(ThresholdSchedule::Fixed { deltas: vec![2.0, 2.0] }.validate().is_err());
        assert!(ThresholdSchedule::Fixed { deltas: vec![] }.validate().is_err());
        let bad_psi = ThresholdSchedule::Adaptive {
            delta1: 5.0,
            psi: 100.0,
            delta_stop: 1.0,
        };
        assert!(bad_psi.validate().is_err());
        let json = r#"{"mode":"adaptive","delta1":50,"psi":1,"delta_stop":0.25}"#;
        let s: ThresholdSchedule = serde_json::from_str(json).unwrap();
        assert!(s.validate().is_ok());
    }

    #[test]
    fn resampling() {
        let thetas: Vec<DVector<f64>> = (0..4).map(|i| DVector::from_element(1, i as f64)).collect();
        let sys = ParticleSystem::from_weights(
            thetas.clone(),
            vec![DVector::zeros(1); 4],
            vec![0.0; 4],
            vec![1.0, 0.0, 0.0, 0.0],
            1,
            1.0,
        )
        .unwrap();
        let mut r = stream(1, 0, 0);
        assert!(resample_equal_weight(&sys, 100, &mut r).iter().all(|x| x[0] == 0.0));
        let idx = resample_indices(&[0.25; 4], 40_000, &mut r);
        for k in 0..4 {
            let f = idx.iter().filter(|&&i| i == k).count() as f64 / 40_000.0;
            assert!((f - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / 40_000.0).sqrt());
        }
    }

    #[test]
    fn log_weight_normalization() {
        let w = normalize_log_weights(&[1000.0, 1000.0 + 2f64.ln()]).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY]).is_err());
        assert!(normalize_log_weights(&[f64::INFINITY, 0.0]).is_err());
    }

    fn moons() -> Problem {
        Problem::unscaled(Arc::new(TwoMoons::new(TwoMoonsParams::default()).unwrap()))
    }

    #[test]
    fn first_iteration_has_unit_weights() {
        let p = moons();
        let sched = ThresholdSchedule::Fixed { deltas: vec![1.0, 0.5] };
        let out = run(&p, &ProposalSpec::new(ProposalKind::Blocked), &sched, &RunSettings::new(100, 3)).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.stop_reason, StopReason::ScheduleExhausted);
        let first = &out.systems[0];
        assert!(first.log_weights_unnormalized.iter().all(|&l| l == 0.0));
        assert_eq!(first.ess(), 100.0);
        for (sys, rep) in out.systems.iter().zip(&out.reports) {
            assert!(sys.distances.iter().all(|&d| d < rep.delta));
            assert!(rep.acceptance_rate > 0.0 && rep.acceptance_rate <= 1.0);
            assert!(rep.n_sims >= 100 && rep.n_sims <= rep.n_proposals);
            assert!(rep.ess >= 1.0 - 1e-9 && rep.ess <= 100.0 + 1e-9);
        }
    }

    #[test]
    fn prior_kind_keeps_equal_weights() {
        let p = moons();
        let sched = ThresholdSchedule::Fixed { deltas: vec![1.0, 0.5, 0.3] };
        let out = run(&p, &ProposalSpec::new(ProposalKind::Prior), &sched, &RunSettings::new(50, 4)).unwrap();
        for sys in &out.systems {
            assert!(sys.log_weights_unnormalized.iter().all(|&l| l == 0.0));
            assert!((sys.ess() - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn workers_do_not_change_results() {
        let p = moons();
        let sched = ThresholdSchedule::Fixed { deltas: vec![1.0, 0.5, 0.3] };
        for kind in [ProposalKind::Standard, ProposalKind::Hybrid] {
            let spec = ProposalSpec::new(kind);
            let a = run(&p, &spec, &sched, &RunSettings::new(80, 9).workers(1)).unwrap();
            let b = run(&p, &spec, &sched, &RunSettings::new(80, 9).workers(4)).unwrap();
            assert_eq!(a.systems, b.systems);
            for (x, y) in a.reports.iter().zip(&b.reports) {
                assert_eq!((x.n_proposals, x.n_sims, x.delta), (y.n_proposals, y.n_sims, y.delta));
            }
        }
    }

    #[test]
    fn stall_is_reported() {
        let p = moons();
        let sched = ThresholdSchedule::Fixed { deltas: vec![1e-9] };
        let settings = RunSettings::new(10, 1).stopping(StoppingRules {
            budget_factor: 30,
            ..StoppingRules::default()
        });
        match run(&p, &ProposalSpec::new(ProposalKind::Prior), &sched, &settings) {
            Err(AbcError::Stall { iteration: 1, budget: 300, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adaptive_schedule_decreases() {
        let toy = Problem::unscaled(Arc::new(GaussianToy::new(GaussianToyParams::default()).unwrap()));
        let sched = ThresholdSchedule::Adaptive {
            delta1: 2.0,
            psi: 30.0,
            delta_stop: 0.05,
        };
        let out = run(&toy, &ProposalSpec::new(ProposalKind::Olcm), &sched, &RunSettings::new(200, 5)).unwrap();
        assert!(out.reports.windows(2).all(|w| w[1].delta < w[0].delta));
        assert!(matches!(
            out.stop_reason,
            StopReason::ThresholdReached | StopReason::LowAcceptance | StopReason::EmptySubset
        ));
    }
}
