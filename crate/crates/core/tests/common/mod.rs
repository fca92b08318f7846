#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use guided_abc::copulas::CopulaKind;
use guided_abc::distributions::MarginalKind;
use guided_abc::engine::StoppingRules;
use guided_abc::models::{TwoMoons, TwoMoonsParams};
use guided_abc::{Problem, ProposalKind, ProposalSpec, RunSettings, ThresholdSchedule};

pub const MOONS_DELTAS: [f64; 9] = [4.0, 3.0, 2.0, 1.0, 0.5, 0.4, 0.3, 0.2, 0.1];
pub const REFERENCE_DELTA: f64 = 0.06;
pub const REFERENCE_N: usize = 2000;
pub const REFERENCE_SEED: u64 = 12345;

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_moons_reference.csv")
}

pub fn two_moons() -> Problem {
    Problem::unscaled(Arc::new(TwoMoons::new(TwoMoonsParams::default()).unwrap()))
}

/// Long standard SMC-ABC run down to the reference tolerance.
pub fn reference_run() -> (ThresholdSchedule, RunSettings) {
    let mut deltas = MOONS_DELTAS.to_vec();
    deltas.push(REFERENCE_DELTA);
    let settings = RunSettings::new(REFERENCE_N, REFERENCE_SEED).stopping(StoppingRules {
        acceptance_floor: None,
        ..StoppingRules::default()
    });
    (ThresholdSchedule::Fixed { deltas }, settings)
}

/// Proposal spec for `kind` on a `d`-parameter model; copula kinds use a
/// Gaussian copula with the given marginal family, and the blocked SMC kernel
/// takes the first two parameters as its block.
pub fn spec_for(kind: ProposalKind, marginal: MarginalKind) -> ProposalSpec {
    if kind.is_copula() {
        ProposalSpec::copula(kind, CopulaKind::Gaussian, marginal)
    } else if kind == ProposalKind::Fullcondoptblocked {
        ProposalSpec::fullcondoptblocked(vec![0, 1])
    } else {
        ProposalSpec::new(kind)
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
