mod common;

use common::*;
use guided_abc::output::{read_particles, write_particles};
use guided_abc::{run, ProposalKind, ProposalSpec};

/// Rebuilds the two-moons reference posterior: `cargo test --test fixtures -- --ignored`.
#[test]
#[ignore]
fn regenerate_two_moons_reference() {
    let (schedule, settings) = reference_run();
    let out = run(&two_moons(), &ProposalSpec::new(ProposalKind::Standard), &schedule, &settings).unwrap();
    let last = out.final_system();
    assert_eq!(last.delta, REFERENCE_DELTA);
    write_particles(&fixture_path(), last).unwrap();
}

#[test]
fn reference_fixture_is_well_formed() {
    let table = read_particles(&fixture_path()).unwrap();
    assert_eq!(table.thetas.len(), REFERENCE_N);
    assert!(table.thetas.iter().all(|t| t.len() == 2 && t.iter().all(|v| v.abs() <= 1.0)));
    assert!(table.distances.iter().all(|&d| d < REFERENCE_DELTA));
    assert!((table.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}
