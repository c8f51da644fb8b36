//! One test per acceptance criterion. Each prints a PASS or FAIL line.

use mocp::selftest::{run_criterion, CriterionOutcome};

fn check(id: u8) {
    let outcome: CriterionOutcome = match run_criterion(id) {
        Ok(o) => o,
        Err(e) => {
            println!("FAIL [{id}] could not run: {e}");
            panic!("criterion {id} errored: {e}");
        }
    };
    println!("{outcome}");
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn criterion_1_beta_coverage_law() {
    check(1);
}

#[test]
fn criterion_2_cdf_score_uniformity() {
    check(2);
}

#[test]
fn criterion_3_max_kernel_equivalences() {
    check(3);
}

#[test]
fn criterion_4_monotone_transform_invariance() {
    check(4);
}

#[test]
fn criterion_5_volume_estimator() {
    check(5);
}

#[test]
fn criterion_6_conditional_coverage_ordering() {
    check(6);
}

#[test]
fn criterion_7_geometry_contracts() {
    check(7);
}

#[test]
fn criterion_8_statistics() {
    check(8);
}

#[test]
fn criterion_9_copula_coverage() {
    check(9);
}
