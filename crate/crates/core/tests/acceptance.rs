//! Acceptance gate: one test per shipped guarantee, each driving the
//! corresponding self-check and printing a single PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines on success as well as on failure.

use amt_core::selftest::{self, CheckOutcome};

const SEED: u64 = 42;

fn report(outcome: &CheckOutcome) {
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!(
        "{status} {} ({:.2}s): {}",
        outcome.name, outcome.duration_secs, outcome.details
    );
    assert!(outcome.passed, "{} failed: {}", outcome.name, outcome.details);
}

#[test]
fn analytic_loss_gradients_match_finite_differences() {
    let outcome = selftest::loss_gradients(SEED);
    report(&outcome);
    assert!(
        outcome.duration_secs < 10.0,
        "gradient suite took {:.2}s, budget is 10s",
        outcome.duration_secs
    );
}

#[test]
fn loss_identities_hold_exactly() {
    report(&selftest::loss_identities(SEED));
}

#[test]
fn decoder_recovers_quantized_scores() {
    report(&selftest::decoder_round_trip(SEED));
}

#[test]
fn peak_suppression_matches_cell_rule() {
    report(&selftest::nms_properties(SEED));
}

#[test]
fn note_matching_equals_exhaustive_maximum() {
    let outcome = selftest::eval_matching_oracle(SEED);
    report(&outcome);
    assert!(
        outcome.duration_secs < 30.0,
        "matching oracle took {:.2}s, budget is 30s",
        outcome.duration_secs
    );
}

#[test]
fn alignment_rates_reproduce_constructed_piece() {
    report(&selftest::alignment_rates(SEED));
}

#[test]
fn spectrogram_frontend_behaves_as_documented() {
    report(&selftest::frontend_spectrogram(SEED));
}

#[test]
fn network_forward_pass_verified_against_oracles() {
    report(&selftest::network_forward(SEED));
}

#[test]
fn sustain_pedal_resolution_rules_hold() {
    report(&selftest::sustain_resolution(SEED));
}

#[test]
fn dataset_statistics_and_split_validation_agree() {
    report(&selftest::dataset_stats(SEED));
}

#[test]
fn augmentation_scales_pitch_and_time_correctly() {
    report(&selftest::augmentation(SEED));
}

#[test]
fn transcription_is_deterministic_across_runs_and_threads() {
    report(&selftest::end_to_end_determinism(SEED));
}
