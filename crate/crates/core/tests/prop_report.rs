mod common;

use common::properties;

#[test]
fn report_round_trips_and_renders_deterministically() {
    properties::report_roundtrip(256).unwrap();
}

#[test]
fn degrading_never_raises_confidence() {
    properties::degrade_monotonicity(256).unwrap();
}
