//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod goldens;
pub mod properties;
pub mod reference;

use std::collections::BTreeSet;
use std::path::PathBuf;

use scproof::config::asset_root;
use scproof::corpus::{corpus_manifest, FixturePair, Variant};
use scproof::detectors::{run_detectors, DefectEvidence, DefectKind, DetectorConfig};
use scproof::ir::{build_ir, load_ast_snapshot, ContractIR, SourceUnit};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

pub fn corpus() -> Vec<FixturePair> {
    corpus_manifest(&asset_root().join("fixtures")).expect("fixture corpus loads")
}

pub fn snapshot(pair: &FixturePair, variant: Variant) -> SourceUnit {
    load_ast_snapshot(&pair.snapshot(variant)).expect("snapshot loads")
}

pub fn all_kinds() -> BTreeSet<DefectKind> {
    DefectKind::ALL.into_iter().collect()
}

/// IR and evidence of every contract in a snapshot, all detectors enabled.
pub fn analyze(unit: &SourceUnit) -> Vec<(ContractIR, Vec<DefectEvidence>)> {
    build_ir(unit)
        .expect("ir builds")
        .into_iter()
        .map(|ir| {
            let ev = run_detectors(&ir, &all_kinds(), &DetectorConfig::default());
            (ir, ev)
        })
        .collect()
}

/// The vulnerable fixture's IR and the evidence of `kind` in it.
pub fn fixture_evidence(kind: DefectKind) -> (ContractIR, DefectEvidence, String) {
    let pair = corpus().into_iter().find(|p| p.kind == kind).expect("fixture for kind");
    let unit = snapshot(&pair, Variant::Vulnerable);
    for (ir, evs) in analyze(&unit) {
        if let Some(ev) = evs.into_iter().find(|e| e.kind == kind) {
            return (ir, ev, unit.raw_source.clone());
        }
    }
    panic!("{kind}: vulnerable fixture has no evidence");
}
