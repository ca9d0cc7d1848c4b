//! Acceptance run. One line per criterion, then a single assertion so every
//! criterion is reported even when an earlier one fails. Kept to one #[test]
//! because the process and request counters are global.
//!
//! `SCPROOF_BLESS=1` rewrites the golden report instead of comparing.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::Value;

use scproof::config::{asset_root, load_mock_script, PipelineConfig};
use scproof::corpus::Variant;
use scproof::detectors::DefectKind;
use scproof::pipeline::cmd_run;
use scproof::report::{exit_code, render_json};
use scproof::runner::TestStatus;
use scproof::template::{fill_deterministic, structural_check, TemplateRegistry, TestSuiteSpec};
use scproof::verdict::{Confidence, RowRef, VerdictKind, VerdictTable, VerdictTables};

use common::{analyze, corpus, data, fixture_evidence, goldens, properties, reference, snapshot};

type Outcome = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

// Stage-1 fidelity on the corpus snapshots.
fn criterion_1() -> Outcome {
    let started = Instant::now();
    let pairs = corpus();
    let mut vulnerable = BTreeMap::new();
    for pair in &pairs {
        for (ir, evs) in analyze(&snapshot(pair, Variant::Safe)) {
            ensure(evs.is_empty(), || format!("safe {}: {} fired on {}", pair.kind, evs[0].kind, ir.name))?;
        }
        for (_, evs) in analyze(&snapshot(pair, Variant::Vulnerable)) {
            for ev in evs {
                vulnerable.insert(ev.kind, ev);
            }
        }
    }

    let re = vulnerable.get(&DefectKind::Reentrancy).ok_or("Reentrancy did not fire")?;
    let sites: Vec<_> = re.sites.iter().map(|s| (s.function.as_str(), s.statement_index, s.tag.as_str())).collect();
    ensure(re.contract == "ReentrancySimple", || format!("reentrancy contract {}", re.contract))?;
    ensure(sites == [("withdraw", 1, "external-call"), ("withdraw", 2, "state-write-after-call")], || {
        format!("reentrancy sites {sites:?}")
    })?;
    ensure(re.fact("all_calls_gas_capped") == Some("true"), || format!("reentrancy facts {:?}", re.gating_facts))?;

    let cf = vulnerable.get(&DefectKind::ComplexFallback).ok_or("ComplexFallback did not fire")?;
    let s = &cf.sites[0];
    ensure(
        cf.sites.len() == 1
            && s.function == "receive"
            && s.statement_index == 0
            && s.detail == "writes _latestDonor inside receive",
        || format!("complex fallback sites {:?}", cf.sites),
    )?;

    let ac = vulnerable.get(&DefectKind::AccessControl).ok_or("AccessControl did not fire")?;
    let s = &ac.sites[0];
    ensure(
        ac.contract == "UnprotectedSelfdestruct"
            && ac.sites.len() == 1
            && s.function == "cancelContract"
            && s.statement_index == 0
            && s.tag == "unguarded-critical-op",
        || format!("access control {} {:?}", ac.contract, ac.sites),
    )?;

    let took = within(started, Duration::from_secs(5))?;
    Ok(format!("{} fixture pairs, safe twins silent, {took:.2?}", pairs.len()))
}

fn statuses(pairs: &[(&str, TestStatus)]) -> BTreeMap<String, TestStatus> {
    pairs.iter().map(|(r, s)| (r.to_string(), *s)).collect()
}

fn verdict_of(table: &VerdictTable, st: &BTreeMap<String, TestStatus>) -> Option<VerdictKind> {
    match table.classify(st) {
        RowRef::Row(i) => Some(table.rows[i].verdict),
        RowRef::Default => None,
    }
}

// Verdict tables: exhaustive enumeration against a direct row-matching oracle.
fn criterion_2() -> Outcome {
    let started = Instant::now();
    let tables = VerdictTables::load(&asset_root().join("verdicts")).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for table in tables.iter() {
        let n = table.roles.len();
        for code in 0..3usize.pow(n as u32) {
            let st: BTreeMap<String, TestStatus> = (0..n)
                .map(|i| {
                    let s = [TestStatus::Pass, TestStatus::Fail, TestStatus::Error][code / 3usize.pow(i as u32) % 3];
                    (table.roles[i].clone(), s)
                })
                .collect();
            let matching: Vec<usize> = (0..table.rows.len())
                .filter(|&i| table.rows[i].when.iter().all(|(role, want)| st.get(role) == Some(want)))
                .collect();
            let expect = if st.values().any(|s| *s == TestStatus::Error) {
                RowRef::Default
            } else {
                ensure(matching.len() == 1, || format!("{}: {st:?} matches rows {matching:?}", table.id))?;
                RowRef::Row(matching[0])
            };
            let got = table.classify(&st);
            ensure(got == expect, || format!("{}: {st:?} classified {got:?}, want {expect:?}", table.id))?;
            checked += 1;
        }
        ensure(table.default_row() == (VerdictKind::Error, Confidence::None), || format!("{} default row", table.id))?;
    }

    use TestStatus::{Fail, Pass};
    let known = [
        (
            "reentrancy",
            statuses(&[("happy-path", Pass), ("exploit-attempt", Pass)]),
            VerdictKind::ProvenSafeForScenario,
        ),
        ("reentrancy", statuses(&[("happy-path", Pass), ("exploit-attempt", Fail)]), VerdictKind::ProvenVulnerable),
        (
            "complex_fallback",
            statuses(&[("works-with-full-gas", Pass), ("reverts-at-2300", Pass)]),
            VerdictKind::ProvenVulnerable,
        ),
        ("access_control", statuses(&[("unauthorized-call-reverts", Fail)]), VerdictKind::ProvenVulnerable),
    ];
    for (id, st, want) in &known {
        let table = tables.get(id).ok_or_else(|| format!("no table {id}"))?;
        let got = verdict_of(table, st);
        ensure(got == Some(*want), || format!("{id} {st:?}: {got:?}, want {want}"))?;
    }
    let took = within(started, Duration::from_secs(1))?;
    Ok(format!(
        "{checked} assignments over {} tables, {} reference rows, {took:.2?}",
        tables.iter().count(),
        known.len()
    ))
}

const MASKED: [&str; 3] = ["started_at", "finished_at", "config_digest"];

fn masked(bytes: &[u8]) -> Result<String, String> {
    let mut v: Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    for key in MASKED {
        v[key] = Value::String("<masked>".into());
    }
    Ok(serde_json::to_string_pretty(&v).unwrap() + "\n")
}

// End-to-end offline replay against the golden report.
fn criterion_3() -> Outcome {
    let started = Instant::now();
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = data("mock/complex_fallback_both_pass.toml");
    let config = PipelineConfig {
        offline: true,
        compile_check: false,
        mock_script: Some(script.clone()),
        workdir: work.path().to_path_buf(),
        ..PipelineConfig::default()
    }
    .validated()
    .map_err(|e| e.to_string())?;
    load_mock_script(&script).map_err(|e| e.to_string())?;
    let digest = config.digest();

    // Relative to the package directory so the golden does not embed a checkout path.
    let input = PathBuf::from("../../fixtures/complex_fallback/ast/vulnerable.json");
    let report = cmd_run(&[input], config).map_err(|e| e.to_string())?;
    let took = within(started, Duration::from_secs(5))?;

    let non_clean: Vec<_> = report.non_clean().collect();
    ensure(non_clean.len() == 1, || format!("{} non-clean findings", non_clean.len()))?;
    let f = non_clean[0];
    ensure(
        f.defect_kind == DefectKind::ComplexFallback
            && f.verdict == VerdictKind::ProvenVulnerable
            && f.confidence == Confidence::High,
        || format!("finding {} {} {}", f.defect_kind, f.verdict, f.confidence),
    )?;
    let code = exit_code(&report);
    ensure(code == 2, || format!("exit code {code}"))?;
    ensure(report.config_digest == digest, || "config digest differs from the configuration".into())?;

    let got = masked(&render_json(&report))?;
    let golden = data("golden/complex_fallback_report.json");
    if std::env::var_os("SCPROOF_BLESS").is_some() {
        std::fs::write(&golden, &got).map_err(|e| e.to_string())?;
    }
    let want = std::fs::read_to_string(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
    ensure(got == want, || format!("report differs from {}:\n{got}", golden.display()))?;
    Ok(format!("one proven_vulnerable/high finding, exit 2, golden match, {took:.2?}"))
}

// Deterministic fill of ComplexFallback compared with the reference proof.
fn criterion_4() -> Outcome {
    let started = Instant::now();
    let registry = TemplateRegistry::load(&asset_root().join("templates")).map_err(|e| e.to_string())?;
    let template = registry.get(DefectKind::ComplexFallback).ok_or("no ComplexFallback template")?;
    ensure(!template.needs_llm(), || "ComplexFallback template has model slots".into())?;
    let (ir, ev, _) = fixture_evidence(DefectKind::ComplexFallback);
    let spec = TestSuiteSpec::new(template, &ir, ev).map_err(|e| e.to_string())?;
    let filled = fill_deterministic(template, &spec).map_err(|e| e.to_string())?;

    let problems = structural_check(&filled, template, &spec);
    ensure(problems.is_empty(), || format!("structural check: {problems:?}"))?;

    let reference_src =
        std::fs::read_to_string(data("reference/ComplexFallbackTest.sol")).map_err(|e| e.to_string())?;
    let (ours, theirs) = (reference::method_names(&filled), reference::method_names(&reference_src));
    ensure(ours == theirs, || format!("methods {ours:?} vs {theirs:?}"))?;
    let bad = reference::disallowed_changes(&filled, &reference_src);
    ensure(bad.is_empty(), || format!("diff outside identifiers and messages: {bad:?}"))?;

    let took = within(started, Duration::from_secs(1))?;
    let changed = reference::changed_tokens(&filled, &reference_src);
    Ok(format!("methods identical, {changed} changed tokens all identifiers/messages, {took:.2?}"))
}

// Parser goldens.
fn criterion_5() -> Outcome {
    let mut summary = Vec::new();
    for (label, (n, bad)) in [
        ("forge", goldens::check_forge()),
        ("kontrol", goldens::check_kontrol()),
        ("normalization", goldens::check_normalization()),
    ] {
        ensure(n > 0, || format!("no {label} goldens"))?;
        ensure(bad.is_empty(), || bad.join("; "))?;
        summary.push(format!("{n} {label}"));
    }
    Ok(summary.join(", "))
}

// Property suites, at a smaller case budget than the dedicated test files.
fn criterion_6() -> Outcome {
    let templates = asset_root().join("templates");
    properties::ir_determinism(16).map_err(|e| format!("ir determinism: {e}"))?;
    let compiled = properties::snapshot_equivalence(Path::new("solc")).map_err(|e| format!("snapshots: {e}"))?;
    properties::fill_idempotence(64, &templates).map_err(|e| format!("fill: {e}"))?;
    properties::report_roundtrip(64).map_err(|e| format!("report: {e}"))?;
    properties::degrade_monotonicity(64).map_err(|e| format!("degrade: {e}"))?;
    properties::offline_zero_network(6).map_err(|e| format!("offline: {e}"))?;
    let snap = if compiled { "snapshot equivalence checked" } else { "snapshot equivalence skipped (no solc)" };
    Ok(format!("all suites hold; {snap}"))
}

// Straight to the stdout handle: the test harness captures `println!` of
// passing tests, and these lines should always show.
fn report(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 6] = [
        (1, "detection fidelity", criterion_1),
        (2, "verdict tables", criterion_2),
        (3, "end-to-end replay", criterion_3),
        (4, "deterministic fill", criterion_4),
        (5, "parser goldens", criterion_5),
        (6, "property suites", criterion_6),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(msg) => report(format!("criterion {n} ({name}): PASS  {msg}")),
            Err(msg) => {
                report(format!("criterion {n} ({name}): FAIL  {msg}"));
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
