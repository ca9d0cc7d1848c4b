//! Property checks, callable with a case budget so the dedicated suites and
//! the acceptance run share one implementation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::DateTime;
use proptest::prelude::*;
use proptest::sample::{select, subsequence};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use regex::Regex;
use serde_json::Value;

use scproof::config::PipelineConfig;
use scproof::corpus::Variant;
use scproof::detectors::{DefectEvidence, DefectKind, EvidenceSite};
use scproof::ir::{build_ir, compile_to_ast, Param, SourceUnit, SrcLocation};
use scproof::llm::request_count;
use scproof::pipeline::Pipeline;
use scproof::pipeline::StageLimit;
use scproof::process::{locate, spawn_count};
use scproof::report::{exit_code, render_json, Artifact, ArtifactKind, InputRef, ScanReport};
use scproof::runner::{BackendKind, TestOutcome, TestStatus};
use scproof::template::{apply_deterministic, fill_deterministic, FillMode, TemplateRegistry, TestSuiteSpec};
use scproof::verdict::{degrade, Confidence, Finding, Stage, TestRecord, VerdictKind};

use super::{corpus, fixture_evidence, snapshot};

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new(config).run(&strategy, test).map_err(|e| e.to_string())
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Z][A-Za-z0-9_]{0,14}"
}

// ---------------------------------------------------------------- IR

const ID_KEYS: [&str; 10] = [
    "id",
    "referencedDeclaration",
    "scope",
    "linearizedBaseContracts",
    "overloadedDeclarations",
    "contractDependencies",
    "baseFunctions",
    "baseModifiers",
    "usedErrors",
    "usedEvents",
];

fn type_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"_\$(\d+)").unwrap())
}

fn shift_ids(v: &mut Value, by: i64) {
    match v {
        Value::Number(n) => {
            if let Some(id) = n.as_i64().filter(|id| *id >= 0) {
                *v = Value::from(id + by);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| shift_ids(x, by)),
        other => renumber(other, by),
    }
}

/// Adds `by` to every non-negative node id and every reference to one.
/// Negative ids name builtins and stay put.
pub fn renumber(v: &mut Value, by: i64) {
    match v {
        Value::Object(map) => {
            for (key, x) in map.iter_mut() {
                if ID_KEYS.contains(&key.as_str()) {
                    shift_ids(x, by);
                } else if key == "exportedSymbols" {
                    if let Value::Object(symbols) = x {
                        symbols.values_mut().for_each(|ids| shift_ids(ids, by));
                    }
                } else if key == "typeIdentifier" {
                    if let Value::String(s) = x {
                        let shifted = type_id_re()
                            .replace_all(s, |c: &regex::Captures| format!("_${}", c[1].parse::<i64>().unwrap() + by));
                        *s = shifted.into_owned();
                    }
                } else {
                    renumber(x, by);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| renumber(x, by)),
        _ => {}
    }
}

fn ir_json(unit: &SourceUnit) -> Vec<String> {
    build_ir(unit).expect("ir builds").iter().map(|ir| ir.canonical_json()).collect()
}

fn all_snapshots() -> Vec<(String, SourceUnit)> {
    corpus()
        .iter()
        .flat_map(|p| {
            [Variant::Vulnerable, Variant::Safe].map(|v| (format!("{}/{}", p.kind.id(), v.as_str()), snapshot(p, v)))
        })
        .collect()
}

/// Building twice gives the same IR, and so does any consistent
/// renumbering of AST node ids.
pub fn ir_determinism(cases: u32) -> Result<(), String> {
    let units = all_snapshots();
    let n = units.len();
    run(cases, (0..n, 1i64..1_000_000_000), |(i, offset)| {
        let (name, unit) = &units[i];
        let base = ir_json(unit);
        prop_assert_eq!(&base, &ir_json(unit), "{} rebuilt", name);
        let mut moved = unit.clone();
        renumber(&mut moved.ast, offset);
        renumber(&mut moved.compiler_output, offset);
        prop_assert_ne!(&moved.ast, &unit.ast);
        prop_assert_eq!(&base, &ir_json(&moved), "{} renumbered by {}", name, offset);
        Ok(())
    })
}

/// Compiling each fixture fresh yields the same IR as its stored snapshot.
/// `Ok(false)` when no compiler is available.
pub fn snapshot_equivalence(solc: &Path) -> Result<bool, String> {
    if locate(solc).is_none() {
        return Ok(false);
    }
    let pairs = corpus();
    let jobs: Vec<_> = pairs.iter().flat_map(|p| [Variant::Vulnerable, Variant::Safe].map(|v| (p, v))).collect();
    let failures: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(p, v)| {
                s.spawn(move || {
                    let label = format!("{}/{}", p.kind.id(), v.as_str());
                    let fresh = compile_to_ast(&p.source(*v), solc, None).map_err(|e| format!("{label}: {e}"))?;
                    if ir_json(&fresh) == ir_json(&snapshot(p, *v)) {
                        Ok(())
                    } else {
                        Err(format!("{label}: IR differs from snapshot"))
                    }
                })
            })
            .collect();
        handles.into_iter().filter_map(|h| h.join().unwrap().err()).collect()
    });
    if failures.is_empty() {
        Ok(true)
    } else {
        Err(failures.join("; "))
    }
}

// ---------------------------------------------------------------- templates

const PARAM_TYPES: [&str; 9] =
    ["uint256", "uint8", "int256", "address", "address payable", "bool", "string", "bytes32", "uint256[]"];

fn params() -> impl Strategy<Value = Vec<Param>> {
    prop::collection::vec(("[a-z_][a-zA-Z0-9]{0,8}", select(PARAM_TYPES.to_vec())), 0..4)
        .prop_map(|ps| ps.into_iter().map(|(name, ty)| Param { name, type_string: ty.to_string() }).collect())
}

fn anchor_lines(text: &str, anchor: &str) -> usize {
    text.lines().filter(|l| l.trim() == anchor.trim()).count()
}

/// Deterministic filling is a fixed point and leaves every model anchor in
/// place, whatever the contract name and constructor.
pub fn fill_idempotence(cases: u32, templates: &Path) -> Result<(), String> {
    let registry = TemplateRegistry::load(templates).map_err(|e| e.to_string())?;
    let bases: Vec<_> = registry.kinds().map(fixture_evidence).collect();
    let n = bases.len();
    run(cases, (0..n, ident(), params(), any::<bool>()), |(i, name, ctor, payable)| {
        let (ir, ev, _) = &bases[i];
        let mut ir = ir.clone();
        ir.name = name.clone();
        ir.constructor_params = ctor;
        ir.constructor_payable = payable;
        let template = registry.get(ev.kind).unwrap();
        let Ok(spec) = TestSuiteSpec::new(template, &ir, ev.clone()) else {
            prop_assume!(false);
            unreachable!()
        };
        let filled = fill_deterministic(template, &spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&apply_deterministic(template, &spec, &filled), &filled, "{} with {}", ev.kind, name);
        for slot in template.slots.iter().filter(|s| s.fill_mode == FillMode::Llm) {
            let expected = anchor_lines(&template.source_text, &slot.anchor)
                + template.helpers.iter().map(|h| anchor_lines(&h.source, &slot.anchor)).sum::<usize>();
            prop_assert_eq!(anchor_lines(&filled, &slot.anchor), expected, "{} anchor {}", ev.kind, slot.name);
        }
        for slot in template.slots.iter().filter(|s| s.fill_mode == FillMode::Deterministic) {
            prop_assert_eq!(anchor_lines(&filled, &slot.anchor), 0, "{} anchor {}", ev.kind, slot.name);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- reports

const VERDICTS: [VerdictKind; 5] = [
    VerdictKind::ProvenVulnerable,
    VerdictKind::ProvenSafeForScenario,
    VerdictKind::Suspected,
    VerdictKind::Clean,
    VerdictKind::Error,
];
const CONFIDENCES: [Confidence; 4] = [Confidence::None, Confidence::Low, Confidence::Medium, Confidence::High];
const STATUSES: [TestStatus; 3] = [TestStatus::Pass, TestStatus::Fail, TestStatus::Error];

fn evidence_for(kind: DefectKind, contract: String) -> impl Strategy<Value = DefectEvidence> {
    (
        prop::collection::vec(("[a-z][a-zA-Z]{0,8}", 0usize..20, "[a-z-]{1,12}", "\\PC{0,24}", 1u32..500), 1..3),
        prop::collection::btree_map("[a-z_]{1,10}", "[a-z0-9,]{0,10}", 0..3),
    )
        .prop_map(move |(sites, facts)| DefectEvidence {
            kind,
            contract: contract.clone(),
            sites: sites
                .into_iter()
                .map(|(function, statement_index, tag, detail, line)| EvidenceSite {
                    function,
                    statement_index,
                    location: SrcLocation { line, ..SrcLocation::default() },
                    tag,
                    detail,
                })
                .collect(),
            gating_facts: facts,
            detector_version: format!("{}/0", kind.id()),
        })
}

fn test_record() -> impl Strategy<Value = TestRecord> {
    (
        "test_[a-zA-Z]{1,12}",
        "[a-z-]{1,12}",
        select(vec![BackendKind::Forge, BackendKind::Kontrol, BackendKind::Mock]),
        select(STATUSES.to_vec()),
        prop::option::of("\\PC{0,30}"),
    )
        .prop_map(|(method, role, backend, status, detail)| TestRecord { method, role, backend, status, detail })
}

fn finding(file: String, contract: String, kind: DefectKind) -> impl Strategy<Value = Finding> {
    (
        select(VERDICTS.to_vec()),
        select(CONFIDENCES.to_vec()),
        prop::option::of(evidence_for(kind, contract.clone())),
        prop::collection::vec(test_record(), 0..3),
        prop::collection::vec("\\PC{0,40}", 0..3),
        prop::option::of(select(vec![Stage::Generation, Stage::Execution])),
    )
        .prop_map(move |(verdict, confidence, evidence, tests, notes, degraded_stage)| Finding {
            file: file.clone(),
            contract: contract.clone(),
            defect_kind: kind,
            verdict,
            confidence,
            evidence,
            tests,
            notes,
            degraded_stage,
        })
}

fn report() -> impl Strategy<Value = ScanReport> {
    let key = (select(vec!["a.sol", "src/b.sol", "x/ast/c.json"]), ident(), select(DefectKind::ALL.to_vec()));
    let keys = prop::collection::btree_set(key, 0..8);
    let findings =
        keys.prop_flat_map(|keys| keys.into_iter().map(|(f, c, k)| finding(f.to_string(), c, k)).collect::<Vec<_>>());
    let artifact = (ident(), select(DefectKind::ALL.to_vec()), any::<bool>(), "[a-zA-Z/._]{1,30}").prop_map(
        |(contract, defect_kind, raw, path)| Artifact {
            contract,
            defect_kind,
            kind: if raw { ArtifactKind::RawLog } else { ArtifactKind::TestSuite },
            path,
        },
    );
    (0i64..4_000_000_000, 0i64..100_000, "[0-9a-f]{64}", findings, prop::collection::vec(artifact, 0..4)).prop_map(
        |(start, took, digest, findings, artifacts)| {
            let mut r = ScanReport::new(DateTime::from_timestamp(start, 0).unwrap(), digest);
            r.inputs =
                findings.iter().map(|f| InputRef { file: f.file.clone(), contract: f.contract.clone() }).collect();
            r.findings = findings;
            r.artifacts = artifacts;
            r.finish(DateTime::from_timestamp(start + took, 0).unwrap());
            r
        },
    )
}

fn exit_oracle(r: &ScanReport) -> i32 {
    let rank = |v: VerdictKind| match v {
        VerdictKind::Error => 3,
        VerdictKind::ProvenVulnerable => 2,
        VerdictKind::Suspected => 1,
        VerdictKind::ProvenSafeForScenario | VerdictKind::Clean => 0,
    };
    r.findings.iter().map(|f| rank(f.verdict)).max().unwrap_or(0)
}

/// Rendering then parsing is the identity, rendering is byte-deterministic
/// whatever order findings arrived in, and the exit code agrees with a
/// max-severity oracle.
pub fn report_roundtrip(cases: u32) -> Result<(), String> {
    run(cases, (report(), any::<u64>()), |(r, seed)| {
        let bytes = render_json(&r);
        let back = ScanReport::parse(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(&render_json(&back), &bytes);

        let mut shuffled = r.clone();
        let len = shuffled.findings.len().max(1);
        shuffled.findings.rotate_left(seed as usize % len);
        shuffled.findings.reverse();
        shuffled.artifacts.reverse();
        shuffled.sort();
        prop_assert_eq!(render_json(&shuffled), bytes);

        prop_assert_eq!(exit_code(&r), exit_oracle(&r));
        Ok(())
    })
}

// ---------------------------------------------------------------- degrade

/// A later failing stage never yields less confidence than an earlier one,
/// and a degraded finding is never proven nor more than medium.
pub fn degrade_monotonicity(cases: u32) -> Result<(), String> {
    let ev = (select(DefectKind::ALL.to_vec()), ident())
        .prop_flat_map(|(kind, contract)| evidence_for(kind, contract))
        .prop_flat_map(|ev| (Just(ev), prop::option::of(any::<bool>())));
    run(cases, (ev, "\\PC{0,30}"), |((mut ev, custom), reason)| {
        if let Some(custom) = custom {
            ev.gating_facts.insert("has_custom_access_modifiers".into(), custom.to_string());
        }
        let generation = degrade("f.sol", &ev, Stage::Generation, &reason);
        let execution = degrade("f.sol", &ev, Stage::Execution, &reason);
        prop_assert!(generation.confidence <= execution.confidence);
        for f in [&generation, &execution] {
            prop_assert_eq!(f.verdict, VerdictKind::Suspected);
            prop_assert!(f.confidence >= Confidence::Low && f.confidence <= Confidence::Medium);
            prop_assert_eq!(f.evidence.as_ref(), Some(&ev));
            prop_assert!(f.invariant_violations().is_empty(), "{:?}", f.invariant_violations());
            prop_assert!(f.notes.iter().any(|n| n.contains(reason.as_str())));
        }
        if ev.kind == DefectKind::AccessControl && custom == Some(false) {
            prop_assert_eq!(execution.confidence, Confidence::Low);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- offline

/// Offline runs over any subset of the corpus, any enabled kinds and any
/// scripted outcomes start no process and send no request. Relies on global
/// counters, so nothing else may run concurrently in the same binary.
pub fn offline_zero_network(cases: u32) -> Result<(), String> {
    let snapshots: Vec<PathBuf> =
        corpus().iter().flat_map(|p| [Variant::Vulnerable, Variant::Safe].map(|v| p.snapshot(v))).collect();
    let methods: Vec<String> = {
        let root = scproof::config::asset_root().join("templates");
        let registry = TemplateRegistry::load(&root).map_err(|e| e.to_string())?;
        registry.templates().flat_map(|t| t.expected_test_methods.iter().map(|m| m.name.clone())).collect()
    };
    let script = prop::collection::btree_map(select(methods), select(STATUSES.to_vec()), 0..6);
    let strategy = (
        subsequence(snapshots.clone(), 1..=snapshots.len()),
        subsequence(DefectKind::ALL.to_vec(), 1..=DefectKind::ALL.len()),
        script,
    );
    run(cases, strategy, |(inputs, kinds, script)| {
        let dir = tempfile::tempdir().unwrap();
        let config = PipelineConfig {
            offline: true,
            compile_check: false,
            enabled_defects: kinds.iter().copied().collect(),
            workdir: dir.path().to_path_buf(),
            ..PipelineConfig::default()
        }
        .validated()
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let script: BTreeMap<String, TestOutcome> = script.into_iter().map(|(m, s)| (m, TestOutcome::new(s))).collect();
        let (spawned, requested) = (spawn_count(), request_count());
        let mut pipeline = Pipeline::new(config).map_err(|e| TestCaseError::fail(e.to_string()))?;
        pipeline.set_mock_script(script);
        let report = pipeline.scan(&inputs, StageLimit::Run).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(spawn_count(), spawned, "processes started");
        prop_assert_eq!(request_count(), requested, "requests sent");
        prop_assert!(!report.findings.is_empty());
        Ok(())
    })
}
