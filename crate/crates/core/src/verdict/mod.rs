//! Turning per-test outcomes into findings.
//!
//! Each defect kind with a template has a table mapping role statuses to a
//! verdict. Any `error` status short-circuits to the table's default row.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{DefectEvidence, DefectKind};
use crate::runner::{BackendKind, ExecutionResult, TestStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    ProvenVulnerable,
    ProvenSafeForScenario,
    Suspected,
    Clean,
    Error,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::ProvenVulnerable => "proven_vulnerable",
            VerdictKind::ProvenSafeForScenario => "proven_safe_for_scenario",
            VerdictKind::Suspected => "suspected",
            VerdictKind::Clean => "clean",
            VerdictKind::Error => "error",
        }
    }

    pub fn is_proven(self) -> bool {
        matches!(self, VerdictKind::ProvenVulnerable | VerdictKind::ProvenSafeForScenario)
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    None,
    Low,
    Medium,
    High,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::None => "none",
            Confidence::Low => "low",
            Confidence::Medium => "medium",
            Confidence::High => "high",
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRow {
    /// role → required status; absent roles match anything.
    pub when: BTreeMap<String, TestStatus>,
    pub verdict: VerdictKind,
    pub confidence: Confidence,
    #[serde(default)]
    pub note: String,
}

impl VerdictRow {
    fn matches(&self, statuses: &BTreeMap<String, TestStatus>) -> bool {
        self.when.iter().all(|(role, want)| statuses.get(role) == Some(want))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictTable {
    pub id: String,
    pub defect_kind: DefectKind,
    pub roles: Vec<String>,
    #[serde(rename = "row")]
    pub rows: Vec<VerdictRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum VerdictError {
    #[error("verdict table `{path}`: {reason}")]
    TableInvalid { path: PathBuf, reason: String },
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which row decided an interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Row(usize),
    /// Some status was `error`, or the result did not match the roles.
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    pub verdict: VerdictKind,
    pub confidence: Confidence,
    pub note: String,
    pub row: RowRef,
}

/// Every pass/fail assignment over `n` roles, in lexicographic order.
fn pass_fail_space(roles: &[String]) -> Vec<BTreeMap<String, TestStatus>> {
    let mut all = vec![BTreeMap::new()];
    for role in roles {
        all = all
            .into_iter()
            .flat_map(|m| {
                [TestStatus::Pass, TestStatus::Fail].into_iter().map(move |s| {
                    let mut m = m.clone();
                    m.insert(role.clone(), s);
                    m
                })
            })
            .collect();
    }
    all
}

impl VerdictTable {
    pub fn parse(text: &str, path: &Path) -> Result<Self, VerdictError> {
        let bad = |reason: String| VerdictError::TableInvalid { path: path.to_path_buf(), reason };
        let table: VerdictTable = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        for (i, row) in table.rows.iter().enumerate() {
            if let Some(r) = row.when.keys().find(|r| !table.roles.contains(r)) {
                return Err(bad(format!("row {} names unknown role `{r}`", i + 1)));
            }
            if row.when.values().any(|s| *s == TestStatus::Error) {
                return Err(bad(format!("row {} matches on `error`, which is reserved for the default row", i + 1)));
            }
        }
        // Rows must partition the pass/fail space; error combinations go to
        // the default row.
        for combo in pass_fail_space(&table.roles) {
            let hits = table.rows.iter().filter(|r| r.matches(&combo)).count();
            if hits != 1 {
                return Err(bad(format!("{hits} rows match {combo:?}")));
            }
        }
        Ok(table)
    }

    pub fn default_row(&self) -> (VerdictKind, Confidence) {
        (VerdictKind::Error, Confidence::None)
    }

    /// Row index for a complete role → status map.
    pub fn classify(&self, statuses: &BTreeMap<String, TestStatus>) -> RowRef {
        if self.roles.iter().any(|r| !matches!(statuses.get(r), Some(TestStatus::Pass | TestStatus::Fail))) {
            return RowRef::Default;
        }
        self.rows.iter().position(|r| r.matches(statuses)).map_or(RowRef::Default, RowRef::Row)
    }
}

/// Applies `table` to `result`. `roles` maps method names to role tags.
/// Methods outside `roles`, roles without a reported method, and `error`
/// outcomes all select the default row; the note says which.
pub fn interpret(table: &VerdictTable, result: &ExecutionResult, roles: &BTreeMap<String, String>) -> Interpretation {
    let default = |note: String| {
        let (verdict, confidence) = table.default_row();
        Interpretation { verdict, confidence, note, row: RowRef::Default }
    };
    let unknown: Vec<&String> = result.per_test.keys().filter(|m| !roles.contains_key(*m)).collect();
    if !unknown.is_empty() {
        let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        return default(format!("role mismatch: unexpected methods {}", names.join(", ")));
    }
    let mut statuses = BTreeMap::new();
    let mut problems = Vec::new();
    for (method, role) in roles {
        match result.per_test.get(method) {
            Some(o) => {
                if o.status == TestStatus::Error {
                    problems.push(format!("{method}: {}", o.detail.as_deref().unwrap_or("backend error")));
                }
                statuses.insert(role.clone(), o.status);
            }
            None => problems.push(format!("{method}: not reported")),
        }
    }
    match table.classify(&statuses) {
        RowRef::Row(i) => {
            let row = &table.rows[i];
            Interpretation {
                verdict: row.verdict,
                confidence: row.confidence,
                note: row.note.clone(),
                row: RowRef::Row(i),
            }
        }
        RowRef::Default => default(format!("{} backend error: {}", result.backend.as_str(), problems.join("; "))),
    }
}

/// All tables in a directory, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct VerdictTables {
    tables: BTreeMap<String, VerdictTable>,
}

impl VerdictTables {
    pub fn load(dir: &Path) -> Result<Self, VerdictError> {
        let entries = std::fs::read_dir(dir).map_err(|source| VerdictError::Io { path: dir.to_path_buf(), source })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut tables = BTreeMap::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|source| VerdictError::Io { path: p.clone(), source })?;
            let t = VerdictTable::parse(&text, &p)?;
            tables.insert(t.id.clone(), t);
        }
        Ok(VerdictTables { tables })
    }

    pub fn get(&self, id: &str) -> Option<&VerdictTable> {
        self.tables.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VerdictTable> {
        self.tables.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generation,
    Execution,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generation => "generation",
            Stage::Execution => "execution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub method: String,
    pub role: String,
    pub backend: BackendKind,
    pub status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub file: String,
    pub contract: String,
    pub defect_kind: DefectKind,
    pub verdict: VerdictKind,
    pub confidence: Confidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<DefectEvidence>,
    pub tests: Vec<TestRecord>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_stage: Option<Stage>,
}

impl Finding {
    pub fn clean(file: &str, contract: &str, kind: DefectKind) -> Finding {
        Finding {
            file: file.into(),
            contract: contract.into(),
            defect_kind: kind,
            verdict: VerdictKind::Clean,
            confidence: Confidence::High,
            evidence: None,
            tests: Vec::new(),
            notes: Vec::new(),
            degraded_stage: None,
        }
    }

    /// Violations of the finding invariants, one message each.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.verdict == VerdictKind::Clean && (!self.tests.is_empty() || self.evidence.is_some()) {
            v.push("clean finding carries tests or evidence".into());
        }
        if self.verdict == VerdictKind::Suspected && !matches!(self.confidence, Confidence::Low | Confidence::Medium) {
            v.push("suspected finding outside low/medium".into());
        }
        if self.verdict.is_proven() && self.tests.is_empty() {
            v.push("proven verdict without executed tests".into());
        }
        v
    }
}

/// Suspected finding for evidence whose generation or execution failed.
pub fn degrade(file: &str, evidence: &DefectEvidence, stage: Stage, reason: &str) -> Finding {
    let mut confidence = match stage {
        Stage::Execution => Confidence::Medium,
        Stage::Generation => Confidence::Low,
    };
    if evidence.kind == DefectKind::AccessControl && evidence.fact("has_custom_access_modifiers") == Some("false") {
        confidence = Confidence::Low;
    }
    Finding {
        file: file.into(),
        contract: evidence.contract.clone(),
        defect_kind: evidence.kind,
        verdict: VerdictKind::Suspected,
        confidence,
        evidence: Some(evidence.clone()),
        tests: Vec::new(),
        notes: vec![format!("{} failed: {reason}", stage.as_str())],
        degraded_stage: Some(stage),
    }
}

/// What happened to one piece of evidence after Stage 1.
#[derive(Debug, Clone)]
pub enum StageOutcome {
    /// Detection only was requested.
    NotRun,
    /// No template exists for the kind.
    NoTemplate,
    /// A suite was generated but execution was not requested.
    Generated {
        suite: String,
    },
    GenerationFailed(String),
    ExecutionFailed(String),
    Executed {
        result: ExecutionResult,
        roles: BTreeMap<String, String>,
        table: VerdictTable,
    },
}

fn records(result: &ExecutionResult, roles: &BTreeMap<String, String>) -> Vec<TestRecord> {
    result
        .per_test
        .iter()
        .map(|(method, o)| TestRecord {
            method: method.clone(),
            role: roles.get(method).cloned().unwrap_or_else(|| "unknown".into()),
            backend: result.backend,
            status: o.status,
            detail: o.detail.clone(),
        })
        .collect()
}

fn decide(file: &str, evidence: &DefectEvidence, outcome: &StageOutcome) -> Finding {
    let suspected = |note: &str| Finding {
        verdict: VerdictKind::Suspected,
        confidence: Confidence::Low,
        evidence: Some(evidence.clone()),
        notes: vec![note.to_string()],
        ..Finding::clean(file, &evidence.contract, evidence.kind)
    };
    match outcome {
        StageOutcome::NotRun => suspected("detection only"),
        StageOutcome::Generated { suite } => suspected(&format!("test suite generated at {suite}; not executed")),
        StageOutcome::NoTemplate => suspected("no test template for this defect kind; static evidence only"),
        StageOutcome::GenerationFailed(reason) => degrade(file, evidence, Stage::Generation, reason),
        StageOutcome::ExecutionFailed(reason) => degrade(file, evidence, Stage::Execution, reason),
        StageOutcome::Executed { result, roles, table } => {
            let i = interpret(table, result, roles);
            let tests = records(result, roles);
            let infra_error = i.row == RowRef::Default
                && result.unknown_methods.is_empty()
                && result.per_test.keys().all(|m| roles.contains_key(m));
            if infra_error {
                // A compiled test exists but the backend could not decide it.
                let mut f = degrade(file, evidence, Stage::Execution, &i.note);
                f.tests = tests;
                return f;
            }
            if i.verdict == VerdictKind::Clean {
                let summary: Vec<String> =
                    tests.iter().map(|t| format!("{} {}", t.method, t.status.as_str())).collect();
                let mut f = Finding::clean(file, &evidence.contract, evidence.kind);
                f.confidence = i.confidence;
                f.notes = vec![i.note, format!("tests: {}", summary.join(", "))];
                return f;
            }
            Finding {
                verdict: i.verdict,
                confidence: i.confidence,
                evidence: Some(evidence.clone()),
                tests,
                notes: if i.note.is_empty() { vec![] } else { vec![i.note] },
                ..Finding::clean(file, &evidence.contract, evidence.kind)
            }
        }
    }
}

/// One finding per enabled kind, in [`DefectKind`] order: clean without
/// evidence, otherwise decided from the kind's stage outcome.
pub fn finalize(
    file: &str,
    contract: &str,
    enabled: &std::collections::BTreeSet<DefectKind>,
    evidence: &[DefectEvidence],
    outcomes: &BTreeMap<DefectKind, StageOutcome>,
) -> Vec<Finding> {
    DefectKind::ALL
        .into_iter()
        .filter(|k| enabled.contains(k))
        .map(|kind| match evidence.iter().find(|e| e.kind == kind) {
            None => Finding::clean(file, contract, kind),
            Some(ev) => decide(file, ev, outcomes.get(&kind).unwrap_or(&StageOutcome::NotRun)),
        })
        .collect()
}
