//! The scan report: canonical JSON, a text rendering and the exit code.

use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::detectors::DefectKind;
use crate::verdict::{Finding, VerdictKind};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputRef {
    pub file: String,
    pub contract: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    TestSuite,
    RawLog,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Artifact {
    pub contract: String,
    pub defect_kind: DefectKind,
    pub kind: ArtifactKind,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: String,
    pub tool_version: String,
    #[serde(with = "utc_seconds")]
    pub started_at: DateTime<Utc>,
    #[serde(with = "utc_seconds")]
    pub finished_at: DateTime<Utc>,
    pub inputs: Vec<InputRef>,
    pub config_digest: String,
    pub findings: Vec<Finding>,
    pub artifacts: Vec<Artifact>,
}

/// Timestamps at whole-second precision so a parsed report equals the
/// rendered one.
mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s).map(|t| t.with_timezone(&Utc)).map_err(serde::de::Error::custom)
    }
}

fn truncate_secs(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(&t.to_rfc3339_opts(SecondsFormat::Secs, true)).expect("own format").with_timezone(&Utc)
}

impl ScanReport {
    pub fn new(started_at: DateTime<Utc>, config_digest: String) -> ScanReport {
        let t = truncate_secs(started_at);
        ScanReport {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at: t,
            finished_at: t,
            inputs: Vec::new(),
            config_digest,
            findings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn finish(&mut self, at: DateTime<Utc>) {
        self.finished_at = truncate_secs(at);
        self.sort();
    }

    /// Findings by (file, contract, kind order); inputs and artifacts sorted.
    pub fn sort(&mut self) {
        self.findings.sort_by(|a, b| (&a.file, &a.contract, a.defect_kind).cmp(&(&b.file, &b.contract, b.defect_kind)));
        self.inputs.sort();
        self.inputs.dedup();
        self.artifacts.sort();
        self.artifacts.dedup();
    }

    pub fn parse(bytes: &[u8]) -> serde_json::Result<ScanReport> {
        serde_json::from_slice(bytes)
    }

    /// Findings that carry information beyond "clean".
    pub fn non_clean(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.verdict != VerdictKind::Clean)
    }
}

/// Pretty JSON with sorted keys, LF line endings and a trailing newline.
pub fn render_json(report: &ScanReport) -> Vec<u8> {
    // Going through `Value` sorts object keys.
    let value = serde_json::to_value(report).expect("report is always serializable");
    let mut out = serde_json::to_vec_pretty(&value).expect("value is always serializable");
    out.push(b'\n');
    out
}

fn symbol(v: VerdictKind) -> char {
    match v {
        VerdictKind::ProvenVulnerable => '✗',
        VerdictKind::ProvenSafeForScenario => '✓',
        VerdictKind::Suspected => '?',
        VerdictKind::Clean => '·',
        VerdictKind::Error => '!',
    }
}

/// One line per non-clean finding. Verbosity 1 adds evidence sites and 2
/// adds test outcomes and notes.
pub fn render_text(report: &ScanReport, verbosity: u8) -> String {
    let mut out = String::new();
    let shown: Vec<&Finding> = report.non_clean().collect();
    for f in &shown {
        let _ = write!(
            out,
            "{} {} {}: {} ({})",
            symbol(f.verdict),
            f.contract,
            f.defect_kind.name(),
            f.verdict,
            f.confidence
        );
        if let Some(stage) = f.degraded_stage {
            let _ = write!(out, " — {} failed", stage.as_str());
        }
        out.push('\n');
        if verbosity >= 1 {
            if let Some(ev) = &f.evidence {
                for s in &ev.sites {
                    let _ = writeln!(out, "    at {} [{}]: {}", s.function, s.tag, s.detail);
                }
            }
        }
        if verbosity >= 2 {
            for t in &f.tests {
                let _ =
                    write!(out, "    test {} ({}, {}): {}", t.method, t.role, t.backend.as_str(), t.status.as_str());
                if let Some(d) = &t.detail {
                    let _ = write!(out, " [{d}]");
                }
                out.push('\n');
            }
            for n in &f.notes {
                let _ = writeln!(out, "    note: {n}");
            }
        }
    }
    let contracts = report.inputs.len();
    if shown.is_empty() {
        let _ = writeln!(out, "no findings ({contracts} contracts scanned)");
    } else {
        let _ = writeln!(out, "{} findings across {contracts} contracts", shown.len());
    }
    out
}

/// 3 if any error verdict; else 2 if anything is proven vulnerable; else 1
/// if anything is suspected; else 0.
pub fn exit_code(report: &ScanReport) -> i32 {
    let has = |v: VerdictKind| report.findings.iter().any(|f| f.verdict == v);
    if has(VerdictKind::Error) {
        3
    } else if has(VerdictKind::ProvenVulnerable) {
        2
    } else if has(VerdictKind::Suspected) {
        1
    } else {
        0
    }
}
