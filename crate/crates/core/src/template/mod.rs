//! Stage 2: per-defect Solidity test templates.
//!
//! A template is Solidity text whose instruction comments double as anchors.
//! Deterministic slots are resolved here without a model; llm slots stay in
//! place, anchors intact, for the prompt.

mod fill;
mod prompt;
mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{DefectEvidence, DefectKind};

pub use fill::{apply_deterministic, fill_deterministic, ConstructorArg, TestSuiteSpec, PLACEHOLDER, TEST_PLACEHOLDER};
pub use prompt::{build_prompt, build_repair_prompt, extract_code, ExtractedCode};
pub use validate::{strip_comments, structural_check, validate_suite, CheckMode, SuiteCheck};

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("no test template registered for {0}")]
    NoTemplateForKind(DefectKind),
    #[error("template `{template}`: anchor of slot `{slot}` not found")]
    AnchorMissing { template: String, slot: String },
    #[error("template `{template}`: expected test method `{method}` not found")]
    MethodMissing { template: String, method: String },
    #[error("template `{template}`: no substitution rule for deterministic slot `{slot}`")]
    UnknownRule { template: String, slot: String },
    #[error("`{0}` is not a usable contract name")]
    InvalidContractName(String),
    #[error("manifest `{path}`: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("model reply is empty")]
    EmptyReply,
    #[error("solidity compiler not found at `{0}`")]
    CompilerNotFound(String),
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    Deterministic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    #[serde(rename = "mode")]
    pub fill_mode: FillMode,
    /// Verbatim instruction comment, matched against whole trimmed lines.
    pub anchor: String,
    pub description: String,
    /// Identifier the model must replace; checked after generation.
    #[serde(default)]
    pub placeholder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedMethod {
    pub name: String,
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendPreference {
    Forge,
    Kontrol,
    Either,
}

#[derive(Debug, Clone)]
pub struct HelperFile {
    pub file_name: String,
    pub source: String,
}

#[derive(Debug, Clone)]
pub struct TestTemplate {
    pub defect_kind: DefectKind,
    pub template_id: String,
    pub source_text: String,
    pub helpers: Vec<HelperFile>,
    pub slots: Vec<SlotSpec>,
    pub expected_test_methods: Vec<ExpectedMethod>,
    pub backend_preference: BackendPreference,
    pub verdict_table_id: String,
    /// Designed here rather than taken from a reference proof.
    pub extension: bool,
}

impl TestTemplate {
    pub fn llm_slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.slots.iter().filter(|s| s.fill_mode == FillMode::Llm)
    }

    pub fn deterministic_slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.slots.iter().filter(|s| s.fill_mode == FillMode::Deterministic)
    }

    pub fn needs_llm(&self) -> bool {
        self.llm_slots().next().is_some()
    }

    /// method name → role tag.
    pub fn roles(&self) -> BTreeMap<String, String> {
        self.expected_test_methods.iter().map(|m| (m.name.clone(), m.role.clone())).collect()
    }

    /// Template text plus helper texts, as searched by the invariants.
    fn all_text(&self) -> String {
        let mut all = self.source_text.clone();
        for h in &self.helpers {
            all.push('\n');
            all.push_str(&h.source);
        }
        all
    }

    /// Checks the manifest against the template text.
    pub fn check(&self) -> Result<(), TemplateError> {
        let text = self.all_text();
        for slot in &self.slots {
            if !text.lines().any(|l| l.trim() == slot.anchor.trim()) {
                return Err(TemplateError::AnchorMissing {
                    template: self.template_id.clone(),
                    slot: slot.name.clone(),
                });
            }
            if slot.fill_mode == FillMode::Deterministic && !fill::has_rule(&slot.name) {
                return Err(TemplateError::UnknownRule { template: self.template_id.clone(), slot: slot.name.clone() });
            }
        }
        for m in &self.expected_test_methods {
            if !text.contains(&m.name) {
                return Err(TemplateError::MethodMissing {
                    template: self.template_id.clone(),
                    method: m.name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    template_id: String,
    defect_kind: String,
    backend_preference: BackendPreference,
    verdict_table_id: String,
    #[serde(default)]
    extension: bool,
    #[serde(default)]
    helpers: Vec<String>,
    #[serde(default, rename = "slot")]
    slots: Vec<SlotSpec>,
    #[serde(default, rename = "method")]
    methods: Vec<ExpectedMethod>,
}

fn read(path: &Path) -> Result<String, TemplateError> {
    std::fs::read_to_string(path).map_err(|source| TemplateError::Io { path: path.to_path_buf(), source })
}

/// Loads `<dir>/manifest.toml`, `<dir>/template.sol` and the listed helpers.
pub fn load_template(dir: &Path) -> Result<TestTemplate, TemplateError> {
    let manifest_path = dir.join("manifest.toml");
    let bad = |reason: String| TemplateError::Manifest { path: manifest_path.clone(), reason };
    let manifest: Manifest = toml::from_str(&read(&manifest_path)?).map_err(|e| bad(e.to_string()))?;
    let defect_kind = manifest.defect_kind.parse::<DefectKind>().map_err(bad)?;
    if manifest.methods.is_empty() {
        return Err(bad("no [[method]] entries".into()));
    }
    let helpers = manifest
        .helpers
        .iter()
        .map(|name| Ok(HelperFile { file_name: name.clone(), source: read(&dir.join(name))? }))
        .collect::<Result<Vec<_>, TemplateError>>()?;
    let template = TestTemplate {
        defect_kind,
        template_id: manifest.template_id,
        source_text: read(&dir.join("template.sol"))?,
        helpers,
        slots: manifest.slots,
        expected_test_methods: manifest.methods,
        backend_preference: manifest.backend_preference,
        verdict_table_id: manifest.verdict_table_id,
        extension: manifest.extension,
    };
    template.check()?;
    Ok(template)
}

/// All templates under a directory, one per defect kind.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<DefectKind, TestTemplate>,
}

impl TemplateRegistry {
    /// Every subdirectory holding a `manifest.toml` is loaded.
    pub fn load(dir: &Path) -> Result<Self, TemplateError> {
        let entries = std::fs::read_dir(dir).map_err(|source| TemplateError::Io { path: dir.to_path_buf(), source })?;
        let mut dirs: Vec<PathBuf> =
            entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.join("manifest.toml").is_file()).collect();
        dirs.sort();
        let mut templates = BTreeMap::new();
        for d in dirs {
            let t = load_template(&d)?;
            if templates.contains_key(&t.defect_kind) {
                return Err(TemplateError::Manifest {
                    path: d.join("manifest.toml"),
                    reason: format!("second template for {}", t.defect_kind),
                });
            }
            templates.insert(t.defect_kind, t);
        }
        Ok(TemplateRegistry { templates })
    }

    pub fn get(&self, kind: DefectKind) -> Option<&TestTemplate> {
        self.templates.get(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = DefectKind> + '_ {
        self.templates.keys().copied()
    }

    pub fn templates(&self) -> impl Iterator<Item = &TestTemplate> {
        self.templates.values()
    }

    pub fn select_template(&self, evidence: &DefectEvidence) -> Result<&TestTemplate, TemplateError> {
        self.get(evidence.kind).ok_or(TemplateError::NoTemplateForKind(evidence.kind))
    }
}

/// Where a slot's content came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Deterministic,
    Llm { model: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSuite {
    pub spec: TestSuiteSpec,
    pub test_source: String,
    pub fill_provenance: BTreeMap<String, Provenance>,
    pub compiled_ok: bool,
    pub check: CheckMode,
    pub diagnostics: Vec<String>,
    pub warnings: Vec<String>,
    pub repair_rounds: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::repo_root;

    pub(crate) fn registry() -> TemplateRegistry {
        TemplateRegistry::load(&repo_root().join("templates")).unwrap()
    }

    #[test]
    fn registry_has_five_templates() {
        let r = registry();
        assert_eq!(
            r.kinds().collect::<Vec<_>>(),
            vec![
                DefectKind::Reentrancy,
                DefectKind::ComplexFallback,
                DefectKind::AccessControl,
                DefectKind::InsufficientParamValidation,
                DefectKind::DivisionByZero
            ]
        );
        for t in r.templates() {
            assert_eq!(t.extension, t.source_text.contains("Extension template"), "{}", t.template_id);
        }
    }

    #[test]
    fn complex_fallback_template_shape() {
        let r = registry();
        let t = r.get(DefectKind::ComplexFallback).unwrap();
        let names: Vec<&str> = t.expected_test_methods.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["test_proveTransferWorks", "test_proveTransferDoesNotWorkWithLimitedGas"]);
        assert_eq!(t.backend_preference, BackendPreference::Forge);
        assert!(!t.needs_llm());
    }

    #[test]
    fn reentrancy_template_has_attacker_helper() {
        let r = registry();
        let t = r.get(DefectKind::Reentrancy).unwrap();
        let names: Vec<&str> = t.expected_test_methods.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["test_proofWithdrawUsuallyWorks", "test_proofReentrancyExploit"]);
        assert_eq!(t.helpers.len(), 1);
        assert!(t.helpers[0].source.contains("contract Attacker"));
        assert!(t.source_text.contains("ETH_UPPER_BOUND = 2 ** 45"));
    }

    #[test]
    fn stage_one_only_kinds_have_no_template() {
        let r = registry();
        for kind in [DefectKind::BlockEnvDependency, DefectKind::FaultyAssertRevert] {
            let ev = DefectEvidence {
                kind,
                contract: "C".into(),
                sites: vec![],
                gating_facts: Default::default(),
                detector_version: String::new(),
            };
            assert!(matches!(r.select_template(&ev), Err(TemplateError::NoTemplateForKind(k)) if k == kind));
        }
    }

    #[test]
    fn corrupt_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let src = repo_root().join("templates/complex_fallback");
        std::fs::copy(src.join("template.sol"), dir.path().join("template.sol")).unwrap();
        let manifest = std::fs::read_to_string(src.join("manifest.toml")).unwrap();

        std::fs::write(dir.path().join("manifest.toml"), manifest.replace("use the correct parameters\"", "x\""))
            .unwrap();
        assert!(matches!(load_template(dir.path()), Err(TemplateError::AnchorMissing { .. })));

        std::fs::write(
            dir.path().join("manifest.toml"),
            manifest.replace("name = \"setup_params\"", "name = \"mystery\""),
        )
        .unwrap();
        assert!(matches!(load_template(dir.path()), Err(TemplateError::UnknownRule { .. })));

        std::fs::write(dir.path().join("manifest.toml"), manifest.replace("test_proveTransferWorks", "test_other"))
            .unwrap();
        assert!(matches!(load_template(dir.path()), Err(TemplateError::MethodMissing { .. })));
    }
}
