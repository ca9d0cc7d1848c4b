use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::fill::{PLACEHOLDER, TEST_PLACEHOLDER};
use super::{TemplateError, TestSuiteSpec, TestTemplate};
use crate::ir::{self, IrError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Compiled with solc inside the materialized project.
    Compile,
    /// Structural checks only; no compiler was run.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteCheck {
    pub compiled_ok: bool,
    pub check: CheckMode,
    pub diagnostics: Vec<String>,
}

/// Blanks out comments, keeping string literals and line structure.
pub fn strip_comments(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'"' || c == b'\'' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] != c && bytes[i] != b'\n' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            out.push_str(&src[start..i]);
        } else if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if src[i..].starts_with("/*") {
            let end = src[i + 2..].find("*/").map_or(bytes.len(), |e| i + 2 + e + 2);
            out.extend(src[i..end].chars().filter(|&ch| ch == '\n'));
            i = end;
        } else {
            let ch = src[i..].chars().next().expect("in bounds");
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

fn test_base_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"contract\s+[A-Za-z_$][A-Za-z0-9_$]*\s+is\s+[^{]*\bTest\b").expect("valid regex"))
}

/// Problems that make a generated suite unusable, checked without a compiler.
pub fn structural_check(source: &str, template: &TestTemplate, spec: &TestSuiteSpec) -> Vec<String> {
    let mut problems = Vec::new();
    let code = strip_comments(source);
    if code.trim().is_empty() {
        problems.push("test source is empty".to_string());
        return problems;
    }
    if !code.contains("pragma solidity") {
        problems.push("missing `pragma solidity`".into());
    }
    let mut depth = [0i64; 2];
    let mut stripped_strings = code.clone();
    for q in ['"', '\''] {
        let re = Regex::new(&format!(r#"{q}(?:[^{q}\\\n]|\\.)*{q}"#)).expect("valid regex");
        stripped_strings = re.replace_all(&stripped_strings, "\"\"").into_owned();
    }
    for ch in stripped_strings.chars() {
        match ch {
            '{' => depth[0] += 1,
            '}' => depth[0] -= 1,
            '(' => depth[1] += 1,
            ')' => depth[1] -= 1,
            _ => {}
        }
        if depth.iter().any(|d| *d < 0) {
            break;
        }
    }
    if depth != [0, 0] {
        problems.push("unbalanced braces or parentheses".into());
    }
    if !test_base_re().is_match(&code) {
        problems.push("no contract inheriting from Test".into());
    }
    for m in &template.expected_test_methods {
        let re = Regex::new(&format!(r"function\s+{}\s*\(", regex::escape(&m.name))).expect("valid regex");
        if !re.is_match(&code) {
            problems.push(format!("expected test method `{}` is missing", m.name));
        }
    }
    let token = |t: &str| Regex::new(&format!(r"\b{}\b", regex::escape(t))).expect("valid regex").is_match(&code);
    if !token(&spec.contract_name) {
        problems.push(format!("contract under test `{}` is never referenced", spec.contract_name));
    }
    let mut leftovers: Vec<&str> = template.llm_slots().filter_map(|s| s.placeholder.as_deref()).collect();
    if spec.contract_name != PLACEHOLDER {
        leftovers.push(PLACEHOLDER);
        leftovers.push(TEST_PLACEHOLDER);
    }
    for p in leftovers {
        if token(p) {
            problems.push(format!("placeholder `{p}` was not replaced"));
        }
    }
    if code.contains("UNRESOLVED_ARG_") {
        problems.push("constructor arguments left unresolved".into());
    }
    problems
}

/// Writes `source` as the project's test file and checks it. With a
/// compiler it is compiled against the project's sources; without one only
/// the structural checks run.
pub fn validate_suite(
    source: &str,
    template: &TestTemplate,
    spec: &TestSuiteSpec,
    project_dir: &Path,
    solc: Option<&Path>,
) -> Result<SuiteCheck, TemplateError> {
    let mut diagnostics = structural_check(source, template, spec);
    let test_rel = format!("test/{}", spec.test_file_name());
    let test_path = project_dir.join(&test_rel);
    if let Some(parent) = test_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| TemplateError::Io { path: parent.to_path_buf(), source: e })?;
    }
    std::fs::write(&test_path, source).map_err(|e| TemplateError::Io { path: test_path.clone(), source: e })?;

    let Some(solc) = solc else {
        return Ok(SuiteCheck { compiled_ok: diagnostics.is_empty(), check: CheckMode::Structural, diagnostics });
    };
    let (sources, missing) = ir::collect_sources(project_dir, &test_rel, &[]);
    for m in &missing {
        log::debug!("unresolved import {m}");
    }
    let input = ir::standard_json_input(&sources, &[]);
    let output = match ir::run_standard_json(solc, &input, Some(project_dir)) {
        Ok(o) => o,
        Err(IrError::CompilerNotFound(p)) => return Err(TemplateError::CompilerNotFound(p)),
        Err(e) => {
            diagnostics.push(e.to_string());
            return Ok(SuiteCheck { compiled_ok: false, check: CheckMode::Compile, diagnostics });
        }
    };
    let errors: Vec<String> = ir::diagnostics(&output)
        .into_iter()
        .filter(|d| d.is_error())
        .map(|d| d.formatted.unwrap_or(d.message))
        .collect();
    let compiled = errors.is_empty();
    diagnostics.extend(errors);
    Ok(SuiteCheck { compiled_ok: compiled && diagnostics.is_empty(), check: CheckMode::Compile, diagnostics })
}
