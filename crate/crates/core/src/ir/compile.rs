use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde_json::{json, Value};

use super::imports::{collect_sources, strip_comments};
use super::{Diagnostic, IrError, SourceUnit};
use crate::process;

const COMPILE_TIMEOUT: Duration = Duration::from_secs(180);

/// The version requirement of the first `pragma solidity` directive.
pub fn pragma_requirement(source: &str) -> Option<String> {
    static PRAGMA: OnceLock<Regex> = OnceLock::new();
    let re = PRAGMA.get_or_init(|| Regex::new(r"\bpragma\s+solidity\s+([^;]+);").expect("valid regex"));
    re.captures(&strip_comments(source)).map(|c| c[1].trim().to_string())
}

/// Whether `version` satisfies a Solidity pragma requirement. A bare version
/// means an exact match, as in the compiler.
pub fn version_satisfies(requirement: &str, version: &semver::Version) -> bool {
    static COMPARATOR: OnceLock<Regex> = OnceLock::new();
    let re = COMPARATOR.get_or_init(|| Regex::new(r"(\^|~|>=|<=|>|<|=)?\s*(\d+(?:\.\d+){0,2})").expect("valid regex"));
    let bare = semver::Version::new(version.major, version.minor, version.patch);
    requirement.split("||").any(|alternative| {
        let alternative = alternative.trim();
        let comparators: Vec<String> = if let Some((lo, hi)) = alternative.split_once(" - ") {
            vec![format!(">={}", lo.trim()), format!("<={}", hi.trim())]
        } else {
            re.captures_iter(alternative)
                .map(|c| format!("{}{}", c.get(1).map_or("=", |m| m.as_str()), &c[2]))
                .collect()
        };
        if comparators.is_empty() {
            return false;
        }
        semver::VersionReq::parse(&comparators.join(", ")).map(|req| req.matches(&bare)).unwrap_or(false)
    })
}

pub(crate) fn diagnostics(output: &Value) -> Vec<Diagnostic> {
    output
        .get("errors")
        .and_then(Value::as_array)
        .map(|errs| {
            errs.iter()
                .map(|e| Diagnostic {
                    severity: e.get("severity").and_then(Value::as_str).unwrap_or("error").to_string(),
                    message: e.get("message").and_then(Value::as_str).unwrap_or_default().to_string(),
                    formatted: e.get("formattedMessage").and_then(Value::as_str).map(str::to_string),
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Parses compiler stdout, skipping any banner lines printed before the JSON.
pub(crate) fn parse_compiler_stdout(stdout: &str) -> Option<Value> {
    let start = stdout.lines().scan(0usize, |offset, line| {
        let here = *offset;
        *offset += line.len() + 1;
        Some((here, line))
    });
    for (offset, line) in start {
        if line.trim_start().starts_with('{') {
            return serde_json::from_str(stdout[offset..].trim()).ok();
        }
    }
    None
}

/// Invokes `solc` on the given standard-JSON input and parses its output.
pub(crate) fn run_standard_json(solc: &Path, input: &Value, cwd: Option<&Path>) -> Result<Value, IrError> {
    let exe = process::locate(solc).ok_or_else(|| IrError::CompilerNotFound(solc.display().to_string()))?;
    let bytes = serde_json::to_vec(input).expect("input serializes");
    let out = process::run_stdout_to_file(&exe, &["--standard-json"], cwd, Some(&bytes), COMPILE_TIMEOUT)
        .map_err(|_| IrError::CompilerNotFound(exe.display().to_string()))?;
    if out.timed_out {
        return Err(IrError::CompileFailed(vec![Diagnostic {
            severity: "error".into(),
            message: "compiler timed out".into(),
            formatted: None,
        }]));
    }
    let stdout = out.stdout_text();
    parse_compiler_stdout(&stdout).ok_or_else(|| {
        let head: String = stdout.chars().take(300).collect();
        IrError::CompileFailed(vec![Diagnostic {
            severity: "error".into(),
            message: format!(
                "compiler produced no JSON output (exit {:?}): {} {}",
                out.status,
                out.stderr_text().trim(),
                head.trim()
            ),
            formatted: None,
        }])
    })
}

pub(crate) fn standard_json_input(
    sources: &std::collections::BTreeMap<String, String>,
    remappings: &[String],
) -> Value {
    let sources: serde_json::Map<String, Value> =
        sources.iter().map(|(name, text)| (name.clone(), json!({ "content": text }))).collect();
    json!({
        "language": "Solidity",
        "sources": sources,
        "settings": {
            "remappings": remappings,
            "outputSelection": { "*": { "": ["ast"] } }
        }
    })
}

fn unit_from_output(
    output: Value,
    source_name: &str,
    path: PathBuf,
    raw_source: String,
) -> Result<SourceUnit, IrError> {
    let ast = output
        .get("sources")
        .ok_or_else(|| IrError::MalformedAst("sources".into()))?
        .get(source_name)
        .ok_or_else(|| IrError::MalformedAst(format!("sources.{source_name}")))?
        .get("ast")
        .ok_or_else(|| IrError::MalformedAst(format!("sources.{source_name}.ast")))?
        .clone();
    match ast.get("nodeType").and_then(Value::as_str) {
        Some("SourceUnit") => {}
        _ => return Err(IrError::MalformedAst(format!("sources.{source_name}.ast.nodeType"))),
    }
    let solidity_version = pragma_requirement(&raw_source).unwrap_or_default();
    let warnings = diagnostics(&output).into_iter().filter(|d| !d.is_error()).collect();
    Ok(SourceUnit {
        path,
        source_name: source_name.to_string(),
        solidity_version,
        ast,
        raw_source,
        compiler_output: output,
        warnings,
    })
}

/// Compiles one Solidity file with `solc --standard-json` and returns its AST.
/// `version_hint`, when given, is checked against the file's pragma first.
pub fn compile_to_ast(source_path: &Path, solc_path: &Path, version_hint: Option<&str>) -> Result<SourceUnit, IrError> {
    let raw_source = std::fs::read_to_string(source_path)
        .map_err(|source| IrError::Io { path: source_path.to_path_buf(), source })?;
    if raw_source.trim().is_empty() {
        return Err(IrError::CompileFailed(vec![Diagnostic {
            severity: "error".into(),
            message: "empty source file: no source unit to compile".into(),
            formatted: None,
        }]));
    }
    let requirement = pragma_requirement(&raw_source);
    if let (Some(hint), Some(req)) = (version_hint, requirement.as_deref()) {
        let hinted = semver::Version::parse(hint.trim_start_matches('v'))
            .map_err(|_| IrError::VersionMismatch { required: req.to_string(), available: hint.to_string() })?;
        if !version_satisfies(req, &hinted) {
            return Err(IrError::VersionMismatch { required: req.to_string(), available: hint.to_string() });
        }
    }

    let root = source_path.parent().unwrap_or_else(|| Path::new("."));
    let source_name =
        source_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "input.sol".to_string());
    let (mut sources, _missing) = collect_sources(root, &source_name, &[]);
    sources.insert(source_name.clone(), raw_source.clone());

    let output = run_standard_json(solc_path, &standard_json_input(&sources, &[]), None)?;
    let diags = diagnostics(&output);
    let errors: Vec<Diagnostic> = diags.iter().filter(|d| d.is_error()).cloned().collect();
    if !errors.is_empty() {
        if let Some(e) = errors.iter().find(|e| e.message.contains("requires different compiler version")) {
            return Err(IrError::VersionMismatch {
                required: requirement.unwrap_or_default(),
                available: e.message.clone(),
            });
        }
        return Err(IrError::CompileFailed(errors));
    }
    unit_from_output(output, &source_name, source_path.to_path_buf(), raw_source)
}

/// Loads a persisted standard-JSON compiler output. The Solidity source named
/// by the AST's `absolutePath` is looked up next to the snapshot and up to two
/// directories above it.
pub fn load_ast_snapshot(json_path: &Path) -> Result<SourceUnit, IrError> {
    let text =
        std::fs::read_to_string(json_path).map_err(|source| IrError::Io { path: json_path.to_path_buf(), source })?;
    let output: Value = serde_json::from_str(&text).map_err(|_| IrError::MalformedAst("<root>".into()))?;
    let sources =
        output.get("sources").and_then(Value::as_object).ok_or_else(|| IrError::MalformedAst("sources".into()))?;

    let stem = json_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let source_name = sources
        .keys()
        .find(|k| Path::new(k.as_str()).file_stem().map(|s| s.to_string_lossy() == stem).unwrap_or(false))
        .or_else(|| (sources.len() == 1).then(|| sources.keys().next()).flatten())
        .cloned()
        .ok_or_else(|| IrError::MalformedAst("sources.<primary unit>".into()))?;

    let ast =
        sources[&source_name].get("ast").ok_or_else(|| IrError::MalformedAst(format!("sources.{source_name}.ast")))?;
    if ast.get("nodeType").and_then(Value::as_str).is_none() {
        return Err(IrError::MalformedAst(format!("sources.{source_name}.ast.nodeType")));
    }
    let absolute = ast.get("absolutePath").and_then(Value::as_str).unwrap_or(&source_name).to_string();

    let base = json_path.parent().unwrap_or_else(|| Path::new("."));
    let candidates = [base.join(&absolute), base.join("..").join(&absolute), base.join("../..").join(&absolute)];
    let path =
        candidates.iter().find(|p| p.is_file()).cloned().ok_or_else(|| IrError::SourceMissing(absolute.clone()))?;
    let raw_source = std::fs::read_to_string(&path).map_err(|source| IrError::Io { path: path.clone(), source })?;
    let path = path.components().collect::<PathBuf>();
    unit_from_output(output, &source_name, path, raw_source)
}
