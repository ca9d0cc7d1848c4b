use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde_json::Value;

use super::{persist_log, BackendKind, ExecutionResult, RunnerError, TestOutcome, TestStatus};
use crate::process;

fn bare_name(key: &str) -> &str {
    key.split('(').next().unwrap_or(key)
}

/// Maps each test entry of a `forge test --json` report to an outcome.
/// Names shared by several suites are prefixed with `<Suite>.`.
pub fn parse_forge_json(raw: &str) -> Result<BTreeMap<String, TestOutcome>, RunnerError> {
    let v: Value = serde_json::from_str(raw.trim()).map_err(|e| RunnerError::JsonMalformed(e.to_string()))?;
    let suites = v.as_object().ok_or_else(|| RunnerError::JsonMalformed("top level is not an object".into()))?;

    let mut entries: Vec<(String, String, TestOutcome)> = Vec::new();
    for (suite_key, suite) in suites {
        let suite_name = suite_key.rsplit(':').next().unwrap_or(suite_key).to_string();
        let results = suite
            .get("test_results")
            .and_then(Value::as_object)
            .ok_or_else(|| RunnerError::JsonMalformed(format!("{suite_key}.test_results")))?;
        for (test_key, entry) in results {
            let status = entry
                .get("status")
                .and_then(Value::as_str)
                .ok_or_else(|| RunnerError::JsonMalformed(format!("{suite_key}.test_results.{test_key}.status")))?;
            let reason = entry.get("reason").and_then(Value::as_str).filter(|r| !r.is_empty());
            let outcome = match status {
                "Success" => TestOutcome::new(TestStatus::Pass),
                "Failure" => {
                    let counterexample = entry.get("counterexample").filter(|c| !c.is_null()).map(|c| c.to_string());
                    match (reason, counterexample) {
                        (Some(r), _) => TestOutcome::with_detail(TestStatus::Fail, r),
                        (None, Some(c)) => TestOutcome::with_detail(TestStatus::Fail, format!("counterexample: {c}")),
                        (None, None) => TestOutcome::new(TestStatus::Fail),
                    }
                }
                other => TestOutcome::with_detail(TestStatus::Error, other),
            };
            entries.push((suite_name.clone(), bare_name(test_key).to_string(), outcome));
        }
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, name, _) in &entries {
        *counts.entry(name.as_str()).or_default() += 1;
    }
    let shared: Vec<String> = counts.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k.to_string()).collect();
    Ok(entries
        .into_iter()
        .map(|(suite, name, o)| if shared.contains(&name) { (format!("{suite}.{name}"), o) } else { (name, o) })
        .collect())
}

/// The JSON report, which forge prints after any compiler chatter.
fn report_json(stdout: &str) -> Option<&str> {
    let trimmed = stdout.trim();
    if trimmed.starts_with('{') && serde_json::from_str::<Value>(trimmed).is_ok() {
        return Some(trimmed);
    }
    let mut offset = 0;
    for line in stdout.split_inclusive('\n') {
        if line.trim_start().starts_with('{') {
            let rest = stdout[offset..].trim();
            if serde_json::from_str::<Value>(rest).is_ok() {
                return Some(rest);
            }
        }
        offset += line.len();
    }
    None
}

fn compile_failure(log: &str) -> Option<String> {
    if !log.contains("Compiler run failed") && !log.contains("Error (") && !log.contains("Error: ") {
        return None;
    }
    let lines: Vec<&str> = log.lines().filter(|l| l.contains("Error")).take(3).collect();
    Some(format!("compile failure: {}", lines.join(" | ")))
}

/// `forge test --json --match-contract <name>` inside `project_dir`.
pub fn run_forge(
    forge: &Path,
    project_dir: &Path,
    match_contract: &str,
    expected: &[String],
    timeout: Duration,
) -> Result<ExecutionResult, RunnerError> {
    let exe = process::locate(forge).ok_or_else(|| RunnerError::BackendNotFound(forge.display().to_string()))?;
    let out =
        process::run(&exe, &["test", "--json", "--match-contract", match_contract], Some(project_dir), None, timeout)
            .map_err(|_| RunnerError::BackendNotFound(exe.display().to_string()))?;
    let raw_log_path = persist_log(project_dir, "forge.log", &out.combined())?;
    let exit_status = out.status.unwrap_or(-1);
    let mut result = ExecutionResult {
        backend: BackendKind::Forge,
        per_test: BTreeMap::new(),
        raw_log_path: raw_log_path.clone(),
        wall_time_secs: out.elapsed.as_secs_f64(),
        exit_status,
        unknown_methods: Vec::new(),
    };
    if out.timed_out {
        result.reconcile(expected, "timeout");
        return Ok(result);
    }
    let stdout = out.stdout_text();
    match report_json(&stdout) {
        Some(json) => result.per_test = parse_forge_json(json)?,
        None => {
            let log = String::from_utf8_lossy(&out.combined()).into_owned();
            match compile_failure(&log) {
                Some(detail) => {
                    result.reconcile(expected, &detail);
                    return Ok(result);
                }
                None => return Err(RunnerError::OutputUnparseable { log_path: raw_log_path, exit_status }),
            }
        }
    }
    result.reconcile(expected, "not reported by backend");
    Ok(result)
}
