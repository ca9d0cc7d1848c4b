use std::collections::BTreeMap;

use super::{Completer, LlmError, PromptBundle};
use crate::runner::TestStatus;

const SYSTEM: &str = "You convert test runner output into a fixed line format. \
Reply with one line per test method mentioned in the output, each of the form `<method> <status>` \
where status is pass, fail or error. Use the bare method name without arguments. No other text.";

/// Asks the model to restate an unstructured runner log as `<method> <status>`
/// lines. Methods the log does not mention are absent from the result.
pub fn normalize_runner_output(
    completer: &dyn Completer,
    contract: &str,
    raw_log: &str,
) -> Result<BTreeMap<String, TestStatus>, LlmError> {
    if raw_log.trim().is_empty() {
        return Err(LlmError::UnparseableNormalization("empty runner log".into()));
    }
    let bundle = PromptBundle {
        system: SYSTEM.into(),
        user: format!("Runner output:\n\n{raw_log}"),
        kind: None,
        contract: contract.into(),
    };
    parse_normalized(&completer.complete(&bundle)?)
}

/// Strict parser for the normalization reply. Code fences are tolerated.
pub fn parse_normalized(reply: &str) -> Result<BTreeMap<String, TestStatus>, LlmError> {
    let mut out = BTreeMap::new();
    for line in reply.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("```")) {
        let bad = || LlmError::UnparseableNormalization(line.to_string());
        let mut words = line.split_whitespace();
        let (Some(method), Some(status), None) = (words.next(), words.next(), words.next()) else {
            return Err(bad());
        };
        let method = method.split('(').next().unwrap_or(method);
        let method = method.rsplit([':', '.']).next().unwrap_or(method);
        if method.is_empty() || !method.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$') {
            return Err(bad());
        }
        let status = match status.to_ascii_lowercase().as_str() {
            "pass" => TestStatus::Pass,
            "fail" => TestStatus::Fail,
            "error" => TestStatus::Error,
            _ => return Err(bad()),
        };
        out.insert(method.to_string(), status);
    }
    if out.is_empty() {
        return Err(LlmError::UnparseableNormalization("reply has no outcome lines".into()));
    }
    Ok(out)
}
