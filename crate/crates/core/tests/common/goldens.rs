//! Hand-labeled runner outputs and the maps they must parse to.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use scproof::config::parse_mock_script;
use scproof::llm::{normalize_runner_output, LlmError, PromptBundle};
use scproof::runner::{parse_forge_json, parse_kontrol_log, TestOutcome, TestStatus};

use super::data;

/// `(stem path, raw text)` for every file in `dir` with extension `ext`.
fn cases(dir: &Path, ext: &str) -> Vec<(PathBuf, String)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .map(|p| (p.with_extension(""), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn expected(stem: &Path) -> BTreeMap<String, TestOutcome> {
    let path = stem.with_extension("expected.toml");
    parse_mock_script(&std::fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn statuses(m: &BTreeMap<String, TestOutcome>) -> BTreeMap<String, TestStatus> {
    m.iter().map(|(k, o)| (k.clone(), o.status)).collect()
}

fn name(stem: &Path) -> String {
    stem.file_name().unwrap().to_string_lossy().into_owned()
}

/// Mismatches between parsed and labeled outcomes; the count of cases checked.
pub fn check_forge() -> (usize, Vec<String>) {
    let all = cases(&data("golden/forge"), "json");
    let mut bad = Vec::new();
    for (stem, raw) in &all {
        match parse_forge_json(raw) {
            Ok(got) if got == expected(stem) => {}
            Ok(got) => bad.push(format!("forge/{}: got {got:?}", name(stem))),
            Err(e) => bad.push(format!("forge/{}: {e}", name(stem))),
        }
    }
    (all.len(), bad)
}

pub fn check_kontrol() -> (usize, Vec<String>) {
    let all = cases(&data("golden/kontrol"), "log");
    let mut bad = Vec::new();
    for (stem, raw) in &all {
        let got = parse_kontrol_log(raw);
        if got != expected(stem) {
            bad.push(format!("kontrol/{}: got {got:?}", name(stem)));
        }
    }
    (all.len(), bad)
}

/// The model's normalization of each kontrol log, with the reply stubbed,
/// must name the same methods with the same statuses as the regex parser.
pub fn check_normalization() -> (usize, Vec<String>) {
    let all = cases(&data("golden/kontrol"), "log");
    let mut bad = Vec::new();
    for (stem, raw) in &all {
        let reply = std::fs::read_to_string(stem.with_extension("llm.txt")).unwrap();
        let stub = move |_: &PromptBundle| -> Result<String, LlmError> { Ok(reply.clone()) };
        match normalize_runner_output(&stub, "Golden", raw) {
            Ok(got) if got == statuses(&parse_kontrol_log(raw)) => {}
            Ok(got) => bad.push(format!("normalize/{}: got {got:?}", name(stem))),
            Err(e) => bad.push(format!("normalize/{}: {e}", name(stem))),
        }
    }
    (all.len(), bad)
}
