//! Stage 3: materialize a Foundry project, run a backend, collect per-test
//! outcomes.

mod forge;
mod kontrol;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::template::BackendPreference;

pub use forge::{parse_forge_json, run_forge};
pub use kontrol::{parse_kontrol_log, run_kontrol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Forge,
    Kontrol,
    Mock,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Forge => "forge",
            BackendKind::Kontrol => "kontrol",
            BackendKind::Mock => "mock",
        }
    }
}

/// Backend choice as configured; `Auto` picks per defect kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Auto,
    Forge,
    Kontrol,
    Mock,
}

impl FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(BackendMode::Auto),
            "forge" => Ok(BackendMode::Forge),
            "kontrol" => Ok(BackendMode::Kontrol),
            "mock" => Ok(BackendMode::Mock),
            other => Err(format!("unknown backend `{other}` (auto, forge, kontrol, mock)")),
        }
    }
}

/// Resolves `mode` for one template. Under `Auto` a kontrol preference falls
/// back to forge when kontrol is not installed.
pub fn choose_backend(mode: BackendMode, preference: BackendPreference, kontrol_available: bool) -> BackendKind {
    match mode {
        BackendMode::Forge => BackendKind::Forge,
        BackendMode::Kontrol => BackendKind::Kontrol,
        BackendMode::Mock => BackendKind::Mock,
        BackendMode::Auto => match preference {
            BackendPreference::Kontrol if kontrol_available => BackendKind::Kontrol,
            _ => BackendKind::Forge,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    /// Infrastructure trouble only: compile failure, timeout, missing report.
    Error,
}

impl TestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TestStatus::Pass => "pass",
            TestStatus::Fail => "fail",
            TestStatus::Error => "error",
        }
    }
}

impl FromStr for TestStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pass" => Ok(TestStatus::Pass),
            "fail" => Ok(TestStatus::Fail),
            "error" => Ok(TestStatus::Error),
            other => Err(format!("unknown test status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TestOutcome {
    pub fn new(status: TestStatus) -> Self {
        TestOutcome { status, detail: None }
    }

    pub fn with_detail(status: TestStatus, detail: impl Into<String>) -> Self {
        TestOutcome { status, detail: Some(detail.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub backend: BackendKind,
    pub per_test: BTreeMap<String, TestOutcome>,
    pub raw_log_path: PathBuf,
    pub wall_time_secs: f64,
    /// `-1` when the process was killed.
    pub exit_status: i32,
    /// Reported methods the suite does not expect.
    pub unknown_methods: Vec<String>,
}

impl ExecutionResult {
    /// Marks unexpected methods and fills unobserved expected ones with
    /// `error` outcomes carrying `missing_detail`. A reported `setUp` is a
    /// fixture, not a test: it is dropped, and when it did not pass every
    /// expected method becomes an error.
    pub fn reconcile(&mut self, expected: &[String], missing_detail: &str) {
        if !expected.iter().any(|m| m == "setUp") {
            if let Some(setup) = self.per_test.remove("setUp").filter(|o| o.status != TestStatus::Pass) {
                let detail = format!("setUp {}", setup.status.as_str());
                for m in expected {
                    self.per_test.insert(m.clone(), TestOutcome::with_detail(TestStatus::Error, detail.clone()));
                }
            }
        }
        self.unknown_methods = self.per_test.keys().filter(|k| !expected.contains(k)).cloned().collect();
        for m in expected {
            self.per_test
                .entry(m.clone())
                .or_insert_with(|| TestOutcome::with_detail(TestStatus::Error, missing_detail));
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("backend executable `{0}` not found")]
    BackendNotFound(String),
    #[error("workdir `{0}` is not empty (use --force to overwrite)")]
    LayoutConflict(PathBuf),
    #[error("refusing to materialize an empty test suite")]
    EmptySuite,
    #[error("backend report is not valid JSON: {0}")]
    JsonMalformed(String),
    #[error("backend output could not be parsed; raw log at `{}`", log_path.display())]
    OutputUnparseable { log_path: PathBuf, exit_status: i32 },
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), RunnerError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectOptions {
    pub solc_version: String,
    pub fuzz_runs: u32,
    /// forge-std checkout linked as lib/forge-std.
    pub forge_std: Option<PathBuf>,
    pub force: bool,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions { solc_version: "0.8.29".into(), fuzz_runs: 256, forge_std: None, force: false }
    }
}

pub fn foundry_toml(opts: &ProjectOptions) -> String {
    format!(
        "[profile.default]\nsrc = \"src\"\ntest = \"test\"\nout = \"out\"\nlibs = [\"lib\"]\nsolc_version = \"{}\"\n\n[fuzz]\nruns = {}\n",
        opts.solc_version, opts.fuzz_runs
    )
}

/// What goes into one project directory.
#[derive(Debug, Clone, Copy)]
pub struct ProjectFiles<'a> {
    pub contract_name: &'a str,
    pub contract_source: &'a str,
    pub test_source: &'a str,
    /// `(file name, source)` pairs written beside the test file.
    pub helpers: &'a [(String, String)],
}

/// Writes a Foundry layout into `workdir`: src/<Contract>.sol,
/// test/<Contract>Test.sol, helpers beside the test, foundry.toml and
/// lib/forge-std when a checkout is configured.
pub fn materialize_project(
    files: ProjectFiles<'_>,
    workdir: &Path,
    opts: &ProjectOptions,
) -> Result<PathBuf, RunnerError> {
    if files.test_source.trim().is_empty() {
        return Err(RunnerError::EmptySuite);
    }
    if workdir.is_dir() && !opts.force {
        let occupied = std::fs::read_dir(workdir).map_err(io_err(workdir))?.next().is_some();
        if occupied {
            return Err(RunnerError::LayoutConflict(workdir.to_path_buf()));
        }
    }
    let name = files.contract_name;
    write(&workdir.join("src").join(format!("{name}.sol")), files.contract_source)?;
    write(&workdir.join("test").join(format!("{name}Test.sol")), files.test_source)?;
    for (file, source) in files.helpers {
        write(&workdir.join("test").join(file), source)?;
    }
    write(&workdir.join("foundry.toml"), foundry_toml(opts))?;
    if let Some(std_dir) = &opts.forge_std {
        let link = workdir.join("lib").join("forge-std");
        if !link.exists() {
            std::fs::create_dir_all(workdir.join("lib")).map_err(io_err(workdir))?;
            link_dir(std_dir, &link)?;
        }
    } else {
        log::info!("no forge-std checkout configured; {} has no lib/forge-std", workdir.display());
    }
    Ok(workdir.to_path_buf())
}

#[cfg(unix)]
fn link_dir(target: &Path, link: &Path) -> Result<(), RunnerError> {
    let target = target.canonicalize().map_err(io_err(target))?;
    std::os::unix::fs::symlink(target, link).map_err(io_err(link))
}

#[cfg(not(unix))]
fn link_dir(target: &Path, link: &Path) -> Result<(), RunnerError> {
    for entry in walkdir::WalkDir::new(target) {
        let entry = entry.map_err(|e| RunnerError::Io { path: target.to_path_buf(), source: e.into() })?;
        let rel = entry.path().strip_prefix(target).expect("walk stays under root");
        if entry.file_type().is_file() {
            let dest = link.join(rel);
            write(&dest, std::fs::read(entry.path()).map_err(io_err(entry.path()))?)?;
        }
    }
    Ok(())
}

/// Echoes `script` as an execution result and writes a synthesized log.
pub fn run_mock(script: &BTreeMap<String, TestOutcome>, log_dir: &Path) -> Result<ExecutionResult, RunnerError> {
    let log: String = script
        .iter()
        .map(|(name, o)| match &o.detail {
            Some(d) => format!("mock {name} {} {d}\n", o.status.as_str()),
            None => format!("mock {name} {}\n", o.status.as_str()),
        })
        .collect();
    let raw_log_path = log_dir.join("mock.log");
    write(&raw_log_path, log)?;
    Ok(ExecutionResult {
        backend: BackendKind::Mock,
        per_test: script.clone(),
        raw_log_path,
        wall_time_secs: 0.0,
        exit_status: 0,
        unknown_methods: Vec::new(),
    })
}

/// Persists backend output byte for byte and returns the log path.
pub(crate) fn persist_log(project_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, RunnerError> {
    let path = project_dir.join("logs").join(name);
    write(&path, bytes)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let script: BTreeMap<_, _> = [("a".to_string(), TestOutcome::new(TestStatus::Pass))].into();
        let r = run_mock(&script, dir.path()).unwrap();
        assert_eq!(r.per_test, script);
        assert_eq!(r.backend, BackendKind::Mock);
        assert_eq!(std::fs::read_to_string(&r.raw_log_path).unwrap(), "mock a pass\n");

        let empty = run_mock(&BTreeMap::new(), dir.path()).unwrap();
        assert!(empty.per_test.is_empty());
    }

    #[test]
    fn materialize_layout() {
        let dir = tempfile::tempdir().unwrap();
        let std_dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(std_dir.path().join("src")).unwrap();
        std::fs::write(std_dir.path().join("src/Test.sol"), "// stub").unwrap();
        let work = dir.path().join("p");
        let helpers = vec![("Attacker.sol".to_string(), "contract Attacker {}".to_string())];
        let files = ProjectFiles {
            contract_name: "C",
            contract_source: "contract C {}",
            test_source: "contract CTest {}",
            helpers: &helpers,
        };
        let opts = ProjectOptions { forge_std: Some(std_dir.path().to_path_buf()), ..Default::default() };
        materialize_project(files, &work, &opts).unwrap();
        for f in ["src/C.sol", "test/CTest.sol", "test/Attacker.sol", "foundry.toml", "lib/forge-std/src/Test.sol"] {
            assert!(work.join(f).is_file(), "{f}");
        }
        let toml_text = std::fs::read_to_string(work.join("foundry.toml")).unwrap();
        let cfg: toml::Value = toml::from_str(&toml_text).unwrap();
        assert_eq!(cfg["profile"]["default"]["solc_version"].as_str(), Some("0.8.29"));
        assert_eq!(cfg["fuzz"]["runs"].as_integer(), Some(256));

        assert!(matches!(materialize_project(files, &work, &opts), Err(RunnerError::LayoutConflict(_))));
        let forced = ProjectOptions { force: true, ..opts.clone() };
        materialize_project(files, &work, &forced).unwrap();

        let empty = ProjectFiles { test_source: "  ", ..files };
        assert!(matches!(materialize_project(empty, &dir.path().join("q"), &opts), Err(RunnerError::EmptySuite)));
    }

    #[test]
    fn backend_choice() {
        use BackendPreference::*;
        assert_eq!(choose_backend(BackendMode::Auto, Forge, true), BackendKind::Forge);
        assert_eq!(choose_backend(BackendMode::Auto, Kontrol, true), BackendKind::Kontrol);
        assert_eq!(choose_backend(BackendMode::Auto, Kontrol, false), BackendKind::Forge);
        assert_eq!(choose_backend(BackendMode::Mock, Kontrol, true), BackendKind::Mock);
        assert_eq!(choose_backend(BackendMode::Kontrol, Forge, false), BackendKind::Kontrol);
    }

    #[test]
    fn reconcile_flags_unknown_and_fills_missing() {
        let mut r = ExecutionResult {
            backend: BackendKind::Forge,
            per_test: [("x".to_string(), TestOutcome::new(TestStatus::Pass))].into(),
            raw_log_path: PathBuf::new(),
            wall_time_secs: 0.0,
            exit_status: 0,
            unknown_methods: vec![],
        };
        r.reconcile(&["a".to_string()], "timeout");
        assert_eq!(r.unknown_methods, ["x"]);
        assert_eq!(r.per_test["a"], TestOutcome::with_detail(TestStatus::Error, "timeout"));
    }

    #[test]
    fn reconcile_folds_set_up() {
        let result = |setup: TestStatus| ExecutionResult {
            backend: BackendKind::Kontrol,
            per_test: [
                ("setUp".to_string(), TestOutcome::new(setup)),
                ("t".to_string(), TestOutcome::with_detail(TestStatus::Fail, "counterexample found")),
            ]
            .into(),
            raw_log_path: PathBuf::new(),
            wall_time_secs: 0.0,
            exit_status: 0,
            unknown_methods: vec![],
        };
        let mut ok = result(TestStatus::Pass);
        ok.reconcile(&["t".to_string()], "missing");
        assert!(ok.unknown_methods.is_empty());
        assert_eq!(ok.per_test.len(), 1);
        assert_eq!(ok.per_test["t"].status, TestStatus::Fail);

        let mut broken = result(TestStatus::Fail);
        broken.reconcile(&["t".to_string()], "missing");
        assert_eq!(broken.per_test["t"], TestOutcome::with_detail(TestStatus::Error, "setUp fail"));
    }
}
