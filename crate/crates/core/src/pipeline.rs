//! Orchestration of detection, test generation and execution.
//!
//! Contracts are independent: each runs its stages sequentially on a worker
//! from a pool capped at `job_cap`, and the report is assembled at the end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::Utc;
use rayon::prelude::*;

use crate::config::{load_mock_script, ConfigError, PipelineConfig};
use crate::detectors::{run_detectors, DefectEvidence, DefectKind, DetectorConfig};
use crate::ir::{build_ir, compile_to_ast, load_ast_snapshot, ContractIR, SourceUnit};
use crate::llm::{completer_for, normalize_runner_output, Completer, LlmMode};
use crate::process;
use crate::report::{Artifact, ArtifactKind, InputRef, ScanReport};
use crate::runner::{
    choose_backend, materialize_project, run_forge, run_kontrol, run_mock, BackendKind, BackendMode, ExecutionResult,
    ProjectFiles, ProjectOptions, RunnerError, TestOutcome,
};
use crate::template::{
    apply_deterministic, build_prompt, build_repair_prompt, extract_code, fill_deterministic, validate_suite,
    GeneratedSuite, Provenance, TemplateError, TemplateRegistry, TestSuiteSpec, TestTemplate,
};
use crate::verdict::{finalize, Confidence, Finding, StageOutcome, VerdictKind, VerdictTables};

/// How far the pipeline goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageLimit {
    Detect,
    GenTests,
    Run,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Verdict(#[from] crate::verdict::VerdictError),
    #[error("input `{0}` does not exist")]
    MissingInput(PathBuf),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// One Solidity file ready for analysis.
#[derive(Debug, Clone)]
pub struct LoadedFile {
    /// Path as reported in findings.
    pub display: String,
    pub unit: SourceUnit,
}

/// A file that could not be turned into IR.
#[derive(Debug, Clone)]
pub struct BrokenFile {
    pub display: String,
    pub reason: String,
}

/// A generated suite plus where it lives.
#[derive(Debug, Clone)]
pub struct SuiteArtifact {
    pub suite: GeneratedSuite,
    pub project_dir: PathBuf,
    pub template: TestTemplate,
}

/// Everything the stages need, loaded once.
pub struct Pipeline {
    pub config: PipelineConfig,
    templates: TemplateRegistry,
    tables: VerdictTables,
    completer: Box<dyn Completer>,
    mock_script: BTreeMap<String, TestOutcome>,
    detector_config: DetectorConfig,
}

const SKIPPED_DIRS: [&str; 6] = ["lib", "node_modules", "out", "cache", "ast", "logs"];

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let completer = completer_for(&config.llm, &config.stub_dir);
        Self::with_completer(config, completer)
    }

    /// Same as [`Pipeline::new`] with a caller-supplied model.
    pub fn with_completer(config: PipelineConfig, completer: Box<dyn Completer>) -> Result<Self, PipelineError> {
        let templates = TemplateRegistry::load(&config.template_dir)?;
        let tables = VerdictTables::load(&config.verdict_dir)?;
        let mock_script = match &config.mock_script {
            Some(p) => load_mock_script(p)?,
            None => BTreeMap::new(),
        };
        Ok(Pipeline { config, templates, tables, completer, mock_script, detector_config: DetectorConfig::default() })
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    /// Replaces the mock backend's script.
    pub fn set_mock_script(&mut self, script: BTreeMap<String, TestOutcome>) {
        self.mock_script = script;
    }

    /// Expands directories into `.sol` files, skipping dependency and build
    /// folders and the pipeline's own workdir.
    pub fn discover(&self, paths: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
        let workdir = self.config.workdir.canonicalize().ok();
        let mut files = Vec::new();
        for p in paths {
            if !p.exists() {
                return Err(PipelineError::MissingInput(p.clone()));
            }
            if p.is_file() {
                files.push(p.clone());
                continue;
            }
            let walker = walkdir::WalkDir::new(p).sort_by_file_name().into_iter().filter_entry(|e| {
                let name = e.file_name().to_string_lossy();
                let skipped = e.depth() > 0
                    && e.file_type().is_dir()
                    && (name.starts_with('.') || SKIPPED_DIRS.contains(&name.as_ref()));
                let is_workdir = workdir.as_ref().is_some_and(|w| e.path().canonicalize().ok().as_ref() == Some(w));
                !skipped && !is_workdir
            });
            for entry in walker.filter_map(Result::ok) {
                if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "sol") {
                    files.push(entry.into_path());
                }
            }
        }
        files.sort();
        files.dedup();
        Ok(files)
    }

    /// A `.sol` file prefers the snapshot at `ast/<stem>.json` beside it and
    /// is compiled otherwise; a `.json` file is read as a snapshot.
    pub fn load(&self, path: &Path) -> Result<LoadedFile, BrokenFile> {
        let display = path.display().to_string();
        let broken = |reason: String| BrokenFile { display: display.clone(), reason };
        let is_json = path.extension().is_some_and(|x| x == "json");
        let snapshot = if is_json {
            Some(path.to_path_buf())
        } else {
            let stem = path.file_stem().unwrap_or_default();
            let candidate = path.parent().unwrap_or(Path::new(".")).join("ast").join(stem).with_extension("json");
            candidate.is_file().then_some(candidate)
        };
        let unit = match snapshot {
            Some(s) => load_ast_snapshot(&s).map_err(|e| broken(e.to_string()))?,
            None => compile_to_ast(path, &self.config.solc_path, None).map_err(|e| broken(e.to_string()))?,
        };
        Ok(LoadedFile { display, unit })
    }

    /// Stage 1 for every contract in a file.
    pub fn detect(&self, file: &LoadedFile) -> Result<Vec<(ContractIR, Vec<DefectEvidence>)>, BrokenFile> {
        let irs =
            build_ir(&file.unit).map_err(|e| BrokenFile { display: file.display.clone(), reason: e.to_string() })?;
        Ok(irs
            .into_iter()
            .map(|ir| {
                let ev = run_detectors(&ir, &self.config.enabled_defects, &self.detector_config);
                (ir, ev)
            })
            .collect())
    }

    fn project_dir(&self, contract: &str, kind: DefectKind) -> PathBuf {
        self.config.workdir.join(contract).join(kind.id())
    }

    fn project_options(&self) -> ProjectOptions {
        ProjectOptions {
            fuzz_runs: self.config.fuzz_runs,
            forge_std: self.config.forge_std.clone(),
            force: self.config.force,
            ..ProjectOptions::default()
        }
    }

    /// Stage 2: fills the template, asks the model for the open slots, writes
    /// the project and checks the suite, with one repair round when the model
    /// was involved. Errors are reasons for a generation-stage degrade.
    pub fn generate(&self, ir: &ContractIR, source: &str, evidence: &DefectEvidence) -> Result<SuiteArtifact, String> {
        let template = self.templates.select_template(evidence).map_err(|e| e.to_string())?.clone();
        let spec = TestSuiteSpec::new(&template, ir, evidence.clone()).map_err(|e| e.to_string())?;
        let filled = fill_deterministic(&template, &spec).map_err(|e| e.to_string())?;
        let mut provenance: BTreeMap<String, Provenance> =
            template.deterministic_slots().map(|s| (s.name.clone(), Provenance::Deterministic)).collect();
        let mut warnings = Vec::new();

        let prompt = build_prompt(&template, &spec, source, &filled);
        let mut code = filled;
        if template.needs_llm() {
            if self.config.llm.mode == LlmMode::Disabled {
                return Err("model disabled and the template has open slots".into());
            }
            let reply = self.completer.complete(&prompt).map_err(|e| e.to_string())?;
            let extracted = extract_code(&reply).map_err(|e| e.to_string())?;
            warnings.extend(extracted.warnings);
            code = apply_deterministic(&template, &spec, &extracted.code);
            let model = self.completer.model_id();
            for s in template.llm_slots() {
                provenance.insert(s.name.clone(), Provenance::Llm { model: model.clone() });
            }
        }

        let dir = self.project_dir(&spec.contract_name, spec.defect_kind);
        let files = ProjectFiles {
            contract_name: &spec.contract_name,
            contract_source: source,
            test_source: &code,
            helpers: &[],
        };
        materialize_project(files, &dir, &self.project_options()).map_err(|e| match e {
            RunnerError::LayoutConflict(p) => format!("{} is not empty; rerun with --force", p.display()),
            other => other.to_string(),
        })?;

        // Suites import forge-std; without a copy to compile against, only
        // the structural checks can say anything.
        let compile = self.config.compile_check && self.config.forge_std.is_some();
        if self.config.compile_check && !compile {
            log::info!("no forge_std configured; structural checks only for {}", spec.test_file_name());
        }
        let solc = compile.then_some(self.config.solc_path.as_path());
        let mut check = validate_suite(&code, &template, &spec, &dir, solc).map_err(|e| e.to_string())?;
        let mut repair_rounds = 0;
        if !check.compiled_ok && template.needs_llm() {
            repair_rounds = 1;
            let repair = build_repair_prompt(&prompt, &code, &check.diagnostics);
            let reply = self.completer.complete(&repair).map_err(|e| format!("repair round: {e}"))?;
            let extracted = extract_code(&reply).map_err(|e| format!("repair round: {e}"))?;
            warnings.extend(extracted.warnings);
            code = apply_deterministic(&template, &spec, &extracted.code);
            check = validate_suite(&code, &template, &spec, &dir, solc).map_err(|e| e.to_string())?;
        }
        if !check.compiled_ok {
            let first: Vec<&str> = check.diagnostics.iter().take(3).map(String::as_str).collect();
            return Err(format!("suite does not check: {}", first.join(" | ")));
        }
        let suite = GeneratedSuite {
            spec,
            test_source: code,
            fill_provenance: provenance,
            compiled_ok: true,
            check: check.check,
            diagnostics: check.diagnostics,
            warnings,
            repair_rounds,
        };
        Ok(SuiteArtifact { suite, project_dir: dir, template })
    }

    fn backend_for(&self, template: &TestTemplate) -> BackendKind {
        let kontrol =
            self.config.backend_mode == BackendMode::Auto && process::locate(&self.config.kontrol_path).is_some();
        choose_backend(self.config.backend_mode, template.backend_preference, kontrol)
    }

    /// Stage 3 for one suite. Unparseable backend output goes through the
    /// model when one is available.
    pub fn execute(&self, artifact: &SuiteArtifact) -> Result<ExecutionResult, String> {
        let expected: Vec<String> = artifact.template.expected_test_methods.iter().map(|m| m.name.clone()).collect();
        let dir = &artifact.project_dir;
        let timeout = Duration::from_secs(self.config.backend_timeout_secs);
        let test_contract = artifact.suite.spec.test_contract_name();
        let outcome = match self.backend_for(&artifact.template) {
            BackendKind::Mock => {
                let script: BTreeMap<String, TestOutcome> = self
                    .mock_script
                    .iter()
                    .filter(|(m, _)| expected.contains(m))
                    .map(|(m, o)| (m.clone(), o.clone()))
                    .collect();
                run_mock(&script, &dir.join("logs")).map(|mut r| {
                    r.reconcile(&expected, "not scripted");
                    r
                })
            }
            BackendKind::Forge => run_forge(&self.config.forge_path, dir, &test_contract, &expected, timeout),
            BackendKind::Kontrol => run_kontrol(&self.config.kontrol_path, dir, &test_contract, &expected, timeout),
        };
        match outcome {
            Ok(r) => Ok(r),
            Err(RunnerError::OutputUnparseable { log_path, exit_status }) => {
                if self.config.llm.mode == LlmMode::Disabled {
                    return Err(format!("backend output unparseable (exit {exit_status}); see {}", log_path.display()));
                }
                let raw = std::fs::read_to_string(&log_path).map_err(|e| e.to_string())?;
                let statuses =
                    normalize_runner_output(self.completer.as_ref(), &artifact.suite.spec.contract_name, &raw)
                        .map_err(|e| format!("backend output unparseable and normalization failed: {e}"))?;
                let mut r = ExecutionResult {
                    backend: self.backend_for(&artifact.template),
                    per_test: statuses
                        .into_iter()
                        .map(|(m, s)| (m, TestOutcome::with_detail(s, "normalized by model")))
                        .collect(),
                    raw_log_path: log_path,
                    wall_time_secs: 0.0,
                    exit_status,
                    unknown_methods: Vec::new(),
                };
                r.reconcile(&expected, "not reported by backend");
                Ok(r)
            }
            Err(e) => Err(e.to_string()),
        }
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.config.workdir).unwrap_or(p).display().to_string()
    }

    /// All stages up to `limit` for one contract.
    pub fn process_contract(
        &self,
        file: &LoadedFile,
        ir: &ContractIR,
        evidence: &[DefectEvidence],
        limit: StageLimit,
    ) -> (Vec<Finding>, Vec<Artifact>) {
        let mut outcomes = BTreeMap::new();
        let mut artifacts = Vec::new();
        for ev in evidence {
            let outcome = if limit == StageLimit::Detect {
                StageOutcome::NotRun
            } else if self.templates.get(ev.kind).is_none() {
                StageOutcome::NoTemplate
            } else {
                match self.generate(ir, &file.unit.raw_source, ev) {
                    Err(reason) => StageOutcome::GenerationFailed(reason),
                    Ok(art) => {
                        let test_path = art.project_dir.join("test").join(art.suite.spec.test_file_name());
                        artifacts.push(Artifact {
                            contract: ir.name.clone(),
                            defect_kind: ev.kind,
                            kind: ArtifactKind::TestSuite,
                            path: self.relative(&test_path),
                        });
                        if limit == StageLimit::GenTests {
                            StageOutcome::Generated { suite: self.relative(&test_path) }
                        } else {
                            match self.execute(&art) {
                                Err(reason) => StageOutcome::ExecutionFailed(reason),
                                Ok(result) => {
                                    artifacts.push(Artifact {
                                        contract: ir.name.clone(),
                                        defect_kind: ev.kind,
                                        kind: ArtifactKind::RawLog,
                                        path: self.relative(&result.raw_log_path),
                                    });
                                    match self.tables.get(&art.template.verdict_table_id) {
                                        Some(table) => StageOutcome::Executed {
                                            result,
                                            roles: art.template.roles(),
                                            table: table.clone(),
                                        },
                                        None => StageOutcome::ExecutionFailed(format!(
                                            "no verdict table `{}`",
                                            art.template.verdict_table_id
                                        )),
                                    }
                                }
                            }
                        }
                    }
                }
            };
            outcomes.insert(ev.kind, outcome);
        }
        (finalize(&file.display, &ir.name, &self.config.enabled_defects, evidence, &outcomes), artifacts)
    }

    fn broken_findings(&self, broken: &BrokenFile) -> Vec<Finding> {
        let contract =
            Path::new(&broken.display).file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        self.config
            .enabled_defects
            .iter()
            .map(|&kind| Finding {
                verdict: VerdictKind::Error,
                confidence: Confidence::None,
                notes: vec![format!("input could not be analyzed: {}", broken.reason)],
                ..Finding::clean(&broken.display, &contract, kind)
            })
            .collect()
    }

    /// Runs every input through the stages up to `limit`.
    pub fn scan(&self, paths: &[PathBuf], limit: StageLimit) -> Result<ScanReport, PipelineError> {
        let started = Utc::now();
        let files = self.discover(paths)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.job_cap)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;

        type PerFile = (Vec<InputRef>, Vec<Finding>, Vec<Artifact>);
        let per_file: Vec<PerFile> = pool.install(|| {
            files
                .par_iter()
                .map(|path| {
                    let loaded = self.load(path).and_then(|f| self.detect(&f).map(|c| (f, c)));
                    match loaded {
                        Err(broken) => {
                            log::error!("{}: {}", broken.display, broken.reason);
                            (Vec::new(), self.broken_findings(&broken), Vec::new())
                        }
                        Ok((file, contracts)) => {
                            let results: Vec<_> = contracts
                                .par_iter()
                                .map(|(ir, ev)| (ir.name.clone(), self.process_contract(&file, ir, ev, limit)))
                                .collect();
                            let mut inputs = Vec::new();
                            let mut findings = Vec::new();
                            let mut artifacts = Vec::new();
                            for (name, (f, a)) in results {
                                inputs.push(InputRef { file: file.display.clone(), contract: name });
                                findings.extend(f);
                                artifacts.extend(a);
                            }
                            (inputs, findings, artifacts)
                        }
                    }
                })
                .collect()
        });

        let mut report = ScanReport::new(started, self.config.digest());
        for (inputs, findings, artifacts) in per_file {
            report.inputs.extend(inputs);
            report.findings.extend(findings);
            report.artifacts.extend(artifacts);
        }
        report.finish(Utc::now());
        Ok(report)
    }
}

/// Stage 1 only: findings are clean or suspected.
pub fn cmd_detect(paths: &[PathBuf], config: PipelineConfig) -> Result<ScanReport, PipelineError> {
    Pipeline::new(config)?.scan(paths, StageLimit::Detect)
}

/// Stages 1 and 2: suites on disk, findings suspected until executed.
pub fn cmd_gen_tests(paths: &[PathBuf], config: PipelineConfig) -> Result<ScanReport, PipelineError> {
    Pipeline::new(config)?.scan(paths, StageLimit::GenTests)
}

/// The full pipeline.
pub fn cmd_run(paths: &[PathBuf], config: PipelineConfig) -> Result<ScanReport, PipelineError> {
    Pipeline::new(config)?.scan(paths, StageLimit::Run)
}
