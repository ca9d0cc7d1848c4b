use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scproof::config::{load_config, Overrides};
use scproof::pipeline::{Pipeline, StageLimit};
use scproof::report::{exit_code, render_json, render_text};

/// Prerequisite-gated defect detection for Solidity, backed by generated
/// proof tests.
#[derive(Parser)]
#[command(name = "scproof", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline; same as `run`.
    Scan(Opts),
    /// Static detection only.
    Detect(Opts),
    /// Detection and test generation, without execution.
    GenTests(Opts),
    /// Detection, generation, execution and verdicts.
    Run(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct Opts {
    /// Solidity files, AST snapshots or directories.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Comma-separated defect kinds to enable.
    #[arg(long)]
    defects: Option<String>,
    /// auto, forge, kontrol or mock.
    #[arg(long)]
    backend: Option<String>,
    /// No network; model replies come from stubs.
    #[arg(long)]
    offline: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Overwrite existing generated projects.
    #[arg(long)]
    force: bool,
    /// Structural checks instead of compiling generated suites.
    #[arg(long)]
    no_compile_check: bool,
    /// Outcomes for the mock backend, as TOML.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Any configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Opts {
    fn overrides(&self) -> Result<Overrides, String> {
        let mut o = Overrides::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            o.insert(k.trim().to_string(), v.to_string());
        }
        let path = |p: &PathBuf| p.display().to_string();
        if let Some(d) = &self.defects {
            o.insert("enabled_defects".into(), d.clone());
        }
        if let Some(b) = &self.backend {
            o.insert("backend_mode".into(), b.clone());
        }
        if self.offline {
            o.insert("offline".into(), "true".into());
        }
        if let Some(w) = &self.workdir {
            o.insert("workdir".into(), path(w));
        }
        if self.force {
            o.insert("force".into(), "true".into());
        }
        if self.no_compile_check {
            o.insert("compile_check".into(), "false".into());
        }
        if let Some(m) = &self.mock_script {
            o.insert("mock_script".into(), path(m));
        }
        Ok(o)
    }
}

fn run(opts: Opts, limit: StageLimit) -> Result<i32, String> {
    let level = match opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let config = load_config(opts.config.as_deref(), &opts.overrides()?, &|k| std::env::var(k).ok())
        .map_err(|e| e.to_string())?;
    if opts.verbose >= 1 {
        eprintln!("# effective configuration\n{}", config.effective_toml());
    }
    let pipeline = Pipeline::new(config).map_err(|e| e.to_string())?;
    let report = pipeline.scan(&opts.paths, limit).map_err(|e| e.to_string())?;

    let rendered = match opts.format {
        Format::Json => render_json(&report),
        Format::Text => render_text(&report, opts.verbose).into_bytes(),
    };
    match &opts.out {
        Some(path) => std::fs::write(path, &rendered).map_err(|e| format!("{}: {e}", path.display()))?,
        None => std::io::stdout().write_all(&rendered).map_err(|e| e.to_string())?,
    }
    Ok(exit_code(&report))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage_error { 3 } else { 0 });
        }
    };
    let (opts, limit) = match cli.command {
        Command::Scan(o) | Command::Run(o) => (o, StageLimit::Run),
        Command::Detect(o) => (o, StageLimit::Detect),
        Command::GenTests(o) => (o, StageLimit::GenTests),
    };
    match run(opts, limit) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
