//! Full offline run over the fixture corpus with a mock script, printed as
//! text and written as JSON.
//!
//! ```text
//! cargo run --example scan_report -- crates/core/tests/data/mock/complex_fallback_both_pass.toml
//! ```

use std::path::PathBuf;

use scproof::config::{asset_root, PipelineConfig};
use scproof::pipeline::cmd_run;
use scproof::report::{exit_code, render_json, render_text};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mock_script = std::env::args().nth(1).map(PathBuf::from);
    let workdir = std::env::temp_dir().join("scproof-scan-report");
    let config = PipelineConfig {
        offline: true,
        compile_check: false,
        force: true,
        mock_script,
        workdir: workdir.clone(),
        ..PipelineConfig::default()
    }
    .validated()?;

    let report = cmd_run(&[asset_root().join("fixtures")], config)?;
    print!("{}", render_text(&report, 1));
    let json = workdir.join("report.json");
    std::fs::write(&json, render_json(&report))?;
    println!("json: {}, exit code would be {}", json.display(), exit_code(&report));
    Ok(())
}
