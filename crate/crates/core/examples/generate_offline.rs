//! Generates the test project for one fixture with canned model replies,
//! then shows which slots came from where.
//!
//! ```text
//! cargo run --example generate_offline -- reentrancy
//! ```

use scproof::config::{asset_root, PipelineConfig};
use scproof::pipeline::Pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = std::env::args().nth(1).unwrap_or_else(|| "reentrancy".into());
    let workdir = std::env::temp_dir().join("scproof-generate-offline");
    let config =
        PipelineConfig { offline: true, compile_check: false, force: true, workdir, ..PipelineConfig::default() }
            .validated()?;
    let pipeline = Pipeline::new(config)?;

    let file =
        pipeline.load(&asset_root().join("fixtures").join(&fixture).join("vulnerable.sol")).map_err(|b| b.reason)?;
    for (ir, evidence) in pipeline.detect(&file).map_err(|b| b.reason)? {
        for ev in &evidence {
            if pipeline.templates().get(ev.kind).is_none() {
                println!("{} {}: detection only", ir.name, ev.kind);
                continue;
            }
            let art = pipeline.generate(&ir, &file.unit.raw_source, ev)?;
            println!("{} {}: {}", ir.name, ev.kind, art.project_dir.display());
            for (slot, origin) in &art.suite.fill_provenance {
                println!("    {slot}: {origin:?}");
            }
            println!("    check: {:?}, ok: {}", art.suite.check, art.suite.compiled_ok);
        }
    }
    Ok(())
}
