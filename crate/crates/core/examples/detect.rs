//! Runs the static detectors over a file, snapshot or the whole fixture
//! corpus and prints each piece of evidence with its gating facts.
//!
//! ```text
//! cargo run --example detect
//! cargo run --example detect -- fixtures/access_control/vulnerable.sol
//! ```

use std::path::PathBuf;

use scproof::config::{asset_root, PipelineConfig};
use scproof::pipeline::Pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| asset_root().join("fixtures"));
    let pipeline = Pipeline::new(PipelineConfig::default())?;

    for path in pipeline.discover(&[target])? {
        let file = match pipeline.load(&path) {
            Ok(f) => f,
            Err(broken) => {
                eprintln!("{}: {}", broken.display, broken.reason);
                continue;
            }
        };
        for (ir, evidence) in pipeline.detect(&file).map_err(|b| b.reason)? {
            if evidence.is_empty() {
                println!("{} {}: nothing", file.display, ir.name);
            }
            for ev in evidence {
                println!("{} {}: {}", file.display, ir.name, ev.kind);
                for s in &ev.sites {
                    println!(
                        "    {}#{} [{}] {} (line {})",
                        s.function, s.statement_index, s.tag, s.detail, s.location.line
                    );
                }
                for (k, v) in &ev.gating_facts {
                    println!("    {k} = {v}");
                }
            }
        }
    }
    Ok(())
}
