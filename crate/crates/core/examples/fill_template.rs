//! Fills the deterministic slots of a defect's template for a fixture and
//! prints the result, or the prompt that would go to the model.
//!
//! ```text
//! cargo run --example fill_template -- complex_fallback
//! cargo run --example fill_template -- reentrancy --prompt
//! ```

use std::path::PathBuf;

use scproof::config::asset_root;
use scproof::detectors::{run_detectors, DefectKind, DetectorConfig};
use scproof::ir::{build_ir, load_ast_snapshot};
use scproof::template::{build_prompt, fill_deterministic, TemplateRegistry, TestSuiteSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let fixture = args.next().unwrap_or_else(|| "complex_fallback".into());
    let show_prompt = args.any(|a| a == "--prompt");

    let root = asset_root();
    let snapshot: PathBuf = root.join("fixtures").join(&fixture).join("ast/vulnerable.json");
    let unit = load_ast_snapshot(&snapshot)?;
    let ir = build_ir(&unit)?.remove(0);
    let registry = TemplateRegistry::load(&root.join("templates"))?;
    let enabled = DefectKind::ALL.into_iter().collect();

    for evidence in run_detectors(&ir, &enabled, &DetectorConfig::default()) {
        let Ok(template) = registry.select_template(&evidence) else {
            eprintln!("{}: no template (detection only)", evidence.kind);
            continue;
        };
        let spec = TestSuiteSpec::new(template, &ir, evidence)?;
        let filled = fill_deterministic(template, &spec)?;
        if show_prompt {
            let bundle = build_prompt(template, &spec, &unit.raw_source, &filled);
            println!("{}\n\n{}", bundle.system, bundle.user);
        } else {
            print!("{filled}");
        }
    }
    Ok(())
}
