//! Recompiles Solidity sources and rewrites their committed AST snapshots.
//!
//! Every `X.sol` below the given directories gets `ast/X.json` beside it.
//!
//! ```text
//! cargo run --example regen_snapshots -- fixtures crates/core/tests/data/snippets
//! ```

use std::path::{Path, PathBuf};

use scproof::ir::compile_to_ast;
use walkdir::WalkDir;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let solc = PathBuf::from(std::env::var("SOLC").unwrap_or_else(|_| "solc".into()));
    let mut roots: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if roots.is_empty() {
        roots.push(PathBuf::from("fixtures"));
    }
    for root in roots {
        let mut sources: Vec<PathBuf> = WalkDir::new(&root)
            .into_iter()
            .filter_map(Result::ok)
            .map(|e| e.into_path())
            .filter(|p| p.extension().is_some_and(|e| e == "sol"))
            .collect();
        sources.sort();
        for source in sources {
            let unit = compile_to_ast(&source, &solc, None)?;
            let dir = source.parent().unwrap_or(Path::new("."));
            let stem = source.file_stem().and_then(|s| s.to_str()).unwrap_or("source");
            let out = dir.join("ast").join(format!("{stem}.json"));
            std::fs::create_dir_all(dir.join("ast"))?;
            std::fs::write(&out, unit.snapshot_json())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
