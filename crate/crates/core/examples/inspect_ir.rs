//! Prints the normalized contract view of a Solidity file or AST snapshot.
//!
//! ```text
//! cargo run --example inspect_ir -- fixtures/reentrancy/ast/vulnerable.json
//! ```

use std::path::PathBuf;

use scproof::ir::{build_ir, compile_to_ast, load_ast_snapshot};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures/reentrancy/ast/vulnerable.json"));
    let unit = if path.extension().is_some_and(|e| e == "json") {
        load_ast_snapshot(&path)?
    } else {
        compile_to_ast(&path, &PathBuf::from("solc"), None)?
    };
    for contract in build_ir(&unit)? {
        println!("contract {} ({} state vars)", contract.name, contract.state_vars.len());
        for f in &contract.functions {
            println!("  {} [{:?}] modifiers={:?}", f.signature(), f.visibility, f.modifiers_applied);
            for s in &f.body {
                let calls: Vec<&str> = s.external_calls.iter().map(|c| c.mechanism.as_str()).collect();
                println!(
                    "    #{} {} reads={:?} writes={:?} calls={:?} guards={}",
                    s.index,
                    s.src_location,
                    s.reads_state,
                    s.writes_state,
                    calls,
                    s.guards.len()
                );
            }
        }
        for u in &contract.unsupported {
            println!("  unsupported {} at {}: {}", u.node_type, u.location, u.reason);
        }
    }
    Ok(())
}
