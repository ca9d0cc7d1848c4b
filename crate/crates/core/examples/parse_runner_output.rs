//! Parses a saved `forge test --json` report or Kontrol log into per-test
//! outcomes.
//!
//! ```text
//! cargo run --example parse_runner_output -- forge crates/core/tests/data/golden/forge/reentrancy_fuzz.json
//! cargo run --example parse_runner_output -- kontrol crates/core/tests/data/golden/kontrol/short_form.log
//! ```

use scproof::runner::{parse_forge_json, parse_kontrol_log};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [backend, path] = args.as_slice() else {
        return Err("usage: parse_runner_output forge|kontrol <file>".into());
    };
    let raw = std::fs::read_to_string(path)?;
    let outcomes = match backend.as_str() {
        "forge" => parse_forge_json(&raw)?,
        "kontrol" => parse_kontrol_log(&raw),
        other => return Err(format!("unknown backend `{other}`").into()),
    };
    for (method, o) in outcomes {
        match o.detail {
            Some(d) => println!("{method}: {} ({d})", o.status.as_str()),
            None => println!("{method}: {}", o.status.as_str()),
        }
    }
    Ok(())
}
