//! Shows how a config file, environment and command-line overrides combine,
//! and the digest recorded in reports.
//!
//! ```text
//! SCPROOF_FUZZ_RUNS=64 cargo run --example layered_config -- backend_mode=mock llm.temperature=0.2
//! ```

use scproof::config::{load_config, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cli = Overrides::new();
    for kv in std::env::args().skip(1) {
        let (k, v) = kv.split_once('=').ok_or("arguments are key=value")?;
        cli.insert(k.to_string(), v.to_string());
    }
    let config = load_config(None, &cli, &|k| std::env::var(k).ok())?;
    println!("{}", config.effective_toml());
    println!("# digest {}", config.digest());
    Ok(())
}
