//! Feeds scripted test outcomes through the mock backend and interprets
//! them with the defect's verdict table, without generating anything.
//!
//! ```text
//! cargo run --example mock_backend -- reentrancy test_proofWithdrawUsuallyWorks=pass test_proofReentrancyExploit=fail
//! ```

use std::collections::BTreeMap;

use scproof::config::asset_root;
use scproof::runner::{run_mock, TestOutcome};
use scproof::template::TemplateRegistry;
use scproof::verdict::{interpret, VerdictTables};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "complex_fallback".into());
    let root = asset_root();
    let registry = TemplateRegistry::load(&root.join("templates"))?;
    let template = registry
        .templates()
        .find(|t| t.verdict_table_id == id)
        .ok_or_else(|| format!("no template uses table `{id}`"))?;
    let tables = VerdictTables::load(&root.join("verdicts"))?;
    let table = tables.get(&id).ok_or("verdict table missing")?;

    let mut script = BTreeMap::new();
    for arg in args {
        let (method, status) = arg.split_once('=').ok_or("arguments are method=status")?;
        script.insert(method.to_string(), TestOutcome::new(status.parse()?));
    }
    if script.is_empty() {
        println!("methods: {:?}", template.roles());
        return Ok(());
    }

    let logs = tempfile::tempdir()?;
    let result = run_mock(&script, logs.path())?;
    let verdict = interpret(table, &result, &template.roles());
    println!("{} ({}): {}", verdict.verdict, verdict.confidence, verdict.note);
    Ok(())
}
