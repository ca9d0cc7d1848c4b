//! Looks up a verdict for a set of test statuses, or prints a whole table
//! when no statuses are given.
//!
//! ```text
//! cargo run --example verdict_table -- reentrancy
//! cargo run --example verdict_table -- reentrancy pass fail
//! ```

use std::collections::BTreeMap;

use scproof::config::asset_root;
use scproof::runner::TestStatus;
use scproof::verdict::{RowRef, VerdictTables};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "complex_fallback".into());
    let statuses: Vec<TestStatus> = args.map(|a| a.parse()).collect::<Result<_, _>>()?;

    let tables = VerdictTables::load(&asset_root().join("verdicts"))?;
    let table = tables.get(&id).ok_or_else(|| format!("no verdict table `{id}`"))?;

    if statuses.is_empty() {
        println!("{} ({}), roles: {}", table.id, table.defect_kind, table.roles.join(", "));
        for row in &table.rows {
            let when: Vec<String> = row.when.iter().map(|(r, s)| format!("{r}={}", s.as_str())).collect();
            println!("  {:<50} -> {} ({}) {}", when.join(" "), row.verdict, row.confidence, row.note);
        }
        let (v, c) = table.default_row();
        println!("  {:<50} -> {v} ({c})", "any error");
        return Ok(());
    }
    if statuses.len() != table.roles.len() {
        return Err(format!("expected {} statuses, one per role: {}", table.roles.len(), table.roles.join(", ")).into());
    }
    let assignment: BTreeMap<String, TestStatus> = table.roles.iter().cloned().zip(statuses).collect();
    match table.classify(&assignment) {
        RowRef::Row(i) => {
            let row = &table.rows[i];
            println!("{} ({}): {}", row.verdict, row.confidence, row.note);
        }
        RowRef::Default => {
            let (v, c) = table.default_row();
            println!("{v} ({c}): default row");
        }
    }
    Ok(())
}
