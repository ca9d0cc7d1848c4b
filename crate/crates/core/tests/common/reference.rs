//! Token-level comparison of a generated suite against a hand-written
//! reference proof. Written independently of the template code.

use std::sync::OnceLock;

use regex::Regex;
use similar::{capture_diff_slices, Algorithm, DiffOp};

/// Statements that only arrange who sends the call and with what balance.
const SENDER_ARRANGEMENT: [&str; 5] = ["makeAddr(", "vm.prank(", "vm.startPrank(", "vm.stopPrank(", "vm.deal("];

const KEYWORDS: [&str; 24] = [
    "contract", "is", "function", "public", "external", "internal", "private", "view", "pure", "payable", "returns",
    "return", "new", "address", "bool", "uint256", "memory", "storage", "calldata", "if", "else", "true", "false",
    "value",
];

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"[A-Za-z_$][A-Za-z0-9_$]*|\d+|"(?:[^"\\]|\\.)*"|\S"#).unwrap())
}

fn without_comments(src: &str) -> String {
    let block = Regex::new(r"(?s)/\*.*?\*/").unwrap();
    let line = Regex::new(r"//[^\n]*").unwrap();
    line.replace_all(&block.replace_all(src, ""), "").into_owned()
}

/// Tokens from the first `contract` on, sender arrangement dropped.
pub fn tokens(src: &str) -> Vec<String> {
    let code = without_comments(src);
    let start = Regex::new(r"(?m)^\s*contract\s").unwrap().find(&code).map_or(0, |m| m.start());
    code[start..]
        .lines()
        .filter(|l| !SENDER_ARRANGEMENT.iter().any(|s| l.contains(s)))
        .flat_map(|l| token_re().find_iter(l).map(|m| m.as_str().to_string()).collect::<Vec<_>>())
        .collect()
}

pub fn method_names(src: &str) -> Vec<String> {
    let re = Regex::new(r"\bfunction\s+([A-Za-z_$][A-Za-z0-9_$]*)").unwrap();
    re.captures_iter(&without_comments(src)).map(|c| c[1].to_string()).collect()
}

fn is_identifier(token: &str) -> bool {
    let ident = Regex::new(r"^[A-Za-z_$][A-Za-z0-9_$]*$").unwrap();
    ident.is_match(token) && !KEYWORDS.contains(&token)
}

/// Changed tokens that are not identifiers, string literals or the comma
/// of an inheritance list. Empty means the diff is confined as required.
pub fn disallowed_changes(generated: &str, reference: &str) -> Vec<String> {
    let (a, b) = (tokens(reference), tokens(generated));
    let mut bad = Vec::new();
    for op in capture_diff_slices(Algorithm::Myers, &a, &b) {
        let (old, new) = match op {
            DiffOp::Equal { .. } => continue,
            DiffOp::Delete { old_index, old_len, .. } => (&a[old_index..old_index + old_len], &b[0..0]),
            DiffOp::Insert { new_index, new_len, .. } => (&a[0..0], &b[new_index..new_index + new_len]),
            DiffOp::Replace { old_index, old_len, new_index, new_len } => {
                (&a[old_index..old_index + old_len], &b[new_index..new_index + new_len])
            }
        };
        // A comma may only go along with the list entry it separates.
        let entry_changed = old.iter().chain(new).any(|t| is_identifier(t));
        for t in old.iter().map(|t| format!("-{t}")).chain(new.iter().map(|t| format!("+{t}"))) {
            let tok = &t[1..];
            let ok = is_identifier(tok) || tok.starts_with('"') || (tok == "," && entry_changed);
            if !ok {
                bad.push(t);
            }
        }
    }
    bad
}

/// Every token that differs, for diagnostics.
pub fn changed_tokens(generated: &str, reference: &str) -> usize {
    let (a, b) = (tokens(reference), tokens(generated));
    capture_diff_slices(Algorithm::Myers, &a, &b)
        .iter()
        .map(|op| match *op {
            DiffOp::Equal { .. } => 0,
            DiffOp::Delete { old_len, .. } => old_len,
            DiffOp::Insert { new_len, .. } => new_len,
            DiffOp::Replace { old_len, new_len, .. } => old_len + new_len,
        })
        .sum()
}
