use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

/// Import prefix remapping in the `prefix=target` form used by Foundry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Remapping {
    pub prefix: String,
    pub target: String,
}

impl Remapping {
    pub fn parse(text: &str) -> Option<Remapping> {
        let (prefix, target) = text.trim().split_once('=')?;
        if prefix.is_empty() {
            return None;
        }
        Some(Remapping { prefix: prefix.to_string(), target: target.to_string() })
    }

    pub fn render(&self) -> String {
        format!("{}={}", self.prefix, self.target)
    }
}

/// Removes `//` and `/* */` comments, leaving string literals untouched.
pub(crate) fn strip_comments(source: &str) -> String {
    let bytes = source.as_bytes();
    let mut out = String::with_capacity(source.len());
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'"' || c == b'\'' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] != c {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            out.push_str(&source[start..i]);
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                if bytes[i] == b'\n' {
                    out.push('\n');
                }
                i += 1;
            }
            i = (i + 2).min(bytes.len());
        } else {
            let ch = source[i..].chars().next().expect("in bounds");
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

pub(crate) fn import_paths(source: &str) -> Vec<String> {
    static IMPORT: OnceLock<Regex> = OnceLock::new();
    let re = IMPORT.get_or_init(|| {
        Regex::new(r#"(?s)\bimport\s+(?:[^;]*?\bfrom\s+)?["']([^"']+)["'][^;]*;"#).expect("valid regex")
    });
    re.captures_iter(&strip_comments(source)).map(|c| c[1].to_string()).collect()
}

fn normalize(path: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for part in path.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            p => parts.push(p),
        }
    }
    parts.join("/")
}

fn resolve_import(importer: &str, import: &str, remappings: &[Remapping]) -> String {
    if import.starts_with("./") || import.starts_with("../") {
        let dir = importer.rsplit_once('/').map(|(d, _)| d).unwrap_or("");
        return normalize(&format!("{dir}/{import}"));
    }
    let best = remappings.iter().filter(|r| import.starts_with(&r.prefix)).max_by_key(|r| r.prefix.len());
    match best {
        Some(r) => normalize(&format!("{}{}", r.target, &import[r.prefix.len()..])),
        None => normalize(import),
    }
}

/// Reads `entry` (a source unit name relative to `root`) and every file it
/// transitively imports. Returns the source map keyed by unit name and the
/// unit names that could not be read.
pub fn collect_sources(root: &Path, entry: &str, remappings: &[Remapping]) -> (BTreeMap<String, String>, Vec<String>) {
    let mut sources = BTreeMap::new();
    let mut missing = Vec::new();
    let mut queue = vec![normalize(entry)];
    while let Some(name) = queue.pop() {
        if sources.contains_key(&name) || missing.contains(&name) {
            continue;
        }
        match std::fs::read_to_string(root.join(&name)) {
            Ok(text) => {
                for import in import_paths(&text) {
                    queue.push(resolve_import(&name, &import, remappings));
                }
                sources.insert(name, text);
            }
            Err(_) => missing.push(name),
        }
    }
    (sources, missing)
}
