//! Vulnerable/safe fixture pairs and their hand-written annotations.
//!
//! Layout: `<root>/<kind-id>/{vulnerable.sol, safe.sol, annotations.txt,
//! ast/vulnerable.json, ast/safe.json}`.

use std::path::{Path, PathBuf};

use crate::detectors::DefectKind;
use crate::ir::{ContractIR, EnvSymbol, GuardKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Vulnerable,
    Safe,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vulnerable => "vulnerable",
            Variant::Safe => "safe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// The detector must report a site with this tag.
    Evidence {
        tag: String,
    },
    Call(String),
    Write(String),
    Read(String),
    Env(String),
    Guard(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub variant: Variant,
    pub function: String,
    pub statement_index: usize,
    pub expectation: Expectation,
}

impl Annotation {
    /// Whether the extracted IR carries this fact. Evidence lines are not
    /// facts and always return `true` here.
    pub fn holds_in(&self, ir: &ContractIR) -> bool {
        let Some(s) = ir.function(&self.function).and_then(|f| f.body.get(self.statement_index)) else {
            return false;
        };
        match &self.expectation {
            Expectation::Evidence { .. } => true,
            Expectation::Call(m) => s.external_calls.iter().any(|c| c.mechanism.as_str() == m),
            Expectation::Write(v) => s.writes_state.contains(v),
            Expectation::Read(v) => s.reads_state.contains(v),
            Expectation::Env(e) => s.env_reads.iter().any(|x: &EnvSymbol| x.as_str() == e),
            Expectation::Guard(k) => s.guards.iter().any(|g| {
                let kind = match g.kind {
                    GuardKind::Require => "require",
                    GuardKind::Assert => "assert",
                    GuardKind::IfRevert => "if_revert",
                };
                kind == k
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePair {
    pub kind: DefectKind,
    pub dir: PathBuf,
    pub annotations: Vec<Annotation>,
}

impl FixturePair {
    pub fn source(&self, variant: Variant) -> PathBuf {
        self.dir.join(format!("{}.sol", variant.as_str()))
    }

    pub fn snapshot(&self, variant: Variant) -> PathBuf {
        self.dir.join("ast").join(format!("{}.json", variant.as_str()))
    }

    pub fn annotations_for(&self, variant: Variant) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.variant == variant)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("fixture directory `{0}` is missing")]
    Missing(PathBuf),
    #[error("{path}:{line}: {reason}")]
    BadAnnotation { path: PathBuf, line: usize, reason: String },
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<Annotation>, CorpusError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad =
            |reason: &str| CorpusError::BadAnnotation { path: path.to_path_buf(), line: n + 1, reason: reason.into() };
        let words: Vec<&str> = line.split_whitespace().collect();
        let variant = match words.first() {
            Some(&"vulnerable") => Variant::Vulnerable,
            Some(&"safe") => Variant::Safe,
            _ => return Err(bad("expected `vulnerable` or `safe`")),
        };
        let (function, index) = match (words.get(2), words.get(3).map(|i| i.parse::<usize>())) {
            (Some(f), Some(Ok(i))) => (f.to_string(), i),
            _ => return Err(bad("expected `<function> <statement-index>`")),
        };
        let expectation = match (words.get(1).copied(), &words[4..]) {
            (Some("evidence"), [tag]) => Expectation::Evidence { tag: tag.to_string() },
            (Some("fact"), [what, value]) => {
                let value = value.to_string();
                match *what {
                    "call" => Expectation::Call(value),
                    "write" => Expectation::Write(value),
                    "read" => Expectation::Read(value),
                    "env" => Expectation::Env(value),
                    "guard" => Expectation::Guard(value),
                    _ => return Err(bad("fact must be call, write, read, env or guard")),
                }
            }
            _ => return Err(bad("expected `evidence <tag>` or `fact <what> <value>`")),
        };
        out.push(Annotation { variant, function, statement_index: index, expectation });
    }
    Ok(out)
}

/// One pair per defect kind found under `root`, in [`DefectKind`] order.
pub fn corpus_manifest(root: &Path) -> Result<Vec<FixturePair>, CorpusError> {
    let mut pairs = Vec::new();
    for kind in DefectKind::ALL {
        let dir = root.join(kind.id());
        if !dir.is_dir() {
            return Err(CorpusError::Missing(dir));
        }
        let path = dir.join("annotations.txt");
        let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        pairs.push(FixturePair { kind, annotations: parse_annotations(&text, &path)?, dir });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_line_kinds() {
        let text = "# comment\nvulnerable evidence withdraw 1 external-call\n\nsafe fact withdraw 2 call transfer\n";
        let a = parse_annotations(text, Path::new("a.txt")).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].expectation, Expectation::Evidence { tag: "external-call".into() });
        assert_eq!(a[1].variant, Variant::Safe);
        assert_eq!(a[1].expectation, Expectation::Call("transfer".into()));
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["other evidence f 0 t", "safe fact f x write a", "safe fact f 0 poke a", "safe evidence f 0"] {
            assert!(parse_annotations(bad, Path::new("a.txt")).is_err(), "{bad}");
        }
    }
}
