use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{FillMode, TemplateError, TestTemplate};
use crate::detectors::{DefectEvidence, DefectKind};
use crate::ir::{ContractIR, Param};

/// Type name standing in for the contract under test.
pub const PLACEHOLDER: &str = "ContractUnderTest";
/// Name of the test contract before the contract name is substituted.
pub const TEST_PLACEHOLDER: &str = "ContractUnderTestTest";

const RULES: [&str; 6] =
    ["contract_type", "import_path", "test_contract_name", "setup_params", "constructor_args", "constructor_value"];

pub(crate) fn has_rule(slot: &str) -> bool {
    RULES.contains(&slot)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructorArg {
    Literal(String),
    /// No zero value exists for this type; left for the model or a failed check.
    Unresolved {
        name: String,
        type_string: String,
    },
}

impl ConstructorArg {
    fn render(&self, index: usize) -> String {
        match self {
            ConstructorArg::Literal(s) => s.clone(),
            ConstructorArg::Unresolved { .. } => format!("UNRESOLVED_ARG_{index}"),
        }
    }

    /// Zero value or fresh address for one constructor parameter.
    pub fn for_param(p: &Param, index: usize) -> ConstructorArg {
        let name = if p.name.is_empty() { format!("arg{index}") } else { p.name.clone() };
        let ty = p
            .type_string
            .trim()
            .trim_end_matches(" memory")
            .trim_end_matches(" calldata")
            .trim_end_matches(" storage")
            .trim();
        let lit = |s: String| ConstructorArg::Literal(s);
        if let Some(elem) = ty.strip_suffix("[]") {
            if !elem.contains(' ') && !elem.contains('[') {
                return lit(format!("new {elem}[](0)"));
            }
        }
        if ty.contains('[') {
            return ConstructorArg::Unresolved { name, type_string: p.type_string.clone() };
        }
        if ty.starts_with("uint") || ty.starts_with("int") {
            return lit("0".into());
        }
        match ty {
            "bool" => return lit("false".into()),
            "address" => return lit(format!("makeAddr(\"{name}\")")),
            "address payable" => return lit(format!("payable(makeAddr(\"{name}\"))")),
            "string" | "bytes" => return lit("\"\"".into()),
            _ => {}
        }
        if let Some(n) = ty.strip_prefix("bytes") {
            if n.parse::<u8>().is_ok() {
                return lit(format!("{ty}(0)"));
            }
        }
        if let Some(c) = ty.strip_prefix("contract ").or_else(|| ty.strip_prefix("interface ")) {
            return lit(format!("{c}(makeAddr(\"{name}\"))"));
        }
        if let Some(e) = ty.strip_prefix("enum ") {
            return lit(format!("{}(0)", e.rsplit('.').next().unwrap_or(e)));
        }
        ConstructorArg::Unresolved { name, type_string: p.type_string.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuiteSpec {
    pub defect_kind: DefectKind,
    pub template_id: String,
    pub contract_name: String,
    /// Import path of the contract under test, relative to the test file.
    pub import_path: String,
    pub constructor_args: Vec<ConstructorArg>,
    pub constructor_signature: String,
    pub constructor_payable: bool,
    pub helper_contracts_needed: Vec<String>,
    pub evidence: DefectEvidence,
}

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z_$][A-Za-z0-9_$]*$").expect("valid regex"))
}

fn contract_decl_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)^\s*(?:abstract\s+)?contract\s+([A-Za-z_$][A-Za-z0-9_$]*)").expect("valid regex")
    })
}

pub(crate) fn declared_contracts(source: &str) -> Vec<String> {
    contract_decl_re().captures_iter(source).map(|c| c[1].to_string()).collect()
}

impl TestSuiteSpec {
    /// Fails with `InvalidContractName` unless the name is a plain identifier.
    /// The test-contract placeholder itself is refused because substituting
    /// it would not be idempotent.
    pub fn new(template: &TestTemplate, ir: &ContractIR, evidence: DefectEvidence) -> Result<Self, TemplateError> {
        let name = ir.name.clone();
        if !identifier_re().is_match(&name) || name == TEST_PLACEHOLDER {
            return Err(TemplateError::InvalidContractName(name));
        }
        Ok(TestSuiteSpec {
            defect_kind: template.defect_kind,
            template_id: template.template_id.clone(),
            import_path: format!("../src/{name}.sol"),
            constructor_args: ir
                .constructor_params
                .iter()
                .enumerate()
                .map(|(i, p)| ConstructorArg::for_param(p, i))
                .collect(),
            constructor_signature: ir.constructor_signature(),
            constructor_payable: ir.constructor_payable,
            helper_contracts_needed: template.helpers.iter().flat_map(|h| declared_contracts(&h.source)).collect(),
            contract_name: name,
            evidence,
        })
    }

    pub fn test_contract_name(&self) -> String {
        format!("{}Test", self.contract_name)
    }

    pub fn test_file_name(&self) -> String {
        format!("{}Test.sol", self.contract_name)
    }
}

fn token_re(token: &str) -> Regex {
    Regex::new(&format!(r"\b{}\b", regex::escape(token))).expect("valid regex")
}

fn substitute_line(line: &str, template: &TestTemplate, spec: &TestSuiteSpec) -> String {
    let has = |slot: &str| template.deterministic_slots().any(|s| s.name == slot);
    let mut out = line.to_string();
    if has("constructor_args") || has("constructor_value") {
        let args: Vec<String> = spec.constructor_args.iter().enumerate().map(|(i, a)| a.render(i)).collect();
        let value = if has("constructor_value") && spec.constructor_payable { "{value: 1 ether}" } else { "" };
        let ctor = format!("new {}{value}({})", spec.contract_name, args.join(", "));
        out = out.replace(&format!("new {PLACEHOLDER}()"), &ctor);
    }
    if has("test_contract_name") {
        out = token_re(TEST_PLACEHOLDER).replace_all(&out, spec.test_contract_name().as_str()).into_owned();
    }
    if has("import_path") {
        out = out.replace(&format!("\"../src/{PLACEHOLDER}.sol\""), &format!("\"{}\"", spec.import_path));
    }
    if has("contract_type") {
        out = token_re(PLACEHOLDER).replace_all(&out, spec.contract_name.as_str()).into_owned();
    }
    out
}

/// One deterministic pass over `text`: deterministic anchor lines are
/// consumed, llm anchor lines are kept byte for byte, every other line gets
/// the token substitutions. Applying it to its own output changes nothing.
pub fn apply_deterministic(template: &TestTemplate, spec: &TestSuiteSpec, text: &str) -> String {
    let mut out = Vec::new();
    for line in text.split('\n') {
        let trimmed = line.trim();
        let slot = template.slots.iter().find(|s| !trimmed.is_empty() && s.anchor.trim() == trimmed);
        match slot {
            Some(s) if s.fill_mode == FillMode::Llm => out.push(line.to_string()),
            Some(s) => {
                if s.name == "constructor_value" && spec.constructor_payable {
                    let indent = &line[..line.len() - line.trim_start().len()];
                    out.push(format!("{indent}vm.deal(address(this), 1 ether);"));
                }
            }
            None => out.push(substitute_line(line, template, spec)),
        }
    }
    out.join("\n")
}

fn strip_header(helper: &str) -> String {
    helper
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            !(t.starts_with("// SPDX") || t.starts_with("pragma ") || t.starts_with("import "))
        })
        .skip_while(|l| l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Resolves every deterministic slot. Helper contracts are appended to the
/// test file so the result is one self-contained source.
pub fn fill_deterministic(template: &TestTemplate, spec: &TestSuiteSpec) -> Result<String, TemplateError> {
    template.check()?;
    if !identifier_re().is_match(&spec.contract_name) || spec.contract_name == TEST_PLACEHOLDER {
        return Err(TemplateError::InvalidContractName(spec.contract_name.clone()));
    }
    let mut out = apply_deterministic(template, spec, &template.source_text);
    for helper in &template.helpers {
        if !out.ends_with('\n') {
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&apply_deterministic(template, spec, &strip_header(&helper.source)));
    }
    if !out.ends_with('\n') {
        out.push('\n');
    }
    Ok(out)
}
