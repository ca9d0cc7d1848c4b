use super::{TemplateError, TestSuiteSpec, TestTemplate};
use crate::llm::PromptBundle;

const SYSTEM: &str = "You complete Solidity test templates for the Foundry framework. \
Follow every instruction comment in the template and replace the placeholder identifiers it names. \
Keep every test function name exactly as written. \
Reply with exactly one Solidity code block, no prose.";

/// User text holds, in order: defect description, full contract source,
/// evidence bullets, constructor signature, the partially filled template.
pub fn build_prompt(
    template: &TestTemplate,
    spec: &TestSuiteSpec,
    contract_source: &str,
    partially_filled: &str,
) -> PromptBundle {
    let mut user = String::new();
    user.push_str("## Defect\n");
    user.push_str(spec.defect_kind.description());
    user.push_str("\n\n## Contract under test\n");
    user.push_str(&format!("The contract is `{}`, located at src/{}.sol.\n\n", spec.contract_name, spec.contract_name));
    user.push_str("```solidity\n");
    user.push_str(contract_source.trim_end());
    user.push_str("\n```\n\n## Evidence\n");
    for bullet in spec.evidence.bullets() {
        user.push_str(&format!("- {bullet}\n"));
    }
    user.push_str("\n## Constructor\n");
    user.push_str(&spec.constructor_signature);
    user.push_str("\n\n## Template\n");
    let open: Vec<_> = template.llm_slots().collect();
    if open.is_empty() {
        user.push_str("No slots need completing. Return the template below unchanged.\n");
    } else {
        user.push_str("Complete these slots; each is marked by its instruction comment in the template:\n");
        for s in &open {
            user.push_str(&format!("- {}: {}\n", s.name, s.description));
        }
        user.push_str("Return the whole file, including any helper contracts it contains.\n");
    }
    user.push_str("\n```solidity\n");
    user.push_str(partially_filled.trim_end());
    user.push_str("\n```\n");
    PromptBundle { system: SYSTEM.into(), user, kind: Some(spec.defect_kind), contract: spec.contract_name.clone() }
}

/// Follow-up prompt carrying the compiler diagnostics of the previous attempt.
pub fn build_repair_prompt(original: &PromptBundle, previous: &str, diagnostics: &[String]) -> PromptBundle {
    let mut user = original.user.clone();
    user.push_str("\n## Previous attempt\n```solidity\n");
    user.push_str(previous.trim_end());
    user.push_str("\n```\n\n## Problems found in the previous attempt\n");
    for d in diagnostics {
        user.push_str(&format!("- {}\n", d.trim()));
    }
    user.push_str("\nReturn a corrected version of the whole file.\n");
    PromptBundle { user, ..original.clone() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCode {
    pub code: String,
    pub warnings: Vec<String>,
}

/// Body of the first fenced block, or the trimmed reply when there is none.
pub fn extract_code(reply: &str) -> Result<ExtractedCode, TemplateError> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(_), true) => blocks.push(current.take().unwrap_or_default()),
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    // An unterminated fence runs to the end of the reply.
    if let Some(body) = current {
        blocks.push(body);
    }
    let mut warnings = Vec::new();
    let code = match blocks.first() {
        Some(first) => {
            if blocks.len() > 1 {
                warnings.push(format!("reply contained {} code blocks; the first was used", blocks.len()));
            }
            first.join("\n").trim().to_string()
        }
        None => reply.trim().to_string(),
    };
    if code.is_empty() {
        return Err(TemplateError::EmptyReply);
    }
    Ok(ExtractedCode { code: code + "\n", warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{run_detectors, DefectKind, DetectorConfig};
    use crate::template::fill_deterministic;
    use crate::template::tests::registry;
    use crate::testutil::{fixture, repo_root};

    #[test]
    fn one_block() {
        let e = extract_code("```solidity\ncontract A {}\n```").unwrap();
        assert_eq!(e.code, "contract A {}\n");
        assert!(e.warnings.is_empty());
    }

    #[test]
    fn prose_then_block() {
        let e = extract_code("Here is the test:\n\n```solidity\ncontract A {}\n```\nGood luck.").unwrap();
        assert_eq!(e.code, "contract A {}\n");
    }

    #[test]
    fn two_blocks_take_first_and_warn() {
        let e = extract_code("```solidity\ncontract A {}\n```\ntext\n```\ncontract B {}\n```").unwrap();
        assert_eq!(e.code, "contract A {}\n");
        assert_eq!(e.warnings.len(), 1);
    }

    #[test]
    fn no_fence_and_empty() {
        assert_eq!(extract_code("  contract A {}  ").unwrap().code, "contract A {}\n");
        assert!(matches!(extract_code("   \n"), Err(TemplateError::EmptyReply)));
        assert!(matches!(extract_code("```solidity\n```"), Err(TemplateError::EmptyReply)));
    }

    fn prompt_for(kind: DefectKind, dir: &str) -> (crate::template::TestTemplate, PromptBundle) {
        let ir = fixture(dir, "vulnerable");
        let ev = run_detectors(&ir, &[kind].into(), &DetectorConfig::default()).remove(0);
        let t = registry().get(kind).unwrap().clone();
        let spec = TestSuiteSpec::new(&t, &ir, ev).unwrap();
        let partial = fill_deterministic(&t, &spec).unwrap();
        let source = std::fs::read_to_string(repo_root().join(format!("fixtures/{dir}/vulnerable.sol"))).unwrap();
        (t.clone(), build_prompt(&t, &spec, &source, &partial))
    }

    #[test]
    fn access_control_prompt_sections_in_order() {
        let (_, b) = prompt_for(DefectKind::AccessControl, "access_control");
        assert!(b.system.contains("exactly one Solidity code block, no prose"));
        let at = |needle: &str| b.user.find(needle).unwrap_or_else(|| panic!("missing {needle}"));
        let order = [
            at("Access control:"),
            at("function cancelContract()"),
            at("- cancelContract: selfdestruct without msg.sender guard"),
            at("## Constructor\nconstructor()"),
            at("contract UnprotectedSelfdestructTest is Test"),
        ];
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
        assert!(b.user.contains("Constrain the symbolic caller"));
        assert_eq!(b.kind, Some(DefectKind::AccessControl));
    }

    #[test]
    fn complex_fallback_prompt_has_no_open_slots() {
        let (t, b) = prompt_for(DefectKind::ComplexFallback, "complex_fallback");
        let template_section = &b.user[b.user.find("## Template").unwrap()..];
        assert!(template_section.contains("No slots need completing"));
        for s in &t.slots {
            assert!(!template_section.contains(s.anchor.trim()), "{}", s.name);
        }
    }

    #[test]
    fn repair_prompt_appends_diagnostics() {
        let (_, b) = prompt_for(DefectKind::AccessControl, "access_control");
        let r = build_repair_prompt(&b, "contract X {}", &["Undeclared identifier.".into()]);
        assert!(r.user.starts_with(&b.user));
        assert!(r.user.contains("- Undeclared identifier."));
        assert_eq!(r.system, b.system);
    }
}
