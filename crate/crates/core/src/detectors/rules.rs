use std::collections::{BTreeMap, BTreeSet};

use super::{CriticalOp, DefectEvidence, DefectKind, DetectorConfig, EvidenceSite};
use crate::ir::{ArithOp, CallMechanism, ContractIR, FunctionIR, FunctionKind, GuardKind, OperandKind, StatementFact};

fn site(f: &FunctionIR, s: &StatementFact, tag: &str, detail: String) -> EvidenceSite {
    EvidenceSite {
        function: f.name.clone(),
        statement_index: s.index,
        location: s.src_location.clone(),
        tag: tag.to_string(),
        detail,
    }
}

fn facts<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn join<'a>(names: impl IntoIterator<Item = &'a String>) -> String {
    names.into_iter().map(String::as_str).collect::<Vec<_>>().join(", ")
}

/// External call followed, later in the same function, by a state write.
///
/// Gated on the contract handling Ether or tokens. An opaque statement after
/// a call counts as a potential write.
pub fn detect_reentrancy(ir: &ContractIR) -> Option<DefectEvidence> {
    let gate = ir.value_handling()?;
    let mut sites = Vec::new();
    let mut all_capped = true;
    let mut saw_opaque = false;
    for f in ir.functions.iter().filter(|f| f.kind != FunctionKind::Constructor) {
        let mut write_sites = BTreeSet::new();
        for (i, s) in f.body.iter().enumerate() {
            let calls: Vec<_> = s.external_calls.iter().filter(|c| c.can_reenter()).collect();
            if calls.is_empty() {
                continue;
            }
            let later: Vec<&StatementFact> =
                f.body[i + 1..].iter().filter(|t| !t.writes_state.is_empty() || t.opaque).collect();
            if later.is_empty() {
                continue;
            }
            all_capped &= calls.iter().all(|c| c.gas_capped_2300);
            let mechanisms: Vec<&str> = calls.iter().map(|c| c.mechanism.as_str()).collect();
            sites.push(site(f, s, "external-call", format!("external {} call", mechanisms.join("/"))));
            write_sites.extend(later.iter().map(|t| t.index));
        }
        for idx in write_sites {
            let t = &f.body[idx];
            let detail = if t.opaque {
                saw_opaque = true;
                "opaque statement after external call".to_string()
            } else {
                format!("writes {} after external call", join(&t.writes_state))
            };
            sites.push(site(f, t, "state-write-after-call", detail));
        }
    }
    DefectEvidence::new(
        DefectKind::Reentrancy,
        ir,
        sites,
        facts([
            ("all_calls_gas_capped", all_capped.to_string()),
            ("gate", gate.to_string()),
            ("opaque", saw_opaque.to_string()),
        ]),
    )
}

/// receive (or payable fallback) whose body writes state or calls out.
pub fn detect_complex_fallback(ir: &ContractIR) -> Option<DefectEvidence> {
    let callback = ir.value_callback()?;
    let sites = callback
        .body
        .iter()
        .filter_map(|s| {
            let detail = if !s.writes_state.is_empty() {
                format!("writes {} inside {}", join(&s.writes_state), callback.name)
            } else {
                let c = s.external_calls.first()?;
                format!("{} call inside {}", c.mechanism.as_str(), callback.name)
            };
            Some(site(callback, s, "expensive-statement", detail))
        })
        .collect();
    DefectEvidence::new(DefectKind::ComplexFallback, ir, sites, facts([("callback", callback.name.clone())]))
}

fn is_owner_like(name: &str, cfg: &DetectorConfig) -> bool {
    let lower = name.to_ascii_lowercase();
    cfg.owner_like.iter().any(|p| lower.contains(&p.to_ascii_lowercase()))
}

/// Critical operations in one statement, as (op, description) pairs.
fn critical_ops(ir: &ContractIR, s: &StatementFact, cfg: &DetectorConfig) -> Vec<(CriticalOp, String)> {
    let mut ops = Vec::new();
    for c in &s.external_calls {
        let op = match c.mechanism {
            CallMechanism::Selfdestruct => Some((CriticalOp::Selfdestruct, "selfdestruct".to_string())),
            CallMechanism::Delegatecall => Some((CriticalOp::Delegatecall, "delegatecall".to_string())),
            // Paying the caller out of its own account is not a privilege.
            _ if c.carries_value && !c.targets_only_sender() => {
                Some((CriticalOp::ValueTransfer, format!("Ether transfer via {}", c.mechanism.as_str())))
            }
            _ => None,
        };
        ops.extend(op);
    }
    for w in &s.writes_state {
        if ir.state_var(w).is_some_and(|v| v.is_address() && is_owner_like(&v.name, cfg)) {
            ops.push((CriticalOp::OwnerWrite, format!("write to owner-like {w}")));
        }
    }
    ops.retain(|(op, _)| cfg.critical_ops.contains(op));
    ops
}

/// Externally callable function with a critical operation and no guard on
/// `msg.sender`, neither through a modifier nor earlier in its body.
pub fn detect_access_control(ir: &ContractIR, cfg: &DetectorConfig) -> Option<DefectEvidence> {
    let custom_modifiers = ir.modifiers.iter().any(|m| m.guards_sender());
    let mut sites = Vec::new();
    let mut found = BTreeSet::new();
    for f in &ir.functions {
        if f.kind == FunctionKind::Constructor || !f.visibility.is_callable_externally() {
            continue;
        }
        for s in &f.body {
            let guarded = f.guards_before(s.index).any(|g| g.mentions_sender());
            if guarded {
                continue;
            }
            for (op, what) in critical_ops(ir, s, cfg) {
                found.insert(op);
                sites.push(site(f, s, "unguarded-critical-op", format!("{what} without msg.sender guard")));
            }
        }
    }
    let ops: Vec<&str> = found.iter().map(|op| op.as_str()).collect();
    DefectEvidence::new(
        DefectKind::AccessControl,
        ir,
        sites,
        facts([("critical_ops", ops.join(",")), ("has_custom_access_modifiers", custom_modifiers.to_string())]),
    )
}

/// Every statement reading block information.
pub fn detect_block_env(ir: &ContractIR) -> Option<DefectEvidence> {
    let mut sites = Vec::new();
    let mut symbols = BTreeSet::new();
    for f in &ir.functions {
        for s in f.body.iter().filter(|s| !s.env_reads.is_empty()) {
            let names: Vec<&str> = s.env_reads.iter().map(|e| e.as_str()).collect();
            symbols.extend(names.iter().map(|n| n.to_string()));
            sites.push(site(f, s, "env-read", format!("reads {}", names.join(", "))));
        }
    }
    DefectEvidence::new(DefectKind::BlockEnvDependency, ir, sites, facts([("symbols", join(&symbols))]))
}

/// Parameter reaching a division denominator, array index, call value or
/// loop bound with no earlier guard mentioning it.
pub fn detect_param_validation(ir: &ContractIR) -> Option<DefectEvidence> {
    let mut sites = Vec::new();
    for f in ir.functions.iter().filter(|f| f.kind != FunctionKind::Constructor && !f.params.is_empty()) {
        for s in &f.body {
            let mut uses: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for a in &s.arithmetic {
                if matches!(a.op, ArithOp::Div | ArithOp::Mod) && a.denominator_kind == OperandKind::Parameter {
                    if let Some(p) = &a.denominator_symbol {
                        uses.entry(p).or_default().insert("denominator");
                    }
                }
            }
            for p in s.index_mentions.iter().filter(|p| f.has_param(p)) {
                uses.entry(p).or_default().insert("array index");
            }
            for c in s.external_calls.iter().filter(|c| c.carries_value) {
                for p in c.value_mentions.iter().filter(|p| f.has_param(p)) {
                    uses.entry(p).or_default().insert("call value");
                }
            }
            for p in s.loop_bound_mentions.iter().filter(|p| f.has_param(p)) {
                uses.entry(p).or_default().insert("loop bound");
            }
            for (p, how) in uses {
                if f.guards_before(s.index).any(|g| g.mentions(p)) {
                    continue;
                }
                let how: Vec<&str> = how.into_iter().collect();
                sites.push(site(
                    f,
                    s,
                    "unvalidated-param-use",
                    format!("{p} used as {} without prior check", how.join(" and ")),
                ));
            }
        }
    }
    DefectEvidence::new(DefectKind::InsufficientParamValidation, ir, sites, BTreeMap::new())
}

/// Constant guards and asserts that validate caller input.
pub fn detect_faulty_assert(ir: &ContractIR) -> Option<DefectEvidence> {
    let mut sites = Vec::new();
    for f in &ir.functions {
        for s in &f.body {
            for g in &s.guards {
                let (tag, detail) = match g.is_constant_condition {
                    Some(true) => {
                        ("vacuous-guard", format!("{:?} on a constant true condition", g.kind).to_lowercase())
                    }
                    Some(false) => {
                        ("always-revert", format!("{:?} on a constant false condition", g.kind).to_lowercase())
                    }
                    None if g.kind == GuardKind::Assert => {
                        let inputs: Vec<&String> = g
                            .condition_mentions
                            .iter()
                            .filter(|m| f.has_param(m) || m.starts_with("msg.") || m.starts_with("tx."))
                            .collect();
                        if inputs.is_empty() {
                            continue;
                        }
                        ("assert-on-input", format!("assert validates caller input {}", join(inputs)))
                    }
                    None => continue,
                };
                sites.push(site(f, s, tag, detail));
            }
        }
    }
    DefectEvidence::new(DefectKind::FaultyAssertRevert, ir, sites, BTreeMap::new())
}

/// Division or modulo by something not proven nonzero by an earlier guard.
pub fn detect_division_by_zero(ir: &ContractIR) -> Option<DefectEvidence> {
    let mut sites = Vec::new();
    for f in &ir.functions {
        for s in &f.body {
            for a in s.arithmetic.iter().filter(|a| matches!(a.op, ArithOp::Div | ArithOp::Mod)) {
                let detail = match (a.denominator_kind, &a.denominator_symbol) {
                    (OperandKind::NonzeroLiteral, _) => continue,
                    (OperandKind::ZeroLiteral, _) => "division by constant zero".to_string(),
                    (_, Some(sym)) => {
                        if f.guards_before(s.index).any(|g| g.nonzero_symbols.contains(sym)) {
                            continue;
                        }
                        format!("denominator {sym} is never checked against zero")
                    }
                    (_, None) => "denominator expression is never checked against zero".to_string(),
                };
                sites.push(site(f, s, "unchecked-division", detail));
            }
        }
    }
    DefectEvidence::new(DefectKind::DivisionByZero, ir, sites, BTreeMap::new())
}
