//! Expression-level fact extraction.

use std::collections::{BTreeSet, HashMap};

use serde_json::Value;

use super::{
    ArithFact, ArithOp, CallMechanism, EnvSymbol, ExternalCallFact, GuardFact, GuardKind, OperandKind, StatementFact,
};

pub(crate) fn node_type(node: &Value) -> Option<&str> {
    node.get("nodeType").and_then(Value::as_str)
}

fn str_field<'a>(node: &'a Value, key: &str) -> &'a str {
    node.get(key).and_then(Value::as_str).unwrap_or_default()
}

fn type_string(node: &Value) -> &str {
    node.get("typeDescriptions").and_then(|t| t.get("typeString")).and_then(Value::as_str).unwrap_or_default()
}

fn type_identifier(node: &Value) -> &str {
    node.get("typeDescriptions").and_then(|t| t.get("typeIdentifier")).and_then(Value::as_str).unwrap_or_default()
}

fn referenced(node: &Value) -> Option<i64> {
    node.get("referencedDeclaration").and_then(Value::as_i64)
}

/// Global symbols (`msg`, `block`, `require`, ...) carry negative ids. Recent
/// compilers print them as wrapped unsigned 32-bit values.
fn is_builtin(node: &Value) -> bool {
    referenced(node).is_none_or(|id| id < 0 || id > i64::from(i32::MAX))
}

fn builtin_identifier(node: &Value) -> Option<&str> {
    (node_type(node) == Some("Identifier") && is_builtin(node)).then(|| str_field(node, "name"))
}

fn unwrap_parens(node: &Value) -> &Value {
    if node_type(node) == Some("TupleExpression") {
        if let Some([single]) = node.get("components").and_then(Value::as_array).map(Vec::as_slice) {
            return unwrap_parens(single);
        }
    }
    node
}

/// `Some(true)` for a compile-time zero, `Some(false)` for any other
/// compile-time number, `None` for everything else.
fn rational_is_zero(node: &Value) -> Option<bool> {
    let id = type_identifier(node);
    id.starts_with("t_rational_").then(|| id == "t_rational_0_by_1")
}

#[derive(Debug, Clone)]
pub(crate) struct StateVarInfo {
    pub name: String,
    /// For constants initialised with a number literal: whether it is zero.
    pub constant_zero: Option<bool>,
}

/// Declarations visible while walking one function or modifier.
pub(crate) struct Scope<'a> {
    pub state_vars: &'a HashMap<i64, StateVarInfo>,
    pub params: HashMap<i64, String>,
}

impl Scope<'_> {
    fn state_var(&self, node: &Value) -> Option<&StateVarInfo> {
        if node_type(node) != Some("Identifier") {
            return None;
        }
        referenced(node).and_then(|id| self.state_vars.get(&id))
    }

    fn param(&self, node: &Value) -> Option<&str> {
        if node_type(node) != Some("Identifier") {
            return None;
        }
        referenced(node).and_then(|id| self.params.get(&id)).map(String::as_str)
    }
}

/// Identifiers, environment members and literal values inside `node`.
pub(crate) fn mentions(node: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_mentions(node, &mut out);
    out
}

fn collect_mentions(node: &Value, out: &mut BTreeSet<String>) {
    match node_type(node) {
        Some("Identifier") => {
            out.insert(str_field(node, "name").to_string());
        }
        Some("MemberAccess") => {
            let base = &node["expression"];
            if let Some(global @ ("msg" | "tx" | "block")) = builtin_identifier(base) {
                out.insert(format!("{global}.{}", str_field(node, "memberName")));
            } else {
                collect_mentions(base, out);
            }
        }
        Some("Literal") => {
            if let Some(v) = node.get("value").and_then(Value::as_str) {
                out.insert(v.to_string());
            }
        }
        _ => for_each_child(node, |c| collect_mentions(c, out)),
    }
}

pub(crate) fn for_each_child(node: &Value, mut f: impl FnMut(&Value)) {
    let Some(obj) = node.as_object() else { return };
    for (key, value) in obj {
        if key == "typeDescriptions" || key == "typeName" {
            continue;
        }
        match value {
            Value::Object(_) if node_type(value).is_some() => f(value),
            Value::Array(items) => items.iter().filter(|v| node_type(v).is_some()).for_each(&mut f),
            _ => {}
        }
    }
}

fn ident_name(node: &Value) -> Option<&str> {
    let node = unwrap_parens(node);
    (node_type(node) == Some("Identifier")).then(|| str_field(node, "name"))
}

/// Symbols that are nonzero whenever `cond` evaluates to true.
fn nonzero_if_true(cond: &Value, out: &mut BTreeSet<String>) {
    let cond = unwrap_parens(cond);
    match node_type(cond) {
        Some("BinaryOperation") => {
            let (l, r) = (&cond["leftExpression"], &cond["rightExpression"]);
            let zero = |n: &Value| rational_is_zero(unwrap_parens(n)) == Some(true);
            let nonzero = |n: &Value| rational_is_zero(unwrap_parens(n)) == Some(false);
            let lit = |n: &Value| rational_is_zero(unwrap_parens(n)).is_some();
            let hit = match str_field(cond, "operator") {
                "&&" => {
                    nonzero_if_true(l, out);
                    nonzero_if_true(r, out);
                    None
                }
                "!=" if zero(r) => ident_name(l),
                "!=" if zero(l) => ident_name(r),
                ">" if lit(r) => ident_name(l),
                "<" if lit(l) => ident_name(r),
                ">=" if nonzero(r) => ident_name(l),
                "<=" if nonzero(l) => ident_name(r),
                _ => None,
            };
            if let Some(name) = hit {
                out.insert(name.to_string());
            }
        }
        Some("UnaryOperation") if str_field(cond, "operator") == "!" => nonzero_if_false(&cond["subExpression"], out),
        _ => {}
    }
}

/// Symbols that are nonzero whenever `cond` evaluates to false.
fn nonzero_if_false(cond: &Value, out: &mut BTreeSet<String>) {
    let cond = unwrap_parens(cond);
    match node_type(cond) {
        Some("BinaryOperation") => {
            let (l, r) = (&cond["leftExpression"], &cond["rightExpression"]);
            let zero = |n: &Value| rational_is_zero(unwrap_parens(n)) == Some(true);
            let nonzero = |n: &Value| rational_is_zero(unwrap_parens(n)) == Some(false);
            let hit = match str_field(cond, "operator") {
                "||" => {
                    nonzero_if_false(l, out);
                    nonzero_if_false(r, out);
                    None
                }
                "==" if zero(r) => ident_name(l),
                "==" if zero(l) => ident_name(r),
                "<=" if zero(r) => ident_name(l),
                ">=" if zero(l) => ident_name(r),
                "<" if nonzero(r) => ident_name(l),
                ">" if nonzero(l) => ident_name(r),
                _ => None,
            };
            if let Some(name) = hit {
                out.insert(name.to_string());
            }
        }
        Some("UnaryOperation") if str_field(cond, "operator") == "!" => nonzero_if_true(&cond["subExpression"], out),
        _ => {}
    }
}

pub(crate) fn guard(kind: GuardKind, cond: &Value) -> GuardFact {
    let cond = unwrap_parens(cond);
    let is_constant_condition = (node_type(cond) == Some("Literal") && str_field(cond, "kind") == "bool")
        .then(|| str_field(cond, "value") == "true");
    let mut nonzero_symbols = BTreeSet::new();
    match kind {
        GuardKind::Require | GuardKind::Assert => nonzero_if_true(cond, &mut nonzero_symbols),
        GuardKind::IfRevert => nonzero_if_false(cond, &mut nonzero_symbols),
    }
    GuardFact { kind, condition_mentions: mentions(cond), is_constant_condition, nonzero_symbols }
}

/// Accumulates facts for one statement.
pub(crate) struct Collector<'s, 'a> {
    pub scope: &'s Scope<'a>,
    pub fact: StatementFact,
}

impl Collector<'_, '_> {
    fn classify(&self, operand: &Value) -> (OperandKind, Option<String>) {
        let operand = unwrap_parens(operand);
        if let Some(zero) = rational_is_zero(operand) {
            return (if zero { OperandKind::ZeroLiteral } else { OperandKind::NonzeroLiteral }, None);
        }
        if let Some(var) = self.scope.state_var(operand) {
            return match var.constant_zero {
                Some(true) => (OperandKind::ZeroLiteral, None),
                Some(false) => (OperandKind::NonzeroLiteral, None),
                None => (OperandKind::StateVar, Some(var.name.clone())),
            };
        }
        if let Some(p) = self.scope.param(operand) {
            return (OperandKind::Parameter, Some(p.to_string()));
        }
        (OperandKind::Expression, None)
    }

    fn arith(&mut self, op: &str, rhs: &Value) {
        let op = match op {
            "/" => ArithOp::Div,
            "%" => ArithOp::Mod,
            "+" | "-" | "*" | "**" => ArithOp::Other,
            _ => return,
        };
        let (denominator_kind, denominator_symbol) = self.classify(rhs);
        self.fact.arithmetic.push(ArithFact { op, denominator_kind, denominator_symbol });
    }

    pub fn walk(&mut self, node: &Value) {
        match node_type(node) {
            Some("Identifier") => {
                if let Some(var) = self.scope.state_var(node) {
                    self.fact.reads_state.insert(var.name.clone());
                } else if builtin_identifier(node) == Some("now") {
                    self.fact.env_reads.insert(EnvSymbol::BlockTimestamp);
                }
            }
            Some("MemberAccess") => {
                let base = &node["expression"];
                if builtin_identifier(base) == Some("block") {
                    if let Some(sym) = EnvSymbol::from_block_member(str_field(node, "memberName")) {
                        self.fact.env_reads.insert(sym);
                    }
                }
                self.walk(base);
            }
            Some("Assignment") => {
                let op = str_field(node, "operator");
                self.walk_lvalue(&node["leftHandSide"], op != "=");
                self.walk(&node["rightHandSide"]);
                if op.len() >= 2 {
                    self.arith(&op[..op.len() - 1], &node["rightHandSide"]);
                }
            }
            Some("UnaryOperation") => match str_field(node, "operator") {
                "++" | "--" => self.walk_lvalue(&node["subExpression"], true),
                "delete" => self.walk_lvalue(&node["subExpression"], false),
                _ => self.walk(&node["subExpression"]),
            },
            Some("BinaryOperation") => {
                self.walk(&node["leftExpression"]);
                self.walk(&node["rightExpression"]);
                self.arith(str_field(node, "operator"), &node["rightExpression"]);
            }
            Some("IndexAccess") => {
                let base = &node["baseExpression"];
                self.walk(base);
                if let Some(index) = node.get("indexExpression").filter(|v| !v.is_null()) {
                    if type_identifier(base).starts_with("t_array") {
                        self.fact.index_mentions.extend(mentions(index));
                    }
                    self.walk(index);
                }
            }
            Some("FunctionCall") => self.call(node),
            _ => for_each_child(node, |c| self.walk(c)),
        }
    }

    fn walk_lvalue(&mut self, node: &Value, also_read: bool) {
        match node_type(node) {
            Some("Identifier") => {
                if let Some(var) = self.scope.state_var(node) {
                    self.fact.writes_state.insert(var.name.clone());
                    if also_read {
                        self.fact.reads_state.insert(var.name.clone());
                    }
                }
            }
            Some("IndexAccess") => {
                let base = &node["baseExpression"];
                self.walk_lvalue(base, also_read);
                if let Some(index) = node.get("indexExpression").filter(|v| !v.is_null()) {
                    if type_identifier(base).starts_with("t_array") {
                        self.fact.index_mentions.extend(mentions(index));
                    }
                    self.walk(index);
                }
            }
            Some("MemberAccess") => self.walk_lvalue(&node["expression"], also_read),
            Some("TupleExpression") => {
                if let Some(items) = node.get("components").and_then(Value::as_array) {
                    for item in items.iter().filter(|v| !v.is_null()) {
                        self.walk_lvalue(item, also_read);
                    }
                }
            }
            _ => self.walk(node),
        }
    }

    fn walk_args(&mut self, node: &Value) {
        if let Some(args) = node.get("arguments").and_then(Value::as_array) {
            for a in args {
                self.walk(a);
            }
        }
    }

    fn call(&mut self, node: &Value) {
        let kind = str_field(node, "kind");
        if kind == "typeConversion" || kind == "structConstructorCall" {
            self.walk_args(node);
            return;
        }
        let mut callee = &node["expression"];
        let mut value_option: Option<&Value> = None;
        if node_type(callee) == Some("FunctionCallOptions") {
            let names = callee.get("names").and_then(Value::as_array).cloned().unwrap_or_default();
            let options = callee.get("options").and_then(Value::as_array);
            if let Some(options) = options {
                for (name, opt) in names.iter().zip(options) {
                    if name.as_str() == Some("value") {
                        value_option = Some(opt);
                    }
                    self.walk(opt);
                }
            }
            callee = &callee["expression"];
        }
        let args = node.get("arguments").and_then(Value::as_array);
        let first_arg = args.and_then(|a| a.first());

        match node_type(callee) {
            Some("Identifier") if is_builtin(callee) => match str_field(callee, "name") {
                name @ ("require" | "assert") => {
                    if let Some(cond) = first_arg {
                        let kind = if name == "require" { GuardKind::Require } else { GuardKind::Assert };
                        self.fact.guards.push(guard(kind, cond));
                    }
                }
                "selfdestruct" | "suicide" => {
                    let mut fact = ExternalCallFact::new(CallMechanism::Selfdestruct, false);
                    if let Some(beneficiary) = first_arg {
                        fact.target_mentions = mentions(beneficiary);
                    }
                    self.fact.external_calls.push(fact);
                }
                "blockhash" => {
                    self.fact.env_reads.insert(EnvSymbol::BlockhashCall);
                }
                _ => {}
            },
            Some("MemberAccess") => {
                let base = &callee["expression"];
                let member = str_field(callee, "memberName");
                let on_address = type_string(base).starts_with("address");
                let mut push = |mechanism, carries_value: bool, value: Option<&Value>| {
                    let mut fact = ExternalCallFact::new(mechanism, carries_value);
                    fact.target_mentions = mentions(base);
                    if let Some(v) = value {
                        fact.value_mentions = mentions(v);
                    }
                    self.fact.external_calls.push(fact);
                };
                match member {
                    "transfer" if on_address => push(CallMechanism::Transfer, true, first_arg),
                    "send" if on_address => push(CallMechanism::Send, true, first_arg),
                    "call" if on_address => push(CallMechanism::LowLevelCall, value_option.is_some(), value_option),
                    "delegatecall" if on_address => push(CallMechanism::Delegatecall, false, None),
                    _ if type_identifier(callee).starts_with("t_function_external") => {
                        push(CallMechanism::ExternalFunctionCall, value_option.is_some(), value_option)
                    }
                    _ => {}
                }
                if matches!(member, "push" | "pop") && type_identifier(base).starts_with("t_array") {
                    self.walk_lvalue(base, true);
                } else {
                    self.walk(base);
                }
            }
            _ => self.walk(callee),
        }
        self.walk_args(node);
    }
}
