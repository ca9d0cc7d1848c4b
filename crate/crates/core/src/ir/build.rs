use std::collections::HashMap;

use serde_json::Value;

use super::expr::{guard, mentions, node_type, Collector, Scope, StateVarInfo};
use super::{
    ContractIR, ContractKind, FunctionIR, FunctionKind, GuardKind, IrError, ModifierIR, Param, SourceUnit, SrcLocation,
    StateVar, StatementFact, UnsupportedConstruct, Visibility,
};

/// Maps compiler byte offsets to line and column numbers.
struct Locator<'a> {
    file: &'a str,
    len: usize,
    line_starts: Vec<usize>,
}

impl<'a> Locator<'a> {
    fn new(file: &'a str, source: &str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(source.bytes().enumerate().filter(|(_, b)| *b == b'\n').map(|(i, _)| i + 1));
        Locator { file, len: source.len(), line_starts }
    }

    fn at(&self, node: &Value) -> Result<SrcLocation, IrError> {
        let src = node
            .get("src")
            .and_then(Value::as_str)
            .ok_or_else(|| IrError::MalformedAst(format!("{}.src", node_type(node).unwrap_or("node"))))?;
        let mut parts = src.split(':').map(str::parse::<usize>);
        let (Some(Ok(start)), Some(Ok(length))) = (parts.next(), parts.next()) else {
            return Err(IrError::MalformedAst(format!("src `{src}`")));
        };
        if start + length > self.len {
            return Err(IrError::MalformedAst(format!("src `{src}` lies outside the {}-byte source", self.len)));
        }
        let line = self.line_starts.partition_point(|&s| s <= start);
        let column = start - self.line_starts[line - 1] + 1;
        Ok(SrcLocation { file: self.file.to_string(), line: line as u32, column: column as u32, start, length })
    }
}

fn str_field<'v>(node: &'v Value, key: &str) -> &'v str {
    node.get(key).and_then(Value::as_str).unwrap_or_default()
}

fn array<'v>(node: &'v Value, key: &str) -> &'v [Value] {
    node.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or_default()
}

fn type_string(node: &Value) -> String {
    node.get("typeDescriptions")
        .and_then(|t| t.get("typeString"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn params_of(list: &Value) -> Vec<Param> {
    array(list, "parameters")
        .iter()
        .map(|p| Param { name: str_field(p, "name").to_string(), type_string: type_string(p) })
        .collect()
}

fn param_ids(list: &Value) -> HashMap<i64, String> {
    array(list, "parameters")
        .iter()
        .filter_map(|p| Some((p.get("id")?.as_i64()?, str_field(p, "name").to_string())))
        .collect()
}

fn is_revert_call(stmt: &Value) -> bool {
    match node_type(stmt) {
        Some("RevertStatement") => true,
        Some("ExpressionStatement") => {
            let e = &stmt["expression"];
            node_type(e) == Some("FunctionCall")
                && node_type(&e["expression"]) == Some("Identifier")
                && str_field(&e["expression"], "name") == "revert"
        }
        _ => false,
    }
}

/// A branch whose last statement unconditionally reverts.
fn is_revert_only(body: &Value) -> bool {
    match node_type(body) {
        Some("Block") | Some("UncheckedBlock") => array(body, "statements").last().is_some_and(is_revert_call),
        _ => is_revert_call(body),
    }
}

struct BodyWalker<'s, 'a> {
    scope: &'s Scope<'a>,
    locator: &'s Locator<'s>,
    out: Vec<StatementFact>,
    unsupported: &'s mut Vec<UnsupportedConstruct>,
    /// Set once a modifier's `_` has been reached.
    stopped: bool,
}

impl BodyWalker<'_, '_> {
    fn facts(&self, loc: SrcLocation, nodes: &[&Value]) -> StatementFact {
        let mut c = Collector { scope: self.scope, fact: StatementFact::empty(self.out.len(), loc) };
        for n in nodes {
            c.walk(n);
        }
        c.fact
    }

    fn statement(&mut self, node: &Value) -> Result<(), IrError> {
        if self.stopped {
            return Ok(());
        }
        match node_type(node) {
            Some("Block") | Some("UncheckedBlock") => {
                for s in array(node, "statements") {
                    self.statement(s)?;
                }
            }
            Some("PlaceholderStatement") => self.stopped = true,
            Some("IfStatement") => {
                let cond = &node["condition"];
                let mut fact = self.facts(self.locator.at(cond)?, &[cond]);
                if is_revert_only(&node["trueBody"]) {
                    fact.guards.push(guard(GuardKind::IfRevert, cond));
                }
                self.out.push(fact);
                self.statement(&node["trueBody"])?;
                if let Some(other) = node.get("falseBody").filter(|v| !v.is_null()) {
                    self.statement(other)?;
                }
            }
            Some("ForStatement") => {
                let header: Vec<&Value> = ["initializationExpression", "condition", "loopExpression"]
                    .iter()
                    .filter_map(|k| node.get(*k).filter(|v| !v.is_null()))
                    .collect();
                let mut fact = self.facts(self.locator.at(node)?, &header);
                fact.src_location.length = 0;
                if let Some(cond) = node.get("condition").filter(|v| !v.is_null()) {
                    fact.loop_bound_mentions = mentions(cond);
                    fact.src_location = self.locator.at(cond)?;
                }
                self.out.push(fact);
                self.statement(&node["body"])?;
            }
            Some("WhileStatement") => {
                self.loop_header(&node["condition"])?;
                self.statement(&node["body"])?;
            }
            Some("DoWhileStatement") => {
                self.statement(&node["body"])?;
                self.loop_header(&node["condition"])?;
            }
            Some(nt @ ("InlineAssembly" | "TryStatement")) => {
                let loc = self.locator.at(node)?;
                let mut fact = StatementFact::empty(self.out.len(), loc.clone());
                fact.opaque = true;
                self.out.push(fact);
                let reason = if nt == "InlineAssembly" {
                    "inline assembly is not modelled"
                } else {
                    "try/catch is not modelled"
                };
                self.unsupported.push(UnsupportedConstruct {
                    node_type: nt.to_string(),
                    location: loc,
                    reason: reason.into(),
                });
            }
            _ => {
                let fact = self.facts(self.locator.at(node)?, &[node]);
                self.out.push(fact);
            }
        }
        Ok(())
    }

    fn loop_header(&mut self, cond: &Value) -> Result<(), IrError> {
        let mut fact = self.facts(self.locator.at(cond)?, &[cond]);
        fact.loop_bound_mentions = mentions(cond);
        self.out.push(fact);
        Ok(())
    }
}

fn walk_body(
    body: &Value,
    scope: &Scope,
    locator: &Locator,
    unsupported: &mut Vec<UnsupportedConstruct>,
) -> Result<Vec<StatementFact>, IrError> {
    let mut w = BodyWalker { scope, locator, out: Vec::new(), unsupported, stopped: false };
    if !body.is_null() {
        w.statement(body)?;
    }
    Ok(w.out)
}

fn constant_zero(decl: &Value) -> Option<bool> {
    if decl.get("constant").and_then(Value::as_bool) != Some(true) {
        return None;
    }
    let id = decl.get("value")?.get("typeDescriptions")?.get("typeIdentifier")?.as_str()?;
    id.starts_with("t_rational_").then(|| id == "t_rational_0_by_1")
}

fn contract_kind(node: &Value) -> ContractKind {
    match str_field(node, "contractKind") {
        "interface" => ContractKind::Interface,
        "library" => ContractKind::Library,
        _ if node.get("abstract").and_then(Value::as_bool) == Some(true) => ContractKind::Abstract,
        _ => ContractKind::Contract,
    }
}

fn visibility(node: &Value) -> Visibility {
    match str_field(node, "visibility") {
        "external" => Visibility::External,
        "internal" => Visibility::Internal,
        "private" => Visibility::Private,
        _ => Visibility::Public,
    }
}

fn function_kind(node: &Value) -> FunctionKind {
    match str_field(node, "kind") {
        "receive" => FunctionKind::Receive,
        "fallback" => FunctionKind::Fallback,
        "constructor" => FunctionKind::Constructor,
        _ => FunctionKind::Function,
    }
}

/// Builds one [`ContractIR`] per deployable contract in the unit. Direct base
/// contracts defined in the same unit are merged in; anything deeper is
/// recorded as unsupported.
pub fn build_ir(unit: &SourceUnit) -> Result<Vec<ContractIR>, IrError> {
    if node_type(&unit.ast) != Some("SourceUnit") {
        return Err(IrError::MalformedAst("nodeType (expected SourceUnit)".into()));
    }
    let locator = Locator::new(&unit.source_name, &unit.raw_source);
    let definitions: Vec<&Value> =
        array(&unit.ast, "nodes").iter().filter(|n| node_type(n) == Some("ContractDefinition")).collect();
    let by_id: HashMap<i64, &Value> = definitions.iter().filter_map(|d| Some((d.get("id")?.as_i64()?, *d))).collect();

    let mut contracts = Vec::new();
    for def in &definitions {
        if contract_kind(def) != ContractKind::Contract {
            continue;
        }
        contracts.push(build_contract(def, &by_id, &locator)?);
    }
    Ok(contracts)
}

fn build_contract(def: &Value, by_id: &HashMap<i64, &Value>, locator: &Locator) -> Result<ContractIR, IrError> {
    let name = str_field(def, "name").to_string();
    let mut unsupported = Vec::new();

    // Linearized members: direct bases first, then the contract itself.
    let mut layers: Vec<&Value> = Vec::new();
    for spec in array(def, "baseContracts") {
        let base_name = &spec["baseName"];
        let label = base_name.get("name").and_then(Value::as_str).unwrap_or("?");
        match base_name.get("referencedDeclaration").and_then(Value::as_i64).and_then(|id| by_id.get(&id)) {
            Some(base) => {
                if !array(base, "baseContracts").is_empty() {
                    unsupported.push(UnsupportedConstruct {
                        node_type: "InheritanceSpecifier".into(),
                        location: locator.at(spec)?,
                        reason: format!("inheritance deeper than one level through `{label}`"),
                    });
                }
                layers.push(base);
            }
            None => unsupported.push(UnsupportedConstruct {
                node_type: "InheritanceSpecifier".into(),
                location: locator.at(spec)?,
                reason: format!("base contract `{label}` is not defined in this source unit"),
            }),
        }
    }
    layers.push(def);

    let mut state_vars: Vec<StateVar> = Vec::new();
    let mut var_info: HashMap<i64, StateVarInfo> = HashMap::new();
    let mut modifier_nodes: Vec<&Value> = Vec::new();
    let mut function_nodes: Vec<(String, &Value)> = Vec::new();

    for layer in &layers {
        for member in array(layer, "nodes") {
            match node_type(member) {
                Some("VariableDeclaration") => {
                    let vname = str_field(member, "name").to_string();
                    let type_name = &member["typeName"];
                    let address_keyed_mapping = node_type(type_name) == Some("Mapping")
                        && type_string(&type_name["keyType"]).starts_with("address");
                    if let Some(id) = member.get("id").and_then(Value::as_i64) {
                        var_info.insert(id, StateVarInfo { name: vname.clone(), constant_zero: constant_zero(member) });
                    }
                    state_vars.push(StateVar {
                        name: vname,
                        type_string: type_string(member),
                        is_constant: member.get("constant").and_then(Value::as_bool).unwrap_or(false),
                        address_keyed_mapping,
                    });
                }
                Some("ModifierDefinition") => {
                    let mname = str_field(member, "name");
                    modifier_nodes.retain(|m| str_field(m, "name") != mname);
                    modifier_nodes.push(member);
                }
                Some("FunctionDefinition") => {
                    if member.get("implemented").and_then(Value::as_bool) == Some(false) {
                        continue;
                    }
                    let key = signature_key(member);
                    match function_nodes.iter_mut().find(|(k, _)| *k == key) {
                        Some(slot) => slot.1 = member,
                        None => function_nodes.push((key, member)),
                    }
                }
                _ => {}
            }
        }
    }

    let mut modifiers = Vec::new();
    for m in &modifier_nodes {
        let scope = Scope { state_vars: &var_info, params: param_ids(&m["parameters"]) };
        modifiers.push(ModifierIR {
            name: str_field(m, "name").to_string(),
            params: params_of(&m["parameters"]),
            body: walk_body(&m["body"], &scope, locator, &mut unsupported)?,
            location: locator.at(m)?,
        });
    }

    let mut functions = Vec::new();
    for (_, f) in &function_nodes {
        let scope = Scope { state_vars: &var_info, params: param_ids(&f["parameters"]) };
        let kind = function_kind(f);
        let fname = match kind {
            FunctionKind::Function => str_field(f, "name").to_string(),
            FunctionKind::Receive => "receive".to_string(),
            FunctionKind::Fallback => "fallback".to_string(),
            FunctionKind::Constructor => "constructor".to_string(),
        };
        let modifiers_applied: Vec<String> = array(f, "modifiers")
            .iter()
            .filter(|m| str_field(m, "kind") != "baseConstructorSpecifier")
            .map(|m| str_field(&m["modifierName"], "name").to_string())
            .filter(|n| modifiers.iter().any(|d: &ModifierIR| d.name == *n))
            .collect();
        let modifier_guards = modifiers_applied
            .iter()
            .filter_map(|n| modifiers.iter().find(|d| d.name == *n))
            .flat_map(|d| d.guards().cloned())
            .collect();
        let mutability = str_field(f, "stateMutability");
        functions.push(FunctionIR {
            name: fname,
            kind,
            visibility: visibility(f),
            is_payable: mutability == "payable",
            is_view: matches!(mutability, "view" | "pure"),
            modifiers_applied,
            params: params_of(&f["parameters"]),
            body: walk_body(&f["body"], &scope, locator, &mut unsupported)?,
            modifier_guards,
            location: locator.at(f)?,
        });
    }

    let constructor = functions.iter().find(|f| f.kind == FunctionKind::Constructor);
    Ok(ContractIR {
        name,
        kind: contract_kind(def),
        file: locator.file.to_string(),
        state_vars,
        has_receive: functions.iter().any(|f| f.kind == FunctionKind::Receive),
        has_payable_fallback: functions.iter().any(|f| f.kind == FunctionKind::Fallback && f.is_payable),
        constructor_params: constructor.map(|c| c.params.clone()).unwrap_or_default(),
        constructor_payable: constructor.is_some_and(|c| c.is_payable),
        functions,
        modifiers,
        unsupported,
    })
}

fn signature_key(f: &Value) -> String {
    let types: Vec<String> = array(&f["parameters"], "parameters").iter().map(type_string).collect();
    format!("{}:{}({})", str_field(f, "kind"), str_field(f, "name"), types.join(","))
}
