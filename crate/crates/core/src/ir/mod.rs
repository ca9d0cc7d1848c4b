//! Normalized contract view built from the compiler's compact AST.
//!
//! Every detector matches against [`ContractIR`]. Statement facts are kept in
//! linear source order per function: `if` and loop bodies are flattened
//! depth-first, so "after" and "before" in the detectors mean statement index
//! order inside one function body.

mod build;
mod compile;
mod expr;
mod imports;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use build::build_ir;
pub use compile::{compile_to_ast, load_ast_snapshot, pragma_requirement, version_satisfies};
pub(crate) use compile::{diagnostics, run_standard_json, standard_json_input};
pub use imports::{collect_sources, Remapping};

#[derive(Debug, thiserror::Error)]
pub enum IrError {
    #[error("solidity compiler not found at `{0}`")]
    CompilerNotFound(String),
    #[error("compilation failed:\n{}", render_diagnostics(.0))]
    CompileFailed(Vec<Diagnostic>),
    #[error("version mismatch: source requires `{required}`, compiler/hint is `{available}`")]
    VersionMismatch { required: String, available: String },
    #[error("malformed AST at `{0}`")]
    MalformedAst(String),
    #[error("source file `{0}` referenced by the snapshot could not be found")]
    SourceMissing(String),
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.formatted.clone().unwrap_or_else(|| d.message.clone())).collect::<Vec<_>>().join("\n")
}

/// A compiler diagnostic, as reported in the standard-JSON `errors` array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: String,
    pub message: String,
    pub formatted: Option<String>,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == "error"
    }
}

/// One compiled source file together with its compact AST.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    /// Location of the Solidity file on disk.
    pub path: PathBuf,
    /// Name under which the compiler saw the file (the AST's `absolutePath`).
    pub source_name: String,
    /// Version requirement declared by the file's pragma, e.g. `0.8.29`.
    pub solidity_version: String,
    /// Root `SourceUnit` node.
    pub ast: serde_json::Value,
    pub raw_source: String,
    /// Complete standard-JSON output; persisted verbatim as a snapshot.
    pub compiler_output: serde_json::Value,
    /// Non-error diagnostics produced while compiling.
    pub warnings: Vec<Diagnostic>,
}

impl SourceUnit {
    /// Standard-JSON output text suitable for [`load_ast_snapshot`].
    pub fn snapshot_json(&self) -> String {
        let mut text = serde_json::to_string(&self.compiler_output).expect("json value serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    Contract,
    Abstract,
    Interface,
    Library,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Function,
    Receive,
    Fallback,
    Constructor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    External,
    Public,
    Internal,
    Private,
}

impl Visibility {
    pub fn is_callable_externally(self) -> bool {
        matches!(self, Visibility::External | Visibility::Public)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub type_string: String,
    pub is_constant: bool,
    /// `mapping(address => ...)`; writes to one count as token bookkeeping.
    pub address_keyed_mapping: bool,
}

impl StateVar {
    pub fn is_address(&self) -> bool {
        self.type_string == "address" || self.type_string == "address payable"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub type_string: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SrcLocation {
    pub file: String,
    /// 1-based.
    pub line: u32,
    /// 1-based, in bytes.
    pub column: u32,
    pub start: usize,
    pub length: usize,
}

impl SrcLocation {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

impl std::fmt::Display for SrcLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallMechanism {
    LowLevelCall,
    Send,
    Transfer,
    ExternalFunctionCall,
    Delegatecall,
    Selfdestruct,
}

impl CallMechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            CallMechanism::LowLevelCall => "call",
            CallMechanism::Send => "send",
            CallMechanism::Transfer => "transfer",
            CallMechanism::ExternalFunctionCall => "external-function-call",
            CallMechanism::Delegatecall => "delegatecall",
            CallMechanism::Selfdestruct => "selfdestruct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCallFact {
    pub mechanism: CallMechanism,
    pub carries_value: bool,
    pub gas_capped_2300: bool,
    /// Identifiers appearing in the transferred-value expression.
    pub value_mentions: BTreeSet<String>,
    /// Identifiers appearing in the callee or recipient expression.
    pub target_mentions: BTreeSet<String>,
}

impl ExternalCallFact {
    pub(crate) fn new(mechanism: CallMechanism, carries_value: bool) -> Self {
        ExternalCallFact {
            mechanism,
            carries_value,
            gas_capped_2300: matches!(mechanism, CallMechanism::Send | CallMechanism::Transfer),
            value_mentions: BTreeSet::new(),
            target_mentions: BTreeSet::new(),
        }
    }

    /// True when the only recipient is the caller itself.
    pub fn targets_only_sender(&self) -> bool {
        self.target_mentions.len() == 1 && self.target_mentions.contains("msg.sender")
    }

    /// Whether control can reach foreign code that might call back.
    pub fn can_reenter(&self) -> bool {
        self.mechanism != CallMechanism::Selfdestruct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardKind {
    Require,
    Assert,
    IfRevert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardFact {
    pub kind: GuardKind,
    /// Identifiers, `msg.*`/`tx.*`/`block.*` members and literal values found
    /// in the condition.
    pub condition_mentions: BTreeSet<String>,
    /// `Some(v)` when the condition is the boolean literal `v`.
    pub is_constant_condition: Option<bool>,
    /// Symbols the guard proves nonzero on the non-reverting path.
    pub nonzero_symbols: BTreeSet<String>,
}

impl GuardFact {
    pub fn mentions(&self, symbol: &str) -> bool {
        self.condition_mentions.contains(symbol)
    }

    pub fn mentions_sender(&self) -> bool {
        self.mentions("msg.sender")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Div,
    Mod,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandKind {
    NonzeroLiteral,
    ZeroLiteral,
    Parameter,
    StateVar,
    Expression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArithFact {
    pub op: ArithOp,
    /// Classification of the right-hand operand.
    pub denominator_kind: OperandKind,
    pub denominator_symbol: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSymbol {
    BlockTimestamp,
    BlockNumber,
    BlockPrevrandao,
    BlockDifficulty,
    BlockCoinbase,
    BlockBasefee,
    BlockhashCall,
}

impl EnvSymbol {
    pub fn from_block_member(member: &str) -> Option<EnvSymbol> {
        Some(match member {
            "timestamp" => EnvSymbol::BlockTimestamp,
            "number" => EnvSymbol::BlockNumber,
            "prevrandao" => EnvSymbol::BlockPrevrandao,
            "difficulty" => EnvSymbol::BlockDifficulty,
            "coinbase" => EnvSymbol::BlockCoinbase,
            "basefee" => EnvSymbol::BlockBasefee,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvSymbol::BlockTimestamp => "block.timestamp",
            EnvSymbol::BlockNumber => "block.number",
            EnvSymbol::BlockPrevrandao => "block.prevrandao",
            EnvSymbol::BlockDifficulty => "block.difficulty",
            EnvSymbol::BlockCoinbase => "block.coinbase",
            EnvSymbol::BlockBasefee => "block.basefee",
            EnvSymbol::BlockhashCall => "blockhash()",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementFact {
    pub index: usize,
    pub src_location: SrcLocation,
    pub reads_state: BTreeSet<String>,
    pub writes_state: BTreeSet<String>,
    pub external_calls: Vec<ExternalCallFact>,
    pub env_reads: BTreeSet<EnvSymbol>,
    pub guards: Vec<GuardFact>,
    pub arithmetic: Vec<ArithFact>,
    /// Identifiers used to index arrays (mappings excluded).
    pub index_mentions: BTreeSet<String>,
    /// Identifiers appearing in a loop condition.
    pub loop_bound_mentions: BTreeSet<String>,
    /// Assembly, try/catch and other constructs we do not model.
    pub opaque: bool,
}

impl StatementFact {
    pub(crate) fn empty(index: usize, src_location: SrcLocation) -> Self {
        StatementFact {
            index,
            src_location,
            reads_state: BTreeSet::new(),
            writes_state: BTreeSet::new(),
            external_calls: Vec::new(),
            env_reads: BTreeSet::new(),
            guards: Vec::new(),
            arithmetic: Vec::new(),
            index_mentions: BTreeSet::new(),
            loop_bound_mentions: BTreeSet::new(),
            opaque: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionIR {
    pub name: String,
    pub kind: FunctionKind,
    pub visibility: Visibility,
    pub is_payable: bool,
    pub is_view: bool,
    pub modifiers_applied: Vec<String>,
    pub params: Vec<Param>,
    pub body: Vec<StatementFact>,
    /// Guards contributed by the applied modifiers, evaluated before `body`.
    pub modifier_guards: Vec<GuardFact>,
    pub location: SrcLocation,
}

impl FunctionIR {
    pub fn signature(&self) -> String {
        let types: Vec<&str> = self.params.iter().map(|p| p.type_string.as_str()).collect();
        format!("{}({})", self.name, types.join(","))
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }

    /// Modifier guards followed by the guards of every statement strictly
    /// before `index`.
    pub fn guards_before(&self, index: usize) -> impl Iterator<Item = &GuardFact> {
        self.modifier_guards
            .iter()
            .chain(self.body.iter().take_while(move |s| s.index < index).flat_map(|s| s.guards.iter()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierIR {
    pub name: String,
    pub params: Vec<Param>,
    /// Statements preceding the placeholder `_`.
    pub body: Vec<StatementFact>,
    pub location: SrcLocation,
}

impl ModifierIR {
    pub fn guards(&self) -> impl Iterator<Item = &GuardFact> {
        self.body.iter().flat_map(|s| s.guards.iter())
    }

    pub fn guards_sender(&self) -> bool {
        self.guards().any(GuardFact::mentions_sender)
    }
}

/// A construct the IR builder could not model. Recorded, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsupportedConstruct {
    pub node_type: String,
    pub location: SrcLocation,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractIR {
    pub name: String,
    pub kind: ContractKind,
    pub file: String,
    pub state_vars: Vec<StateVar>,
    pub functions: Vec<FunctionIR>,
    pub modifiers: Vec<ModifierIR>,
    pub has_receive: bool,
    pub has_payable_fallback: bool,
    pub constructor_params: Vec<Param>,
    pub constructor_payable: bool,
    pub unsupported: Vec<UnsupportedConstruct>,
}

impl ContractIR {
    pub fn state_var(&self, name: &str) -> Option<&StateVar> {
        self.state_vars.iter().find(|v| v.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionIR> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn modifier(&self, name: &str) -> Option<&ModifierIR> {
        self.modifiers.iter().find(|m| m.name == name)
    }

    /// The receive function, or a payable fallback when there is none.
    pub fn value_callback(&self) -> Option<&FunctionIR> {
        self.functions
            .iter()
            .find(|f| f.kind == FunctionKind::Receive)
            .or_else(|| self.functions.iter().find(|f| f.kind == FunctionKind::Fallback && f.is_payable))
    }

    /// Reason the contract counts as handling Ether or tokens, if it does:
    /// a payable entry point, a write to an address-keyed mapping, or a
    /// value-carrying external call.
    pub fn value_handling(&self) -> Option<&'static str> {
        if self.has_receive || self.functions.iter().any(|f| f.is_payable) {
            return Some("payable-entry");
        }
        let keyed: BTreeSet<&str> =
            self.state_vars.iter().filter(|v| v.address_keyed_mapping).map(|v| v.name.as_str()).collect();
        let statements = || self.functions.iter().flat_map(|f| f.body.iter());
        if statements().any(|s| s.writes_state.iter().any(|w| keyed.contains(w.as_str()))) {
            return Some("address-keyed-mapping-write");
        }
        if statements().any(|s| s.external_calls.iter().any(|c| c.carries_value)) {
            return Some("value-carrying-call");
        }
        None
    }

    pub fn handles_value(&self) -> bool {
        self.value_handling().is_some()
    }

    /// Constructor signature as written in Solidity, e.g. `constructor(uint256 limit_)`.
    pub fn constructor_signature(&self) -> String {
        let params: Vec<String> =
            self.constructor_params.iter().map(|p| format!("{} {}", p.type_string, p.name)).collect();
        let payable = if self.constructor_payable { " payable" } else { "" };
        format!("constructor({}){}", params.join(", "), payable)
    }

    /// Canonical serialization used for determinism checks.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("ContractIR serializes")
    }
}

/// Checks the structural invariants of a built contract; returns one message
/// per violation.
pub fn check_invariants(ir: &ContractIR, source_len: usize) -> Vec<String> {
    let mut problems = Vec::new();
    let names: BTreeSet<&str> = ir.state_vars.iter().map(|v| v.name.as_str()).collect();
    let mut signatures = BTreeMap::new();
    for f in &ir.functions {
        if let Some(prev) = signatures.insert(f.signature(), f.location.start) {
            problems.push(format!("duplicate function signature {} (first at byte {prev})", f.signature()));
        }
        if f.kind == FunctionKind::Receive && !f.params.is_empty() {
            problems.push(format!("receive function in {} declares parameters", ir.name));
        }
        for (i, s) in f.body.iter().enumerate() {
            if s.index != i {
                problems.push(format!("{}: statement {} carries index {}", f.name, i, s.index));
            }
            for n in s.reads_state.iter().chain(s.writes_state.iter()) {
                if !names.contains(n.as_str()) {
                    problems.push(format!("{}: statement {} names unknown state var {n}", f.name, s.index));
                }
            }
            if s.src_location.end() > source_len {
                problems.push(format!("{}: statement {} lies outside the source", f.name, s.index));
            }
        }
    }
    let has_receive_fn = ir.functions.iter().any(|f| f.kind == FunctionKind::Receive);
    if has_receive_fn != ir.has_receive {
        problems.push("has_receive disagrees with the function list".to_string());
    }
    problems
}
