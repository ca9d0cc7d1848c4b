//! Stage 1: cheap prerequisite patterns, one detector per defect kind.
//!
//! A detector answers "could this defect be present at all?". Evidence gates
//! test generation; absence of evidence is reported as clean.

mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ir::{ContractIR, SrcLocation};

pub use rules::{
    detect_access_control, detect_block_env, detect_complex_fallback, detect_division_by_zero, detect_faulty_assert,
    detect_param_validation, detect_reentrancy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DefectKind {
    Reentrancy,
    ComplexFallback,
    AccessControl,
    BlockEnvDependency,
    InsufficientParamValidation,
    FaultyAssertRevert,
    DivisionByZero,
}

impl DefectKind {
    pub const ALL: [DefectKind; 7] = [
        DefectKind::Reentrancy,
        DefectKind::ComplexFallback,
        DefectKind::AccessControl,
        DefectKind::BlockEnvDependency,
        DefectKind::InsufficientParamValidation,
        DefectKind::FaultyAssertRevert,
        DefectKind::DivisionByZero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefectKind::Reentrancy => "Reentrancy",
            DefectKind::ComplexFallback => "ComplexFallback",
            DefectKind::AccessControl => "AccessControl",
            DefectKind::BlockEnvDependency => "BlockEnvDependency",
            DefectKind::InsufficientParamValidation => "InsufficientParamValidation",
            DefectKind::FaultyAssertRevert => "FaultyAssertRevert",
            DefectKind::DivisionByZero => "DivisionByZero",
        }
    }

    /// Directory-style identifier used for templates, tables and fixtures.
    pub fn id(self) -> &'static str {
        match self {
            DefectKind::Reentrancy => "reentrancy",
            DefectKind::ComplexFallback => "complex_fallback",
            DefectKind::AccessControl => "access_control",
            DefectKind::BlockEnvDependency => "block_env",
            DefectKind::InsufficientParamValidation => "param_validation",
            DefectKind::FaultyAssertRevert => "faulty_assert",
            DefectKind::DivisionByZero => "division_by_zero",
        }
    }

    /// One-paragraph description handed to the test generator.
    pub fn description(self) -> &'static str {
        match self {
            DefectKind::Reentrancy => {
                "Reentrancy: a function performs an external call and modifies contract state afterwards. \
                 A malicious callee may re-enter the function before the state update and repeat the withdrawal."
            }
            DefectKind::ComplexFallback => {
                "Complex fallback: the receive/fallback callback performs expensive work such as writing state. \
                 send and transfer forward only 2300 gas, so Ether sent through them always reverts."
            }
            DefectKind::AccessControl => {
                "Access control: a function containing a critical operation (selfdestruct, delegatecall, Ether \
                 transfer or owner change) can be called by any address because no access policy guards it."
            }
            DefectKind::BlockEnvDependency => {
                "Block environment dependency: contract logic reads block information such as block.timestamp, \
                 which the block producer can influence."
            }
            DefectKind::InsufficientParamValidation => {
                "Insufficient parameter validation: a caller-supplied parameter reaches a sensitive use (division, \
                 array index, transferred value, loop bound) without an earlier check."
            }
            DefectKind::FaultyAssertRevert => {
                "Faulty assert or revert: a guard is constant, or assert is used to validate caller input."
            }
            DefectKind::DivisionByZero => {
                "Division by zero: a division or modulo uses a denominator that may be zero at run time."
            }
        }
    }
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefectKind {
    type Err = String;

    /// Accepts either the display name or the identifier, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace('-', "_");
        DefectKind::ALL
            .into_iter()
            .find(|k| k.id() == wanted || k.name().to_ascii_lowercase() == wanted)
            .ok_or_else(|| format!("unknown defect kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSite {
    pub function: String,
    pub statement_index: usize,
    pub location: SrcLocation,
    /// Machine label from the detector's closed vocabulary.
    pub tag: String,
    /// Short human-readable explanation.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectEvidence {
    pub kind: DefectKind,
    pub contract: String,
    pub sites: Vec<EvidenceSite>,
    pub gating_facts: BTreeMap<String, String>,
    pub detector_version: String,
}

impl DefectEvidence {
    /// `None` when there are no sites: empty evidence is never emitted.
    pub(crate) fn new(
        kind: DefectKind,
        ir: &ContractIR,
        sites: Vec<EvidenceSite>,
        gating_facts: BTreeMap<String, String>,
    ) -> Option<Self> {
        if sites.is_empty() {
            return None;
        }
        Some(DefectEvidence {
            kind,
            contract: ir.name.clone(),
            sites,
            gating_facts,
            detector_version: format!("{}/{}", kind.id(), env!("CARGO_PKG_VERSION")),
        })
    }

    pub fn fact(&self, key: &str) -> Option<&str> {
        self.gating_facts.get(key).map(String::as_str)
    }

    /// `function: detail` lines, one per site.
    pub fn bullets(&self) -> Vec<String> {
        self.sites.iter().map(|s| format!("{}: {}", s.function, s.detail)).collect()
    }
}

/// Operations the access-control detector treats as critical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalOp {
    Selfdestruct,
    Delegatecall,
    ValueTransfer,
    OwnerWrite,
}

impl CriticalOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticalOp::Selfdestruct => "selfdestruct",
            CriticalOp::Delegatecall => "delegatecall",
            CriticalOp::ValueTransfer => "value_transfer",
            CriticalOp::OwnerWrite => "owner_write",
        }
    }
}

impl FromStr for CriticalOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "selfdestruct" => Ok(CriticalOp::Selfdestruct),
            "delegatecall" => Ok(CriticalOp::Delegatecall),
            "value_transfer" => Ok(CriticalOp::ValueTransfer),
            "owner_write" => Ok(CriticalOp::OwnerWrite),
            other => Err(format!("unknown critical operation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Case-insensitive substrings marking an address state variable as owner-like.
    pub owner_like: Vec<String>,
    pub critical_ops: BTreeSet<CriticalOp>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            owner_like: vec!["owner".into(), "admin".into(), "governor".into()],
            critical_ops: [
                CriticalOp::Selfdestruct,
                CriticalOp::Delegatecall,
                CriticalOp::ValueTransfer,
                CriticalOp::OwnerWrite,
            ]
            .into_iter()
            .collect(),
        }
    }
}

/// Runs the enabled detectors in [`DefectKind`] order.
pub fn run_detectors(ir: &ContractIR, enabled: &BTreeSet<DefectKind>, cfg: &DetectorConfig) -> Vec<DefectEvidence> {
    DefectKind::ALL
        .into_iter()
        .filter(|k| enabled.contains(k))
        .filter_map(|k| match k {
            DefectKind::Reentrancy => detect_reentrancy(ir),
            DefectKind::ComplexFallback => detect_complex_fallback(ir),
            DefectKind::AccessControl => detect_access_control(ir, cfg),
            DefectKind::BlockEnvDependency => detect_block_env(ir),
            DefectKind::InsufficientParamValidation => detect_param_validation(ir),
            DefectKind::FaultyAssertRevert => detect_faulty_assert(ir),
            DefectKind::DivisionByZero => detect_division_by_zero(ir),
        })
        .collect()
}
