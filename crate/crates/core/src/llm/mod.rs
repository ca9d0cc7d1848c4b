//! Chat-completion access for test generation and log normalization.
//!
//! [`Completer`] abstracts over the live client, the offline stub directory
//! and a disabled completer that always refuses. Offline and disabled modes
//! never open a socket.

mod client;
mod normalize;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::detectors::DefectKind;

pub use client::{request_count, LlmClient, ReqwestTransport, Transport, TransportFailure};
pub use normalize::{normalize_runner_output, parse_normalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    Live,
    OfflineStub,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_secs: u64,
    pub mode: LlmMode,
    /// Concurrent requests allowed through one client.
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "https://api.openai.com/v1".into(),
            model_id: "gpt-4o".into(),
            api_key_env: "SCPROOF_LLM_API_KEY".into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            request_timeout_secs: 120,
            mode: LlmMode::Live,
            max_in_flight: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    /// For stub lookup and logging only.
    pub kind: Option<DefectKind>,
    pub contract: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request timed out")]
    Timeout,
    #[error("no stub reply for key `{0}`")]
    NoStubForKey(String),
    #[error("language model access is disabled")]
    Disabled,
    #[error("normalization reply is not in `<method> <status>` form: {0}")]
    UnparseableNormalization(String),
}

/// Anything that turns a prompt into a reply.
pub trait Completer: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError>;

    /// Recorded in fill provenance.
    fn model_id(&self) -> String;
}

impl<F> Completer for F
where
    F: Fn(&PromptBundle) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        self(bundle)
    }

    fn model_id(&self) -> String {
        "closure".into()
    }
}

/// Canned replies from `<dir>/<Kind>__<Contract>.reply.txt`.
#[derive(Debug, Clone)]
pub struct OfflineStub {
    pub dir: PathBuf,
}

impl OfflineStub {
    pub fn key(kind: Option<DefectKind>, contract: &str) -> String {
        let kind = kind.map_or("Normalize", DefectKind::name);
        format!("{kind}__{contract}")
    }

    pub fn complete_offline(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let key = Self::key(bundle.kind, &bundle.contract);
        let path = self.dir.join(format!("{key}.reply.txt"));
        std::fs::read_to_string(&path).map_err(|_| LlmError::NoStubForKey(key))
    }
}

impl Completer for OfflineStub {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        self.complete_offline(bundle)
    }

    fn model_id(&self) -> String {
        "offline-stub".into()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DisabledCompleter;

impl Completer for DisabledCompleter {
    fn complete(&self, _: &PromptBundle) -> Result<String, LlmError> {
        Err(LlmError::Disabled)
    }

    fn model_id(&self) -> String {
        "disabled".into()
    }
}

/// Builds the completer matching `cfg.mode`.
pub fn completer_for(cfg: &LlmConfig, stub_dir: &std::path::Path) -> Box<dyn Completer> {
    match cfg.mode {
        LlmMode::Live => Box::new(LlmClient::new(cfg.clone(), Box::new(ReqwestTransport))),
        LlmMode::OfflineStub => Box::new(OfflineStub { dir: stub_dir.to_path_buf() }),
        LlmMode::Disabled => Box::new(DisabledCompleter),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(kind: Option<DefectKind>, contract: &str) -> PromptBundle {
        PromptBundle { system: "s".into(), user: "u".into(), kind, contract: contract.into() }
    }

    #[test]
    fn stub_lookup_by_kind_and_contract() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("Reentrancy__ReentrancySimple.reply.txt"), "reply text").unwrap();
        let stub = OfflineStub { dir: dir.path().to_path_buf() };
        assert_eq!(stub.complete(&bundle(Some(DefectKind::Reentrancy), "ReentrancySimple")).unwrap(), "reply text");
        assert_eq!(
            stub.complete(&bundle(Some(DefectKind::AccessControl), "ReentrancySimple")),
            Err(LlmError::NoStubForKey("AccessControl__ReentrancySimple".into()))
        );
    }

    #[test]
    fn disabled_refuses() {
        assert_eq!(DisabledCompleter.complete(&bundle(None, "X")), Err(LlmError::Disabled));
    }
}
